#include "derain/optimizer.hpp"

#include <cmath>

#include "derain/errors.hpp"

namespace derain {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& text) {
    if (text == "sgd") return OptimizerKind::sgd;
    if (text == "adam") return OptimizerKind::adam;
    throw ConfigError("unknown optimizer '" + text + "' (sgd, adam)");
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {}

void Optimizer::ensure_state(const ParameterSet& params) {
    if (first_.size() == params.size()) return;
    first_.clear();
    second_.clear();
    for (const auto& e : params.entries()) {
        first_.emplace_back(e.var.shape());
        if (config_.kind == OptimizerKind::adam) second_.emplace_back(e.var.shape());
    }
}

void Optimizer::step(ParameterSet& params) {
    ensure_state(params);
    ++steps_;
    const float lr = static_cast<float>(config_.learning_rate);
    const float wd = static_cast<float>(config_.weight_decay);
    auto& entries = params.entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
        ag::Var& p = entries[k].var;
        auto w = p.mutable_value().values();
        const bool has_grad = p.has_grad();
        auto m = first_[k].values();
        if (config_.kind == OptimizerKind::sgd) {
            const float mu = static_cast<float>(config_.momentum);
            for (std::size_t i = 0; i < w.size(); ++i) {
                const float g = (has_grad ? p.grad()[i] : 0.0f) + wd * w[i];
                m[i] = steps_ == 1 ? g : mu * m[i] + g;
                w[i] -= lr * m[i];
            }
        } else {
            auto v = second_[k].values();
            const float b1 = static_cast<float>(config_.beta1);
            const float b2 = static_cast<float>(config_.beta2);
            const float c1 = static_cast<float>(1.0 - std::pow(config_.beta1, static_cast<double>(steps_)));
            const float c2 = static_cast<float>(1.0 - std::pow(config_.beta2, static_cast<double>(steps_)));
            const float eps = static_cast<float>(config_.epsilon);
            for (std::size_t i = 0; i < w.size(); ++i) {
                const float g = (has_grad ? p.grad()[i] : 0.0f) + wd * w[i];
                m[i] = b1 * m[i] + (1.0f - b1) * g;
                v[i] = b2 * v[i] + (1.0f - b2) * g * g;
                w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
            }
        }
    }
}

std::map<std::string, Tensor> Optimizer::export_state(const ParameterSet& params) const {
    std::map<std::string, Tensor> out;
    for (std::size_t k = 0; k < first_.size() && k < params.size(); ++k) {
        out["m/" + params.entries()[k].name] = first_[k];
        if (!second_.empty()) out["v/" + params.entries()[k].name] = second_[k];
    }
    return out;
}

void Optimizer::import_state(const ParameterSet& params, const std::map<std::string, Tensor>& state,
                             std::int64_t steps) {
    first_.clear();
    second_.clear();
    steps_ = steps;
    if (state.empty()) return;
    for (const auto& e : params.entries()) {
        auto take = [&](const std::string& key) {
            auto it = state.find(key);
            if (it == state.end()) throw StructuralError("optimizer state lacks '" + key + "'");
            if (!(it->second.shape() == e.var.shape())) {
                throw StructuralError("optimizer state '" + key + "' has shape " + it->second.shape().str());
            }
            return it->second;
        };
        first_.push_back(take("m/" + e.name));
        if (config_.kind == OptimizerKind::adam) second_.push_back(take("v/" + e.name));
    }
}

} // namespace derain

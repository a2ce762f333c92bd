#include "derain/parameters.hpp"

#include "derain/errors.hpp"

namespace derain {

ParameterSet::ParameterSet(const ParameterSet& other) {
    entries_.reserve(other.entries_.size());
    for (const auto& e : other.entries_) {
        entries_.push_back({e.name, ag::Var(e.var.value(), e.var.requires_grad())});
    }
}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
    if (this != &other) {
        ParameterSet copy(other);
        *this = std::move(copy);
    }
    return *this;
}

const ag::Var& ParameterSet::add(std::string name, Tensor init) {
    for (const auto& e : entries_) {
        if (e.name == name) throw StructuralError("duplicate parameter '" + name + "'");
    }
    entries_.push_back({std::move(name), ag::Var(std::move(init), true)});
    return entries_.back().var;
}

const ag::Var& ParameterSet::get(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return e.var;
    }
    throw StructuralError("no parameter named '" + name + "'");
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t total = 0;
    for (const auto& e : entries_) total += e.var.value().numel();
    return total;
}

void ParameterSet::zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
}

void ParameterSet::set_requires_grad(bool on) {
    for (auto& e : entries_) e.var.set_requires_grad(on);
}

std::vector<Tensor> ParameterSet::snapshot() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.var.value());
    return out;
}

Tensor normal_tensor(Shape shape, float stddev, std::mt19937_64& rng) {
    std::normal_distribution<float> dist(0.0f, stddev);
    Tensor t(shape);
    for (float& v : t.values()) v = dist(rng);
    return t;
}

} // namespace derain

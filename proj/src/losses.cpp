#include "derain/losses.hpp"

#include <sstream>

namespace derain {

ScoreMap::ScoreMap(Tensor data) : data_(std::move(data)) {
    const Shape& s = data_.shape();
    if (s.c != 1 || s.n < 1 || s.h < 1 || s.w < 1) {
        throw StructuralError("score map must be nx1xhxw, got " + s.str());
    }
}

std::string to_string(AdversarialMode mode) {
    return mode == AdversarialMode::log_form ? "log_form" : "least_squares";
}

std::string to_string(IterationSchedule schedule) {
    switch (schedule) {
    case IterationSchedule::paper_linear: return "paper_linear";
    case IterationSchedule::geometric: return "geometric";
    case IterationSchedule::uniform: return "uniform";
    }
    return "?";
}

AdversarialMode parse_adversarial_mode(const std::string& text) {
    if (text == "log_form") return AdversarialMode::log_form;
    if (text == "least_squares") return AdversarialMode::least_squares;
    throw ConfigError("unknown adversarial mode '" + text + "' (log_form, least_squares)");
}

IterationSchedule parse_schedule(const std::string& text) {
    if (text == "paper_linear") return IterationSchedule::paper_linear;
    if (text == "geometric") return IterationSchedule::geometric;
    if (text == "uniform") return IterationSchedule::uniform;
    throw ConfigError("unknown schedule '" + text + "' (paper_linear, geometric, uniform)");
}

double iteration_weight(int iteration, IterationSchedule schedule) {
    if (iteration < 1) throw StructuralError("iterations are numbered from 1");
    switch (schedule) {
    case IterationSchedule::paper_linear: return static_cast<double>(iteration - 1);
    case IterationSchedule::geometric: return 2.0 * std::pow(1.5, iteration - 1);
    case IterationSchedule::uniform: return 1.0;
    }
    return 0.0;
}

void LossWeights::validate() const {
    const double b[] = {beta1, beta2, beta3, beta4};
    bool any = false;
    for (double v : b) {
        if (!std::isfinite(v) || v < 0.0) throw ConfigError("loss weights must be finite and >= 0");
        any = any || v > 0.0;
    }
    if (!any) throw ConfigError("at least one loss weight must be positive");
}

AdversarialLoss adversarial_loss(const ScoreMap& real, const ScoreMap& fake, AdversarialMode mode) {
    const auto t = kernels::adversarial<float>(real.tensor().values(), fake.tensor().values(), mode);
    return {t.d_loss, t.g_loss};
}

double weighted_gan_loss(std::span<const double> per_iteration, IterationSchedule schedule) {
    if (per_iteration.empty()) throw StructuralError("weighted_gan_loss needs at least one iteration");
    double sum = 0.0;
    for (std::size_t i = 0; i < per_iteration.size(); ++i) {
        sum += iteration_weight(static_cast<int>(i) + 1, schedule) * per_iteration[i];
    }
    return sum;
}

namespace {

double image_l1(const ImageTensor& a, const ImageTensor& b, const char* what) {
    if (!(a.tensor().shape() == b.tensor().shape())) {
        throw StructuralError(std::string(what) + ": shapes " + a.tensor().shape().str() + " and " +
                              b.tensor().shape().str() + " differ");
    }
    return kernels::mean_abs_diff<float>(a.tensor().values(), b.tensor().values());
}

} // namespace

double cycle_loss(const ImageTensor& reconstructed, const ImageTensor& rainy) {
    return image_l1(reconstructed, rainy, "cycle_loss");
}

double identity_loss(const ImageTensor& output_background, const ImageTensor& clean_input) {
    return image_l1(output_background, clean_input, "identity_loss");
}

double sparsity_loss(const TransparencyMask& mask) {
    return kernels::mean_abs<float>(mask.tensor().values());
}

LossReport total_loss(const LossParts& parts, const LossWeights& weights) {
    const std::pair<const char*, double> named[] = {
        {"gan", parts.gan}, {"cyc", parts.cyc}, {"identity", parts.identity}, {"sparsity", parts.sparsity}};
    for (const auto& [name, v] : named) {
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << "loss component '" << name << "' is not finite (" << v << ")";
            throw NumericError(os.str());
        }
    }
    LossReport r;
    r.gan = parts.gan;
    r.cyc = parts.cyc;
    r.identity = parts.identity;
    r.sparsity = parts.sparsity;
    r.per_iteration_gan = parts.per_iteration_gan;
    r.total = weights.beta1 * parts.gan + weights.beta2 * parts.cyc + weights.beta3 * parts.identity +
              weights.beta4 * parts.sparsity;
    return r;
}

} // namespace derain

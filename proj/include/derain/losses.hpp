#pragma once

#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "derain/decomposition.hpp"
#include "derain/errors.hpp"
#include "derain/score_map.hpp"

namespace derain {

enum class AdversarialMode { log_form, least_squares };

/// Per-iteration weighting K_i of the adversarial term.
enum class IterationSchedule {
    paper_linear, // K_i = i - 1
    geometric,    // K_i = 2 * 1.5^(i-1)
    uniform,      // K_i = 1
};

std::string to_string(AdversarialMode mode);
std::string to_string(IterationSchedule schedule);
AdversarialMode parse_adversarial_mode(const std::string& text);
IterationSchedule parse_schedule(const std::string& text);

/// K_i for the 1-based iteration index.
double iteration_weight(int iteration, IterationSchedule schedule);

struct LossWeights {
    double beta1 = 1.0; // adversarial; the per-iteration factor lives in the schedule
    double beta2 = 10.0;
    double beta3 = 5.0;
    double beta4 = 1.0;
    IterationSchedule schedule = IterationSchedule::geometric;

    void validate() const;
};

/// Unweighted components. `gan` is already schedule-weighted.
struct LossParts {
    double gan = 0.0;
    double cyc = 0.0;
    double identity = 0.0;
    double sparsity = 0.0;
    std::vector<double> per_iteration_gan;
};

struct LossReport {
    double gan = 0.0;
    double cyc = 0.0;
    double identity = 0.0;
    double sparsity = 0.0;
    double total = 0.0;
    std::vector<double> per_iteration_gan;
};

struct AdversarialLoss {
    double d_loss = 0.0;
    double g_loss = 0.0;
};

/// d_loss is the negated discriminator objective (a minimisation target);
/// g_loss is the non-saturating generator term.
AdversarialLoss adversarial_loss(const ScoreMap& real, const ScoreMap& fake, AdversarialMode mode);
double weighted_gan_loss(std::span<const double> per_iteration, IterationSchedule schedule);
double cycle_loss(const ImageTensor& reconstructed, const ImageTensor& rainy);
double identity_loss(const ImageTensor& output_background, const ImageTensor& clean_input);
double sparsity_loss(const TransparencyMask& mask);
LossReport total_loss(const LossParts& parts, const LossWeights& weights);

// Value-and-gradient kernels shared by the tensor-level losses above and the
// training graph. Templated so gradient checks can run in double.
namespace kernels {

template <std::floating_point T>
T softplus(T x) {
    return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <std::floating_point T>
T sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

/// mean |a - b|. Gradients are written when the spans are non-empty.
template <std::floating_point T>
T mean_abs_diff(std::span<const T> a, std::span<const T> b, std::span<T> grad_a = {},
                std::span<T> grad_b = {}) {
    if (a.size() != b.size() || a.empty()) {
        throw StructuralError("mean_abs_diff over " + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + " elements");
    }
    const T inv = T(1) / static_cast<T>(a.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const T d = a[i] - b[i];
        sum += std::abs(static_cast<double>(d));
        const T g = d > T(0) ? inv : (d < T(0) ? -inv : T(0));
        if (!grad_a.empty()) grad_a[i] = g;
        if (!grad_b.empty()) grad_b[i] = -g;
    }
    return static_cast<T>(sum / static_cast<double>(a.size()));
}

/// mean |x|, the L1 distance to zero.
template <std::floating_point T>
T mean_abs(std::span<const T> x, std::span<T> grad = {}) {
    if (x.empty()) throw StructuralError("mean_abs over an empty array");
    const T inv = T(1) / static_cast<T>(x.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sum += std::abs(static_cast<double>(x[i]));
        if (!grad.empty()) grad[i] = x[i] > T(0) ? inv : (x[i] < T(0) ? -inv : T(0));
    }
    return static_cast<T>(sum / static_cast<double>(x.size()));
}

template <std::floating_point T>
struct AdversarialTerms {
    T d_loss{};
    T g_loss{};
    std::vector<T> d_grad_real; // d d_loss / d real
    std::vector<T> d_grad_fake; // d d_loss / d fake
    std::vector<T> g_grad_fake; // d g_loss / d fake
};

template <std::floating_point T>
AdversarialTerms<T> adversarial(std::span<const T> real, std::span<const T> fake,
                                AdversarialMode mode) {
    if (real.empty() || fake.empty()) throw StructuralError("empty score map");
    for (T v : real)
        if (!std::isfinite(v)) throw NumericError("non-finite real score");
    for (T v : fake)
        if (!std::isfinite(v)) throw NumericError("non-finite fake score");

    AdversarialTerms<T> out;
    out.d_grad_real.resize(real.size());
    out.d_grad_fake.resize(fake.size());
    out.g_grad_fake.resize(fake.size());
    const T inv_r = T(1) / static_cast<T>(real.size());
    const T inv_f = T(1) / static_cast<T>(fake.size());
    double d_real = 0.0;
    double d_fake = 0.0;
    double g = 0.0;
    if (mode == AdversarialMode::log_form) {
        // -log sigmoid(s) = softplus(-s); -log(1 - sigmoid(s)) = softplus(s)
        for (std::size_t i = 0; i < real.size(); ++i) {
            d_real += softplus(-real[i]);
            out.d_grad_real[i] = (sigmoid(real[i]) - T(1)) * inv_r;
        }
        for (std::size_t i = 0; i < fake.size(); ++i) {
            const T s = sigmoid(fake[i]);
            d_fake += softplus(fake[i]);
            g += softplus(-fake[i]);
            out.d_grad_fake[i] = s * inv_f;
            out.g_grad_fake[i] = (s - T(1)) * inv_f;
        }
    } else {
        for (std::size_t i = 0; i < real.size(); ++i) {
            const T e = real[i] - T(1);
            d_real += static_cast<double>(e) * e;
            out.d_grad_real[i] = T(2) * e * inv_r;
        }
        for (std::size_t i = 0; i < fake.size(); ++i) {
            const T f = fake[i];
            d_fake += static_cast<double>(f) * f;
            g += static_cast<double>(f - T(1)) * (f - T(1));
            out.d_grad_fake[i] = T(2) * f * inv_f;
            out.g_grad_fake[i] = T(2) * (f - T(1)) * inv_f;
        }
    }
    out.d_loss = static_cast<T>(d_real / static_cast<double>(real.size()) +
                                d_fake / static_cast<double>(fake.size()));
    out.g_loss = static_cast<T>(g / static_cast<double>(fake.size()));
    return out;
}

} // namespace kernels

} // namespace derain

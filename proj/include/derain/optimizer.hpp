#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "derain/parameters.hpp"

namespace derain {

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& text);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::sgd;
    double learning_rate = 0.001;
    double momentum = 0.9;      // sgd
    double weight_decay = 1e-5; // both; added to the gradient
    double beta1 = 0.5;         // adam
    double beta2 = 0.999;       // adam
    double epsilon = 1e-8;      // adam
};

/// SGD with heavy-ball momentum, or Adam. State is laid out in the order of
/// the parameter set it is stepped with. Parameters without a gradient are
/// treated as having a zero gradient.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config = {});

    const OptimizerConfig& config() const { return config_; }
    void step(ParameterSet& params);
    std::int64_t steps_taken() const { return steps_; }

    /// Named state tensors for checkpointing ("m/<param>", "v/<param>").
    std::map<std::string, Tensor> export_state(const ParameterSet& params) const;
    void import_state(const ParameterSet& params, const std::map<std::string, Tensor>& state,
                      std::int64_t steps);

private:
    void ensure_state(const ParameterSet& params);

    OptimizerConfig config_;
    std::vector<Tensor> first_;
    std::vector<Tensor> second_;
    std::int64_t steps_ = 0;
};

} // namespace derain

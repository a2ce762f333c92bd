#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "derain/decomposition.hpp"
#include "derain/parameters.hpp"

namespace derain {

enum class HeadActivation { sigmoid, hard_sigmoid };

std::string to_string(HeadActivation act);
HeadActivation parse_head_activation(const std::string& text);

struct GeneratorConfig {
    int channels = 3;
    int base_width = 64;
    int residual_blocks = 9;
    int iterations = 6;
    HeadActivation background_activation = HeadActivation::sigmoid;
    HeadActivation raindrop_activation = HeadActivation::sigmoid;
    HeadActivation mask_activation = HeadActivation::sigmoid;

    /// Two stride-2 stages in the encoder.
    static constexpr int downsampling_factor = 4;

    void validate() const;
};

/// One sub-network pass, batched (n x C x H x W images, n x 1 x H x W mask).
struct StepOutput {
    ag::Var background;
    ag::Var raindrop;
    ag::Var mask;
    ag::Var reconstruction;
};

/// All iterations of one unrolled forward pass, in order.
struct TraceVars {
    std::vector<StepOutput> steps;
};

struct IterationTrace {
    std::vector<DecompositionTriple> triples;
    std::vector<ImageTensor> reconstructions;
};

/// The shared-weight decomposition sub-network and its feedback unrolling.
///
/// Each iteration feeds the rainy image concatenated with the previous mask
/// (zeros before the first iteration) through the same residual
/// encoder/decoder, whose 2C+1 output channels become background, raindrop
/// layer and mask.
class Generator {
public:
    Generator(GeneratorConfig config, std::uint64_t seed);

    const GeneratorConfig& config() const { return config_; }
    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }

    /// Changes N without touching the weights.
    void set_iterations(int n);

    StepOutput step(const ag::Var& rainy, const ag::Var& previous_mask) const;
    TraceVars unroll(const ag::Var& rainy) const;

    /// Throws ConfigError unless h and w are multiples of the downsampling factor.
    void check_input(const Shape& shape) const;

private:
    ag::Var backbone(const ag::Var& input) const;

    GeneratorConfig config_;
    ParameterSet params_;
};

IterationTrace run_generator(const Generator& generator, const ImageTensor& rainy);
std::size_t count_parameters(const Generator& generator);

} // namespace derain

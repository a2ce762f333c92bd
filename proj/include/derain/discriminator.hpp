#pragma once

#include <cstdint>

#include "derain/decomposition.hpp"
#include "derain/parameters.hpp"
#include "derain/score_map.hpp"

namespace derain {

struct DiscriminatorConfig {
    int channels = 3;
    int base_width = 64;
    /// Stride-2 layers; 3 gives the 70x70 receptive field.
    int downsampling_layers = 3;
    float leaky_slope = 0.2f;

    void validate() const;
};

/// Fully convolutional patch critic emitting raw (pre-sigmoid) scores.
class Discriminator {
public:
    Discriminator(DiscriminatorConfig config, std::uint64_t seed);

    const DiscriminatorConfig& config() const { return config_; }
    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }

    /// Batched scores, n x 1 x h x w.
    ag::Var forward(const ag::Var& images) const;

    /// Score-map size for an input of the given spatial size; 0 when too small.
    Shape output_shape(int height, int width) const;
    /// Smallest square input that yields a non-empty score map.
    int min_input_size() const;

private:
    DiscriminatorConfig config_;
    ParameterSet params_;
};

ScoreMap score(const Discriminator& discriminator, const ImageTensor& image);

} // namespace derain

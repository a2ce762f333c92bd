#include "derain/discriminator.hpp"

#include <algorithm>

#include "derain/errors.hpp"

namespace derain {

namespace {

constexpr int kKernel = 4;
constexpr int kPad = 1;

int width_at(const DiscriminatorConfig& c, int layer) {
    return c.base_width * std::min(1 << layer, 8);
}

int conv_out(int size, int stride) { return (size + 2 * kPad - kKernel) / stride + 1; }

} // namespace

void DiscriminatorConfig::validate() const {
    if (channels != 1 && channels != 3) throw ConfigError("discriminator channels must be 1 or 3");
    if (base_width < 1) throw ConfigError("discriminator base width must be >= 1");
    if (downsampling_layers < 1) throw ConfigError("discriminator needs at least one stride-2 layer");
}

Discriminator::Discriminator(DiscriminatorConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    int in = config_.channels;
    const int layers = config_.downsampling_layers + 1;
    for (int l = 0; l < layers; ++l) {
        const int out = width_at(config_, l);
        const std::string name = "c" + std::to_string(l);
        params_.add(name + ".weight", normal_tensor(Shape{out, in, kKernel, kKernel}, 0.02f, rng));
        params_.add(name + ".bias", Tensor(Shape{1, 1, 1, out}));
        in = out;
    }
    params_.add("out.weight", normal_tensor(Shape{1, in, kKernel, kKernel}, 0.02f, rng));
    params_.add("out.bias", Tensor(Shape{1, 1, 1, 1}));
}

Shape Discriminator::output_shape(int height, int width) const {
    int h = height;
    int w = width;
    for (int l = 0; l < config_.downsampling_layers; ++l) {
        h = h + 2 * kPad < kKernel ? 0 : conv_out(h, 2);
        w = w + 2 * kPad < kKernel ? 0 : conv_out(w, 2);
    }
    for (int l = 0; l < 2; ++l) { // stride-1 layer, then the projection
        h = h + 2 * kPad < kKernel ? 0 : conv_out(h, 1);
        w = w + 2 * kPad < kKernel ? 0 : conv_out(w, 1);
    }
    return Shape{1, 1, std::max(h, 0), std::max(w, 0)};
}

int Discriminator::min_input_size() const {
    int size = 1;
    while (output_shape(size, size).h < 1) ++size;
    return size;
}

ag::Var Discriminator::forward(const ag::Var& images) const {
    const Shape s = images.shape();
    if (s.c != config_.channels) {
        throw StructuralError("discriminator expects " + std::to_string(config_.channels) +
                              " channels, got " + s.str());
    }
    const Shape o = output_shape(s.h, s.w);
    if (o.h < 1 || o.w < 1) {
        const int m = min_input_size();
        throw StructuralError("discriminator input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                              " is below the minimum " + std::to_string(m) + "x" + std::to_string(m));
    }
    ag::Var x = images;
    const int layers = config_.downsampling_layers + 1;
    for (int l = 0; l < layers; ++l) {
        const std::string name = "c" + std::to_string(l);
        const int stride = l < config_.downsampling_layers ? 2 : 1;
        x = ag::conv2d(x, params_.get(name + ".weight"), params_.get(name + ".bias"), stride, kPad);
        if (l > 0) x = ag::instance_norm(x);
        x = ag::leaky_relu(x, config_.leaky_slope);
    }
    return ag::conv2d(x, params_.get("out.weight"), params_.get("out.bias"), 1, kPad);
}

ScoreMap score(const Discriminator& discriminator, const ImageTensor& image) {
    ag::NoGradGuard no_grad;
    return ScoreMap(discriminator.forward(ag::Var(image.tensor())).value());
}

} // namespace derain

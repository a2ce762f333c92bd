#include "derain/generator.hpp"

#include "derain/errors.hpp"

namespace derain {

namespace {

constexpr float kInitStd = 0.02f;

ag::Var activate(const ag::Var& x, HeadActivation act) {
    return act == HeadActivation::sigmoid ? ag::sigmoid(x) : ag::hard_sigmoid(x);
}

} // namespace

std::string to_string(HeadActivation act) {
    return act == HeadActivation::sigmoid ? "sigmoid" : "hard_sigmoid";
}

HeadActivation parse_head_activation(const std::string& text) {
    if (text == "sigmoid") return HeadActivation::sigmoid;
    if (text == "hard_sigmoid") return HeadActivation::hard_sigmoid;
    throw ConfigError("unknown head activation '" + text + "' (sigmoid, hard_sigmoid)");
}

void GeneratorConfig::validate() const {
    if (channels != 1 && channels != 3) throw ConfigError("generator channels must be 1 or 3");
    if (base_width < 1) throw ConfigError("generator base width must be >= 1");
    if (residual_blocks < 0) throw ConfigError("residual block count must be >= 0");
    if (iterations < 1) throw ConfigError("iteration count N must be >= 1");
}

Generator::Generator(GeneratorConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const int c = config_.channels;
    const int w = config_.base_width;
    auto conv = [&](const std::string& name, int out, int in, int k) {
        params_.add(name + ".weight", normal_tensor(Shape{out, in, k, k}, kInitStd, rng));
        params_.add(name + ".bias", Tensor(Shape{1, 1, 1, out}));
    };
    conv("in", w, c + 1, 7);
    conv("down0", 2 * w, w, 3);
    conv("down1", 4 * w, 2 * w, 3);
    for (int b = 0; b < config_.residual_blocks; ++b) {
        conv("res" + std::to_string(b) + ".conv0", 4 * w, 4 * w, 3);
        conv("res" + std::to_string(b) + ".conv1", 4 * w, 4 * w, 3);
    }
    // transposed weights are [in, out, k, k]
    params_.add("up0.weight", normal_tensor(Shape{4 * w, 2 * w, 3, 3}, kInitStd, rng));
    params_.add("up0.bias", Tensor(Shape{1, 1, 1, 2 * w}));
    params_.add("up1.weight", normal_tensor(Shape{2 * w, w, 3, 3}, kInitStd, rng));
    params_.add("up1.bias", Tensor(Shape{1, 1, 1, w}));
    conv("out", 2 * c + 1, w, 7);
}

void Generator::set_iterations(int n) {
    if (n < 1) throw ConfigError("iteration count N must be >= 1");
    config_.iterations = n;
}

void Generator::check_input(const Shape& shape) const {
    const int f = GeneratorConfig::downsampling_factor;
    if (shape.c != config_.channels) {
        throw StructuralError("generator expects " + std::to_string(config_.channels) +
                              " channels, got " + shape.str());
    }
    if (shape.h % f != 0 || shape.w % f != 0) {
        throw ConfigError("input " + std::to_string(shape.h) + "x" + std::to_string(shape.w) +
                          " is not a multiple of " + std::to_string(f) +
                          " in both dimensions (pad the input, e.g. with --pad)");
    }
}

ag::Var Generator::backbone(const ag::Var& input) const {
    const auto& p = params_;
    auto w = [&](const std::string& n) -> const ag::Var& { return p.get(n + ".weight"); };
    auto b = [&](const std::string& n) -> const ag::Var& { return p.get(n + ".bias"); };

    ag::Var x = ag::reflect_pad(input, 3);
    x = ag::relu(ag::instance_norm(ag::conv2d(x, w("in"), b("in"), 1, 0)));
    x = ag::relu(ag::instance_norm(ag::conv2d(x, w("down0"), b("down0"), 2, 1)));
    x = ag::relu(ag::instance_norm(ag::conv2d(x, w("down1"), b("down1"), 2, 1)));
    for (int blk = 0; blk < config_.residual_blocks; ++blk) {
        const std::string name = "res" + std::to_string(blk);
        ag::Var y = ag::reflect_pad(x, 1);
        y = ag::relu(ag::instance_norm(ag::conv2d(y, w(name + ".conv0"), b(name + ".conv0"), 1, 0)));
        y = ag::reflect_pad(y, 1);
        y = ag::instance_norm(ag::conv2d(y, w(name + ".conv1"), b(name + ".conv1"), 1, 0));
        x = ag::add(x, y);
    }
    x = ag::relu(ag::instance_norm(ag::conv_transpose2d(x, w("up0"), b("up0"), 2, 1, 1)));
    x = ag::relu(ag::instance_norm(ag::conv_transpose2d(x, w("up1"), b("up1"), 2, 1, 1)));
    x = ag::reflect_pad(x, 3);
    return ag::conv2d(x, w("out"), b("out"), 1, 0);
}

StepOutput Generator::step(const ag::Var& rainy, const ag::Var& previous_mask) const {
    check_input(rainy.shape());
    const int c = config_.channels;
    const ag::Var raw = backbone(ag::concat_channels(rainy, previous_mask));
    StepOutput out;
    out.background = activate(ag::slice_channels(raw, 0, c), config_.background_activation);
    out.raindrop = activate(ag::slice_channels(raw, c, c), config_.raindrop_activation);
    out.mask = activate(ag::slice_channels(raw, 2 * c, 1), config_.mask_activation);
    out.reconstruction = ag::compose(out.background, out.raindrop, out.mask);
    return out;
}

TraceVars Generator::unroll(const ag::Var& rainy) const {
    check_input(rainy.shape());
    const Shape s = rainy.shape();
    ag::Var mask(Tensor(Shape{s.n, 1, s.h, s.w}, 0.0f));
    TraceVars trace;
    trace.steps.reserve(static_cast<std::size_t>(config_.iterations));
    for (int i = 0; i < config_.iterations; ++i) {
        trace.steps.push_back(step(rainy, mask));
        mask = trace.steps.back().mask;
    }
    return trace;
}

IterationTrace run_generator(const Generator& generator, const ImageTensor& rainy) {
    ag::NoGradGuard no_grad;
    const TraceVars vars = generator.unroll(ag::Var(rainy.tensor()));
    IterationTrace trace;
    for (const StepOutput& s : vars.steps) {
        DecompositionTriple t{ImageTensor(s.background.value()), ImageTensor(s.raindrop.value()),
                              TransparencyMask(s.mask.value())};
        trace.reconstructions.push_back(compose(t));
        trace.triples.push_back(std::move(t));
    }
    return trace;
}

std::size_t count_parameters(const Generator& generator) {
    return generator.parameters().scalar_count();
}

} // namespace derain

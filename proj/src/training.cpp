#include "derain/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "derain/bounded_queue.hpp"
#include "derain/checkpoint.hpp"
#include "derain/data.hpp"
#include "derain/errors.hpp"
#include "derain/image_io.hpp"

namespace derain {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// enums

std::string to_string(Ablation a) {
    switch (a) {
    case Ablation::no_cyc: return "no_cyc";
    case Ablation::no_identity: return "no_identity";
    case Ablation::no_sparsity: return "no_sparsity";
    case Ablation::no_iternn: return "no_iternn";
    }
    return "?";
}

Ablation parse_ablation(const std::string& text) {
    for (Ablation a : {Ablation::no_cyc, Ablation::no_identity, Ablation::no_sparsity, Ablation::no_iternn}) {
        if (text == to_string(a)) return a;
    }
    throw ConfigError("unknown ablation '" + text + "' (no_cyc, no_identity, no_sparsity, no_iternn)");
}

std::string to_string(LossScope s) {
    return s == LossScope::all_iterations ? "all_iterations" : "final_iteration";
}

LossScope parse_loss_scope(const std::string& text) {
    if (text == "all_iterations") return LossScope::all_iterations;
    if (text == "final_iteration") return LossScope::final_iteration;
    throw ConfigError("unknown loss scope '" + text + "' (all_iterations, final_iteration)");
}

// ---------------------------------------------------------------------------
// config

LossWeights TrainConfig::effective_weights() const {
    LossWeights w = weights;
    if (has(Ablation::no_cyc)) w.beta2 = 0.0;
    if (has(Ablation::no_identity)) w.beta3 = 0.0;
    if (has(Ablation::no_sparsity)) w.beta4 = 0.0;
    return w;
}

GeneratorConfig TrainConfig::generator_config() const {
    GeneratorConfig g;
    g.channels = channels;
    g.base_width = gen_width;
    g.residual_blocks = gen_blocks;
    g.iterations = effective_iterations();
    return g;
}

DiscriminatorConfig TrainConfig::discriminator_config() const {
    DiscriminatorConfig d;
    d.channels = channels;
    d.base_width = disc_width;
    d.downsampling_layers = disc_layers;
    return d;
}

OptimizerConfig TrainConfig::optimizer_config() const {
    OptimizerConfig o;
    o.kind = optimizer;
    o.learning_rate = learning_rate;
    o.momentum = momentum;
    o.weight_decay = weight_decay;
    o.beta1 = adam_beta1;
    o.beta2 = adam_beta2;
    return o;
}

void TrainConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(epochs >= 1, "epochs must be >= 1");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(std::isfinite(learning_rate) && learning_rate > 0.0, "learning_rate must be > 0");
    require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
    require(std::isfinite(weight_decay) && weight_decay >= 0.0, "weight_decay must be >= 0");
    require(iterations >= 1, "iterations must be >= 1");
    require(checkpoint_every >= 0, "checkpoint_every must be >= 0");
    require(replay_buffer >= 0, "replay_buffer must be >= 0");
    require(max_steps >= 0, "max_steps must be >= 0");
    require(prefetch >= 0, "prefetch must be >= 0");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
            "adam betas must lie in [0, 1)");
    weights.validate();
    generator_config().validate();
    discriminator_config().validate();
    require(crop >= 1 && crop % GeneratorConfig::downsampling_factor == 0,
            "crop must be a positive multiple of " + std::to_string(GeneratorConfig::downsampling_factor));
    const Discriminator probe(discriminator_config(), 0);
    require(crop >= probe.min_input_size(),
            "crop must be at least " + std::to_string(probe.min_input_size()) + " for the discriminator");
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const char* end = text.data() + text.size();
    auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) {
        throw ConfigError("value '" + text + "' for key '" + key + "' is not a valid number");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError("value '" + text + "' for key '" + key + "' is not a boolean");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

struct KeySpec {
    const char* name;
    const char* help;
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

#define DERAIN_INT_KEY(key, field, help)                                                                  \
    KeySpec {                                                                                             \
        key, help, [](TrainConfig& c, const std::string& v) { c.field = parse_number<decltype(c.field)>(key, v); }, \
            [](const TrainConfig& c) { return std::to_string(c.field); }                                 \
    }
#define DERAIN_REAL_KEY(key, field, help)                                                                 \
    KeySpec {                                                                                             \
        key, help, [](TrainConfig& c, const std::string& v) { c.field = parse_number<double>(key, v); }, \
            [](const TrainConfig& c) { return fmt_double(c.field); }                                      \
    }
#define DERAIN_BOOL_KEY(key, field, help)                                                                 \
    KeySpec {                                                                                             \
        key, help, [](TrainConfig& c, const std::string& v) { c.field = parse_bool(key, v); },           \
            [](const TrainConfig& c) { return std::string(c.field ? "true" : "false"); }                 \
    }

const std::vector<KeySpec>& key_table() {
    static const std::vector<KeySpec> table = {
        DERAIN_INT_KEY("epochs", epochs, "passes over the longer of the two image streams"),
        DERAIN_INT_KEY("batch_size", batch_size, "images per stream per step"),
        DERAIN_REAL_KEY("learning_rate", learning_rate, "constant step size"),
        DERAIN_REAL_KEY("momentum", momentum, "SGD momentum"),
        DERAIN_REAL_KEY("weight_decay", weight_decay, "L2 penalty added to every gradient"),
        DERAIN_INT_KEY("crop", crop, "square training patch size (multiple of 4)"),
        DERAIN_INT_KEY("iterations", iterations, "feedback iterations N"),
        DERAIN_REAL_KEY("beta1", weights.beta1, "adversarial loss weight"),
        DERAIN_REAL_KEY("beta2", weights.beta2, "cycle loss weight"),
        DERAIN_REAL_KEY("beta3", weights.beta3, "identity loss weight"),
        DERAIN_REAL_KEY("beta4", weights.beta4, "sparsity loss weight"),
        KeySpec{"schedule", "per-iteration adversarial weights: geometric, paper_linear, uniform",
                [](TrainConfig& c, const std::string& v) { c.weights.schedule = parse_schedule(v); },
                [](const TrainConfig& c) { return to_string(c.weights.schedule); }},
        KeySpec{"ablation", "comma list of no_cyc, no_identity, no_sparsity, no_iternn (or none)",
                [](TrainConfig& c, const std::string& v) {
                    c.ablation.clear();
                    std::stringstream ss(v);
                    std::string item;
                    while (std::getline(ss, item, ',')) {
                        item = trim(item);
                        if (item.empty() || item == "none") continue;
                        c.ablation.insert(parse_ablation(item));
                    }
                },
                [](const TrainConfig& c) {
                    std::string out;
                    for (Ablation a : c.ablation) out += (out.empty() ? "" : ",") + to_string(a);
                    return out.empty() ? std::string("none") : out;
                }},
        DERAIN_INT_KEY("seed", seed, "seed of every random stream"),
        DERAIN_INT_KEY("checkpoint_every", checkpoint_every, "steps between checkpoints (0 = only at the end)"),
        DERAIN_INT_KEY("channels", channels, "image channels (1 or 3)"),
        DERAIN_INT_KEY("gen_width", gen_width, "generator base width"),
        DERAIN_INT_KEY("gen_blocks", gen_blocks, "generator residual blocks"),
        DERAIN_INT_KEY("disc_width", disc_width, "discriminator base width"),
        DERAIN_INT_KEY("disc_layers", disc_layers, "discriminator stride-2 layers"),
        KeySpec{"optimizer", "sgd or adam",
                [](TrainConfig& c, const std::string& v) { c.optimizer = parse_optimizer(v); },
                [](const TrainConfig& c) { return to_string(c.optimizer); }},
        DERAIN_REAL_KEY("adam_beta1", adam_beta1, "Adam first-moment decay"),
        DERAIN_REAL_KEY("adam_beta2", adam_beta2, "Adam second-moment decay"),
        KeySpec{"adversarial", "least_squares or log_form",
                [](TrainConfig& c, const std::string& v) { c.adversarial = parse_adversarial_mode(v); },
                [](const TrainConfig& c) { return to_string(c.adversarial); }},
        KeySpec{"cyc_scope", "iterations averaged by the cycle loss: all_iterations, final_iteration",
                [](TrainConfig& c, const std::string& v) { c.cyc_scope = parse_loss_scope(v); },
                [](const TrainConfig& c) { return to_string(c.cyc_scope); }},
        KeySpec{"sparsity_scope", "iterations averaged by the sparsity loss: all_iterations, final_iteration",
                [](TrainConfig& c, const std::string& v) { c.sparsity_scope = parse_loss_scope(v); },
                [](const TrainConfig& c) { return to_string(c.sparsity_scope); }},
        DERAIN_INT_KEY("replay_buffer", replay_buffer, "generated-image pool size (0 = off)"),
        DERAIN_BOOL_KEY("flip", flip, "random horizontal flips"),
        DERAIN_INT_KEY("max_steps", max_steps, "stop after this many steps (0 = run all epochs)"),
        DERAIN_INT_KEY("prefetch", prefetch, "batches prepared ahead by the loader thread"),
        DERAIN_BOOL_KEY("deterministic", deterministic, "derive all randomness from seed"),
    };
    return table;
}

#undef DERAIN_INT_KEY
#undef DERAIN_REAL_KEY
#undef DERAIN_BOOL_KEY

const KeySpec& find_key(const std::string& key) {
    for (const auto& k : key_table()) {
        if (key == k.name) return k;
    }
    std::string valid;
    for (const auto& k : key_table()) valid += (valid.empty() ? "" : ", ") + std::string(k.name);
    throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid);
}

} // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& k : key_table()) out.emplace_back(k.name);
    return out;
}

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
    find_key(key).set(config, trim(value));
}

std::string get_config_value(const TrainConfig& config, const std::string& key) {
    return find_key(key).get(config);
}

std::string config_help(const std::string& key) { return find_key(key).help; }

TrainConfig load_config_file(const fs::path& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

std::string format_config(const TrainConfig& config) {
    std::string out;
    for (const auto& k : key_table()) out += std::string(k.name) + " = " + k.get(config) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// state

Tensor ReplayBuffer::query(const Tensor& batch, std::mt19937_64& rng) {
    if (capacity_ <= 0) return batch;
    std::vector<Tensor> out;
    for (int n = 0; n < batch.shape().n; ++n) {
        Tensor item = batch.item(n);
        if (static_cast<int>(images_.size()) < capacity_) {
            images_.push_back(item);
            out.push_back(std::move(item));
        } else if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.5) {
            const auto k = std::uniform_int_distribution<std::size_t>(0, images_.size() - 1)(rng);
            out.push_back(images_[k]);
            images_[k] = std::move(item);
        } else {
            out.push_back(std::move(item));
        }
    }
    return stack(out);
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
    std::mt19937_64 rng(seq);
    return rng();
}

} // namespace

TrainState TrainState::create(const TrainConfig& config) {
    const OptimizerConfig opt = config.optimizer_config();
    return TrainState{
        Generator(config.generator_config(), derive_seed(config.seed, 1)),
        Discriminator(config.discriminator_config(), derive_seed(config.seed, 2)),
        Discriminator(config.discriminator_config(), derive_seed(config.seed, 3)),
        Optimizer(opt),
        Optimizer(opt),
        Optimizer(opt),
        0,
        0,
        std::mt19937_64(derive_seed(config.seed, 4)),
        ReplayBuffer(config.replay_buffer),
        ReplayBuffer(config.replay_buffer),
    };
}

// ---------------------------------------------------------------------------
// step

namespace {

std::vector<std::size_t> scoped_iterations(std::size_t n, LossScope scope) {
    if (scope == LossScope::final_iteration) return {n - 1};
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
}

std::string describe(const LossParts& p) {
    std::ostringstream os;
    os << "gan=" << p.gan << " cyc=" << p.cyc << " identity=" << p.identity << " sparsity=" << p.sparsity;
    return os.str();
}

} // namespace

GeneratorForward forward_generator(TrainState& state, const Tensor& rainy_batch, const TrainConfig& config) {
    if (state.generator.config().iterations != config.effective_iterations()) {
        state.generator.set_iterations(config.effective_iterations());
    }
    GeneratorForward f;
    f.rainy = ag::Var(rainy_batch);
    f.trace = state.generator.unroll(f.rainy);
    return f;
}

double update_discriminators(TrainState& state, const GeneratorForward& forward, const Tensor& clean_batch,
                             const TrainConfig& config) {
    const LossWeights w = config.effective_weights();
    auto& pa = state.d_a.parameters();
    auto& pb = state.d_b.parameters();
    pa.set_requires_grad(true);
    pb.set_requires_grad(true);
    pa.zero_grad();
    pb.zero_grad();

    double value = 0.0;
    if (w.beta1 > 0.0) {
        const ag::Var real_a = state.d_a.forward(ag::Var(clean_batch));
        const ag::Var real_b = state.d_b.forward(forward.rainy);
        std::vector<ag::Var> terms;
        std::vector<double> weights;
        for (std::size_t i = 0; i < forward.trace.steps.size(); ++i) {
            const double k = iteration_weight(static_cast<int>(i) + 1, w.schedule);
            if (k == 0.0) continue;
            const auto& s = forward.trace.steps[i];
            const ag::Var fake_a(state.pool_a.query(s.background.value(), state.rng));
            const ag::Var fake_b(state.pool_b.query(s.reconstruction.value(), state.rng));
            terms.push_back(ag::adversarial_d_loss(real_a, state.d_a.forward(fake_a), config.adversarial));
            terms.push_back(ag::adversarial_d_loss(real_b, state.d_b.forward(fake_b), config.adversarial));
            weights.insert(weights.end(), 2, w.beta1 * k / 2.0);
        }
        if (!terms.empty()) {
            const ag::Var loss = ag::weighted_sum(terms, weights);
            value = loss.item();
            if (!std::isfinite(value)) throw NumericError("discriminator loss is not finite");
            ag::backward(loss);
        }
    }
    state.opt_da.step(pa);
    state.opt_db.step(pb);
    return value;
}

LossReport update_generator(TrainState& state, const GeneratorForward& forward, const Tensor& clean_batch,
                            const TrainConfig& config) {
    const LossWeights w = config.effective_weights();
    auto& pg = state.generator.parameters();
    pg.zero_grad();
    state.d_a.parameters().set_requires_grad(false);
    state.d_b.parameters().set_requires_grad(false);
    struct Unfreeze {
        TrainState& s;
        ~Unfreeze() {
            s.d_a.parameters().set_requires_grad(true);
            s.d_b.parameters().set_requires_grad(true);
        }
    } unfreeze{state};

    const auto& steps = forward.trace.steps;
    const std::size_t n = steps.size();
    std::vector<ag::Var> terms;
    std::vector<double> weights;
    LossParts parts;
    parts.per_iteration_gan.assign(n, 0.0);

    if (w.beta1 > 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            const double k = iteration_weight(static_cast<int>(i) + 1, w.schedule);
            const ag::Var ga = ag::adversarial_g_loss(state.d_a.forward(steps[i].background), config.adversarial);
            const ag::Var gb = ag::adversarial_g_loss(state.d_b.forward(steps[i].reconstruction), config.adversarial);
            parts.per_iteration_gan[i] = (static_cast<double>(ga.item()) + gb.item()) / 2.0;
            terms.push_back(ga);
            terms.push_back(gb);
            weights.insert(weights.end(), 2, w.beta1 * k / 2.0);
        }
        parts.gan = weighted_gan_loss(parts.per_iteration_gan, w.schedule);
    }
    if (!config.has(Ablation::no_cyc)) {
        const auto idx = scoped_iterations(n, config.cyc_scope);
        for (std::size_t i : idx) {
            const ag::Var c = ag::mean_abs_diff(steps[i].reconstruction, forward.rainy);
            parts.cyc += c.item() / static_cast<double>(idx.size());
            terms.push_back(c);
            weights.push_back(w.beta2 / static_cast<double>(idx.size()));
        }
    }
    if (!config.has(Ablation::no_sparsity)) {
        const auto idx = scoped_iterations(n, config.sparsity_scope);
        for (std::size_t i : idx) {
            const ag::Var s = ag::mean_abs(steps[i].mask);
            parts.sparsity += s.item() / static_cast<double>(idx.size());
            terms.push_back(s);
            weights.push_back(w.beta4 / static_cast<double>(idx.size()));
        }
    }
    if (w.beta3 > 0.0) {
        const ag::Var clean(clean_batch);
        const TraceVars clean_trace = state.generator.unroll(clean);
        const ag::Var id = ag::mean_abs_diff(clean_trace.steps.back().background, clean);
        parts.identity = id.item();
        terms.push_back(id);
        weights.push_back(w.beta3);
    }

    LossReport report;
    try {
        report = total_loss(parts, w);
    } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " [" + describe(parts) + "]");
    }
    ag::backward(ag::weighted_sum(terms, weights));
    state.opt_g.step(pg);
    return report;
}

LossReport train_step(TrainState& state, const Tensor& rainy_batch, const Tensor& clean_batch,
                      const TrainConfig& config) {
    if (rainy_batch.shape().n < 1 || clean_batch.shape().n < 1) throw StructuralError("empty training batch");
    try {
        const GeneratorForward f = forward_generator(state, rainy_batch, config);
        update_discriminators(state, f, clean_batch, config);
        LossReport r = update_generator(state, f, clean_batch, config);
        ++state.step;
        return r;
    } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(state.step + 1) + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// data

MemorySource::MemorySource(std::vector<ImageTensor> images) : images_(std::move(images)) {
    if (images_.empty()) throw StructuralError("no images found in the in-memory source");
}

DirectorySource::DirectorySource(const fs::path& dir, int channels) : channels_(channels) {
    if (!fs::is_directory(dir)) throw StructuralError("image directory " + dir.string() + " does not exist");
    paths_ = list_images(dir);
    if (paths_.empty()) throw StructuralError("no images found in " + dir.string());
}

ImageTensor DirectorySource::load(std::size_t index) const { return load_image(paths_.at(index), channels_); }

BatchSampler::BatchSampler(const ImageSource& rainy, const ImageSource& clean, const TrainConfig& config)
    : rainy_(rainy), clean_(clean), batch_size_(config.batch_size), crop_(config.crop), flip_(config.flip),
      seed_(config.seed) {
    if (rainy.size() == 0 || clean.size() == 0) throw StructuralError("no images found for training");
    const auto longest = static_cast<std::int64_t>(std::max(rainy.size(), clean.size()));
    steps_per_epoch_ = (longest + batch_size_ - 1) / batch_size_;
}

Tensor BatchSampler::assemble(const ImageSource& source, std::int64_t step, int stream) const {
    const auto u = static_cast<std::uint64_t>(step);
    const std::int64_t epoch = step / steps_per_epoch_;
    const std::int64_t pos = step % steps_per_epoch_;
    std::vector<std::size_t> order(source.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    {
        const auto e = static_cast<std::uint64_t>(epoch);
        std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                          static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(e >> 32),
                          static_cast<std::uint32_t>(stream), 0x5u};
        std::mt19937_64 rng(seq);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<Tensor> items;
    for (int k = 0; k < batch_size_; ++k) {
        const auto j = static_cast<std::size_t>(pos * batch_size_ + k) % source.size();
        ImageTensor img = source.load(order[j]);
        std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                          static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(u >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(k), 0xcu};
        std::mt19937_64 rng(seq);
        img = random_crop(img, crop_, rng);
        if (flip_ && std::uniform_int_distribution<int>(0, 1)(rng) == 1) img = flip_horizontal(img);
        items.push_back(img.tensor());
    }
    return stack(items);
}

std::pair<Tensor, Tensor> BatchSampler::batch(std::int64_t step) const {
    return {assemble(rainy_, step, 0), assemble(clean_, step, 1)};
}

// ---------------------------------------------------------------------------
// checkpoints

void save_checkpoint(const fs::path& path, const TrainState& state, const TrainConfig& config) {
    Archive a;
    store_generator(a, state.generator);
    a.meta["discriminator"] = to_json(state.d_a.config());
    a.meta["step"] = state.step;
    a.meta["epoch"] = state.epoch;
    std::ostringstream rng;
    rng << state.rng;
    a.meta["rng"] = rng.str();
    a.meta["optimizer"] = to_string(state.opt_g.config().kind);
    a.meta["optimizer_steps"] = {state.opt_g.steps_taken(), state.opt_da.steps_taken(), state.opt_db.steps_taken()};
    a.meta["config"] = format_config(config);
    store_parameters(a, "d_a", state.d_a.parameters());
    store_parameters(a, "d_b", state.d_b.parameters());
    const std::pair<const char*, std::pair<const Optimizer*, const ParameterSet*>> opts[] = {
        {"opt_g", {&state.opt_g, &state.generator.parameters()}},
        {"opt_da", {&state.opt_da, &state.d_a.parameters()}},
        {"opt_db", {&state.opt_db, &state.d_b.parameters()}},
    };
    for (const auto& [prefix, op] : opts) {
        for (auto& [k, t] : op.first->export_state(*op.second)) a.tensors[std::string(prefix) + "/" + k] = t;
    }
    const std::pair<const char*, const ReplayBuffer*> pools[] = {{"pool_a", &state.pool_a}, {"pool_b", &state.pool_b}};
    for (const auto& [prefix, pool] : pools) {
        a.meta[std::string(prefix) + "_size"] = pool->images().size();
        for (std::size_t i = 0; i < pool->images().size(); ++i) {
            a.tensors[std::string(prefix) + "/" + std::to_string(i)] = pool->images()[i];
        }
    }
    write_archive(path, a);
}

TrainState resume(const fs::path& checkpoint, const TrainConfig& config) {
    const Archive a = read_archive(checkpoint);
    TrainState state = TrainState::create(config);
    const GeneratorConfig saved = generator_config_from_json(a.meta.at("generator"));
    const GeneratorConfig wanted = config.generator_config();
    if (saved.channels != wanted.channels) {
        throw StructuralError("checkpoint has " + std::to_string(saved.channels) + " channels, config asks for " +
                              std::to_string(wanted.channels));
    }
    if (saved.base_width != wanted.base_width || saved.residual_blocks != wanted.residual_blocks) {
        throw StructuralError("checkpoint generator architecture differs from the config");
    }
    restore_parameters(a, "generator", state.generator.parameters());
    restore_parameters(a, "d_a", state.d_a.parameters());
    restore_parameters(a, "d_b", state.d_b.parameters());

    try {
        if (a.meta.at("optimizer").get<std::string>() != to_string(config.optimizer)) {
            throw StructuralError("checkpoint was trained with optimizer " + a.meta.at("optimizer").get<std::string>());
        }
        const auto steps = a.meta.at("optimizer_steps");
        const std::pair<const char*, std::pair<Optimizer*, const ParameterSet*>> opts[] = {
            {"opt_g", {&state.opt_g, &state.generator.parameters()}},
            {"opt_da", {&state.opt_da, &state.d_a.parameters()}},
            {"opt_db", {&state.opt_db, &state.d_b.parameters()}},
        };
        for (std::size_t k = 0; k < 3; ++k) {
            const std::string prefix = std::string(opts[k].first) + "/";
            std::map<std::string, Tensor> sub;
            for (const auto& [name, t] : a.tensors) {
                if (name.rfind(prefix, 0) == 0) sub.emplace(name.substr(prefix.size()), t);
            }
            opts[k].second.first->import_state(*opts[k].second.second, sub, steps.at(k).get<std::int64_t>());
        }
        state.step = a.meta.at("step").get<std::int64_t>();
        state.epoch = a.meta.at("epoch").get<std::int64_t>();
        std::istringstream rng(a.meta.at("rng").get<std::string>());
        rng >> state.rng;
        if (!rng) throw StructuralError("checkpoint random-stream state is corrupt");
        for (auto [prefix, pool] : {std::pair{"pool_a", &state.pool_a}, std::pair{"pool_b", &state.pool_b}}) {
            const auto size = a.meta.at(std::string(prefix) + "_size").get<std::size_t>();
            std::vector<Tensor> images;
            for (std::size_t i = 0; i < size; ++i) {
                images.push_back(a.tensors.at(std::string(prefix) + "/" + std::to_string(i)));
            }
            pool->restore(std::move(images));
        }
    } catch (const nlohmann::json::exception& e) {
        throw StructuralError("checkpoint metadata is incomplete: " + std::string(e.what()));
    } catch (const std::out_of_range& e) {
        throw StructuralError("checkpoint entry missing: " + std::string(e.what()));
    }
    return state;
}

// ---------------------------------------------------------------------------
// fit

namespace {

void write_metrics_line(std::ostream& os, std::int64_t step, const LossReport& r) {
    os << step << '\t' << std::setprecision(9) << r.gan << '\t' << r.cyc << '\t' << r.identity << '\t'
       << r.sparsity << '\t' << r.total << '\n';
}

struct Batch {
    std::int64_t step;
    std::pair<Tensor, Tensor> images;
};

} // namespace

fs::path fit(const TrainConfig& config, const fs::path& rainy_dir, const fs::path& clean_dir, const fs::path& out_dir,
             const std::optional<fs::path>& resume_from) {
    const DirectorySource rainy(rainy_dir, config.channels);
    const DirectorySource clean(clean_dir, config.channels);
    return fit(config, rainy, clean, out_dir, resume_from);
}

fs::path fit(const TrainConfig& config_in, const ImageSource& rainy, const ImageSource& clean, const fs::path& out_dir,
             const std::optional<fs::path>& resume_from) {
    TrainConfig config = config_in;
    if (!config.deterministic) config.seed = (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();
    config.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    TrainState state = resume_from ? resume(*resume_from, config) : TrainState::create(config);
    const BatchSampler sampler(rainy, clean, config);
    const std::int64_t total =
        config.max_steps > 0 ? config.max_steps : static_cast<std::int64_t>(config.epochs) * sampler.steps_per_epoch();

    const fs::path metrics_path = out_dir / kMetricsFile;
    const bool append = resume_from && fs::exists(metrics_path);
    std::ofstream log(metrics_path, append ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open " + metrics_path.string());
    if (!append) log << "step\tgan\tcyc\tidentity\tsparsity\ttotal\n";

    BoundedQueue<Batch> queue(static_cast<std::size_t>(std::max(1, config.prefetch)));
    std::exception_ptr loader_error;
    std::jthread loader;
    if (config.prefetch > 0) {
        loader = std::jthread([&, first = state.step](std::stop_token stop) {
            try {
                for (std::int64_t s = first; s < total && !stop.stop_requested(); ++s) {
                    if (!queue.push(Batch{s, sampler.batch(s)})) break;
                }
            } catch (...) {
                loader_error = std::current_exception();
            }
            queue.close();
        });
    }
    struct CloseOnExit {
        BoundedQueue<Batch>& q;
        ~CloseOnExit() { q.close(); }
    } close_on_exit{queue};

    try {
        while (state.step < total) {
            std::pair<Tensor, Tensor> images;
            if (config.prefetch > 0) {
                auto b = queue.pop();
                if (!b) {
                    if (loader_error) std::rethrow_exception(loader_error);
                    throw StructuralError("batch loader stopped early");
                }
                images = std::move(b->images);
            } else {
                images = sampler.batch(state.step);
            }
            const LossReport r = train_step(state, images.first, images.second, config);
            state.epoch = state.step / sampler.steps_per_epoch();
            write_metrics_line(log, state.step, r);
            if (config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0 && state.step < total) {
                std::ostringstream name;
                name << "checkpoint_" << std::setw(7) << std::setfill('0') << state.step << ".ckpt";
                log.flush();
                save_checkpoint(out_dir / name.str(), state, config);
            }
        }
        log.flush();
        const fs::path final_path = out_dir / kFinalCheckpoint;
        save_checkpoint(final_path, state, config);
        return final_path;
    } catch (...) {
        log.flush();
        throw;
    }
}

} // namespace derain

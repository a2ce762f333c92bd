#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "derain/discriminator.hpp"
#include "derain/generator.hpp"
#include "derain/losses.hpp"
#include "derain/optimizer.hpp"

namespace derain {

enum class Ablation { no_cyc, no_identity, no_sparsity, no_iternn };

std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& text);

/// Which iterations the cycle and sparsity terms are averaged over.
enum class LossScope { all_iterations, final_iteration };

std::string to_string(LossScope s);
LossScope parse_loss_scope(const std::string& text);

struct TrainConfig {
    int epochs = 400;
    int batch_size = 6;
    double learning_rate = 0.001;
    double momentum = 0.9;
    double weight_decay = 1e-5;
    int crop = 256;
    int iterations = 6;
    LossWeights weights;
    std::set<Ablation> ablation;
    std::uint64_t seed = 0;
    int checkpoint_every = 1000;

    int channels = 3;
    int gen_width = 64;
    int gen_blocks = 9;
    int disc_width = 64;
    int disc_layers = 3;
    OptimizerKind optimizer = OptimizerKind::sgd;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    AdversarialMode adversarial = AdversarialMode::least_squares;
    LossScope cyc_scope = LossScope::all_iterations;
    LossScope sparsity_scope = LossScope::all_iterations;
    /// Capacity of the generated-image pool fed to the discriminators; 0 disables it.
    int replay_buffer = 0;
    bool flip = true;
    /// Stops after this many steps when > 0, otherwise after all epochs.
    std::int64_t max_steps = 0;
    /// Batches prepared ahead by the loader thread; 0 loads inline.
    int prefetch = 2;
    /// Seeds every random stream from `seed`; otherwise `seed` is drawn at start.
    bool deterministic = true;

    bool has(Ablation a) const { return ablation.count(a) != 0; }
    /// N after ablations (no_iternn forces 1).
    int effective_iterations() const { return has(Ablation::no_iternn) ? 1 : iterations; }
    /// Betas with ablated components set to 0.
    LossWeights effective_weights() const;
    GeneratorConfig generator_config() const;
    DiscriminatorConfig discriminator_config() const;
    OptimizerConfig optimizer_config() const;

    void validate() const;
};

/// Every config-file key, in file order.
std::vector<std::string> config_keys();
/// Sets one key from text. Unknown keys raise ConfigError listing the valid ones.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const TrainConfig& config, const std::string& key);
/// One-line description of a key.
std::string config_help(const std::string& key);
/// Parses "key = value" lines ('#' starts a comment) on top of `base`.
TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base = {});
std::string format_config(const TrainConfig& config);

/// Fixed-capacity pool of earlier fakes. Once full, each query swaps an
/// incoming image for a stored one with probability 1/2.
class ReplayBuffer {
public:
    explicit ReplayBuffer(int capacity = 0) : capacity_(capacity) {}

    Tensor query(const Tensor& batch, std::mt19937_64& rng);
    int capacity() const { return capacity_; }
    const std::vector<Tensor>& images() const { return images_; }
    void restore(std::vector<Tensor> images) { images_ = std::move(images); }

private:
    int capacity_;
    std::vector<Tensor> images_;
};

struct TrainState {
    Generator generator;
    Discriminator d_a; // judges backgrounds
    Discriminator d_b; // judges rainy images
    Optimizer opt_g;
    Optimizer opt_da;
    Optimizer opt_db;
    std::int64_t step = 0; // completed steps
    std::int64_t epoch = 0;
    std::mt19937_64 rng;
    ReplayBuffer pool_a;
    ReplayBuffer pool_b;

    static TrainState create(const TrainConfig& config);
};

/// The generator's unrolled pass over a rainy batch, kept for both phases.
struct GeneratorForward {
    ag::Var rainy;
    TraceVars trace;
};

GeneratorForward forward_generator(TrainState& state, const Tensor& rainy_batch, const TrainConfig& config);
/// Discriminator phase: fakes are detached, only D_A and D_B move. Returns the
/// weighted discriminator loss.
double update_discriminators(TrainState& state, const GeneratorForward& forward, const Tensor& clean_batch,
                             const TrainConfig& config);
/// Generator phase against frozen discriminators; only the generator moves.
LossReport update_generator(TrainState& state, const GeneratorForward& forward, const Tensor& clean_batch,
                            const TrainConfig& config);

/// One alternating update: generator forward, discriminators, then generator.
/// Throws NumericError carrying the component losses and the step on a
/// non-finite loss.
LossReport train_step(TrainState& state, const Tensor& rainy_batch, const Tensor& clean_batch,
                      const TrainConfig& config);

/// Random-access image collection.
class ImageSource {
public:
    virtual ~ImageSource() = default;
    virtual std::size_t size() const = 0;
    virtual ImageTensor load(std::size_t index) const = 0;
};

class MemorySource : public ImageSource {
public:
    explicit MemorySource(std::vector<ImageTensor> images);
    std::size_t size() const override { return images_.size(); }
    ImageTensor load(std::size_t index) const override { return images_.at(index); }

private:
    std::vector<ImageTensor> images_;
};

class DirectorySource : public ImageSource {
public:
    /// Throws StructuralError when the directory is missing or holds no images.
    DirectorySource(const std::filesystem::path& dir, int channels);
    std::size_t size() const override { return paths_.size(); }
    ImageTensor load(std::size_t index) const override;

private:
    std::vector<std::filesystem::path> paths_;
    int channels_;
};

/// Unpaired batches as a pure function of the step index: each stream is
/// reshuffled per epoch, the shorter one cycles, crops and flips are drawn
/// from a per-(step, slot) seed.
class BatchSampler {
public:
    BatchSampler(const ImageSource& rainy, const ImageSource& clean, const TrainConfig& config);

    std::int64_t steps_per_epoch() const { return steps_per_epoch_; }
    std::pair<Tensor, Tensor> batch(std::int64_t step) const;

private:
    Tensor assemble(const ImageSource& source, std::int64_t step, int stream) const;

    const ImageSource& rainy_;
    const ImageSource& clean_;
    int batch_size_;
    int crop_;
    bool flip_;
    std::uint64_t seed_;
    std::int64_t steps_per_epoch_;
};

/// Checkpoint holding generator, both discriminators, optimizer states,
/// counters, random-stream state and the config.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state, const TrainConfig& config);
/// Restores a state saved by save_checkpoint; the next step index is the saved one + 1.
TrainState resume(const std::filesystem::path& checkpoint, const TrainConfig& config);

inline constexpr const char* kMetricsFile = "metrics.tsv";
inline constexpr const char* kFinalCheckpoint = "final.ckpt";

/// Trains over directory datasets; see fit(ImageSource...).
std::filesystem::path fit(const TrainConfig& config, const std::filesystem::path& rainy_dir,
                          const std::filesystem::path& clean_dir, const std::filesystem::path& out_dir,
                          const std::optional<std::filesystem::path>& resume_from = std::nullopt);

/// Runs train_step until epochs (or max_steps) are done, appending one line
/// per step to out_dir/metrics.tsv, checkpointing every checkpoint_every steps
/// and at the end. Returns the final checkpoint path.
std::filesystem::path fit(const TrainConfig& config, const ImageSource& rainy, const ImageSource& clean,
                          const std::filesystem::path& out_dir,
                          const std::optional<std::filesystem::path>& resume_from = std::nullopt);

} // namespace derain

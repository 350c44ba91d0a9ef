#pragma once
// Dropout network with a (K-1)-unit ordinal head: each unit k estimates the
// conditional probability P(y >= k | y >= k-1, x). Trained with the CORN
// conditional-subset loss; MC dropout at inference.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cqa/rng.hpp"
#include "cqa/uq.hpp"

namespace cqa::boc {

// Extended binary coding of an ordinal label: y_k = 1{y >= k}, k = 1..K-1.
struct OrdinalScheme {
    int K = 3;

    std::vector<int> encode(int y) const;
    static int decode(std::span<const int> coded);
};

enum class Backbone { mlp_features, small_cnn };
std::string to_string(Backbone b);
Backbone backbone_from_string(const std::string& s);

enum class Mode { train_stochastic, eval_stochastic, deterministic };

struct NetworkConfig {
    Backbone backbone = Backbone::mlp_features;
    // mlp_features: flat feature vector of this length.
    int input_dim = 6;
    // small_cnn: channels x rows x cols grid.
    int in_channels = 2;
    int in_rows = 64;
    int in_cols = 64;
    int conv1_channels = 4;
    int conv2_channels = 8;
    // Dense widths: both used by mlp_features, only the first by small_cnn.
    std::vector<int> hidden{32, 32};
    double dropout_rate = 0.1;
    int K = 3;

    void validate() const;
    std::size_t input_size() const;
    std::string to_json() const;
    static NetworkConfig from_json(const std::string& text);
    // FNV-1a over to_json().
    std::uint64_t hash() const;
    bool operator==(const NetworkConfig&) const = default;
};

struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values;
    bool is_bias = false;
    bool operator==(const Tensor&) const = default;
};

struct LayerGroup {
    std::string name;
    std::vector<Tensor> tensors;
    bool operator==(const LayerGroup&) const = default;
};

// Groups are (conv_block, dense1, head) for small_cnn and (dense1, dense2, head)
// for mlp_features. Values are kept float32-representable so checkpoints
// round-trip exactly.
struct ModelParameters {
    NetworkConfig config;
    std::vector<LayerGroup> groups;

    std::size_t parameter_count() const;
    std::vector<std::string> group_names() const;
    bool all_finite() const;
    bool operator==(const ModelParameters&) const = default;
};

// He-uniform weights, zero biases.
ModelParameters init_parameters(const NetworkConfig& cfg, std::uint64_t seed);
ModelParameters zero_parameters(const NetworkConfig& cfg);
void round_to_float(ModelParameters& p);

// Head probabilities f_1..f_{K-1}. `rng` is drawn from only in stochastic modes.
std::vector<double> forward(const ModelParameters& params, std::span<const double> input, Mode mode,
                            Rng& rng);

struct Example {
    std::vector<double> x;
    int y = 0;
};

struct LossOptions {
    Mode mode = Mode::deterministic;
    // Seeds the dropout masks; identical seeds reproduce identical masks.
    std::uint64_t seed = 0;
    // L2 penalty 0.5 * wd * |W|^2 on weights (biases excluded).
    double weight_decay = 0.0;
};

struct LossResult {
    double loss = 0.0;       // data term + penalty
    double data_loss = 0.0;  // mean BCE over the conditional subsets
    ModelParameters gradient;
    std::vector<std::size_t> subset_sizes;  // |S_k|, k = 1..K-1
};

// Unit 1 sees every sample with target 1{y >= 1}; unit k > 1 only samples with
// y >= k-1, target 1{y >= k}. Loss is the BCE sum divided by sum_k |S_k|.
LossResult corn_loss(const ModelParameters& params, std::span<const Example> batch,
                     const LossOptions& options = {});

struct TrainConfig {
    int epochs = 60;
    int batch_size = 16;
    double base_lr = 3e-3;
    // Multiply the rate by `gamma` when reaching each listed epoch (0-based).
    std::vector<int> milestones{30, 45};
    double gamma = 0.2;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
    double rate_factor(int epoch) const;
};

struct TrainResult {
    ModelParameters params;
    std::vector<double> loss_trace;
    std::vector<double> val_loss_trace;
    int best_epoch = -1;
    std::vector<std::string> warnings;
};

TrainResult train(const TrainConfig& config, const NetworkConfig& net, std::span<const Example> data,
                  std::span<const Example> validation = {});

struct GroupRate {
    std::string group;
    double rate = 0.0;
};

// Same loop as train, starting from `pretrained`, with one initial rate per
// layer group; every rate follows the schedule independently.
TrainResult fine_tune(const ModelParameters& pretrained, const std::vector<GroupRate>& lr_groups,
                      const TrainConfig& config, std::span<const Example> data,
                      std::span<const Example> validation = {});

inline constexpr int kDefaultMcPasses = 20;

// T stochastic passes; pass t uses an rng seeded with derive_seed(seed, t).
std::vector<std::vector<double>> mc_forward_raw(const ModelParameters& params,
                                                std::span<const double> input, int T,
                                                std::uint64_t seed);
// K = 3 form.
uq::McProbs mc_forward(const ModelParameters& params, std::span<const double> input,
                       int T = kDefaultMcPasses, std::uint64_t seed = 0);

// Checkpoint: "CQABOC\0\0", u32 version, u64 config hash, config JSON, then per
// group and tensor the name, shape and little-endian float32 values.
std::vector<std::uint8_t> serialize(const ModelParameters& params);
ModelParameters deserialize(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelParameters& params);
ModelParameters load_checkpoint(const std::filesystem::path& path);

}  // namespace cqa::boc

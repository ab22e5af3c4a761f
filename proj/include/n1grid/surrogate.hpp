#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "n1grid/case_io.hpp"

namespace n1grid {

/// Fixed feature layout plus per-feature normalization statistics fitted on
/// the training split.
///
/// Input:  (P_g, V_m) per PV bus in bus order, (P_l, Q_l) per PQ bus in bus
///         order, then the topology bit vector.
/// Output: (I_or, I_ex) per branch in branch order, then |I_i| per bus.
struct FeatureCodec {
    int n_bus = 0;
    int n_branch = 0;
    int n_pv = 0;
    int n_pq = 0;
    std::vector<double> in_mean, in_std;
    std::vector<double> out_mean, out_std;

    int input_dim() const { return 2 * n_pv + 2 * n_pq + n_branch; }
    int output_dim() const { return 2 * n_branch + n_bus; }

    static std::vector<double> raw_input(const ScenarioRecord& rec);
    static std::vector<double> raw_output(const ScenarioRecord& rec);

    std::vector<double> encode_input(const ScenarioRecord& rec) const;
    std::vector<double> encode_output(const ScenarioRecord& rec) const;
    std::vector<double> decode_output(std::span<const double> normalized) const;

    friend bool operator==(const FeatureCodec&, const FeatureCodec&) = default;
};

/// Normalization statistics from the training records only. Zero-variance
/// features keep std 1 so they normalize to zero.
FeatureCodec fit_codec(std::span<const ScenarioRecord> train_records);

enum class Variant : std::uint32_t { Small = 0, Medium = 1 };

Variant variant_from_name(const std::string& name);
std::string variant_name(Variant v);

struct DenseLayer {
    int in = 0;
    int out = 0;
    std::vector<double> w;  // row-major, out x in
    std::vector<double> b;

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Residual feed-forward net: stem projection into the hidden width, blocks
/// computing h + act(W h + b), and a linear head.
struct ModelParams {
    Variant variant = Variant::Small;
    int input_dim = 0;
    int hidden_dim = 0;
    int output_dim = 0;
    DenseLayer stem;
    std::vector<DenseLayer> blocks;
    DenseLayer head;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct TrainConfig {
    int epochs = 25;
    double learning_rate = 0.001;
    int batch_size = 128;
    int scheduler_step = 5;      // epochs between learning-rate decays
    double scheduler_gamma = 0.5;
    std::uint64_t seed = 0;
};

/// Seeded He-style uniform initialization; Small = 2 blocks of width 64,
/// Medium = 4 blocks of width 128.
ModelParams init_params(Variant variant, int input_dim, int output_dim, std::uint64_t seed);

std::vector<double> forward(const ModelParams& params, std::span<const double> x);

/// Mean of the squared elementwise error over the full output vector.
double mse_loss(std::span<const double> predicted, std::span<const double> target);

/// Parameter gradients of the per-sample loss, reverse-mode.
struct Gradients {
    DenseLayer stem;
    std::vector<DenseLayer> blocks;
    DenseLayer head;
    double loss = 0.0;
};
Gradients backward(const ModelParams& params, std::span<const double> x,
                   std::span<const double> target);

/// Trained model bundled with its codec; the unit of checkpointing.
struct Surrogate {
    FeatureCodec codec;
    ModelParams params;

    friend bool operator==(const Surrogate&, const Surrogate&) = default;
};

struct TrainResult {
    Surrogate model;
    std::vector<double> epoch_loss;  // mean training loss per epoch, normalized space
};

/// Mini-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8) with step-decay
/// learning rate and per-epoch seeded shuffling. Mixing N-1 instances into
/// the data is the dataset generator's job, not the trainer's.
TrainResult train(std::span<const ScenarioRecord> train_records, const TrainConfig& cfg,
                  Variant variant);

/// Denormalized current predictions for one record.
std::vector<double> predict(const Surrogate& model, const ScenarioRecord& rec);

/// Binary checkpoint: magic + version + codec statistics + layer dimensions
/// + row-major weights. load(save(m)) == m bitwise.
void save_checkpoint(const Surrogate& model, const std::filesystem::path& path);
Surrogate load_checkpoint(const std::filesystem::path& path);

}  // namespace n1grid

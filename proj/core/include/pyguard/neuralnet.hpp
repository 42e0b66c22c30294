#pragma once

#include "pyguard/sequence.hpp"
#include "pyguard/vuln_type.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pyguard {

/**
 * Hyper-parameters of the stacked BiLSTM classifier.
 *
 * Defaults: one 50-unit input BiLSTM layer, three 50-unit hidden BiLSTM
 * layers, one output unit, Adam at 0.001, 50 epochs, batch size 128, mean
 * squared error, dropout 0.2. `embedding_dim` sizes the first layer's input.
 */
struct TrainingConfig {
    std::size_t embedding_dim = 50;
    std::size_t input_layer_units = 50;
    std::size_t hidden_layers = 3;
    std::size_t hidden_units = 50;
    std::size_t output_units = 1;
    std::string optimizer = "adam";
    double learning_rate = 0.001;
    std::size_t epochs = 50;
    std::size_t batch_size = 128;
    std::string loss = "mean_squared_error";
    double dropout_rate = 0.2;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 42;

    bool operator==(const TrainingConfig&) const = default;
};

/// Throws InvalidConfig for zero unit counts, a dropout rate outside [0,1),
/// a negative learning rate, or an optimizer/loss other than adam/MSE.
void validate(const TrainingConfig& config);

std::string training_config_to_json(const TrainingConfig& config);
/// Missing keys keep their defaults; wrong types throw FormatError.
TrainingConfig training_config_from_json(std::string_view json);

/// Location of one named parameter tensor inside the flat parameter vector.
struct TensorSlot {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
};

/**
 * Flat parameter layout. Per BiLSTM layer and direction ("fwd", "bwd"):
 * W [4u x in], U [4u x u], b [4u] with gate rows ordered i, f, g, o.
 * Then the dense head: head.W [1 x 2u], head.b [1].
 */
class ParamLayout {
public:
    explicit ParamLayout(const TrainingConfig& config);

    std::size_t layers() const noexcept { return inputs_.size(); }
    std::size_t layer_input(std::size_t l) const { return inputs_[l]; }
    std::size_t layer_units(std::size_t l) const { return units_[l]; }
    std::size_t head_input() const noexcept { return 2 * units_.back(); }

    std::size_t w(std::size_t l, int dir) const { return slots_[slot_index(l, dir, 0)].offset; }
    std::size_t u(std::size_t l, int dir) const { return slots_[slot_index(l, dir, 1)].offset; }
    std::size_t b(std::size_t l, int dir) const { return slots_[slot_index(l, dir, 2)].offset; }
    std::size_t head_w() const { return slots_[slots_.size() - 2].offset; }
    std::size_t head_b() const { return slots_.back().offset; }

    const std::vector<TensorSlot>& tensors() const noexcept { return slots_; }
    std::size_t total() const noexcept { return total_; }

private:
    static std::size_t slot_index(std::size_t l, int dir, int which) {
        return l * 6 + static_cast<std::size_t>(dir) * 3 + static_cast<std::size_t>(which);
    }

    std::vector<std::size_t> inputs_;
    std::vector<std::size_t> units_;
    std::vector<TensorSlot> slots_;
    std::size_t total_ = 0;
};

struct BiLstmModel {
    TrainingConfig config;
    VulnType vuln_type = VulnType::sql_injection;
    std::vector<float> params;  // laid out per ParamLayout(config)

    ParamLayout layout() const { return ParamLayout(config); }
    std::span<const float> tensor(std::string_view name) const;
    std::span<float> tensor(std::string_view name);

    /// Bitwise equality of config, type and parameters.
    bool operator==(const BiLstmModel& other) const;
};

/// Xavier-uniform weights, forget-gate bias 1.0, other biases 0.
BiLstmModel init_model(const TrainingConfig& config, VulnType vuln_type);

/**
 * Scores one window in (0,1). With `training` set, inverted dropout is applied
 * to the inputs of every layer above the first and to the pooled state, using
 * masks drawn from `dropout_seed`; otherwise the call is deterministic.
 *
 * Throws EmptyWindow / DimensionMismatch.
 */
float forward(const BiLstmModel& model, const FeatureSequence& window, bool training = false,
              std::uint64_t dropout_seed = 0);

/// Per-timestep outputs (forward || backward) of one BiLSTM layer applied to
/// `input` directly, without dropout.
FeatureSequence layer_outputs(const BiLstmModel& model, std::size_t layer,
                              const FeatureSequence& input);

struct LabeledWindow {
    FeatureSequence window;
    float label = 0.0f;
};

/// Adam with bias correction; moments are kept in double precision.
class AdamOptimizer {
public:
    AdamOptimizer(std::size_t parameter_count, double learning_rate, double beta1 = 0.9,
                  double beta2 = 0.999, double epsilon = 1e-8);

    void step(std::span<float> params, std::span<const float> grads);
    std::size_t steps() const noexcept { return t_; }

private:
    double lr_, beta1_, beta2_, epsilon_;
    std::size_t t_ = 0;
    std::vector<double> m_, v_;
};

inline constexpr double kGradientClipNorm = 5.0;

/// Rescales `grads` in place so its L2 norm is at most `max_norm`; returns the
/// norm before clipping.
double clip_global_norm(std::span<float> grads, double max_norm);

struct TrainingResult {
    BiLstmModel model;
    /// Mean squared error over the whole dataset with dropout disabled,
    /// measured after each epoch.
    std::vector<double> epoch_loss;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/**
 * Minimizes mean (score - label)^2 by backpropagation through time with Adam,
 * mini-batches of config.batch_size over a per-epoch seeded shuffle, and
 * gradient clipping at kGradientClipNorm. The model's architecture must match
 * `config`; the returned model carries `config`.
 *
 * Throws EmptyDataset, DimensionMismatch, NonFiniteLoss.
 */
TrainingResult train(BiLstmModel model, std::span<const LabeledWindow> dataset,
                     const TrainingConfig& config, const EpochCallback& on_epoch = {});

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t coordinates = 0;
    std::size_t refined = 0;  // coordinates re-differenced in extended precision
    struct PerTensor {
        std::string name;
        double max_relative_error = 0.0;
        double max_abs_difference = 0.0;
    };
    std::vector<PerTensor> tensors;
};

/**
 * Compares the BPTT gradient of (score - label)^2, computed in double
 * precision with dropout disabled, against central finite differences. Every
 * tensor with at most `coords_per_tensor` entries is checked in full, larger
 * ones on a seeded random subsample of that size. The error of one coordinate
 * is |ga - gn| / max(1e-8, |ga| + |gn|).
 *
 * Differences are taken in double; a coordinate whose error exceeds 1e-5 is
 * differenced again in long double before it is scored, so rounding noise of
 * the numeric side does not masquerade as a gradient bug.
 */
GradientCheckResult gradient_check(const BiLstmModel& model, const FeatureSequence& window,
                                   float label, double epsilon = 1e-5,
                                   std::size_t coords_per_tensor = 200);

/// Analytic gradient of (score - label)^2 in double precision, flat layout.
std::vector<double> loss_gradient(const BiLstmModel& model, const FeatureSequence& window,
                                  float label);

std::string serialize_model(const BiLstmModel& model);
BiLstmModel parse_model(std::string_view text);
void save_model(const BiLstmModel& model, const std::filesystem::path& path);
BiLstmModel load_model(const std::filesystem::path& path);

}  // namespace pyguard

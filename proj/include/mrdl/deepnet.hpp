#pragma once

// Layer-wise RBM pre-training driver, unrolled autoencoder / classifier
// networks, and backprop fine-tuning run as map/reduce jobs.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "mrdl/case.hpp"
#include "mrdl/mrengine.hpp"
#include "mrdl/rbm.hpp"

namespace mrdl::deepnet {

enum class Mode : std::uint8_t { autoencoder, classifier };
enum class Activation : std::uint8_t { logistic, linear, softmax };

struct NetworkConfig {
  std::vector<std::size_t> num_nodes;  // layer 0 is the input
  std::size_t max_epoch = 10;          // pre-training epochs per RBM layer
  rbm::CdHyperParams hp;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  Mode mode = Mode::autoencoder;
  std::size_t batch_size = 100;  // cases per job; 0 means one job over all cases
  std::size_t finetune_epochs = 10;
  double finetune_lr = 0.1;
  bool linear_code = false;       // linear hidden units on the top autoencoder RBM
  double linear_code_lr = 0.001;  // CD learning rate for that layer
  std::size_t num_classes = 10;

  std::size_t num_layers() const noexcept { return num_nodes.size(); }
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct NetworkWeights {
  Mode mode = Mode::autoencoder;
  std::vector<rbm::LayerWeights> layers;
  std::vector<Activation> activations;  // one per layer
  /// Autoencoder: number of layers that produce the code. Unused for
  /// classifiers.
  std::size_t code_layer = 0;

  /// Throws IntegrityError if adjacent layer dimensions do not chain.
  void check_chain() const;
  std::size_t input_size() const;
  std::size_t output_size() const;
  std::size_t code_size() const;
  bool unrolled() const noexcept { return mode == Mode::autoencoder && layers.size() == 2 * code_layer; }

  friend bool operator==(const NetworkWeights&, const NetworkWeights&) = default;
};

// --- pre-training -----------------------------------------------------------

struct RbmEpochReport {
  std::size_t layer = 0;  // 0-based RBM index
  std::size_t epoch = 0;  // 1-based
  double train_mse = 0.0;
  double test_mse = 0.0;  // 0 when no held-out cases were supplied
};

struct PretrainHooks {
  /// Held-out cases propagated alongside the training data for monitoring.
  std::span<const TrainingCase> held_out;
  /// Called after every epoch; reconstruction errors are only computed when set.
  std::function<void(const RbmEpochReport&)> on_epoch;
  /// Called when a layer finishes training (where its weights get stored).
  std::function<void(const rbm::LayerWeights&)> on_layer;
};

/// Seed for the RBM job of (layer, epoch, batch).
std::uint64_t rbm_job_seed(std::uint64_t seed, std::size_t layer, std::size_t epoch, std::size_t batch);

/// Trains one RBM per adjacent pair of num_nodes (all but the last pair in
/// classifier mode), each followed by a propagation job that produces the
/// next layer's input.
NetworkWeights pretrain(std::span<const TrainingCase> data, const NetworkConfig& cfg, const PretrainHooks& hooks = {});

/// One epoch of RBM training for a single layer, as used by pretrain.
/// Returns the new weights and momentum state.
rbm::AppliedUpdate rbm_epoch(std::span<const TrainingCase> data, const rbm::LayerWeights& weights,
                             std::span<const double> velocity, const NetworkConfig& cfg, std::size_t epoch);

// --- forward propagation job ------------------------------------------------

inline constexpr std::string_view kPropMapper = "prop";
inline constexpr std::string_view kPropReducer = "prop_identity";

void register_prop_job(mr::Engine& engine);

mr::JobSpec make_prop_job(std::span<const TrainingCase> cases, const rbm::LayerWeights& weights,
                          Activation activation, std::size_t workers);

/// Runs the propagation job and returns the next layer's cases in input
/// order, labels carried over.
std::vector<TrainingCase> propagate(std::span<const TrainingCase> cases, const rbm::LayerWeights& weights,
                                    Activation activation, std::size_t workers, mr::JobMetrics* metrics = nullptr);

/// Engine with the RBM and propagation jobs registered.
const mr::Engine& builtin_engine();

// --- network construction ---------------------------------------------------

/// Appends mirrored decoder layers (transposed weights, biases swapped).
NetworkWeights unroll(const NetworkWeights& encoder);

/// Appends a randomly initialized softmax layer and switches to classifier mode.
NetworkWeights attach_classifier_head(const NetworkWeights& stack, std::size_t num_classes, std::uint64_t seed);

// --- backprop ---------------------------------------------------------------

/// Trainable parameters in forward order: per layer, w row-major then hbias.
std::size_t param_count(const NetworkWeights& net);
rbm::WeightId param_id_at(const NetworkWeights& net, std::size_t ordinal);

struct ForwardPass {
  std::vector<Vector> pre;   // pre-activation per layer
  std::vector<Vector> post;  // post[0] is the input, post[l + 1] layer l output
};

ForwardPass forward(const NetworkWeights& net, const Vector& input);

/// Cross-entropy of the reconstruction (autoencoder) or of the label under
/// the softmax output (classifier).
double case_loss(const NetworkWeights& net, const TrainingCase& c);

/// Gradient of case_loss with respect to every parameter, in param order.
/// Returns the loss.
double backprop_case(const NetworkWeights& net, const TrainingCase& c, std::span<double> grad);

inline constexpr std::string_view kBackpropMapper = "backprop";

/// Summed gradient over `batch`, one map task per case.
mr::DenseJobResult run_backprop_job(std::span<const TrainingCase> batch, const NetworkWeights& net,
                                    std::size_t workers);

/// theta -= lr * summed / batch_size.
NetworkWeights apply_gradient(const NetworkWeights& net, std::span<const double> summed, std::size_t batch_size,
                              double lr);

using FinetuneObserver = std::function<void(std::size_t epoch, const NetworkWeights&)>;

NetworkWeights finetune(const NetworkWeights& net, std::span<const TrainingCase> data, const NetworkConfig& cfg,
                        const FinetuneObserver& on_epoch = {});

// --- inference --------------------------------------------------------------

std::pair<int, Vector> classify(const NetworkWeights& net, const Vector& pixels);
Vector encode(const NetworkWeights& net, const Vector& pixels);
Vector decode(const NetworkWeights& net, const Vector& code);
Vector reconstruct(const NetworkWeights& net, const Vector& pixels);

/// Mean over cases and pixels of the squared reconstruction error.
double reconstruction_mse(const NetworkWeights& net, std::span<const TrainingCase> cases);
std::size_t misclassified(const NetworkWeights& net, std::span<const TrainingCase> cases);

}  // namespace mrdl::deepnet

#pragma once

// Restricted Boltzmann machine trained by contrastive divergence, split into
// the per-case mapper work and the per-weight summing reducer.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrdl/case.hpp"
#include "mrdl/linalg.hpp"
#include "mrdl/mrengine.hpp"

namespace mrdl::rbm {

enum class HiddenUnits : std::uint8_t { logistic, linear };

struct LayerWeights {
  std::size_t layer = 0;
  std::size_t num_vis = 0;
  std::size_t num_hid = 0;
  Matrix w;  // num_vis x num_hid
  Vector vbias;
  Vector hbias;

  std::size_t param_count() const noexcept { return num_vis * num_hid + num_vis + num_hid; }
  /// Throws ShapeError on inconsistent dimensions, IntegrityError on
  /// non-finite entries.
  void validate() const;

  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

enum class ParamKind : std::uint8_t { w, vbias, hbias };

/// Identifies one parameter. Text form "layer:kind:i:j"; bias entries use the
/// unused index 0 (vbias is i:0, hbias is 0:j).
struct WeightId {
  std::size_t layer = 0;
  ParamKind kind = ParamKind::w;
  std::size_t i = 0;
  std::size_t j = 0;

  std::string to_key() const;
  static WeightId parse(std::string_view key);

  friend auto operator<=>(const WeightId&, const WeightId&) = default;
};

struct WeightDelta {
  WeightId id;
  double delta = 0.0;

  friend bool operator==(const WeightDelta&, const WeightDelta&) = default;
};

/// Parameter layout shared by every dense buffer of a layer: w row-major,
/// then vbias, then hbias.
std::size_t ordinal(const WeightId& id, std::size_t num_vis, std::size_t num_hid);
WeightId weight_id_at(std::size_t layer, std::size_t num_vis, std::size_t num_hid, std::size_t ordinal);

struct CdHyperParams {
  double learning_rate = 0.1;
  double momentum = 0.5;
  double final_momentum = 0.9;
  std::size_t momentum_switch_epoch = 5;  // epochs (1-based) after this use final_momentum
  double weight_decay = 0.0002;
  std::size_t cd_steps = 1;
  HiddenUnits hidden_units = HiddenUnits::logistic;

  double momentum_for_epoch(std::size_t epoch) const noexcept {
    return epoch > momentum_switch_epoch ? final_momentum : momentum;
  }
  /// Throws ConfigError naming the bad field.
  void validate() const;
};

/// Per-case sampling stream. Seeded from (job seed, case id) so a case draws
/// the same numbers whichever worker runs it.
class CaseRng {
 public:
  CaseRng(std::uint64_t job_seed, std::uint64_t case_id);

  double uniform();  // [0, 1)
  double bernoulli(double p) { return uniform() < p ? 1.0 : 0.0; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;

/// Gaussian N(0, 0.1^2) weights, zero biases. Throws ConfigError on a zero
/// dimension.
LayerWeights randomize_weights(std::size_t num_vis, std::size_t num_hid, std::uint64_t seed,
                               std::size_t layer = 0);

struct PositivePhase {
  Vector hid_prob;
  Vector hid_state;
  Matrix pos_stats;  // outer(case, hid_prob)
};

struct NegativePhase {
  Vector vis_recon;
  Vector hid_recon_prob;
  Matrix neg_stats;  // outer(vis_recon, hid_recon_prob)
};

PositivePhase getposphase(const Vector& visible, const LayerWeights& weights, CaseRng& rng,
                          HiddenUnits units = HiddenUnits::logistic);

/// Runs `cd_steps` reconstruction cycles starting from `hid_state`; hidden
/// states between cycles are resampled.
NegativePhase getnegphase(const Vector& hid_state, const LayerWeights& weights, CaseRng& rng,
                          std::size_t cd_steps = 1, HiddenUnits units = HiddenUnits::logistic);

std::vector<WeightDelta> update(const Matrix& pos_stats, const Matrix& neg_stats, const Vector& visible,
                                const Vector& vis_recon, const Vector& hid_prob, const Vector& hid_recon_prob,
                                const CdHyperParams& hp, std::size_t layer = 0);

/// Positive phase, negative phase and update for one case, written straight
/// into `out` (param_count() slots, ordinal order). Same arithmetic as the
/// three separate calls.
void cd_deltas(const Vector& visible, const LayerWeights& weights, const CdHyperParams& hp, CaseRng& rng,
               std::span<double> out);

/// Sum in presentation order.
double rbm_reducer(std::span<const double> deltas);

struct AppliedUpdate {
  LayerWeights weights;
  std::vector<double> velocity;  // per-parameter update just applied
};

/// update = momentum * previous + sum / batch_size - lr * decay * w (the
/// decay term on w entries only); weights += update. An empty `velocity`
/// means all zeros.
AppliedUpdate apply_updates(const LayerWeights& weights, std::span<const double> summed, std::size_t batch_size,
                            const CdHyperParams& hp, std::span<const double> velocity);
/// Same, from keyed reducer output. Unknown or repeated ids raise
/// IntegrityError; ids absent from `summed` count as zero.
AppliedUpdate apply_updates(const LayerWeights& weights, std::span<const WeightDelta> summed,
                            std::size_t batch_size, const CdHyperParams& hp, std::span<const double> velocity);

Vector hidden_activation(const Vector& visible, const LayerWeights& weights, HiddenUnits units);
Vector visible_activation(const Vector& hidden, const LayerWeights& weights);
/// Mean squared error of the deterministic up-down pass, averaged over
/// cases and visible units.
double reconstruction_mse(std::span<const TrainingCase> cases, const LayerWeights& weights, HiddenUnits units);

/// Binary broadcast payload.
std::string encode_layer(const LayerWeights& weights);
LayerWeights decode_layer(std::string_view payload);

// --- jobs -------------------------------------------------------------------

inline constexpr std::string_view kRbmMapper = "rbm";
inline constexpr std::string_view kRbmReducer = "rbm_sum";

/// Registers the byte-string RBM mapper and reducer. Input records carry the
/// case id as key and the pixels as space-separated decimals; intermediate
/// keys are WeightId::to_key(), values decimal deltas.
void register_rbm_job(mr::Engine& engine);

mr::Record encode_case(const TrainingCase& c);
TrainingCase decode_case(const mr::Record& r);

mr::JobSpec make_rbm_job(std::span<const TrainingCase> batch, const LayerWeights& weights, const CdHyperParams& hp,
                         std::uint64_t job_seed, std::size_t workers);
std::vector<WeightDelta> decode_rbm_output(const mr::JobResult& result);

/// The same job on the dense path: output[p] is the summed delta of ordinal p.
mr::DenseJobResult run_rbm_job(std::span<const TrainingCase> batch, const LayerWeights& weights,
                               const CdHyperParams& hp, std::uint64_t job_seed, std::size_t workers);

}  // namespace mrdl::rbm

#include "mrdl/rbm.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "mrdl/codec.hpp"
#include "mrdl/error.hpp"

namespace mrdl::rbm {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const char* kind_name(ParamKind k) {
  switch (k) {
    case ParamKind::w: return "w";
    case ParamKind::vbias: return "vbias";
    case ParamKind::hbias: return "hbias";
  }
  return "?";
}

void require_len(const Vector& v, std::size_t n, const char* what) {
  if (v.size() != n) {
    throw ShapeError(std::string(what) + ": expected length " + std::to_string(n) + ", got " +
                     std::to_string(v.size()));
  }
}

Vector activate_hidden(Vector pre, const LayerWeights& lw, HiddenUnits units) {
  for (std::size_t j = 0; j < lw.num_hid; ++j) {
    const double x = pre[j] + lw.hbias[j];
    pre[j] = units == HiddenUnits::logistic ? sigmoid(x) : x;
  }
  return pre;
}

Vector sample_hidden(const Vector& prob, HiddenUnits units, CaseRng& rng) {
  if (units == HiddenUnits::linear) return prob;
  Vector state(prob.size());
  for (std::size_t j = 0; j < prob.size(); ++j) state[j] = rng.bernoulli(prob[j]);
  return state;
}

// One full CD-k chain. Both the public phase functions and the fused mapper
// go through here, so they draw identical random numbers.
Vector positive(const Vector& v, const LayerWeights& lw, HiddenUnits units) {
  return activate_hidden(vecmat(v, lw.w), lw, units);
}

void negative(Vector hid_state, const LayerWeights& lw, CaseRng& rng, std::size_t cd_steps, HiddenUnits units,
              Vector& vis_recon, Vector& hid_recon_prob) {
  for (std::size_t step = 1; step <= cd_steps; ++step) {
    vis_recon = visible_activation(hid_state, lw);
    hid_recon_prob = positive(vis_recon, lw, units);
    if (step < cd_steps) hid_state = sample_hidden(hid_recon_prob, units, rng);
  }
}

}  // namespace

void LayerWeights::validate() const {
  if (w.rows() != num_vis || w.cols() != num_hid || vbias.size() != num_vis || hbias.size() != num_hid) {
    throw ShapeError("layer " + std::to_string(layer) + ": parameter shapes do not match " +
                     std::to_string(num_vis) + "x" + std::to_string(num_hid));
  }
  if (!all_finite(w.values()) || !all_finite(vbias.values()) || !all_finite(hbias.values())) {
    throw IntegrityError("layer " + std::to_string(layer) + ": non-finite parameter");
  }
}

std::string WeightId::to_key() const {
  return std::to_string(layer) + ":" + kind_name(kind) + ":" + std::to_string(i) + ":" + std::to_string(j);
}

WeightId WeightId::parse(std::string_view key) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t pos = 0; pos <= key.size(); ++pos) {
    if (pos == key.size() || key[pos] == ':') {
      parts.push_back(key.substr(start, pos - start));
      start = pos + 1;
    }
  }
  if (parts.size() != 4) throw FormatError("weight id '" + std::string(key) + "' is not layer:kind:i:j", 0);
  WeightId id;
  id.layer = codec::parse_uint(parts[0]);
  if (parts[1] == "w") {
    id.kind = ParamKind::w;
  } else if (parts[1] == "vbias") {
    id.kind = ParamKind::vbias;
  } else if (parts[1] == "hbias") {
    id.kind = ParamKind::hbias;
  } else {
    throw FormatError("weight id '" + std::string(key) + "' has unknown kind", 0);
  }
  id.i = codec::parse_uint(parts[2]);
  id.j = codec::parse_uint(parts[3]);
  return id;
}

std::size_t ordinal(const WeightId& id, std::size_t num_vis, std::size_t num_hid) {
  switch (id.kind) {
    case ParamKind::w:
      if (id.i >= num_vis || id.j >= num_hid) break;
      return id.i * num_hid + id.j;
    case ParamKind::vbias:
      if (id.i >= num_vis || id.j != 0) break;
      return num_vis * num_hid + id.i;
    case ParamKind::hbias:
      if (id.i != 0 || id.j >= num_hid) break;
      return num_vis * num_hid + num_vis + id.j;
  }
  throw IntegrityError("weight id " + id.to_key() + " outside layer " + std::to_string(num_vis) + "x" +
                       std::to_string(num_hid));
}

WeightId weight_id_at(std::size_t layer, std::size_t num_vis, std::size_t num_hid, std::size_t ord) {
  const std::size_t nw = num_vis * num_hid;
  if (ord < nw) return {layer, ParamKind::w, ord / num_hid, ord % num_hid};
  if (ord < nw + num_vis) return {layer, ParamKind::vbias, ord - nw, 0};
  if (ord < nw + num_vis + num_hid) return {layer, ParamKind::hbias, 0, ord - nw - num_vis};
  throw RangeError("parameter ordinal " + std::to_string(ord) + " out of range");
}

void CdHyperParams::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(final_momentum >= 0.0 && final_momentum < 1.0)) throw ConfigError("final_momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be >= 0");
  if (cd_steps < 1) throw ConfigError("cd_steps must be >= 1");
}

CaseRng::CaseRng(std::uint64_t job_seed, std::uint64_t case_id) : engine_(mix_seed(job_seed, case_id)) {}

double CaseRng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept { return splitmix64(a ^ splitmix64(b)); }

LayerWeights randomize_weights(std::size_t num_vis, std::size_t num_hid, std::uint64_t seed, std::size_t layer) {
  if (num_vis == 0 || num_hid == 0) throw ConfigError("randomize_weights: dimensions must be >= 1");
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 0.1);
  LayerWeights lw{layer, num_vis, num_hid, Matrix(num_vis, num_hid), Vector(num_vis), Vector(num_hid)};
  for (double& x : lw.w.values()) x = normal(gen);
  return lw;
}

Vector hidden_activation(const Vector& visible, const LayerWeights& weights, HiddenUnits units) {
  require_len(visible, weights.num_vis, "visible vector");
  return positive(visible, weights, units);
}

Vector visible_activation(const Vector& hidden, const LayerWeights& weights) {
  require_len(hidden, weights.num_hid, "hidden vector");
  Vector v = matvec(weights.w, hidden);
  for (std::size_t i = 0; i < weights.num_vis; ++i) v[i] = sigmoid(v[i] + weights.vbias[i]);
  return v;
}

PositivePhase getposphase(const Vector& visible, const LayerWeights& weights, CaseRng& rng, HiddenUnits units) {
  require_len(visible, weights.num_vis, "getposphase case");
  PositivePhase p;
  p.hid_prob = positive(visible, weights, units);
  p.hid_state = sample_hidden(p.hid_prob, units, rng);
  p.pos_stats = outer(visible, p.hid_prob);
  return p;
}

NegativePhase getnegphase(const Vector& hid_state, const LayerWeights& weights, CaseRng& rng,
                          std::size_t cd_steps, HiddenUnits units) {
  require_len(hid_state, weights.num_hid, "getnegphase hidden state");
  if (cd_steps < 1) throw ConfigError("cd_steps must be >= 1");
  NegativePhase n;
  negative(hid_state, weights, rng, cd_steps, units, n.vis_recon, n.hid_recon_prob);
  n.neg_stats = outer(n.vis_recon, n.hid_recon_prob);
  return n;
}

std::vector<WeightDelta> update(const Matrix& pos_stats, const Matrix& neg_stats, const Vector& visible,
                                const Vector& vis_recon, const Vector& hid_prob, const Vector& hid_recon_prob,
                                const CdHyperParams& hp, std::size_t layer) {
  const std::size_t nv = visible.size();
  const std::size_t nh = hid_prob.size();
  if (pos_stats.rows() != nv || pos_stats.cols() != nh || neg_stats.rows() != nv || neg_stats.cols() != nh ||
      vis_recon.size() != nv || hid_recon_prob.size() != nh) {
    throw ShapeError("update: operand shapes disagree");
  }
  const double lr = hp.learning_rate;
  std::vector<WeightDelta> out;
  out.reserve(nv * nh + nv + nh);
  for (std::size_t i = 0; i < nv; ++i)
    for (std::size_t j = 0; j < nh; ++j)
      out.push_back({{layer, ParamKind::w, i, j}, lr * (pos_stats(i, j) - neg_stats(i, j))});
  for (std::size_t i = 0; i < nv; ++i)
    out.push_back({{layer, ParamKind::vbias, i, 0}, lr * (visible[i] - vis_recon[i])});
  for (std::size_t j = 0; j < nh; ++j)
    out.push_back({{layer, ParamKind::hbias, 0, j}, lr * (hid_prob[j] - hid_recon_prob[j])});
  return out;
}

void cd_deltas(const Vector& visible, const LayerWeights& weights, const CdHyperParams& hp, CaseRng& rng,
               std::span<double> out) {
  require_len(visible, weights.num_vis, "cd case");
  if (out.size() != weights.param_count()) throw ShapeError("cd_deltas: output span has wrong size");
  const std::size_t nv = weights.num_vis;
  const std::size_t nh = weights.num_hid;

  const Vector hid_prob = positive(visible, weights, hp.hidden_units);
  const Vector hid_state = sample_hidden(hid_prob, hp.hidden_units, rng);
  Vector vis_recon, hid_recon_prob;
  negative(hid_state, weights, rng, hp.cd_steps, hp.hidden_units, vis_recon, hid_recon_prob);

  const double lr = hp.learning_rate;
  double* dst = out.data();
  for (std::size_t i = 0; i < nv; ++i) {
    const double vi = visible[i];
    const double ri = vis_recon[i];
    for (std::size_t j = 0; j < nh; ++j) *dst++ = lr * (vi * hid_prob[j] - ri * hid_recon_prob[j]);
  }
  for (std::size_t i = 0; i < nv; ++i) *dst++ = lr * (visible[i] - vis_recon[i]);
  for (std::size_t j = 0; j < nh; ++j) *dst++ = lr * (hid_prob[j] - hid_recon_prob[j]);
}

double rbm_reducer(std::span<const double> deltas) {
  const mr::SumReducer sum;
  double acc = sum.init();
  for (double d : deltas) acc = sum.step(acc, d);
  return acc;
}

AppliedUpdate apply_updates(const LayerWeights& weights, std::span<const double> summed, std::size_t batch_size,
                            const CdHyperParams& hp, std::span<const double> velocity) {
  const std::size_t n = weights.param_count();
  if (batch_size == 0) throw ConfigError("apply_updates: batch_size must be >= 1");
  if (summed.size() != n) throw IntegrityError("apply_updates: summed update has wrong length");
  if (!velocity.empty() && velocity.size() != n) throw IntegrityError("apply_updates: velocity has wrong length");

  AppliedUpdate res{weights, std::vector<double>(n)};
  const std::size_t nw = weights.num_vis * weights.num_hid;
  const double bs = static_cast<double>(batch_size);
  const double decay = hp.learning_rate * hp.weight_decay;
  auto param = [&](std::size_t p) -> double& {
    if (p < nw) return res.weights.w.values()[p];
    if (p < nw + weights.num_vis) return res.weights.vbias[p - nw];
    return res.weights.hbias[p - nw - weights.num_vis];
  };
  for (std::size_t p = 0; p < n; ++p) {
    const double prev = velocity.empty() ? 0.0 : velocity[p];
    double& x = param(p);
    double upd = hp.momentum * prev + summed[p] / bs;
    if (p < nw) upd -= decay * x;
    x += upd;
    res.velocity[p] = upd;
  }
  return res;
}

AppliedUpdate apply_updates(const LayerWeights& weights, std::span<const WeightDelta> summed,
                            std::size_t batch_size, const CdHyperParams& hp, std::span<const double> velocity) {
  std::vector<double> dense(weights.param_count(), 0.0);
  std::vector<bool> seen(dense.size(), false);
  for (const auto& d : summed) {
    if (d.id.layer != weights.layer) {
      throw IntegrityError("update for " + d.id.to_key() + " does not belong to layer " +
                           std::to_string(weights.layer));
    }
    const std::size_t p = ordinal(d.id, weights.num_vis, weights.num_hid);
    if (seen[p]) throw IntegrityError("duplicate update for " + d.id.to_key());
    seen[p] = true;
    dense[p] = d.delta;
  }
  return apply_updates(weights, dense, batch_size, hp, velocity);
}

double reconstruction_mse(std::span<const TrainingCase> cases, const LayerWeights& weights, HiddenUnits units) {
  if (cases.empty()) return 0.0;
  double total = 0.0;
  for (const auto& c : cases) {
    const Vector recon = visible_activation(hidden_activation(c.pixels, weights, units), weights);
    double s = 0.0;
    for (std::size_t i = 0; i < recon.size(); ++i) {
      const double d = c.pixels[i] - recon[i];
      s += d * d;
    }
    total += s / static_cast<double>(recon.size());
  }
  return total / static_cast<double>(cases.size());
}

std::string encode_layer(const LayerWeights& weights) {
  codec::ByteWriter w;
  w.u32(static_cast<std::uint32_t>(weights.layer));
  w.u32(static_cast<std::uint32_t>(weights.num_vis));
  w.u32(static_cast<std::uint32_t>(weights.num_hid));
  w.f64s(weights.w.values());
  w.f64s(weights.vbias.values());
  w.f64s(weights.hbias.values());
  return w.take();
}

LayerWeights decode_layer(std::string_view payload) {
  codec::ByteReader r(payload);
  LayerWeights lw;
  lw.layer = r.u32();
  lw.num_vis = r.u32();
  lw.num_hid = r.u32();
  if (r.remaining() != 8 * lw.param_count()) throw FormatError("layer payload size mismatch", r.position());
  lw.w = Matrix(lw.num_vis, lw.num_hid);
  lw.vbias = Vector(lw.num_vis);
  lw.hbias = Vector(lw.num_hid);
  r.f64s(lw.w.values());
  r.f64s(lw.vbias.values());
  r.f64s(lw.hbias.values());
  return lw;
}

// --- jobs -------------------------------------------------------------------

mr::Record encode_case(const TrainingCase& c) {
  return {std::to_string(c.case_id), codec::format_reals(c.pixels.values())};
}

TrainingCase decode_case(const mr::Record& r) {
  TrainingCase c;
  try {
    c.case_id = codec::parse_uint(r.key);
    c.pixels = Vector(codec::parse_reals(r.value));
  } catch (const FormatError& e) {
    throw FormatError("case '" + r.key + "' is malformed: " + e.what(), 0);
  }
  return c;
}

namespace {

void check_case(const TrainingCase& c, std::size_t num_vis) {
  if (c.pixels.size() != num_vis) {
    throw ShapeError("case " + std::to_string(c.case_id) + " has " + std::to_string(c.pixels.size()) +
                     " values, expected " + std::to_string(num_vis));
  }
  for (double x : c.pixels.values()) {
    if (!(x >= 0.0 && x <= 1.0)) throw RangeError("case " + std::to_string(c.case_id) + " has a value outside [0,1]");
  }
}

HiddenUnits parse_units(const mr::Config& cfg) {
  auto it = cfg.find("hidden_units");
  if (it == cfg.end() || it->second == "logistic") return HiddenUnits::logistic;
  if (it->second == "linear") return HiddenUnits::linear;
  throw ConfigError("hidden_units must be 'logistic' or 'linear'");
}

CdHyperParams hp_from_config(const mr::Config& cfg) {
  CdHyperParams hp;
  if (auto it = cfg.find("learning_rate"); it != cfg.end()) hp.learning_rate = codec::parse_real(it->second);
  if (auto it = cfg.find("cd_steps"); it != cfg.end()) hp.cd_steps = codec::parse_uint(it->second);
  hp.hidden_units = parse_units(cfg);
  return hp;
}

mr::MapTaskFn rbm_configure(std::string_view broadcast, const mr::Config& cfg) {
  auto weights = std::make_shared<const LayerWeights>(decode_layer(broadcast));
  const std::size_t num_vis = codec::parse_uint(cfg.at("numVis"));
  const std::size_t num_hid = codec::parse_uint(cfg.at("numHid"));
  if (weights->num_vis != num_vis || weights->num_hid != num_hid) {
    throw ConfigError("broadcast weights do not match numVis/numHid");
  }
  const std::uint64_t seed = codec::parse_uint(cfg.at("seed"));
  const CdHyperParams hp = hp_from_config(cfg);

  return [weights, seed, hp](const mr::Record& in) {
    const TrainingCase c = decode_case(in);
    check_case(c, weights->num_vis);
    CaseRng rng(seed, c.case_id);
    std::vector<double> deltas(weights->param_count());
    cd_deltas(c.pixels, *weights, hp, rng, deltas);

    std::vector<mr::Record> out;
    out.reserve(deltas.size());
    for (std::size_t p = 0; p < deltas.size(); ++p) {
      out.push_back({weight_id_at(weights->layer, weights->num_vis, weights->num_hid, p).to_key(),
                     codec::format_real(deltas[p])});
    }
    return out;
  };
}

mr::Record rbm_reduce(const std::string& key, std::span<const std::string> values, const mr::Config&) {
  std::vector<double> deltas;
  deltas.reserve(values.size());
  for (const auto& v : values) deltas.push_back(codec::parse_real(v));
  return {key, codec::format_real(rbm_reducer(deltas))};
}

}  // namespace

void register_rbm_job(mr::Engine& engine) {
  engine.register_mapper_factory(std::string(kRbmMapper), rbm_configure, {"numVis", "numHid", "seed"});
  engine.register_reducer(std::string(kRbmReducer), rbm_reduce);
}

mr::JobSpec make_rbm_job(std::span<const TrainingCase> batch, const LayerWeights& weights, const CdHyperParams& hp,
                         std::uint64_t job_seed, std::size_t workers) {
  mr::JobSpec spec;
  spec.input.reserve(batch.size());
  for (const auto& c : batch) spec.input.push_back(encode_case(c));
  spec.broadcast = encode_layer(weights);
  spec.mapper_id = kRbmMapper;
  spec.reducer_id = kRbmReducer;
  spec.workers = workers;
  spec.config = {{"numVis", std::to_string(weights.num_vis)},
                 {"numHid", std::to_string(weights.num_hid)},
                 {"seed", std::to_string(job_seed)},
                 {"learning_rate", codec::format_real(hp.learning_rate)},
                 {"cd_steps", std::to_string(hp.cd_steps)},
                 {"hidden_units", hp.hidden_units == HiddenUnits::linear ? "linear" : "logistic"}};
  return spec;
}

std::vector<WeightDelta> decode_rbm_output(const mr::JobResult& result) {
  std::vector<WeightDelta> out;
  out.reserve(result.output.size());
  for (const auto& r : result.output) out.push_back({WeightId::parse(r.key), codec::parse_real(r.value)});
  return out;
}

mr::DenseJobResult run_rbm_job(std::span<const TrainingCase> batch, const LayerWeights& weights,
                               const CdHyperParams& hp, std::uint64_t job_seed, std::size_t workers) {
  hp.validate();
  mr::DenseJob job{weights.param_count(), workers, 0};
  return mr::run_dense_job(
      job, batch, weights,
      [&](const LayerWeights& w, const TrainingCase& c, std::size_t, std::span<double> emit) {
        check_case(c, w.num_vis);
        CaseRng rng(job_seed, c.case_id);
        cd_deltas(c.pixels, w, hp, rng, emit);
      },
      mr::SumReducer{});
}

}  // namespace mrdl::rbm

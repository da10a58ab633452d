#include "mrdl/deepnet.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <unordered_map>

#include "mrdl/codec.hpp"
#include "mrdl/error.hpp"

namespace mrdl::deepnet {

namespace {

std::vector<std::span<const TrainingCase>> batches(std::span<const TrainingCase> data, std::size_t batch_size) {
  std::vector<std::span<const TrainingCase>> out;
  const std::size_t step = batch_size == 0 ? std::max<std::size_t>(data.size(), 1) : batch_size;
  for (std::size_t at = 0; at < data.size(); at += step) out.push_back(data.subspan(at, std::min(step, data.size() - at)));
  return out;
}

rbm::HiddenUnits rbm_units(const NetworkConfig& cfg, std::size_t layer) {
  const bool top = layer + 2 == cfg.num_layers();
  return cfg.mode == Mode::autoencoder && cfg.linear_code && top ? rbm::HiddenUnits::linear
                                                                  : rbm::HiddenUnits::logistic;
}

double softplus(double t) { return std::log1p(std::exp(-std::abs(t))) + std::max(t, 0.0); }

Vector softmax(const Vector& z) {
  const double m = *std::max_element(z.values().begin(), z.values().end());
  Vector p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    s += p[i];
  }
  for (double& x : p.values()) x /= s;
  return p;
}

Vector apply_activation(const Vector& z, Activation a) {
  switch (a) {
    case Activation::logistic: return sigmoid_map(z);
    case Activation::linear: return z;
    case Activation::softmax: return softmax(z);
  }
  return z;
}

Vector layer_forward(const Vector& in, const rbm::LayerWeights& lw, Activation a, Vector* pre = nullptr) {
  if (in.size() != lw.num_vis) {
    throw ShapeError("layer " + std::to_string(lw.layer) + " expects " + std::to_string(lw.num_vis) +
                     " inputs, got " + std::to_string(in.size()));
  }
  Vector z = vecmat(in, lw.w);
  for (std::size_t j = 0; j < lw.num_hid; ++j) z[j] += lw.hbias[j];
  Vector out = apply_activation(z, a);
  if (pre) *pre = std::move(z);
  return out;
}

std::vector<std::size_t> param_offsets(const NetworkWeights& net) {
  std::vector<std::size_t> off(net.layers.size() + 1, 0);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    off[l + 1] = off[l] + net.layers[l].num_vis * net.layers[l].num_hid + net.layers[l].num_hid;
  }
  return off;
}

void check_input(const TrainingCase& c, std::size_t n) {
  if (c.pixels.size() != n) {
    throw ShapeError("case " + std::to_string(c.case_id) + " has " + std::to_string(c.pixels.size()) +
                     " values, expected " + std::to_string(n));
  }
}

Activation parse_activation(const mr::Config& cfg) {
  auto it = cfg.find("activation");
  if (it == cfg.end() || it->second == "logistic") return Activation::logistic;
  if (it->second == "linear") return Activation::linear;
  throw ConfigError("propagation activation must be 'logistic' or 'linear'");
}

mr::MapTaskFn prop_configure(std::string_view broadcast, const mr::Config& cfg) {
  auto weights = std::make_shared<const rbm::LayerWeights>(rbm::decode_layer(broadcast));
  if (weights->num_vis != codec::parse_uint(cfg.at("numVis")) ||
      weights->num_hid != codec::parse_uint(cfg.at("numHid"))) {
    throw ConfigError("broadcast weights do not match numVis/numHid");
  }
  const Activation act = parse_activation(cfg);
  return [weights, act](const mr::Record& in) {
    const TrainingCase c = rbm::decode_case(in);
    check_input(c, weights->num_vis);
    const Vector out = layer_forward(c.pixels, *weights, act);
    return std::vector<mr::Record>{{in.key, codec::format_reals(out.values())}};
  };
}

mr::Record prop_reduce(const std::string& key, std::span<const std::string> values, const mr::Config&) {
  if (values.size() != 1) {
    throw IntegrityError("case " + key + " received " + std::to_string(values.size()) + " propagated values");
  }
  return {key, values[0]};
}

}  // namespace

void NetworkConfig::validate() const {
  if (num_nodes.size() < 2) throw ConfigError("num_nodes: need at least an input and one hidden layer");
  for (std::size_t n : num_nodes) {
    if (n == 0) throw ConfigError("num_nodes: every layer needs at least one unit");
  }
  if (workers == 0) throw ConfigError("workers must be >= 1");
  if (!(finetune_lr >= 0.0) || !std::isfinite(finetune_lr)) throw ConfigError("finetune_lr must be >= 0");
  if (!(linear_code_lr >= 0.0) || !std::isfinite(linear_code_lr)) throw ConfigError("linear_code_lr must be >= 0");
  if (mode == Mode::classifier) {
    if (num_nodes.size() < 3) throw ConfigError("num_nodes: a classifier needs at least one hidden layer");
    if (num_nodes.back() != num_classes) throw ConfigError("num_nodes: last layer must equal num_classes");
  }
  hp.validate();
}

void NetworkWeights::check_chain() const {
  if (activations.size() != layers.size()) throw IntegrityError("one activation per layer required");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].validate();
    if (l + 1 < layers.size() && layers[l].num_hid != layers[l + 1].num_vis) {
      throw IntegrityError("layer " + std::to_string(l) + " output " + std::to_string(layers[l].num_hid) +
                           " does not feed layer " + std::to_string(l + 1) + " input " +
                           std::to_string(layers[l + 1].num_vis));
    }
  }
  if (mode == Mode::autoencoder && code_layer > layers.size()) throw IntegrityError("code layer out of range");
}

std::size_t NetworkWeights::input_size() const { return layers.empty() ? 0 : layers.front().num_vis; }
std::size_t NetworkWeights::output_size() const { return layers.empty() ? 0 : layers.back().num_hid; }
std::size_t NetworkWeights::code_size() const {
  if (mode != Mode::autoencoder || code_layer == 0) return 0;
  return layers[code_layer - 1].num_hid;
}

// --- pre-training -----------------------------------------------------------

std::uint64_t rbm_job_seed(std::uint64_t seed, std::size_t layer, std::size_t epoch, std::size_t batch) {
  using rbm::mix_seed;
  return mix_seed(mix_seed(mix_seed(seed, 0x524200 + layer), epoch), batch);
}

rbm::AppliedUpdate rbm_epoch(std::span<const TrainingCase> data, const rbm::LayerWeights& weights,
                             std::span<const double> velocity, const NetworkConfig& cfg, std::size_t epoch) {
  rbm::CdHyperParams hp = cfg.hp;
  hp.momentum = cfg.hp.momentum_for_epoch(epoch);
  hp.hidden_units = rbm_units(cfg, weights.layer);
  if (hp.hidden_units == rbm::HiddenUnits::linear) hp.learning_rate = cfg.linear_code_lr;

  rbm::AppliedUpdate state{weights, std::vector<double>(velocity.begin(), velocity.end())};
  const auto parts = batches(data, cfg.batch_size);
  for (std::size_t b = 0; b < parts.size(); ++b) {
    const auto seed = rbm_job_seed(cfg.seed, weights.layer, epoch, b);
    const auto job = rbm::run_rbm_job(parts[b], state.weights, hp, seed, cfg.workers);
    state = rbm::apply_updates(state.weights, job.output, parts[b].size(), hp, state.velocity);
  }
  return state;
}

NetworkWeights pretrain(std::span<const TrainingCase> data, const NetworkConfig& cfg, const PretrainHooks& hooks) {
  cfg.validate();
  if (data.empty()) throw ConfigError("pretrain: no training cases");
  for (const auto& c : data) check_input(c, cfg.num_nodes[0]);

  const std::size_t num_rbms = cfg.num_layers() - (cfg.mode == Mode::classifier ? 2 : 1);
  std::vector<TrainingCase> inputs(data.begin(), data.end());
  std::vector<TrainingCase> held(hooks.held_out.begin(), hooks.held_out.end());

  NetworkWeights net;
  net.mode = cfg.mode;
  for (std::size_t l = 0; l < num_rbms; ++l) {
    const rbm::HiddenUnits units = rbm_units(cfg, l);
    rbm::AppliedUpdate state{
        rbm::randomize_weights(cfg.num_nodes[l], cfg.num_nodes[l + 1], rbm::mix_seed(cfg.seed, l), l), {}};
    for (std::size_t epoch = 1; epoch <= cfg.max_epoch; ++epoch) {
      state = rbm_epoch(inputs, state.weights, state.velocity, cfg, epoch);
      if (hooks.on_epoch) {
        RbmEpochReport rep{l, epoch, rbm::reconstruction_mse(inputs, state.weights, units), 0.0};
        if (!held.empty()) rep.test_mse = rbm::reconstruction_mse(held, state.weights, units);
        hooks.on_epoch(rep);
      }
    }
    state.weights.validate();
    if (hooks.on_layer) hooks.on_layer(state.weights);

    const Activation act = units == rbm::HiddenUnits::linear ? Activation::linear : Activation::logistic;
    if (l + 1 < num_rbms) {
      inputs = propagate(inputs, state.weights, act, cfg.workers);
      if (!held.empty() && hooks.on_epoch) held = propagate(held, state.weights, act, cfg.workers);
    }
    net.layers.push_back(std::move(state.weights));
    net.activations.push_back(act);
  }
  net.code_layer = net.layers.size();
  net.check_chain();
  return net;
}

// --- forward propagation job ------------------------------------------------

void register_prop_job(mr::Engine& engine) {
  engine.register_mapper_factory(std::string(kPropMapper), prop_configure, {"numVis", "numHid"});
  engine.register_reducer(std::string(kPropReducer), prop_reduce);
}

const mr::Engine& builtin_engine() {
  static const mr::Engine engine = [] {
    mr::Engine e;
    rbm::register_rbm_job(e);
    register_prop_job(e);
    return e;
  }();
  return engine;
}

mr::JobSpec make_prop_job(std::span<const TrainingCase> cases, const rbm::LayerWeights& weights,
                          Activation activation, std::size_t workers) {
  if (activation == Activation::softmax) throw ConfigError("propagation job does not support softmax layers");
  mr::JobSpec spec;
  spec.input.reserve(cases.size());
  for (const auto& c : cases) spec.input.push_back(rbm::encode_case(c));
  spec.broadcast = rbm::encode_layer(weights);
  spec.mapper_id = kPropMapper;
  spec.reducer_id = kPropReducer;
  spec.workers = workers;
  spec.config = {{"numVis", std::to_string(weights.num_vis)},
                 {"numHid", std::to_string(weights.num_hid)},
                 {"activation", activation == Activation::linear ? "linear" : "logistic"}};
  return spec;
}

std::vector<TrainingCase> propagate(std::span<const TrainingCase> cases, const rbm::LayerWeights& weights,
                                    Activation activation, std::size_t workers, mr::JobMetrics* metrics) {
  const auto result = builtin_engine().run_job(make_prop_job(cases, weights, activation, workers));
  if (metrics) *metrics = result.metrics;

  std::unordered_map<std::size_t, std::size_t> slot;
  for (std::size_t i = 0; i < cases.size(); ++i) slot.emplace(cases[i].case_id, i);
  std::vector<TrainingCase> out(cases.size());
  std::vector<bool> filled(cases.size(), false);
  for (const auto& rec : result.output) {
    TrainingCase c = rbm::decode_case(rec);
    auto it = slot.find(c.case_id);
    if (it == slot.end() || filled[it->second]) throw IntegrityError("propagation output for unknown case " + rec.key);
    c.label = cases[it->second].label;
    filled[it->second] = true;
    out[it->second] = std::move(c);
  }
  if (std::find(filled.begin(), filled.end(), false) != filled.end()) {
    throw IntegrityError("propagation job lost cases");
  }
  return out;
}

// --- network construction ---------------------------------------------------

NetworkWeights unroll(const NetworkWeights& encoder) {
  if (encoder.mode != Mode::autoencoder) throw ConfigError("unroll: only autoencoder stacks can be unrolled");
  if (encoder.layers.empty() || encoder.code_layer != encoder.layers.size()) {
    throw ConfigError("unroll: expected a non-empty encoder stack that is not yet unrolled");
  }
  NetworkWeights net = encoder;
  const std::size_t k = encoder.layers.size();
  for (std::size_t m = 0; m < k; ++m) {
    const auto& src = encoder.layers[k - 1 - m];
    rbm::LayerWeights dec{k + m, src.num_hid, src.num_vis, transpose(src.w), src.hbias, src.vbias};
    net.layers.push_back(std::move(dec));
    net.activations.push_back(Activation::logistic);
  }
  net.check_chain();
  return net;
}

NetworkWeights attach_classifier_head(const NetworkWeights& stack, std::size_t num_classes, std::uint64_t seed) {
  if (stack.layers.empty()) throw ConfigError("classifier head needs a non-empty stack");
  if (stack.unrolled() || stack.activations.back() == Activation::softmax) {
    throw ConfigError("classifier head goes on an encoder stack");
  }
  NetworkWeights net = stack;
  net.mode = Mode::classifier;
  net.code_layer = 0;
  net.layers.push_back(rbm::randomize_weights(stack.output_size(), num_classes, seed, stack.layers.size()));
  net.activations.push_back(Activation::softmax);
  net.check_chain();
  return net;
}

// --- backprop ---------------------------------------------------------------

std::size_t param_count(const NetworkWeights& net) { return param_offsets(net).back(); }

rbm::WeightId param_id_at(const NetworkWeights& net, std::size_t ordinal) {
  const auto off = param_offsets(net);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (ordinal < off[l + 1]) {
      const auto& lw = net.layers[l];
      const std::size_t p = ordinal - off[l];
      if (p < lw.num_vis * lw.num_hid) return {lw.layer, rbm::ParamKind::w, p / lw.num_hid, p % lw.num_hid};
      return {lw.layer, rbm::ParamKind::hbias, 0, p - lw.num_vis * lw.num_hid};
    }
  }
  throw RangeError("parameter ordinal " + std::to_string(ordinal) + " out of range");
}

ForwardPass forward(const NetworkWeights& net, const Vector& input) {
  ForwardPass fp;
  fp.post.reserve(net.layers.size() + 1);
  fp.pre.resize(net.layers.size());
  fp.post.push_back(input);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    fp.post.push_back(layer_forward(fp.post.back(), net.layers[l], net.activations[l], &fp.pre[l]));
  }
  return fp;
}

namespace {

double loss_from_pass(const NetworkWeights& net, const TrainingCase& c, const ForwardPass& fp) {
  const Vector& z = fp.pre.back();
  if (net.mode == Mode::classifier) {
    if (net.activations.back() != Activation::softmax) throw ConfigError("classifier output must be softmax");
    if (!c.label || *c.label < 0 || static_cast<std::size_t>(*c.label) >= z.size()) {
      throw RangeError("case " + std::to_string(c.case_id) + " has no valid label");
    }
    const double m = *std::max_element(z.values().begin(), z.values().end());
    double s = 0.0;
    for (double x : z.values()) s += std::exp(x - m);
    return m + std::log(s) - z[static_cast<std::size_t>(*c.label)];
  }
  if (net.activations.back() != Activation::logistic) throw ConfigError("autoencoder output must be logistic");
  if (z.size() != c.pixels.size()) throw ShapeError("autoencoder output does not match input size");
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    loss += c.pixels[i] * softplus(-z[i]) + (1.0 - c.pixels[i]) * softplus(z[i]);
  }
  return loss;
}

}  // namespace

double case_loss(const NetworkWeights& net, const TrainingCase& c) {
  return loss_from_pass(net, c, forward(net, c.pixels));
}

double backprop_case(const NetworkWeights& net, const TrainingCase& c, std::span<double> grad) {
  const auto off = param_offsets(net);
  if (grad.size() != off.back()) throw ShapeError("backprop: gradient span has wrong size");
  const ForwardPass fp = forward(net, c.pixels);
  const double loss = loss_from_pass(net, c, fp);

  // Output error: softmax or logistic output paired with cross-entropy.
  Vector delta = fp.post.back();
  if (net.mode == Mode::classifier) {
    delta[static_cast<std::size_t>(*c.label)] -= 1.0;
  } else {
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] -= c.pixels[i];
  }

  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const auto& lw = net.layers[l];
    const Vector& in = fp.post[l];
    double* g = grad.data() + off[l];
    for (std::size_t i = 0; i < lw.num_vis; ++i) {
      const double a = in[i];
      for (std::size_t j = 0; j < lw.num_hid; ++j) *g++ = a * delta[j];
    }
    for (std::size_t j = 0; j < lw.num_hid; ++j) *g++ = delta[j];
    if (l == 0) break;

    Vector below = matvec(lw.w, delta);
    switch (net.activations[l - 1]) {
      case Activation::logistic:
        for (std::size_t i = 0; i < below.size(); ++i) below[i] *= in[i] * (1.0 - in[i]);
        break;
      case Activation::linear: break;
      case Activation::softmax: throw ConfigError("softmax is only supported on the output layer");
    }
    delta = std::move(below);
  }
  return loss;
}

mr::DenseJobResult run_backprop_job(std::span<const TrainingCase> batch, const NetworkWeights& net,
                                    std::size_t workers) {
  mr::DenseJob job{param_count(net), workers, 0};
  return mr::run_dense_job(
      job, batch, net,
      [](const NetworkWeights& w, const TrainingCase& c, std::size_t, std::span<double> emit) {
        check_input(c, w.input_size());
        backprop_case(w, c, emit);
      },
      mr::SumReducer{});
}

NetworkWeights apply_gradient(const NetworkWeights& net, std::span<const double> summed, std::size_t batch_size,
                              double lr) {
  if (batch_size == 0) throw ConfigError("apply_gradient: batch_size must be >= 1");
  if (summed.size() != param_count(net)) throw IntegrityError("apply_gradient: gradient has wrong length");
  NetworkWeights out = net;
  const double bs = static_cast<double>(batch_size);
  const double* g = summed.data();
  for (auto& lw : out.layers) {
    for (double& x : lw.w.values()) x -= lr * (*g++ / bs);
    for (double& x : lw.hbias.values()) x -= lr * (*g++ / bs);
  }
  return out;
}

NetworkWeights finetune(const NetworkWeights& net, std::span<const TrainingCase> data, const NetworkConfig& cfg,
                        const FinetuneObserver& on_epoch) {
  cfg.validate();
  net.check_chain();
  if (net.mode == Mode::autoencoder && !net.unrolled()) throw ConfigError("finetune: autoencoder is not unrolled");
  for (const auto& c : data) check_input(c, net.input_size());

  NetworkWeights cur = net;
  const auto parts = batches(data, cfg.batch_size);
  for (std::size_t epoch = 1; epoch <= cfg.finetune_epochs; ++epoch) {
    for (const auto& batch : parts) {
      const auto job = run_backprop_job(batch, cur, cfg.workers);
      cur = apply_gradient(cur, job.output, batch.size(), cfg.finetune_lr);
    }
    if (on_epoch) on_epoch(epoch, cur);
  }
  cur.check_chain();
  return cur;
}

// --- inference --------------------------------------------------------------

std::pair<int, Vector> classify(const NetworkWeights& net, const Vector& pixels) {
  if (net.mode != Mode::classifier) throw ConfigError("classify needs classifier weights");
  Vector probs = forward(net, pixels).post.back();
  const auto best = std::max_element(probs.values().begin(), probs.values().end());
  return {static_cast<int>(best - probs.values().begin()), std::move(probs)};
}

Vector encode(const NetworkWeights& net, const Vector& pixels) {
  if (net.mode != Mode::autoencoder || net.code_layer == 0) throw ConfigError("encode needs autoencoder weights");
  Vector a = pixels;
  for (std::size_t l = 0; l < net.code_layer; ++l) a = layer_forward(a, net.layers[l], net.activations[l]);
  return a;
}

Vector decode(const NetworkWeights& net, const Vector& code) {
  if (!net.unrolled()) throw ConfigError("decode needs unrolled autoencoder weights");
  Vector a = code;
  for (std::size_t l = net.code_layer; l < net.layers.size(); ++l) {
    a = layer_forward(a, net.layers[l], net.activations[l]);
  }
  return a;
}

Vector reconstruct(const NetworkWeights& net, const Vector& pixels) { return decode(net, encode(net, pixels)); }

double reconstruction_mse(const NetworkWeights& net, std::span<const TrainingCase> cases) {
  if (cases.empty()) return 0.0;
  double total = 0.0;
  for (const auto& c : cases) {
    const Vector r = reconstruct(net, c.pixels);
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double d = c.pixels[i] - r[i];
      s += d * d;
    }
    total += s / static_cast<double>(r.size());
  }
  return total / static_cast<double>(cases.size());
}

std::size_t misclassified(const NetworkWeights& net, std::span<const TrainingCase> cases) {
  std::size_t wrong = 0;
  for (const auto& c : cases) {
    if (!c.label || classify(net, c.pixels).first != *c.label) ++wrong;
  }
  return wrong;
}

}  // namespace mrdl::deepnet

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "mrdl/deepnet.hpp"
#include "mrdl/error.hpp"
#include "support.hpp"

using namespace mrdl;
using namespace mrdl::deepnet;

namespace {

rbm::LayerWeights random_layer(std::size_t nv, std::size_t nh, std::size_t layer, std::mt19937_64& rng) {
  return {layer, nv, nh, testing::random_matrix(nv, nh, rng, 0.6), testing::random_vector(nv, rng, -0.5, 0.5),
          testing::random_vector(nh, rng, -0.5, 0.5)};
}

NetworkWeights toy_autoencoder(std::mt19937_64& rng) {
  NetworkWeights enc;
  enc.layers = {random_layer(6, 4, 0, rng), random_layer(4, 2, 1, rng)};
  enc.activations = {Activation::logistic, Activation::logistic};
  enc.code_layer = 2;
  NetworkWeights net = unroll(enc);
  // Untie the decoder so the check does not lean on mirrored values.
  for (std::size_t l = 2; l < 4; ++l) {
    for (double& x : net.layers[l].w.values()) x += 0.3 * (static_cast<double>(rng() % 1000) / 1000.0 - 0.5);
  }
  return net;
}

NetworkWeights toy_classifier(std::mt19937_64& rng) {
  NetworkWeights net;
  net.mode = Mode::classifier;
  net.layers = {random_layer(6, 4, 0, rng), random_layer(4, 3, 1, rng)};
  net.activations = {Activation::logistic, Activation::softmax};
  return net;
}

double& param_ref(NetworkWeights& net, std::size_t ordinal) {
  const auto id = param_id_at(net, ordinal);
  auto& lw = net.layers[id.layer];
  return id.kind == rbm::ParamKind::w ? lw.w(id.i, id.j) : lw.hbias[id.j];
}

// Worst relative disagreement between backprop and central differences,
// over every parameter of the net.
double gradient_check(const NetworkWeights& net, const TrainingCase& c, std::size_t* checked) {
  std::vector<double> grad(param_count(net));
  backprop_case(net, c, grad);
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t p = 0; p < grad.size(); ++p) {
    NetworkWeights plus = net, minus = net;
    param_ref(plus, p) += h;
    param_ref(minus, p) -= h;
    const double numeric = (case_loss(plus, c) - case_loss(minus, c)) / (2 * h);
    const double scale = std::max({std::abs(numeric), std::abs(grad[p]), 1e-6});
    worst = std::max(worst, std::abs(numeric - grad[p]) / scale);
  }
  *checked = grad.size();
  return worst;
}

std::vector<TrainingCase> mnist_slice(std::size_t begin, std::size_t n) {
  const auto& all = testing::mnist().cases;
  return {all.begin() + static_cast<std::ptrdiff_t>(begin), all.begin() + static_cast<std::ptrdiff_t>(begin + n)};
}

}  // namespace

TEST_CASE("network config validation") {
  NetworkConfig cfg;
  cfg.num_nodes = {784};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.num_nodes = {784, 0, 30};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.num_nodes = {784, 256, 64, 30};
  CHECK_NOTHROW(cfg.validate());
  cfg.mode = Mode::classifier;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.num_nodes = {784, 500, 500, 10};
  CHECK_NOTHROW(cfg.validate());
  cfg.num_nodes = {784, 10};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.num_nodes = {784, 500, 10};
  cfg.workers = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.workers = 1;
  cfg.hp.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("two-layer config is plain RBM training") {
  const auto cases = mnist_slice(0, 50);
  NetworkConfig cfg;
  cfg.num_nodes = {784, 20};
  cfg.max_epoch = 3;
  cfg.batch_size = 25;
  const auto net = pretrain(cases, cfg);
  REQUIRE(net.layers.size() == 1);

  rbm::AppliedUpdate state{rbm::randomize_weights(784, 20, rbm::mix_seed(cfg.seed, 0), 0), {}};
  for (std::size_t e = 1; e <= 3; ++e) state = rbm_epoch(cases, state.weights, state.velocity, cfg, e);
  CHECK(net.layers[0] == state.weights);
  CHECK(net.code_layer == 1);
}

TEST_CASE("pretraining a 784-256-64-30 stack") {
  const auto cases = mnist_slice(0, 1000);
  NetworkConfig cfg;
  cfg.num_nodes = {784, 256, 64, 30};
  cfg.max_epoch = 3;
  std::vector<double> layer1;
  std::size_t stored = 0;
  PretrainHooks hooks;
  hooks.on_epoch = [&](const RbmEpochReport& r) {
    CHECK(std::isfinite(r.train_mse));
    if (r.layer == 0) layer1.push_back(r.train_mse);
  };
  hooks.on_layer = [&](const rbm::LayerWeights& lw) { CHECK(lw.layer == stored++); };
  const auto net = pretrain(cases, cfg, hooks);
  CHECK(stored == 3);
  REQUIRE(layer1.size() == 3);
  CHECK(layer1[2] < layer1[0]);
  CHECK_NOTHROW(net.check_chain());
  CHECK(net.code_size() == 30);
}

TEST_CASE("pretraining does not depend on the worker count") {
  const auto cases = mnist_slice(100, 120);
  NetworkConfig cfg;
  cfg.num_nodes = {784, 32, 8};
  cfg.max_epoch = 2;
  cfg.batch_size = 40;
  const auto one = pretrain(cases, cfg);
  cfg.workers = 4;
  CHECK(pretrain(cases, cfg) == one);
}

TEST_CASE("classifier pre-training stops below the output layer") {
  const auto cases = mnist_slice(0, 40);
  NetworkConfig cfg;
  cfg.mode = Mode::classifier;
  cfg.num_nodes = {784, 16, 8, 10};
  cfg.max_epoch = 1;
  const auto stack = pretrain(cases, cfg);
  CHECK(stack.layers.size() == 2);
  const auto net = attach_classifier_head(stack, 10, 3);
  CHECK(net.layers.size() == 3);
  CHECK(net.activations.back() == Activation::softmax);
  CHECK(net.output_size() == 10);
  CHECK_THROWS_AS(attach_classifier_head(net, 10, 3), ConfigError);
}

TEST_CASE("linear code layer") {
  const auto cases = mnist_slice(0, 40);
  NetworkConfig cfg;
  cfg.num_nodes = {784, 16, 4};
  cfg.max_epoch = 1;
  cfg.linear_code = true;
  const auto net = pretrain(cases, cfg);
  CHECK(net.activations[0] == Activation::logistic);
  CHECK(net.activations[1] == Activation::linear);
  const auto code = encode(unroll(net), cases[0].pixels);
  CHECK(code.size() == 4);
}

TEST_CASE("propagation job") {
  std::mt19937_64 rng(6);
  std::vector<TrainingCase> cases;
  for (std::size_t i = 0; i < 30; ++i) cases.push_back({100 - i, testing::random_vector(7, rng), static_cast<int>(i % 10)});

  const rbm::LayerWeights zero{0, 7, 3, Matrix(7, 3), Vector(7), Vector(3)};
  for (const auto& c : propagate(cases, zero, Activation::logistic, 3)) CHECK(c.pixels == Vector(3, 0.5));

  const auto lw = rbm::randomize_weights(7, 5, 2);
  const auto reference = propagate(cases, lw, Activation::logistic, 1);
  for (std::size_t workers : {2u, 4u, 8u}) {
    const auto out = propagate(cases, lw, Activation::logistic, workers);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i].pixels == reference[i].pixels);
  }
  for (std::size_t i = 0; i < cases.size(); ++i) {
    REQUIRE(reference[i].pixels.size() == 5);
    CHECK(reference[i].case_id == cases[i].case_id);
    CHECK(reference[i].label == cases[i].label);
    Matrix pre = matmul(Matrix::row_vector(cases[i].pixels), lw.w);
    for (std::size_t j = 0; j < 5; ++j) pre(0, j) += lw.hbias[j];
    const Matrix oracle = sigmoid_map(pre);
    for (std::size_t j = 0; j < 5; ++j) CHECK(reference[i].pixels[j] == oracle(0, j));
  }
}

TEST_CASE("propagation reducer and mapper errors") {
  std::mt19937_64 rng(1);
  const auto lw = rbm::randomize_weights(4, 2, 1);
  std::vector<TrainingCase> cases{{1, testing::random_vector(4, rng), {}}, {1, testing::random_vector(4, rng), {}}};
  CHECK_THROWS_AS(builtin_engine().run_job(make_prop_job(cases, lw, Activation::logistic, 1)), JobError);

  cases[1].case_id = 2;
  cases[1].pixels = Vector{0.5, 0.5};
  try {
    builtin_engine().run_job(make_prop_job(cases, lw, Activation::logistic, 2));
    FAIL("expected JobError");
  } catch (const JobError& e) {
    CHECK(e.record_index() == 1);
  }
}

TEST_CASE("unroll") {
  std::mt19937_64 rng(2);
  NetworkWeights enc;
  enc.layers = {random_layer(12, 6, 0, rng), random_layer(6, 4, 1, rng), random_layer(4, 3, 2, rng)};
  enc.activations = {Activation::logistic, Activation::logistic, Activation::logistic};
  enc.code_layer = 3;
  const auto net = unroll(enc);
  REQUIRE(net.layers.size() == 6);
  CHECK(net.unrolled());
  CHECK(net.output_size() == 12);
  CHECK(net.layers[3].w == transpose(enc.layers[2].w));
  CHECK(net.layers[5].hbias == enc.layers[0].vbias);
  CHECK_THROWS_AS(unroll(net), ConfigError);

  // decode(encode(x)) is the stacked up-down pass of the RBMs.
  const Vector x = testing::random_vector(12, rng);
  Vector up = x;
  for (const auto& lw : enc.layers) up = rbm::hidden_activation(up, lw, rbm::HiddenUnits::logistic);
  CHECK(encode(net, x) == up);
  Vector down = up;
  for (std::size_t l = enc.layers.size(); l-- > 0;) down = rbm::visible_activation(down, enc.layers[l]);
  CHECK(decode(net, encode(net, x)) == down);
  CHECK(reconstruct(net, x).size() == x.size());

  NetworkConfig cfg;
  cfg.num_nodes = {784, 256, 64, 30};
  cfg.max_epoch = 0;
  const auto full = unroll(pretrain(mnist_slice(0, 2), cfg));
  std::vector<std::size_t> dims{full.input_size()};
  for (const auto& lw : full.layers) dims.push_back(lw.num_hid);
  CHECK(dims == std::vector<std::size_t>{784, 256, 64, 30, 64, 256, 784});
}

TEST_CASE("chain check") {
  std::mt19937_64 rng(2);
  NetworkWeights net;
  net.layers = {random_layer(5, 4, 0, rng), random_layer(3, 2, 1, rng)};
  net.activations = {Activation::logistic, Activation::logistic};
  CHECK_THROWS_AS(net.check_chain(), IntegrityError);
  net.layers[1] = random_layer(4, 2, 1, rng);
  CHECK_NOTHROW(net.check_chain());
  net.layers[1].w(0, 0) = std::nan("");
  CHECK_THROWS_AS(net.check_chain(), IntegrityError);
}

TEST_CASE("backprop matches central differences") {
  std::mt19937_64 rng(31);
  std::size_t checked = 0;
  SUBCASE("6-4-2-4-6 autoencoder") {
    const auto net = toy_autoencoder(rng);
    for (int trial = 0; trial < 3; ++trial) {
      const TrainingCase c{0, testing::random_vector(6, rng), std::nullopt};
      CHECK(gradient_check(net, c, &checked) <= 1e-4);
    }
    CHECK(checked == 24 + 4 + 8 + 2 + 8 + 4 + 24 + 6);
  }
  SUBCASE("6-4-3 classifier") {
    const auto net = toy_classifier(rng);
    for (int label = 0; label < 3; ++label) {
      const TrainingCase c{0, testing::random_vector(6, rng), label};
      CHECK(gradient_check(net, c, &checked) <= 1e-4);
    }
    CHECK(checked == 24 + 4 + 12 + 3);
  }
  SUBCASE("linear code layer") {
    auto net = toy_autoencoder(rng);
    net.activations[1] = Activation::linear;
    const TrainingCase c{0, testing::random_vector(6, rng), std::nullopt};
    CHECK(gradient_check(net, c, &checked) <= 1e-4);
  }
}

TEST_CASE("backprop job sums per-case gradients and ignores the worker count") {
  std::mt19937_64 rng(4);
  const auto net = toy_autoencoder(rng);
  std::vector<TrainingCase> batch;
  for (std::size_t i = 0; i < 23; ++i) batch.push_back({i, testing::random_vector(6, rng), std::nullopt});
  std::vector<double> oracle(param_count(net), 0.0), g(param_count(net));
  for (const auto& c : batch) {
    backprop_case(net, c, g);
    for (std::size_t p = 0; p < g.size(); ++p) oracle[p] += g[p];
  }
  for (std::size_t workers : {1u, 2u, 4u, 8u}) CHECK(run_backprop_job(batch, net, workers).output == oracle);
}

TEST_CASE("finetune") {
  std::mt19937_64 rng(4);
  const auto net = toy_autoencoder(rng);
  std::vector<TrainingCase> data;
  for (std::size_t i = 0; i < 40; ++i) data.push_back({i, testing::random_vector(6, rng), std::nullopt});
  NetworkConfig cfg;
  cfg.num_nodes = {6, 4, 2};
  cfg.finetune_epochs = 3;
  cfg.batch_size = 10;
  cfg.finetune_lr = 0.0;
  CHECK(finetune(net, data, cfg) == net);

  cfg.finetune_lr = 0.1;
  std::vector<std::size_t> seen;
  const auto tuned = finetune(net, data, cfg, [&](std::size_t e, const NetworkWeights&) { seen.push_back(e); });
  CHECK(seen == std::vector<std::size_t>{1, 2, 3});
  cfg.workers = 3;
  CHECK(finetune(net, data, cfg) == tuned);

  NetworkWeights encoder = net;
  encoder.layers.resize(2);
  encoder.activations.resize(2);
  CHECK_THROWS_AS(finetune(encoder, data, cfg), ConfigError);
}

TEST_CASE("training loss mostly falls epoch over epoch") {
  const auto data = mnist_slice(0, 500);
  NetworkConfig cfg;
  cfg.num_nodes = {784, 64, 16};
  cfg.max_epoch = 2;
  cfg.finetune_epochs = 1;
  auto net = unroll(pretrain(data, cfg));
  auto mean_loss = [&](const NetworkWeights& w) {
    double s = 0.0;
    for (const auto& c : data) s += case_loss(w, c);
    return s / static_cast<double>(data.size());
  };
  double prev = mean_loss(net);
  int falls = 0;
  for (int epoch = 0; epoch < 10; ++epoch) {
    net = finetune(net, data, cfg);
    const double cur = mean_loss(net);
    if (cur <= prev) ++falls;
    prev = cur;
  }
  CHECK(falls >= 8);
}

TEST_CASE("inference helpers") {
  std::mt19937_64 rng(8);
  const auto cls = toy_classifier(rng);
  for (int i = 0; i < 20; ++i) {
    const auto [digit, probs] = classify(cls, testing::random_vector(6, rng));
    const double sum = std::accumulate(probs.values().begin(), probs.values().end(), 0.0);
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    CHECK(probs[static_cast<std::size_t>(digit)] == *std::max_element(probs.values().begin(), probs.values().end()));
  }
  const auto ae = toy_autoencoder(rng);
  const Vector x = testing::random_vector(6, rng);
  CHECK(encode(ae, x).size() == 2);
  const Vector r = decode(ae, encode(ae, x));
  CHECK(r.size() == 6);
  for (double v : r.values()) CHECK((v >= 0.0 && v <= 1.0));
  CHECK_THROWS_AS(classify(ae, x), ConfigError);
  CHECK_THROWS_AS(encode(cls, x), ConfigError);
  CHECK_THROWS_AS(decode(ae, x), ShapeError);

  std::vector<TrainingCase> labelled{{0, x, classify(cls, x).first}, {1, x, (classify(cls, x).first + 1) % 3}};
  CHECK(misclassified(cls, labelled) == 1);
}

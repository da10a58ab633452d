#include "mrdl/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "mrdl/codec.hpp"
#include "mrdl/error.hpp"
#include "mrdl/serve.hpp"

namespace mrdl::cli {

namespace {

namespace fs = std::filesystem;
using codec::format_real;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view text) {
  std::vector<std::size_t> out;
  std::string token;
  auto flush = [&] {
    const std::string t = trim(token);
    if (t.empty()) throw ConfigError(std::string(key) + ": empty list entry");
    out.push_back(codec::parse_uint(t));
    token.clear();
  };
  for (char ch : text) {
    if (ch == ',' || ch == '-') {
      flush();
    } else {
      token.push_back(ch);
    }
  }
  flush();
  return out;
}

bool parse_bool(std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw FormatError("not a boolean: '" + std::string(text) + "'", 0);
}

using Setter = std::function<void(RunConfig&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  using namespace deepnet;
  static const std::map<std::string, Setter, std::less<>> table = {
      {"mode",
       [](RunConfig& c, std::string_view v) {
         if (v == "autoencoder") {
           c.network.mode = Mode::autoencoder;
         } else if (v == "classifier") {
           c.network.mode = Mode::classifier;
         } else {
           throw FormatError("expected 'autoencoder' or 'classifier'", 0);
         }
       }},
      {"num_nodes", [](RunConfig& c, std::string_view v) { c.network.num_nodes = parse_list("num_nodes", v); }},
      {"max_epoch", [](RunConfig& c, std::string_view v) { c.network.max_epoch = codec::parse_uint(v); }},
      {"finetune_epochs",
       [](RunConfig& c, std::string_view v) { c.network.finetune_epochs = codec::parse_uint(v); }},
      {"batch_size", [](RunConfig& c, std::string_view v) { c.network.batch_size = codec::parse_uint(v); }},
      {"seed", [](RunConfig& c, std::string_view v) { c.network.seed = codec::parse_uint(v); }},
      {"workers", [](RunConfig& c, std::string_view v) { c.network.workers = codec::parse_uint(v); }},
      {"learning_rate",
       [](RunConfig& c, std::string_view v) { c.network.hp.learning_rate = codec::parse_real(v); }},
      {"momentum", [](RunConfig& c, std::string_view v) { c.network.hp.momentum = codec::parse_real(v); }},
      {"final_momentum",
       [](RunConfig& c, std::string_view v) { c.network.hp.final_momentum = codec::parse_real(v); }},
      {"momentum_switch_epoch",
       [](RunConfig& c, std::string_view v) { c.network.hp.momentum_switch_epoch = codec::parse_uint(v); }},
      {"weight_decay", [](RunConfig& c, std::string_view v) { c.network.hp.weight_decay = codec::parse_real(v); }},
      {"cd_steps", [](RunConfig& c, std::string_view v) { c.network.hp.cd_steps = codec::parse_uint(v); }},
      {"finetune_lr", [](RunConfig& c, std::string_view v) { c.network.finetune_lr = codec::parse_real(v); }},
      {"linear_code", [](RunConfig& c, std::string_view v) { c.network.linear_code = parse_bool(v); }},
      {"linear_code_lr",
       [](RunConfig& c, std::string_view v) { c.network.linear_code_lr = codec::parse_real(v); }},
      {"num_classes", [](RunConfig& c, std::string_view v) { c.network.num_classes = codec::parse_uint(v); }},
      {"train_images", [](RunConfig& c, std::string_view v) { c.train_images = std::string(v); }},
      {"train_labels", [](RunConfig& c, std::string_view v) { c.train_labels = std::string(v); }},
      {"test_images", [](RunConfig& c, std::string_view v) { c.test_images = std::string(v); }},
      {"test_labels", [](RunConfig& c, std::string_view v) { c.test_labels = std::string(v); }},
      {"holdout", [](RunConfig& c, std::string_view v) { c.holdout = codec::parse_uint(v); }},
      {"train_size", [](RunConfig& c, std::string_view v) { c.train_size = codec::parse_uint(v); }},
      {"test_size", [](RunConfig& c, std::string_view v) { c.test_size = codec::parse_uint(v); }},
      {"subset_seed", [](RunConfig& c, std::string_view v) { c.subset_seed = codec::parse_uint(v); }},
      {"binarize", [](RunConfig& c, std::string_view v) { c.binarize = parse_bool(v); }},
      {"out_dir", [](RunConfig& c, std::string_view v) { c.out_dir = std::string(v); }},
      {"init_weights", [](RunConfig& c, std::string_view v) { c.init_weights = std::string(v); }},
      {"bench_workers", [](RunConfig& c, std::string_view v) { c.bench_workers = parse_list("bench_workers", v); }},
      {"bench_epochs", [](RunConfig& c, std::string_view v) { c.bench_epochs = codec::parse_uint(v); }},
  };
  return table;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

data::Dataset load_set(const fs::path& images, const fs::path& labels) {
  if (labels.empty()) return data::load_idx(images);
  return data::load_idx(images, labels);
}

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create " + cfg.out_dir.string() + ": " + ec.message());
}

deepnet::NetworkWeights pretrain_with_log(const RunConfig& cfg, const Datasets& ds, std::ostream& log) {
  std::string csv = "epoch,layer,train_mse,test_mse\n";
  std::size_t stored = 0;
  deepnet::NetworkWeights partial;
  partial.mode = cfg.network.mode;

  deepnet::PretrainHooks hooks;
  hooks.held_out = ds.test.cases;
  hooks.on_epoch = [&](const deepnet::RbmEpochReport& r) {
    csv += std::to_string(r.epoch) + "," + std::to_string(r.layer + 1) + "," + format_real(r.train_mse) + "," +
           format_real(r.test_mse) + "\n";
    log << "pretrain layer " << r.layer + 1 << " epoch " << r.epoch << " train_mse " << r.train_mse
        << " test_mse " << r.test_mse << "\n";
  };
  hooks.on_layer = [&](const rbm::LayerWeights& lw) {
    partial.layers.push_back(lw);
    partial.activations.push_back(cfg.network.linear_code && cfg.network.mode == deepnet::Mode::autoencoder &&
                                          lw.layer + 2 == cfg.network.num_layers()
                                      ? deepnet::Activation::linear
                                      : deepnet::Activation::logistic);
    partial.code_layer = partial.layers.size();
    data::save_weights(cfg.out_dir / ("layer" + std::to_string(++stored) + ".weights"), partial,
                       data::summarize(cfg.network));
  };
  auto stack = deepnet::pretrain(ds.train.cases, cfg.network, hooks);
  write_file(cfg.out_dir / "pretrain.csv", csv);
  data::save_weights(cfg.out_dir / "pretrained.weights", stack, data::summarize(cfg.network));
  return stack;
}

int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const IoError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const RangeError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "runtime failure: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace

RunConfig default_config() {
  RunConfig cfg;
  cfg.network.num_nodes = {784, 256, 64, 30};
  return cfg;
}

void RunConfig::validate() const {
  try {
    network.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("network: ") + e.what());
  }
  if (train_images.empty()) throw ConfigError("train_images: required");
  if (test_images.empty() && !test_labels.empty()) throw ConfigError("test_labels: set without test_images");
  if (network.mode == deepnet::Mode::classifier && train_labels.empty()) {
    throw ConfigError("train_labels: required in classifier mode");
  }
  if (!test_images.empty() && holdout != 0) throw ConfigError("holdout: cannot combine with test_images");
  if (bench_workers.empty()) throw ConfigError("bench_workers: need at least one entry");
  for (std::size_t w : bench_workers) {
    if (w == 0) throw ConfigError("bench_workers: entries must be >= 1");
  }
  if (bench_epochs == 0) throw ConfigError("bench_epochs: must be >= 1");
  if (out_dir.empty()) throw ConfigError("out_dir: required");
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  try {
    it->second(cfg, value);
  } catch (const FormatError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

void apply_config_text(RunConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_setting(cfg, trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
  }
}

RunConfig load_config(const fs::path& file, const std::vector<std::string>& overrides) {
  RunConfig cfg = default_config();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config file " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(cfg, ss.str());
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    apply_setting(cfg, trim(std::string_view(o).substr(0, eq)), trim(std::string_view(o).substr(eq + 1)));
  }
  return cfg;
}

Datasets load_datasets(const RunConfig& cfg) {
  data::Dataset pool = load_set(cfg.train_images, cfg.train_labels);
  data::Dataset test_pool;
  if (!cfg.test_images.empty()) {
    test_pool = load_set(cfg.test_images, cfg.test_labels);
  } else {
    if (cfg.holdout >= pool.size() && cfg.holdout != 0) throw RangeError("holdout leaves no training cases");
    test_pool = data::slice(pool, pool.size() - cfg.holdout, pool.size());
    pool = data::slice(pool, 0, pool.size() - cfg.holdout);
  }
  Datasets ds;
  ds.train = cfg.train_size == 0 ? pool : data::subset(pool, cfg.train_size, cfg.subset_seed);
  ds.test = cfg.test_size == 0 ? test_pool : data::subset(test_pool, cfg.test_size, cfg.subset_seed + 1);
  if (cfg.binarize) {
    ds.train = data::binarize(ds.train, cfg.network.seed);
    ds.test = data::binarize(ds.test, cfg.network.seed + 1);
  }
  const std::size_t inputs = cfg.network.num_nodes.front();
  for (const auto* set : {&ds.train, &ds.test}) {
    if (!set->cases.empty() && set->cases.front().pixels.size() != inputs) {
      throw ConfigError("num_nodes: input layer " + std::to_string(inputs) + " does not match image size " +
                        std::to_string(set->cases.front().pixels.size()));
    }
  }
  if (ds.train.cases.empty()) throw RangeError("no training cases");
  return ds;
}

int cmd_pretrain(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Datasets ds = load_datasets(cfg);
  ensure_out_dir(cfg);
  const auto stack = pretrain_with_log(cfg, ds, log);
  log << "wrote " << (cfg.out_dir / "pretrained.weights").string() << " (" << stack.layers.size() << " layers)\n";
  return kOk;
}

int cmd_finetune(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Datasets ds = load_datasets(cfg);
  ensure_out_dir(cfg);

  deepnet::NetworkWeights net;
  if (!cfg.init_weights.empty()) {
    net = data::load_weights(cfg.init_weights);
  } else {
    net = pretrain_with_log(cfg, ds, log);
  }
  if (cfg.network.mode == deepnet::Mode::autoencoder) {
    if (net.mode != deepnet::Mode::autoencoder) throw ConfigError("init_weights: not an autoencoder stack");
    if (!net.unrolled()) net = deepnet::unroll(net);
  } else if (net.mode != deepnet::Mode::classifier || net.activations.back() != deepnet::Activation::softmax) {
    net = deepnet::attach_classifier_head(net, cfg.network.num_classes, rbm::mix_seed(cfg.network.seed, 0x48454144));
  }

  const bool classifier = cfg.network.mode == deepnet::Mode::classifier;
  std::string csv = classifier ? "epoch,train_misclassified,test_misclassified\n" : "epoch,train_mse,test_mse\n";
  const auto observe = [&](std::size_t epoch, const deepnet::NetworkWeights& w) {
    if (classifier) {
      const auto tr = deepnet::misclassified(w, ds.train.cases);
      const auto te = deepnet::misclassified(w, ds.test.cases);
      csv += std::to_string(epoch) + "," + std::to_string(tr) + "," + std::to_string(te) + "\n";
      log << "finetune epoch " << epoch << " train_misclassified " << tr << " test_misclassified " << te << "\n";
    } else {
      const double tr = deepnet::reconstruction_mse(w, ds.train.cases);
      const double te = deepnet::reconstruction_mse(w, ds.test.cases);
      csv += std::to_string(epoch) + "," + format_real(tr) + "," + format_real(te) + "\n";
      log << "finetune epoch " << epoch << " train_mse " << tr << " test_mse " << te << "\n";
    }
  };
  const auto tuned = deepnet::finetune(net, ds.train.cases, cfg.network, observe);
  write_file(cfg.out_dir / "finetune.csv", csv);
  data::save_weights(cfg.out_dir / "finetuned.weights", tuned, data::summarize(cfg.network));
  log << "wrote " << (cfg.out_dir / "finetuned.weights").string() << "\n";
  return kOk;
}

BenchReport run_bench(const RunConfig& cfg, const Datasets& ds) {
  BenchReport report;
  std::string reference;
  for (std::size_t workers : cfg.bench_workers) {
    deepnet::NetworkConfig net = cfg.network;
    net.workers = workers;
    net.max_epoch = cfg.bench_epochs;
    const auto t0 = std::chrono::steady_clock::now();
    const auto stack = deepnet::pretrain(ds.train.cases, net);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::string bytes = data::serialize_weights(stack, data::summarize(cfg.network));
    if (reference.empty()) {
      reference = bytes;
    } else if (bytes != reference) {
      report.identical = false;
    }
    report.rows.push_back({workers, wall, 0.0});
  }
  for (auto& row : report.rows) row.speedup = report.rows.front().wall_time / row.wall_time;
  return report;
}

int cmd_bench(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Datasets ds = load_datasets(cfg);
  ensure_out_dir(cfg);
  const BenchReport report = run_bench(cfg, ds);
  std::string csv = "workers,wall_time,speedup\n";
  for (const auto& r : report.rows) {
    csv += std::to_string(r.workers) + "," + format_real(r.wall_time) + "," + format_real(r.speedup) + "\n";
    log << "workers " << r.workers << " wall_time " << r.wall_time << " s speedup " << r.speedup << "\n";
  }
  write_file(cfg.out_dir / "bench.csv", csv);
  if (!report.identical) {
    log << "weights differ across worker counts\n";
    return kRuntimeError;
  }
  log << "weights bit-identical across the sweep\n";
  return kOk;
}

int cmd_eval(const fs::path& weights, const fs::path& images, const fs::path& labels, std::size_t subset_size,
             std::uint64_t seed, std::ostream& out) {
  const auto net = data::load_weights(weights);
  data::Dataset ds = load_set(images, labels);
  if (subset_size != 0) ds = data::subset(ds, subset_size, seed);
  out << "cases " << ds.size() << "\n";
  if (net.mode == deepnet::Mode::classifier) {
    const std::size_t wrong = deepnet::misclassified(net, ds.cases);
    out << "misclassified " << wrong << "\n";
    out << "accuracy " << format_real(1.0 - static_cast<double>(wrong) / static_cast<double>(ds.size())) << "\n";
  } else {
    out << "mse " << format_real(deepnet::reconstruction_mse(net, ds.cases)) << "\n";
  }
  return kOk;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"map/reduce deep belief network trainer"};
  app.require_subcommand(1);

  fs::path config_file;
  std::vector<std::string> overrides;
  std::string out_dir;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_file, "key=value config file");
    sub->add_option("-s,--set", overrides, "override one config key (key=value)");
    sub->add_option("-o,--out", out_dir, "output directory");
  };
  auto* pre = app.add_subcommand("pretrain", "layer-wise RBM pre-training");
  auto* fine = app.add_subcommand("finetune", "backprop fine-tuning (pre-trains first unless init_weights is set)");
  auto* bench = app.add_subcommand("bench", "time one pre-training workload at several worker counts");
  for (auto* sub : {pre, fine, bench}) add_common(sub);

  auto* eval = app.add_subcommand("eval", "evaluate a weight file on a dataset");
  fs::path eval_weights, eval_images, eval_labels;
  std::size_t eval_subset = 0;
  std::uint64_t eval_seed = 7;
  eval->add_option("-w,--weights", eval_weights)->required();
  eval->add_option("--images", eval_images)->required();
  eval->add_option("--labels", eval_labels);
  eval->add_option("--subset", eval_subset, "evaluate on a stratified subset of this size");
  eval->add_option("--seed", eval_seed);

  auto* srv = app.add_subcommand("serve", "demo HTTP service");
  serve::ServeOptions sopts;
  std::string cls_weights, ae_weights, static_dir;
  srv->add_option("--host", sopts.host);
  srv->add_option("--port", sopts.port);
  srv->add_option("--classifier-weights", cls_weights);
  srv->add_option("--autoencoder-weights", ae_weights);
  srv->add_option("--static-dir", static_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  return guarded(
      [&]() -> int {
        if (*eval) return cmd_eval(eval_weights, eval_images, eval_labels, eval_subset, eval_seed, std::cout);
        if (*srv) {
          if (!cls_weights.empty()) sopts.classifier_weights = cls_weights;
          if (!ae_weights.empty()) sopts.autoencoder_weights = ae_weights;
          if (!static_dir.empty()) sopts.static_dir = static_dir;
          if (!sopts.classifier_weights && !sopts.autoencoder_weights) {
            throw ConfigError("serve: pass --classifier-weights and/or --autoencoder-weights");
          }
          return serve::run_server(sopts) ? kOk : kRuntimeError;
        }
        RunConfig cfg = load_config(config_file, overrides);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (*pre) return cmd_pretrain(cfg, std::cerr);
        if (*fine) return cmd_finetune(cfg, std::cerr);
        return cmd_bench(cfg, std::cerr);
      },
      std::cerr);
}

}  // namespace mrdl::cli

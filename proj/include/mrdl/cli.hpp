#pragma once

// Operator commands. Configs are flat key=value files; every command checks
// the whole config before loading data or starting a job.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "mrdl/data.hpp"
#include "mrdl/deepnet.hpp"

namespace mrdl::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kDataError = 2, kRuntimeError = 3 };

struct RunConfig {
  deepnet::NetworkConfig network;
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;  // empty: held-out cases come from the training file
  std::filesystem::path test_labels;
  std::size_t holdout = 0;     // cases reserved at the end of the training file as the test pool
  std::size_t train_size = 0;  // 0 = whole pool
  std::size_t test_size = 0;
  std::uint64_t subset_seed = 7;
  bool binarize = false;
  std::filesystem::path out_dir = "out";
  std::filesystem::path init_weights;  // finetune: start from this stack instead of pre-training
  std::vector<std::size_t> bench_workers{1, 2, 4};
  std::size_t bench_epochs = 1;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

RunConfig default_config();

/// Sets one field from its text form; throws ConfigError for unknown keys or
/// unparsable values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);
/// Applies "key = value" lines; '#' starts a comment.
void apply_config_text(RunConfig& cfg, std::string_view text);
RunConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

struct Datasets {
  data::Dataset train;
  data::Dataset test;
};

Datasets load_datasets(const RunConfig& cfg);

struct BenchRow {
  std::size_t workers = 0;
  double wall_time = 0.0;
  double speedup = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  bool identical = true;  // weights bit-identical across the sweep
};

/// The training workload of cmd_bench at every worker count.
BenchReport run_bench(const RunConfig& cfg, const Datasets& data);

int cmd_pretrain(const RunConfig& cfg, std::ostream& log);
int cmd_finetune(const RunConfig& cfg, std::ostream& log);
int cmd_bench(const RunConfig& cfg, std::ostream& log);
int cmd_eval(const std::filesystem::path& weights, const std::filesystem::path& images,
             const std::filesystem::path& labels, std::size_t subset_size, std::uint64_t seed, std::ostream& out);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv);

}  // namespace mrdl::cli

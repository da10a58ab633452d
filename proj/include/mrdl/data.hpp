#pragma once

// MNIST IDX ingestion, desk-scale subsets and the binary weight file.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mrdl/case.hpp"
#include "mrdl/deepnet.hpp"

namespace mrdl::data {

struct Dataset {
  std::vector<TrainingCase> cases;
  std::size_t image_rows = 28;
  std::size_t image_cols = 28;
  std::string source;

  std::size_t size() const noexcept { return cases.size(); }
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads IDX image (and optionally label) files, plain or gzip-compressed.
/// Pixels are scaled by 1/255; case ids are file positions. Throws IoError,
/// FormatError (with byte offset) or IntegrityError on a count mismatch.
Dataset load_idx(const std::filesystem::path& images,
                 const std::optional<std::filesystem::path>& labels = std::nullopt);

/// Parses already-decompressed IDX bytes.
Dataset parse_idx(std::string_view image_bytes, std::optional<std::string_view> label_bytes = std::nullopt);

/// Shuffled prefix of n cases. With labels, per-class counts follow the
/// source distribution (largest-remainder rounding). Throws RangeError if n
/// exceeds the case count.
Dataset subset(const Dataset& dataset, std::size_t n, std::uint64_t seed);

/// Cases [begin, end) in order.
Dataset slice(const Dataset& dataset, std::size_t begin, std::size_t end);

/// Each pixel replaced by a Bernoulli draw with that probability.
Dataset binarize(const Dataset& dataset, std::uint64_t seed);

// --- weight file --------------------------------------------------------------

inline constexpr std::string_view kWeightMagic = "MRDLNETW";
inline constexpr std::uint32_t kWeightVersion = 1;

/// Training settings echoed into the file header.
struct ConfigSummary {
  std::vector<std::size_t> num_nodes;
  std::uint64_t seed = 0;
  std::uint32_t max_epoch = 0;
  std::uint32_t finetune_epochs = 0;

  friend bool operator==(const ConfigSummary&, const ConfigSummary&) = default;
};

ConfigSummary summarize(const deepnet::NetworkConfig& cfg);

struct WeightFile {
  ConfigSummary config;
  deepnet::NetworkWeights weights;
};

std::string serialize_weights(const deepnet::NetworkWeights& weights, const ConfigSummary& config = {});
/// Throws TruncationError, ChecksumError, VersionError or FormatError.
WeightFile parse_weights(std::string_view bytes);

void save_weights(const std::filesystem::path& path, const deepnet::NetworkWeights& weights,
                  const ConfigSummary& config = {});
WeightFile read_weight_file(const std::filesystem::path& path);
deepnet::NetworkWeights load_weights(const std::filesystem::path& path);

}  // namespace mrdl::data

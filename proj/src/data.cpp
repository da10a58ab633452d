#include "mrdl/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "mrdl/codec.hpp"
#include "mrdl/error.hpp"
#include "mrdl/rbm.hpp"

namespace mrdl::data {

namespace {

// gzread passes uncompressed files through unchanged.
std::string read_maybe_gzip(const std::filesystem::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open " + path.string());
  std::string out;
  char buf[1 << 16];
  for (;;) {
    const int n = gzread(f, buf, sizeof buf);
    if (n < 0) {
      int errnum = 0;
      std::string msg = gzerror(f, &errnum);
      gzclose(f);
      throw FormatError("corrupt compressed stream in " + path.string() + ": " + msg, out.size());
    }
    if (n == 0) break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  gzclose(f);
  return out;
}

std::uint32_t be32(std::string_view bytes, std::size_t at) {
  if (bytes.size() < at + 4) throw TruncationError("IDX header truncated", bytes.size());
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
  return v;
}

}  // namespace

Dataset parse_idx(std::string_view image_bytes, std::optional<std::string_view> label_bytes) {
  if (be32(image_bytes, 0) != kIdxImagesMagic) throw FormatError("bad IDX image magic", 0);
  const std::size_t count = be32(image_bytes, 4);
  const std::size_t rows = be32(image_bytes, 8);
  const std::size_t cols = be32(image_bytes, 12);
  const std::size_t pixels = rows * cols;
  constexpr std::size_t header = 16;
  if (image_bytes.size() < header + count * pixels) {
    throw TruncationError("IDX image data truncated: header declares " + std::to_string(count) + " images",
                          image_bytes.size());
  }
  if (image_bytes.size() > header + count * pixels) {
    throw FormatError("trailing bytes after IDX image data", header + count * pixels);
  }

  std::vector<int> labels;
  if (label_bytes) {
    const std::string_view lb = *label_bytes;
    if (be32(lb, 0) != kIdxLabelsMagic) throw FormatError("bad IDX label magic", 0);
    const std::size_t n = be32(lb, 4);
    if (lb.size() < 8 + n) throw TruncationError("IDX label data truncated", lb.size());
    if (lb.size() > 8 + n) throw FormatError("trailing bytes after IDX label data", 8 + n);
    if (n != count) {
      throw IntegrityError("image count " + std::to_string(count) + " does not match label count " +
                           std::to_string(n));
    }
    labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<unsigned char>(lb[8 + i]);
      if (labels[i] > 9) throw FormatError("label out of range 0..9", 8 + i);
    }
  }

  Dataset ds;
  ds.image_rows = rows;
  ds.image_cols = cols;
  ds.cases.resize(count);
  for (std::size_t c = 0; c < count; ++c) {
    auto& tc = ds.cases[c];
    tc.case_id = c;
    tc.pixels = Vector(pixels);
    const char* src = image_bytes.data() + header + c * pixels;
    for (std::size_t p = 0; p < pixels; ++p) tc.pixels[p] = static_cast<unsigned char>(src[p]) / 255.0;
    if (!labels.empty()) tc.label = labels[c];
  }
  return ds;
}

Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels) {
  const std::string img = read_maybe_gzip(images);
  Dataset ds;
  if (labels) {
    const std::string lab = read_maybe_gzip(*labels);
    ds = parse_idx(img, std::string_view(lab));
  } else {
    ds = parse_idx(img);
  }
  ds.source = images.string();
  return ds;
}

Dataset subset(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
  if (n > dataset.size()) {
    throw RangeError("subset of " + std::to_string(n) + " requested from " + std::to_string(dataset.size()) +
                     " cases");
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 gen(seed);
  std::shuffle(order.begin(), order.end(), gen);

  std::vector<std::size_t> chosen;
  const bool labeled = std::all_of(dataset.cases.begin(), dataset.cases.end(),
                                   [](const TrainingCase& c) { return c.label.has_value(); });
  if (!labeled || dataset.cases.empty()) {
    chosen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
  } else {
    std::map<int, std::size_t> counts;
    for (const auto& c : dataset.cases) ++counts[*c.label];
    // Largest-remainder apportionment of n across classes.
    std::map<int, std::size_t> quota;
    std::vector<std::pair<double, int>> remainders;
    std::size_t assigned = 0;
    for (auto [label, count] : counts) {
      const double exact = static_cast<double>(n) * static_cast<double>(count) / static_cast<double>(dataset.size());
      quota[label] = static_cast<std::size_t>(std::floor(exact));
      assigned += quota[label];
      remainders.emplace_back(exact - std::floor(exact), label);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++quota[remainders[k].second];
    for (std::size_t idx : order) {
      auto& q = quota[*dataset.cases[idx].label];
      if (q > 0) {
        --q;
        chosen.push_back(idx);
      }
    }
  }

  Dataset out;
  out.image_rows = dataset.image_rows;
  out.image_cols = dataset.image_cols;
  out.source = dataset.source;
  out.cases.reserve(n);
  for (std::size_t idx : chosen) out.cases.push_back(dataset.cases[idx]);
  return out;
}

Dataset slice(const Dataset& dataset, std::size_t begin, std::size_t end) {
  if (begin > end || end > dataset.size()) throw RangeError("slice out of range");
  Dataset out = dataset;
  out.cases.assign(dataset.cases.begin() + static_cast<std::ptrdiff_t>(begin),
                   dataset.cases.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

Dataset binarize(const Dataset& dataset, std::uint64_t seed) {
  Dataset out = dataset;
  for (auto& c : out.cases) {
    rbm::CaseRng rng(seed, c.case_id);
    for (double& x : c.pixels.values()) x = rng.bernoulli(x);
  }
  return out;
}

// --- weight file --------------------------------------------------------------

ConfigSummary summarize(const deepnet::NetworkConfig& cfg) {
  return {cfg.num_nodes, cfg.seed, static_cast<std::uint32_t>(cfg.max_epoch),
          static_cast<std::uint32_t>(cfg.finetune_epochs)};
}

std::string serialize_weights(const deepnet::NetworkWeights& weights, const ConfigSummary& config) {
  weights.check_chain();
  codec::ByteWriter w;
  w.bytes(kWeightMagic);
  w.u32(kWeightVersion);
  w.u64(0);  // file length, patched below
  w.u32(static_cast<std::uint32_t>(weights.mode));
  w.u32(static_cast<std::uint32_t>(weights.code_layer));
  w.u64(config.seed);
  w.u32(config.max_epoch);
  w.u32(config.finetune_epochs);
  w.u32(static_cast<std::uint32_t>(config.num_nodes.size()));
  for (std::size_t n : config.num_nodes) w.u32(static_cast<std::uint32_t>(n));
  w.u32(static_cast<std::uint32_t>(weights.layers.size()));
  for (std::size_t l = 0; l < weights.layers.size(); ++l) {
    const auto& lw = weights.layers[l];
    w.u32(static_cast<std::uint32_t>(lw.layer));
    w.u32(static_cast<std::uint32_t>(lw.num_vis));
    w.u32(static_cast<std::uint32_t>(lw.num_hid));
    w.u32(static_cast<std::uint32_t>(weights.activations[l]));
    w.f64s(lw.w.values());
    w.f64s(lw.vbias.values());
    w.f64s(lw.hbias.values());
  }
  std::string bytes = w.take();
  const std::uint64_t total = bytes.size() + 4;
  for (std::size_t i = 0; i < 8; ++i) bytes[12 + i] = static_cast<char>((total >> (8 * i)) & 0xFF);
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
  codec::ByteWriter tail;
  tail.u32(crc);
  return bytes + tail.str();
}

WeightFile parse_weights(std::string_view bytes) {
  constexpr std::size_t kFixedHeader = 20;
  if (bytes.size() < kWeightMagic.size()) throw TruncationError("weight file shorter than its magic", bytes.size());
  if (bytes.substr(0, kWeightMagic.size()) != kWeightMagic) throw FormatError("not a weight file (bad magic)", 0);
  if (bytes.size() < kFixedHeader + 4) throw TruncationError("weight file header truncated", bytes.size());

  codec::ByteReader head(bytes.substr(8, 12));
  const std::uint32_t version = head.u32();
  const std::uint64_t declared = head.u64();
  if (bytes.size() < declared) {
    throw TruncationError("weight file truncated: " + std::to_string(bytes.size()) + " of " +
                              std::to_string(declared) + " bytes",
                          bytes.size());
  }
  if (bytes.size() > declared) throw ChecksumError("weight file has trailing bytes", declared);

  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  const auto expected = codec::ByteReader(bytes.substr(bytes.size() - 4)).u32();
  const auto actual = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
  if (expected != actual) throw ChecksumError("weight file checksum mismatch", bytes.size() - 4);
  if (version != kWeightVersion) {
    throw VersionError("weight file version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kWeightVersion) + ")",
                       8);
  }

  codec::ByteReader r(body);
  r.take(kFixedHeader);
  WeightFile wf;
  const std::uint32_t mode = r.u32();
  if (mode > 1) throw FormatError("unknown network mode", r.position() - 4);
  wf.weights.mode = static_cast<deepnet::Mode>(mode);
  wf.weights.code_layer = r.u32();
  wf.config.seed = r.u64();
  wf.config.max_epoch = r.u32();
  wf.config.finetune_epochs = r.u32();
  const std::uint32_t nodes = r.u32();
  for (std::uint32_t i = 0; i < nodes; ++i) wf.config.num_nodes.push_back(r.u32());
  const std::uint32_t layers = r.u32();
  for (std::uint32_t l = 0; l < layers; ++l) {
    rbm::LayerWeights lw;
    lw.layer = r.u32();
    lw.num_vis = r.u32();
    lw.num_hid = r.u32();
    const std::uint32_t act = r.u32();
    if (act > 2) throw FormatError("unknown activation", r.position() - 4);
    if (r.remaining() < 8 * lw.param_count()) throw TruncationError("layer data truncated", r.position());
    lw.w = Matrix(lw.num_vis, lw.num_hid);
    lw.vbias = Vector(lw.num_vis);
    lw.hbias = Vector(lw.num_hid);
    r.f64s(lw.w.values());
    r.f64s(lw.vbias.values());
    r.f64s(lw.hbias.values());
    wf.weights.layers.push_back(std::move(lw));
    wf.weights.activations.push_back(static_cast<deepnet::Activation>(act));
  }
  if (r.remaining() != 0) throw FormatError("unexpected bytes after last layer", r.position());
  wf.weights.check_chain();
  return wf;
}

void save_weights(const std::filesystem::path& path, const deepnet::NetworkWeights& weights,
                  const ConfigSummary& config) {
  const std::string bytes = serialize_weights(weights, config);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

WeightFile read_weight_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_weights(bytes);
}

deepnet::NetworkWeights load_weights(const std::filesystem::path& path) { return read_weight_file(path).weights; }

}  // namespace mrdl::data

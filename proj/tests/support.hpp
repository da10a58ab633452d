#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "mrdl/data.hpp"
#include "mrdl/linalg.hpp"

namespace testing {

inline std::filesystem::path mnist_dir() {
  if (const char* env = std::getenv("MRDL_MNIST_DIR")) return env;
  return MRDL_MNIST_DIR;
}

inline std::filesystem::path mnist_images() { return mnist_dir() / "mnist10k-images-idx3-ubyte.gz"; }
inline std::filesystem::path mnist_labels() { return mnist_dir() / "mnist10k-labels-idx1-ubyte.gz"; }

/// The bundled 10k digits, loaded once per process.
inline const mrdl::data::Dataset& mnist() {
  static const mrdl::data::Dataset ds = mrdl::data::load_idx(mnist_images(), mnist_labels());
  return ds;
}

inline mrdl::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = dist(rng);
  return mrdl::Matrix(rows, cols, std::move(v));
}

inline mrdl::Vector random_vector(std::size_t n, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return mrdl::Vector(std::move(v));
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("mrdl-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing

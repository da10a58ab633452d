#pragma once

// HTTP demo service: recognize / encode / decode hand-drawn digits with
// weight files produced by the CLI. Handlers are plain functions of the
// request body so they can be exercised without a socket.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "mrdl/deepnet.hpp"

namespace httplib {
class Server;
}

namespace mrdl::serve {

struct Response {
  int status = 200;
  std::string body;  // JSON
};

class DemoService {
 public:
  DemoService(std::optional<deepnet::NetworkWeights> classifier, std::optional<deepnet::NetworkWeights> autoencoder);

  /// {"pixels": [784 numbers]} -> {"digit", "probabilities"}
  Response recognize(std::string_view body) const;
  /// {"pixels": [...]} -> {"code", "code_size", "compression_ratio"}
  Response encode(std::string_view body) const;
  /// {"code": [...]} -> {"pixels", "rows", "cols"}
  Response decode(std::string_view body) const;
  Response health() const;

 private:
  std::optional<deepnet::NetworkWeights> classifier_;
  std::optional<deepnet::NetworkWeights> autoencoder_;
};

inline constexpr std::size_t kCanvasPixels = 28 * 28;

/// Registers the /api routes and, if given, serves `static_dir` at "/".
/// `service` must outlive the server.
void mount(httplib::Server& server, const DemoService& service,
           const std::optional<std::filesystem::path>& static_dir = std::nullopt);

struct ServeOptions {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::optional<std::filesystem::path> classifier_weights;
  std::optional<std::filesystem::path> autoencoder_weights;
  std::optional<std::filesystem::path> static_dir;
};

/// Loads the weight files and blocks serving requests. Returns false if the
/// socket could not be bound.
bool run_server(const ServeOptions& options);

}  // namespace mrdl::serve

#include "mrdl/serve.hpp"

#include <httplib.h>

#include <algorithm>
#include <iostream>
#include <json.hpp>

#include "mrdl/data.hpp"
#include "mrdl/error.hpp"

namespace mrdl::serve {

namespace {

using nlohmann::json;

struct BadRequest : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Response error(int status, const std::string& message) { return {status, json{{"error", message}}.dump()}; }

Response ok(const json& j) { return {200, j.dump()}; }

std::vector<double> number_array(std::string_view body, const char* field, std::size_t expected) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw BadRequest("body is not a JSON object");
  auto it = j.find(field);
  if (it == j.end() || !it->is_array()) throw BadRequest(std::string("missing array field '") + field + "'");
  if (it->size() != expected) {
    throw BadRequest(std::string("'") + field + "' must have " + std::to_string(expected) + " entries, got " +
                     std::to_string(it->size()));
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& v : *it) {
    if (!v.is_number()) throw BadRequest(std::string("'") + field + "' must contain only numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

Vector canvas(std::string_view body) {
  auto px = number_array(body, "pixels", kCanvasPixels);
  for (double& x : px) x = std::clamp(x, 0.0, 1.0);
  return Vector(std::move(px));
}

}  // namespace

DemoService::DemoService(std::optional<deepnet::NetworkWeights> classifier,
                         std::optional<deepnet::NetworkWeights> autoencoder)
    : classifier_(std::move(classifier)), autoencoder_(std::move(autoencoder)) {
  if (classifier_) {
    classifier_->check_chain();
    if (classifier_->mode != deepnet::Mode::classifier || classifier_->input_size() != kCanvasPixels) {
      throw ConfigError("classifier weights must be a 784-input classifier");
    }
  }
  if (autoencoder_) {
    autoencoder_->check_chain();
    if (!autoencoder_->unrolled() || autoencoder_->input_size() != kCanvasPixels) {
      throw ConfigError("autoencoder weights must be an unrolled 784-input autoencoder");
    }
  }
}

Response DemoService::recognize(std::string_view body) const {
  if (!classifier_) return error(503, "classifier weights not loaded");
  try {
    const auto [digit, probs] = deepnet::classify(*classifier_, canvas(body));
    return ok({{"digit", digit}, {"probabilities", probs.raw()}});
  } catch (const BadRequest& e) {
    return error(400, e.what());
  }
}

Response DemoService::encode(std::string_view body) const {
  if (!autoencoder_) return error(503, "autoencoder weights not loaded");
  try {
    const Vector code = deepnet::encode(*autoencoder_, canvas(body));
    return ok({{"code", code.raw()},
               {"code_size", code.size()},
               {"compression_ratio", static_cast<double>(code.size()) / static_cast<double>(kCanvasPixels)}});
  } catch (const BadRequest& e) {
    return error(400, e.what());
  }
}

Response DemoService::decode(std::string_view body) const {
  if (!autoencoder_) return error(503, "autoencoder weights not loaded");
  try {
    const Vector code(number_array(body, "code", autoencoder_->code_size()));
    const Vector px = deepnet::decode(*autoencoder_, code);
    return ok({{"pixels", px.raw()}, {"rows", 28}, {"cols", 28}});
  } catch (const BadRequest& e) {
    return error(400, e.what());
  }
}

Response DemoService::health() const {
  return ok({{"status", "ok"},
             {"models", {{"classifier", classifier_.has_value()}, {"autoencoder", autoencoder_.has_value()}}},
             {"code_size", autoencoder_ ? autoencoder_->code_size() : 0}});
}

void mount(httplib::Server& server, const DemoService& service,
           const std::optional<std::filesystem::path>& static_dir) {
  auto reply = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server.Post("/api/recognize", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.recognize(req.body));
  });
  server.Post("/api/encode", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.encode(req.body));
  });
  server.Post("/api/decode", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.decode(req.body));
  });
  server.Get("/api/health",
             [&service, reply](const httplib::Request&, httplib::Response& res) { reply(res, service.health()); });
  if (static_dir) server.set_mount_point("/", static_dir->string());
}

bool run_server(const ServeOptions& options) {
  std::optional<deepnet::NetworkWeights> classifier;
  std::optional<deepnet::NetworkWeights> autoencoder;
  if (options.classifier_weights) classifier = data::load_weights(*options.classifier_weights);
  if (options.autoencoder_weights) autoencoder = data::load_weights(*options.autoencoder_weights);
  const DemoService service(std::move(classifier), std::move(autoencoder));

  httplib::Server server;
  mount(server, service, options.static_dir);
  std::cerr << "serving on " << options.host << ":" << options.port << "\n";
  return server.listen(options.host, options.port);
}

}  // namespace mrdl::serve

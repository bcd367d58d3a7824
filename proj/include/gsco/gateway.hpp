#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "gsco/backend.hpp"
#include "gsco/error.hpp"

namespace gsco {

struct RemoteConfig {
  std::string endpoint;
  double timeout_secs = 30.0;
  int retries = 1;       // retries on transport errors only
  int concurrency_cap = 4;
};

namespace detail {

// Bounds in-flight requests per backend.
class ConcurrencyGate {
 public:
  explicit ConcurrencyGate(int cap) : available_(cap > 0 ? cap : 1) {}

  struct Guard {
    explicit Guard(ConcurrencyGate& gate) : gate_(gate) {
      std::unique_lock<std::mutex> lock(gate_.mutex_);
      gate_.cv_.wait(lock, [&] { return gate_.available_ > 0; });
      --gate_.available_;
    }
    ~Guard() {
      {
        std::lock_guard<std::mutex> lock(gate_.mutex_);
        ++gate_.available_;
      }
      gate_.cv_.notify_one();
    }
    ConcurrencyGate& gate_;
  };

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int available_;
};

// Splits "http://host:port/base" into the host part httplib wants and an
// optional path prefix prepended to every route.
inline std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const std::size_t scheme = endpoint.find("://");
  const std::size_t slash =
      scheme == std::string::npos ? endpoint.find('/') : endpoint.find('/', scheme + 3);
  if (slash == std::string::npos) {
    return {endpoint, ""};
  }
  std::string prefix = endpoint.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {endpoint.substr(0, slash), prefix};
}

// One POST exchange. Transport failures are retried up to cfg.retries times;
// protocol failures (bad status, bad body) are deterministic and are not.
inline std::pair<nlohmann::json, std::int64_t> post_json(const RemoteConfig& cfg,
                                                         ConcurrencyGate& gate,
                                                         const std::string& path,
                                                         const nlohmann::json& body) {
  ConcurrencyGate::Guard guard(gate);
  const auto [host, prefix] = split_endpoint(cfg.endpoint);
  const std::string route = prefix + path;
  const std::string payload = body.dump();
  const auto started = std::chrono::steady_clock::now();
  std::string last_transport_error;
  for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
    httplib::Client client(host);
    const auto secs = static_cast<time_t>(cfg.timeout_secs);
    const auto usecs = static_cast<time_t>((cfg.timeout_secs - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    auto result = client.Post(route, payload, "application/json");
    if (!result) {
      last_transport_error = httplib::to_string(result.error());
      continue;
    }
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - started)
                             .count();
    if (result->status != 200) {
      throw ProtocolError("POST " + cfg.endpoint + path + " returned status " +
                          std::to_string(result->status));
    }
    try {
      return {nlohmann::json::parse(result->body), elapsed};
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError("POST " + cfg.endpoint + path + " returned unparseable body: " +
                          e.what());
    }
  }
  throw BackendError("POST " + cfg.endpoint + path + " failed after " +
                     std::to_string(cfg.retries + 1) + " attempts: " + last_transport_error);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Remote backends speaking the JSON-over-HTTP wire protocol:
//   POST /v1/generate {"image_ref", "prompt"}     -> {"text"}
//   POST /v1/predict  {"image_ref", "label_set"}  -> {"labels", "scores"?}
//   POST /v1/embed    {"image_ref"}               -> {"vector"}
// ---------------------------------------------------------------------------

class HttpGenerateBackend final : public GenerateBackend {
 public:
  HttpGenerateBackend(std::string id, RemoteConfig cfg)
      : GenerateBackend(std::move(id)), cfg_(std::move(cfg)), gate_(cfg_.concurrency_cap) {}

  bool is_remote() const override { return true; }

 protected:
  std::pair<std::string, std::int64_t> fetch(const std::string& image_ref,
                                             const std::string& prompt) override {
    nlohmann::json body;
    body["image_ref"] = image_ref;
    body["prompt"] = prompt;
    auto [response, latency] = detail::post_json(cfg_, gate_, "/v1/generate", body);
    if (!response.is_object() || !response.contains("text") || !response["text"].is_string()) {
      throw ProtocolError("backend \"" + id() + "\": response is missing \"text\"");
    }
    return {response["text"].get<std::string>(), latency};
  }

 private:
  RemoteConfig cfg_;
  detail::ConcurrencyGate gate_;
};

class HttpPredictBackend final : public PredictBackend {
 public:
  HttpPredictBackend(std::string id, RemoteConfig cfg)
      : PredictBackend(std::move(id)), cfg_(std::move(cfg)), gate_(cfg_.concurrency_cap) {}

  bool is_remote() const override { return true; }

 protected:
  std::pair<RawPrediction, std::int64_t> fetch(const std::string& image_ref,
                                               const LabelSet& labels) override {
    nlohmann::json body;
    body["image_ref"] = image_ref;
    body["label_set"] = labels.labels();
    auto [response, latency] = detail::post_json(cfg_, gate_, "/v1/predict", body);
    if (!response.is_object() || !response.contains("labels") || !response["labels"].is_array()) {
      throw ProtocolError("backend \"" + id() + "\": response is missing \"labels\"");
    }
    RawPrediction raw;
    raw.labels = response["labels"].get<std::vector<std::string>>();
    if (response.contains("scores")) {
      if (!response["scores"].is_array()) {
        throw ProtocolError("backend \"" + id() + "\": \"scores\" is not an array");
      }
      raw.scores = response["scores"].get<std::vector<double>>();
    }
    return {std::move(raw), latency};
  }

 private:
  RemoteConfig cfg_;
  detail::ConcurrencyGate gate_;
};

class HttpEmbedBackend final : public EmbedBackend {
 public:
  HttpEmbedBackend(std::string id, std::size_t dimension, RemoteConfig cfg)
      : EmbedBackend(std::move(id), dimension), cfg_(std::move(cfg)),
        gate_(cfg_.concurrency_cap) {}

  bool is_remote() const override { return true; }

 protected:
  std::pair<EmbeddingVector, std::int64_t> fetch(const std::string& image_ref) override {
    nlohmann::json body;
    body["image_ref"] = image_ref;
    auto [response, latency] = detail::post_json(cfg_, gate_, "/v1/embed", body);
    if (!response.is_object() || !response.contains("vector") || !response["vector"].is_array()) {
      throw ProtocolError("backend \"" + id() + "\": response is missing \"vector\"");
    }
    EmbeddingVector vector;
    vector.reserve(response["vector"].size());
    for (const auto& v : response["vector"]) {
      if (!v.is_number()) {
        throw ProtocolError("backend \"" + id() + "\": non-numeric embedding value");
      }
      vector.push_back(v.get<float>());
    }
    return {std::move(vector), latency};
  }

 private:
  RemoteConfig cfg_;
  detail::ConcurrencyGate gate_;
};

// ---------------------------------------------------------------------------
// Backend configuration file
// ---------------------------------------------------------------------------

// The resolved set of model endpoints one run talks to.
struct BackendSet {
  std::shared_ptr<GenerateBackend> generate;
  std::shared_ptr<EmbedBackend> embed;
  std::vector<std::shared_ptr<PredictBackend>> specialists;  // registration order
  AuditLogPtr audit = std::make_shared<AuditLog>();
};

namespace detail {

inline RemoteConfig remote_config_from_json(const nlohmann::json& spec) {
  RemoteConfig cfg;
  if (!spec.contains("endpoint") || !spec["endpoint"].is_string()) {
    throw ValidationError("remote backend needs an \"endpoint\" URL");
  }
  cfg.endpoint = spec["endpoint"].get<std::string>();
  if (cfg.endpoint.rfind("http://", 0) != 0 && cfg.endpoint.rfind("https://", 0) != 0) {
    throw ValidationError("endpoint \"" + cfg.endpoint + "\" is not an absolute URL");
  }
  if (spec.contains("timeout_secs")) cfg.timeout_secs = spec["timeout_secs"].get<double>();
  if (spec.contains("retries")) cfg.retries = spec["retries"].get<int>();
  if (spec.contains("concurrency_cap")) cfg.concurrency_cap = spec["concurrency_cap"].get<int>();
  if (const char* env = std::getenv("GSCO_HTTP_TIMEOUT_SECS")) {
    cfg.timeout_secs = std::strtod(env, nullptr);
  }
  if (!(cfg.timeout_secs > 0.0)) {
    throw ValidationError("timeout_secs must be > 0");
  }
  return cfg;
}

}  // namespace detail

// Builds the backend set from a JSON document of the form
//   {"backends": [...], "roles": {"generate": id, "embed": id,
//    "specialists": [id...]}}
// Stub tables are keyed by image_ref; remote backends carry endpoint/timeout/
// retry settings. GSCO_HTTP_TIMEOUT_SECS overrides every remote timeout.
inline BackendSet backend_set_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("backends") || !doc["backends"].is_array()) {
    throw ValidationError("backends file needs a top-level \"backends\" array");
  }
  BackendSet set;
  std::map<std::string, std::shared_ptr<GenerateBackend>> generators;
  std::map<std::string, std::shared_ptr<EmbedBackend>> embedders;
  std::map<std::string, std::shared_ptr<PredictBackend>> predictors;

  for (const auto& spec : doc["backends"]) {
    if (!spec.is_object() || !spec.contains("id") || !spec.contains("capability") ||
        !spec.contains("transport")) {
      throw ValidationError("each backend needs \"id\", \"capability\" and \"transport\"");
    }
    const std::string id = spec["id"].get<std::string>();
    auto capability = capability_from_string(spec["capability"].get<std::string>());
    if (!capability) {
      throw ValidationError("backend \"" + id + "\": unknown capability \"" +
                            spec["capability"].get<std::string>() + "\"");
    }
    const std::string transport = spec["transport"].get<std::string>();
    const bool is_stub = transport == "stub";
    if (!is_stub && transport != "remote") {
      throw ValidationError("backend \"" + id + "\": unknown transport \"" + transport + "\"");
    }
    if (is_stub && (!spec.contains("table") || !spec["table"].is_object())) {
      throw ValidationError("stub backend \"" + id + "\" needs a \"table\" object");
    }

    switch (*capability) {
      case Capability::Generate: {
        if (is_stub) {
          std::map<std::string, std::string> table;
          for (const auto& [key, value] : spec["table"].items()) {
            table[key] = value.get<std::string>();
          }
          generators[id] = std::make_shared<StubGenerateBackend>(id, std::move(table));
        } else {
          generators[id] =
              std::make_shared<HttpGenerateBackend>(id, detail::remote_config_from_json(spec));
        }
        break;
      }
      case Capability::Predict: {
        if (is_stub) {
          std::map<std::string, PredictBackend::RawPrediction> table;
          for (const auto& [key, value] : spec["table"].items()) {
            PredictBackend::RawPrediction raw;
            if (!value.is_object() || !value.contains("labels")) {
              throw ValidationError("stub \"" + id + "\" entry \"" + key +
                                    "\" needs a \"labels\" array");
            }
            raw.labels = value["labels"].get<std::vector<std::string>>();
            if (value.contains("scores")) {
              raw.scores = value["scores"].get<std::vector<double>>();
            }
            table[key] = std::move(raw);
          }
          predictors[id] = std::make_shared<StubPredictBackend>(id, std::move(table));
        } else {
          predictors[id] =
              std::make_shared<HttpPredictBackend>(id, detail::remote_config_from_json(spec));
        }
        break;
      }
      case Capability::Embed: {
        if (!spec.contains("dimension") || !spec["dimension"].is_number_unsigned()) {
          throw ValidationError("embed backend \"" + id + "\" needs a declared \"dimension\"");
        }
        const auto dimension = spec["dimension"].get<std::size_t>();
        if (is_stub) {
          std::map<std::string, EmbeddingVector> table;
          for (const auto& [key, value] : spec["table"].items()) {
            table[key] = value.get<EmbeddingVector>();
          }
          embedders[id] = std::make_shared<StubEmbedBackend>(id, dimension, std::move(table));
        } else {
          embedders[id] = std::make_shared<HttpEmbedBackend>(
              id, dimension, detail::remote_config_from_json(spec));
        }
        break;
      }
    }
  }

  if (doc.contains("roles")) {
    const auto& roles = doc["roles"];
    if (roles.contains("generate")) {
      const std::string id = roles["generate"].get<std::string>();
      auto it = generators.find(id);
      if (it == generators.end()) {
        throw ValidationError("roles.generate names unknown backend \"" + id + "\"");
      }
      set.generate = it->second;
    }
    if (roles.contains("embed")) {
      const std::string id = roles["embed"].get<std::string>();
      auto it = embedders.find(id);
      if (it == embedders.end()) {
        throw ValidationError("roles.embed names unknown backend \"" + id + "\"");
      }
      set.embed = it->second;
    }
    if (roles.contains("specialists")) {
      for (const auto& entry : roles["specialists"]) {
        const std::string id = entry.get<std::string>();
        auto it = predictors.find(id);
        if (it == predictors.end()) {
          throw ValidationError("roles.specialists names unknown backend \"" + id + "\"");
        }
        set.specialists.push_back(it->second);
      }
    }
  }

  if (set.generate) set.generate->attach_audit(set.audit);
  if (set.embed) set.embed->attach_audit(set.audit);
  for (auto& specialist : set.specialists) specialist->attach_audit(set.audit);
  return set;
}

inline BackendSet load_backend_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw StorageError("cannot read backends file \"" + path + "\"");
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("backends file \"" + path + "\" is not valid JSON: " + e.what());
  }
  return backend_set_from_json(doc);
}

}  // namespace gsco

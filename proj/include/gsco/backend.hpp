#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gsco/domain.hpp"
#include "gsco/error.hpp"
#include "gsco/vector_index.hpp"

namespace gsco {

enum class Capability { Generate, Predict, Embed };

inline std::string_view to_string(Capability cap) {
  switch (cap) {
    case Capability::Generate: return "generate";
    case Capability::Predict: return "predict";
    case Capability::Embed: return "embed";
  }
  return "unknown";
}

inline std::optional<Capability> capability_from_string(std::string_view name) {
  if (name == "generate") return Capability::Generate;
  if (name == "predict") return Capability::Predict;
  if (name == "embed") return Capability::Embed;
  return std::nullopt;
}

// One request/response exchange, kept for post-run inspection. latency_ms is
// the wire time of remote calls; in-process stubs report 0.
struct AuditRecord {
  std::string backend_id;
  Capability capability = Capability::Generate;
  std::string image_ref;
  std::string request;  // prompt for generate, empty otherwise
  std::int64_t latency_ms = 0;
};

class AuditLog {
 public:
  void append(AuditRecord record) {
    std::lock_guard<std::mutex> lock(mutex_);
    records_.push_back(std::move(record));
  }
  std::vector<AuditRecord> snapshot() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return records_;
  }

 private:
  mutable std::mutex mutex_;
  std::vector<AuditRecord> records_;
};

using AuditLogPtr = std::shared_ptr<AuditLog>;

// ---------------------------------------------------------------------------
// Capability interfaces. Response validation is uniform across transports:
// out-of-vocabulary labels, out-of-range scores, non-finite or wrong-length
// embeddings are protocol errors regardless of where the answer came from.
// ---------------------------------------------------------------------------

class GenerateBackend {
 public:
  explicit GenerateBackend(std::string id) : id_(std::move(id)) {}
  virtual ~GenerateBackend() = default;

  const std::string& id() const { return id_; }
  virtual bool is_remote() const { return false; }

  std::string generate(const std::string& image_ref, const std::string& prompt) {
    auto [text, latency] = fetch(image_ref, prompt);
    if (audit_) audit_->append({id_, Capability::Generate, image_ref, prompt, latency});
    return text;
  }

  void attach_audit(AuditLogPtr audit) { audit_ = std::move(audit); }

 protected:
  virtual std::pair<std::string, std::int64_t> fetch(const std::string& image_ref,
                                                     const std::string& prompt) = 0;

 private:
  std::string id_;
  AuditLogPtr audit_;
};

class PredictBackend {
 public:
  explicit PredictBackend(std::string id) : id_(std::move(id)) {}
  virtual ~PredictBackend() = default;

  const std::string& id() const { return id_; }
  virtual bool is_remote() const { return false; }

  struct RawPrediction {
    std::vector<std::string> labels;
    std::optional<std::vector<double>> scores;
  };

  SpecialistPrediction predict(const std::string& image_ref, const LabelSet& labels) {
    auto [raw, latency] = fetch(image_ref, labels);
    SpecialistPrediction prediction;
    prediction.specialist_id = id_;
    for (const auto& label : raw.labels) {
      auto idx = labels.find(label);
      if (!idx) {
        throw ProtocolError("backend \"" + id_ + "\" answered label \"" + label +
                            "\" outside the label set");
      }
      prediction.labels.push_back(*idx);
    }
    if (raw.scores) {
      if (raw.scores->size() != raw.labels.size()) {
        throw ProtocolError("backend \"" + id_ + "\" returned " +
                            std::to_string(raw.scores->size()) + " scores for " +
                            std::to_string(raw.labels.size()) + " labels");
      }
      for (double s : *raw.scores) {
        if (!(s >= 0.0 && s <= 1.0)) {
          throw ProtocolError("backend \"" + id_ + "\" score " + std::to_string(s) +
                              " outside [0,1]");
        }
      }
      prediction.scores = std::move(raw.scores);
    }
    if (audit_) audit_->append({id_, Capability::Predict, image_ref, "", latency});
    return prediction;
  }

  void attach_audit(AuditLogPtr audit) { audit_ = std::move(audit); }

 protected:
  virtual std::pair<RawPrediction, std::int64_t> fetch(const std::string& image_ref,
                                                       const LabelSet& labels) = 0;

 private:
  std::string id_;
  AuditLogPtr audit_;
};

class EmbedBackend {
 public:
  EmbedBackend(std::string id, std::size_t dimension) : id_(std::move(id)), dimension_(dimension) {}
  virtual ~EmbedBackend() = default;

  const std::string& id() const { return id_; }
  std::size_t dimension() const { return dimension_; }
  virtual bool is_remote() const { return false; }

  EmbeddingVector embed(const std::string& image_ref) {
    auto [vector, latency] = fetch(image_ref);
    if (vector.size() != dimension_) {
      throw ProtocolError("backend \"" + id_ + "\" returned dimension " +
                          std::to_string(vector.size()) + ", declared " +
                          std::to_string(dimension_));
    }
    for (float v : vector) {
      if (!std::isfinite(v)) {
        throw ProtocolError("backend \"" + id_ + "\" returned a non-finite embedding value");
      }
    }
    if (audit_) audit_->append({id_, Capability::Embed, image_ref, "", latency});
    return vector;
  }

  void attach_audit(AuditLogPtr audit) { audit_ = std::move(audit); }

 protected:
  virtual std::pair<EmbeddingVector, std::int64_t> fetch(const std::string& image_ref) = 0;

 private:
  std::string id_;
  std::size_t dimension_;
  AuditLogPtr audit_;
};

// ---------------------------------------------------------------------------
// Deterministic stubs: immutable lookup tables keyed by image_ref. Reads are
// lock-free; identical requests give identical answers across runs/threads.
// ---------------------------------------------------------------------------

class StubGenerateBackend final : public GenerateBackend {
 public:
  StubGenerateBackend(std::string id, std::map<std::string, std::string> table)
      : GenerateBackend(std::move(id)), table_(std::move(table)) {}

 protected:
  std::pair<std::string, std::int64_t> fetch(const std::string& image_ref,
                                             const std::string&) override {
    auto it = table_.find(image_ref);
    if (it == table_.end()) {
      throw BackendError("stub \"" + id() + "\" has no entry for \"" + image_ref + "\"");
    }
    return {it->second, 0};
  }

 private:
  const std::map<std::string, std::string> table_;
};

class StubPredictBackend final : public PredictBackend {
 public:
  StubPredictBackend(std::string id, std::map<std::string, RawPrediction> table)
      : PredictBackend(std::move(id)), table_(std::move(table)) {}

 protected:
  std::pair<RawPrediction, std::int64_t> fetch(const std::string& image_ref,
                                               const LabelSet&) override {
    auto it = table_.find(image_ref);
    if (it == table_.end()) {
      throw BackendError("stub \"" + id() + "\" has no entry for \"" + image_ref + "\"");
    }
    return {it->second, 0};
  }

 private:
  const std::map<std::string, RawPrediction> table_;
};

class StubEmbedBackend final : public EmbedBackend {
 public:
  StubEmbedBackend(std::string id, std::size_t dimension,
                   std::map<std::string, EmbeddingVector> table)
      : EmbedBackend(std::move(id), dimension), table_(std::move(table)) {}

 protected:
  std::pair<EmbeddingVector, std::int64_t> fetch(const std::string& image_ref) override {
    auto it = table_.find(image_ref);
    if (it == table_.end()) {
      throw BackendError("stub \"" + id() + "\" has no entry for \"" + image_ref + "\"");
    }
    return {it->second, 0};
  }

 private:
  const std::map<std::string, EmbeddingVector> table_;
};

// Function-backed stubs for tests that need behavior, not just tables.
class FnGenerateBackend final : public GenerateBackend {
 public:
  using Fn = std::function<std::string(const std::string&, const std::string&)>;
  FnGenerateBackend(std::string id, Fn fn) : GenerateBackend(std::move(id)), fn_(std::move(fn)) {}

 protected:
  std::pair<std::string, std::int64_t> fetch(const std::string& image_ref,
                                             const std::string& prompt) override {
    return {fn_(image_ref, prompt), 0};
  }

 private:
  Fn fn_;
};

class FnPredictBackend final : public PredictBackend {
 public:
  using Fn = std::function<RawPrediction(const std::string&, const LabelSet&)>;
  FnPredictBackend(std::string id, Fn fn) : PredictBackend(std::move(id)), fn_(std::move(fn)) {}

 protected:
  std::pair<RawPrediction, std::int64_t> fetch(const std::string& image_ref,
                                               const LabelSet& labels) override {
    return {fn_(image_ref, labels), 0};
  }

 private:
  Fn fn_;
};

// ---------------------------------------------------------------------------
// Parsing generator text into labels
// ---------------------------------------------------------------------------

// Fixed strategy order: exact normalized match, then substring containment
// over normalized text (unique hit, or the longest hit with earlier label
// index breaking equal lengths). Multilabel tasks keep every contained
// label. An empty result raises the parse warning instead of failing.
inline std::pair<std::vector<std::size_t>, bool> parse_prediction(std::string_view text,
                                                                  const LabelSet& labels,
                                                                  TaskKind task) {
  if (!is_classification(task)) {
    throw ValidationError("parse_prediction applies to classification tasks only");
  }
  if (auto exact = labels.find(text)) {
    return {{*exact}, false};
  }
  const std::string norm_text = normalize_label(text);
  std::vector<std::size_t> contained;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::string& norm_label = labels.normalized(i);
    if (!norm_label.empty() && norm_text.find(norm_label) != std::string::npos) {
      contained.push_back(i);
    }
  }
  if (contained.empty()) {
    return {{}, true};
  }
  if (task == TaskKind::ClsMultilabel) {
    return {contained, false};
  }
  std::size_t best = contained.front();
  for (std::size_t idx : contained) {
    if (labels.normalized(idx).size() > labels.normalized(best).size()) {
      best = idx;
    }
  }
  return {{best}, false};
}

}  // namespace gsco

#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gsco/domain.hpp"
#include "gsco/error.hpp"
#include "gsco/metrics.hpp"
#include "gsco/prompt.hpp"

namespace gsco {

// ---------------------------------------------------------------------------
// Dataset manifests (JSONL: one header object, then one object per sample)
// ---------------------------------------------------------------------------

struct DatasetManifest {
  std::string name;
  TaskKind task = TaskKind::ClsBinary;
  std::optional<LabelSet> label_set;  // classification tasks only
  std::vector<Sample> samples;

  const Sample* find_sample(const std::string& id) const {
    for (const auto& sample : samples) {
      if (sample.id == id) return &sample;
    }
    return nullptr;
  }
};

namespace detail {

inline nlohmann::json parse_jsonl_line(const std::string& line, std::size_t line_number) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), line_number);
  }
}

inline std::string require_string(const nlohmann::json& obj, const char* key,
                                  std::size_t line_number) {
  if (!obj.contains(key) || !obj[key].is_string()) {
    throw ParseError(std::string("missing string field \"") + key + "\"", line_number);
  }
  return obj[key].get<std::string>();
}

}  // namespace detail

namespace detail {

inline void read_manifest_header(DatasetManifest& manifest, const nlohmann::json& obj,
                                 std::size_t line_number) {
  manifest.name = require_string(obj, "name", line_number);
  const std::string task_name = require_string(obj, "task", line_number);
  auto task = task_kind_from_string(task_name);
  if (!task) {
    throw ParseError("unknown task kind \"" + task_name + "\"", line_number);
  }
  manifest.task = *task;
  if (is_classification(manifest.task)) {
    if (!obj.contains("label_set") || !obj["label_set"].is_array()) {
      throw ParseError("classification manifest needs a \"label_set\" array", line_number);
    }
    auto labels = obj["label_set"].get<std::vector<std::string>>();
    std::optional<std::size_t> negative;
    if (obj.contains("negative_label")) {
      const std::string neg = obj["negative_label"].get<std::string>();
      LabelSet probe(labels);
      negative = probe.find(neg);
      if (!negative) {
        throw ParseError("negative_label \"" + neg + "\" is not in the label set", line_number);
      }
    }
    try {
      manifest.label_set.emplace(std::move(labels), negative);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_number);
    }
  }
}

inline void read_manifest_sample(DatasetManifest& manifest, const nlohmann::json& obj,
                                 std::size_t line_number,
                                 std::map<std::string, std::size_t>& id_lines) {
  Sample sample;
  sample.id = require_string(obj, "id", line_number);
  sample.image_ref = require_string(obj, "image", line_number);
  sample.modality = require_string(obj, "modality", line_number);
  sample.task = manifest.task;

  auto [it, inserted] = id_lines.emplace(sample.id, line_number);
  if (!inserted) {
    throw DuplicateIdError("duplicate sample id \"" + sample.id + "\" (lines " +
                           std::to_string(it->second) + " and " + std::to_string(line_number) +
                           ")");
  }

  if (is_classification(manifest.task)) {
    if (!obj.contains("labels") || !obj["labels"].is_array()) {
      throw ValidationError("sample \"" + sample.id + "\" needs a \"labels\" array (line " +
                            std::to_string(line_number) + ")");
    }
    for (const auto& entry : obj["labels"]) {
      const std::string label = entry.get<std::string>();
      auto idx = manifest.label_set->find(label);
      if (!idx) {
        throw ValidationError("label \"" + label + "\" is not in the label set (line " +
                              std::to_string(line_number) + ")");
      }
      sample.truth_labels.push_back(*idx);
    }
    const bool single_label =
        manifest.task == TaskKind::ClsBinary || manifest.task == TaskKind::ClsMulticlass;
    if (single_label && sample.truth_labels.size() != 1) {
      throw ValidationError("sample \"" + sample.id + "\" needs exactly one truth label (line " +
                            std::to_string(line_number) + ")");
    }
  } else if (is_vqa(manifest.task)) {
    sample.question = require_string(obj, "question", line_number);
    sample.reference_text = require_string(obj, "answer", line_number);
  } else {
    sample.reference_text = require_string(obj, "report", line_number);
  }
  manifest.samples.push_back(std::move(sample));
}

}  // namespace detail

// Parses and fully validates a manifest. The header line declares the task
// and (for classification) the label vocabulary; every following line is one
// sample. All validation errors carry the offending line number.
inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw StorageError("cannot read manifest \"" + path + "\"");
  }

  DatasetManifest manifest;
  std::string line;
  std::size_t line_number = 0;
  bool header_seen = false;
  std::map<std::string, std::size_t> id_lines;

  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    nlohmann::json obj = detail::parse_jsonl_line(line, line_number);
    if (!obj.is_object()) {
      throw ParseError("expected a JSON object", line_number);
    }
    try {
      if (!header_seen) {
        detail::read_manifest_header(manifest, obj, line_number);
        header_seen = true;
      } else {
        detail::read_manifest_sample(manifest, obj, line_number, id_lines);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed field: ") + e.what(), line_number);
    }
  }

  if (!header_seen) {
    throw ParseError("manifest has no header line", 1);
  }
  return manifest;
}

inline void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw StorageError("cannot write manifest \"" + path + "\"");
  }
  nlohmann::json header;
  header["name"] = manifest.name;
  header["task"] = std::string(to_string(manifest.task));
  if (manifest.label_set) {
    header["label_set"] = manifest.label_set->labels();
    if (auto negative = manifest.label_set->negative_label()) {
      header["negative_label"] = manifest.label_set->display(*negative);
    }
  }
  out << header.dump() << '\n';
  for (const auto& sample : manifest.samples) {
    nlohmann::json obj;
    obj["id"] = sample.id;
    obj["image"] = sample.image_ref;
    obj["modality"] = sample.modality;
    if (is_classification(manifest.task)) {
      nlohmann::json labels = nlohmann::json::array();
      for (std::size_t idx : sample.truth_labels) {
        labels.push_back(manifest.label_set->display(idx));
      }
      obj["labels"] = std::move(labels);
    } else if (is_vqa(manifest.task)) {
      obj["question"] = sample.question.value_or("");
      obj["answer"] = sample.reference_text.value_or("");
    } else {
      obj["report"] = sample.reference_text.value_or("");
    }
    out << obj.dump() << '\n';
  }
  if (!out) {
    throw StorageError("write to \"" + path + "\" failed");
  }
}

// ---------------------------------------------------------------------------
// Report-writing prompt batches
// ---------------------------------------------------------------------------

struct DgbPrompt {
  std::string sample_id;
  std::string image_ref;
  std::string prompt;
};

struct DgbBatch {
  std::vector<DgbPrompt> prompts;
  std::vector<std::string> warnings;  // skipped samples, one message each
};

// One report-writing instruction per sample, binding the sample's modality
// and its verified diagnosis. Samples whose truth is not a single label are
// skipped with a warning; an empty multilabel truth falls back to the
// negative label when the vocabulary designates one.
inline DgbBatch build_dgb_prompts(const DatasetManifest& manifest, const PromptLibrary& prompts) {
  if (!is_classification(manifest.task) || !manifest.label_set) {
    throw ValidationError("diagnosis-guided prompts need a classification manifest");
  }
  DgbBatch batch;
  for (const auto& sample : manifest.samples) {
    std::optional<std::size_t> disease;
    if (sample.truth_labels.size() == 1) {
      disease = sample.truth_labels.front();
    } else if (sample.truth_labels.empty() && manifest.label_set->negative_label()) {
      disease = *manifest.label_set->negative_label();
    }
    if (!disease) {
      batch.warnings.push_back("sample \"" + sample.id + "\" skipped: " +
                               std::to_string(sample.truth_labels.size()) + " truth labels");
      continue;
    }
    PromptBindings bindings;
    bindings["Modality"] = sample.modality;
    bindings["Disease"] = manifest.label_set->display(*disease);
    batch.prompts.push_back({sample.id, sample.image_ref, prompts.render("DGB", bindings)});
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Run records
// ---------------------------------------------------------------------------

inline constexpr std::array<std::string_view, 6> kRunModes = {"gfm",  "specialist", "voting",
                                                              "moed", "rad",        "gsco"};

inline bool is_known_mode(std::string_view mode) {
  for (auto known : kRunModes) {
    if (mode == known) return true;
  }
  return false;
}

struct RunRecord {
  std::string sample_id;
  std::string mode;
  Diagnosis diagnosis;
  std::int64_t duration_ms = 0;  // wire time of the model call; 0 for stubs
};

inline nlohmann::json run_record_to_json(const RunRecord& record) {
  nlohmann::json obj;
  obj["sample_id"] = record.sample_id;
  obj["mode"] = record.mode;
  obj["duration_ms"] = record.duration_ms;
  nlohmann::json diag;
  diag["predicted_labels"] = record.diagnosis.predicted_labels;
  diag["generated_text"] = record.diagnosis.generated_text;
  diag["raw_text"] = record.diagnosis.raw_text;
  diag["parse_warning"] = record.diagnosis.parse_warning;
  if (record.diagnosis.context_moed) diag["context_moed"] = *record.diagnosis.context_moed;
  if (record.diagnosis.context_rad) diag["context_rad"] = *record.diagnosis.context_rad;
  obj["diagnosis"] = std::move(diag);
  return obj;
}

inline RunRecord run_record_from_json(const nlohmann::json& obj, std::size_t line_number) try {
  if (!obj.is_object() || !obj.contains("sample_id") || !obj.contains("mode") ||
      !obj.contains("diagnosis")) {
    throw ParseError("run record needs sample_id/mode/diagnosis", line_number);
  }
  RunRecord record;
  record.sample_id = obj["sample_id"].get<std::string>();
  record.mode = obj["mode"].get<std::string>();
  if (obj.contains("duration_ms")) record.duration_ms = obj["duration_ms"].get<std::int64_t>();
  const auto& diag = obj["diagnosis"];
  record.diagnosis.sample_id = record.sample_id;
  if (diag.contains("predicted_labels")) {
    record.diagnosis.predicted_labels = diag["predicted_labels"].get<std::vector<std::size_t>>();
  }
  if (diag.contains("generated_text")) {
    record.diagnosis.generated_text = diag["generated_text"].get<std::string>();
  }
  if (diag.contains("raw_text")) {
    record.diagnosis.raw_text = diag["raw_text"].get<std::string>();
  }
  if (diag.contains("parse_warning")) {
    record.diagnosis.parse_warning = diag["parse_warning"].get<bool>();
  }
  if (diag.contains("context_moed")) {
    record.diagnosis.context_moed = diag["context_moed"].get<std::string>();
  }
  if (diag.contains("context_rad")) {
    record.diagnosis.context_rad = diag["context_rad"].get<std::string>();
  }
  return record;
} catch (const nlohmann::json::exception& e) {
  throw ParseError(std::string("malformed run record: ") + e.what(), line_number);
}

inline void save_run_records(std::span<const RunRecord> records, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw StorageError("cannot write run records \"" + path + "\"");
  }
  for (const auto& record : records) {
    out << run_record_to_json(record).dump() << '\n';
  }
  if (!out) {
    throw StorageError("write to \"" + path + "\" failed");
  }
}

inline std::vector<RunRecord> load_run_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw StorageError("cannot read run records \"" + path + "\"");
  }
  std::vector<RunRecord> records;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    records.push_back(run_record_from_json(detail::parse_jsonl_line(line, line_number),
                                           line_number));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Evaluation reports
// ---------------------------------------------------------------------------

struct MetricEstimate {
  double point = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct EvalReport {
  std::string dataset;
  std::string mode;
  std::size_t n = 0;
  std::vector<std::pair<std::string, MetricEstimate>> metrics;
  std::uint64_t seed = 0;
  std::size_t bootstrap_samples = 0;
};

struct MetricConfig {
  std::uint64_t seed = 0;
  std::size_t bootstrap_samples = 1000;
};

namespace detail {

inline double mean_of(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

inline MetricEstimate mean_with_ci(std::span<const double> values, const MetricConfig& cfg) {
  BootstrapResult r = bootstrap_ci(values, [](std::span<const double> s) { return mean_of(s); },
                                   cfg.bootstrap_samples, cfg.seed);
  return {r.point, r.ci_low, r.ci_high};
}

struct LabelPair {
  std::vector<std::size_t> truth;
  std::vector<std::size_t> pred;
};

inline MetricEstimate f1_with_ci(std::span<const LabelPair> pairs, std::size_t num_classes,
                                 F1Mode mode, const MetricConfig& cfg) {
  auto statistic = [num_classes, mode](std::span<const LabelPair> s) {
    std::vector<std::vector<std::size_t>> truth, pred;
    truth.reserve(s.size());
    pred.reserve(s.size());
    for (const auto& pair : s) {
      truth.push_back(pair.truth);
      pred.push_back(pair.pred);
    }
    return aggregate_f1(truth, pred, num_classes, mode);
  };
  BootstrapResult r = bootstrap_ci(pairs, statistic, cfg.bootstrap_samples, cfg.seed);
  return {r.point, r.ci_low, r.ci_high};
}

}  // namespace detail

// Scores a finished run with the task's metric family and percentile
// bootstrap intervals. Every record must belong to the manifest and appear
// exactly once.
inline EvalReport compute_report(std::span<const RunRecord> records,
                                 const DatasetManifest& manifest, const MetricConfig& cfg) {
  if (records.empty()) {
    throw EmptyInputError("compute_report: no records");
  }
  EvalReport report;
  report.dataset = manifest.name;
  report.mode = records.front().mode;
  report.n = records.size();
  report.seed = cfg.seed;
  report.bootstrap_samples = cfg.bootstrap_samples;

  std::map<std::string, const Sample*> seen;
  for (const auto& record : records) {
    if (record.mode != report.mode) {
      throw ValidationError("records mix modes \"" + report.mode + "\" and \"" + record.mode +
                            "\"");
    }
    const Sample* sample = manifest.find_sample(record.sample_id);
    if (sample == nullptr) {
      throw ValidationError("record for unknown sample \"" + record.sample_id + "\"");
    }
    if (!seen.emplace(record.sample_id, sample).second) {
      throw ValidationError("sample \"" + record.sample_id + "\" appears more than once");
    }
  }

  switch (manifest.task) {
    case TaskKind::ClsBinary: {
      std::vector<double> correct;
      correct.reserve(records.size());
      for (const auto& record : records) {
        const Sample* sample = seen[record.sample_id];
        const bool hit = record.diagnosis.predicted_labels.size() == 1 &&
                         record.diagnosis.predicted_labels == sample->truth_labels;
        correct.push_back(hit ? 1.0 : 0.0);
      }
      report.metrics.emplace_back("accuracy", detail::mean_with_ci(correct, cfg));
      break;
    }
    case TaskKind::ClsMulticlass:
    case TaskKind::ClsMultilabel: {
      std::vector<detail::LabelPair> pairs;
      pairs.reserve(records.size());
      for (const auto& record : records) {
        pairs.push_back({seen[record.sample_id]->truth_labels,
                         record.diagnosis.predicted_labels});
      }
      const std::size_t num_classes = manifest.label_set->size();
      report.metrics.emplace_back("macro_f1",
                                  detail::f1_with_ci(pairs, num_classes, F1Mode::Macro, cfg));
      report.metrics.emplace_back("micro_f1",
                                  detail::f1_with_ci(pairs, num_classes, F1Mode::Micro, cfg));
      break;
    }
    case TaskKind::VqaClosed:
    case TaskKind::VqaOpen: {
      const bool closed = manifest.task == TaskKind::VqaClosed;
      std::vector<double> acc, recall, f1, bleu;
      for (const auto& record : records) {
        const Sample* sample = seen[record.sample_id];
        const std::string& ref = sample->reference_text.value_or("");
        VqaScore score = score_vqa_item(record.diagnosis.generated_text, ref, closed);
        acc.push_back(score.correct ? 1.0 : 0.0);
        recall.push_back(score.recall);
        f1.push_back(score.f1);
        bleu.push_back(bleu1(record.diagnosis.generated_text, ref).first);
      }
      report.metrics.emplace_back("accuracy", detail::mean_with_ci(acc, cfg));
      report.metrics.emplace_back("recall", detail::mean_with_ci(recall, cfg));
      report.metrics.emplace_back("f1", detail::mean_with_ci(f1, cfg));
      report.metrics.emplace_back("bleu1", detail::mean_with_ci(bleu, cfg));
      break;
    }
    case TaskKind::Mrg: {
      std::vector<double> bleu, r1, rl, meteor;
      for (const auto& record : records) {
        const Sample* sample = seen[record.sample_id];
        const std::string& ref = sample->reference_text.value_or("");
        const std::string& pred = record.diagnosis.generated_text;
        bleu.push_back(bleu1(pred, ref).first);
        r1.push_back(rouge1(pred, ref));
        rl.push_back(rouge_l(pred, ref).first);
        std::vector<std::string> gold = {ref}, hyp = {pred};
        meteor.push_back(meteor_lite(gold, hyp));
      }
      report.metrics.emplace_back("bleu1", detail::mean_with_ci(bleu, cfg));
      report.metrics.emplace_back("rouge1", detail::mean_with_ci(r1, cfg));
      report.metrics.emplace_back("rouge_l", detail::mean_with_ci(rl, cfg));
      report.metrics.emplace_back("meteor", detail::mean_with_ci(meteor, cfg));
      break;
    }
  }
  return report;
}

inline nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json obj;
  obj["dataset"] = report.dataset;
  obj["mode"] = report.mode;
  obj["n"] = report.n;
  obj["seed"] = report.seed;
  obj["B"] = report.bootstrap_samples;
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [name, estimate] : report.metrics) {
    metrics[name] = {{"point", estimate.point},
                     {"ci_low", estimate.ci_low},
                     {"ci_high", estimate.ci_high}};
  }
  obj["metrics"] = std::move(metrics);
  return obj;
}

inline EvalReport report_from_json(const nlohmann::json& obj) {
  EvalReport report;
  report.dataset = obj.at("dataset").get<std::string>();
  report.mode = obj.at("mode").get<std::string>();
  report.n = obj.at("n").get<std::size_t>();
  report.seed = obj.at("seed").get<std::uint64_t>();
  report.bootstrap_samples = obj.at("B").get<std::size_t>();
  for (const auto& [name, estimate] : obj.at("metrics").items()) {
    report.metrics.emplace_back(
        name, MetricEstimate{estimate.at("point").get<double>(),
                             estimate.at("ci_low").get<double>(),
                             estimate.at("ci_high").get<double>()});
  }
  return report;
}

// Plain-text table in the "estimate (ci_low, ci_high)" cell style.
inline std::string report_to_text(const EvalReport& report) {
  char buffer[128];
  std::string out = report.dataset + " | mode " + report.mode + " | n=" +
                    std::to_string(report.n) + " | seed=" + std::to_string(report.seed) +
                    " B=" + std::to_string(report.bootstrap_samples) + "\n";
  for (const auto& [name, estimate] : report.metrics) {
    std::snprintf(buffer, sizeof(buffer), "  %-10s %.4f (%.4f, %.4f)\n", name.c_str(),
                  estimate.point, estimate.ci_low, estimate.ci_high);
    out += buffer;
  }
  return out;
}

// Computes the report and writes report.json / report.txt into out_dir.
inline EvalReport write_report(std::span<const RunRecord> records,
                               const DatasetManifest& manifest, const MetricConfig& cfg,
                               const std::string& out_dir) {
  EvalReport report = compute_report(records, manifest, cfg);
  {
    std::ofstream out(out_dir + "/report.json", std::ios::trunc);
    if (!out) {
      throw StorageError("cannot write report to \"" + out_dir + "\"");
    }
    out << report_to_json(report).dump(2) << '\n';
  }
  {
    std::ofstream out(out_dir + "/report.txt", std::ios::trunc);
    if (!out) {
      throw StorageError("cannot write report to \"" + out_dir + "\"");
    }
    out << report_to_text(report);
  }
  return report;
}

}  // namespace gsco

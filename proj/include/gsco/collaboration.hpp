#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gsco/backend.hpp"
#include "gsco/domain.hpp"
#include "gsco/error.hpp"
#include "gsco/prompt.hpp"
#include "gsco/vector_index.hpp"

namespace gsco {

// Aggregated specialist verdict. tally is aligned with the label set; tied
// marks the split-vote dilemma where the winner came from the deterministic
// tie-break rather than a real majority.
struct VoteOutcome {
  std::vector<std::size_t> winning_labels;
  std::vector<std::size_t> tally;
  bool tied = false;
};

struct GscoConfig {
  RetrievalConfig retrieval;
  bool use_moed = true;
  bool use_rad = true;
  int gsco_template_variant = 0;  // selects GSCO-0..GSCO-3
};

struct GatherResult {
  std::vector<SpecialistPrediction> predictions;  // registration order, failures skipped
  std::vector<std::pair<std::string, std::string>> failures;  // (specialist_id, reason)
};

// Queries every registered specialist in order. Individual failures are
// recorded and skipped; the operation fails only when nobody answers.
inline GatherResult gather_specialist_predictions(
    const Sample& sample, std::span<const std::shared_ptr<PredictBackend>> specialists,
    const LabelSet& labels) {
  if (specialists.empty()) {
    throw ValidationError("no specialist backends registered");
  }
  const bool single_label =
      sample.task == TaskKind::ClsBinary || sample.task == TaskKind::ClsMulticlass;
  GatherResult result;
  for (const auto& specialist : specialists) {
    try {
      SpecialistPrediction prediction = specialist->predict(sample.image_ref, labels);
      if (single_label && prediction.labels.size() != 1) {
        throw ProtocolError("specialist \"" + specialist->id() + "\" answered " +
                            std::to_string(prediction.labels.size()) +
                            " labels for a single-label task");
      }
      result.predictions.push_back(std::move(prediction));
    } catch (const Error& e) {
      result.failures.emplace_back(specialist->id(), e.what());
    }
  }
  if (result.predictions.empty()) {
    std::string detail;
    for (const auto& [id, reason] : result.failures) {
      detail += "\n  " + id + ": " + reason;
    }
    throw AllBackendsFailedError("all " + std::to_string(specialists.size()) +
                                 " specialists failed" + detail);
  }
  return result;
}

// Plurality vote over single-label predictions. Ties among the top counts
// set tied=true and resolve to the tied label that comes first in the set.
inline VoteOutcome majority_vote(std::span<const SpecialistPrediction> predictions,
                                 const LabelSet& labels) {
  if (predictions.empty()) {
    throw EmptyVoteError("majority_vote: no predictions");
  }
  VoteOutcome outcome;
  outcome.tally.assign(labels.size(), 0);
  for (const auto& prediction : predictions) {
    if (prediction.labels.size() != 1) {
      throw ValidationError("majority_vote expects exactly one label per prediction");
    }
    ++outcome.tally.at(prediction.labels.front());
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < outcome.tally.size(); ++i) {
    if (outcome.tally[i] > outcome.tally[best]) best = i;
  }
  std::size_t top_count = 0;
  for (std::size_t count : outcome.tally) {
    if (count == outcome.tally[best]) ++top_count;
  }
  outcome.tied = top_count > 1;
  outcome.winning_labels = {best};
  return outcome;
}

// Keeps every label backed by a strict majority of specialists. An empty
// verdict falls back to the designated negative label when the set has one.
inline VoteOutcome multilabel_vote(std::span<const SpecialistPrediction> predictions,
                                   const LabelSet& labels) {
  if (predictions.empty()) {
    throw EmptyVoteError("multilabel_vote: no predictions");
  }
  VoteOutcome outcome;
  outcome.tally.assign(labels.size(), 0);
  for (const auto& prediction : predictions) {
    for (std::size_t label : prediction.labels) {
      ++outcome.tally.at(label);
    }
  }
  const std::size_t n = predictions.size();
  for (std::size_t i = 0; i < outcome.tally.size(); ++i) {
    if (outcome.tally[i] * 2 > n) {
      outcome.winning_labels.push_back(i);
    }
  }
  if (outcome.winning_labels.empty() && labels.negative_label()) {
    outcome.winning_labels = {*labels.negative_label()};
  }
  return outcome;
}

// Reference-answer block for the {MoED} placeholder: display labels joined
// by "+" within a prediction and ", " across predictions, in registration
// order. Model identities never appear in prompts.
inline std::string format_moed_context(std::span<const SpecialistPrediction> predictions,
                                       const LabelSet& labels) {
  if (predictions.empty()) {
    throw ValidationError("format_moed_context: no predictions");
  }
  std::string out;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (i > 0) out += ", ";
    const auto& prediction = predictions[i];
    if (prediction.labels.empty()) {
      out += "none";
      continue;
    }
    for (std::size_t j = 0; j < prediction.labels.size(); ++j) {
      if (j > 0) out += "+";
      out += labels.display(prediction.labels[j]);
    }
  }
  return out;
}

// Similar-case block for the {RAD} placeholder. Classification indexes list
// the retrieved labels most-similar first; generation indexes pass the top-1
// case text through verbatim. Empty retrievals render as "none".
inline std::string format_rad_context(std::span<const RetrievedCase> cases, bool use_case_text) {
  if (cases.empty()) {
    return "none";
  }
  if (use_case_text) {
    return cases.front().meta_text.value_or("none");
  }
  std::string out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (i > 0) out += ", ";
    const auto& retrieved = cases[i];
    if (retrieved.meta_labels.empty()) {
      out += "none";
      continue;
    }
    for (std::size_t j = 0; j < retrieved.meta_labels.size(); ++j) {
      if (j > 0) out += "+";
      out += retrieved.meta_labels[j];
    }
  }
  return out;
}

inline std::string format_rad_context(std::span<const RetrievedCase> cases, TaskKind task) {
  return format_rad_context(cases, !is_classification(task));
}

// End-to-end collaborative inference for one classification sample:
// specialist gathering (MoED), embedding retrieval (RAD), instruction
// rendering, generation, and parsing. With both mechanisms disabled this
// degenerates to plain generalist inference under the CLS instruction.
inline Diagnosis run_collaborative_inference(
    const Sample& sample, std::span<const std::shared_ptr<PredictBackend>> specialists,
    const Index* index, EmbedBackend* embedder, GenerateBackend& gfm,
    const PromptLibrary& prompts, const LabelSet& labels, const GscoConfig& cfg) {
  if (!is_classification(sample.task)) {
    throw ValidationError("collaborative inference covers classification tasks; sample \"" +
                          sample.id + "\" is " + std::string(to_string(sample.task)));
  }
  if (cfg.gsco_template_variant < 0 || cfg.gsco_template_variant > 3) {
    throw ValidationError("gsco_template_variant must be in [0,3]");
  }
  if (cfg.use_rad && (index == nullptr || embedder == nullptr)) {
    throw ValidationError("RAD is enabled but no index/embed backend is configured");
  }

  Diagnosis diagnosis;
  diagnosis.sample_id = sample.id;

  if (cfg.use_moed) {
    GatherResult gathered = gather_specialist_predictions(sample, specialists, labels);
    diagnosis.context_moed = format_moed_context(gathered.predictions, labels);
  }
  if (cfg.use_rad) {
    EmbeddingVector query = embedder->embed(sample.image_ref);
    std::vector<RetrievedCase> cases = query_topk(*index, query, cfg.retrieval);
    diagnosis.context_rad = format_rad_context(cases, sample.task);
  }

  PromptBindings bindings;
  bindings["Modality"] = sample.modality;
  bindings["Label Set"] = format_label_set(labels);
  std::string template_id;
  if (!cfg.use_moed && !cfg.use_rad) {
    template_id = "CLS";
  } else {
    template_id = "GSCO-" + std::to_string(cfg.gsco_template_variant);
    bindings["RAD"] = diagnosis.context_rad.value_or("none");
    bindings["MoED"] = diagnosis.context_moed.value_or("none");
  }
  const std::string prompt = prompts.render(template_id, bindings);

  std::string text;
  try {
    text = gfm.generate(sample.image_ref, prompt);
  } catch (const AllBackendsFailedError&) {
    throw;
  } catch (const Error& e) {
    throw InferenceError("generalist call failed for sample \"" + sample.id + "\": " + e.what());
  }
  diagnosis.raw_text = text;

  auto [predicted, warning] = parse_prediction(text, labels, sample.task);
  diagnosis.predicted_labels = std::move(predicted);
  diagnosis.parse_warning = warning;
  return diagnosis;
}

}  // namespace gsco

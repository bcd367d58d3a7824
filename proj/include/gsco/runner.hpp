#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gsco/collaboration.hpp"
#include "gsco/corpus.hpp"
#include "gsco/gateway.hpp"
#include "gsco/prompt.hpp"
#include "gsco/vector_index.hpp"

namespace gsco {

struct RunOptions {
  std::string mode = "gfm";
  GscoConfig gsco;  // retrieval settings and template variant; context flags come from mode
  std::size_t workers = 4;
};

// Checks that a mode has everything it needs before any backend is touched.
inline void validate_run_options(const DatasetManifest& manifest, const RunOptions& options,
                                 bool have_generate, bool have_embed, std::size_t num_specialists,
                                 bool have_index) {
  const std::string& mode = options.mode;
  if (!is_known_mode(mode)) {
    throw ValidationError("unknown mode \"" + mode + "\"");
  }
  const bool needs_generate = mode == "gfm" || mode == "moed" || mode == "rad" || mode == "gsco";
  const bool needs_specialists =
      mode == "specialist" || mode == "voting" || mode == "moed" || mode == "gsco";
  const bool needs_retrieval = mode == "rad" || mode == "gsco";
  if (needs_generate && !have_generate) {
    throw ValidationError("mode \"" + mode + "\" needs a generate backend");
  }
  if (needs_specialists && num_specialists == 0) {
    throw ValidationError("mode \"" + mode + "\" needs at least one specialist backend");
  }
  if (needs_retrieval && !have_index) {
    throw ValidationError("mode \"" + mode + "\" needs an index");
  }
  if (needs_retrieval && !have_embed) {
    throw ValidationError("mode \"" + mode + "\" needs an embed backend");
  }
  if (mode != "gfm" && !is_classification(manifest.task)) {
    throw ValidationError("mode \"" + mode + "\" applies to classification manifests; \"" +
                          manifest.name + "\" is " + std::string(to_string(manifest.task)));
  }
  if (options.gsco.gsco_template_variant < 0 || options.gsco.gsco_template_variant > 3) {
    throw ValidationError("gsco template variant must be in [0,3]");
  }
}

namespace detail {

inline Diagnosis infer_plain_generation(const Sample& sample, GenerateBackend& gfm,
                                        const PromptLibrary& prompts) {
  PromptBindings bindings;
  std::string template_id;
  if (is_vqa(sample.task)) {
    template_id = "VQA";
    bindings["Question"] = sample.question.value_or("");
  } else {
    template_id = "MRG";
  }
  const std::string prompt = prompts.render(template_id, bindings);
  Diagnosis diagnosis;
  diagnosis.sample_id = sample.id;
  try {
    diagnosis.raw_text = gfm.generate(sample.image_ref, prompt);
  } catch (const Error& e) {
    throw InferenceError("generalist call failed for sample \"" + sample.id + "\": " + e.what());
  }
  diagnosis.generated_text = diagnosis.raw_text;
  return diagnosis;
}

inline Diagnosis infer_one(const Sample& sample, const DatasetManifest& manifest,
                           const BackendSet& backends, const Index* index,
                           const PromptLibrary& prompts, const RunOptions& options) {
  const std::string& mode = options.mode;
  if (mode == "gfm" && !is_classification(sample.task)) {
    return infer_plain_generation(sample, *backends.generate, prompts);
  }

  const LabelSet& labels = *manifest.label_set;
  if (mode == "specialist") {
    Diagnosis diagnosis;
    diagnosis.sample_id = sample.id;
    SpecialistPrediction prediction =
        backends.specialists.front()->predict(sample.image_ref, labels);
    diagnosis.predicted_labels = std::move(prediction.labels);
    return diagnosis;
  }
  if (mode == "voting") {
    GatherResult gathered = gather_specialist_predictions(sample, backends.specialists, labels);
    VoteOutcome outcome = sample.task == TaskKind::ClsMultilabel
                              ? multilabel_vote(gathered.predictions, labels)
                              : majority_vote(gathered.predictions, labels);
    Diagnosis diagnosis;
    diagnosis.sample_id = sample.id;
    diagnosis.predicted_labels = std::move(outcome.winning_labels);
    diagnosis.context_moed = format_moed_context(gathered.predictions, labels);
    return diagnosis;
  }

  GscoConfig cfg = options.gsco;
  cfg.use_moed = mode == "moed" || mode == "gsco";
  cfg.use_rad = mode == "rad" || mode == "gsco";
  return run_collaborative_inference(sample, backends.specialists, index,
                                     backends.embed.get(), *backends.generate, prompts, labels,
                                     cfg);
}

inline bool mode_touches_remote(const BackendSet& backends, const RunOptions& options) {
  const std::string& mode = options.mode;
  bool remote = false;
  if (backends.generate && mode != "specialist" && mode != "voting") {
    remote |= backends.generate->is_remote();
  }
  if (backends.embed && (mode == "rad" || mode == "gsco")) {
    remote |= backends.embed->is_remote();
  }
  if (mode == "specialist" && !backends.specialists.empty()) {
    remote |= backends.specialists.front()->is_remote();
  }
  if (mode == "voting" || mode == "moed" || mode == "gsco") {
    for (const auto& specialist : backends.specialists) {
      remote |= specialist->is_remote();
    }
  }
  return remote;
}

}  // namespace detail

// Runs one mode over every manifest sample with a bounded worker pool.
// Records come back sorted by sample_id regardless of completion order.
// duration_ms is only meaningful for remote transports; pure stub runs
// report 0 so repeated runs are byte-identical.
inline std::vector<RunRecord> run_inference(const DatasetManifest& manifest,
                                            const BackendSet& backends, const Index* index,
                                            const PromptLibrary& prompts,
                                            const RunOptions& options) {
  validate_run_options(manifest, options, backends.generate != nullptr,
                       backends.embed != nullptr, backends.specialists.size(), index != nullptr);

  const std::size_t n = manifest.samples.size();
  const bool timed = detail::mode_touches_remote(backends, options);
  std::vector<std::optional<RunRecord>> slots(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (failure) return;
      }
      try {
        const Sample& sample = manifest.samples[i];
        const auto started = std::chrono::steady_clock::now();
        Diagnosis diagnosis =
            detail::infer_one(sample, manifest, backends, index, prompts, options);
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - started)
                                 .count();
        RunRecord record;
        record.sample_id = sample.id;
        record.mode = options.mode;
        record.diagnosis = std::move(diagnosis);
        record.duration_ms = timed ? elapsed : 0;
        slots[i] = std::move(record);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t pool = std::max<std::size_t>(1, std::min(options.workers, std::max<std::size_t>(n, 1)));
  std::vector<std::thread> threads;
  threads.reserve(pool);
  for (std::size_t t = 0; t < pool; ++t) threads.emplace_back(worker);
  for (auto& thread : threads) thread.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<RunRecord> records;
  records.reserve(n);
  for (auto& slot : slots) {
    records.push_back(std::move(*slot));
  }
  std::sort(records.begin(), records.end(),
            [](const RunRecord& a, const RunRecord& b) { return a.sample_id < b.sample_id; });
  return records;
}

}  // namespace gsco

// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Self-contained against the checked-in fixtures and the CLI binary.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "gsco/collaboration.hpp"
#include "gsco/corpus.hpp"
#include "gsco/metrics.hpp"
#include "gsco/prompt.hpp"
#include "gsco/runner.hpp"
#include "gsco/vector_index.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;
bool criterion_ok = true;
std::string criterion_note;

void expect(bool condition, const std::string& what) {
  if (!condition && criterion_ok) {
    criterion_ok = false;
    criterion_note = what;
  }
}

void finish(int number, const std::string& title) {
  if (criterion_ok) {
    std::cout << "PASS criterion " << number << ": " << title << "\n";
  } else {
    std::cout << "FAIL criterion " << number << ": " << title << " -- " << criterion_note
              << "\n";
    ++failures;
  }
  criterion_ok = true;
  criterion_note.clear();
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args) {
  const std::string command = std::string(GSCO_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  return WEXITSTATUS(std::system(command.c_str()));
}

const std::string kFixtures = std::string(GSCO_TEST_DIR) + "/fixtures";
const std::string kGoldens = std::string(GSCO_TEST_DIR) + "/goldens";

// ---------------------------------------------------------------------------

void criterion_1_retrieval_oracle() {
  const auto start = Clock::now();
  std::mt19937 rng(101);
  std::uniform_real_distribution<float> coord(-1.0f, 1.0f);
  std::uniform_int_distribution<int> count(50, 1000);
  std::uniform_int_distribution<int> kdist(1, 20);

  for (int trial = 0; trial < 50 && criterion_ok; ++trial) {
    const int n = count(rng);
    std::vector<std::pair<std::string, gsco::EmbeddingVector>> rows;
    rows.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      gsco::EmbeddingVector v(64);
      if (i > 0 && i % 10 == 0) {
        v = rows[static_cast<std::size_t>(i) / 2].second;  // plant exact ties
      } else {
        for (auto& x : v) x = coord(rng);
      }
      char id[16];
      std::snprintf(id, sizeof(id), "e%04d", i);
      rows.emplace_back(id, std::move(v));
    }
    std::vector<gsco::IndexEntry> entries;
    entries.reserve(rows.size());
    for (const auto& [id, vec] : rows) entries.push_back({id, vec, {}, std::nullopt, ""});
    gsco::Index index = gsco::build_index(std::move(entries), 64);

    for (int q = 0; q < 20 && criterion_ok; ++q) {
      gsco::EmbeddingVector query(64);
      for (auto& x : query) x = coord(rng);
      const auto k = static_cast<std::size_t>(kdist(rng));
      auto hits = gsco::query_topk(index, query, {.k = k});
      auto expected = oracle::brute_force_topk(rows, query, k);
      expect(hits.size() == expected.size(), "result length mismatch");
      for (std::size_t i = 0; i < hits.size() && criterion_ok; ++i) {
        expect(hits[i].entry_id == expected[i].id, "rank order mismatch");
        expect(hits[i].similarity == expected[i].similarity, "similarity mismatch");
      }
    }
  }
  expect(seconds_since(start) < 10.0, "retrieval oracle sweep exceeded 10 s");
  finish(1, "query_topk matches the brute-force oracle on 50 random indexes");
}

void criterion_2_voting_oracle() {
  const auto start = Clock::now();
  gsco::LabelSet three({"A", "B", "C"});

  // exhaustive: every combination of 3 single-label specialists over 3 labels
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      for (std::size_t c = 0; c < 3; ++c) {
        std::vector<gsco::SpecialistPrediction> votes = {
            {"1", {a}, std::nullopt}, {"2", {b}, std::nullopt}, {"3", {c}, std::nullopt}};
        auto outcome = gsco::majority_vote(votes, three);
        auto expected = oracle::count_votes({a, b, c}, 3);
        expect(outcome.winning_labels == expected.winners, "single-label winner mismatch");
        expect(outcome.tally == expected.tally, "single-label tally mismatch");
        expect(outcome.tied == expected.tied, "single-label tie flag mismatch");
      }
    }
  }

  // the split-vote dilemma: half the specialists on each side
  {
    gsco::LabelSet binary({"Negative", "Positive"});
    std::vector<gsco::SpecialistPrediction> votes;
    for (int i = 0; i < 5; ++i) votes.push_back({"p", {1}, std::nullopt});
    for (int i = 0; i < 5; ++i) votes.push_back({"n", {0}, std::nullopt});
    auto outcome = gsco::majority_vote(votes, binary);
    expect(outcome.tied, "5-5 split must be flagged tied");
    expect(outcome.winning_labels == std::vector<std::size_t>{0},
           "5-5 split must resolve to the first label");
  }

  // sampled multilabel configurations
  std::mt19937 rng(202);
  std::uniform_int_distribution<int> coin(0, 1);
  gsco::LabelSet vocab({"A", "B", "C", "D", "No finding"}, 4);
  const std::size_t sizes[] = {3, 5, 10};
  for (int trial = 0; trial < 500 && criterion_ok; ++trial) {
    const std::size_t n = sizes[trial % 3];
    std::vector<gsco::SpecialistPrediction> votes;
    std::vector<std::vector<std::size_t>> ballots;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> set;
      for (std::size_t label = 0; label < 4; ++label) {
        if (coin(rng)) set.push_back(label);
      }
      votes.push_back({"s", set, std::nullopt});
      ballots.push_back(set);
    }
    auto outcome = gsco::multilabel_vote(votes, vocab);
    auto expected = oracle::count_set_votes(ballots, 5, 4);
    expect(outcome.winning_labels == expected.winners, "multilabel winners mismatch");
    expect(outcome.tally == expected.tally, "multilabel tally mismatch");
  }

  expect(seconds_since(start) < 5.0, "voting oracle sweep exceeded 5 s");
  finish(2, "majority_vote / multilabel_vote match the enumerating oracle");
}

void criterion_3_metric_goldens() {
  auto [bleu, bb] = gsco::bleu1("the cat", "the cat sat");
  expect(std::abs(bleu - std::exp(-0.5)) <= 1e-9, "bleu1 brevity-penalty value");

  auto [rl, rb] = gsco::rouge_l("a b c", "a c d");
  expect(std::abs(rl - 2.0 / 3.0) <= 1e-12, "rouge_l LCS F-measure value");

  auto vqa = gsco::score_vqa_item("left", "left lung", true);
  expect(vqa.recall == 0.5 && vqa.closed_correct, "recall 0.5 must count as closed-correct");

  std::vector<std::vector<std::size_t>> truth = {{1}, {0}};
  std::vector<std::vector<std::size_t>> pred = {{1}, {1}};
  const double macro = gsco::aggregate_f1(truth, pred, 2, gsco::F1Mode::Macro);
  expect(std::abs(macro - 1.0 / 3.0) <= 1e-12, "macro-F1 of the all-positive binary example");

  std::mt19937 rng(303);
  std::uniform_int_distribution<std::size_t> label(0, 5);
  std::uniform_int_distribution<int> size(1, 100);
  for (int trial = 0; trial < 100 && criterion_ok; ++trial) {
    const int n = size(rng);
    std::vector<std::size_t> t, p;
    std::vector<std::vector<std::size_t>> ts, ps;
    for (int i = 0; i < n; ++i) {
      t.push_back(label(rng));
      p.push_back(label(rng));
      ts.push_back({t.back()});
      ps.push_back({p.back()});
    }
    const double micro = gsco::aggregate_f1(ts, ps, 6, gsco::F1Mode::Micro);
    expect(micro == gsco::accuracy(t, p), "micro-F1 must equal accuracy exactly");
  }
  finish(3, "metric golden values and the micro-F1 = accuracy identity");
}

void criterion_4_prompt_goldens() {
  gsco::PromptLibrary prompts = gsco::PromptLibrary::load_dir(GSCO_TEMPLATE_DIR);
  for (auto id : gsco::kTemplateIds) {
    const std::string template_id(id);
    gsco::PromptBindings bindings;
    if (template_id == "DGB") {
      bindings = {{"Modality", "endoscopy"}, {"Disease", "ulcerative colitis"}};
    } else {
      bindings = {{"Modality", "chest X-ray"},
                  {"Label Set", "Normal, Pneumonia"},
                  {"Question", "Is there pleural effusion?"},
                  {"RAD", "Drusen, Drusen, Normal"},
                  {"MoED", "Pneumonia, Normal, Pneumonia"}};
    }
    std::string golden = read_file(kGoldens + "/" + template_id + ".golden.txt");
    if (golden.empty() || golden.back() != '\n') {
      expect(false, "golden file for " + template_id + " is missing or unterminated");
      break;
    }
    golden.pop_back();
    const std::string rendered = prompts.render(template_id, bindings);
    expect(rendered == golden, "template " + template_id + " deviates from its golden file");
    if (template_id == "CLS") {
      expect(rendered.find("Your task is disease diagnosis.") != std::string::npos,
             "CLS anchor line missing");
    }
    if (template_id == "DGB") {
      const std::string anchor = "findings and impressions.";
      expect(rendered.size() >= anchor.size() &&
                 rendered.compare(rendered.size() - anchor.size(), anchor.size(), anchor) == 0,
             "DGB must end with the report-structure line");
    }
  }
  finish(4, "all 10 prompt templates match their golden files byte-for-byte");
}

void criterion_5_end_to_end() {
  const std::string work = (fs::temp_directory_path() / "gsco_acceptance").string();
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string manifest = kFixtures + "/demo_binary.jsonl";
  const std::string backends = kFixtures + "/demo_stubs.json";

  expect(run_cli("build-index --manifest " + manifest + " --backends " + backends +
                 " --output-dir " + work + "/idx") == 0,
         "build-index failed");
  const std::string index = work + "/idx/index.gsidx";

  const std::string infer_gsco = "infer --manifest " + manifest + " --backends " + backends +
                                 " --mode gsco --index " + index + " --workers 4 --output-dir ";
  expect(run_cli(infer_gsco + work + "/g1") == 0, "first gsco run failed");
  expect(run_cli(infer_gsco + work + "/g2") == 0, "second gsco run failed");
  expect(read_file(work + "/g1/records.jsonl") == read_file(work + "/g2/records.jsonl"),
         "gsco run records differ between identical runs");

  expect(run_cli("infer --manifest " + manifest + " --backends " + backends +
                 " --mode voting --output-dir " + work + "/v") == 0,
         "voting run failed");

  expect(run_cli("evaluate --manifest " + manifest + " --records " + work +
                 "/g1/records.jsonl --seed 11 --output-dir " + work + "/eg1") == 0,
         "gsco evaluation failed");
  expect(run_cli("evaluate --manifest " + manifest + " --records " + work +
                 "/g2/records.jsonl --seed 11 --output-dir " + work + "/eg2") == 0,
         "gsco evaluation (second run) failed");
  expect(read_file(work + "/eg1/report.json") == read_file(work + "/eg2/report.json"),
         "gsco reports differ between identical runs");
  expect(run_cli("evaluate --manifest " + manifest + " --records " + work +
                 "/v/records.jsonl --seed 11 --output-dir " + work + "/ev") == 0,
         "voting evaluation failed");

  if (criterion_ok) {
    auto gsco_report = nlohmann::json::parse(read_file(work + "/eg1/report.json"));
    auto voting_report = nlohmann::json::parse(read_file(work + "/ev/report.json"));
    const double gsco_acc = gsco_report["metrics"]["accuracy"]["point"].get<double>();
    const double voting_acc = voting_report["metrics"]["accuracy"]["point"].get<double>();
    expect(gsco_acc >= voting_acc, "gsco accuracy fell below voting accuracy");
    expect(voting_acc == 0.80, "voting accuracy should be exactly 0.80 on this fixture");
    expect(gsco_acc == 0.85, "gsco accuracy should be exactly 0.85 on this fixture");
  }
  fs::remove_all(work);
  finish(5, "end-to-end stub runs are byte-identical and break the planted tie");
}

void criterion_6_pipeline_reduction() {
  gsco::PromptLibrary prompts = gsco::PromptLibrary::load_dir(GSCO_TEMPLATE_DIR);
  gsco::DatasetManifest manifest = gsco::load_manifest(kFixtures + "/demo_binary.jsonl");
  const gsco::LabelSet& labels = *manifest.label_set;

  for (const auto& sample : manifest.samples) {
    std::string captured;
    gsco::FnGenerateBackend gfm("capture",
                                [&captured](const std::string&, const std::string& prompt) {
                                  captured = prompt;
                                  return std::string("Negative");
                                });
    gsco::GscoConfig cfg;
    cfg.use_moed = false;
    cfg.use_rad = false;
    std::vector<std::shared_ptr<gsco::PredictBackend>> none;
    gsco::run_collaborative_inference(sample, none, nullptr, nullptr, gfm, prompts, labels, cfg);
    gsco::PromptBindings bindings = {{"Modality", sample.modality},
                                     {"Label Set", gsco::format_label_set(labels)}};
    expect(captured == prompts.render("CLS", bindings),
           "prompt for sample " + sample.id + " is not the plain CLS rendering");
  }
  finish(6, "with both mechanisms off the pipeline renders the plain CLS prompt");
}

void criterion_7_bootstrap_sanity() {
  auto mean_stat = [](std::span<const double> values) {
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
  };

  std::vector<double> constant(40, 0.25);
  auto degenerate = gsco::bootstrap_ci<double>(constant, mean_stat, 1000, 5);
  expect(degenerate.point == 0.25 && degenerate.ci_low == 0.25 && degenerate.ci_high == 0.25,
         "constant data must give a zero-width interval");

  std::vector<double> bern(200, 0.0);
  for (int i = 0; i < 160; ++i) bern[static_cast<std::size_t>(i)] = 1.0;
  auto first = gsco::bootstrap_ci<double>(bern, mean_stat, 1000, 42);
  auto second = gsco::bootstrap_ci<double>(bern, mean_stat, 1000, 42);
  expect(first.ci_low == second.ci_low && first.ci_high == second.ci_high,
         "same seed must reproduce the interval");

  auto [analytic_low, analytic_high] = oracle::binomial_normal_ci(0.8, 200);
  expect(std::abs(first.ci_low - analytic_low) <= 0.03,
         "lower endpoint strays from the analytic interval");
  expect(std::abs(first.ci_high - analytic_high) <= 0.03,
         "upper endpoint strays from the analytic interval");
  finish(7, "bootstrap intervals: degenerate, seeded, and near the analytic interval");
}

void criterion_8_index_persistence() {
  const std::string work = (fs::temp_directory_path() / "gsco_acceptance_idx").string();
  fs::remove_all(work);
  fs::create_directories(work);

  std::mt19937 rng(404);
  std::uniform_real_distribution<float> coord(-1.0f, 1.0f);
  std::vector<gsco::IndexEntry> entries;
  for (int i = 0; i < 300; ++i) {
    gsco::EmbeddingVector v(16);
    for (auto& x : v) x = coord(rng);
    entries.push_back({"e" + std::to_string(i), std::move(v), {"L"}, std::nullopt, "m"});
  }
  gsco::Index index = gsco::build_index(std::move(entries), 16);
  const std::string path = work + "/persist.gsidx";
  gsco::save_index(index, path);
  gsco::Index loaded = gsco::load_index(path);

  for (int q = 0; q < 100 && criterion_ok; ++q) {
    gsco::EmbeddingVector query(16);
    for (auto& x : query) x = coord(rng);
    auto before = gsco::query_topk(index, query, {.k = 10});
    auto after = gsco::query_topk(loaded, query, {.k = 10});
    expect(before.size() == after.size(), "round-trip changed the result count");
    for (std::size_t i = 0; i < before.size() && criterion_ok; ++i) {
      expect(before[i].entry_id == after[i].entry_id, "round-trip changed the ranking");
      expect(before[i].similarity == after[i].similarity, "round-trip changed a similarity");
    }
  }

  const std::string good = read_file(path);
  auto expect_format_error = [&](const std::string& bytes, const std::string& what) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    try {
      gsco::load_index(path);
      expect(false, what + " must raise FormatError");
    } catch (const gsco::FormatError&) {
    } catch (...) {
      expect(false, what + " raised the wrong error type");
    }
  };
  expect_format_error(good.substr(0, good.size() / 2), "a truncated payload");
  std::string bad_magic = good;
  bad_magic[3] = 'z';
  expect_format_error(bad_magic, "corrupted magic bytes");
  std::string bad_header = good;
  bad_header[12] = '}';
  expect_format_error(bad_header, "a garbled header");

  fs::remove_all(work);
  finish(8, "index persistence is exact and corruption always raises FormatError");
}

}  // namespace

int main() {
  const auto started = Clock::now();
  criterion_1_retrieval_oracle();
  criterion_2_voting_oracle();
  criterion_3_metric_goldens();
  criterion_4_prompt_goldens();
  criterion_5_end_to_end();
  criterion_6_pipeline_reduction();
  criterion_7_bootstrap_sanity();
  criterion_8_index_persistence();

  const double total = seconds_since(started);
  if (total >= 60.0) {
    std::cout << "FAIL runtime: acceptance suite took " << total << " s (budget 60 s)\n";
    ++failures;
  } else {
    std::cout << "PASS runtime: acceptance suite took " << total << " s (budget 60 s)\n";
  }
  return failures == 0 ? 0 : 1;
}

// Command-line front end: build-index, infer, evaluate, report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gsco/corpus.hpp"
#include "gsco/gateway.hpp"
#include "gsco/runner.hpp"
#include "gsco/vector_index.hpp"

#ifndef GSCO_TEMPLATE_DIR
#define GSCO_TEMPLATE_DIR "templates"
#endif

namespace {

namespace fs = std::filesystem;

// exit 0 success, 1 validation error, 2 runtime error
int classify_error(const gsco::Error& e) {
  if (dynamic_cast<const gsco::ValidationError*>(&e) != nullptr ||
      dynamic_cast<const gsco::ParseError*>(&e) != nullptr ||
      dynamic_cast<const gsco::DuplicateIdError*>(&e) != nullptr ||
      dynamic_cast<const gsco::ShapeError*>(&e) != nullptr ||
      dynamic_cast<const gsco::EmptyInputError*>(&e) != nullptr ||
      dynamic_cast<const gsco::MissingBindingError*>(&e) != nullptr ||
      dynamic_cast<const gsco::UnknownTemplateError*>(&e) != nullptr ||
      dynamic_cast<const gsco::DimensionError*>(&e) != nullptr ||
      dynamic_cast<const gsco::DegenerateVectorError*>(&e) != nullptr) {
    return 1;
  }
  return 2;
}

void ensure_output_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw gsco::StorageError("cannot create output directory \"" + dir + "\": " + ec.message());
  }
}

// Every run leaves a replayable echo of its effective configuration.
void write_config_echo(const std::string& dir, const nlohmann::json& config) {
  std::ofstream out(dir + "/run_config.json", std::ios::trunc);
  if (!out) {
    throw gsco::StorageError("cannot write run_config.json into \"" + dir + "\"");
  }
  out << config.dump(2) << '\n';
}

struct BuildIndexArgs {
  std::string manifest;
  std::string backends;
  std::string output_dir;
  std::string index_name = "index.gsidx";
};

int cmd_build_index(const BuildIndexArgs& args) {
  ensure_output_dir(args.output_dir);
  write_config_echo(args.output_dir, {{"subcommand", "build-index"},
                                      {"manifest", args.manifest},
                                      {"backends", args.backends},
                                      {"output_dir", args.output_dir},
                                      {"index_name", args.index_name}});

  gsco::DatasetManifest manifest = gsco::load_manifest(args.manifest);
  gsco::BackendSet backends = gsco::load_backend_set(args.backends);
  if (!backends.embed) {
    throw gsco::ValidationError("build-index needs an embed backend (roles.embed)");
  }

  std::vector<gsco::IndexEntry> entries;
  entries.reserve(manifest.samples.size());
  for (const auto& sample : manifest.samples) {
    gsco::IndexEntry entry;
    entry.entry_id = sample.id;
    entry.vector = backends.embed->embed(sample.image_ref);
    if (manifest.label_set) {
      for (std::size_t idx : sample.truth_labels) {
        entry.meta_labels.push_back(manifest.label_set->display(idx));
      }
    }
    entry.meta_text = sample.reference_text;
    entry.modality = sample.modality;
    entries.push_back(std::move(entry));
  }
  gsco::Index index = gsco::build_index(std::move(entries), backends.embed->dimension());
  const std::string path = args.output_dir + "/" + args.index_name;
  gsco::save_index(index, path);
  std::cout << "indexed " << index.count() << " entries (dim " << index.dimension() << ") -> "
            << path << "\n";
  return 0;
}

struct InferArgs {
  std::string manifest;
  std::string backends;
  std::string output_dir;
  std::string mode = "gfm";
  std::string index_path;
  std::string templates_dir = GSCO_TEMPLATE_DIR;
  std::size_t k = 5;
  int template_variant = 0;
  std::size_t workers = 4;
};

int cmd_infer(const InferArgs& args) {
  // Structural checks first: nothing below may touch a backend until the
  // flag set is coherent.
  if (!gsco::is_known_mode(args.mode)) {
    throw gsco::ValidationError("unknown mode \"" + args.mode + "\"");
  }
  if ((args.mode == "rad" || args.mode == "gsco") && args.index_path.empty()) {
    throw gsco::ValidationError("mode \"" + args.mode + "\" needs --index");
  }
  ensure_output_dir(args.output_dir);
  write_config_echo(args.output_dir, {{"subcommand", "infer"},
                                      {"manifest", args.manifest},
                                      {"backends", args.backends},
                                      {"output_dir", args.output_dir},
                                      {"mode", args.mode},
                                      {"index", args.index_path},
                                      {"templates", args.templates_dir},
                                      {"k", args.k},
                                      {"template_variant", args.template_variant},
                                      {"workers", args.workers}});

  gsco::DatasetManifest manifest = gsco::load_manifest(args.manifest);
  gsco::PromptLibrary prompts = gsco::PromptLibrary::load_dir(args.templates_dir);
  gsco::BackendSet backends = gsco::load_backend_set(args.backends);

  std::optional<gsco::Index> index;
  if (!args.index_path.empty()) {
    index = gsco::load_index(args.index_path);
  }

  gsco::RunOptions options;
  options.mode = args.mode;
  options.gsco.retrieval.k = args.k;
  options.gsco.gsco_template_variant = args.template_variant;
  options.workers = args.workers;

  std::vector<gsco::RunRecord> records =
      gsco::run_inference(manifest, backends, index ? &*index : nullptr, prompts, options);
  const std::string path = args.output_dir + "/records.jsonl";
  gsco::save_run_records(records, path);
  std::cout << "wrote " << records.size() << " records -> " << path << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string manifest;
  std::string records;
  std::string output_dir;
  std::uint64_t seed = 0;
  std::size_t bootstrap = 1000;
};

int cmd_evaluate(const EvaluateArgs& args) {
  ensure_output_dir(args.output_dir);
  write_config_echo(args.output_dir, {{"subcommand", "evaluate"},
                                      {"manifest", args.manifest},
                                      {"records", args.records},
                                      {"output_dir", args.output_dir},
                                      {"seed", args.seed},
                                      {"B", args.bootstrap}});

  gsco::DatasetManifest manifest = gsco::load_manifest(args.manifest);
  std::vector<gsco::RunRecord> records = gsco::load_run_records(args.records);
  gsco::MetricConfig cfg{args.seed, args.bootstrap};
  gsco::EvalReport report = gsco::write_report(records, manifest, cfg, args.output_dir);
  std::cout << gsco::report_to_text(report);
  return 0;
}

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string output_dir;
};

int cmd_report(const ReportArgs& args) {
  ensure_output_dir(args.output_dir);
  write_config_echo(args.output_dir, {{"subcommand", "report"},
                                      {"inputs", args.inputs},
                                      {"output_dir", args.output_dir}});

  std::vector<gsco::EvalReport> reports;
  std::vector<std::string> metric_names;
  for (const auto& path : args.inputs) {
    std::ifstream in(path);
    if (!in) {
      throw gsco::StorageError("cannot read report \"" + path + "\"");
    }
    nlohmann::json doc;
    try {
      in >> doc;
      reports.push_back(gsco::report_from_json(doc));
    } catch (const nlohmann::json::exception& e) {
      throw gsco::ValidationError("report \"" + path + "\" is not a valid report: " + e.what());
    }
    for (const auto& [name, estimate] : reports.back().metrics) {
      if (std::find(metric_names.begin(), metric_names.end(), name) == metric_names.end()) {
        metric_names.push_back(name);
      }
    }
  }
  if (reports.empty()) {
    throw gsco::ValidationError("report: no input files given");
  }

  char buffer[128];
  std::string table;
  std::snprintf(buffer, sizeof(buffer), "%-24s %-10s", "dataset", "mode");
  table += buffer;
  for (const auto& name : metric_names) {
    std::snprintf(buffer, sizeof(buffer), " %-26s", name.c_str());
    table += buffer;
  }
  table += "\n";
  nlohmann::json merged = nlohmann::json::array();
  for (const auto& report : reports) {
    merged.push_back(gsco::report_to_json(report));
    std::snprintf(buffer, sizeof(buffer), "%-24s %-10s", report.dataset.c_str(),
                  report.mode.c_str());
    table += buffer;
    for (const auto& name : metric_names) {
      std::string cell = "-";
      for (const auto& [metric, estimate] : report.metrics) {
        if (metric == name) {
          std::snprintf(buffer, sizeof(buffer), "%.4f (%.4f, %.4f)", estimate.point,
                        estimate.ci_low, estimate.ci_high);
          cell = buffer;
          break;
        }
      }
      std::snprintf(buffer, sizeof(buffer), " %-26s", cell.c_str());
      table += buffer;
    }
    table += "\n";
  }

  std::ofstream txt(args.output_dir + "/comparison.txt", std::ios::trunc);
  txt << table;
  std::ofstream json_out(args.output_dir + "/comparison.json", std::ios::trunc);
  json_out << merged.dump(2) << '\n';
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalist-specialist collaborative inference over stub or HTTP model backends"};
  app.require_subcommand(1);

  BuildIndexArgs build_args;
  auto* build = app.add_subcommand("build-index", "Embed manifest samples and write an index");
  build->add_option("--manifest", build_args.manifest, "Dataset manifest (JSONL)")->required();
  build->add_option("--backends", build_args.backends, "Backend config (JSON)")->required();
  build->add_option("--output-dir", build_args.output_dir, "Output directory")->required();
  build->add_option("--name", build_args.index_name, "Index file name");

  InferArgs infer_args;
  auto* infer = app.add_subcommand("infer", "Run one inference mode over a manifest");
  infer->add_option("--manifest", infer_args.manifest, "Dataset manifest (JSONL)")->required();
  infer->add_option("--backends", infer_args.backends, "Backend config (JSON)")->required();
  infer->add_option("--output-dir", infer_args.output_dir, "Output directory")->required();
  infer->add_option("--mode", infer_args.mode, "gfm|specialist|voting|moed|rad|gsco")->required();
  infer->add_option("--index", infer_args.index_path, "Index file (rad/gsco modes)");
  infer->add_option("--templates", infer_args.templates_dir, "Prompt template directory");
  infer->add_option("--k", infer_args.k, "Retrieval depth");
  infer->add_option("--template-variant", infer_args.template_variant,
                    "Collaboration instruction variant (0-3)");
  infer->add_option("--workers", infer_args.workers, "Worker pool size");

  EvaluateArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Score run records against a manifest");
  evaluate->add_option("--manifest", eval_args.manifest, "Dataset manifest (JSONL)")->required();
  evaluate->add_option("--records", eval_args.records, "Run records (JSONL)")->required();
  evaluate->add_option("--output-dir", eval_args.output_dir, "Output directory")->required();
  evaluate->add_option("--seed", eval_args.seed, "Bootstrap seed")->required();
  evaluate->add_option("--bootstrap", eval_args.bootstrap, "Bootstrap resamples (B)");

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "Merge report.json files into one table");
  report->add_option("--inputs", report_args.inputs, "report.json files")->required();
  report->add_option("--output-dir", report_args.output_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);  // --help
    }
    app.exit(e);
    return 1;
  }

  try {
    if (build->parsed()) return cmd_build_index(build_args);
    if (infer->parsed()) return cmd_infer(infer_args);
    if (evaluate->parsed()) return cmd_evaluate(eval_args);
    if (report->parsed()) return cmd_report(report_args);
  } catch (const gsco::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return classify_error(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

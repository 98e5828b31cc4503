// Copyright 2026 The cf-translate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cft/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <optional>

#include <torch/version.h>

#include "CLI11.hpp"
#include "cft/analysis.hpp"
#include "cft/error.hpp"
#include "cft/image_store.hpp"
#include "cft/inference.hpp"
#include "cft/png_writer.hpp"
#include "cft/synthbench.hpp"
#include "cft/trainer.hpp"

namespace cft {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInput("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string device = "cpu";
  std::optional<int> threads;
};

/// Collects a provenance record for one subcommand invocation.
class Provenance {
 public:
  Provenance(std::string subcommand, const std::vector<std::string>& args)
      : start_(std::chrono::steady_clock::now()) {
    record_ = {{"subcommand", std::move(subcommand)},
               {"argv", args},
               {"started", utc_now()},
               {"versions",
                {{"cf-translate", kVersion}, {"torch", TORCH_VERSION}, {"compiler", __VERSION__}}}};
  }
  json& operator[](const char* key) { return record_[key]; }
  void finish(const fs::path& dir) {
    record_["finished"] = utc_now();
    record_["seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    record_["status"] = "ok";
    append_run_record(dir, record_);
  }

 private:
  json record_;
  std::chrono::steady_clock::time_point start_;
};

Group parse_group(int g) { return group_from_int(g); }

void check_device(const Globals& g) {
  if (g.device != "cpu") throw InvalidInput("unsupported device '" + g.device + "'; only cpu is available");
}

// --- ingest ----------------------------------------------------------------

struct IngestArgs {
  fs::path input;
  int group = 0;
  fs::path manifest;
  std::string validation;
  std::vector<std::string> channel_names;
  bool no_normalize = false;
};

int do_ingest(const IngestArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  Provenance prov("ingest", argv);
  const Group group = parse_group(a.group);
  std::vector<fs::path> files;
  if (fs::is_directory(a.input)) {
    for (const auto& e : fs::directory_iterator(a.input)) {
      auto ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (ext == ".tif" || ext == ".tiff" || ext == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(a.input)) {
    files.push_back(a.input);
  } else {
    throw IoError("no such input: " + a.input.string());
  }
  if (files.empty()) throw InvalidInput("no .tif/.tiff/.json images in " + a.input.string());

  DatasetManifest manifest;
  if (fs::exists(a.manifest)) manifest = DatasetManifest::load(a.manifest);
  manifest.root = a.manifest.parent_path();
  IngestOptions opts;
  if (!a.channel_names.empty()) opts.channel_names = a.channel_names;
  json ingested = json::array();
  for (const auto& f : files) {
    const auto img = ingest(f, group, opts);
    ManifestEntry entry;
    entry.image_id = img.image_id();
    entry.group = group;
    entry.patient_id = img.image_id();
    entry.validation = !a.validation.empty() && a.validation == img.image_id();
    entry.path = fs::path("images") / (safe_filename(img.image_id()) + ".json");
    MultiChannelImage stored = img;
    if (!a.no_normalize) {
      auto norm = normalize_channels(img);
      entry.normalization = std::move(norm.ranges);
      stored = std::move(norm.image);
    }
    write_tensor(manifest.root / "images" / safe_filename(img.image_id()), stored);
    manifest.add(entry, stored.channel_names(), stored.height(), stored.width());
    ingested.push_back(img.image_id());
    out << "ingested " << img.image_id() << " (" << to_string(img.shape()) << ") as group "
        << a.group << '\n';
  }
  manifest.save(a.manifest);
  prov["inputs"] = files.size();
  prov["images"] = ingested;
  prov["config"] = {{"group", a.group}, {"normalize", !a.no_normalize}, {"validation", a.validation}};
  prov["outputs"] = {a.manifest.filename().string(), "images/"};
  prov.finish(manifest.root.empty() ? fs::path(".") : manifest.root);
  return 0;
}

// --- synth -----------------------------------------------------------------

int do_synth(const fs::path& spec_path, const fs::path& out_dir, const Globals& g,
             const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  Provenance prov("synth", argv);
  SynthSpec spec = spec_path.empty() ? SynthSpec{} : synth_spec_from_json(read_json(spec_path));
  if (g.seed) spec.seed = *g.seed;
  const auto ds = generate_dataset(spec, out_dir);
  for (const auto& w : ds.warnings) err << "warning: " << w << '\n';
  out << "wrote " << ds.images.size() << " synthetic images to " << out_dir.string() << '\n';
  prov["config"] = to_json(spec);
  prov["seed"] = spec.seed;
  prov["warnings"] = ds.warnings;
  prov["outputs"] = {"manifest.json", "synth_spec.json", "images/"};
  prov.finish(out_dir);
  return 0;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  fs::path manifest;
  fs::path config;
  fs::path out;
  std::string direction;
  std::int64_t max_steps = -1;
};

int do_train(const TrainArgs& a, const Globals& g, const std::vector<std::string>& argv,
             std::ostream& out) {
  check_device(g);
  Provenance prov("train", argv);
  const auto manifest = DatasetManifest::load(a.manifest);
  json cfg_json = a.config.empty() ? json::object() : read_json(a.config);
  if (g.seed) cfg_json["seed"] = *g.seed;
  if (g.threads) cfg_json["threads"] = *g.threads;
  if (a.max_steps >= 0) cfg_json["max_steps"] = a.max_steps;
  if (!a.direction.empty()) {
    const auto comma = a.direction.find(',');
    if (comma == std::string::npos) throw InvalidInput("--direction expects SOURCE,TARGET");
    cfg_json["direction"] = {std::stoi(a.direction.substr(0, comma)),
                             std::stoi(a.direction.substr(comma + 1))};
  }
  const auto config = train_config_from_json(cfg_json);
  fs::create_directories(a.out);
  prov["config"] = to_json(config);
  prov["seed"] = config.seed;
  prov["manifest"] = fs::absolute(a.manifest).string();

  TrainOptions opts;
  opts.run_dir = a.out;
  const auto run = train(manifest, config, opts);
  out << "trained " << run.steps_completed << " steps over " << run.epochs_completed
      << " epochs; " << run.checkpoints.size() << " ensemble checkpoints in "
      << (a.out / "checkpoints").string() << '\n';
  prov["steps"] = run.steps_completed;
  prov["epochs"] = run.epochs_completed;
  json epochs = json::array();
  for (const auto& c : run.checkpoints) epochs.push_back(c.epoch);
  prov["checkpoint_epochs"] = epochs;
  prov["outputs"] = {"config.json", "telemetry.csv", "checkpoints/"};
  prov.finish(a.out);
  return 0;
}

// --- infer -----------------------------------------------------------------

struct InferArgs {
  fs::path run;
  fs::path manifest;
  int source_group = 0;
  fs::path out;
  bool no_png = false;
};

int do_infer(const InferArgs& a, const Globals& g, const std::vector<std::string>& argv,
             std::ostream& out, std::ostream& err) {
  check_device(g);
  Provenance prov("infer", argv);
  const auto run_config = read_json(a.run / "config.json");
  auto config = train_config_from_json(
      [&] {
        json j = run_config;
        j.erase("resolved_channels");
        return j;
      }());
  if (g.threads) config.threads = *g.threads;
  configure_torch(config);
  const auto channels = run_config.at("resolved_channels").get<std::vector<std::string>>();
  const auto manifest = DatasetManifest::load(a.manifest);
  for (const auto& name : channels) {
    if (std::find(manifest.channel_names.begin(), manifest.channel_names.end(), name) ==
        manifest.channel_names.end()) {
      throw ShapeMismatch("incompatible checkpoint architecture: trained on channel '" + name +
                          "' which the manifest lacks");
    }
  }
  GeneratorConfig expected = config.generator;
  expected.channels = static_cast<std::int64_t>(channels.size());
  const auto ensemble = Ensemble::load(a.run, &expected);

  const fs::path out_dir = a.out.empty() ? a.run / "counterfactuals" : a.out;
  DatasetTranslateOptions opts;
  opts.translate = {config.patch_size, config.stride, config.batch_size};
  opts.channels = channels;
  opts.downscale = config.downscale;
  opts.out_dir = out_dir;
  opts.write_png = !a.no_png;
  const auto translated = translate_dataset(ensemble, manifest, parse_group(a.source_group), opts);

  json epochs = json::array();
  for (const auto& m : ensemble.members()) epochs.push_back(m.epoch);
  const json meta = {{"run", fs::absolute(a.run).string()},
                     {"source_group", a.source_group},
                     {"channels", channels},
                     {"downscale", config.downscale},
                     {"patch_size", config.patch_size},
                     {"stride", config.stride},
                     {"ensemble_epochs", epochs}};
  save_results(out_dir, translated.results, meta);
  for (const auto& f : translated.failures) {
    err << "error: image " << f.image_id << ": " << f.message << '\n';
  }
  out << "translated " << translated.results.size() << " images with a " << ensemble.size()
      << "-member ensemble into " << out_dir.string() << '\n';
  prov["config"] = meta;
  prov["seed"] = config.seed;
  prov["failures"] = translated.failures.size();
  prov["outputs"] = {"results.json", "*.input.*", "*.generated.*", "*.difference.*", "figures/"};
  prov.finish(out_dir);
  return translated.failures.empty() ? 0 : 1;
}

// --- analyze / report ------------------------------------------------------

struct AnalyzeArgs {
  fs::path results;
  fs::path manifest;
  fs::path report;
  std::size_t top_k = 7;
  bool no_figures = false;
  bool raw_scale = false;
};

int do_analyze(const AnalyzeArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  Provenance prov("analyze", argv);
  const auto loaded = load_results(a.results);
  const auto manifest = DatasetManifest::load(a.manifest);
  ReportOptions opts;
  opts.channels = loaded.metadata.at("channels").get<std::vector<std::string>>();
  opts.downscale = loaded.metadata.at("downscale").get<int>();
  opts.top_k = a.top_k;
  opts.raw_scale = a.raw_scale;
  const auto report = build_report(loaded.results, manifest, opts);

  const fs::path dir = a.report.parent_path().empty() ? fs::path(".") : a.report.parent_path();
  fs::create_directories(dir);
  {
    std::ofstream csv(a.report);
    if (!csv) throw IoError("cannot write " + a.report.string());
    csv << report_csv(report);
  }
  fs::path json_path = a.report;
  json_path.replace_extension(".json");
  write_json(json_path, to_json(report));
  if (!a.no_figures) write_report_figures(dir / "figures", report);
  out << report_table(report, true);
  prov["config"] = {{"results", fs::absolute(a.results).string()},
                    {"top_k", a.top_k},
                    {"raw_scale", a.raw_scale}};
  prov["outputs"] = {a.report.filename().string(), json_path.filename().string(), "figures/"};
  prov.finish(dir);
  return 0;
}

int do_report(const fs::path& report_path, bool top_only, const fs::path& figures,
              std::ostream& out) {
  fs::path path = report_path;
  if (path.extension() != ".json") path.replace_extension(".json");
  if (!fs::exists(path)) {
    throw IoError("missing report: " + path.string() + " not found; run `cf-translate analyze` first");
  }
  const auto report = report_from_json(read_json(path));
  out << report_table(report, top_only);
  if (!figures.empty()) write_report_figures(figures, report);
  return 0;
}

}  // namespace

void append_run_record(const fs::path& dir, const json& record) {
  const auto path = dir / "run.json";
  json doc = json::object();
  if (fs::exists(path)) doc = read_json(path);
  if (!doc.contains("records")) doc["records"] = json::array();
  doc["records"].push_back(record);
  write_json(path, doc);
}

int run_subcommand(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Counterfactual translation of multi-channel images between outcome groups",
               "cf-translate"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed (overrides config files)");
  app.add_option("--device", g.device, "Compute device")->capture_default_str();
  app.add_option("--threads", g.threads, "Intra-op thread count")->check(CLI::PositiveNumber);
  app.set_version_flag("--version", kVersion);

  IngestArgs ingest_args;
  auto* ingest_cmd = app.add_subcommand("ingest", "Normalise images and add them to a manifest");
  ingest_cmd->add_option("--input", ingest_args.input, "Image file or directory")->required();
  ingest_cmd->add_option("--group", ingest_args.group, "Group label")->required()->check(CLI::Range(0, 1));
  ingest_cmd->add_option("--manifest", ingest_args.manifest, "Manifest to create or extend")->required();
  ingest_cmd->add_option("--validation", ingest_args.validation, "Image id to flag as validation");
  ingest_cmd->add_option("--channel-names", ingest_args.channel_names, "Override channel names")
      ->delimiter(',');
  ingest_cmd->add_flag("--no-normalize", ingest_args.no_normalize, "Store intensities unscaled");

  fs::path synth_spec, synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic two-group dataset");
  synth_cmd->add_option("--spec", synth_spec, "Synthetic spec JSON (defaults if omitted)");
  synth_cmd->add_option("--out", synth_out, "Output dataset directory")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a translation network");
  train_cmd->add_option("--manifest", train_args.manifest, "Dataset manifest")->required();
  train_cmd->add_option("--config", train_args.config, "Training config JSON");
  train_cmd->add_option("--out", train_args.out, "Run directory")->required();
  train_cmd->add_option("--direction", train_args.direction, "SOURCE,TARGET groups, e.g. 0,1");
  train_cmd->add_option("--max-steps", train_args.max_steps, "Cap on generator updates");

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "Translate every source-group image");
  infer_cmd->add_option("--run", infer_args.run, "Run directory from train")->required();
  infer_cmd->add_option("--manifest", infer_args.manifest, "Dataset manifest")->required();
  infer_cmd->add_option("--source-group", infer_args.source_group, "Group to translate")
      ->required()
      ->check(CLI::Range(0, 1));
  infer_cmd->add_option("--out", infer_args.out, "Output directory (default RUN/counterfactuals)");
  infer_cmd->add_flag("--no-png", infer_args.no_png, "Skip per-channel PNG panels");

  AnalyzeArgs analyze_args;
  auto* analyze_cmd = app.add_subcommand("analyze", "Channel metrics and t-tests");
  analyze_cmd->add_option("--results", analyze_args.results, "Output directory of infer")->required();
  analyze_cmd->add_option("--manifest", analyze_args.manifest, "Dataset manifest")->required();
  analyze_cmd->add_option("--report", analyze_args.report, "CSV report path")->required();
  analyze_cmd->add_option("--top-k", analyze_args.top_k, "Channels flagged for figures");
  analyze_cmd->add_flag("--no-figures", analyze_args.no_figures, "Skip bar-chart PNGs");
  analyze_cmd->add_flag("--raw-scale", analyze_args.raw_scale,
                        "t-tests on channel means at the original intensity scale");

  fs::path report_path, report_figures;
  bool report_top = false;
  auto* report_cmd = app.add_subcommand("report", "Print a report produced by analyze");
  report_cmd->add_option("--report", report_path, "report.csv or report.json")->required();
  report_cmd->add_flag("--top", report_top, "Only the top-k channels");
  report_cmd->add_option("--figures", report_figures, "Directory for bar-chart PNGs");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  std::vector<std::string> argv{"cf-translate"};
  argv.insert(argv.end(), args.begin(), args.end());
  try {
    if (*ingest_cmd) return do_ingest(ingest_args, argv, out);
    if (*synth_cmd) return do_synth(synth_spec, synth_out, g, argv, out, err);
    if (*train_cmd) return do_train(train_args, g, argv, out);
    if (*infer_cmd) return do_infer(infer_args, g, argv, out, err);
    if (*analyze_cmd) return do_analyze(analyze_args, argv, out);
    if (*report_cmd) return do_report(report_path, report_top, report_figures, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace cft

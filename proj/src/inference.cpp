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

#include "cft/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <regex>

#include "cft/error.hpp"
#include "cft/patch_grid.hpp"
#include "cft/png_writer.hpp"

namespace cft {

namespace fs = std::filesystem;
using nlohmann::json;

CounterfactualPixel split_counterfactual(float input, float raw) {
  constexpr float kInf = std::numeric_limits<float>::infinity();
  float d = raw - input;
  for (int it = 0; it < 64; ++it) {
    const float g = input + d;
    if (!(g > 0.0f)) {
      d = std::nextafter(d, kInf);
    } else if (!(g < 1.0f)) {
      d = std::nextafter(d, -kInf);
    } else if (g - input == d) {
      return {g, d};
    } else {
      d = g - input;
    }
  }
  return {raw, raw - input};
}

Ensemble::Ensemble(std::int64_t channels, std::vector<EnsembleMember> members)
    : channels_(channels), members_(std::move(members)) {
  if (members_.empty()) throw InvalidInput("an ensemble needs at least one member");
  std::sort(members_.begin(), members_.end(), [](const auto& a, const auto& b) {
    return std::tie(a.epoch, a.fingerprint) < std::tie(b.epoch, b.fingerprint);
  });
}

PatchTranslator translator_for(ResidualGenerator generator) {
  generator->eval();
  return [generator](const torch::Tensor& x) mutable {
    torch::NoGradGuard no_grad;
    return generate(generator, x);
  };
}

Ensemble Ensemble::from_snapshots(const std::vector<Snapshot>& snapshots) {
  if (snapshots.empty()) throw InvalidInput("no checkpoints to build an ensemble from");
  const auto config = snapshots.front().generator->config();
  std::vector<EnsembleMember> members;
  for (const auto& s : snapshots) {
    if (!(s.generator->config() == config)) {
      throw ShapeMismatch("ensemble members disagree on architecture");
    }
    members.push_back({s.epoch, parameter_fingerprint(*s.generator), translator_for(s.generator)});
  }
  return Ensemble(config.channels, std::move(members));
}

Ensemble Ensemble::load(const fs::path& run_dir, const GeneratorConfig* expected) {
  const auto dir = run_dir / "checkpoints";
  if (!fs::is_directory(dir)) throw IoError("run directory has no checkpoints/: " + run_dir.string());
  static const std::regex kName(R"(generator_epoch_\d+\.pt)");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (std::regex_match(e.path().filename().string(), kName)) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no ensemble checkpoints in " + dir.string());
  std::vector<EnsembleMember> members;
  std::optional<GeneratorConfig> config;
  if (expected) config = *expected;
  for (const auto& f : files) {
    auto loaded = load_generator(f, config ? &*config : nullptr);
    if (!config) config = loaded.generator->config();
    members.push_back({loaded.epoch, parameter_fingerprint(*loaded.generator),
                       translator_for(loaded.generator)});
  }
  return Ensemble(config->channels, std::move(members));
}

std::vector<float> translate_member(const PatchTranslator& member, const MultiChannelImage& img,
                                    const TranslateOptions& options) {
  const auto grid = build_grid(img.height(), img.width(), options.patch_size, options.stride);
  const auto c = img.channels();
  const auto p = options.patch_size;
  const auto len = c * p * p;
  const auto n = static_cast<std::int64_t>(grid.size());
  std::vector<float> predictions(static_cast<std::size_t>(n * len));
  const auto batch = std::max<std::int64_t>(1, options.batch_size);
  for (std::int64_t start = 0; start < n; start += batch) {
    const auto count = std::min(batch, n - start);
    auto in = torch::empty({count, c, p, p}, torch::kFloat32);
    for (std::int64_t b = 0; b < count; ++b) {
      extract_into(img, grid, static_cast<std::size_t>(start + b),
                   std::span<float>(in.data_ptr<float>() + b * len, static_cast<std::size_t>(len)));
    }
    const auto out = member(in).to(torch::kFloat32).contiguous();
    if (out.sizes() != in.sizes()) throw ShapeMismatch("translator changed the patch shape");
    std::copy_n(out.data_ptr<float>(), count * len, predictions.data() + start * len);
  }
  return stitch(std::span<const float>(predictions), c, grid);
}

CounterfactualResult translate_image(const Ensemble& ensemble, const MultiChannelImage& img,
                                     const TranslateOptions& options) {
  if (img.channels() != ensemble.channels()) {
    throw ShapeMismatch("image " + img.image_id() + " has " + std::to_string(img.channels()) +
                        " channels but the ensemble expects " + std::to_string(ensemble.channels()));
  }
  std::vector<double> sum(img.pixels().size(), 0.0);
  std::vector<double> seconds;
  for (const auto& member : ensemble.members()) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = translate_member(member.translate, img, options);
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += out[i];
  }
  const auto n = static_cast<double>(ensemble.size());
  const auto x = img.pixels();
  std::vector<float> generated(sum.size());
  std::vector<float> difference(sum.size());
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const auto split = split_counterfactual(x[i], static_cast<float>(sum[i] / n));
    generated[i] = split.generated;
    difference[i] = split.difference;
  }
  return {img, img.with_pixels(std::move(generated)), std::move(difference), std::move(seconds)};
}

DatasetTranslation translate_dataset(const Ensemble& ensemble, const DatasetManifest& manifest,
                                     Group source, const DatasetTranslateOptions& options) {
  const auto entries = manifest.group_entries(source);
  if (entries.empty()) throw InvalidInput("empty source group");
  DatasetTranslation out;
  for (const auto* e : entries) {
    try {
      const auto img = downscale(select_channels(manifest.load_image(*e), options.channels),
                                 options.downscale);
      out.results.push_back(translate_image(ensemble, img, options.translate));
      if (options.out_dir && options.write_png) {
        write_visualizations(*options.out_dir / "figures" / safe_filename(e->image_id),
                             out.results.back());
      }
    } catch (const std::exception& ex) {
      out.failures.push_back({e->image_id, ex.what()});
    }
  }
  return out;
}

void write_visualizations(const fs::path& dir, const CounterfactualResult& r) {
  const auto& img = r.input;
  const auto plane = static_cast<std::size_t>(img.shape().plane());
  const auto w = static_cast<std::uint32_t>(img.width());
  const auto h = static_cast<std::uint32_t>(img.height());
  for (std::int64_t k = 0; k < img.channels(); ++k) {
    const auto name = safe_filename(img.channel_names()[static_cast<std::size_t>(k)]);
    const std::span<const float> diff(r.difference.data() + k * plane, plane);
    float peak = 0.0f;
    for (const float d : diff) peak = std::max(peak, std::abs(d));
    std::vector<float> added(plane), subtracted(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      added[i] = std::max(diff[i], 0.0f);
      subtracted[i] = std::max(-diff[i], 0.0f);
    }
    write_png_scaled(dir / (name + "_input.png"), w, h, img.channel(k), 0.0f, 1.0f);
    write_png_scaled(dir / (name + "_added.png"), w, h, added, 0.0f, peak);
    write_png_scaled(dir / (name + "_subtracted.png"), w, h, subtracted, 0.0f, peak);
    write_png_scaled(dir / (name + "_output.png"), w, h, r.generated.channel(k), 0.0f, 1.0f);
  }
}

void save_results(const fs::path& dir, const std::vector<CounterfactualResult>& results,
                  const json& metadata) {
  fs::create_directories(dir);
  json images = json::array();
  for (const auto& r : results) {
    const auto stem = safe_filename(r.input.image_id());
    write_tensor(dir / (stem + ".input"), r.input);
    write_tensor(dir / (stem + ".generated"), r.generated);
    write_tensor(dir / (stem + ".difference"), r.input.with_pixels(r.difference),
                 {{"signed", true}});
    images.push_back({{"image_id", r.input.image_id()},
                      {"group", to_int(r.input.group())},
                      {"input", stem + ".input.json"},
                      {"generated", stem + ".generated.json"},
                      {"difference", stem + ".difference.json"},
                      {"member_seconds", r.member_seconds}});
  }
  json index = metadata.is_object() ? metadata : json::object();
  index["images"] = images;
  std::ofstream out(dir / "results.json");
  if (!out) throw IoError("cannot write " + (dir / "results.json").string());
  out << index.dump(2) << '\n';
}

LoadedResults load_results(const fs::path& dir) {
  const auto index_path = dir / "results.json";
  if (!fs::exists(index_path)) {
    throw IoError("missing results: " + index_path.string() +
                  " not found; run `cf-translate infer` first");
  }
  std::ifstream in(index_path);
  json index;
  try {
    index = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInput("malformed " + index_path.string() + ": " + e.what());
  }
  LoadedResults out;
  for (const auto& e : index.at("images")) {
    const auto id = e.at("image_id").get<std::string>();
    const auto g = group_from_int(e.at("group").get<int>());
    auto input = read_tensor(dir / e.at("input").get<std::string>()).with_identity(id, g);
    auto generated = read_tensor(dir / e.at("generated").get<std::string>()).with_identity(id, g);
    const auto diff = read_tensor(dir / e.at("difference").get<std::string>());
    if (!(input.shape() == generated.shape()) || !(input.shape() == diff.shape())) {
      throw ShapeMismatch("stored tensors for " + id + " disagree on shape");
    }
    out.results.push_back({std::move(input), std::move(generated),
                           {diff.pixels().begin(), diff.pixels().end()},
                           e.value("member_seconds", std::vector<double>{})});
  }
  index.erase("images");
  out.metadata = std::move(index);
  return out;
}

}  // namespace cft

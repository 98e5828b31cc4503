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

#ifndef CFT_INFERENCE_HPP
#define CFT_INFERENCE_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cft/image_store.hpp"
#include "cft/networks.hpp"
#include "cft/trainer.hpp"

namespace cft {

/// Maps a [B, C, p, p] batch in [0, 1] to a [B, C, p, p] batch in (0, 1).
using PatchTranslator = std::function<torch::Tensor(const torch::Tensor&)>;

struct EnsembleMember {
  std::int64_t epoch = 0;
  std::uint64_t fingerprint = 0;  // tie-breaker for the canonical member order
  PatchTranslator translate;
};

/// Checkpoint ensemble. Members are kept sorted by (epoch, fingerprint) so
/// the combined output does not depend on the order they were supplied in.
class Ensemble {
 public:
  Ensemble(std::int64_t channels, std::vector<EnsembleMember> members);

  static Ensemble from_snapshots(const std::vector<Snapshot>& snapshots);
  /// Loads every `checkpoints/generator_epoch_*.pt` of a run directory.
  static Ensemble load(const std::filesystem::path& run_dir,
                       const GeneratorConfig* expected = nullptr);

  std::int64_t channels() const { return channels_; }
  const std::vector<EnsembleMember>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }

 private:
  std::int64_t channels_;
  std::vector<EnsembleMember> members_;
};

/// Wraps a generator as an eval-mode, no-grad translator.
PatchTranslator translator_for(ResidualGenerator generator);

struct CounterfactualResult {
  MultiChannelImage input;
  MultiChannelImage generated;
  std::vector<float> difference;      // generated - input, element-wise
  std::vector<double> member_seconds;  // wall time per ensemble member
};

struct CounterfactualPixel {
  float generated = 0.0f;
  float difference = 0.0f;
};

/// Picks the float32 output nearest `raw` (within a few ulp) such that
/// input + difference == generated and generated - input == difference hold
/// exactly in float arithmetic, with generated strictly inside (0, 1).
CounterfactualPixel split_counterfactual(float input, float raw);

struct TranslateOptions {
  std::int64_t patch_size = 256;
  std::int64_t stride = 60;
  std::int64_t batch_size = 16;
};

/// Patch-wise translation of a full normalised image by every member,
/// stitched per member and averaged across members.
CounterfactualResult translate_image(const Ensemble& ensemble, const MultiChannelImage& img,
                                     const TranslateOptions& options);

/// Whole-image output of one translator, before ensembling.
std::vector<float> translate_member(const PatchTranslator& member, const MultiChannelImage& img,
                                    const TranslateOptions& options);

struct DatasetTranslateOptions {
  TranslateOptions translate;
  std::vector<std::string> channels;  // network input channels, in order
  int downscale = 1;
  std::optional<std::filesystem::path> out_dir;
  bool write_png = false;
};

struct TranslationFailure {
  std::string image_id;
  std::string message;
};

struct DatasetTranslation {
  std::vector<CounterfactualResult> results;
  std::vector<TranslationFailure> failures;
};

/// One result per source-group image in manifest order. Per-image failures
/// are collected with their image id and the remaining images still run.
DatasetTranslation translate_dataset(const Ensemble& ensemble, const DatasetManifest& manifest,
                                     Group source, const DatasetTranslateOptions& options);

/// Per-channel PNGs: input, added (positive difference), subtracted
/// (negative difference) and output.
void write_visualizations(const std::filesystem::path& dir, const CounterfactualResult& result);

/// `results.json` index plus three tensors per image under `dir`.
void save_results(const std::filesystem::path& dir, const std::vector<CounterfactualResult>& results,
                  const nlohmann::json& metadata);

struct LoadedResults {
  std::vector<CounterfactualResult> results;
  nlohmann::json metadata;
};

/// Throws IoError mentioning `infer` when no results index exists.
LoadedResults load_results(const std::filesystem::path& dir);

}  // namespace cft

#endif  // CFT_INFERENCE_HPP

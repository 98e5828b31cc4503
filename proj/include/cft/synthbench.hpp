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

#ifndef CFT_SYNTHBENCH_HPP
#define CFT_SYNTHBENCH_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cft/image_store.hpp"
#include "json.hpp"

namespace cft {

/// Two-group synthetic dataset description. Group 0 images are smooth random
/// textures; group 1 images are independent textures with `effect_magnitude`
/// added to `effect_channel` inside a few random disks.
struct SynthSpec {
  std::int64_t channels = 4;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::int64_t n_per_group = 16;
  std::int64_t effect_channel = 2;
  double effect_magnitude = 0.25;
  int disk_count = 3;
  double radius_min = 4.0;
  double radius_max = 8.0;
  double blur_radius = 0.0;  // 0: height / 8
  double base_low = 0.2;     // +-2 sd of the texture before noise
  double base_high = 0.5;
  double level_sd = 0.015;   // per-image, per-channel shift of the texture level
  double noise = 0.02;       // std-dev of additive white noise
  std::uint64_t seed = 0;
  bool validation_image = false;  // flag the first group-0 image

  void validate() const;
};

SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& spec);

struct Disk {
  double row = 0.0;
  double col = 0.0;
  double radius = 0.0;
  bool operator==(const Disk&) const = default;
};

/// Effect geometry sampled for one image (applied only to group 1).
struct Geometry {
  std::vector<Disk> disks;
  bool contains(std::int64_t row, std::int64_t col) const;
  bool operator==(const Geometry&) const = default;
};

nlohmann::json to_json(const Geometry& g);
Geometry geometry_from_json(const nlohmann::json& j);

struct SynthDataset {
  DatasetManifest manifest;
  std::vector<MultiChannelImage> images;  // manifest order
  std::vector<Geometry> geometry;         // parallel to images
  std::vector<std::string> warnings;
};

/// Deterministic in `spec.seed`. When `out_dir` is given, writes
/// manifest.json, synth_spec.json and images/<id>.{f32,json} with the
/// geometry stored in each sidecar.
SynthDataset generate_dataset(const SynthSpec& spec,
                              const std::optional<std::filesystem::path>& out_dir = {});

/// The true counterfactual of a group-0 image: +effect_magnitude inside the
/// image's own geometry on the effect channel, clipped to [0, 1].
MultiChannelImage oracle_translate(const MultiChannelImage& img, const Geometry& geometry,
                                   const SynthSpec& spec);

/// Reads the geometry recorded in an image sidecar; throws InvalidInput if absent.
Geometry read_geometry(const std::filesystem::path& sidecar);

}  // namespace cft

#endif  // CFT_SYNTHBENCH_HPP

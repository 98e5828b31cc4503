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

#ifndef CFT_IMAGE_STORE_HPP
#define CFT_IMAGE_STORE_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace cft {

/// Binary outcome-group label of an image.
enum class Group : std::uint8_t { kZero = 0, kOne = 1 };

Group group_from_int(int value);
inline int to_int(Group g) { return static_cast<int>(g); }

struct ImageShape {
  std::int64_t channels = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;

  std::int64_t plane() const { return height * width; }
  std::int64_t numel() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

std::string to_string(const ImageShape& shape);

/// A C x H x W float32 intensity array (channel-major) with channel names,
/// an identifier, and a group label. Immutable after construction.
class MultiChannelImage {
 public:
  MultiChannelImage(ImageShape shape, std::vector<float> pixels,
                    std::vector<std::string> channel_names, std::string image_id,
                    Group group);

  const ImageShape& shape() const { return shape_; }
  std::int64_t channels() const { return shape_.channels; }
  std::int64_t height() const { return shape_.height; }
  std::int64_t width() const { return shape_.width; }

  std::span<const float> pixels() const { return pixels_; }
  std::span<const float> channel(std::int64_t k) const;
  float at(std::int64_t k, std::int64_t i, std::int64_t j) const {
    return pixels_[static_cast<std::size_t>((k * shape_.height + i) * shape_.width + j)];
  }

  const std::vector<std::string>& channel_names() const { return channel_names_; }
  const std::string& image_id() const { return image_id_; }
  Group group() const { return group_; }

  /// Same metadata, new pixel buffer of identical shape.
  MultiChannelImage with_pixels(std::vector<float> pixels) const;
  MultiChannelImage with_identity(std::string image_id, Group group) const;

 private:
  ImageShape shape_;
  std::vector<float> pixels_;
  std::vector<std::string> channel_names_;
  std::string image_id_;
  Group group_;
};

struct ChannelRange {
  double min = 0.0;
  double max = 0.0;
};

struct NormalizedImage {
  MultiChannelImage image;
  std::vector<ChannelRange> ranges;  // pre-normalization (min, max) per channel
};

/// Per-channel min-max scaling to [0, 1] over that image's own pixels.
/// Constant channels become all zeros.
NormalizedImage normalize_channels(const MultiChannelImage& img);

/// Nearest-neighbour downscaling: output (i, j) takes input (i*d, j*d).
MultiChannelImage downscale(const MultiChannelImage& img, int factor);

/// Keep only the named channels, in the given order.
MultiChannelImage select_channels(const MultiChannelImage& img,
                                  std::span<const std::string> names);

/// Channels fed to the networks: `include` if non-empty, otherwise every
/// channel whose name matches none of the `exclude` patterns. Patterns are
/// case-insensitive ECMAScript regexes matched against the full name.
std::vector<std::string> resolve_channel_selection(std::span<const std::string> available,
                                                   std::span<const std::string> include,
                                                   std::span<const std::string> exclude);

/// Default exclusion patterns: the three brightfield H&E channels.
std::vector<std::string> default_excluded_channels();

// ---------------------------------------------------------------------------
// Raw tensor container: `<stem>.f32` (little-endian float32, C*H*W values,
// channel-major) plus `<stem>.json` sidecar.

struct IngestOptions {
  std::optional<std::string> image_id;                   // default: file stem
  std::optional<std::vector<std::string>> channel_names; // overrides file names
};

/// Writes `<stem>.f32` and `<stem>.json`; returns the sidecar path. `extra`
/// fields are merged into the sidecar (e.g. synthetic geometry).
std::filesystem::path write_tensor(const std::filesystem::path& stem,
                                   const MultiChannelImage& img,
                                   const nlohmann::json& extra = nlohmann::json::object());

/// Reads an image from a sidecar (`.json`) or its data file (`.f32`).
MultiChannelImage read_tensor(const std::filesystem::path& path);

/// Reads a raw sidecar back as JSON (without pixel data).
nlohmann::json read_sidecar(const std::filesystem::path& path);

/// Reads a multi-page TIFF (one page per channel) or a raw tensor. Pixels are
/// cast to float; missing channel names default to the page index.
MultiChannelImage ingest(const std::filesystem::path& path, Group group,
                         const IngestOptions& options = {});

// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string image_id;
  std::filesystem::path path;  // relative to the manifest directory
  Group group = Group::kZero;
  std::string patient_id;
  bool validation = false;
  std::vector<ChannelRange> normalization;
};

/// On-disk dataset description (`manifest.json`).
class DatasetManifest {
 public:
  std::vector<std::string> channel_names;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<ManifestEntry> entries;

  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Directory that entry paths are relative to.
  std::filesystem::path root;

  /// Appends an entry after checking channel names and dimensions agree with
  /// what is already recorded.
  void add(ManifestEntry entry, const std::vector<std::string>& names, std::int64_t height,
           std::int64_t width);

  std::vector<const ManifestEntry*> group_entries(Group g) const;
  const ManifestEntry* validation_entry() const;
  const ManifestEntry& find(const std::string& image_id) const;

  /// Throws InvalidInput unless the manifest invariants hold. With
  /// `require_both_groups`, each group must have at least one entry.
  void validate(bool require_both_groups) const;

  MultiChannelImage load_image(const ManifestEntry& entry) const;
};

nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

}  // namespace cft

#endif  // CFT_IMAGE_STORE_HPP

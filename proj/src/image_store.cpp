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

#include "cft/image_store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <regex>
#include <set>

#include "cft/error.hpp"
#include "cft/tiff.hpp"

namespace cft {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "raw tensor container assumes a little-endian host");

Group group_from_int(int value) {
  if (value == 0) return Group::kZero;
  if (value == 1) return Group::kOne;
  throw InvalidInput("group label must be 0 or 1, got " + std::to_string(value));
}

std::string to_string(const ImageShape& shape) {
  return std::to_string(shape.channels) + "x" + std::to_string(shape.height) + "x" +
         std::to_string(shape.width);
}

MultiChannelImage::MultiChannelImage(ImageShape shape, std::vector<float> pixels,
                                     std::vector<std::string> channel_names,
                                     std::string image_id, Group group)
    : shape_(shape),
      pixels_(std::move(pixels)),
      channel_names_(std::move(channel_names)),
      image_id_(std::move(image_id)),
      group_(group) {
  if (shape_.channels < 1) throw InvalidInput("image " + image_id_ + " has no channels");
  if (shape_.height < 1 || shape_.width < 1) {
    throw InvalidInput("image " + image_id_ + " has empty spatial extent");
  }
  if (static_cast<std::int64_t>(pixels_.size()) != shape_.numel()) {
    throw ShapeMismatch("image " + image_id_ + ": " + std::to_string(pixels_.size()) +
                        " values do not fill shape " + to_string(shape_));
  }
  if (static_cast<std::int64_t>(channel_names_.size()) != shape_.channels) {
    throw ShapeMismatch("image " + image_id_ + ": " + std::to_string(channel_names_.size()) +
                        " channel names for " + std::to_string(shape_.channels) + " channels");
  }
  std::set<std::string> seen;
  for (const auto& name : channel_names_) {
    if (!seen.insert(name).second) {
      throw InvalidInput("image " + image_id_ + ": duplicate channel name '" + name + "'");
    }
  }
}

std::span<const float> MultiChannelImage::channel(std::int64_t k) const {
  if (k < 0 || k >= shape_.channels) throw InvalidInput("channel index out of range");
  return std::span<const float>(pixels_).subspan(static_cast<std::size_t>(k * shape_.plane()),
                                                 static_cast<std::size_t>(shape_.plane()));
}

MultiChannelImage MultiChannelImage::with_pixels(std::vector<float> pixels) const {
  return MultiChannelImage(shape_, std::move(pixels), channel_names_, image_id_, group_);
}

MultiChannelImage MultiChannelImage::with_identity(std::string image_id, Group group) const {
  return MultiChannelImage(shape_, pixels_, channel_names_, std::move(image_id), group);
}

NormalizedImage normalize_channels(const MultiChannelImage& img) {
  const auto plane = static_cast<std::size_t>(img.shape().plane());
  std::vector<float> out(img.pixels().size());
  std::vector<ChannelRange> ranges;
  ranges.reserve(static_cast<std::size_t>(img.channels()));
  for (std::int64_t k = 0; k < img.channels(); ++k) {
    const auto ch = img.channel(k);
    const auto [lo, hi] = std::minmax_element(ch.begin(), ch.end());
    const double min = *lo;
    const double max = *hi;
    ranges.push_back({min, max});
    float* dst = out.data() + static_cast<std::size_t>(k) * plane;
    if (max > min) {
      const double span = max - min;
      for (std::size_t i = 0; i < plane; ++i) {
        dst[i] = static_cast<float>((static_cast<double>(ch[i]) - min) / span);
      }
    } else {
      std::fill(dst, dst + plane, 0.0f);
    }
  }
  return {img.with_pixels(std::move(out)), std::move(ranges)};
}

MultiChannelImage downscale(const MultiChannelImage& img, int factor) {
  if (factor < 1) throw InvalidInput("downscale factor must be >= 1, got " + std::to_string(factor));
  if (factor == 1) return img;
  if (img.height() < factor || img.width() < factor) {
    throw InvalidInput("image " + img.image_id() + " (" + to_string(img.shape()) +
                       ") is smaller than downscale factor " + std::to_string(factor));
  }
  const ImageShape out_shape{img.channels(), img.height() / factor, img.width() / factor};
  std::vector<float> out(static_cast<std::size_t>(out_shape.numel()));
  std::size_t n = 0;
  for (std::int64_t k = 0; k < out_shape.channels; ++k) {
    for (std::int64_t i = 0; i < out_shape.height; ++i) {
      for (std::int64_t j = 0; j < out_shape.width; ++j) {
        out[n++] = img.at(k, i * factor, j * factor);
      }
    }
  }
  return MultiChannelImage(out_shape, std::move(out), img.channel_names(), img.image_id(),
                           img.group());
}

MultiChannelImage select_channels(const MultiChannelImage& img,
                                  std::span<const std::string> names) {
  const auto& have = img.channel_names();
  const auto plane = static_cast<std::size_t>(img.shape().plane());
  std::vector<float> out;
  out.reserve(names.size() * plane);
  for (const auto& name : names) {
    const auto it = std::find(have.begin(), have.end(), name);
    if (it == have.end()) {
      throw ShapeMismatch("image " + img.image_id() + " has no channel named '" + name + "'");
    }
    const auto ch = img.channel(it - have.begin());
    out.insert(out.end(), ch.begin(), ch.end());
  }
  return MultiChannelImage({static_cast<std::int64_t>(names.size()), img.height(), img.width()},
                           std::move(out), {names.begin(), names.end()}, img.image_id(),
                           img.group());
}

std::vector<std::string> default_excluded_channels() {
  return {"(h&e|he)[ _-]?(r|red)", "(h&e|he)[ _-]?(g|green)", "(h&e|he)[ _-]?(b|blue)"};
}

std::vector<std::string> resolve_channel_selection(std::span<const std::string> available,
                                                   std::span<const std::string> include,
                                                   std::span<const std::string> exclude) {
  if (!include.empty()) {
    for (const auto& name : include) {
      if (std::find(available.begin(), available.end(), name) == available.end()) {
        throw InvalidInput("selected channel '" + name + "' is not in the dataset");
      }
    }
    return {include.begin(), include.end()};
  }
  std::vector<std::regex> patterns;
  for (const auto& p : exclude) {
    patterns.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
  }
  std::vector<std::string> out;
  for (const auto& name : available) {
    const bool excluded = std::any_of(patterns.begin(), patterns.end(),
                                      [&](const std::regex& re) { return std::regex_match(name, re); });
    if (!excluded) out.push_back(name);
  }
  if (out.empty()) throw InvalidInput("channel selection excludes every channel");
  return out;
}

// ---------------------------------------------------------------------------

namespace {

fs::path data_path_for(const fs::path& sidecar, const json& meta) {
  if (meta.contains("data")) return sidecar.parent_path() / meta.at("data").get<std::string>();
  fs::path p = sidecar;
  p.replace_extension(".f32");
  return p;
}

fs::path sidecar_path_for(const fs::path& path) {
  if (path.extension() == ".json") return path;
  fs::path p = path;
  p.replace_extension(".json");
  return p;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInput("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

fs::path write_tensor(const fs::path& stem, const MultiChannelImage& img, const json& extra) {
  fs::path data = stem;
  data += ".f32";
  fs::path sidecar = stem;
  sidecar += ".json";
  if (!stem.parent_path().empty()) fs::create_directories(stem.parent_path());

  std::ofstream out(data, std::ios::binary);
  if (!out) throw IoError("cannot write " + data.string());
  const auto px = img.pixels();
  out.write(reinterpret_cast<const char*>(px.data()),
            static_cast<std::streamsize>(px.size() * sizeof(float)));
  if (!out) throw IoError("short write to " + data.string());

  json meta = extra.is_object() ? extra : json::object();
  meta["format"] = "cft-tensor";
  meta["version"] = 1;
  meta["dtype"] = "float32";
  meta["byte_order"] = "little";
  meta["shape"] = {img.channels(), img.height(), img.width()};
  meta["channel_names"] = img.channel_names();
  meta["image_id"] = img.image_id();
  meta["group"] = to_int(img.group());
  meta["data"] = data.filename().string();
  write_json_file(sidecar, meta);
  return sidecar;
}

json read_sidecar(const fs::path& path) { return read_json_file(sidecar_path_for(path)); }

MultiChannelImage read_tensor(const fs::path& path) {
  const fs::path sidecar = sidecar_path_for(path);
  const json meta = read_json_file(sidecar);
  try {
    if (meta.value("dtype", "float32") != "float32") {
      throw InvalidInput(sidecar.string() + ": only float32 tensors are supported");
    }
    const auto shape = meta.at("shape").get<std::vector<std::int64_t>>();
    if (shape.size() != 3) throw InvalidInput(sidecar.string() + ": shape must be [C, H, W]");
    const ImageShape s{shape[0], shape[1], shape[2]};
    if (s.channels < 1) throw InvalidInput(sidecar.string() + ": C must be >= 1");
    if (s.height < 1 || s.width < 1) throw InvalidInput(sidecar.string() + ": empty image");

    const fs::path data = data_path_for(sidecar, meta);
    std::ifstream in(data, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open " + data.string());
    const auto bytes = static_cast<std::int64_t>(in.tellg());
    if (bytes != s.numel() * static_cast<std::int64_t>(sizeof(float))) {
      throw ShapeMismatch(sidecar.string() + " declares shape " + to_string(s) + " (" +
                          std::to_string(s.numel()) + " values) but " + data.string() +
                          " holds " + std::to_string(bytes / 4) + " values");
    }
    in.seekg(0);
    std::vector<float> px(static_cast<std::size_t>(s.numel()));
    in.read(reinterpret_cast<char*>(px.data()), bytes);
    if (!in) throw IoError("short read from " + data.string());

    std::vector<std::string> names;
    if (meta.contains("channel_names")) {
      names = meta.at("channel_names").get<std::vector<std::string>>();
    } else {
      for (std::int64_t k = 0; k < s.channels; ++k) names.push_back(std::to_string(k));
    }
    const std::string id = meta.value("image_id", sidecar.stem().string());
    const Group g = group_from_int(meta.value("group", 0));
    return MultiChannelImage(s, std::move(px), std::move(names), id, g);
  } catch (const json::exception& e) {
    throw InvalidInput("malformed sidecar " + sidecar.string() + ": " + e.what());
  }
}

MultiChannelImage ingest(const fs::path& path, Group group, const IngestOptions& options) {
  if (!fs::exists(path)) throw IoError("no such file: " + path.string());
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });

  const std::string id = options.image_id.value_or(path.stem().string());
  if (ext == ".tif" || ext == ".tiff") {
    const auto pages = tiff::read_pages(path);
    if (pages.empty()) throw InvalidInput(path.string() + ": TIFF contains no pages (C=0)");
    const auto h = pages.front().height;
    const auto w = pages.front().width;
    std::vector<float> px;
    px.reserve(pages.size() * static_cast<std::size_t>(h) * w);
    std::vector<std::string> names;
    for (std::size_t k = 0; k < pages.size(); ++k) {
      if (pages[k].height != h || pages[k].width != w) {
        throw ShapeMismatch(path.string() + ": page " + std::to_string(k) + " is " +
                            std::to_string(pages[k].height) + "x" + std::to_string(pages[k].width) +
                            " but page 0 is " + std::to_string(h) + "x" + std::to_string(w));
      }
      px.insert(px.end(), pages[k].samples.begin(), pages[k].samples.end());
      names.push_back(pages[k].name.value_or(std::to_string(k)));
    }
    if (options.channel_names) {
      if (options.channel_names->size() != pages.size()) {
        throw ShapeMismatch(path.string() + ": " + std::to_string(options.channel_names->size()) +
                            " channel names supplied for " + std::to_string(pages.size()) +
                            " pages");
      }
      names = *options.channel_names;
    }
    return MultiChannelImage(
        {static_cast<std::int64_t>(pages.size()), static_cast<std::int64_t>(h),
         static_cast<std::int64_t>(w)},
        std::move(px), std::move(names), id, group);
  }
  if (ext == ".json" || ext == ".f32") {
    auto img = read_tensor(path);
    if (options.channel_names) {
      img = MultiChannelImage(img.shape(), {img.pixels().begin(), img.pixels().end()},
                              *options.channel_names, img.image_id(), img.group());
    }
    return img.with_identity(options.image_id.value_or(img.image_id()), group);
  }
  throw InvalidInput(path.string() + ": unrecognised container (expected .tif/.tiff or .json/.f32)");
}

// ---------------------------------------------------------------------------

json to_json(const DatasetManifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries) {
    json ranges = json::array();
    for (const auto& r : e.normalization) ranges.push_back({r.min, r.max});
    entries.push_back({{"image_id", e.image_id},
                       {"path", e.path.generic_string()},
                       {"group", to_int(e.group)},
                       {"patient_id", e.patient_id},
                       {"validation", e.validation},
                       {"normalization", ranges}});
  }
  return {{"version", 1},
          {"channel_names", m.channel_names},
          {"height", m.height},
          {"width", m.width},
          {"entries", entries}};
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  try {
    m.channel_names = j.at("channel_names").get<std::vector<std::string>>();
    m.height = j.at("height").get<std::int64_t>();
    m.width = j.at("width").get<std::int64_t>();
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry;
      entry.image_id = e.at("image_id").get<std::string>();
      entry.path = e.at("path").get<std::string>();
      entry.group = group_from_int(e.at("group").get<int>());
      entry.patient_id = e.value("patient_id", entry.image_id);
      entry.validation = e.value("validation", false);
      for (const auto& r : e.value("normalization", json::array())) {
        entry.normalization.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
      }
      m.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

DatasetManifest DatasetManifest::load(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing manifest: " + path.string());
  auto m = manifest_from_json(read_json_file(path));
  m.root = path.parent_path();
  m.validate(false);
  return m;
}

void DatasetManifest::save(const fs::path& path) const {
  validate(false);
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  write_json_file(path, to_json(*this));
}

void DatasetManifest::add(ManifestEntry entry, const std::vector<std::string>& names,
                          std::int64_t h, std::int64_t w) {
  if (entries.empty() && channel_names.empty()) {
    channel_names = names;
    height = h;
    width = w;
  }
  if (names != channel_names) {
    throw ShapeMismatch("image " + entry.image_id + " channel names differ from the manifest's");
  }
  if (h != height || w != width) {
    throw ShapeMismatch("image " + entry.image_id + " is " + std::to_string(h) + "x" +
                        std::to_string(w) + " but the manifest records " + std::to_string(height) +
                        "x" + std::to_string(width));
  }
  for (const auto& e : entries) {
    if (e.image_id == entry.image_id) {
      throw InvalidInput("duplicate image id '" + entry.image_id + "' in manifest");
    }
  }
  entries.push_back(std::move(entry));
  validate(false);
}

std::vector<const ManifestEntry*> DatasetManifest::group_entries(Group g) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.group == g) out.push_back(&e);
  }
  return out;
}

const ManifestEntry* DatasetManifest::validation_entry() const {
  for (const auto& e : entries) {
    if (e.validation) return &e;
  }
  return nullptr;
}

const ManifestEntry& DatasetManifest::find(const std::string& image_id) const {
  for (const auto& e : entries) {
    if (e.image_id == image_id) return e;
  }
  throw InvalidInput("manifest has no image '" + image_id + "'");
}

void DatasetManifest::validate(bool require_both_groups) const {
  std::set<std::string> names(channel_names.begin(), channel_names.end());
  if (names.size() != channel_names.size()) throw InvalidInput("manifest has duplicate channel names");
  if (!entries.empty() && channel_names.empty()) throw InvalidInput("manifest has no channels");
  std::set<std::string> ids;
  int validation = 0;
  for (const auto& e : entries) {
    if (!ids.insert(e.image_id).second) {
      throw InvalidInput("duplicate image id '" + e.image_id + "' in manifest");
    }
    if (e.validation) ++validation;
    if (!e.normalization.empty() && e.normalization.size() != channel_names.size()) {
      throw InvalidInput("image " + e.image_id + " normalization stats do not cover every channel");
    }
  }
  if (validation > 1) throw InvalidInput("manifest flags more than one validation image");
  if (require_both_groups) {
    for (const Group g : {Group::kZero, Group::kOne}) {
      if (group_entries(g).empty()) {
        throw InvalidInput("manifest has no images in group " + std::to_string(to_int(g)));
      }
    }
  }
}

MultiChannelImage DatasetManifest::load_image(const ManifestEntry& entry) const {
  auto img = read_tensor(root / entry.path);
  if (img.channel_names() != channel_names) {
    throw ShapeMismatch("image " + entry.image_id + " channel names differ from the manifest's");
  }
  if (img.height() != height || img.width() != width) {
    throw ShapeMismatch("image " + entry.image_id + " dimensions differ from the manifest's");
  }
  return img.with_identity(entry.image_id, entry.group);
}

}  // namespace cft

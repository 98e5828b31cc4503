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

#include "cft/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "cft/error.hpp"

namespace cft {

namespace fs = std::filesystem;
using nlohmann::json;

void SynthSpec::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidInput("invalid synthetic spec: " + what);
  };
  require(channels >= 1, "channels must be >= 1");
  require(height >= 1 && width >= 1, "height and width must be >= 1");
  require(n_per_group >= 1, "n_per_group must be >= 1");
  require(effect_channel >= 0 && effect_channel < channels, "effect_channel out of range");
  require(effect_magnitude >= 0.0 && effect_magnitude < 1.0, "effect_magnitude must lie in [0, 1)");
  require(disk_count >= 0, "disk_count must be >= 0");
  require(radius_min > 0.0 && radius_min <= radius_max, "need 0 < radius_min <= radius_max");
  require(blur_radius >= 0.0, "blur_radius must be >= 0");
  require(0.0 <= base_low && base_low <= base_high && base_high <= 1.0,
          "need 0 <= base_low <= base_high <= 1");
  require(level_sd >= 0.0, "level_sd must be >= 0");
  require(noise >= 0.0, "noise must be >= 0");
}

SynthSpec synth_spec_from_json(const json& j) {
  static const std::set<std::string> kKeys = {
      "channels",   "height",     "width",      "n_per_group", "effect_channel",
      "effect_magnitude", "disk_count", "radius_min", "radius_max", "blur_radius",
      "base_low",   "base_high",  "level_sd",   "noise",      "seed",        "validation_image"};
  if (!j.is_object()) throw InvalidInput("synthetic spec must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.count(key)) throw InvalidInput("unknown synthetic spec key '" + key + "'");
  }
  SynthSpec s;
  try {
    s.channels = j.value("channels", s.channels);
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.n_per_group = j.value("n_per_group", s.n_per_group);
    s.effect_channel = j.value("effect_channel", s.effect_channel);
    s.effect_magnitude = j.value("effect_magnitude", s.effect_magnitude);
    s.disk_count = j.value("disk_count", s.disk_count);
    s.radius_min = j.value("radius_min", s.radius_min);
    s.radius_max = j.value("radius_max", s.radius_max);
    s.blur_radius = j.value("blur_radius", s.blur_radius);
    s.base_low = j.value("base_low", s.base_low);
    s.base_high = j.value("base_high", s.base_high);
    s.level_sd = j.value("level_sd", s.level_sd);
    s.noise = j.value("noise", s.noise);
    s.seed = j.value("seed", s.seed);
    s.validation_image = j.value("validation_image", s.validation_image);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

json to_json(const SynthSpec& s) {
  return {{"channels", s.channels},       {"height", s.height},
          {"width", s.width},             {"n_per_group", s.n_per_group},
          {"effect_channel", s.effect_channel}, {"effect_magnitude", s.effect_magnitude},
          {"disk_count", s.disk_count},   {"radius_min", s.radius_min},
          {"radius_max", s.radius_max},   {"blur_radius", s.blur_radius},
          {"base_low", s.base_low},       {"base_high", s.base_high},
          {"level_sd", s.level_sd},       {"noise", s.noise},
          {"seed", s.seed},
          {"validation_image", s.validation_image}};
}

bool Geometry::contains(std::int64_t row, std::int64_t col) const {
  return std::any_of(disks.begin(), disks.end(), [&](const Disk& d) {
    const double dr = static_cast<double>(row) - d.row;
    const double dc = static_cast<double>(col) - d.col;
    return dr * dr + dc * dc <= d.radius * d.radius;
  });
}

json to_json(const Geometry& g) {
  json disks = json::array();
  for (const auto& d : g.disks) disks.push_back({d.row, d.col, d.radius});
  return {{"disks", disks}};
}

Geometry geometry_from_json(const json& j) {
  Geometry g;
  for (const auto& d : j.at("disks")) {
    g.disks.push_back({d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>()});
  }
  return g;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Portable uniform / normal draws on top of mt19937_64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

// One box-blur pass along rows or columns with edge clamping.
void box_blur(std::vector<double>& f, std::int64_t h, std::int64_t w, std::int64_t r, bool rows) {
  std::vector<double> out(f.size());
  const std::int64_t len = rows ? w : h;
  const std::int64_t lines = rows ? h : w;
  for (std::int64_t line = 0; line < lines; ++line) {
    auto at = [&](std::int64_t i) -> double& {
      i = std::clamp<std::int64_t>(i, 0, len - 1);
      return rows ? f[static_cast<std::size_t>(line * w + i)] : f[static_cast<std::size_t>(i * w + line)];
    };
    double acc = 0.0;
    for (std::int64_t i = -r; i <= r; ++i) acc += at(i);
    for (std::int64_t i = 0; i < len; ++i) {
      const auto idx = rows ? line * w + i : i * w + line;
      out[static_cast<std::size_t>(idx)] = acc / static_cast<double>(2 * r + 1);
      acc += at(i + r + 1) - at(i - r);
    }
  }
  f.swap(out);
}

// Standard deviation of uniform noise after two separable box passes, away
// from the image border.
double blurred_field_sd(std::int64_t radius) {
  const std::size_t width = static_cast<std::size_t>(2 * radius + 1);
  std::vector<double> kernel(2 * width - 1, 0.0);
  for (std::size_t i = 0; i < width; ++i) {
    for (std::size_t j = 0; j < width; ++j) kernel[i + j] += 1.0 / static_cast<double>(width * width);
  }
  double sq = 0.0;
  for (const double k : kernel) sq += k * k;
  return std::sqrt(sq * sq / 12.0);
}

std::vector<float> base_texture(const SynthSpec& spec, Rng& rng) {
  const auto h = spec.height, w = spec.width;
  const auto plane = static_cast<std::size_t>(h * w);
  const auto radius = static_cast<std::int64_t>(
      std::lround(spec.blur_radius > 0.0 ? spec.blur_radius : static_cast<double>(h) / 8.0));
  // +-2 sd of the smoothed field spans [base_low, base_high].
  const double mid = 0.5 * (spec.base_low + spec.base_high);
  const double gain = 0.25 * (spec.base_high - spec.base_low) / blurred_field_sd(radius);
  std::vector<float> out;
  out.reserve(plane * static_cast<std::size_t>(spec.channels));
  for (std::int64_t k = 0; k < spec.channels; ++k) {
    std::vector<double> f(plane);
    for (auto& v : f) v = rng.uniform();
    for (int pass = 0; pass < 2; ++pass) {
      box_blur(f, h, w, radius, true);
      box_blur(f, h, w, radius, false);
    }
    double mean = 0.0;
    for (const double v : f) mean += v;
    mean /= static_cast<double>(plane);
    const double level = mid + spec.level_sd * rng.normal();
    for (const double v : f) {
      const double x = level + gain * (v - mean) + spec.noise * rng.normal();
      out.push_back(static_cast<float>(std::clamp(x, 0.0, 1.0)));
    }
  }
  return out;
}

Geometry sample_geometry(const SynthSpec& spec, Rng& rng) {
  Geometry g;
  for (int i = 0; i < spec.disk_count; ++i) {
    const double r = rng.uniform(spec.radius_min, spec.radius_max);
    g.disks.push_back({rng.uniform(0.0, static_cast<double>(spec.height)),
                       rng.uniform(0.0, static_cast<double>(spec.width)), r});
  }
  return g;
}

struct EffectStats {
  std::int64_t inside = 0;
  std::int64_t clipped = 0;
};

EffectStats apply_effect(std::vector<float>& px, const Geometry& g, const SynthSpec& spec) {
  EffectStats s;
  const auto plane = spec.height * spec.width;
  float* ch = px.data() + spec.effect_channel * plane;
  for (std::int64_t i = 0; i < spec.height; ++i) {
    for (std::int64_t j = 0; j < spec.width; ++j) {
      if (!g.contains(i, j)) continue;
      ++s.inside;
      const double v = static_cast<double>(ch[i * spec.width + j]) + spec.effect_magnitude;
      if (v > 1.0) ++s.clipped;
      ch[i * spec.width + j] = static_cast<float>(std::min(v, 1.0));
    }
  }
  return s;
}

std::vector<std::string> synth_channel_names(std::int64_t c) {
  std::vector<std::string> names;
  for (std::int64_t k = 0; k < c; ++k) names.push_back("marker_" + std::to_string(k));
  return names;
}

}  // namespace

SynthDataset generate_dataset(const SynthSpec& spec, const std::optional<fs::path>& out_dir) {
  spec.validate();
  SynthDataset ds;
  const auto names = synth_channel_names(spec.channels);
  ds.manifest.channel_names = names;
  ds.manifest.height = spec.height;
  ds.manifest.width = spec.width;
  for (const Group group : {Group::kZero, Group::kOne}) {
    for (std::int64_t n = 0; n < spec.n_per_group; ++n) {
      const std::uint64_t stream =
          splitmix64(spec.seed ^ splitmix64((static_cast<std::uint64_t>(to_int(group)) << 32) |
                                            static_cast<std::uint64_t>(n)));
      Rng rng(stream);
      auto px = base_texture(spec, rng);
      const auto geometry = sample_geometry(spec, rng);
      char id[32];
      std::snprintf(id, sizeof id, "g%d_%03lld", to_int(group), static_cast<long long>(n));
      if (group == Group::kOne && spec.effect_magnitude > 0.0) {
        const auto stats = apply_effect(px, geometry, spec);
        if (stats.inside > 0 && 2 * stats.clipped > stats.inside) {
          ds.warnings.push_back(std::string("image ") + id + ": " + std::to_string(stats.clipped) +
                                " of " + std::to_string(stats.inside) +
                                " effect pixels clipped at 1; the effect is no longer additive");
        }
      }
      ManifestEntry entry;
      entry.image_id = id;
      entry.path = fs::path("images") / (std::string(id) + ".json");
      entry.group = group;
      entry.patient_id = id;
      entry.validation = spec.validation_image && group == Group::kZero && n == 0;
      ds.manifest.entries.push_back(entry);
      ds.images.emplace_back(ImageShape{spec.channels, spec.height, spec.width}, std::move(px),
                             names, id, group);
      ds.geometry.push_back(geometry);
    }
  }
  ds.manifest.validate(true);

  if (out_dir) {
    fs::create_directories(*out_dir / "images");
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
      write_tensor(*out_dir / "images" / ds.images[i].image_id(), ds.images[i],
                   {{"geometry", to_json(ds.geometry[i])}});
    }
    ds.manifest.root = *out_dir;
    ds.manifest.save(*out_dir / "manifest.json");
    std::ofstream(*out_dir / "synth_spec.json") << to_json(spec).dump(2) << '\n';
  }
  return ds;
}

MultiChannelImage oracle_translate(const MultiChannelImage& img, const Geometry& geometry,
                                   const SynthSpec& spec) {
  if (img.channels() != spec.channels || img.height() != spec.height || img.width() != spec.width) {
    throw ShapeMismatch("image " + img.image_id() + " does not match the synthetic spec");
  }
  std::vector<float> px(img.pixels().begin(), img.pixels().end());
  apply_effect(px, geometry, spec);
  return img.with_pixels(std::move(px));
}

Geometry read_geometry(const fs::path& sidecar) {
  const auto meta = read_sidecar(sidecar);
  if (!meta.contains("geometry")) {
    throw InvalidInput("missing geometry record in " + sidecar.string());
  }
  return geometry_from_json(meta.at("geometry"));
}

}  // namespace cft

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

#include "cft/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "cft/error.hpp"
#include "cft/png_writer.hpp"
#include "cft/trainer.hpp"

namespace cft {

using nlohmann::json;

std::vector<double> channel_means(const MultiChannelImage& img) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(img.channels()));
  for (std::int64_t k = 0; k < img.channels(); ++k) {
    const auto ch = img.channel(k);
    const double sum = std::accumulate(ch.begin(), ch.end(), 0.0);
    out.push_back(sum / static_cast<double>(ch.size()));
  }
  return out;
}

std::vector<double> ChannelMeans::column(std::size_t channel) const {
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& row : values) out.push_back(row.at(channel));
  return out;
}

ChannelMeans channel_means(std::span<const MultiChannelImage> images) {
  ChannelMeans m;
  for (const auto& img : images) {
    m.image_ids.push_back(img.image_id());
    m.values.push_back(channel_means(img));
  }
  return m;
}

namespace {

template <typename Term>
ChannelVariation variation(std::span<const CounterfactualResult> results, Term term) {
  if (results.empty()) throw InvalidInput("channel variation needs at least one result");
  const auto& names = results.front().input.channel_names();
  const auto c = results.front().input.channels();
  ChannelVariation v;
  v.raw.assign(static_cast<std::size_t>(c), 0.0);
  for (const auto& r : results) {
    if (r.input.channel_names() != names) {
      throw ShapeMismatch("result " + r.input.image_id() + " has a different channel layout");
    }
    const auto plane = static_cast<std::size_t>(r.input.shape().plane());
    if (r.difference.size() != plane * static_cast<std::size_t>(c)) {
      throw ShapeMismatch("result " + r.input.image_id() + " has a malformed difference map");
    }
    for (std::int64_t k = 0; k < c; ++k) {
      double sum = 0.0;
      const float* d = r.difference.data() + static_cast<std::size_t>(k) * plane;
      for (std::size_t i = 0; i < plane; ++i) sum += term(static_cast<double>(d[i]));
      v.raw[static_cast<std::size_t>(k)] += sum;
    }
  }
  for (const double x : v.raw) v.z = std::max(v.z, std::abs(x));
  v.normalized.resize(v.raw.size(), 0.0);
  if (v.z > 0.0) {
    for (std::size_t k = 0; k < v.raw.size(); ++k) v.normalized[k] = v.raw[k] / v.z;
  }
  return v;
}

double two_sided_p(double t, double df) {
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

struct Moments {
  double mean = 0.0;
  double ss = 0.0;  // sum of squared deviations
};

Moments moments(std::span<const double> x) {
  Moments m;
  m.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  for (const double v : x) m.ss += (v - m.mean) * (v - m.mean);
  return m;
}

TTestResult from_statistic(double diff, double se, double df) {
  TTestResult r;
  r.df = df;
  if (se == 0.0) {
    if (diff == 0.0) {
      r.kind = PValueKind::kDegenerate;
      r.t = 0.0;
    } else {
      r.kind = PValueKind::kZeroVariance;
      r.t = std::copysign(std::numeric_limits<double>::infinity(), diff);
      r.p = 0.0;
    }
    return r;
  }
  r.t = diff / se;
  r.p = two_sided_p(r.t, df);
  return r;
}

}  // namespace

ChannelVariation mcv(std::span<const CounterfactualResult> results) {
  return variation(results, [](double d) { return d; });
}

ChannelVariation acv(std::span<const CounterfactualResult> results) {
  return variation(results, [](double d) { return std::abs(d); });
}

std::string to_string(PValueKind kind) {
  switch (kind) {
    case PValueKind::kValue: return "value";
    case PValueKind::kZeroVariance: return "zero_variance";
    case PValueKind::kDegenerate: return "degenerate";
  }
  return "degenerate";
}

TTestResult unpaired_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw InvalidInput("unpaired t-test needs at least two samples per group");
  }
  const auto ma = moments(a);
  const auto mb = moments(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double df = na + nb - 2.0;
  const double pooled = (ma.ss + mb.ss) / df;
  const double se = std::sqrt(pooled * (1.0 / na + 1.0 / nb));
  return from_statistic(ma.mean - mb.mean, se, df);
}

TTestResult paired_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidInput("paired t-test needs samples of equal length");
  if (a.size() < 2) throw InvalidInput("paired t-test needs at least two pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = b[i] - a[i];
  const auto m = moments(d);
  const double n = static_cast<double>(d.size());
  const double se = std::sqrt(m.ss / (n - 1.0)) / std::sqrt(n);
  return from_statistic(m.mean, se, n - 1.0);
}

TTestResult paired_test(std::span<const IdValue> a, std::span<const IdValue> b) {
  if (a.size() != b.size()) {
    throw InvalidInput("pairing error: " + std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()) + " samples");
  }
  std::map<std::string, double> lookup;
  for (const auto& s : b) {
    if (!lookup.emplace(s.image_id, s.value).second) {
      throw InvalidInput("pairing error: duplicate image id '" + s.image_id + "'");
    }
  }
  std::vector<double> xa, xb;
  for (const auto& s : a) {
    const auto it = lookup.find(s.image_id);
    if (it == lookup.end()) {
      throw InvalidInput("pairing error: image id '" + s.image_id + "' has no counterpart");
    }
    xa.push_back(s.value);
    xb.push_back(it->second);
  }
  return paired_test(xa, xb);
}

// ---------------------------------------------------------------------------

ChannelReport build_report(std::span<const CounterfactualResult> results,
                           std::span<const MultiChannelImage> target_images, std::size_t top_k) {
  if (results.empty()) throw InvalidInput("report needs at least one counterfactual result");
  const auto& names = results.front().input.channel_names();
  for (const auto& img : target_images) {
    if (img.channel_names() != names) {
      throw ShapeMismatch("target image " + img.image_id() + " has a different channel layout");
    }
  }
  const auto var_abs = acv(results);
  const auto var_signed = mcv(results);

  std::vector<MultiChannelImage> inputs, generated;
  for (const auto& r : results) {
    inputs.push_back(r.input);
    generated.push_back(r.generated);
  }
  const auto a0 = channel_means(inputs);
  const auto b1 = channel_means(generated);
  const auto a1 = channel_means(target_images);

  ChannelReport report;
  report.acv_z = var_abs.z;
  report.mcv_z = var_signed.z;
  report.top_k = top_k;
  for (std::size_t k = 0; k < names.size(); ++k) {
    ReportRow row;
    row.channel = names[k];
    row.acv = var_abs.normalized[k];
    row.mcv = var_signed.normalized[k];
    const auto source_k = a0.column(k);
    row.unpaired = unpaired_test(source_k, a1.column(k));
    std::vector<IdValue> pa, pb;
    for (std::size_t i = 0; i < source_k.size(); ++i) {
      pa.push_back({a0.image_ids[i], source_k[i]});
      pb.push_back({b1.image_ids[i], b1.values[i][k]});
    }
    row.paired = paired_test(pa, pb);
    report.rows.push_back(std::move(row));
  }
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const ReportRow& x, const ReportRow& y) { return x.acv > y.acv; });
  for (std::size_t i = 0; i < report.rows.size() && i < top_k; ++i) report.rows[i].top = true;
  return report;
}

ChannelReport build_report(std::span<const CounterfactualResult> results,
                           const DatasetManifest& manifest, const ReportOptions& options) {
  if (results.empty()) throw InvalidInput("report needs at least one counterfactual result");
  const Group source = results.front().input.group();
  const Group target = source == Group::kZero ? Group::kOne : Group::kZero;
  const auto expected = manifest.group_entries(source).size();
  if (results.size() != expected) {
    throw InvalidInput("results cover " + std::to_string(results.size()) + " of " +
                       std::to_string(expected) + " source-group images");
  }
  auto targets = load_group(manifest, target, options.channels, options.downscale, true);
  if (!options.raw_scale) return build_report(results, targets, options.top_k);

  std::vector<CounterfactualResult> raw(results.begin(), results.end());
  for (auto& r : raw) {
    const auto& entry = manifest.find(r.input.image_id());
    r.input = to_raw_scale(r.input, manifest, entry);
    r.generated = to_raw_scale(r.generated, manifest, entry);
  }
  for (auto& t : targets) t = to_raw_scale(t, manifest, manifest.find(t.image_id()));
  // ACV and MCV read the untouched difference maps.
  return build_report(raw, targets, options.top_k);
}

MultiChannelImage to_raw_scale(const MultiChannelImage& img, const DatasetManifest& manifest,
                               const ManifestEntry& entry) {
  if (entry.normalization.empty()) return img;
  std::vector<float> px(img.pixels().begin(), img.pixels().end());
  const auto plane = static_cast<std::size_t>(img.shape().plane());
  for (std::int64_t k = 0; k < img.channels(); ++k) {
    const auto& name = img.channel_names()[static_cast<std::size_t>(k)];
    const auto it = std::find(manifest.channel_names.begin(), manifest.channel_names.end(), name);
    if (it == manifest.channel_names.end()) {
      throw ShapeMismatch("channel '" + name + "' is not in the manifest");
    }
    const auto& range = entry.normalization[static_cast<std::size_t>(it - manifest.channel_names.begin())];
    for (std::size_t q = 0; q < plane; ++q) {
      auto& v = px[static_cast<std::size_t>(k) * plane + q];
      v = static_cast<float>(range.min + static_cast<double>(v) * (range.max - range.min));
    }
  }
  return img.with_pixels(std::move(px));
}

// ---------------------------------------------------------------------------

namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v == 0.0 ? 0.0 : v);
  return buf;
}

std::string format_p(const TTestResult& r) {
  if (r.kind != PValueKind::kValue) return to_string(r.kind);
  return format_number(*r.p);
}

json test_json(const TTestResult& r) {
  json j = {{"df", r.df}, {"kind", to_string(r.kind)}};
  j["t"] = std::isfinite(r.t) ? json(r.t) : json(nullptr);
  j["p"] = r.p ? json(*r.p) : json(nullptr);
  return j;
}

TTestResult test_from_json(const json& j) {
  TTestResult r;
  r.df = j.at("df").get<double>();
  const auto kind = j.at("kind").get<std::string>();
  r.kind = kind == "value" ? PValueKind::kValue
           : kind == "zero_variance" ? PValueKind::kZeroVariance
                                     : PValueKind::kDegenerate;
  if (!j.at("p").is_null()) r.p = j.at("p").get<double>();
  r.t = j.at("t").is_null() ? (r.kind == PValueKind::kDegenerate
                                   ? 0.0
                                   : std::numeric_limits<double>::infinity())
                            : j.at("t").get<double>();
  return r;
}

}  // namespace

std::string report_csv(const ChannelReport& report) {
  std::string out = kReportCsvHeader;
  out += '\n';
  for (const auto& row : report.rows) {
    std::string name = row.channel;
    if (name.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (const char ch : name) {
        if (ch == '"') quoted += '"';
        quoted += ch;
      }
      name = quoted + "\"";
    }
    out += name + "," + format_number(row.acv) + "," + format_number(row.mcv) + "," +
           format_p(row.unpaired) + "," + format_p(row.paired) + "\n";
  }
  return out;
}

json to_json(const ChannelReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"channel", r.channel},
                    {"acv", r.acv},
                    {"mcv", r.mcv},
                    {"unpaired", test_json(r.unpaired)},
                    {"paired", test_json(r.paired)},
                    {"top", r.top}});
  }
  return {{"acv_z", report.acv_z}, {"mcv_z", report.mcv_z}, {"top_k", report.top_k}, {"rows", rows}};
}

ChannelReport report_from_json(const json& j) {
  ChannelReport report;
  try {
    report.acv_z = j.at("acv_z").get<double>();
    report.mcv_z = j.at("mcv_z").get<double>();
    report.top_k = j.at("top_k").get<std::size_t>();
    for (const auto& r : j.at("rows")) {
      report.rows.push_back({r.at("channel").get<std::string>(), r.at("acv").get<double>(),
                             r.at("mcv").get<double>(), test_from_json(r.at("unpaired")),
                             test_from_json(r.at("paired")), r.value("top", false)});
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed report JSON: ") + e.what());
  }
  return report;
}

std::string report_table(const ChannelReport& report, bool top_only) {
  std::size_t width = 12;
  for (const auto& r : report.rows) width = std::max(width, r.channel.size());
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-*s  %10s  %10s  %18s  %18s\n", static_cast<int>(width),
                "Channel Name", "ACV_k", "MCV_k", "Unpaired p-values", "Paired p-values");
  std::string out = buf;
  for (const auto& r : report.rows) {
    if (top_only && !r.top) continue;
    std::snprintf(buf, sizeof buf, "%-*s  %10.3g  %10.3g  %18s  %18s\n", static_cast<int>(width),
                  r.channel.c_str(), r.acv, r.mcv, format_p(r.unpaired).c_str(),
                  format_p(r.paired).c_str());
    out += buf;
  }
  return out;
}

namespace {

struct Canvas {
  std::uint32_t w, h;
  std::vector<std::uint8_t> px;
  Canvas(std::uint32_t width, std::uint32_t height) : w(width), h(height), px(width * height * 3, 255) {}
  void fill(int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> rgb) {
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    for (int y = std::max(0, y0); y < std::min<int>(h, y1); ++y) {
      for (int x = std::max(0, x0); x < std::min<int>(w, x1); ++x) {
        auto* p = &px[(static_cast<std::size_t>(y) * w + x) * 3];
        p[0] = rgb[0];
        p[1] = rgb[1];
        p[2] = rgb[2];
      }
    }
  }
};

constexpr std::array<std::uint8_t, 3> kBlue{31, 119, 180};
constexpr std::array<std::uint8_t, 3> kOrange{255, 127, 14};
constexpr std::array<std::uint8_t, 3> kGrey{80, 80, 80};

void paired_bars(const std::filesystem::path& path, const std::vector<std::pair<double, double>>& v,
                 double lo, double hi) {
  const int bar = 14, gap = 10, pad = 10, height = 200;
  const int groups = static_cast<int>(v.size());
  Canvas c(static_cast<std::uint32_t>(pad * 2 + groups * (2 * bar + gap)),
           static_cast<std::uint32_t>(height + 2 * pad));
  const auto y_of = [&](double value) {
    const double t = (std::clamp(value, lo, hi) - lo) / (hi - lo);
    return pad + static_cast<int>(std::lround((1.0 - t) * height));
  };
  const int zero = y_of(0.0);
  c.fill(pad, zero, static_cast<int>(c.w) - pad, zero + 1, kGrey);
  for (int g = 0; g < groups; ++g) {
    const int x = pad + g * (2 * bar + gap);
    c.fill(x, zero, x + bar, y_of(v[static_cast<std::size_t>(g)].first), kBlue);
    c.fill(x + bar, zero, x + 2 * bar, y_of(v[static_cast<std::size_t>(g)].second), kOrange);
  }
  write_png(path, c.w, c.h, 3, c.px);
}

double neg_log10(const TTestResult& r) {
  if (r.kind == PValueKind::kDegenerate) return 0.0;
  if (r.kind == PValueKind::kZeroVariance || *r.p <= 0.0) return 300.0;
  return -std::log10(*r.p);
}

}  // namespace

void write_report_figures(const std::filesystem::path& dir, const ChannelReport& report) {
  std::vector<std::pair<double, double>> metrics, pvalues;
  double pmax = 1.0;
  for (const auto& r : report.rows) {
    if (!r.top) continue;
    metrics.emplace_back(r.acv, r.mcv);
    pvalues.emplace_back(neg_log10(r.unpaired), neg_log10(r.paired));
    pmax = std::max({pmax, pvalues.back().first, pvalues.back().second});
  }
  if (metrics.empty()) return;
  std::filesystem::create_directories(dir);
  paired_bars(dir / "channel_variation.png", metrics, -1.0, 1.0);
  paired_bars(dir / "neg_log10_p.png", pvalues, 0.0, pmax);
}

}  // namespace cft

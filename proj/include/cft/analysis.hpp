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

#ifndef CFT_ANALYSIS_HPP
#define CFT_ANALYSIS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cft/image_store.hpp"
#include "cft/inference.hpp"
#include "json.hpp"

namespace cft {

/// Spatial mean of every channel of one image.
std::vector<double> channel_means(const MultiChannelImage& img);

/// One row per image, one column per channel.
struct ChannelMeans {
  std::vector<std::string> image_ids;
  std::vector<std::vector<double>> values;

  std::vector<double> column(std::size_t channel) const;
};

ChannelMeans channel_means(std::span<const MultiChannelImage> images);

/// Per-channel sums over all images and pixels, scaled by Z so that the
/// largest magnitude is one. All-zero sums give all-zero metrics.
struct ChannelVariation {
  std::vector<double> raw;
  double z = 0.0;
  std::vector<double> normalized;
};

/// Signed sums of generated - input.
ChannelVariation mcv(std::span<const CounterfactualResult> results);
/// Sums of |generated - input|.
ChannelVariation acv(std::span<const CounterfactualResult> results);

// ---------------------------------------------------------------------------

enum class PValueKind {
  kValue,         // ordinary finite t and p
  kZeroVariance,  // no spread but the means differ: p = 0, t = +/-inf
  kDegenerate,    // no spread and no difference: undefined
};

std::string to_string(PValueKind kind);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  std::optional<double> p;  // empty only for kDegenerate
  PValueKind kind = PValueKind::kValue;
};

/// Two-sided equal-variance Student's t-test; both samples need n >= 2.
TTestResult unpaired_test(std::span<const double> a, std::span<const double> b);

/// Two-sided one-sample t-test on b[i] - a[i]; needs n >= 2.
TTestResult paired_test(std::span<const double> a, std::span<const double> b);

struct IdValue {
  std::string image_id;
  double value = 0.0;
};

/// Pairs the samples by image id; throws InvalidInput on mismatched id sets.
TTestResult paired_test(std::span<const IdValue> a, std::span<const IdValue> b);

// ---------------------------------------------------------------------------

struct ReportRow {
  std::string channel;
  double acv = 0.0;
  double mcv = 0.0;
  TTestResult unpaired;  // real source vs real target images
  TTestResult paired;    // real source vs their counterfactuals
  bool top = false;      // among the top_k channels by ACV
};

/// Rows sorted by ACV descending (ties keep channel order).
struct ChannelReport {
  std::vector<ReportRow> rows;
  double acv_z = 0.0;
  double mcv_z = 0.0;
  std::size_t top_k = 7;
};

ChannelReport build_report(std::span<const CounterfactualResult> results,
                           std::span<const MultiChannelImage> target_images,
                           std::size_t top_k = 7);

struct ReportOptions {
  std::vector<std::string> channels;
  int downscale = 1;
  std::size_t top_k = 7;
  /// Run the t-tests on channel means mapped back through each image's
  /// recorded normalization range. ACV and MCV stay on the model scale.
  bool raw_scale = false;
};

/// Inverse of the per-image min-max scaling recorded in `entry`; images
/// ingested without normalization are returned unchanged.
MultiChannelImage to_raw_scale(const MultiChannelImage& img, const DatasetManifest& manifest,
                               const ManifestEntry& entry);

/// Loads the real images of the group opposite the results' source group.
ChannelReport build_report(std::span<const CounterfactualResult> results,
                           const DatasetManifest& manifest, const ReportOptions& options);

constexpr const char* kReportCsvHeader = "channel,acv,mcv,p_unpaired,p_paired";

std::string report_csv(const ChannelReport& report);
nlohmann::json to_json(const ChannelReport& report);
ChannelReport report_from_json(const nlohmann::json& j);

/// Fixed-width text rendering of the report, one line per channel.
std::string report_table(const ChannelReport& report, bool top_only);

/// Bar charts of ACV/MCV and -log10 p for the top_k channels.
void write_report_figures(const std::filesystem::path& dir, const ChannelReport& report);

}  // namespace cft

#endif  // CFT_ANALYSIS_HPP

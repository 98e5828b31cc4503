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

#include <cmath>
#include <random>
#include <sstream>

#include <gmock/gmock.h>
#include <gsl/gsl_cdf.h>
#include <gtest/gtest.h>

#include "cft/error.hpp"
#include "cft/synthbench.hpp"
#include "test_util.hpp"

namespace {

using ::cft::CounterfactualResult;
using ::cft::MultiChannelImage;
using ::cft::PValueKind;
using ::cft::TTestResult;
using ::cft::testing::random_image;
using ::cft::testing::ScopedTempDir;
using ::testing::DoubleNear;
using ::testing::ElementsAre;
using ::testing::HasSubstr;

CounterfactualResult make_result(const MultiChannelImage& input, const std::vector<float>& generated) {
  std::vector<float> diff(generated.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = generated[i] - input.pixels()[i];
  return {input, input.with_pixels(generated), diff, {}};
}

// Two channels of a 2x2 image chosen so that every difference is exact in float.
CounterfactualResult hand_example() {
  const MultiChannelImage input({2, 2, 2}, {0.5f, 0.5f, 0.25f, 0.5f, 0.5f, 0.5f, 0.5f, 0.5f},
                                {"c1", "c2"}, "x", cft::Group::kZero);
  const std::vector<float> gen{0.625f, 0.375f, 0.5f, 0.5f, 0.375f, 0.375f, 0.375f, 0.375f};
  return make_result(input, gen);
}

// Spelled-out version of the 0.1 / -0.1 / 0.2 / 0 and all -0.1 example.
CounterfactualResult decimal_example() {
  const MultiChannelImage input({2, 2, 2}, std::vector<float>(8, 0.5f), {"c1", "c2"}, "x",
                                cft::Group::kZero);
  return {input, input, {0.1f, -0.1f, 0.2f, 0.0f, -0.1f, -0.1f, -0.1f, -0.1f}, {}};
}

TEST(ChannelVariation, HandExample) {
  const std::vector<CounterfactualResult> rs{hand_example()};
  const auto m = cft::mcv(rs);
  const auto a = cft::acv(rs);
  EXPECT_THAT(m.normalized, ElementsAre(0.5, -1.0));
  EXPECT_THAT(a.normalized, ElementsAre(1.0, 1.0));
  EXPECT_EQ(m.z, 0.5);
  const std::vector<CounterfactualResult> dec{decimal_example()};
  EXPECT_THAT(cft::mcv(dec).normalized, ElementsAre(DoubleNear(0.5, 1e-7), -1.0));
  EXPECT_THAT(cft::acv(dec).normalized, ElementsAre(DoubleNear(1.0, 1e-7), DoubleNear(1.0, 1e-7)));
}

TEST(ChannelVariation, IdentityTranslatorIsAllZero) {
  const auto img = random_image(3, 4, 4, 1);
  const std::vector<CounterfactualResult> rs{
      make_result(img, {img.pixels().begin(), img.pixels().end()})};
  EXPECT_THAT(cft::mcv(rs).normalized, ElementsAre(0.0, 0.0, 0.0));
  EXPECT_THAT(cft::acv(rs).normalized, ElementsAre(0.0, 0.0, 0.0));
}

TEST(ChannelVariation, ScaleInvarianceAndTriangleInequality) {
  std::mt19937_64 rng(2);
  std::normal_distribution<float> n(0.0f, 0.1f);
  const auto img = random_image(4, 5, 5, 2);
  std::vector<float> diff(img.pixels().size());
  for (auto& d : diff) d = n(rng);
  std::vector<CounterfactualResult> base{{img, img, diff, {}}};
  std::vector<float> scaled = diff;
  for (auto& d : scaled) d *= 4.0f;
  std::vector<CounterfactualResult> big{{img, img, scaled, {}}};
  const auto m1 = cft::mcv(base), m2 = cft::mcv(big);
  const auto a1 = cft::acv(base), a2 = cft::acv(big);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(m1.normalized[k], m2.normalized[k], 1e-12);
    EXPECT_NEAR(a1.normalized[k], a2.normalized[k], 1e-12);
    EXPECT_GE(a1.raw[k], std::abs(m1.raw[k]));
  }
  auto argmax = [](const std::vector<double>& v) { return std::max_element(v.begin(), v.end()) - v.begin(); };
  EXPECT_EQ(argmax(a1.normalized), argmax(a2.normalized));
}

TEST(ChannelVariation, ChannelMismatch) {
  std::vector<CounterfactualResult> rs{hand_example()};
  const auto other = random_image(3, 2, 2, 1);
  rs.push_back(make_result(other, {other.pixels().begin(), other.pixels().end()}));
  EXPECT_THROW(cft::mcv(rs), cft::ShapeMismatch);
}

TEST(UnpairedTest, Examples) {
  const std::vector<double> a{1, 2, 3, 4}, b{2, 4, 6, 8};
  const auto r = cft::unpaired_test(a, b);
  EXPECT_NEAR(r.t, -1.7320508075688772, 1e-12);
  EXPECT_EQ(r.df, 6.0);
  EXPECT_NEAR(*r.p, 0.13397459621556118, 1e-12);

  const std::vector<double> z{0, 1};
  const auto same = cft::unpaired_test(z, z);
  EXPECT_EQ(same.t, 0.0);
  EXPECT_EQ(*same.p, 1.0);

  const std::vector<double> c{3, 3, 3}, d{3, 3};
  const auto degenerate = cft::unpaired_test(c, d);
  EXPECT_EQ(degenerate.kind, PValueKind::kDegenerate);
  EXPECT_FALSE(degenerate.p.has_value());

  const std::vector<double> e{5, 5};
  const auto zero_var = cft::unpaired_test(c, e);
  EXPECT_EQ(zero_var.kind, PValueKind::kZeroVariance);
  EXPECT_EQ(*zero_var.p, 0.0);
  EXPECT_TRUE(std::isinf(zero_var.t));

  const std::vector<double> one{1};
  EXPECT_THROW(cft::unpaired_test(one, a), cft::InvalidInput);
}

TEST(PairedTest, Examples) {
  const std::vector<double> a{1, 1, 1, 1}, b{1.1, 1.2, 1.3, 1.4};
  const auto r = cft::paired_test(a, b);
  EXPECT_NEAR(r.t, 3.8729833462074175, 1e-9);
  EXPECT_EQ(r.df, 3.0);
  EXPECT_NEAR(*r.p, 0.03046629166217096, 1e-9);

  EXPECT_EQ(cft::paired_test(b, b).kind, PValueKind::kDegenerate);
  const std::vector<double> base{1, 2, 3, 4}, shifted{2, 3, 4, 5};
  const auto constant_shift = cft::paired_test(base, shifted);
  EXPECT_EQ(constant_shift.kind, PValueKind::kZeroVariance);
  EXPECT_EQ(*constant_shift.p, 0.0);

  const std::vector<double> short_b{1, 2, 3};
  EXPECT_THROW(cft::paired_test(a, short_b), cft::InvalidInput);
}

TEST(PairedTest, PairsById) {
  const std::vector<cft::IdValue> a{{"x", 1.0}, {"y", 2.0}, {"z", 4.0}};
  const std::vector<cft::IdValue> b{{"z", 4.5}, {"x", 1.1}, {"y", 2.3}};
  const std::vector<double> av{1.0, 2.0, 4.0}, bv{1.1, 2.3, 4.5};
  EXPECT_EQ(cft::paired_test(a, b).t, cft::paired_test(av, bv).t);
  const std::vector<cft::IdValue> c{{"x", 1.0}, {"y", 2.0}, {"w", 4.0}};
  try {
    cft::paired_test(a, c);
    FAIL() << "expected an error";
  } catch (const cft::InvalidInput& e) {
    EXPECT_THAT(e.what(), HasSubstr("pairing"));
  }
}

// Independent two-sided p-values from GSL's Student t tail functions.
double oracle_two_sided(double t, double df) { return 2.0 * gsl_cdf_tdist_Q(std::abs(t), df); }

long double mean(const std::vector<double>& v) {
  long double s = 0;
  for (const double x : v) s += x;
  return s / static_cast<long double>(v.size());
}

long double sum_sq(const std::vector<double>& v, long double m) {
  long double s = 0;
  for (const double x : v) s += (x - m) * (x - m);
  return s;
}

TEST(StudentT, AgreesWithReferenceImplementation) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(2, 12);
  std::normal_distribution<double> noise(0.0, 1.0);
  double worst_unpaired = 0.0, worst_paired = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> a(static_cast<std::size_t>(size(rng))), b(static_cast<std::size_t>(size(rng)));
    const double shift = 0.6 * noise(rng);
    const double scale = std::exp(noise(rng));
    for (auto& x : a) x = scale * noise(rng);
    for (auto& x : b) x = scale * (noise(rng) + shift);

    const auto ma = mean(a), mb = mean(b);
    const long double na = a.size(), nb = b.size();
    const long double pooled = (sum_sq(a, ma) + sum_sq(b, mb)) / (na + nb - 2);
    const double t_ref = static_cast<double>((ma - mb) / std::sqrt(pooled * (1 / na + 1 / nb)));
    const auto u = cft::unpaired_test(a, b);
    ASSERT_EQ(u.kind, PValueKind::kValue);
    EXPECT_NEAR(u.t, t_ref, 1e-9 * std::max(1.0, std::abs(t_ref)));
    worst_unpaired = std::max(worst_unpaired, std::abs(*u.p - oracle_two_sided(t_ref, static_cast<double>(na + nb - 2))));

    std::vector<double> after(a.size()), d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      after[i] = a[i] + shift + 0.3 * scale * noise(rng);
      d[i] = after[i] - a[i];
    }
    const auto md = mean(d);
    const long double nd = d.size();
    const double tp_ref = static_cast<double>(md / std::sqrt(sum_sq(d, md) / (nd - 1) / nd));
    const auto p = cft::paired_test(a, after);
    ASSERT_EQ(p.kind, PValueKind::kValue);
    EXPECT_EQ(p.df, static_cast<double>(nd - 1));
    worst_paired = std::max(worst_paired, std::abs(*p.p - oracle_two_sided(tp_ref, static_cast<double>(nd - 1))));
  }
  EXPECT_LE(worst_unpaired, 1e-9);
  EXPECT_LE(worst_paired, 1e-9);
}

TEST(StudentT, DegenerateInputsNeverProduceNan) {
  const std::vector<std::vector<double>> samples{{0, 0}, {1, 1, 1}, {1e-300, 1e-300}, {2, 2}};
  for (const auto& a : samples) {
    for (const auto& b : samples) {
      const auto r = cft::unpaired_test(a, b);
      EXPECT_FALSE(std::isnan(r.t));
      if (r.p) {
        EXPECT_FALSE(std::isnan(*r.p));
      }
      EXPECT_NE(r.kind, PValueKind::kValue);
      if (a.size() == b.size()) {
        const auto q = cft::paired_test(a, b);
        EXPECT_FALSE(std::isnan(q.t));
        if (q.p) {
          EXPECT_FALSE(std::isnan(*q.p));
        }
      }
    }
  }
}

// Generated = source + true effect + small noise; pairing should win.
TEST(Sensitivity, PairedBeatsUnpairedOnTrueEffect) {
  int paired_wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    cft::SynthSpec spec;
    spec.effect_magnitude = 0.2;
    spec.seed = static_cast<std::uint64_t>(trial);
    const auto ds = cft::generate_dataset(spec);
    std::mt19937_64 rng(static_cast<std::uint64_t>(trial) + 1000);
    std::normal_distribution<float> noise(0.0f, 0.005f);
    std::vector<CounterfactualResult> results;
    std::vector<MultiChannelImage> targets;
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
      const auto& img = ds.images[i];
      if (img.group() == cft::Group::kOne) {
        targets.push_back(img);
        continue;
      }
      const auto truth = cft::oracle_translate(img, ds.geometry[i], spec);
      std::vector<float> gen(truth.pixels().begin(), truth.pixels().end());
      for (auto& v : gen) v = std::clamp(v + noise(rng), 1e-6f, 1.0f - 1e-6f);
      results.push_back(make_result(img, gen));
    }
    const auto report = cft::build_report(results, targets);
    const auto& row = *std::find_if(report.rows.begin(), report.rows.end(),
                                    [](const cft::ReportRow& r) { return r.channel == "marker_2"; });
    if (*row.paired.p < *row.unpaired.p) ++paired_wins;
  }
  EXPECT_GE(paired_wins, 95);
}

TEST(Report, OrderingCsvAndJson) {
  auto second = hand_example();
  second.input = second.input.with_identity("y", cft::Group::kZero);
  second.generated = second.generated.with_identity("y", cft::Group::kZero);
  const std::vector<CounterfactualResult> rs{hand_example(), second};
  const MultiChannelImage target({2, 2, 2}, std::vector<float>(8, 0.5f), {"c1", "c2"}, "t", cft::Group::kOne);
  const MultiChannelImage target2 = target.with_identity("t2", cft::Group::kOne);
  const std::vector<MultiChannelImage> targets{target, target2};
  const auto report = cft::build_report(rs, targets, 1);
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_EQ(report.rows[0].channel, "c1");
  EXPECT_TRUE(report.rows[0].top);
  EXPECT_FALSE(report.rows[1].top);
  const auto csv = cft::report_csv(report);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, cft::kReportCsvHeader);
  std::getline(in, line);
  EXPECT_EQ(line.rfind("c1,1,0.5,", 0), 0u);
  const auto back = cft::report_from_json(cft::to_json(report));
  EXPECT_EQ(cft::to_json(back), cft::to_json(report));
}

TEST(Report, IdentityTranslatorIsWellFormed) {
  std::vector<CounterfactualResult> rs;
  std::vector<MultiChannelImage> targets;
  for (int i = 0; i < 3; ++i) {
    const auto img = random_image(2, 4, 4, static_cast<std::uint64_t>(i), "s" + std::to_string(i));
    rs.push_back(make_result(img, {img.pixels().begin(), img.pixels().end()}));
    targets.push_back(random_image(2, 4, 4, static_cast<std::uint64_t>(10 + i), "t" + std::to_string(i), cft::Group::kOne));
  }
  const auto report = cft::build_report(rs, targets);
  for (const auto& row : report.rows) {
    EXPECT_EQ(row.acv, 0.0);
    EXPECT_EQ(row.mcv, 0.0);
    EXPECT_EQ(row.paired.kind, PValueKind::kDegenerate);
    EXPECT_TRUE(row.unpaired.p.has_value());
  }
  const auto csv = cft::report_csv(report);
  EXPECT_THAT(csv, HasSubstr("degenerate"));
  EXPECT_THAT(csv, ::testing::Not(HasSubstr("nan")));
  ScopedTempDir dir;
  cft::write_report_figures(dir.path(), report);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "channel_variation.png"));
  EXPECT_FALSE(cft::report_table(report, false).empty());
}

TEST(RawScale, InvertsRecordedNormalization) {
  cft::DatasetManifest manifest;
  manifest.channel_names = {"a", "b", "c"};
  cft::ManifestEntry entry;
  entry.image_id = "x";
  entry.normalization = {{2.0, 6.0}, {5.0, 5.0}, {-1.0, 1.0}};
  // Only channels c and a feed the model, in that order.
  const MultiChannelImage img({2, 1, 3}, {0.0f, 0.5f, 1.0f, 0.0f, 0.5f, 1.0f}, {"c", "a"}, "x",
                              cft::Group::kZero);
  const auto raw = cft::to_raw_scale(img, manifest, entry);
  EXPECT_THAT(cft::testing::values(raw.pixels()), ElementsAre(-1.0f, 0.0f, 1.0f, 2.0f, 4.0f, 6.0f));
  entry.normalization.clear();
  EXPECT_THAT(cft::testing::values(cft::to_raw_scale(img, manifest, entry).pixels()),
              ElementsAre(0.0f, 0.5f, 1.0f, 0.0f, 0.5f, 1.0f));
}

}  // namespace

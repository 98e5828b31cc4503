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

#ifndef CFT_TESTS_TEST_UTIL_HPP
#define CFT_TESTS_TEST_UTIL_HPP

#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cft/image_store.hpp"

namespace cft::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class ScopedTempDir {
 public:
  ScopedTempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("cft_test_" + std::to_string(rd()) + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~ScopedTempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScopedTempDir(const ScopedTempDir&) = delete;
  ScopedTempDir& operator=(const ScopedTempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::string> numbered_names(std::int64_t c, const std::string& prefix = "ch") {
  std::vector<std::string> names;
  for (std::int64_t k = 0; k < c; ++k) names.push_back(prefix + std::to_string(k));
  return names;
}

inline MultiChannelImage random_image(std::int64_t c, std::int64_t h, std::int64_t w,
                                      std::uint64_t seed, std::string id = "img",
                                      Group group = Group::kZero) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> px(static_cast<std::size_t>(c * h * w));
  for (auto& v : px) v = u(rng);
  return MultiChannelImage({c, h, w}, std::move(px), numbered_names(c), std::move(id), group);
}

inline MultiChannelImage constant_image(std::int64_t c, std::int64_t h, std::int64_t w, float value,
                                        std::string id = "img", Group group = Group::kZero) {
  return MultiChannelImage({c, h, w}, std::vector<float>(static_cast<std::size_t>(c * h * w), value),
                           numbered_names(c), std::move(id), group);
}

// Old gmock container matchers need an STL container, not a span.
inline std::vector<float> values(std::span<const float> s) { return {s.begin(), s.end()}; }

}  // namespace cft::testing

#endif  // CFT_TESTS_TEST_UTIL_HPP

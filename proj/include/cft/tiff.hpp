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

#ifndef CFT_TIFF_HPP
#define CFT_TIFF_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cft::tiff {

/// One single-sample page of a multi-page TIFF, widened to float.
struct Page {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> samples;       // row-major, height * width
  std::optional<std::string> name;  // PageName tag, if present
};

/// Baseline reader: classic (non-Big) TIFF, either byte order, strips or
/// tiles, no compression or PackBits, 1 sample per pixel of 8/16/32-bit
/// unsigned/signed integers or 32/64-bit floats.
std::vector<Page> read_pages(const std::filesystem::path& path);

enum class SampleType { kUint8, kUint16, kFloat32 };

/// Writes one uncompressed strip-organised page per entry, little-endian.
/// Float input is converted with rounding and clamping for the integer types.
void write_pages(const std::filesystem::path& path, const std::vector<Page>& pages,
                 SampleType type = SampleType::kFloat32);

}  // namespace cft::tiff

#endif  // CFT_TIFF_HPP

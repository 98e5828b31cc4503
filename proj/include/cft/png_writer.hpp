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

#ifndef CFT_PNG_WRITER_HPP
#define CFT_PNG_WRITER_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace cft {

/// 8-bit grayscale (channels == 1) or RGB (channels == 3) PNG, row-major.
void write_png(const std::filesystem::path& path, std::uint32_t width, std::uint32_t height,
               int channels, std::span<const std::uint8_t> pixels);

/// Maps [lo, hi] linearly onto [0, 255] with clamping.
void write_png_scaled(const std::filesystem::path& path, std::uint32_t width,
                      std::uint32_t height, std::span<const float> values, float lo, float hi);

/// Replaces characters that are awkward in file names.
std::string safe_filename(const std::string& name);

}  // namespace cft

#endif  // CFT_PNG_WRITER_HPP

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

#include "cft/tiff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <span>

#include "cft/error.hpp"

namespace cft::tiff {
namespace {

constexpr std::uint16_t kTagWidth = 256;
constexpr std::uint16_t kTagHeight = 257;
constexpr std::uint16_t kTagBitsPerSample = 258;
constexpr std::uint16_t kTagCompression = 259;
constexpr std::uint16_t kTagPhotometric = 262;
constexpr std::uint16_t kTagStripOffsets = 273;
constexpr std::uint16_t kTagSamplesPerPixel = 277;
constexpr std::uint16_t kTagRowsPerStrip = 278;
constexpr std::uint16_t kTagStripByteCounts = 279;
constexpr std::uint16_t kTagPageName = 285;
constexpr std::uint16_t kTagTileWidth = 322;
constexpr std::uint16_t kTagTileLength = 323;
constexpr std::uint16_t kTagTileOffsets = 324;
constexpr std::uint16_t kTagTileByteCounts = 325;
constexpr std::uint16_t kTagSampleFormat = 339;

constexpr std::uint16_t kCompressionNone = 1;
constexpr std::uint16_t kCompressionPackBits = 32773;

class Reader {
 public:
  Reader(std::vector<std::uint8_t> bytes, const std::filesystem::path& path)
      : bytes_(std::move(bytes)), path_(path) {
    if (bytes_.size() < 8) fail("file too short for a TIFF header");
    if (bytes_[0] == 'I' && bytes_[1] == 'I') {
      little_ = true;
    } else if (bytes_[0] == 'M' && bytes_[1] == 'M') {
      little_ = false;
    } else {
      fail("missing TIFF byte-order mark");
    }
    const auto magic = u16(2);
    if (magic == 43) fail("BigTIFF is not supported");
    if (magic != 42) fail("bad TIFF magic number");
  }

  std::uint16_t u16(std::size_t off) const {
    check(off, 2);
    const std::uint16_t a = bytes_[off], b = bytes_[off + 1];
    return little_ ? static_cast<std::uint16_t>(a | (b << 8))
                   : static_cast<std::uint16_t>((a << 8) | b);
  }

  std::uint32_t u32(std::size_t off) const {
    check(off, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint32_t byte = bytes_[off + (little_ ? 3 - i : i)];
      v = (v << 8) | byte;
    }
    return v;
  }

  void check(std::size_t off, std::size_t len) const {
    if (off > bytes_.size() || len > bytes_.size() - off) fail("offset beyond end of file");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw InvalidInput("TIFF " + path_.string() + ": " + what);
  }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  bool little() const { return little_; }

 private:
  std::vector<std::uint8_t> bytes_;
  std::filesystem::path path_;
  bool little_ = true;
};

struct Entry {
  std::uint16_t type = 0;
  std::uint32_t count = 0;
  std::size_t value_offset = 0;  // where the value bytes live
};

std::size_t type_size(std::uint16_t type) {
  switch (type) {
    case 1: case 2: case 6: case 7: return 1;   // BYTE ASCII SBYTE UNDEFINED
    case 3: case 8: return 2;                   // SHORT SSHORT
    case 4: case 9: case 11: return 4;          // LONG SLONG FLOAT
    case 5: case 10: case 12: return 8;         // RATIONAL SRATIONAL DOUBLE
    default: return 0;
  }
}

std::vector<std::uint64_t> read_uints(const Reader& r, const Entry& e) {
  std::vector<std::uint64_t> out;
  out.reserve(e.count);
  for (std::uint32_t i = 0; i < e.count; ++i) {
    switch (e.type) {
      case 1: out.push_back(r.bytes().at(e.value_offset + i)); break;
      case 3: out.push_back(r.u16(e.value_offset + 2 * i)); break;
      case 4: out.push_back(r.u32(e.value_offset + 4 * i)); break;
      default: r.fail("unexpected field type for an integer tag");
    }
  }
  return out;
}

std::uint64_t read_uint(const Reader& r, const std::map<std::uint16_t, Entry>& tags,
                        std::uint16_t tag, std::optional<std::uint64_t> fallback = {}) {
  const auto it = tags.find(tag);
  if (it == tags.end()) {
    if (fallback) return *fallback;
    r.fail("missing required tag " + std::to_string(tag));
  }
  const auto values = read_uints(r, it->second);
  if (values.empty()) r.fail("empty tag " + std::to_string(tag));
  for (const auto v : values) {
    if (v != values.front()) r.fail("per-sample values differ in tag " + std::to_string(tag));
  }
  return values.front();
}

std::vector<std::uint8_t> unpack_bits(std::span<const std::uint8_t> in, std::size_t expected,
                                      const Reader& r) {
  std::vector<std::uint8_t> out;
  out.reserve(expected);
  std::size_t i = 0;
  while (i < in.size() && out.size() < expected) {
    const auto n = static_cast<std::int8_t>(in[i++]);
    if (n >= 0) {
      const std::size_t len = static_cast<std::size_t>(n) + 1;
      if (i + len > in.size()) r.fail("truncated PackBits literal run");
      out.insert(out.end(), in.begin() + static_cast<std::ptrdiff_t>(i),
                 in.begin() + static_cast<std::ptrdiff_t>(i + len));
      i += len;
    } else if (n != -128) {
      if (i >= in.size()) r.fail("truncated PackBits repeat run");
      out.insert(out.end(), static_cast<std::size_t>(1 - n), in[i++]);
    }
  }
  if (out.size() < expected) r.fail("PackBits data shorter than declared");
  out.resize(expected);
  return out;
}

float decode_sample(const std::uint8_t* p, int bits, int format, bool little) {
  std::uint8_t buf[8];
  const int n = bits / 8;
  for (int i = 0; i < n; ++i) buf[i] = little ? p[i] : p[n - 1 - i];
  // buf now little-endian
  std::uint64_t raw = 0;
  for (int i = n - 1; i >= 0; --i) raw = (raw << 8) | buf[i];
  switch (format) {
    case 1:  // unsigned
      return static_cast<float>(raw);
    case 2: {  // signed
      const std::uint64_t sign = std::uint64_t{1} << (bits - 1);
      const auto v = static_cast<std::int64_t>(raw ^ sign) - static_cast<std::int64_t>(sign);
      return static_cast<float>(v);
    }
    default:  // IEEE float
      if (bits == 32) return std::bit_cast<float>(static_cast<std::uint32_t>(raw));
      return static_cast<float>(std::bit_cast<double>(raw));
  }
}

Page read_page(const Reader& r, const std::map<std::uint16_t, Entry>& tags) {
  Page page;
  page.width = static_cast<std::uint32_t>(read_uint(r, tags, kTagWidth));
  page.height = static_cast<std::uint32_t>(read_uint(r, tags, kTagHeight));
  const auto spp = read_uint(r, tags, kTagSamplesPerPixel, 1);
  if (spp != 1) r.fail("only one sample per pixel is supported, got " + std::to_string(spp));
  const int bits = static_cast<int>(read_uint(r, tags, kTagBitsPerSample, 1));
  const int format = static_cast<int>(read_uint(r, tags, kTagSampleFormat, 1));
  const auto compression = read_uint(r, tags, kTagCompression, kCompressionNone);
  if (compression != kCompressionNone && compression != kCompressionPackBits) {
    r.fail("unsupported compression scheme " + std::to_string(compression));
  }
  const bool valid_int = (format == 1 || format == 2) && (bits == 8 || bits == 16 || bits == 32);
  const bool valid_float = format == 3 && (bits == 32 || bits == 64);
  if (!valid_int && !valid_float) {
    r.fail("unsupported sample layout: " + std::to_string(bits) + " bits, format " +
           std::to_string(format));
  }
  const std::size_t bps = static_cast<std::size_t>(bits / 8);

  const bool tiled = tags.count(kTagTileOffsets) != 0;
  std::uint64_t block_w = page.width;
  std::uint64_t block_h = 0;
  std::vector<std::uint64_t> offsets, counts;
  if (tiled) {
    block_w = read_uint(r, tags, kTagTileWidth);
    block_h = read_uint(r, tags, kTagTileLength);
    offsets = read_uints(r, tags.at(kTagTileOffsets));
    counts = read_uints(r, tags.at(kTagTileByteCounts));
  } else {
    block_h = std::min<std::uint64_t>(read_uint(r, tags, kTagRowsPerStrip, page.height),
                                      page.height);
    if (tags.count(kTagStripOffsets) == 0) r.fail("missing strip offsets");
    offsets = read_uints(r, tags.at(kTagStripOffsets));
    if (tags.count(kTagStripByteCounts) == 0) r.fail("missing strip byte counts");
    counts = read_uints(r, tags.at(kTagStripByteCounts));
  }
  if (block_w == 0 || block_h == 0) r.fail("zero block size");
  if (offsets.size() != counts.size()) r.fail("offset/byte-count length mismatch");
  const std::uint64_t across = (page.width + block_w - 1) / block_w;
  const std::uint64_t down = (page.height + block_h - 1) / block_h;
  if (offsets.size() < across * down) r.fail("too few data blocks for image size");

  page.samples.assign(static_cast<std::size_t>(page.width) * page.height, 0.0f);
  for (std::uint64_t by = 0; by < down; ++by) {
    for (std::uint64_t bx = 0; bx < across; ++bx) {
      const std::size_t index = static_cast<std::size_t>(by * across + bx);
      const std::uint64_t rows = tiled ? block_h : std::min(block_h, page.height - by * block_h);
      const std::size_t expected = static_cast<std::size_t>(rows * block_w) * bps;
      r.check(offsets[index], counts[index]);
      std::span<const std::uint8_t> raw(r.bytes().data() + offsets[index], counts[index]);
      std::vector<std::uint8_t> unpacked;
      if (compression == kCompressionPackBits) {
        unpacked = unpack_bits(raw, expected, r);
        raw = unpacked;
      } else if (raw.size() < expected) {
        r.fail("data block shorter than declared geometry");
      }
      for (std::uint64_t y = 0; y < rows; ++y) {
        const std::uint64_t gy = by * block_h + y;
        if (gy >= page.height) break;
        for (std::uint64_t x = 0; x < block_w; ++x) {
          const std::uint64_t gx = bx * block_w + x;
          if (gx >= page.width) break;
          const auto* p = raw.data() + static_cast<std::size_t>(y * block_w + x) * bps;
          page.samples[static_cast<std::size_t>(gy * page.width + gx)] =
              decode_sample(p, bits, format, r.little());
        }
      }
    }
  }

  if (const auto it = tags.find(kTagPageName); it != tags.end() && it->second.type == 2) {
    const auto& e = it->second;
    r.check(e.value_offset, e.count);
    std::string name(reinterpret_cast<const char*>(r.bytes().data() + e.value_offset), e.count);
    name.erase(std::find(name.begin(), name.end(), '\0'), name.end());
    if (!name.empty()) page.name = name;
  }
  return page;
}

// Little-endian byte sink used by the writer.
struct Sink {
  std::vector<std::uint8_t> bytes;
  void u16(std::uint16_t v) { bytes.push_back(v & 0xff); bytes.push_back(v >> 8); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_u32(std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  void align() { if (bytes.size() % 2) bytes.push_back(0); }
};

}  // namespace

std::vector<Page> read_pages(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const Reader r(std::move(bytes), path);

  std::vector<Page> pages;
  std::uint64_t ifd = r.u32(4);
  std::size_t guard = 0;
  while (ifd != 0) {
    if (++guard > 100000) r.fail("IFD chain does not terminate");
    const std::uint16_t n = r.u16(ifd);
    std::map<std::uint16_t, Entry> tags;
    for (std::uint16_t i = 0; i < n; ++i) {
      const std::size_t at = ifd + 2 + 12 * static_cast<std::size_t>(i);
      Entry e;
      const std::uint16_t tag = r.u16(at);
      e.type = r.u16(at + 2);
      e.count = r.u32(at + 4);
      const std::size_t size = type_size(e.type) * e.count;
      e.value_offset = size <= 4 ? at + 8 : r.u32(at + 8);
      tags[tag] = e;
    }
    pages.push_back(read_page(r, tags));
    ifd = r.u32(ifd + 2 + 12 * static_cast<std::size_t>(n));
  }
  return pages;
}

void write_pages(const std::filesystem::path& path, const std::vector<Page>& pages,
                 SampleType type) {
  Sink s;
  s.bytes = {'I', 'I'};
  s.u16(42);
  std::size_t next_ifd_slot = s.bytes.size();
  s.u32(0);

  const std::uint16_t bits = type == SampleType::kUint8 ? 8 : type == SampleType::kUint16 ? 16 : 32;
  const std::uint16_t format = type == SampleType::kFloat32 ? 3 : 1;

  for (const auto& page : pages) {
    if (page.samples.size() != static_cast<std::size_t>(page.width) * page.height) {
      throw InvalidInput("TIFF page sample count does not match its dimensions");
    }
    // pixel data
    s.align();
    const auto data_offset = static_cast<std::uint32_t>(s.bytes.size());
    for (const float v : page.samples) {
      switch (type) {
        case SampleType::kUint8:
          s.bytes.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)));
          break;
        case SampleType::kUint16:
          s.u16(static_cast<std::uint16_t>(std::clamp(std::lround(v), 0L, 65535L)));
          break;
        case SampleType::kFloat32:
          s.u32(std::bit_cast<std::uint32_t>(v));
          break;
      }
    }
    const auto data_size = static_cast<std::uint32_t>(s.bytes.size() - data_offset);
    std::uint32_t name_offset = 0;
    std::uint32_t name_size = 0;
    if (page.name) {
      s.align();
      name_offset = static_cast<std::uint32_t>(s.bytes.size());
      s.bytes.insert(s.bytes.end(), page.name->begin(), page.name->end());
      s.bytes.push_back(0);
      name_size = static_cast<std::uint32_t>(page.name->size() + 1);
    }

    s.align();
    const auto ifd_offset = static_cast<std::uint32_t>(s.bytes.size());
    s.put_u32(next_ifd_slot, ifd_offset);

    struct Field { std::uint16_t tag, type; std::uint32_t count, value; };
    std::vector<Field> fields = {
        {kTagWidth, 4, 1, page.width},
        {kTagHeight, 4, 1, page.height},
        {kTagBitsPerSample, 3, 1, bits},
        {kTagCompression, 3, 1, kCompressionNone},
        {kTagPhotometric, 3, 1, 1},
        {kTagStripOffsets, 4, 1, data_offset},
        {kTagSamplesPerPixel, 3, 1, 1},
        {kTagRowsPerStrip, 4, 1, page.height},
        {kTagStripByteCounts, 4, 1, data_size},
    };
    if (page.name) {
      if (name_size <= 4) {
        std::uint32_t packed = 0;
        for (std::uint32_t i = 0; i + 1 < name_size; ++i) {
          packed |= static_cast<std::uint32_t>(static_cast<std::uint8_t>((*page.name)[i])) << (8 * i);
        }
        fields.push_back({kTagPageName, 2, name_size, packed});
      } else {
        fields.push_back({kTagPageName, 2, name_size, name_offset});
      }
    }
    fields.push_back({kTagSampleFormat, 3, 1, format});

    s.u16(static_cast<std::uint16_t>(fields.size()));
    for (const auto& f : fields) {
      s.u16(f.tag);
      s.u16(f.type);
      s.u32(f.count);
      if (f.type == 3 && f.count == 1) {
        s.u16(static_cast<std::uint16_t>(f.value));
        s.u16(0);
      } else {
        s.u32(f.value);
      }
    }
    next_ifd_slot = s.bytes.size();
    s.u32(0);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(s.bytes.data()),
            static_cast<std::streamsize>(s.bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace cft::tiff

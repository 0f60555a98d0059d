#pragma once

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "viewx/error.hpp"

namespace viewx {

/// 8-bit interleaved RGB image, row-major from the top row.
struct RgbImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(std::uint32_t w, std::uint32_t h) : width(w), height(h), pixels(std::size_t{w} * h * 3) {}

  std::uint8_t* at(std::uint32_t x, std::uint32_t y) { return &pixels[(std::size_t{y} * width + x) * 3]; }
  const std::uint8_t* at(std::uint32_t x, std::uint32_t y) const {
    return &pixels[(std::size_t{y} * width + x) * 3];
  }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

struct GrayImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(std::uint32_t w, std::uint32_t h) : width(w), height(h), pixels(std::size_t{w} * h) {}
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Single-channel float image, row-major from the top row.
struct FloatImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> values;

  FloatImage() = default;
  FloatImage(std::uint32_t w, std::uint32_t h, float fill = 0.0f)
      : width(w), height(h), values(std::size_t{w} * h, fill) {}
  float& at(std::uint32_t x, std::uint32_t y) { return values[std::size_t{y} * width + x]; }
  float at(std::uint32_t x, std::uint32_t y) const { return values[std::size_t{y} * width + x]; }
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw Error(Errc::io, "short write to " + path.string());
}

/// Writes to a sibling temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  write_file(tmp, contents.data(), contents.size());
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::io, "cannot rename " + tmp.string() + ": " + ec.message());
}

namespace detail {

/// Cursor over a netpbm-style header: whitespace separated tokens, '#'
/// comments to end of line.
class HeaderReader {
 public:
  HeaderReader(const std::vector<std::uint8_t>& bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  std::string token() {
    skip_space();
    std::string tok;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) tok += static_cast<char>(bytes_[pos_++]);
    if (tok.empty()) fail("truncated header");
    return tok;
  }

  std::uint32_t number() {
    const std::string tok = token();
    std::uint32_t v = 0;
    for (char c : tok) {
      if (c < '0' || c > '9' || v > 100000000u) fail("bad header number '" + tok + "'");
      v = v * 10 + static_cast<std::uint32_t>(c - '0');
    }
    return v;
  }

  /// Consumes exactly one whitespace byte ending the header.
  void end_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing header terminator");
    ++pos_;
  }

  void end_line() {
    while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
    if (pos_ >= bytes_.size()) fail("truncated header");
    ++pos_;
  }

  std::size_t position() const noexcept { return pos_; }
  [[noreturn]] void fail(const std::string& m) const { throw Error(Errc::parse, what_ + ": " + m); }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

template <class Image>
Image decode_pnm(const std::vector<std::uint8_t>& bytes, const char* magic, std::size_t channels,
                 const std::string& what) {
  HeaderReader h(bytes, what);
  if (h.token() != magic) h.fail(std::string("expected ") + magic + " magic");
  const auto w = h.number();
  const auto ht = h.number();
  const auto maxval = h.number();
  if (w == 0 || ht == 0) h.fail("zero image dimension");
  if (maxval != 255) h.fail("only 8-bit (maxval 255) images are supported");
  h.end_header();
  Image img(w, ht);
  const std::size_t need = std::size_t{w} * ht * channels;
  if (bytes.size() - h.position() < need) h.fail("truncated pixel data");
  std::memcpy(img.pixels.data(), bytes.data() + h.position(), need);
  return img;
}

template <class Image>
std::string encode_pnm(const Image& img, const char* magic) {
  std::string out = std::string(magic) + "\n" + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

}  // namespace detail

inline RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& what = "PPM") {
  return detail::decode_pnm<RgbImage>(bytes, "P6", 3, what);
}
inline GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& what = "PGM") {
  return detail::decode_pnm<GrayImage>(bytes, "P5", 1, what);
}
inline std::string encode_ppm(const RgbImage& img) { return detail::encode_pnm(img, "P6"); }
inline std::string encode_pgm(const GrayImage& img) { return detail::encode_pnm(img, "P5"); }

inline RgbImage read_ppm(const std::filesystem::path& p) { return decode_ppm(read_file(p), p.string()); }
inline GrayImage read_pgm(const std::filesystem::path& p) { return decode_pgm(read_file(p), p.string()); }
inline void write_ppm(const std::filesystem::path& p, const RgbImage& img) {
  const auto s = encode_ppm(img);
  write_file(p, s.data(), s.size());
}
inline void write_pgm(const std::filesystem::path& p, const GrayImage& img) {
  const auto s = encode_pgm(img);
  write_file(p, s.data(), s.size());
}

/// Grayscale portable float map ("Pf"). A negative scale means little-endian;
/// rows are stored bottom to top.
inline FloatImage decode_pfm(const std::vector<std::uint8_t>& bytes, const std::string& what = "PFM") {
  detail::HeaderReader h(bytes, what);
  const std::string magic = h.token();
  if (magic == "PF") h.fail("color PFM is not supported for depth");
  if (magic != "Pf") h.fail("expected Pf magic");
  const auto w = h.number();
  const auto ht = h.number();
  if (w == 0 || ht == 0) h.fail("zero image dimension");
  const std::string scale_tok = h.token();
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    h.fail("bad scale '" + scale_tok + "'");
  }
  if (scale == 0.0 || !std::isfinite(scale)) h.fail("bad scale '" + scale_tok + "'");
  h.end_header();
  const bool little = scale < 0.0;
  const std::size_t need = std::size_t{w} * ht * 4;
  if (bytes.size() - h.position() < need) h.fail("truncated float data");
  FloatImage img(w, ht);
  const std::uint8_t* src = bytes.data() + h.position();
  for (std::uint32_t row = 0; row < ht; ++row) {
    const std::uint32_t y = ht - 1 - row;
    for (std::uint32_t x = 0; x < w; ++x) {
      std::uint8_t b[4];
      std::memcpy(b, src + (std::size_t{row} * w + x) * 4, 4);
      if (little != (std::endian::native == std::endian::little)) {
        std::swap(b[0], b[3]);
        std::swap(b[1], b[2]);
      }
      float v;
      std::memcpy(&v, b, 4);
      img.at(x, y) = v;
    }
  }
  return img;
}

inline std::string encode_pfm(const FloatImage& img) {
  std::string out = "Pf\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n-1.0\n";
  for (std::uint32_t row = 0; row < img.height; ++row) {
    const std::uint32_t y = img.height - 1 - row;
    for (std::uint32_t x = 0; x < img.width; ++x) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(img.at(x, y));
      char b[4];
      for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
      out.append(b, 4);
    }
  }
  return out;
}

inline FloatImage read_pfm(const std::filesystem::path& p) { return decode_pfm(read_file(p), p.string()); }
inline void write_pfm(const std::filesystem::path& p, const FloatImage& img) {
  const auto s = encode_pfm(img);
  write_file(p, s.data(), s.size());
}

}  // namespace viewx

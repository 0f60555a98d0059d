#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "viewx/error.hpp"

namespace viewx {

using Shape = std::vector<std::uint32_t>;

inline std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

/// Dense row-major float32 array. Latent videos are (F, C, H, W) tensors and
/// opacity masks are (F, 1, H, W) tensors.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f)
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}
  Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != element_count(shape_))
      throw Error(Errc::shape, "data length " + std::to_string(data_.size()) +
                                   " does not match shape " + shape_string(shape_));
  }

  static Tensor video(std::uint32_t frames, std::uint32_t channels, std::uint32_t height,
                      std::uint32_t width, float fill = 0.0f) {
    return Tensor({frames, channels, height, width}, fill);
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::uint32_t dim(std::size_t i) const { return shape_.at(i); }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Element (f, c, y, x) of a rank-4 tensor.
  float& at(std::size_t f, std::size_t c, std::size_t y, std::size_t x) {
    return data_[((f * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  float at(std::size_t f, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[((f * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

using LatentVideo = Tensor;
using OpacityMask = Tensor;

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw Error(Errc::shape, std::string(what) + ": " + shape_string(a.shape()) + " vs " +
                                 shape_string(b.shape()));
}

inline void require_video(const Tensor& t, const char* what) {
  if (t.rank() != 4)
    throw Error(Errc::shape, std::string(what) + " must be rank 4 (F, C, H, W), got " +
                                 shape_string(t.shape()));
}

/// Bitwise equality including the sign of zero and NaN payloads.
inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::equal(a.values().begin(), a.values().end(), b.values().begin(),
                    [](float x, float y) {
                      return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y);
                    });
}

inline float max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace viewx

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "viewx/error.hpp"
#include "viewx/geometry.hpp"
#include "viewx/image_io.hpp"
#include "viewx/tensor.hpp"

namespace viewx {

/// Depth along +z per pixel. A pixel is valid when its depth is finite and > 0.
struct DepthMap {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> depth;

  static DepthMap from_image(const FloatImage& img) { return {img.width, img.height, img.values}; }

  bool valid(std::uint32_t x, std::uint32_t y) const {
    const float d = depth[std::size_t{y} * width + x];
    return std::isfinite(d) && d > 0.0f;
  }
  float at(std::uint32_t x, std::uint32_t y) const { return depth[std::size_t{y} * width + x]; }
};

struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Eigen::Vector3f> colors;  // [0, 1]

  std::size_t size() const noexcept { return positions.size(); }
};

struct RenderedFrame {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> rgb;            // interleaved, [0, 1]
  std::vector<float> opacity;        // 1 where a splat landed
  std::vector<double> depth_buffer;  // +inf where empty

  RenderedFrame() = default;
  RenderedFrame(std::uint32_t w, std::uint32_t h)
      : width(w),
        height(h),
        rgb(std::size_t{w} * h * 3, 0.0f),
        opacity(std::size_t{w} * h, 0.0f),
        depth_buffer(std::size_t{w} * h, std::numeric_limits<double>::infinity()) {}

  RgbImage to_image() const {
    RgbImage img(width, height);
    for (std::size_t i = 0; i < rgb.size(); ++i)
      img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(rgb[i], 0.0f, 1.0f) * 255.0f));
    return img;
  }

  GrayImage mask_image() const {
    GrayImage img(width, height);
    for (std::size_t i = 0; i < opacity.size(); ++i)
      img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(opacity[i], 0.0f, 1.0f) * 255.0f));
    return img;
  }

  double hole_ratio() const {
    std::size_t holes = 0;
    for (float o : opacity) holes += o == 0.0f;
    return static_cast<double>(holes) / static_cast<double>(opacity.size());
  }
};

/// Lifts every valid-depth pixel to a world-space point carrying the pixel color.
inline PointCloud unproject(const RgbImage& rgb, const DepthMap& depth, const CameraIntrinsics& intr,
                            const CameraPose& pose) {
  intr.validate();
  if (rgb.width != intr.width || rgb.height != intr.height || depth.width != intr.width ||
      depth.height != intr.height)
    throw Error(Errc::shape, "image, depth, and intrinsics dimensions differ");
  PointCloud cloud;
  for (std::uint32_t v = 0; v < intr.height; ++v)
    for (std::uint32_t u = 0; u < intr.width; ++u) {
      if (!depth.valid(u, v)) continue;
      const double z = depth.at(u, v);
      const Vec3 cam(z * (u - intr.cx) / intr.fx, z * (v - intr.cy) / intr.fy, z);
      cloud.positions.push_back(pose.camera_to_world(cam));
      const std::uint8_t* px = rgb.at(u, v);
      cloud.colors.emplace_back(px[0] / 255.0f, px[1] / 255.0f, px[2] / 255.0f);
    }
  return cloud;
}

struct RenderOptions {
  int splat_radius_px = 1;
  double z_near = 1e-4;
};

/// Z-buffered square-splat rendering. Points are visited in index order and
/// a pixel is only overwritten by a strictly nearer point.
inline RenderedFrame render_frame(const PointCloud& cloud, const CameraIntrinsics& intr,
                                  const CameraPose& pose, const RenderOptions& opt = {}) {
  intr.validate();
  if (opt.splat_radius_px < 0) throw Error(Errc::domain, "splat radius must be >= 0");
  if (cloud.colors.size() != cloud.positions.size())
    throw Error(Errc::shape, "point cloud positions and colors differ in count");
  RenderedFrame frame(intr.width, intr.height);
  const Mat3 rt = pose.rotation.transpose();
  const long r = opt.splat_radius_px;
  const double w = intr.width, h = intr.height;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 p = rt * (cloud.positions[i] - pose.translation);
    if (!(p.z() > opt.z_near)) continue;
    const double u = intr.fx * p.x() / p.z() + intr.cx;
    const double v = intr.fy * p.y() / p.z() + intr.cy;
    if (!(u > -r - 1.0 && u < w + r + 1.0 && v > -r - 1.0 && v < h + r + 1.0)) continue;
    const long cu = std::lround(u);
    const long cv = std::lround(v);
    for (long y = cv - r; y <= cv + r; ++y) {
      if (y < 0 || y >= static_cast<long>(intr.height)) continue;
      for (long x = cu - r; x <= cu + r; ++x) {
        if (x < 0 || x >= static_cast<long>(intr.width)) continue;
        const std::size_t idx = static_cast<std::size_t>(y) * intr.width + static_cast<std::size_t>(x);
        if (!(p.z() < frame.depth_buffer[idx])) continue;
        frame.depth_buffer[idx] = p.z();
        frame.opacity[idx] = 1.0f;
        for (int c = 0; c < 3; ++c) frame.rgb[idx * 3 + c] = cloud.colors[i][c];
      }
    }
  }
  return frame;
}

struct RenderedVideo {
  std::vector<RenderedFrame> frames;

  /// (F, 3, H, W) colors in [0, 1].
  Tensor video() const {
    if (frames.empty()) return {};
    const auto W = frames[0].width, H = frames[0].height;
    Tensor t = Tensor::video(static_cast<std::uint32_t>(frames.size()), 3, H, W);
    for (std::size_t f = 0; f < frames.size(); ++f)
      for (std::uint32_t y = 0; y < H; ++y)
        for (std::uint32_t x = 0; x < W; ++x)
          for (int c = 0; c < 3; ++c)
            t.at(f, c, y, x) = frames[f].rgb[(std::size_t{y} * W + x) * 3 + c];
    return t;
  }

  /// (F, 1, H, W) opacity mask.
  OpacityMask mask() const {
    if (frames.empty()) return {};
    const auto W = frames[0].width, H = frames[0].height;
    OpacityMask m = Tensor::video(static_cast<std::uint32_t>(frames.size()), 1, H, W);
    for (std::size_t f = 0; f < frames.size(); ++f)
      for (std::size_t i = 0; i < frames[f].opacity.size(); ++i)
        m[f * std::size_t{H} * W + i] = frames[f].opacity[i];
    return m;
  }
};

inline RenderedVideo render_trajectory(const PointCloud& cloud, const CameraIntrinsics& intr,
                                       const Trajectory& traj, const RenderOptions& opt = {}) {
  if (traj.poses.empty()) throw Error(Errc::domain, "trajectory is empty");
  RenderedVideo out;
  out.frames.reserve(traj.poses.size());
  for (const auto& pose : traj.poses) out.frames.push_back(render_frame(cloud, intr, pose, opt));
  return out;
}

}  // namespace viewx

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "viewx/error.hpp"
#include "viewx/geometry.hpp"

namespace viewx::colmap {

struct Camera {
  std::uint32_t id = 0;
  std::string model;
  CameraIntrinsics intrinsics;
};

struct Image {
  std::uint32_t id = 0;
  std::uint32_t camera_id = 0;
  std::string name;
  CameraPose pose;  // camera-to-world
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

inline std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double to_double(std::string_view tok, std::size_t line, const char* field) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v))
    throw Error(Errc::parse, std::string("bad ") + field + " '" + std::string(tok) + "'", line);
  return v;
}

inline std::uint32_t to_u32(std::string_view tok, std::size_t line, const char* field) {
  std::uint32_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw Error(Errc::parse, std::string("bad ") + field + " '" + std::string(tok) + "'", line);
  return v;
}

inline bool is_skippable(std::string_view line) {
  const auto t = trim(line);
  return t.empty() || t.front() == '#';
}

inline bool is_known_model(std::string_view m) {
  static constexpr std::string_view kModels[] = {
      "SIMPLE_PINHOLE", "PINHOLE", "SIMPLE_RADIAL", "RADIAL", "OPENCV", "OPENCV_FISHEYE",
      "FULL_OPENCV", "FOV", "SIMPLE_RADIAL_FISHEYE", "RADIAL_FISHEYE", "THIN_PRISM_FISHEYE",
      "RAD_TAN_THIN_PRISM_FISHEYE"};
  for (auto k : kModels)
    if (k == m) return true;
  return false;
}

}  // namespace detail

/// Parses COLMAP cameras.txt. Line numbers in errors are 1-based.
inline std::vector<Camera> parse_cameras(std::string_view text) {
  std::vector<Camera> out;
  const auto lines = detail::split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t lineno = n + 1;
    if (detail::is_skippable(lines[n])) continue;
    const auto tok = detail::tokens(lines[n]);
    if (tok.size() < 4) throw Error(Errc::parse, "expected ID MODEL WIDTH HEIGHT PARAMS...", lineno);
    Camera cam;
    cam.id = detail::to_u32(tok[0], lineno, "camera id");
    cam.model = std::string(tok[1]);
    const auto width = detail::to_u32(tok[2], lineno, "width");
    const auto height = detail::to_u32(tok[3], lineno, "height");
    std::vector<double> params;
    for (std::size_t i = 4; i < tok.size(); ++i)
      params.push_back(detail::to_double(tok[i], lineno, "parameter"));

    auto& in = cam.intrinsics;
    in.width = width;
    in.height = height;
    if (cam.model == "PINHOLE") {
      if (params.size() != 4) throw Error(Errc::parse, "PINHOLE expects 4 parameters", lineno);
      in.fx = params[0];
      in.fy = params[1];
      in.cx = params[2];
      in.cy = params[3];
    } else if (cam.model == "SIMPLE_PINHOLE") {
      if (params.size() != 3)
        throw Error(Errc::parse, "SIMPLE_PINHOLE expects 3 parameters", lineno);
      in.fx = in.fy = params[0];
      in.cx = params[1];
      in.cy = params[2];
    } else if (detail::is_known_model(cam.model)) {
      throw Error(Errc::unsupported_model, cam.model, lineno);
    } else {
      throw Error(Errc::parse, "unknown camera model '" + cam.model + "'", lineno);
    }
    if (!in.valid()) throw Error(Errc::parse, "intrinsics out of range", lineno);
    out.push_back(std::move(cam));
  }
  return out;
}

/// Parses COLMAP images.txt. Each record is a pose line followed by a 2-D
/// points line (possibly empty), which is skipped. Stored poses are
/// world-to-camera and are returned as camera-to-world.
inline std::vector<Image> parse_images(std::string_view text) {
  std::vector<Image> out;
  const auto lines = detail::split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t lineno = n + 1;
    if (detail::is_skippable(lines[n])) continue;
    const auto tok = detail::tokens(lines[n]);
    if (tok.size() < 10)
      throw Error(Errc::parse, "expected ID QW QX QY QZ TX TY TZ CAMERA_ID NAME", lineno);
    Image img;
    img.id = detail::to_u32(tok[0], lineno, "image id");
    double q[4], t[3];
    for (int i = 0; i < 4; ++i) q[i] = detail::to_double(tok[1 + i], lineno, "quaternion");
    for (int i = 0; i < 3; ++i) t[i] = detail::to_double(tok[5 + i], lineno, "translation");
    img.camera_id = detail::to_u32(tok[8], lineno, "camera id");
    // Name is the remainder of the line after the camera id.
    const auto name_begin = static_cast<std::size_t>(tok[9].data() - lines[n].data());
    img.name = std::string(detail::trim(lines[n].substr(name_begin)));

    Quat quat(q[0], q[1], q[2], q[3]);
    const double norm = quat.norm();
    if (!(norm >= 1e-8)) throw Error(Errc::parse, "quaternion cannot be normalized", lineno);
    quat.coeffs() /= norm;
    const Mat3 world_to_cam = quat.toRotationMatrix();
    img.pose.rotation = world_to_cam.transpose();
    img.pose.translation = -(world_to_cam.transpose() * Vec3(t[0], t[1], t[2]));

    if (n + 1 >= lines.size())
      throw Error(Errc::parse, "pose line without a following points line", lineno);
    ++n;  // points line
    out.push_back(std::move(img));
  }
  return out;
}

/// One images.txt record (pose line plus an empty points line) for a
/// camera-to-world pose.
inline std::string format_image(const Image& img) {
  const Mat3 world_to_cam = img.pose.rotation.transpose();
  Quat q(world_to_cam);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 t = -(world_to_cam * img.pose.translation);
  char buf[512];
  std::snprintf(buf, sizeof buf, "%u %.17g %.17g %.17g %.17g %.17g %.17g %.17g %u ", img.id, q.w(),
                q.x(), q.y(), q.z(), t.x(), t.y(), t.z(), img.camera_id);
  return std::string(buf) + img.name + "\n\n";
}

inline std::string format_camera(const Camera& cam) {
  const auto& in = cam.intrinsics;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%u PINHOLE %u %u %.17g %.17g %.17g %.17g\n", cam.id, in.width,
                in.height, in.fx, in.fy, in.cx, in.cy);
  return buf;
}

}  // namespace viewx::colmap

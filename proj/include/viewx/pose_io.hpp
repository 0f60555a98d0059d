#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "viewx/colmap.hpp"
#include "viewx/geometry.hpp"
#include "viewx/image_io.hpp"

namespace viewx {

/// Native pose file:
///   {"intrinsics": {"fx", "fy", "cx", "cy", "width", "height"},
///    "poses": [{"rotation": [9 floats, row-major], "translation": [3 floats]}]}
/// Intrinsics are optional; poses are camera-to-world.
struct PoseSet {
  std::optional<CameraIntrinsics> intrinsics;
  std::vector<CameraPose> poses;
  std::vector<std::string> names;
};

inline nlohmann::json intrinsics_to_json(const CameraIntrinsics& in) {
  return {{"fx", in.fx}, {"fy", in.fy}, {"cx", in.cx}, {"cy", in.cy}, {"width", in.width}, {"height", in.height}};
}

inline nlohmann::json pose_to_json(const CameraPose& p) {
  std::vector<double> r(9), t(3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r[static_cast<std::size_t>(i * 3 + j)] = p.rotation(i, j);
    t[static_cast<std::size_t>(i)] = p.translation(i);
  }
  return {{"rotation", r}, {"translation", t}};
}

inline nlohmann::json pose_set_to_json(const PoseSet& set) {
  nlohmann::json j;
  if (set.intrinsics) j["intrinsics"] = intrinsics_to_json(*set.intrinsics);
  j["poses"] = nlohmann::json::array();
  for (std::size_t i = 0; i < set.poses.size(); ++i) {
    auto p = pose_to_json(set.poses[i]);
    if (i < set.names.size() && !set.names[i].empty()) p["name"] = set.names[i];
    j["poses"].push_back(std::move(p));
  }
  return j;
}

inline PoseSet pose_set_from_json(const nlohmann::json& j) {
  PoseSet set;
  try {
    if (j.contains("intrinsics")) {
      const auto& in = j.at("intrinsics");
      CameraIntrinsics c;
      c.fx = in.at("fx").get<double>();
      c.fy = in.at("fy").get<double>();
      c.cx = in.at("cx").get<double>();
      c.cy = in.at("cy").get<double>();
      c.width = in.at("width").get<std::uint32_t>();
      c.height = in.at("height").get<std::uint32_t>();
      c.validate();
      set.intrinsics = c;
    }
    for (const auto& pj : j.at("poses")) {
      const auto r = pj.at("rotation").get<std::vector<double>>();
      const auto t = pj.at("translation").get<std::vector<double>>();
      if (r.size() != 9 || t.size() != 3)
        throw Error(Errc::parse, "pose needs 9 rotation and 3 translation values");
      CameraPose p;
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) p.rotation(a, b) = r[static_cast<std::size_t>(a * 3 + b)];
        p.translation(a) = t[static_cast<std::size_t>(a)];
      }
      p.validate();
      set.poses.push_back(p);
      set.names.push_back(pj.value("name", std::string{}));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("pose file: ") + e.what());
  }
  return set;
}

/// Loads a native pose JSON file, or a COLMAP text model directory
/// (images.txt, plus cameras.txt for intrinsics when present).
inline PoseSet load_pose_set(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) {
    PoseSet set;
    const auto images_bytes = read_file(path / "images.txt");
    const std::string images_text(images_bytes.begin(), images_bytes.end());
    std::vector<colmap::Image> images;
    try {
      images = colmap::parse_images(images_text);
    } catch (const Error& e) {
      throw e.with_context((path / "images.txt").string());
    }
    if (std::filesystem::exists(path / "cameras.txt")) {
      const auto cam_bytes = read_file(path / "cameras.txt");
      try {
        const auto cams = colmap::parse_cameras(std::string(cam_bytes.begin(), cam_bytes.end()));
        if (!cams.empty()) set.intrinsics = cams.front().intrinsics;
      } catch (const Error& e) {
        throw e.with_context((path / "cameras.txt").string());
      }
    }
    for (auto& img : images) {
      set.poses.push_back(img.pose);
      set.names.push_back(img.name);
    }
    return set;
  }
  const auto bytes = read_file(path);
  const auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded()) throw Error(Errc::parse, path.string() + ": not valid JSON");
  try {
    return pose_set_from_json(j);
  } catch (const Error& e) {
    throw e.with_context(path.string());
  }
}

}  // namespace viewx

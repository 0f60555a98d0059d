#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "viewx/image_io.hpp"
#include "viewx/oracle.hpp"
#include "viewx/protocol.hpp"

namespace viewx {

using Prior = std::variant<GaussianPrior, MixturePrior>;

/// Prior description:
///   {"type": "gaussian", "mean": 0.0 | "mean.vxt", "scale": 1.0}
///   {"type": "mixture", "atoms": ["a.vxt", ...], "weights": [...]}
/// Relative tensor paths resolve against `base_dir`.
inline Prior prior_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  try {
    const std::string type = j.value("type", std::string("gaussian"));
    if (type == "gaussian") {
      GaussianPrior g;
      g.scale = j.value("scale", 1.0);
      if (j.contains("mean")) {
        const auto& m = j.at("mean");
        if (m.is_string()) g.mean_array = bridge::read_vxt(resolve(m.get<std::string>()));
        else g.mean_scalar = m.get<double>();
      }
      g.validate();
      return g;
    }
    if (type == "mixture") {
      MixturePrior mix;
      for (const auto& a : j.at("atoms")) mix.atoms.push_back(bridge::read_vxt(resolve(a.get<std::string>())));
      if (j.contains("weights")) mix.weights = j.at("weights").get<std::vector<double>>();
      mix.validate();
      return mix;
    }
    throw Error(Errc::config, "unknown prior type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config, std::string("prior: ") + e.what());
  }
}

inline Prior load_prior(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded()) throw Error(Errc::config, path.string() + ": not valid JSON");
  return prior_from_json(j, path.parent_path());
}

}  // namespace viewx

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "viewx/error.hpp"
#include "viewx/geometry.hpp"

namespace viewx {

/// Camera centers and unit optical axes of a set of training views.
struct ViewSet {
  std::vector<Vec3> centers;
  std::vector<Vec3> directions;

  static ViewSet from_poses(const std::vector<CameraPose>& poses) {
    ViewSet v;
    for (const auto& p : poses) {
      v.centers.push_back(p.center());
      v.directions.push_back(p.optical_axis().normalized());
    }
    return v;
  }

  std::size_t size() const noexcept { return centers.size(); }

  void validate() const {
    if (centers.empty()) throw Error(Errc::domain, "view set is empty");
    if (centers.size() != directions.size())
      throw Error(Errc::domain, "view set centers and directions differ in count");
    for (const auto& d : directions)
      if (std::fabs(d.norm() - 1.0) > 1e-6) throw Error(Errc::domain, "view direction is not unit");
  }
};

struct ExtrapolationReport {
  Vec3 d = Vec3::Zero();
  double r = 0.0;
  double e = 0.0;
  double direction_angle = 0.0;  // radians
};

/// d = centroid(P) - q. Points from q toward the centroid.
inline Vec3 centroid_offset(const std::vector<Vec3>& centers, const Vec3& q) {
  if (centers.empty()) throw Error(Errc::domain, "view set is empty");
  Vec3 sum = Vec3::Zero();
  for (const auto& p : centers) sum += p;
  return sum / static_cast<double>(centers.size()) - q;
}

inline Vec3 centroid_offset(const ViewSet& train, const Vec3& q) {
  return centroid_offset(train.centers, q);
}

/// Extent of the centers along d: max(p . d_hat) - min(p . d_hat). Spreads
/// below 1e-12 of the set's radius are reported as exactly 0.
inline double training_range(const std::vector<Vec3>& centers, const Vec3& d) {
  if (centers.empty()) throw Error(Errc::domain, "view set is empty");
  const double norm = d.norm();
  if (!(norm > 0.0)) throw Error(Errc::domain, "range direction is undefined for a zero offset");
  const Vec3 dir = d / norm;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : centers) {
    const double s = p.dot(dir);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
    centroid += p;
  }
  centroid /= static_cast<double>(centers.size());
  double radius = 0.0;
  for (const auto& p : centers) radius = std::max(radius, (p - centroid).norm());
  const double r = hi - lo;
  return r <= 1e-12 * radius ? 0.0 : r;
}

inline double training_range(const ViewSet& train, const Vec3& d) {
  return training_range(train.centers, d);
}

/// Angle between `axis` and the normalized mean of the training directions.
/// NaN when the training directions cancel out.
inline double direction_angle(const std::vector<Vec3>& directions, const Vec3& axis) {
  Vec3 mean = Vec3::Zero();
  for (const auto& d : directions) mean += d;
  const double n = mean.norm();
  if (!(n > 1e-12) || !(axis.norm() > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double c = std::clamp(mean.dot(axis) / (n * axis.norm()), -1.0, 1.0);
  return std::acos(c);
}

/// e = |d| / r for a novel camera position against the training centers.
/// Throws Errc::degenerate when r = 0 but |d| > 0; e = 0 when q is the centroid.
inline ExtrapolationReport extrapolation_degree(const std::vector<Vec3>& centers, const Vec3& q) {
  ExtrapolationReport rep;
  rep.d = centroid_offset(centers, q);
  const double dn = rep.d.norm();
  if (dn == 0.0) return rep;
  rep.r = training_range(centers, rep.d);
  if (rep.r == 0.0)
    throw Error(Errc::degenerate, "training views have zero extent along the offset direction");
  rep.e = dn / rep.r;
  return rep;
}

inline ExtrapolationReport extrapolation_degree(const ViewSet& train, const CameraPose& q_pose) {
  train.validate();
  ExtrapolationReport rep = extrapolation_degree(train.centers, q_pose.center());
  rep.direction_angle = direction_angle(train.directions, q_pose.optical_axis());
  return rep;
}

struct SplitOptions {
  double e_threshold = 1.0;
  std::size_t max_test = 1;
  double max_direction_angle = 30.0 * std::numbers::pi / 180.0;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<double> e;  // per view; NaN where undefined
  std::string diagnostic;
};

namespace detail {

inline std::vector<Vec3> gather(const std::vector<Vec3>& v, const std::vector<std::size_t>& idx,
                                std::size_t skip = static_cast<std::size_t>(-1)) {
  std::vector<Vec3> out;
  for (auto i : idx)
    if (i != skip) out.push_back(v[i]);
  return out;
}

inline double try_degree(const ViewSet& views, const std::vector<std::size_t>& train,
                         std::size_t q) {
  try {
    return extrapolation_degree(gather(views.centers, train, q), views.centers[q]).e;
  } catch (const Error&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace detail

/// Greedy extrapolative split: repeatedly moves the view with the largest e
/// (w.r.t. the remaining views) to the test set while it exceeds the
/// threshold. Candidates facing away from the remaining views by more than
/// `max_direction_angle`, or whose removal leaves a degenerate set, are skipped.
/// Ties go to the lowest index.
inline Split build_split(const std::vector<CameraPose>& poses, const SplitOptions& opt) {
  if (poses.size() < 3) throw Error(Errc::domain, "split construction needs at least 3 views");
  const ViewSet views = ViewSet::from_poses(poses);
  views.validate();

  Split split;
  for (std::size_t i = 0; i < poses.size(); ++i) split.train.push_back(i);

  double best_seen = -1.0;
  while (split.test.size() < opt.max_test && split.train.size() > 2) {
    std::size_t best = static_cast<std::size_t>(-1);
    double best_e = -1.0;
    for (std::size_t q : split.train) {
      const double e = detail::try_degree(views, split.train, q);
      if (std::isnan(e)) continue;
      const double angle = direction_angle(detail::gather(views.directions, split.train, q),
                                           views.directions[q]);
      if (!(angle <= opt.max_direction_angle)) continue;
      if (e > best_e * (1.0 + 1e-12)) {
        best_e = e;
        best = q;
      }
    }
    best_seen = std::max(best_seen, best_e);
    if (best == static_cast<std::size_t>(-1) || !(best_e > opt.e_threshold)) break;
    split.test.push_back(best);
    std::erase(split.train, best);
  }

  if (split.test.empty()) {
    std::ostringstream msg;
    msg << "no view exceeds e_threshold " << opt.e_threshold;
    if (best_seen >= 0.0) msg << " (largest candidate e = " << best_seen << ")";
    split.diagnostic = msg.str();
  }

  split.e.assign(poses.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t q : split.test) {
    try {
      split.e[q] = extrapolation_degree(detail::gather(views.centers, split.train),
                                        views.centers[q]).e;
    } catch (const Error&) {
    }
  }
  for (std::size_t q : split.train) split.e[q] = detail::try_degree(views, split.train, q);
  return split;
}

inline nlohmann::json split_to_json(const Split& split) {
  nlohmann::json e = nlohmann::json::object();
  for (std::size_t i = 0; i < split.e.size(); ++i)
    e[std::to_string(i)] = std::isnan(split.e[i]) ? nlohmann::json(nullptr) : nlohmann::json(split.e[i]);
  nlohmann::json j{{"train", split.train}, {"test", split.test}, {"e", e}};
  if (!split.diagnostic.empty()) j["diagnostic"] = split.diagnostic;
  return j;
}

/// Histogram of the defined per-view e values: "bin_lo,bin_hi,count" rows
/// from 0 up to the bin holding the largest value.
inline std::string e_histogram_csv(const std::vector<double>& values, double bin_width = 0.5) {
  if (!(bin_width > 0.0)) throw Error(Errc::domain, "bin width must be > 0");
  std::vector<std::size_t> counts;
  for (double v : values) {
    if (std::isnan(v) || v < 0.0) continue;
    const auto bin = static_cast<std::size_t>(std::floor(v / bin_width));
    if (bin >= counts.size()) counts.resize(bin + 1, 0);
    ++counts[bin];
  }
  std::ostringstream out;
  out << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < counts.size(); ++b)
    out << b * bin_width << ',' << (b + 1) * bin_width << ',' << counts[b] << '\n';
  return out.str();
}

}  // namespace viewx

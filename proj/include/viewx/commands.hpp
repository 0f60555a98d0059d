#pragma once

#include <algorithm>
#include <chrono>
#include <cstring>
#include <memory>
#include <variant>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "viewx/bridge.hpp"
#include "viewx/extrapolation.hpp"
#include "viewx/geometry.hpp"
#include "viewx/image_io.hpp"
#include "viewx/oracle.hpp"
#include "viewx/pcrender.hpp"
#include "viewx/pose_io.hpp"
#include "viewx/prior_io.hpp"
#include "viewx/sampler.hpp"

// Implementation of the `viewx` subcommands. Each function throws
// viewx::Error on failure; tools/viewx.cpp maps error classes to exit codes.
namespace viewx::cli {

namespace fs = std::filesystem;

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json read_json(const fs::path& path, Errc bad_content = Errc::config) {
  const auto bytes = read_file(path);
  auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded()) throw Error(bad_content, path.string() + ": not valid JSON");
  return j;
}

inline std::string frame_name(const char* prefix, std::size_t index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05zu.%s", prefix, index, ext);
  return buf;
}

// ---- degree ------------------------------------------------------------------

struct DegreeOptions {
  fs::path poses;
  std::optional<fs::path> target;
  std::optional<std::size_t> target_index;  // leave-one-out from `poses`
};

inline ExtrapolationReport cmd_degree(const DegreeOptions& opt, std::ostream& out) {
  PoseSet train = load_pose_set(opt.poses);
  if (train.poses.empty()) throw Error(Errc::config, opt.poses.string() + " contains no poses");
  CameraPose target;
  if (opt.target_index) {
    if (*opt.target_index >= train.poses.size()) throw Error(Errc::config, "target index out of range");
    target = train.poses[*opt.target_index];
    train.poses.erase(train.poses.begin() + static_cast<std::ptrdiff_t>(*opt.target_index));
    if (train.poses.empty()) throw Error(Errc::config, "no training views left after removing the target");
  } else if (opt.target) {
    const PoseSet t = load_pose_set(*opt.target);
    if (t.poses.empty()) throw Error(Errc::config, opt.target->string() + " contains no poses");
    target = t.poses.front();
  } else {
    throw Error(Errc::config, "a target pose (--target or --target-index) is required");
  }
  const auto rep = extrapolation_degree(ViewSet::from_poses(train.poses), target);
  out << std::setprecision(10);
  out << "d = (" << rep.d.x() << ", " << rep.d.y() << ", " << rep.d.z() << ")\n";
  out << "|d| = " << rep.d.norm() << "\n";
  out << "r = " << rep.r << "\n";
  out << "e = " << rep.e << "\n";
  out << "direction_angle_deg = " << rep.direction_angle * 180.0 / std::numbers::pi << "\n";
  return rep;
}

// ---- split ------------------------------------------------------------------

struct SplitCmdOptions {
  fs::path poses;
  double e_threshold = 1.0;
  std::size_t max_test = 1;
  double max_angle_deg = 30.0;
  fs::path out_json = "split.json";
  fs::path out_csv = "e_hist.csv";
  double bin_width = 0.5;
};

inline Split cmd_split(const SplitCmdOptions& opt, std::ostream& out) {
  const PoseSet set = load_pose_set(opt.poses);
  if (set.poses.empty()) throw Error(Errc::config, opt.poses.string() + " contains no poses");
  SplitOptions so;
  so.e_threshold = opt.e_threshold;
  so.max_test = opt.max_test;
  so.max_direction_angle = opt.max_angle_deg * std::numbers::pi / 180.0;
  const Split split = build_split(set.poses, so);
  write_file_atomic(opt.out_json, split_to_json(split).dump(2) + "\n");
  write_file_atomic(opt.out_csv, e_histogram_csv(split.e, opt.bin_width));
  out << "train: " << split.train.size() << " views, test: " << split.test.size() << " views\n";
  for (auto t : split.test) out << "test view " << t << " e = " << split.e[t] << "\n";
  if (!split.diagnostic.empty()) out << split.diagnostic << "\n";
  return split;
}

// ---- render-pc ---------------------------------------------------------------

struct RenderCmdOptions {
  fs::path image;
  fs::path depth;
  fs::path poses;  // intrinsics + source pose (poses[0]), optional target (poses[1])
  std::optional<fs::path> target;
  int frames = 25;
  int splat_radius = 1;
  fs::path out_dir;
};

inline RenderedVideo cmd_render_pc(const RenderCmdOptions& opt, std::ostream& out) {
  const RgbImage rgb = read_ppm(opt.image);
  const DepthMap depth = DepthMap::from_image(read_pfm(opt.depth));
  const PoseSet set = load_pose_set(opt.poses);
  if (!set.intrinsics) throw Error(Errc::config, opt.poses.string() + " has no intrinsics");
  if (set.poses.empty()) throw Error(Errc::config, opt.poses.string() + " contains no poses");
  const CameraPose source = set.poses.front();
  CameraPose target = set.poses.size() > 1 ? set.poses[1] : source;
  if (opt.target) {
    const PoseSet t = load_pose_set(*opt.target);
    if (t.poses.empty()) throw Error(Errc::config, opt.target->string() + " contains no poses");
    target = t.poses.front();
  }
  const PointCloud cloud = unproject(rgb, depth, *set.intrinsics, source);
  const Trajectory traj = make_trajectory(source, target, opt.frames);
  RenderOptions ro;
  ro.splat_radius_px = opt.splat_radius;
  const RenderedVideo video = render_trajectory(cloud, *set.intrinsics, traj, ro);

  fs::create_directories(opt.out_dir);
  for (std::size_t f = 0; f < video.frames.size(); ++f) {
    write_ppm(opt.out_dir / frame_name("frame", f, "ppm"), video.frames[f].to_image());
    write_pgm(opt.out_dir / frame_name("mask", f, "pgm"), video.frames[f].mask_image());
  }
  out << "rendered " << video.frames.size() << " frames from " << cloud.size() << " points to "
      << opt.out_dir.string() << "\n";
  return video;
}

// ---- refine ------------------------------------------------------------------

struct FrameSet {
  std::vector<RgbImage> frames;
  std::vector<GrayImage> masks;
};

/// Reads frame_00000.ppm, frame_00001.ppm, ... with their mask_%05d.pgm.
inline FrameSet read_frame_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::io, dir.string() + " is not a directory");
  FrameSet set;
  for (std::size_t f = 0;; ++f) {
    const fs::path frame = dir / frame_name("frame", f, "ppm");
    if (!fs::exists(frame)) break;
    set.frames.push_back(read_ppm(frame));
    set.masks.push_back(read_pgm(dir / frame_name("mask", f, "pgm")));
    const auto& a = set.frames.front();
    const auto& b = set.frames.back();
    const auto& m = set.masks.back();
    if (a.width != b.width || a.height != b.height || m.width != a.width || m.height != a.height)
      throw Error(Errc::shape, "frame " + std::to_string(f) + " dimensions differ from frame 0");
  }
  if (set.frames.empty()) throw Error(Errc::io, dir.string() + " contains no frame_00000.ppm");
  return set;
}

/// Pixel bytes to latent values in [-1, 1]; masks to [0, 1].
inline GuidanceInput frames_to_guidance(const FrameSet& set) {
  const auto F = static_cast<std::uint32_t>(set.frames.size());
  const auto W = set.frames[0].width, H = set.frames[0].height;
  GuidanceInput g;
  g.video = Tensor::video(F, 3, H, W);
  g.mask = Tensor::video(F, 1, H, W);
  for (std::uint32_t f = 0; f < F; ++f)
    for (std::uint32_t y = 0; y < H; ++y)
      for (std::uint32_t x = 0; x < W; ++x) {
        const std::uint8_t* px = set.frames[f].at(x, y);
        for (int c = 0; c < 3; ++c) g.video.at(f, c, y, x) = 2.0f * (px[c] / 255.0f) - 1.0f;
        g.mask.at(f, 0, y, x) = set.masks[f].pixels[std::size_t{y} * W + x] / 255.0f;
      }
  const std::string cond = encode_ppm(set.frames[0]);
  g.condition.resize(cond.size());
  std::memcpy(g.condition.data(), cond.data(), cond.size());
  return g;
}

inline std::vector<RgbImage> latent_to_frames(const LatentVideo& x) {
  std::vector<RgbImage> frames;
  const auto F = x.dim(0), H = x.dim(2), W = x.dim(3);
  for (std::uint32_t f = 0; f < F; ++f) {
    RgbImage img(W, H);
    for (std::uint32_t y = 0; y < H; ++y)
      for (std::uint32_t xx = 0; xx < W; ++xx)
        for (int c = 0; c < 3; ++c) {
          const double v = (static_cast<double>(x.at(f, c, y, xx)) + 1.0) * 0.5 * 255.0;
          img.at(xx, y)[c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
    frames.push_back(std::move(img));
  }
  return frames;
}

struct RefineCmdOptions {
  fs::path input;
  fs::path output;
  std::string backend = "oracle:gaussian";  // oracle:gaussian | oracle:mixture | bridge
  std::optional<fs::path> config;
  std::optional<fs::path> prior;
  std::optional<std::string> bridge_addr;
  std::optional<std::uint64_t> seed;
  std::optional<int> t_guide;
  std::optional<int> r_guide;
  bool dynamic = false;
  double timeout_s = 300.0;
};

struct RefineResult {
  LatentVideo latent;
  SamplerConfig config;
  nlohmann::json manifest;
};

/// Sampler config from the JSON file plus flag overrides. A seed that is
/// neither in the file nor on the command line is drawn at random.
inline SamplerConfig resolve_config(const RefineCmdOptions& opt, bool* seed_drawn = nullptr) {
  SamplerConfig cfg;
  bool have_seed = false;
  if (opt.config) {
    const auto j = read_json(*opt.config);
    cfg = j.get<SamplerConfig>();
    have_seed = j.contains("seed");
  }
  if (opt.dynamic) cfg.T_guide = 16;
  if (opt.t_guide) cfg.T_guide = *opt.t_guide;
  if (opt.r_guide) cfg.R_guide = *opt.r_guide;
  if (opt.seed) {
    cfg.seed = *opt.seed;
    have_seed = true;
  }
  if (!have_seed) {
    std::random_device rd;
    cfg.seed = (static_cast<std::uint64_t>(rd()) << 32) | rd();
  }
  if (seed_drawn) *seed_drawn = !have_seed;
  cfg.validate();
  return cfg;
}

inline std::unique_ptr<DenoiserBase> make_backend(const RefineCmdOptions& opt, const GuidanceInput& g) {
  if (opt.backend == "oracle:gaussian") {
    GaussianPrior prior;
    if (opt.prior) {
      const Prior p = load_prior(*opt.prior);
      if (!std::holds_alternative<GaussianPrior>(p)) throw Error(Errc::config, "prior is not gaussian");
      prior = std::get<GaussianPrior>(p);
    }
    return std::make_unique<GaussianDenoiser>(prior);
  }
  if (opt.backend == "oracle:mixture") {
    if (!opt.prior) throw Error(Errc::config, "oracle:mixture needs --prior");
    const Prior p = load_prior(*opt.prior);
    if (!std::holds_alternative<MixturePrior>(p)) throw Error(Errc::config, "prior is not a mixture");
    return std::make_unique<MixtureDenoiser>(std::get<MixturePrior>(p));
  }
  if (opt.backend == "bridge") {
    std::optional<bridge::Address> addr;
    if (opt.bridge_addr) addr = bridge::Address::parse(*opt.bridge_addr);
    else addr = bridge::Address::from_env();
    if (!addr) throw Error(Errc::config, "bridge backend needs --bridge or VIEWX_BRIDGE_ADDR");
    nlohmann::json meta{{"shape", g.video.shape()}, {"fps", 6}, {"noise_aug_strength", 0}};
    const auto timeout = std::chrono::milliseconds(static_cast<long long>(opt.timeout_s * 1000.0));
    return std::make_unique<bridge::RemoteDenoiser>(*addr, meta, timeout);
  }
  throw Error(Errc::config, "unknown backend '" + opt.backend + "'");
}

inline RefineResult cmd_refine(const RefineCmdOptions& opt, std::ostream& out) {
  const std::string started = utc_timestamp();
  bool seed_drawn = false;
  const SamplerConfig cfg = resolve_config(opt, &seed_drawn);
  const FrameSet frames = read_frame_dir(opt.input);
  const GuidanceInput guidance = frames_to_guidance(frames);

  LatentVideo latent;
  {
    auto backend = make_backend(opt, guidance);
    latent = refine_video(guidance, *backend, cfg);
  }

  fs::create_directories(opt.output);
  const auto refined = latent_to_frames(latent);
  for (std::size_t f = 0; f < refined.size(); ++f)
    write_ppm(opt.output / frame_name("frame", f, "ppm"), refined[f]);

  nlohmann::json manifest{
      {"command", "refine"},
      {"input", fs::absolute(opt.input).string()},
      {"output", fs::absolute(opt.output).string()},
      {"backend", opt.backend},
      {"config", cfg},
      {"seed", cfg.seed},
      {"seed_drawn", seed_drawn},
      {"shape", guidance.video.shape()},
      {"timeout_s", opt.timeout_s},
      {"started_at", started},
      {"finished_at", utc_timestamp()},
  };
  if (opt.config) manifest["config_path"] = fs::absolute(*opt.config).string();
  if (opt.prior) manifest["prior_path"] = fs::absolute(*opt.prior).string();
  if (opt.bridge_addr) manifest["bridge_addr"] = *opt.bridge_addr;
  write_file_atomic(opt.output / "manifest.json", manifest.dump(2) + "\n");

  out << "refined " << refined.size() << " frames (T=" << cfg.T << ", T_guide=" << cfg.T_guide
      << ", R=" << cfg.R << ", R_guide=" << cfg.R_guide << ", seed=" << cfg.seed << ") -> "
      << opt.output.string() << "\n";
  return {std::move(latent), cfg, std::move(manifest)};
}

/// Options that reproduce a recorded refine run. The recorded, fully
/// resolved sampler config is used rather than re-reading the config file.
inline RefineCmdOptions options_from_manifest(const nlohmann::json& m,
                                              const std::optional<fs::path>& output_override) {
  try {
    if (m.at("command") != "refine") throw Error(Errc::config, "manifest is not from a refine run");
    RefineCmdOptions opt;
    opt.input = m.at("input").get<std::string>();
    opt.output = output_override ? *output_override : fs::path(m.at("output").get<std::string>());
    opt.backend = m.at("backend").get<std::string>();
    const SamplerConfig cfg = m.at("config").get<SamplerConfig>();
    opt.seed = cfg.seed;
    opt.t_guide = cfg.T_guide;
    opt.r_guide = cfg.R_guide;
    if (m.contains("prior_path")) opt.prior = m["prior_path"].get<std::string>();
    if (m.contains("bridge_addr")) opt.bridge_addr = m["bridge_addr"].get<std::string>();
    opt.timeout_s = m.value("timeout_s", 300.0);
    return opt;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config, std::string("manifest: ") + e.what());
  }
}

inline RefineResult cmd_refine_replay(const fs::path& manifest_path,
                                      const std::optional<fs::path>& output_override, std::ostream& out) {
  const auto m = read_json(manifest_path);
  RefineCmdOptions opt = options_from_manifest(m, output_override);
  // The full config is embedded; write it next to the new outputs so the
  // replay has no dependency on the original config file.
  const SamplerConfig cfg = m.at("config").get<SamplerConfig>();
  fs::create_directories(opt.output);
  const fs::path cfg_path = opt.output / "replay_config.json";
  write_file_atomic(cfg_path, nlohmann::json(cfg).dump(2) + "\n");
  opt.config = cfg_path;
  return cmd_refine(opt, out);
}

// ---- demo-oracle ---------------------------------------------------------------

struct ConvergenceRow {
  int steps;
  double relative_error;
};

/// Unguided Euler sampling against the Gaussian posterior-mean oracle
/// (mu = 0, s = 1, sigma in [0.002, 80], rho = 7) versus the exact flow,
/// all rows starting from the same x_T.
inline std::vector<ConvergenceRow> convergence_table(std::uint64_t seed, const std::vector<int>& steps,
                                                     Shape shape = {4, 3, 8, 8}) {
  GaussianPrior prior;
  GaussianDenoiser denoiser(prior);
  std::vector<ConvergenceRow> rows;
  for (int T : steps) {
    SamplerConfig cfg;
    cfg.T = T;
    cfg.T_guide = 0;
    cfg.R = 1;
    cfg.R_guide = 0;
    cfg.seed = seed;
    cfg.sigma_min = 0.002;
    cfg.sigma_max = 80.0;
    cfg.rho = 7.0;
    GuidanceInput g;
    g.video = Tensor(shape, 0.0f);
    g.mask = Tensor({shape[0], 1, shape[2], shape[3]}, 0.0f);
    RandomStream rng(seed);
    const NoiseSchedule sched = build_schedule(cfg);
    const LatentVideo x_T = initial_latent(shape, sched, rng);
    const LatentVideo sampled = refine_from(x_T, g, denoiser, cfg, rng);
    const LatentVideo exact = closed_form_gaussian_flow(x_T, cfg.sigma_max, 0.0, prior);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < exact.size(); ++i) {
      const double d = static_cast<double>(sampled[i]) - exact[i];
      num += d * d;
      den += static_cast<double>(exact[i]) * exact[i];
    }
    rows.push_back({T, std::sqrt(num / den)});
  }
  return rows;
}

inline std::vector<ConvergenceRow> cmd_demo_oracle(std::uint64_t seed, const std::vector<int>& steps,
                                                   std::ostream& out) {
  const auto rows = convergence_table(seed, steps);
  out << "# Euler vs closed-form Gaussian flow, seed " << seed << "\n";
  out << "T,relative_error\n";
  for (const auto& r : rows) {
    out << r.steps << ',' << std::setprecision(9) << r.relative_error << "\n";
  }
  return rows;
}

}  // namespace viewx::cli

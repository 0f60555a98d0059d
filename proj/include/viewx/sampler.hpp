#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "viewx/error.hpp"
#include "viewx/rng.hpp"
#include "viewx/tensor.hpp"

namespace viewx {

/// Step counts and noise-schedule parameters of the guided refinement loop.
/// Defaults are the static-scene setting; use `t_guide = 16` for dynamic scenes.
struct SamplerConfig {
  int T = 25;
  int T_guide = 15;
  int R = 3;
  int R_guide = 1;
  std::uint64_t seed = 0;
  double sigma_min = 0.002;
  double sigma_max = 700.0;
  double rho = 7.0;
  double sigma_data = 0.5;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(Errc::config, m); };
    if (T < 1) fail("T must be >= 1");
    if (T_guide < 0 || T_guide > T) fail("T_guide must lie in [0, T]");
    if (R < 1) fail("R must be >= 1");
    if (R_guide < 0 || R_guide > R) fail("R_guide must lie in [0, R]");
    if (!(sigma_min > 0.0)) fail("sigma_min must be > 0");
    if (!(sigma_max > sigma_min)) fail("sigma_max must exceed sigma_min");
    if (!(rho > 0.0)) fail("rho must be > 0");
    if (!(sigma_data > 0.0)) fail("sigma_data must be > 0");
  }

  /// Number of denoiser invocations one refinement run performs.
  long long predict_calls() const {
    return static_cast<long long>(T_guide) * R + (T - T_guide);
  }

  friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
};

inline void to_json(nlohmann::json& j, const SamplerConfig& c) {
  j = nlohmann::json{{"T", c.T},
                     {"T_guide", c.T_guide},
                     {"R", c.R},
                     {"R_guide", c.R_guide},
                     {"seed", c.seed},
                     {"sigma_min", c.sigma_min},
                     {"sigma_max", c.sigma_max},
                     {"rho", c.rho},
                     {"sigma_data", c.sigma_data}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, SamplerConfig& c) {
  if (!j.is_object()) throw Error(Errc::config, "sampler config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "T") c.T = value.get<int>();
      else if (key == "T_guide") c.T_guide = value.get<int>();
      else if (key == "R") c.R = value.get<int>();
      else if (key == "R_guide") c.R_guide = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "sigma_min") c.sigma_min = value.get<double>();
      else if (key == "sigma_max") c.sigma_max = value.get<double>();
      else if (key == "rho") c.rho = value.get<double>();
      else if (key == "sigma_data") c.sigma_data = value.get<double>();
      else throw Error(Errc::config, "unknown sampler config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::config, "bad value for '" + key + "': " + e.what());
    }
  }
}

/// sigmas[t] is the noise level at step t; sigmas[0] == 0, sigmas[T] == sigma_max.
struct NoiseSchedule {
  std::vector<double> sigmas;
  double sigma_data = 0.5;

  int steps() const noexcept { return static_cast<int>(sigmas.size()) - 1; }
  double operator[](int t) const { return sigmas.at(static_cast<std::size_t>(t)); }
};

/// Karras power schedule: sigma_i = (max^(1/rho) + (T-i)/(T-1) * (min^(1/rho) - max^(1/rho)))^rho
/// for i = 1..T, with sigma_0 = 0 appended. T = 1 yields [0, sigma_max].
inline NoiseSchedule build_schedule(const SamplerConfig& config) {
  config.validate();
  const int T = config.T;
  NoiseSchedule s;
  s.sigma_data = config.sigma_data;
  s.sigmas.assign(static_cast<std::size_t>(T) + 1, 0.0);
  if (T == 1) {
    s.sigmas[1] = config.sigma_max;
    return s;
  }
  const double max_inv = std::pow(config.sigma_max, 1.0 / config.rho);
  const double min_inv = std::pow(config.sigma_min, 1.0 / config.rho);
  for (int i = 1; i <= T; ++i) {
    const double frac = static_cast<double>(T - i) / static_cast<double>(T - 1);
    s.sigmas[static_cast<std::size_t>(i)] = std::pow(max_inv + frac * (min_inv - max_inv), config.rho);
  }
  s.sigmas[1] = config.sigma_min;
  s.sigmas[static_cast<std::size_t>(T)] = config.sigma_max;
  return s;
}

struct Preconditioning {
  double c_skip;
  double c_out;
  double c_in;
  double c_noise;  // 0.25 * ln(sigma); -inf at sigma = 0
};

/// EDM preconditioning coefficients at noise level `sigma`.
inline Preconditioning precondition_coefficients(double sigma, double sigma_data) {
  if (!(sigma >= 0.0)) throw Error(Errc::domain, "sigma must be >= 0");
  const double s2 = sigma * sigma;
  const double d2 = sigma_data * sigma_data;
  if (std::isinf(sigma)) return {0.0, sigma_data, 0.0, INFINITY};
  return {d2 / (s2 + d2), sigma * sigma_data / std::sqrt(s2 + d2), 1.0 / std::sqrt(s2 + d2),
          0.25 * std::log(sigma)};
}

/// Clean-sample estimate c_skip * x_t + c_out * raw from a raw network output.
inline LatentVideo edm_precondition(const LatentVideo& raw, const LatentVideo& x_t, double sigma,
                                    double sigma_data) {
  require_same_shape(raw, x_t, "edm_precondition");
  const auto c = precondition_coefficients(sigma, sigma_data);
  LatentVideo out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(c.c_skip * x_t[i] + c.c_out * raw[i]);
  return out;
}

/// Probability-flow derivative (x_t - x0_hat) / sigma.
inline LatentVideo ode_derivative(const LatentVideo& x_t, const LatentVideo& x0_hat, double sigma) {
  require_same_shape(x_t, x0_hat, "ode_derivative");
  if (!(sigma > 0.0)) throw Error(Errc::domain, "ode_derivative requires sigma > 0");
  LatentVideo dx(x_t.shape());
  for (std::size_t i = 0; i < dx.size(); ++i)
    dx[i] = static_cast<float>((static_cast<double>(x_t[i]) - x0_hat[i]) / sigma);
  return dx;
}

/// x_t + dx * (sigma_prev - sigma).
inline LatentVideo euler_step(const LatentVideo& x_t, const LatentVideo& dx, double sigma,
                              double sigma_prev) {
  require_same_shape(x_t, dx, "euler_step");
  if (!(sigma_prev < sigma))
    throw Error(Errc::domain, "euler_step requires sigma_prev < sigma");
  const double h = sigma_prev - sigma;
  LatentVideo out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(x_t[i] + static_cast<double>(dx[i]) * h);
  return out;
}

/// One Denoise step: Euler move from sigma to sigma_prev toward `direction`.
inline LatentVideo denoise_step(const LatentVideo& x_t, const LatentVideo& direction, double sigma,
                                double sigma_prev) {
  return euler_step(x_t, ode_derivative(x_t, direction, sigma), sigma, sigma_prev);
}

inline void validate_mask(const OpacityMask& mask) {
  require_video(mask, "opacity mask");
  if (mask.dim(1) != 1) throw Error(Errc::shape, "opacity mask must have one channel");
  for (float v : mask.values())
    if (!(v >= 0.0f && v <= 1.0f)) throw Error(Errc::domain, "opacity mask entry outside [0, 1]");
}

inline void require_mask_matches(const OpacityMask& mask, const LatentVideo& video) {
  require_video(video, "video");
  require_video(mask, "opacity mask");
  if (mask.dim(0) != video.dim(0) || mask.dim(1) != 1 || mask.dim(2) != video.dim(2) ||
      mask.dim(3) != video.dim(3))
    throw Error(Errc::shape, "mask " + shape_string(mask.shape()) + " does not match video " +
                                 shape_string(video.shape()));
}

struct GuidanceInput {
  LatentVideo video;               // artifact-prone video
  OpacityMask mask;                // 1 where the renderer saw content
  std::vector<std::byte> condition;  // handed verbatim to the backend

  void validate() const {
    require_mask_matches(mask, video);
    validate_mask(mask);
  }
};

/// video * m + x0_hat * (1 - m), mask broadcast over channels.
inline LatentVideo guided_direction(const LatentVideo& x0_hat, const LatentVideo& video,
                                    const OpacityMask& mask) {
  require_same_shape(x0_hat, video, "guided_direction");
  require_mask_matches(mask, video);
  const std::size_t F = video.dim(0), C = video.dim(1), H = video.dim(2), W = video.dim(3);
  LatentVideo out(video.shape());
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const float m = mask.at(f, 0, y, x);
          out.at(f, c, y, x) = video.at(f, c, y, x) * m + x0_hat.at(f, c, y, x) * (1.0f - m);
        }
  return out;
}

inline LatentVideo guided_direction(const LatentVideo& x0_hat, const GuidanceInput& guidance) {
  return guided_direction(x0_hat, guidance.video, guidance.mask);
}

/// Sample N(mean, sigma^2) elementwise, drawing one normal per element in order.
inline LatentVideo renoise(const LatentVideo& mean, double sigma, RandomStream& rng) {
  if (sigma == 0.0) return mean;
  LatentVideo out(mean.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(mean[i] + sigma * rng.normal());
  return out;
}

/// Area-average pooling of a mask to (target_h, target_w). Source pixels are
/// distributed to output cells by fractional overlap, so non-divisible sizes
/// still average correctly.
inline OpacityMask downsample_mask(const OpacityMask& mask, std::uint32_t target_h,
                                   std::uint32_t target_w) {
  require_video(mask, "opacity mask");
  if (target_h == 0 || target_w == 0) throw Error(Errc::domain, "target dimensions must be > 0");
  const std::uint32_t F = mask.dim(0), C = mask.dim(1), H = mask.dim(2), W = mask.dim(3);
  if (target_h > H || target_w > W)
    throw Error(Errc::domain, "downsample_mask cannot upsample");
  OpacityMask out({F, C, target_h, target_w});
  const double sy = static_cast<double>(H) / target_h;
  const double sx = static_cast<double>(W) / target_w;
  auto overlap = [](double a0, double a1, double b0, double b1) {
    return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
  };
  for (std::uint32_t f = 0; f < F; ++f)
    for (std::uint32_t c = 0; c < C; ++c)
      for (std::uint32_t oy = 0; oy < target_h; ++oy)
        for (std::uint32_t ox = 0; ox < target_w; ++ox) {
          const double y0 = oy * sy, y1 = (oy + 1) * sy;
          const double x0 = ox * sx, x1 = (ox + 1) * sx;
          double acc = 0.0, area = 0.0;
          for (auto y = static_cast<std::uint32_t>(y0); y < H && y < y1; ++y) {
            const double wy = overlap(y0, y1, y, y + 1.0);
            for (auto x = static_cast<std::uint32_t>(x0); x < W && x < x1; ++x) {
              const double w = wy * overlap(x0, x1, x, x + 1.0);
              acc += w * mask.at(f, c, y, x);
              area += w;
            }
          }
          out.at(f, c, oy, ox) = static_cast<float>(std::clamp(acc / area, 0.0, 1.0));
        }
  return out;
}

/// Hard mask: 1 where value >= threshold, else 0.
inline OpacityMask binarize_mask(const OpacityMask& mask, float threshold = 0.5f) {
  OpacityMask out(mask.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] >= threshold ? 1.0f : 0.0f;
  return out;
}

/// Predict contract: clean-sample estimate from a noisy latent at level sigma.
template <class D>
concept Denoiser = requires(D& d, const LatentVideo& x, float sigma,
                            std::span<const std::byte> condition) {
  { d.predict(x, sigma, condition) } -> std::convertible_to<LatentVideo>;
};

/// Runtime-polymorphic backend for callers that pick the denoiser at run time.
class DenoiserBase {
 public:
  virtual ~DenoiserBase() = default;
  virtual LatentVideo predict(const LatentVideo& x_t, float sigma,
                              std::span<const std::byte> condition) = 0;
};

namespace detail {

template <Denoiser D>
LatentVideo checked_predict(D& denoiser, const LatentVideo& x, double sigma,
                            std::span<const std::byte> condition, int t, int r) {
  const std::string where = "step t=" + std::to_string(t) + ", resample r=" + std::to_string(r);
  LatentVideo out;
  try {
    out = denoiser.predict(x, static_cast<float>(sigma), condition);
  } catch (const Error& e) {
    throw e.with_context(where);
  } catch (const std::exception& e) {
    throw Error(Errc::backend, where + ": " + e.what());
  }
  if (out.shape() != x.shape())
    throw Error(Errc::backend, where + ": denoiser returned shape " + shape_string(out.shape()) +
                                   ", expected " + shape_string(x.shape()));
  if (!out.all_finite())
    throw Error(Errc::divergence, where + ": denoiser returned non-finite values");
  return out;
}

inline void check_finite(const LatentVideo& x, int t) {
  if (!x.all_finite())
    throw Error(Errc::divergence, "non-finite latent after step t=" + std::to_string(t));
}

}  // namespace detail

/// x_T = sigma_T * eps, one normal per element from `rng`.
inline LatentVideo initial_latent(const Shape& shape, const NoiseSchedule& schedule,
                                  RandomStream& rng) {
  return renoise(LatentVideo(shape, 0.0f), schedule[schedule.steps()], rng);
}

/// Guided refinement loop starting from a given x_T. Steps t > T - T_guide
/// run R resampling rounds; rounds r <= R_guide blend the prediction with the
/// guidance video under the mask, and every round but the last renoises the
/// blended direction back to sigma_t.
template <Denoiser D>
LatentVideo refine_from(LatentVideo x, const GuidanceInput& guidance, D& denoiser,
                        const SamplerConfig& config, RandomStream& rng) {
  config.validate();
  guidance.validate();
  require_same_shape(x, guidance.video, "initial latent");
  const NoiseSchedule schedule = build_schedule(config);
  const int T = config.T;
  const std::span<const std::byte> condition = guidance.condition;

  for (int t = T; t >= 1; --t) {
    const double sigma = schedule[t];
    const double sigma_prev = schedule[t - 1];
    if (t > T - config.T_guide) {
      LatentVideo next;
      for (int r = 1; r <= config.R; ++r) {
        LatentVideo x0_hat = detail::checked_predict(denoiser, x, sigma, condition, t, r);
        LatentVideo direction =
            r <= config.R_guide ? guided_direction(x0_hat, guidance) : std::move(x0_hat);
        next = denoise_step(x, direction, sigma, sigma_prev);
        if (r < config.R) {
          x = renoise(direction, sigma, rng);
          detail::check_finite(x, t);
        }
      }
      x = std::move(next);
    } else {
      const LatentVideo x0_hat = detail::checked_predict(denoiser, x, sigma, condition, t, 1);
      x = denoise_step(x, x0_hat, sigma, sigma_prev);
    }
    detail::check_finite(x, t);
  }
  return x;
}

/// Full refinement: draws x_T from a stream seeded with `config.seed`, then
/// runs `refine_from`. Identical inputs give bitwise-identical outputs.
template <Denoiser D>
LatentVideo refine_video(const GuidanceInput& guidance, D& denoiser, const SamplerConfig& config) {
  config.validate();
  guidance.validate();
  RandomStream rng(config.seed);
  const NoiseSchedule schedule = build_schedule(config);
  LatentVideo x = initial_latent(guidance.video.shape(), schedule, rng);
  return refine_from(std::move(x), guidance, denoiser, config, rng);
}

}  // namespace viewx

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "viewx/error.hpp"
#include "viewx/sampler.hpp"
#include "viewx/tensor.hpp"

namespace viewx {

/// x_0 ~ N(mean, scale^2) elementwise. The mean is either a scalar broadcast
/// over every element or a full array of the latent's shape.
struct GaussianPrior {
  double mean_scalar = 0.0;
  std::optional<Tensor> mean_array;
  double scale = 1.0;

  void validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw Error(Errc::domain, "prior scale must be > 0");
    if (!std::isfinite(mean_scalar)) throw Error(Errc::domain, "prior mean must be finite");
    if (mean_array && !mean_array->all_finite())
      throw Error(Errc::domain, "prior mean must be finite");
  }

  void check_shape(const Tensor& x) const {
    if (mean_array) require_same_shape(*mean_array, x, "gaussian prior mean");
  }

  double mean_at(std::size_t i) const { return mean_array ? (*mean_array)[i] : mean_scalar; }
};

/// Exact E[x_0 | x_t] for x_t = x_0 + sigma * eps under a Gaussian prior:
/// (sigma^2 mu + s^2 x_t) / (sigma^2 + s^2).
inline LatentVideo gaussian_posterior_mean(const LatentVideo& x_t, double sigma,
                                           const GaussianPrior& prior) {
  if (!(sigma >= 0.0)) throw Error(Errc::domain, "sigma must be >= 0");
  prior.check_shape(x_t);
  LatentVideo out(x_t.shape());
  const double s2 = prior.scale * prior.scale;
  if (std::isinf(sigma)) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(prior.mean_at(i));
    return out;
  }
  const double v = sigma * sigma;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>((v * prior.mean_at(i) + s2 * x_t[i]) / (v + s2));
  return out;
}

/// Exact probability-flow solution under a Gaussian prior, from sigma_start
/// down to sigma_end: mu + (x - mu) * sqrt((sigma_end^2 + s^2) / (sigma_start^2 + s^2)).
inline LatentVideo closed_form_gaussian_flow(const LatentVideo& x_start, double sigma_start,
                                             double sigma_end, const GaussianPrior& prior) {
  if (!(sigma_end >= 0.0 && sigma_end <= sigma_start))
    throw Error(Errc::domain, "closed_form_gaussian_flow requires 0 <= sigma_end <= sigma_start");
  prior.check_shape(x_start);
  const double s2 = prior.scale * prior.scale;
  const double ratio =
      std::sqrt((sigma_end * sigma_end + s2) / (sigma_start * sigma_start + s2));
  LatentVideo out(x_start.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double mu = prior.mean_at(i);
    out[i] = static_cast<float>(mu + (x_start[i] - mu) * ratio);
  }
  return out;
}

/// Empirical prior: a weighted set of clean samples ("atoms").
struct MixturePrior {
  std::vector<Tensor> atoms;
  std::vector<double> weights;  // empty means uniform

  void validate() const {
    if (atoms.empty()) throw Error(Errc::domain, "mixture prior needs at least one atom");
    for (const auto& a : atoms) {
      require_same_shape(a, atoms.front(), "mixture atom");
      if (!a.all_finite()) throw Error(Errc::domain, "mixture atom has non-finite values");
    }
    if (weights.empty()) return;
    if (weights.size() != atoms.size())
      throw Error(Errc::domain, "mixture weights and atoms differ in count");
    double sum = 0.0;
    for (double w : weights) {
      if (!(w > 0.0)) throw Error(Errc::domain, "mixture weights must be positive");
      sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw Error(Errc::domain, "mixture weights must sum to 1");
  }
};

/// Responsibilities w_i(x_t) proportional to weight_i * exp(-|x_t - x_i|^2 / (2 sigma^2)),
/// accumulated in double with the max subtracted before exponentiation.
inline std::vector<double> mixture_responsibilities(const LatentVideo& x_t, double sigma,
                                                    const MixturePrior& prior) {
  if (!(sigma > 0.0)) throw Error(Errc::domain, "mixture posterior requires sigma > 0");
  prior.validate();
  require_same_shape(x_t, prior.atoms.front(), "mixture posterior");
  const std::size_t n = prior.atoms.size();
  std::vector<double> logits(n);
  for (std::size_t k = 0; k < n; ++k) {
    double sq = 0.0;
    const Tensor& atom = prior.atoms[k];
    for (std::size_t i = 0; i < x_t.size(); ++i) {
      const double d = static_cast<double>(x_t[i]) - atom[i];
      sq += d * d;
    }
    const double log_w = prior.weights.empty() ? 0.0 : std::log(prior.weights[k]);
    logits[k] = log_w - sq / (2.0 * sigma * sigma);
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& l : logits) {
    l = std::exp(l - top);
    total += l;
  }
  if (!std::isfinite(total) || total <= 0.0)
    throw Error(Errc::divergence, "mixture responsibilities are not finite");
  for (double& l : logits) l /= total;
  return logits;
}

inline LatentVideo mixture_posterior_mean(const LatentVideo& x_t, double sigma,
                                          const MixturePrior& prior) {
  const auto w = mixture_responsibilities(x_t, sigma, prior);
  std::vector<double> acc(x_t.size(), 0.0);
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] == 0.0) continue;
    const Tensor& atom = prior.atoms[k];
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w[k] * atom[i];
  }
  LatentVideo out(x_t.shape());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

/// Predict backend returning the exact Gaussian posterior mean.
class GaussianDenoiser final : public DenoiserBase {
 public:
  explicit GaussianDenoiser(GaussianPrior prior) : prior_(std::move(prior)) { prior_.validate(); }

  LatentVideo predict(const LatentVideo& x_t, float sigma, std::span<const std::byte>) override {
    return gaussian_posterior_mean(x_t, sigma, prior_);
  }

  const GaussianPrior& prior() const noexcept { return prior_; }

 private:
  GaussianPrior prior_;
};

/// Predict backend returning the exact mixture posterior mean.
class MixtureDenoiser final : public DenoiserBase {
 public:
  explicit MixtureDenoiser(MixturePrior prior) : prior_(std::move(prior)) { prior_.validate(); }

  LatentVideo predict(const LatentVideo& x_t, float sigma, std::span<const std::byte>) override {
    return mixture_posterior_mean(x_t, sigma, prior_);
  }

 private:
  MixturePrior prior_;
};

}  // namespace viewx

#include <cmath>

#include <gtest/gtest.h>

#include "viewx/commands.hpp"
#include "viewx/oracle.hpp"
#include "viewx/prior_io.hpp"

using namespace viewx;

namespace {
Tensor scalar(float v) { return Tensor({1, 1, 1, 1}, v); }
}  // namespace

TEST(GaussianPosterior, Limits) {
  const GaussianPrior prior{0.7, std::nullopt, 1.3};
  Tensor x({1, 2, 2, 2});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(i) - 3.0f;
  EXPECT_EQ(gaussian_posterior_mean(x, 0.0, prior), x);
  const auto far = gaussian_posterior_mean(x, INFINITY, prior);
  for (float v : far.values()) EXPECT_EQ(v, 0.7f);
  const auto big = gaussian_posterior_mean(x, 1e6, prior);
  for (float v : big.values()) EXPECT_NEAR(v, 0.7f, 1e-5f);
}

TEST(GaussianPosterior, Substitution) {
  EXPECT_EQ(gaussian_posterior_mean(scalar(2), 1.0, GaussianPrior{})[0], 1.0f);
}

TEST(GaussianPosterior, LiesBetweenObservationAndMean) {
  RandomStream r(4);
  for (int trial = 0; trial < 500; ++trial) {
    const GaussianPrior prior{4.0 * r.normal(), std::nullopt, 0.1 + 3.0 * r.uniform()};
    const float x = static_cast<float>(10.0 * r.normal());
    const double sigma = 5.0 * r.uniform();
    const float m = gaussian_posterior_mean(scalar(x), sigma, prior)[0];
    const double lo = std::min<double>(x, prior.mean_scalar) - 1e-5;
    const double hi = std::max<double>(x, prior.mean_scalar) + 1e-5;
    EXPECT_GE(m, lo);
    EXPECT_LE(m, hi);
  }
}

TEST(GaussianPosterior, ArrayMean) {
  GaussianPrior prior;
  prior.mean_array = Tensor({1, 1, 1, 2}, std::vector<float>{1.0f, -1.0f});
  const auto out = gaussian_posterior_mean(Tensor({1, 1, 1, 2}, 0.0f), 1.0, prior);
  EXPECT_EQ(out[0], 0.5f);
  EXPECT_EQ(out[1], -0.5f);
  EXPECT_THROW(gaussian_posterior_mean(Tensor({1, 1, 1, 3}), 1.0, prior), Error);
}

TEST(GaussianFlow, ClosedFormExamples) {
  const GaussianPrior prior;
  const Tensor x = scalar(80.0f);
  EXPECT_EQ(closed_form_gaussian_flow(x, 3.0, 3.0, prior), x);
  const GaussianPrior shifted{2.5, std::nullopt, 1.0};
  EXPECT_EQ(closed_form_gaussian_flow(scalar(2.5f), 80.0, 0.0, shifted)[0], 2.5f);
  // 80 / sqrt(6401), evaluated at 20 digits.
  EXPECT_NEAR(closed_form_gaussian_flow(x, 80.0, 0.0, prior)[0], 0.99992188415408150756, 1e-6);
  EXPECT_THROW(closed_form_gaussian_flow(x, 1.0, 2.0, prior), Error);
}

TEST(GaussianFlow, EulerConvergesFirstOrder) {
  const auto rows = cli::convergence_table(5, {25, 50, 100, 400});
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i].relative_error, rows[i - 1].relative_error);
  // Doubling T should roughly halve the error.
  EXPECT_NEAR(rows[1].relative_error / rows[0].relative_error, 0.5, 0.05);
  EXPECT_NEAR(rows[2].relative_error / rows[1].relative_error, 0.5, 0.05);
}

TEST(MixturePosterior, SingleAtom) {
  MixturePrior prior;
  prior.atoms.push_back(Tensor({1, 1, 2, 2}, 3.0f));
  RandomStream r(1);
  for (int i = 0; i < 20; ++i) {
    Tensor x({1, 1, 2, 2});
    for (auto& v : x.values()) v = static_cast<float>(5.0 * r.normal());
    EXPECT_EQ(mixture_posterior_mean(x, 0.1 + r.uniform(), prior), prior.atoms[0]);
  }
}

TEST(MixturePosterior, SymmetricAtomsAverage) {
  MixturePrior prior;
  prior.atoms = {scalar(-2.0f), scalar(4.0f)};
  EXPECT_NEAR(mixture_posterior_mean(scalar(1.0f), 0.7, prior)[0], 1.0f, 1e-6f);
}

TEST(MixturePosterior, TwoAtomsSoftmax) {
  // 10 * exp(-81/2) / (exp(-1/2) + exp(-81/2)), evaluated at 40 digits.
  MixturePrior prior;
  prior.atoms = {scalar(0.0f), scalar(10.0f)};
  const float got = mixture_posterior_mean(scalar(1.0f), 1.0, prior)[0];
  EXPECT_NEAR(got, 4.2483542552915889773e-17, 1e-22);
  const auto w = mixture_responsibilities(scalar(1.0f), 1.0, prior);
  EXPECT_NEAR(w[1], 4.2483542552915889773e-18, 1e-30);
}

TEST(MixturePosterior, SmallSigmaPicksNearestAtom) {
  MixturePrior prior;
  prior.atoms = {Tensor({1, 1, 1, 3}, 0.0f), Tensor({1, 1, 1, 3}, 5.0f), Tensor({1, 1, 1, 3}, -7.0f)};
  const Tensor x({1, 1, 1, 3}, 3.9f);
  for (double sigma : {1e-1, 1e-3, 1e-6}) EXPECT_EQ(mixture_posterior_mean(x, sigma, prior), prior.atoms[1]);
}

TEST(MixturePosterior, WeightsAndValidation) {
  MixturePrior prior;
  prior.atoms = {scalar(0.0f), scalar(1.0f)};
  prior.weights = {0.25, 0.75};
  // Equidistant observation: responsibilities equal the weights.
  EXPECT_NEAR(mixture_posterior_mean(scalar(0.5f), 1.0, prior)[0], 0.75f, 1e-6f);
  prior.weights = {0.5, 0.6};
  EXPECT_THROW(prior.validate(), Error);
  prior.weights = {1.0, 0.0};
  EXPECT_THROW(prior.validate(), Error);
  EXPECT_THROW(MixturePrior{}.validate(), Error);
  MixturePrior ok;
  ok.atoms = {scalar(0.0f)};
  EXPECT_THROW(mixture_posterior_mean(scalar(0.0f), 0.0, ok), Error);
}

TEST(PriorIo, GaussianAndMixtureFromJson) {
  const auto dir = std::filesystem::temp_directory_path() / "viewx_prior_io";
  std::filesystem::create_directories(dir);
  bridge::write_vxt(dir / "a.vxt", Tensor({1, 1, 1, 2}, std::vector<float>{1.0f, 2.0f}));
  bridge::write_vxt(dir / "b.vxt", Tensor({1, 1, 1, 2}, std::vector<float>{-1.0f, 0.0f}));

  const auto g = prior_from_json(nlohmann::json::parse(R"({"type":"gaussian","mean":0.25,"scale":2})"));
  ASSERT_TRUE(std::holds_alternative<GaussianPrior>(g));
  EXPECT_EQ(std::get<GaussianPrior>(g).mean_scalar, 0.25);
  EXPECT_EQ(std::get<GaussianPrior>(g).scale, 2.0);

  const auto ga = prior_from_json(nlohmann::json::parse(R"({"mean":"a.vxt"})"), dir);
  ASSERT_TRUE(std::get<GaussianPrior>(ga).mean_array.has_value());

  const auto m = prior_from_json(nlohmann::json::parse(R"({"type":"mixture","atoms":["a.vxt","b.vxt"]})"), dir);
  ASSERT_TRUE(std::holds_alternative<MixturePrior>(m));
  EXPECT_EQ(std::get<MixturePrior>(m).atoms.size(), 2u);

  EXPECT_THROW(prior_from_json(nlohmann::json::parse(R"({"type":"laplace"})")), Error);
  EXPECT_THROW(prior_from_json(nlohmann::json::parse(R"({"scale":-1})")), Error);
  std::filesystem::remove_all(dir);
}

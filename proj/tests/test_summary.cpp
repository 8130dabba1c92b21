#include <doctest.h>

#include <cmath>

#include "ssgam/simulate.hpp"
#include "ssgam/summary.hpp"
#include "support.hpp"

using namespace ssgam;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const FitResult& small_fit() {
  static const FitResult fit = [] {
    const auto sim = simulate_additive(5, 120, 3);
    McmcConfig m;
    m.n_chains = 3;
    m.chain_length = 300;
    m.burnin = 50;
    m.thin = 3;
    m.seed = 9;
    return fit_model(parse_model("y ~ sm1 + sm2 + f + noise2 + sm2:f", sim.data.schema()), sim.data, {}, {}, m);
  }();
  return fit;
}

}  // namespace

TEST_CASE("type 7 quantiles") {
  std::vector<double> v = {10, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK(quantile(v, 0.1) == doctest::Approx(1.9));
  CHECK(quantile(v, 0.9) == doctest::Approx(9.1));
  CHECK(quantile(v, 0.5) == doctest::Approx(5.5));
  CHECK(quantile(v, 0.0) == 1);
  CHECK(quantile(v, 1.0) == 10);
  CHECK(quantile({4.0}, 0.3) == 4.0);
}

TEST_CASE("R-hat") {
  MatrixXd same(2, 4);
  same << 1, 2, 3, 5, 1, 2, 3, 5;
  CHECK(rhat(same) == 1.0);

  MatrixXd c(2, 3);
  c << 1, 2, 3, 3, 4, 5;
  // W = 1, chain means 2 and 4, B = 3 * 2 = 6, R = sqrt((1 + 6/3) / 1).
  CHECK(rhat(c) == doctest::Approx(std::sqrt(3.0)));
  CHECK_THROWS_AS(rhat(MatrixXd(1, 5)), SummaryError);
}

TEST_CASE("duplicated chains give R-hat exactly one") {
  FitResult fit = small_fit();
  fit.chains[1] = fit.chains[0];
  fit.chains[2] = fit.chains[0];
  const RhatReport r = gelman_rubin(fit);
  REQUIRE(r.available);
  CHECK(r.max() == 1.0);
  CHECK((r.values.array() == 1.0).all());
}

TEST_CASE("single chains have no R-hat") {
  FitResult fit = small_fit();
  fit.chains.resize(1);
  const RhatReport r = gelman_rubin(fit);
  CHECK_FALSE(r.available);
  CHECK(r.reason.find("2 chains") != std::string::npos);
}

TEST_CASE("term importance sums to one") {
  const TermImportance imp = term_importance(small_fit());
  CHECK(std::abs(imp.pi.sum() - 1) < 1e-10);
  CHECK(imp.labels.size() == static_cast<std::size_t>(small_fit().p()));

  // Direct computation for one term.
  const FitResult& fit = small_fit();
  const VectorXd beta = fit.beta_draws().colwise().mean();
  VectorXd total = VectorXd::Zero(fit.design.n());
  std::vector<VectorXd> parts;
  int at = 0;
  for (const auto& b : fit.design.blocks) {
    parts.push_back(b.B * beta.segment(at, b.d));
    total += parts.back();
    at += b.d;
  }
  CHECK(imp.pi[0] == doctest::Approx(parts[0].dot(total) / total.squaredNorm()).epsilon(1e-10));
}

TEST_CASE("pooled inclusion is the draw-weighted mean of per-chain inclusion") {
  const FitResult& fit = small_fit();
  const VectorXd pooled = inclusion_probabilities(fit);
  VectorXd weighted = VectorXd::Zero(fit.p());
  for (const auto& c : fit.chains)
    weighted += (c.gamma.array() == 1.0).cast<double>().colwise().sum().transpose().matrix();
  weighted /= fit.n_saved();
  CHECK((pooled - weighted).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("model table") {
  const auto models = model_table(small_fit());
  double total = 0;
  for (const auto& m : models) total += m.probability;
  CHECK(std::abs(total - 1) < 1e-12);
  CHECK(std::abs(models.back().cumulative - 1) < 1e-12);
  for (std::size_t k = 1; k < models.size(); ++k) CHECK(models[k].probability <= models[k - 1].probability);
  // Every configuration is distinct.
  for (std::size_t a = 0; a < models.size(); ++a)
    for (std::size_t b = a + 1; b < models.size(); ++b) CHECK(models[a].included != models[b].included);
}

TEST_CASE("predicting the training rows reproduces the stored linear predictor") {
  const FitResult& fit = small_fit();
  const Prediction pred = predict(fit, fit.data);
  MatrixXd eta(fit.n_saved(), fit.design.n());
  Eigen::Index r = 0;
  for (const auto& c : fit.chains) {
    eta.middleRows(r, c.size()) = c.eta;
    r += c.size();
  }
  const VectorXd mean = eta.colwise().mean();
  CHECK((pred.eta.mean - mean).cwiseAbs().maxCoeff() < 1e-10);
  std::vector<double> first(eta.rows());
  for (Eigen::Index k = 0; k < eta.rows(); ++k) first[k] = eta(k, 0);
  CHECK(pred.eta.quantiles(0, 0) == doctest::Approx(quantile(first, 0.1)).epsilon(1e-10));
  CHECK(pred.eta.quantiles(0, 1) == doctest::Approx(quantile(first, 0.9)).epsilon(1e-10));
  CHECK((pred.response.mean - pred.eta.mean).cwiseAbs().maxCoeff() < 1e-12);  // identity link
  REQUIRE(pred.terms.size() == static_cast<std::size_t>(fit.p()));
  VectorXd sum = VectorXd::Constant(fit.design.n(), fit.pooled(&ChainSamples::beta_u).mean());
  for (const auto& t : pred.terms) sum += t.mean;
  CHECK((sum - pred.eta.mean).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("effect grids") {
  const FitResult& fit = small_fit();
  const DataTable g = effect_grid(fit, {"sm2", "f"});
  CHECK(g.n_rows() == 300);
  CHECK(g.numeric("sm2")[0] == fit.data.numeric("sm2").minCoeff());
  CHECK(g.numeric("sm2")[299] == fit.data.numeric("sm2").maxCoeff());
  CHECK(g.factor("f").codes[1] == 1);

  const auto separate = effects(fit, false);
  CHECK(separate.size() == static_cast<std::size_t>(fit.p()));
  const auto cumulative = effects(fit, true);
  const Effect* both = nullptr;
  for (const auto& e : cumulative)
    if (e.label == "sm2:f") both = &e;
  REQUIRE(both);
  // sm2:f sums every term built from sm2 and f.
  CHECK(both->terms.size() == 5);
  CHECK(both->band.mean.size() == 300);
  CHECK((both->band.quantiles.col(0).array() <= both->band.mean.array() + 1e-12).all());
}

TEST_CASE("null deviance") {
  VectorXd y(4);
  y << 1, 0, 0, 1;
  const VectorXd off = VectorXd::Zero(4);
  CHECK(null_deviance(Family(FamilyKind::binomial), y, off) == doctest::Approx(-2 * 4 * std::log(0.5)));
  VectorXd counts(3);
  counts << 1, 2, 6;
  const double mu = 3;
  double ll = 0;
  for (double c : counts) ll += c * std::log(mu) - mu - std::lgamma(c + 1);
  CHECK(null_deviance(Family(FamilyKind::poisson), counts, VectorXd::Zero(3)) == doctest::Approx(-2 * ll));
  VectorXd g(3);
  g << 1, 2, 6;
  const double phi = (4.0 + 1.0 + 9.0) / 3;
  CHECK(null_deviance(Family(), g, VectorXd::Zero(3)) ==
        doctest::Approx(3 * std::log(2 * M_PI * phi) + 3));
}

TEST_CASE("text and JSON summaries") {
  const FitResult& fit = small_fit();
  const std::string text = summary_text(fit);
  CHECK(text.find("Spike-and-Slab STAR for Gaussian data") != std::string::npos);
  CHECK(text.find("120 observations;") != std::string::npos);
  CHECK(text.find("burn-in of 50 ; Thinning: 3") != std::string::npos);
  CHECK(text.find("*:P(gamma=1)>.25 **:P(gamma=1)>.5 ***:P(gamma=1)>.9") != std::string::npos);
  CHECK(text.find("inclusion threshold = 0.5") != std::string::npos);
  const auto j = summary_json(fit);
  CHECK(j["observations"] == 120);
  CHECK(j["term_table"][0]["label"] == "u");
  CHECK(j["term_table"][0]["inclusion"].is_null());
  CHECK(j["mcmc"]["saved"] == 300);
  const auto diag = diagnostics_json(fit);
  CHECK(diag["rhat"]["available"] == true);
  CHECK(stars(0.95) == "***");
  CHECK(stars(0.6) == "**");
  CHECK(stars(0.3) == "*");
  CHECK(stars(0.1) == "");
}

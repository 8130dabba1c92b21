#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ssgam/data.hpp"
#include "ssgam/design.hpp"
#include "ssgam/formula.hpp"
#include "ssgam/sampler.hpp"

namespace ssgam {

struct FitResult {
  ModelSpec spec;
  FullDesign design;
  DataTable data;  // training rows, kept for effect grids and new-data schemas
  Eigen::VectorXd y;
  Family family;
  HyperParams hyper;
  McmcConfig mcmc;
  SamplerOptions sampler;
  std::vector<ChainSamples> chains;
  std::vector<std::string> warnings;

  int n_saved() const;
  int p() const { return design.p(); }
  std::vector<std::string> term_labels() const;
  // Saved draws pooled over chains, one row per draw.
  Eigen::MatrixXd pooled(Eigen::MatrixXd ChainSamples::*field) const;
  Eigen::VectorXd pooled(Eigen::VectorXd ChainSamples::*field) const;
  // Pooled draws of beta = blockwise alpha_j * xi_j (draws x q).
  Eigen::MatrixXd beta_draws() const;
};

FitResult fit_model(const ModelSpec& spec, const DataTable& data, const DesignOptions& design_options = {},
                    const HyperParams& hyper = {}, const McmcConfig& mcmc = {}, const SamplerOptions& sampler = {});

// ---- term-level summaries ----------------------------------------------------

Eigen::VectorXd inclusion_probabilities(const FitResult& fit);

struct TermImportance {
  std::vector<std::string> labels;  // penalized terms, then "u" when X_u has non-intercept columns
  Eigen::VectorXd pi;
};
TermImportance term_importance(const FitResult& fit);

struct TermSummary {
  std::string label;
  double inclusion = 0;   // NaN for unpenalized rows
  double importance = 0;  // NaN for the intercept
  int dim = 0;
  std::string stars;
};
std::string stars(double inclusion);
std::vector<TermSummary> term_table(const FitResult& fit);

struct ModelConfiguration {
  std::vector<bool> included;  // one per penalized term
  double probability = 0;
  double cumulative = 0;
};
// Distinct inclusion configurations over all saved draws, most frequent first.
// A term counts as included in a draw when P(gamma_j = 1 | alpha_j, tau2_j, w)
// exceeds `threshold`.
std::vector<ModelConfiguration> model_table(const FitResult& fit, double threshold = 0.5);

// ---- prediction ----------------------------------------------------------------

struct Band {
  Eigen::VectorXd mean;
  Eigen::MatrixXd quantiles;  // rows x quantile levels
};

struct Prediction {
  std::vector<double> levels;  // quantile levels
  Band eta;                    // linear predictor
  Band response;               // h(eta)
  std::vector<std::string> term_labels;
  std::vector<Band> terms;     // per-term contributions B_j beta_j
};

// Type-7 empirical quantile of unsorted values.
double quantile(std::vector<double> values, double level);

Prediction predict(const FitResult& fit, const DataTable& newdata, const std::vector<double>& levels = {0.1, 0.9},
                   bool with_terms = true);

// ---- effects on grids ----------------------------------------------------------

struct Effect {
  std::string label;                    // term label or "covariates: a, b"
  std::vector<std::string> covariates;
  std::vector<std::string> terms;       // terms summed into this effect
  DataTable grid;
  Band band;
};

// Grid over the training range: 100 points per numeric covariate, all levels
// for factors; the Cartesian product for several covariates.
DataTable effect_grid(const FitResult& fit, const std::vector<std::string>& covariates, int points = 100);
// One effect per term (separate) or per distinct covariate set, summing every
// term whose covariates lie in the set (cumulative).
std::vector<Effect> effects(const FitResult& fit, bool cumulative, const std::vector<double>& levels = {0.1, 0.9});

// ---- deviance and convergence ----------------------------------------------------

struct DevianceSummary {
  double null_deviance = 0;
  double mean_posterior_deviance = 0;
};
// -2 log-likelihood of the maximum-likelihood intercept-only model.
double null_deviance(const Family& family, const Eigen::VectorXd& y, const Eigen::VectorXd& offset);
DevianceSummary deviance_summary(const FitResult& fit);

struct RhatReport {
  bool available = false;
  std::string reason;
  std::vector<std::string> names;
  Eigen::VectorXd values;
  double max() const;
};
// Potential scale reduction sqrt((W + B/n) / W) for each scalar parameter
// given per-chain draws (chains x draws).
double rhat(const Eigen::MatrixXd& chains);
RhatReport gelman_rubin(const FitResult& fit);

struct AcceptanceRates {
  double alpha = 1, xi = 1;
};
AcceptanceRates acceptance_rates(const FitResult& fit);

// ---- reports -------------------------------------------------------------------

std::string summary_text(const FitResult& fit, int max_models = 8);
nlohmann::json summary_json(const FitResult& fit, int max_models = 8);
nlohmann::json model_table_json(const FitResult& fit, double threshold = 0.5);
nlohmann::json diagnostics_json(const FitResult& fit);
nlohmann::json effect_json(const Effect& effect, const std::vector<double>& levels);

}  // namespace ssgam

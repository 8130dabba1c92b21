#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssgam/design.hpp"
#include "ssgam/family.hpp"

namespace ssgam {

struct HyperParams {
  double a_tau = 5, b_tau = 25;
  double v0 = 2.5e-4;
  double a_w = 1, b_w = 1;
  double a_phi = 1e-4, b_phi = 1e-4;

  void validate() const;  // throws ConfigError
};

// chain_length counts iterations after burn-in; every chain runs
// burnin + chain_length sweeps and saves every thin-th post-burn-in sweep.
struct McmcConfig {
  int n_chains = 3;
  int chain_length = 2500;
  int burnin = 100;
  int thin = 5;
  int block_size_alpha = 15;
  int block_size_xi = 15;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: one per chain, capped by hardware concurrency

  void validate() const;  // throws ConfigError
  int saved_per_chain() const { return chain_length / thin; }
  int total_iterations() const { return burnin + chain_length; }
};

struct SamplerOptions {
  bool use_likelihood = true;  // false: sample from the prior
  bool rescale = true;
  double unpenalized_variance = 1e6;
  double init_variance = 100;
  int fisher_steps = 5;
  double init_noise = 0.1;
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }
  double inv_gamma(double shape, double scale) { return scale / gamma(shape); }
  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> uniform_;
};

struct ChainState {
  Eigen::VectorXd alpha;   // p
  Eigen::VectorXd xi;      // q
  Eigen::VectorXd m;       // q, entries +-1
  Eigen::VectorXd gamma;   // p, entries 1 or v0
  Eigen::VectorXd tau2;    // p
  double w = 0.5;
  double phi = 1.0;
  Eigen::VectorXd beta_u;
  Eigen::VectorXd eta;     // current linear predictor, offset included
};

// Contiguous groups of coefficients updated jointly.
struct AlphaBlock {
  int first_term = 0, n_terms = 0;
};
struct XiBlock {
  int term = 0;
  int begin = 0, size = 0;  // position within xi
};

// Immutable per-fit data shared by all chains.
class SamplerContext {
 public:
  SamplerContext(const FullDesign& design, Eigen::VectorXd y, Family family, HyperParams hyper,
                 McmcConfig config, SamplerOptions options = {});

  int n() const { return static_cast<int>(y_.size()); }
  int p() const { return static_cast<int>(dims_.size()); }
  int q() const { return static_cast<int>(Xp_.cols()); }

  const Eigen::MatrixXd& Xu() const { return Xu_; }
  const Eigen::MatrixXd& Xp() const { return Xp_; }  // [B_1 ... B_p]
  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::VectorXd& offset() const { return offset_; }
  const Family& family() const { return family_; }
  const HyperParams& hyper() const { return hyper_; }
  const McmcConfig& config() const { return config_; }
  const SamplerOptions& options() const { return options_; }
  const std::vector<int>& dims() const { return dims_; }
  const std::vector<int>& offsets() const { return offsets_; }
  const std::vector<AlphaBlock>& alpha_blocks() const { return alpha_blocks_; }
  const std::vector<XiBlock>& xi_blocks() const { return xi_blocks_; }

  Eigen::VectorXd beta(const ChainState& s) const;  // blockwise alpha_j * xi_j
  Eigen::VectorXd linear_predictor(const ChainState& s) const;

 private:
  Eigen::MatrixXd Xu_, Xp_;
  Eigen::VectorXd y_, offset_;
  Family family_;
  HyperParams hyper_;
  McmcConfig config_;
  SamplerOptions options_;
  std::vector<int> dims_, offsets_;
  std::vector<AlphaBlock> alpha_blocks_;
  std::vector<XiBlock> xi_blocks_;
};

// N(mean, precision^{-1}).
struct GaussianConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;
  Eigen::MatrixXd covariance() const;
};

// Collapsed design X_alpha for a block of terms: column j is B_j xi_j.
Eigen::MatrixXd alpha_design(const SamplerContext& ctx, const ChainState& s, const AlphaBlock& b);
// Rescaled design X_xi for a block: alpha_j times the block's columns of B_j.
Eigen::MatrixXd xi_design(const SamplerContext& ctx, const ChainState& s, const XiBlock& b);

// Exact Gaussian full conditionals (Gaussian family) given the current state.
GaussianConditional alpha_conditional(const SamplerContext& ctx, const ChainState& s, const AlphaBlock& b);
GaussianConditional xi_conditional(const SamplerContext& ctx, const ChainState& s, const XiBlock& b);
GaussianConditional beta_u_conditional(const SamplerContext& ctx, const ChainState& s);

// Block updates. Each returns whether the proposal was accepted (always true
// for Gaussian responses) and keeps s.eta in sync.
bool update_alpha_block(const SamplerContext& ctx, ChainState& s, const AlphaBlock& b, Rng& rng);
bool update_xi_block(const SamplerContext& ctx, ChainState& s, const XiBlock& b, Rng& rng);
bool update_beta_u(const SamplerContext& ctx, ChainState& s, Rng& rng);

void update_m(ChainState& s, Rng& rng);
void rescale(const SamplerContext& ctx, ChainState& s, int term);
void update_tau2(ChainState& s, const HyperParams& hyper, Rng& rng);
void update_gamma(ChainState& s, const HyperParams& hyper, Rng& rng);
void update_w(ChainState& s, const HyperParams& hyper, Rng& rng);
void update_phi(ChainState& s, const Eigen::VectorXd& y, const HyperParams& hyper, Rng& rng);

// P(gamma_j = 1 | rest) computed in log space.
double gamma_inclusion_probability(double alpha, double tau2, double w, const HyperParams& hyper);

struct AcceptanceCounts {
  long alpha_proposed = 0, alpha_accepted = 0;
  long xi_proposed = 0, xi_accepted = 0;
  long u_proposed = 0, u_accepted = 0;
};

// One iteration in the order beta_u, alpha blocks, m, xi blocks, rescale,
// tau2, gamma, w, phi.
void sweep(const SamplerContext& ctx, ChainState& s, Rng& rng, AcceptanceCounts* counts = nullptr);

// Penalized Fisher scoring for [beta_u, beta] with the fixed prior variances
// of the context. Returns false when the iterations diverge.
bool fisher_scoring(const SamplerContext& ctx, Eigen::VectorXd* coefficients);

ChainState init_state(const SamplerContext& ctx, Rng& rng, std::vector<std::string>* warnings = nullptr);

struct ChainSamples {
  std::vector<int> iteration;  // sweep number, counting burn-in
  Eigen::MatrixXd alpha, xi, m, gamma, tau2, beta_u, eta;  // one row per saved draw
  Eigen::VectorXd w, phi, deviance;
  AcceptanceCounts acceptance;
  std::vector<std::string> warnings;

  int size() const { return static_cast<int>(iteration.size()); }
};

ChainSamples run_chain(const SamplerContext& ctx, int chain_index);
std::vector<ChainSamples> run_chains(const SamplerContext& ctx);

}  // namespace ssgam

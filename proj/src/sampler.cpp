#include "ssgam/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include "ssgam/error.hpp"

namespace ssgam {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void HyperParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0) || !std::isfinite(v)) throw ConfigError(std::string("hyperparameter ") + name + " must be positive");
  };
  positive(a_tau, "a_tau");
  positive(b_tau, "b_tau");
  positive(v0, "v0");
  positive(a_w, "a_w");
  positive(b_w, "b_w");
  positive(a_phi, "a_phi");
  positive(b_phi, "b_phi");
  if (v0 >= 1) throw ConfigError("hyperparameter v0 must be below 1");
}

void McmcConfig::validate() const {
  if (n_chains < 1) throw ConfigError("mcmc.n_chains must be at least 1");
  if (chain_length < 1) throw ConfigError("mcmc.chain_length must be at least 1");
  if (burnin < 0) throw ConfigError("mcmc.burnin must be nonnegative");
  if (thin < 1) throw ConfigError("mcmc.thin must be at least 1");
  if (thin > chain_length) throw ConfigError("mcmc.thin exceeds mcmc.chain_length: no draws would be saved");
  if (block_size_alpha < 1 || block_size_xi < 1) throw ConfigError("mcmc block sizes must be at least 1");
  if (threads < 0) throw ConfigError("mcmc.threads must be nonnegative");
}

SamplerContext::SamplerContext(const FullDesign& design, VectorXd y, Family family, HyperParams hyper,
                               McmcConfig config, SamplerOptions options)
    : Xu_(design.Xu),
      y_(std::move(y)),
      offset_(design.offset),
      family_(family),
      hyper_(hyper),
      config_(config),
      options_(options) {
  hyper_.validate();
  config_.validate();
  if (y_.size() != design.n())
    throw SamplerError("response has " + std::to_string(y_.size()) + " rows but the design has " +
                       std::to_string(design.n()));
  family_.validate(y_);
  if (offset_.size() != y_.size()) offset_ = VectorXd::Zero(y_.size());

  int at = 0;
  for (const auto& b : design.blocks) {
    dims_.push_back(b.d);
    offsets_.push_back(at);
    at += b.d;
  }
  Xp_.resize(y_.size(), at);
  for (std::size_t j = 0; j < design.blocks.size(); ++j) Xp_.middleCols(offsets_[j], dims_[j]) = design.blocks[j].B;

  for (int j = 0; j < p(); j += config_.block_size_alpha)
    alpha_blocks_.push_back({j, std::min(config_.block_size_alpha, p() - j)});
  for (int j = 0; j < p(); ++j)
    for (int k = 0; k < dims_[j]; k += config_.block_size_xi)
      xi_blocks_.push_back({j, offsets_[j] + k, std::min(config_.block_size_xi, dims_[j] - k)});
}

VectorXd SamplerContext::beta(const ChainState& s) const {
  VectorXd b(q());
  for (int j = 0; j < p(); ++j) b.segment(offsets_[j], dims_[j]) = s.alpha[j] * s.xi.segment(offsets_[j], dims_[j]);
  return b;
}

VectorXd SamplerContext::linear_predictor(const ChainState& s) const {
  VectorXd eta = offset_ + Xu_ * s.beta_u;
  if (q() > 0) eta += Xp_ * beta(s);
  return eta;
}

MatrixXd GaussianConditional::covariance() const {
  return precision.llt().solve(MatrixXd::Identity(precision.rows(), precision.cols()));
}

namespace {

constexpr double kMinWeight = 1e-10;
constexpr double kMaxWeight = 1e10;

// Conditional of a coefficient block theta with design X given everything else:
// exact for Gaussian responses, one P-IWLS step at (theta, eta) otherwise.
GaussianConditional block_conditional(const SamplerContext& ctx, const MatrixXd& X, const VectorXd& theta,
                                      const VectorXd& eta, double phi, const VectorXd& prior_mean,
                                      const VectorXd& prior_prec) {
  GaussianConditional c;
  c.precision = prior_prec.asDiagonal();
  VectorXd rhs = prior_prec.cwiseProduct(prior_mean);
  if (ctx.options().use_likelihood) {
    const Family& fam = ctx.family();
    const VectorXd fit = X * theta;
    VectorXd wt(eta.size()), z(eta.size());
    if (fam.is_gaussian()) {
      wt.setConstant(1.0 / phi);
      z = ctx.y() - (eta - fit);
    } else {
      for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double v = std::clamp(fam.variance(eta[i]), kMinWeight, kMaxWeight);
        wt[i] = v;
        z[i] = fit[i] + (ctx.y()[i] - fam.response(eta[i])) / v;
      }
    }
    c.precision.noalias() += X.transpose() * wt.asDiagonal() * X;
    rhs.noalias() += X.transpose() * wt.cwiseProduct(z);
  }
  Eigen::LLT<MatrixXd> llt(c.precision);
  if (llt.info() != Eigen::Success)
    throw SamplerError("conditional precision is not positive definite");
  c.mean = llt.solve(rhs);
  if (!c.mean.allFinite()) throw SamplerError("conditional mean is not finite");
  return c;
}

struct Draw {
  VectorXd value;
  double log_density = 0;  // up to the dimension-dependent constant
};

double log_density(const GaussianConditional& c, const Eigen::LLT<MatrixXd>& llt, const VectorXd& x) {
  const VectorXd d = x - c.mean;
  return llt.matrixLLT().diagonal().array().log().sum() - 0.5 * d.dot(c.precision * d);
}

Draw draw(const GaussianConditional& c, Rng& rng) {
  Eigen::LLT<MatrixXd> llt(c.precision);
  if (llt.info() != Eigen::Success) throw SamplerError("conditional precision is not positive definite");
  VectorXd z(c.mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  Draw d;
  d.value = c.mean + llt.matrixU().solve(z);
  d.log_density = log_density(c, llt, d.value);
  return d;
}

double log_prior(const VectorXd& theta, const VectorXd& mean, const VectorXd& prec) {
  return -0.5 * (theta - mean).cwiseAbs2().dot(prec);
}

// Draws a new value for a block, with a Metropolis-Hastings correction for
// non-Gaussian responses. Updates `theta` and `s.eta` on acceptance.
bool update_block(const SamplerContext& ctx, ChainState& s, const MatrixXd& X, VectorXd& theta,
                  const VectorXd& prior_mean, const VectorXd& prior_prec, Rng& rng) {
  const GaussianConditional forward = block_conditional(ctx, X, theta, s.eta, s.phi, prior_mean, prior_prec);
  const Draw proposal = draw(forward, rng);
  VectorXd eta_new = s.eta + X * (proposal.value - theta);
  if (ctx.family().is_gaussian() || !ctx.options().use_likelihood) {
    theta = proposal.value;
    s.eta = std::move(eta_new);
    return true;
  }
  const GaussianConditional backward =
      block_conditional(ctx, X, proposal.value, eta_new, s.phi, prior_mean, prior_prec);
  Eigen::LLT<MatrixXd> back_llt(backward.precision);
  const Family& fam = ctx.family();
  const double log_ratio = fam.log_likelihood(ctx.y(), eta_new, s.phi) +
                           log_prior(proposal.value, prior_mean, prior_prec) -
                           fam.log_likelihood(ctx.y(), s.eta, s.phi) - log_prior(theta, prior_mean, prior_prec) +
                           log_density(backward, back_llt, theta) - proposal.log_density;
  if (std::isfinite(log_ratio) && std::log(rng.uniform()) < log_ratio) {
    theta = proposal.value;
    s.eta = std::move(eta_new);
    return true;
  }
  return false;
}

VectorXd alpha_prior_precision(const ChainState& s, const AlphaBlock& b) {
  VectorXd prec(b.n_terms);
  for (int k = 0; k < b.n_terms; ++k) {
    const int j = b.first_term + k;
    prec[k] = 1.0 / (s.gamma[j] * s.tau2[j]);
  }
  return prec;
}

// 1 / (1 + exp(-log_odds)) without overflow.
double logistic(double log_odds) {
  return log_odds >= 0 ? 1.0 / (1.0 + std::exp(-log_odds)) : std::exp(log_odds) / (1.0 + std::exp(log_odds));
}

}  // namespace

MatrixXd alpha_design(const SamplerContext& ctx, const ChainState& s, const AlphaBlock& b) {
  MatrixXd X(ctx.n(), b.n_terms);
  for (int k = 0; k < b.n_terms; ++k) {
    const int j = b.first_term + k;
    X.col(k) = ctx.Xp().middleCols(ctx.offsets()[j], ctx.dims()[j]) * s.xi.segment(ctx.offsets()[j], ctx.dims()[j]);
  }
  return X;
}

MatrixXd xi_design(const SamplerContext& ctx, const ChainState& s, const XiBlock& b) {
  return s.alpha[b.term] * ctx.Xp().middleCols(b.begin, b.size);
}

GaussianConditional alpha_conditional(const SamplerContext& ctx, const ChainState& s, const AlphaBlock& b) {
  const MatrixXd X = alpha_design(ctx, s, b);
  return block_conditional(ctx, X, s.alpha.segment(b.first_term, b.n_terms), s.eta, s.phi,
                           VectorXd::Zero(b.n_terms), alpha_prior_precision(s, b));
}

GaussianConditional xi_conditional(const SamplerContext& ctx, const ChainState& s, const XiBlock& b) {
  const MatrixXd X = xi_design(ctx, s, b);
  return block_conditional(ctx, X, s.xi.segment(b.begin, b.size), s.eta, s.phi, s.m.segment(b.begin, b.size),
                           VectorXd::Ones(b.size));
}

GaussianConditional beta_u_conditional(const SamplerContext& ctx, const ChainState& s) {
  const Eigen::Index k = ctx.Xu().cols();
  return block_conditional(ctx, ctx.Xu(), s.beta_u, s.eta, s.phi, VectorXd::Zero(k),
                           VectorXd::Constant(k, 1.0 / ctx.options().unpenalized_variance));
}

bool update_alpha_block(const SamplerContext& ctx, ChainState& s, const AlphaBlock& b, Rng& rng) {
  const MatrixXd X = alpha_design(ctx, s, b);
  VectorXd theta = s.alpha.segment(b.first_term, b.n_terms);
  const bool accepted = update_block(ctx, s, X, theta, VectorXd::Zero(b.n_terms), alpha_prior_precision(s, b), rng);
  s.alpha.segment(b.first_term, b.n_terms) = theta;
  return accepted;
}

bool update_xi_block(const SamplerContext& ctx, ChainState& s, const XiBlock& b, Rng& rng) {
  const MatrixXd X = xi_design(ctx, s, b);
  VectorXd theta = s.xi.segment(b.begin, b.size);
  const VectorXd mean = s.m.segment(b.begin, b.size);
  const bool accepted = update_block(ctx, s, X, theta, mean, VectorXd::Ones(b.size), rng);
  s.xi.segment(b.begin, b.size) = theta;
  return accepted;
}

bool update_beta_u(const SamplerContext& ctx, ChainState& s, Rng& rng) {
  const Eigen::Index k = ctx.Xu().cols();
  if (k == 0) return true;
  return update_block(ctx, s, ctx.Xu(), s.beta_u, VectorXd::Zero(k),
                      VectorXd::Constant(k, 1.0 / ctx.options().unpenalized_variance), rng);
}

void update_m(ChainState& s, Rng& rng) {
  for (Eigen::Index l = 0; l < s.xi.size(); ++l) {
    const double p1 = logistic(2.0 * s.xi[l]);
    s.m[l] = rng.uniform() < p1 ? 1.0 : -1.0;
  }
}

void rescale(const SamplerContext& ctx, ChainState& s, int term) {
  const int d = ctx.dims()[term];
  auto xi = s.xi.segment(ctx.offsets()[term], d);
  const double scale = xi.cwiseAbs().sum() / d;
  if (!(scale > 0) || !std::isfinite(scale)) return;
  xi /= scale;
  s.alpha[term] *= scale;
}

void update_tau2(ChainState& s, const HyperParams& hyper, Rng& rng) {
  for (Eigen::Index j = 0; j < s.tau2.size(); ++j)
    s.tau2[j] = rng.inv_gamma(hyper.a_tau + 0.5, hyper.b_tau + s.alpha[j] * s.alpha[j] / (2.0 * s.gamma[j]));
}

double gamma_inclusion_probability(double alpha, double tau2, double w, const HyperParams& hyper) {
  const double log_odds = std::log(w) - std::log1p(-w) + 0.5 * std::log(hyper.v0) +
                          (1.0 - hyper.v0) * alpha * alpha / (2.0 * hyper.v0 * tau2);
  return logistic(log_odds);
}

void update_gamma(ChainState& s, const HyperParams& hyper, Rng& rng) {
  for (Eigen::Index j = 0; j < s.gamma.size(); ++j) {
    const double p1 = gamma_inclusion_probability(s.alpha[j], s.tau2[j], s.w, hyper);
    s.gamma[j] = rng.uniform() < p1 ? 1.0 : hyper.v0;
  }
}

void update_w(ChainState& s, const HyperParams& hyper, Rng& rng) {
  const auto included = static_cast<double>((s.gamma.array() == 1.0).count());
  const auto excluded = static_cast<double>(s.gamma.size()) - included;
  // Kept strictly inside (0, 1) so the log odds in the gamma update stay finite.
  s.w = std::clamp(rng.beta(hyper.a_w + included, hyper.b_w + excluded), 1e-300, 1.0 - 1e-16);
}

void update_phi(ChainState& s, const VectorXd& y, const HyperParams& hyper, Rng& rng) {
  const double ss = (y - s.eta).squaredNorm();
  s.phi = rng.inv_gamma(hyper.a_phi + 0.5 * static_cast<double>(y.size()), hyper.b_phi + 0.5 * ss);
}

void sweep(const SamplerContext& ctx, ChainState& s, Rng& rng, AcceptanceCounts* counts) {
  AcceptanceCounts local;
  AcceptanceCounts& c = counts ? *counts : local;
  ++c.u_proposed;
  c.u_accepted += update_beta_u(ctx, s, rng);
  for (const auto& b : ctx.alpha_blocks()) {
    ++c.alpha_proposed;
    c.alpha_accepted += update_alpha_block(ctx, s, b, rng);
  }
  update_m(s, rng);
  for (const auto& b : ctx.xi_blocks()) {
    ++c.xi_proposed;
    c.xi_accepted += update_xi_block(ctx, s, b, rng);
  }
  if (ctx.options().rescale)
    for (int j = 0; j < ctx.p(); ++j) rescale(ctx, s, j);
  update_tau2(s, ctx.hyper(), rng);
  update_gamma(s, ctx.hyper(), rng);
  update_w(s, ctx.hyper(), rng);
  // Incremental updates of eta accumulate rounding error; start each phi
  // update and the next sweep from a fresh evaluation.
  s.eta = ctx.linear_predictor(s);
  if (ctx.family().is_gaussian() && ctx.options().use_likelihood) update_phi(s, ctx.y(), ctx.hyper(), rng);
}

bool fisher_scoring(const SamplerContext& ctx, VectorXd* coefficients) {
  const Eigen::Index ku = ctx.Xu().cols();
  const Eigen::Index k = ku + ctx.q();
  MatrixXd X(ctx.n(), k);
  X << ctx.Xu(), ctx.Xp();
  VectorXd prior_prec(k);
  prior_prec.head(ku).setConstant(1.0 / ctx.options().unpenalized_variance);
  prior_prec.tail(ctx.q()).setConstant(1.0 / ctx.options().init_variance);
  VectorXd beta = VectorXd::Zero(k);
  VectorXd eta = ctx.offset();
  const Family& fam = ctx.family();
  for (int it = 0; it < ctx.options().fisher_steps; ++it) {
    VectorXd wt(ctx.n()), z(ctx.n());
    for (int i = 0; i < ctx.n(); ++i) {
      wt[i] = std::clamp(fam.variance(eta[i]), kMinWeight, kMaxWeight);
      z[i] = eta[i] - ctx.offset()[i] + (ctx.y()[i] - fam.response(eta[i])) / wt[i];
    }
    MatrixXd Q = X.transpose() * wt.asDiagonal() * X;
    Q.diagonal() += prior_prec;
    Eigen::LLT<MatrixXd> llt(Q);
    if (llt.info() != Eigen::Success) return false;
    beta = llt.solve(X.transpose() * wt.cwiseProduct(z));
    eta = ctx.offset() + X * beta;
    if (!beta.allFinite() || !eta.allFinite()) return false;
  }
  *coefficients = beta;
  return true;
}

ChainState init_state(const SamplerContext& ctx, Rng& rng, std::vector<std::string>* warnings) {
  const HyperParams& h = ctx.hyper();
  const Eigen::Index ku = ctx.Xu().cols();
  const int p = ctx.p();

  VectorXd beta0 = VectorXd::Zero(ku + ctx.q());
  if (ctx.options().use_likelihood && !fisher_scoring(ctx, &beta0)) {
    beta0.setZero();
    if (warnings) warnings->push_back("Fisher scoring for starting values diverged; starting from zero plus noise");
  }

  ChainState s;
  s.phi = 1.0;
  if (ctx.family().is_gaussian() && ctx.options().use_likelihood) {
    VectorXd fit = ctx.offset() + ctx.Xu() * beta0.head(ku);
    if (ctx.q() > 0) fit += ctx.Xp() * beta0.tail(ctx.q());
    const double ss = (ctx.y() - fit).squaredNorm();
    s.phi = ss > 0 ? ss / ctx.n() : 1.0;
  }

  for (Eigen::Index k = 0; k < beta0.size(); ++k)
    beta0[k] += ctx.options().init_noise * std::sqrt(1.0 + beta0[k] * beta0[k]) * rng.normal();

  s.w = std::clamp(rng.beta(h.a_w, h.b_w), 1e-300, 1.0 - 1e-16);
  s.gamma.resize(p);
  s.tau2.resize(p);
  s.alpha.resize(p);
  s.xi.resize(ctx.q());
  s.m.resize(ctx.q());
  s.beta_u = beta0.head(ku);
  // Scale relative to the prior mode of tau2 so a draw near the prior centre
  // leaves the preliminary fit unchanged.
  const double tau2_ref = h.a_tau > 1 ? h.b_tau / (h.a_tau - 1) : 1.0;
  for (int j = 0; j < p; ++j) {
    s.gamma[j] = rng.uniform() < s.w ? 1.0 : h.v0;
    s.tau2[j] = rng.inv_gamma(h.a_tau, h.b_tau);
    const int d = ctx.dims()[j];
    VectorXd bj = beta0.segment(ku + ctx.offsets()[j], d) * std::sqrt(s.gamma[j] * s.tau2[j] / tau2_ref);
    const double a = bj.cwiseAbs().sum() / d;
    s.alpha[j] = a;
    if (a > 0) s.xi.segment(ctx.offsets()[j], d) = bj / a;
    else s.xi.segment(ctx.offsets()[j], d).setOnes();
  }
  for (Eigen::Index l = 0; l < s.xi.size(); ++l) s.m[l] = s.xi[l] >= 0 ? 1.0 : -1.0;
  s.eta = ctx.linear_predictor(s);
  return s;
}

namespace {

std::string snapshot(const ChainState& s) {
  std::ostringstream os;
  os.precision(6);
  auto maxabs = [](const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; };
  os << "max|alpha|=" << maxabs(s.alpha) << ", max|xi|=" << maxabs(s.xi) << ", max|beta_u|=" << maxabs(s.beta_u)
     << ", max|eta|=" << maxabs(s.eta) << ", w=" << s.w << ", phi=" << s.phi;
  return os.str();
}

}  // namespace

ChainSamples run_chain(const SamplerContext& ctx, int chain_index) {
  const McmcConfig& cfg = ctx.config();
  Rng rng(cfg.seed + static_cast<std::uint64_t>(chain_index));
  ChainSamples out;
  ChainState s = init_state(ctx, rng, &out.warnings);

  const int saved = cfg.saved_per_chain();
  const int p = ctx.p();
  const int q = ctx.q();
  out.iteration.reserve(saved);
  out.alpha.resize(saved, p);
  out.xi.resize(saved, q);
  out.m.resize(saved, q);
  out.gamma.resize(saved, p);
  out.tau2.resize(saved, p);
  out.beta_u.resize(saved, ctx.Xu().cols());
  out.eta.resize(saved, ctx.n());
  out.w.resize(saved);
  out.phi.resize(saved);
  out.deviance.resize(saved);

  int row = 0;
  for (int it = 1; it <= cfg.total_iterations(); ++it) {
    try {
      sweep(ctx, s, rng, &out.acceptance);
      if (it <= cfg.burnin || (it - cfg.burnin) % cfg.thin != 0) continue;
      const double dev = ctx.family().deviance(ctx.y(), s.eta, s.phi);
      if (!std::isfinite(dev)) throw SamplerError("deviance is not finite");
      out.iteration.push_back(it);
      out.alpha.row(row) = s.alpha;
      out.xi.row(row) = s.xi;
      out.m.row(row) = s.m;
      out.gamma.row(row) = s.gamma;
      out.tau2.row(row) = s.tau2;
      out.beta_u.row(row) = s.beta_u;
      out.eta.row(row) = s.eta;
      out.w[row] = s.w;
      out.phi[row] = s.phi;
      out.deviance[row] = dev;
      ++row;
    } catch (const std::exception& e) {
      throw SamplerError("chain " + std::to_string(chain_index + 1) + " failed at iteration " + std::to_string(it) +
                         ": " + e.what() + " [" + snapshot(s) + "]");
    }
  }
  return out;
}

std::vector<ChainSamples> run_chains(const SamplerContext& ctx) {
  const int n_chains = ctx.config().n_chains;
  int workers = ctx.config().threads;
  if (workers == 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::clamp(workers, 1, n_chains);

  std::vector<ChainSamples> results(n_chains);
  std::vector<std::exception_ptr> errors(n_chains);
  std::atomic<int> next{0};
  auto work = [&] {
    for (int k = next++; k < n_chains; k = next++) {
      try {
        results[k] = run_chain(ctx, k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace ssgam

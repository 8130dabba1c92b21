#include "ssgam/summary.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "ssgam/error.hpp"

namespace ssgam {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string family_title(FamilyKind k) {
  switch (k) {
    case FamilyKind::gaussian: return "Gaussian";
    case FamilyKind::binomial: return "Binomial";
    case FamilyKind::poisson: return "Poisson";
  }
  return "";
}

// Column offsets of the X_u pieces.
std::vector<int> piece_offsets(const FullDesign& d) {
  std::vector<int> out;
  int at = 0;
  for (const auto& p : d.xu_pieces) {
    out.push_back(at);
    at += p.columns;
  }
  return out;
}

Band band_of(const MatrixXd& draws, const std::vector<double>& levels) {
  // draws: rows x draws
  Band b;
  b.mean = draws.rowwise().mean();
  b.quantiles.resize(draws.rows(), static_cast<Eigen::Index>(levels.size()));
  std::vector<double> row(static_cast<std::size_t>(draws.cols()));
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    for (Eigen::Index d = 0; d < draws.cols(); ++d) row[d] = draws(i, d);
    std::sort(row.begin(), row.end());
    for (std::size_t l = 0; l < levels.size(); ++l) {
      const double h = (static_cast<double>(row.size()) - 1) * levels[l];
      const auto lo = static_cast<std::size_t>(std::floor(h));
      const std::size_t hi = std::min(lo + 1, row.size() - 1);
      b.quantiles(i, static_cast<Eigen::Index>(l)) = row[lo] + (h - static_cast<double>(lo)) * (row[hi] - row[lo]);
    }
  }
  return b;
}

void check_levels(const std::vector<double>& levels) {
  for (double l : levels)
    if (!(l >= 0 && l <= 1)) throw SummaryError("quantile levels must lie in [0, 1]");
}

// Applies `contribution(rows)` (rows x draws) chunkwise and summarizes.
template <class F>
Band chunked_band(Eigen::Index n_rows, const std::vector<double>& levels, F contribution) {
  constexpr Eigen::Index kChunk = 512;
  Band out;
  out.mean.resize(n_rows);
  out.quantiles.resize(n_rows, static_cast<Eigen::Index>(levels.size()));
  for (Eigen::Index start = 0; start < n_rows; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n_rows - start);
    const Band b = band_of(contribution(start, len), levels);
    out.mean.segment(start, len) = b.mean;
    out.quantiles.middleRows(start, len) = b.quantiles;
  }
  return out;
}

}  // namespace

// ---- FitResult -------------------------------------------------------------

int FitResult::n_saved() const {
  int n = 0;
  for (const auto& c : chains) n += c.size();
  return n;
}

std::vector<std::string> FitResult::term_labels() const {
  std::vector<std::string> out;
  for (const auto& b : design.blocks) out.push_back(b.label);
  return out;
}

MatrixXd FitResult::pooled(MatrixXd ChainSamples::*field) const {
  if (chains.empty()) return {};
  MatrixXd out(n_saved(), (chains[0].*field).cols());
  Eigen::Index r = 0;
  for (const auto& c : chains) {
    const MatrixXd& m = c.*field;
    out.middleRows(r, m.rows()) = m;
    r += m.rows();
  }
  return out;
}

VectorXd FitResult::pooled(VectorXd ChainSamples::*field) const {
  VectorXd out(n_saved());
  Eigen::Index r = 0;
  for (const auto& c : chains) {
    const VectorXd& v = c.*field;
    out.segment(r, v.size()) = v;
    r += v.size();
  }
  return out;
}

MatrixXd FitResult::beta_draws() const {
  const MatrixXd alpha = pooled(&ChainSamples::alpha);
  MatrixXd beta = pooled(&ChainSamples::xi);
  int at = 0;
  for (int j = 0; j < p(); ++j) {
    const int d = design.blocks[j].d;
    beta.middleCols(at, d).array().colwise() *= alpha.col(j).array();
    at += d;
  }
  return beta;
}

FitResult fit_model(const ModelSpec& spec, const DataTable& data, const DesignOptions& design_options,
                    const HyperParams& hyper, const McmcConfig& mcmc, const SamplerOptions& sampler) {
  if (!data.has(spec.response)) throw DataError("no response column named '" + spec.response + "'");
  if (data.type(spec.response) != ColumnType::numeric)
    throw DataError("response column '" + spec.response + "' must be numeric");
  FitResult fit;
  fit.spec = spec;
  fit.data = data;
  fit.y = data.numeric(spec.response);
  fit.family = Family(spec.family);
  fit.family.validate(fit.y);
  fit.hyper = hyper;
  fit.mcmc = mcmc;
  fit.sampler = sampler;
  fit.design = build_full_design(spec, data, design_options);
  SamplerContext ctx(fit.design, fit.y, fit.family, hyper, mcmc, sampler);
  fit.chains = run_chains(ctx);
  for (std::size_t k = 0; k < fit.chains.size(); ++k)
    for (const auto& w : fit.chains[k].warnings) fit.warnings.push_back("chain " + std::to_string(k + 1) + ": " + w);
  return fit;
}

// ---- term summaries ----------------------------------------------------------

VectorXd inclusion_probabilities(const FitResult& fit) {
  const MatrixXd g = fit.pooled(&ChainSamples::gamma);
  if (g.rows() == 0) throw SummaryError("fit has no saved draws");
  return (g.array() == 1.0).cast<double>().colwise().mean().transpose();
}

TermImportance term_importance(const FitResult& fit) {
  const FullDesign& d = fit.design;
  const VectorXd beta = fit.beta_draws().colwise().mean().transpose();
  const VectorXd beta_u = fit.pooled(&ChainSamples::beta_u).colwise().mean().transpose();
  std::vector<VectorXd> parts;
  TermImportance out;
  int at = 0;
  for (const auto& b : d.blocks) {
    parts.push_back(b.B * beta.segment(at, b.d));
    out.labels.push_back(b.label);
    at += b.d;
  }
  if (d.n_unpenalized() > 1) {
    const Eigen::Index k = d.n_unpenalized() - 1;
    parts.push_back(d.Xu.rightCols(k) * beta_u.tail(k));
    out.labels.push_back("u");
  }
  VectorXd total = VectorXd::Zero(d.n());
  for (const auto& p : parts) total += p;
  const double norm2 = total.squaredNorm();
  out.pi.resize(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t j = 0; j < parts.size(); ++j) out.pi[j] = norm2 > 0 ? parts[j].dot(total) / norm2 : kNaN;
  return out;
}

std::string stars(double inclusion) {
  if (std::isnan(inclusion)) return "";
  if (inclusion > 0.9) return "***";
  if (inclusion > 0.5) return "**";
  if (inclusion > 0.25) return "*";
  return "";
}

std::vector<TermSummary> term_table(const FitResult& fit) {
  const VectorXd inc = inclusion_probabilities(fit);
  const TermImportance imp = term_importance(fit);
  std::vector<TermSummary> out;
  TermSummary u;
  u.label = "u";
  u.inclusion = kNaN;
  u.importance = fit.design.n_unpenalized() > 1 ? imp.pi[imp.pi.size() - 1] : kNaN;
  u.dim = fit.design.n_unpenalized();
  out.push_back(u);
  for (int j = 0; j < fit.p(); ++j) {
    TermSummary t;
    t.label = fit.design.blocks[j].label;
    t.inclusion = inc[j];
    t.importance = imp.pi[j];
    t.dim = fit.design.blocks[j].d;
    t.stars = stars(inc[j]);
    out.push_back(t);
  }
  return out;
}

std::vector<ModelConfiguration> model_table(const FitResult& fit, double threshold) {
  const MatrixXd alpha = fit.pooled(&ChainSamples::alpha);
  const MatrixXd tau2 = fit.pooled(&ChainSamples::tau2);
  const VectorXd w = fit.pooled(&ChainSamples::w);
  if (alpha.rows() == 0) throw SummaryError("fit has no saved draws");
  std::map<std::vector<bool>, long> counts;
  for (Eigen::Index r = 0; r < alpha.rows(); ++r) {
    std::vector<bool> inc(static_cast<std::size_t>(fit.p()));
    for (int j = 0; j < fit.p(); ++j)
      inc[j] = gamma_inclusion_probability(alpha(r, j), tau2(r, j), w[r], fit.hyper) > threshold;
    ++counts[inc];
  }
  std::vector<std::pair<std::vector<bool>, long>> sorted(counts.begin(), counts.end());
  // Most frequent first; ties keep the (deterministic) map order.
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<ModelConfiguration> out;
  double cum = 0;
  for (const auto& [inc, n] : sorted) {
    ModelConfiguration m;
    m.included = inc;
    m.probability = static_cast<double>(n) / static_cast<double>(alpha.rows());
    cum += m.probability;
    m.cumulative = cum;
    out.push_back(m);
  }
  return out;
}

// ---- prediction -----------------------------------------------------------------

double quantile(std::vector<double> values, double level) {
  if (values.empty()) throw SummaryError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1) * level;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Prediction predict(const FitResult& fit, const DataTable& newdata, const std::vector<double>& levels,
                   bool with_terms) {
  check_levels(levels);
  const EvaluatedDesign ev = evaluate_design(fit.design, newdata);
  const MatrixXd beta = fit.beta_draws();                          // D x q
  const MatrixXd beta_u = fit.pooled(&ChainSamples::beta_u);       // D x ku
  const Eigen::Index n = ev.Xu.rows();
  const Eigen::Index q = beta.cols();
  MatrixXd Xp(n, q);
  {
    Eigen::Index at = 0;
    for (const auto& b : ev.blocks) {
      Xp.middleCols(at, b.cols()) = b;
      at += b.cols();
    }
  }
  Prediction out;
  out.levels = levels;
  auto eta_rows = [&](Eigen::Index start, Eigen::Index len) {
    MatrixXd eta = ev.Xu.middleRows(start, len) * beta_u.transpose() + Xp.middleRows(start, len) * beta.transpose();
    eta.colwise() += ev.offset.segment(start, len);
    return eta;
  };
  out.eta = chunked_band(n, levels, eta_rows);
  out.response = chunked_band(n, levels, [&](Eigen::Index start, Eigen::Index len) {
    MatrixXd eta = eta_rows(start, len);
    return MatrixXd(eta.unaryExpr([&](double e) { return fit.family.response(e); }));
  });
  if (with_terms) {
    Eigen::Index at = 0;
    for (std::size_t j = 0; j < ev.blocks.size(); ++j) {
      const Eigen::Index d = ev.blocks[j].cols();
      out.term_labels.push_back(fit.design.blocks[j].label);
      out.terms.push_back(chunked_band(n, levels, [&](Eigen::Index start, Eigen::Index len) {
        return MatrixXd(ev.blocks[j].middleRows(start, len) * beta.middleCols(at, d).transpose());
      }));
      at += d;
    }
  }
  return out;
}

// ---- effects --------------------------------------------------------------------

DataTable effect_grid(const FitResult& fit, const std::vector<std::string>& covariates, int points) {
  // Row r enumerates the Cartesian product with the last covariate varying fastest.
  std::vector<int> sizes;
  for (const auto& c : covariates) {
    if (fit.data.type(c) == ColumnType::numeric) sizes.push_back(points);
    else sizes.push_back(fit.data.factor(c).n_levels());
  }
  const int total = std::accumulate(sizes.begin(), sizes.end(), 1, std::multiplies<>());
  DataTable grid;
  int stride = total;
  for (std::size_t k = 0; k < covariates.size(); ++k) {
    stride /= sizes[k];
    const auto& c = covariates[k];
    std::vector<int> index(static_cast<std::size_t>(total));
    for (int r = 0; r < total; ++r) index[r] = (r / stride) % sizes[k];
    if (fit.data.type(c) == ColumnType::numeric) {
      const VectorXd& x = fit.data.numeric(c);
      const double lo = x.minCoeff(), hi = x.maxCoeff();
      VectorXd v(total);
      for (int r = 0; r < total; ++r)
        v[r] = index[r] == points - 1 ? hi : lo + (hi - lo) * index[r] / static_cast<double>(std::max(points - 1, 1));
      grid.add_numeric(c, v);
    } else {
      const Factor& f = fit.data.factor(c);
      grid.add_factor(c, Factor{index, f.levels});
    }
  }
  return grid;
}

std::vector<Effect> effects(const FitResult& fit, bool cumulative, const std::vector<double>& levels) {
  check_levels(levels);
  const FullDesign& d = fit.design;
  const MatrixXd beta = fit.beta_draws();
  const MatrixXd beta_u = fit.pooled(&ChainSamples::beta_u);
  std::vector<int> block_at;
  {
    int at = 0;
    for (const auto& b : d.blocks) {
      block_at.push_back(at);
      at += b.d;
    }
  }
  const std::vector<int> piece_at = piece_offsets(d);

  struct Group {
    std::vector<std::string> covariates;
    std::vector<int> blocks;
    std::vector<int> pieces;
    std::string label;
  };
  std::vector<Group> groups;
  if (!cumulative) {
    for (int j = 0; j < d.p(); ++j) groups.push_back({d.blocks[j].covariates, {j}, {}, d.blocks[j].label});
  } else {
    std::vector<std::vector<std::string>> sets;
    for (const auto& b : d.blocks) {
      std::vector<std::string> s = b.covariates;
      std::sort(s.begin(), s.end());
      if (std::find(sets.begin(), sets.end(), s) == sets.end()) sets.push_back(s);
    }
    for (const auto& s : sets) {
      Group g;
      // Keep the covariate order of the first term with this set.
      for (const auto& b : d.blocks) {
        std::vector<std::string> sorted = b.covariates;
        std::sort(sorted.begin(), sorted.end());
        if (sorted == s) {
          g.covariates = b.covariates;
          break;
        }
      }
      for (int j = 0; j < d.p(); ++j)
        if (std::all_of(d.blocks[j].covariates.begin(), d.blocks[j].covariates.end(),
                        [&](const auto& c) { return std::binary_search(s.begin(), s.end(), c); }))
          g.blocks.push_back(j);
      for (std::size_t k = 0; k < d.xu_pieces.size(); ++k) {
        const auto& piece = d.xu_pieces[k];
        if (piece.kind == UnpenalizedPiece::Kind::intercept) continue;
        const std::vector<std::string>& covs =
            piece.kind == UnpenalizedPiece::Kind::nullspace ? piece.raw.covariates : std::vector<std::string>{piece.covariate};
        if (std::all_of(covs.begin(), covs.end(), [&](const auto& c) { return std::binary_search(s.begin(), s.end(), c); }))
          g.pieces.push_back(static_cast<int>(k));
      }
      std::string label;
      for (const auto& c : g.covariates) label += (label.empty() ? "" : ":") + c;
      g.label = label;
      groups.push_back(g);
    }
  }

  std::vector<Effect> out;
  for (const auto& g : groups) {
    Effect e;
    e.label = g.label;
    e.covariates = g.covariates;
    e.grid = effect_grid(fit, g.covariates);
    std::vector<MatrixXd> block_designs;
    for (int j : g.blocks) {
      e.terms.push_back(d.blocks[j].label);
      block_designs.push_back(evaluate_block(d.blocks[j], e.grid));
    }
    std::vector<MatrixXd> piece_designs;
    for (int k : g.pieces) {
      e.terms.push_back(d.xu_pieces[k].label);
      piece_designs.push_back(evaluate_unpenalized({d.xu_pieces[k]}, e.grid));
    }
    const auto rows = static_cast<Eigen::Index>(e.grid.n_rows());
    e.band = chunked_band(rows, levels, [&](Eigen::Index start, Eigen::Index len) {
      MatrixXd sum = MatrixXd::Zero(len, beta.rows());
      for (std::size_t i = 0; i < g.blocks.size(); ++i) {
        const int j = g.blocks[i];
        sum += block_designs[i].middleRows(start, len) * beta.middleCols(block_at[j], d.blocks[j].d).transpose();
      }
      for (std::size_t i = 0; i < g.pieces.size(); ++i) {
        const int k = g.pieces[i];
        sum += piece_designs[i].middleRows(start, len) *
               beta_u.middleCols(piece_at[k], d.xu_pieces[k].columns).transpose();
      }
      return sum;
    });
    out.push_back(std::move(e));
  }
  return out;
}

// ---- deviance and convergence --------------------------------------------------------

double null_deviance(const Family& family, const VectorXd& y, const VectorXd& offset) {
  const auto n = static_cast<double>(y.size());
  if (y.size() == 0) return 0;
  if (family.is_gaussian()) {
    const VectorXd r = y - offset;
    const double c = r.mean();
    const double phi = (r.array() - c).square().sum() / n;
    if (phi <= 0) return -std::numeric_limits<double>::infinity();
    return family.deviance(y, offset.array() + c, phi);
  }
  // Newton iterations on the intercept; a boundary mean means a perfect fit.
  double c = 0;
  const double ybar = y.mean();
  if (family.kind() == FamilyKind::binomial) {
    if (ybar <= 0 || ybar >= 1) return 0;
    c = std::log(ybar / (1 - ybar)) - offset.mean();
  } else {
    if (ybar <= 0) return 0;
    c = std::log(ybar) - offset.mean();
  }
  for (int it = 0; it < 100; ++it) {
    double grad = 0, hess = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      grad += y[i] - family.response(offset[i] + c);
      hess += family.variance(offset[i] + c);
    }
    const double step = grad / hess;
    c += step;
    if (std::abs(step) < 1e-12) break;
  }
  return family.deviance(y, offset.array() + c, 1.0);
}

DevianceSummary deviance_summary(const FitResult& fit) {
  DevianceSummary s;
  s.null_deviance = null_deviance(fit.family, fit.y, fit.design.offset);
  const VectorXd dev = fit.pooled(&ChainSamples::deviance);
  s.mean_posterior_deviance = dev.size() ? dev.mean() : kNaN;
  return s;
}

double RhatReport::max() const { return values.size() ? values.maxCoeff() : kNaN; }

double rhat(const MatrixXd& chains) {
  const Eigen::Index m = chains.rows();
  const Eigen::Index n = chains.cols();
  if (m < 2 || n < 2) throw SummaryError("R-hat needs at least 2 chains with 2 draws each");
  const VectorXd means = chains.rowwise().mean();
  double W = 0;
  for (Eigen::Index k = 0; k < m; ++k) W += (chains.row(k).array() - means[k]).square().sum() / static_cast<double>(n - 1);
  W /= static_cast<double>(m);
  const double B = static_cast<double>(n) * (means.array() - means.mean()).square().sum() / static_cast<double>(m - 1);
  if (W <= 0) return B <= 0 ? 1.0 : std::numeric_limits<double>::infinity();
  return std::sqrt((W + B / static_cast<double>(n)) / W);
}

RhatReport gelman_rubin(const FitResult& fit) {
  RhatReport r;
  const auto m = static_cast<Eigen::Index>(fit.chains.size());
  if (m < 2) {
    r.reason = "R-hat unavailable: needs at least 2 chains";
    return r;
  }
  const Eigen::Index n = fit.chains[0].size();
  for (const auto& c : fit.chains)
    if (c.size() != n) throw SummaryError("chains have unequal numbers of saved draws");
  if (n < 2) {
    r.reason = "R-hat unavailable: needs at least 2 saved draws per chain";
    return r;
  }
  std::vector<double> values;
  auto add = [&](const std::string& name, auto column_of_chain) {
    MatrixXd c(m, n);
    for (Eigen::Index k = 0; k < m; ++k) c.row(k) = column_of_chain(fit.chains[k]).transpose();
    r.names.push_back(name);
    values.push_back(rhat(c));
  };
  int at = 0;
  for (int j = 0; j < fit.p(); ++j) {
    const auto& b = fit.design.blocks[j];
    for (int k = 0; k < b.d; ++k)
      add("beta." + b.label + "." + std::to_string(k + 1), [&](const ChainSamples& c) {
        return VectorXd(c.alpha.col(j).cwiseProduct(c.xi.col(at + k)));
      });
    at += b.d;
  }
  for (int k = 0; k < fit.design.n_unpenalized(); ++k)
    add("u." + std::to_string(k + 1), [&](const ChainSamples& c) { return VectorXd(c.beta_u.col(k)); });
  for (int j = 0; j < fit.p(); ++j)
    add("tau2." + fit.design.blocks[j].label, [&](const ChainSamples& c) { return VectorXd(c.tau2.col(j)); });
  add("w", [](const ChainSamples& c) { return c.w; });
  if (fit.family.is_gaussian()) add("phi", [](const ChainSamples& c) { return c.phi; });
  add("deviance", [](const ChainSamples& c) { return c.deviance; });
  r.values = Eigen::Map<VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  r.available = true;
  return r;
}

AcceptanceRates acceptance_rates(const FitResult& fit) {
  long ap = 0, aa = 0, xp = 0, xa = 0;
  for (const auto& c : fit.chains) {
    ap += c.acceptance.alpha_proposed;
    aa += c.acceptance.alpha_accepted;
    xp += c.acceptance.xi_proposed;
    xa += c.acceptance.xi_accepted;
  }
  AcceptanceRates r;
  r.alpha = ap ? static_cast<double>(aa) / static_cast<double>(ap) : 1.0;
  r.xi = xp ? static_cast<double>(xa) / static_cast<double>(xp) : 1.0;
  return r;
}

// ---- reports -----------------------------------------------------------------------

namespace {

std::string fixed3(double v) { return std::isnan(v) ? "NA" : format("%.3f", v); }

}  // namespace

std::string summary_text(const FitResult& fit, int max_models) {
  std::ostringstream os;
  const FullDesign& d = fit.design;
  os << "Spike-and-Slab STAR for " << family_title(fit.family.kind()) << " data \n\n";
  os << "Model:\n" << render(fit.spec) << "\n";
  os << d.n() << " observations; " << d.n_unpenalized() + d.q() << " coefficients in " << d.p() + 1
     << " model terms.\n\n";

  os << "Prior:\n";
  std::vector<std::pair<std::string, double>> prior = {{"a[tau]", fit.hyper.a_tau}, {"b[tau]", fit.hyper.b_tau},
                                                       {"v[0]", fit.hyper.v0},       {"a[w]", fit.hyper.a_w},
                                                       {"b[w]", fit.hyper.b_w}};
  if (fit.family.is_gaussian()) {
    prior.emplace_back("a[sigma^2]", fit.hyper.a_phi);
    prior.emplace_back("b[sigma^2]", fit.hyper.b_phi);
  }
  std::string head, vals;
  for (const auto& [name, v] : prior) {
    const std::string value = format("%.1e", v);
    const std::size_t width = std::max(name.size(), value.size()) + 1;
    head += pad_left(name, width);
    vals += pad_left(value, width);
  }
  os << head << "\n" << vals << "\n\n";

  os << "MCMC:\n";
  os << "Saved " << fit.n_saved() << " samples from " << fit.chains.size() << " chain(s), each ran "
     << fit.mcmc.chain_length << " iterations after a\n  burn-in of " << fit.mcmc.burnin
     << " ; Thinning: " << fit.mcmc.thin << "\n";
  if (!fit.family.is_gaussian()) {
    const AcceptanceRates a = acceptance_rates(fit);
    os << "P-IWLS acceptance rates: " << format("%.2f", a.alpha) << " for alpha; " << format("%.2f", a.xi)
       << " for xi.\n";
  }
  os << "\n";
  const DevianceSummary dev = deviance_summary(fit);
  os << "Null deviance:           " << format("%.0f", dev.null_deviance) << "\n";
  os << "Mean posterior deviance: " << format("%.0f", dev.mean_posterior_deviance) << "\n\n";

  os << "Marginal posterior inclusion probabilities and term importance:\n";
  const auto table = term_table(fit);
  std::size_t w = 4;
  for (const auto& t : table) w = std::max(w, t.label.size() + 2);
  os << pad_right("", w) << pad_left("P(gamma=1)", 10) << pad_left("pi", 7) << pad_left("dim", 4) << "    \n";
  for (const auto& t : table)
    os << pad_right(t.label, w) << pad_left(fixed3(t.inclusion), 10) << pad_left(fixed3(t.importance), 7)
       << pad_left(std::to_string(t.dim), 4) << " " << pad_right(t.stars, 3) << "\n";
  os << "*:P(gamma=1)>.25 **:P(gamma=1)>.5 ***:P(gamma=1)>.9\n\n";

  const auto models = model_table(fit, 0.5);
  const std::size_t shown = std::min<std::size_t>(models.size(), static_cast<std::size_t>(std::max(max_models, 0)));
  os << "Posterior model probabilities (inclusion threshold = 0.5 ):\n";
  const std::size_t col = 7;
  std::size_t lw = std::string("cumulative:").size() + 1;
  for (const auto& b : d.blocks) lw = std::max(lw, b.label.size() + 1);
  os << pad_right("", lw);
  for (std::size_t k = 0; k < shown; ++k) os << pad_left(std::to_string(k + 1), col);
  os << "\n" << pad_right("prob.:", lw);
  for (std::size_t k = 0; k < shown; ++k) os << pad_left(format("%.3f", models[k].probability), col);
  os << "\n";
  for (int j = 0; j < d.p(); ++j) {
    os << pad_right(d.blocks[j].label, lw);
    for (std::size_t k = 0; k < shown; ++k) os << pad_left(models[k].included[j] ? "x" : "", col);
    os << "\n";
  }
  os << pad_right("cumulative:", lw);
  for (std::size_t k = 0; k < shown; ++k) os << pad_left(format("%.3f", models[k].cumulative), col);
  os << "\n";
  for (const auto& warning : fit.warnings) os << "Warning: " << warning << "\n";
  return os.str();
}

json model_table_json(const FitResult& fit, double threshold) {
  json j;
  j["threshold"] = threshold;
  j["terms"] = fit.term_labels();
  json rows = json::array();
  for (const auto& m : model_table(fit, threshold)) {
    json r;
    r["probability"] = m.probability;
    r["cumulative"] = m.cumulative;
    std::vector<std::string> inc;
    for (int t = 0; t < fit.p(); ++t)
      if (m.included[t]) inc.push_back(fit.design.blocks[t].label);
    r["included"] = inc;
    rows.push_back(r);
  }
  j["models"] = rows;
  return j;
}

json summary_json(const FitResult& fit, int max_models) {
  json j;
  const FullDesign& d = fit.design;
  j["family"] = to_string(fit.family.kind());
  j["formula"] = render(fit.spec);
  j["observations"] = d.n();
  j["coefficients"] = d.n_unpenalized() + d.q();
  j["terms"] = d.p() + 1;
  j["prior"] = {{"a_tau", fit.hyper.a_tau}, {"b_tau", fit.hyper.b_tau}, {"v0", fit.hyper.v0},
                {"a_w", fit.hyper.a_w},     {"b_w", fit.hyper.b_w},     {"a_phi", fit.hyper.a_phi},
                {"b_phi", fit.hyper.b_phi}};
  j["mcmc"] = {{"chains", fit.chains.size()},        {"chain_length", fit.mcmc.chain_length},
               {"burnin", fit.mcmc.burnin},          {"thin", fit.mcmc.thin},
               {"saved", fit.n_saved()},             {"seed", fit.mcmc.seed},
               {"block_size_alpha", fit.mcmc.block_size_alpha}, {"block_size_xi", fit.mcmc.block_size_xi}};
  const AcceptanceRates a = acceptance_rates(fit);
  j["acceptance"] = {{"alpha", a.alpha}, {"xi", a.xi}};
  const DevianceSummary dev = deviance_summary(fit);
  j["deviance"] = {{"null", dev.null_deviance}, {"mean_posterior", dev.mean_posterior_deviance}};
  json rows = json::array();
  for (const auto& t : term_table(fit)) {
    json r;
    r["label"] = t.label;
    r["inclusion"] = std::isnan(t.inclusion) ? json(nullptr) : json(t.inclusion);
    r["pi"] = std::isnan(t.importance) ? json(nullptr) : json(t.importance);
    r["dim"] = t.dim;
    r["stars"] = t.stars;
    rows.push_back(r);
  }
  j["term_table"] = rows;
  json mt = model_table_json(fit, 0.5);
  if (mt["models"].size() > static_cast<std::size_t>(max_models)) {
    json head = json::array();
    for (int k = 0; k < max_models; ++k) head.push_back(mt["models"][k]);
    mt["models"] = head;
  }
  j["model_table"] = mt;
  j["warnings"] = fit.warnings;
  return j;
}

json diagnostics_json(const FitResult& fit) {
  json j;
  const RhatReport r = gelman_rubin(fit);
  json rh;
  rh["available"] = r.available;
  if (r.available) {
    rh["max"] = r.max();
    json values = json::object();
    for (std::size_t k = 0; k < r.names.size(); ++k) values[r.names[k]] = r.values[static_cast<Eigen::Index>(k)];
    rh["values"] = values;
  } else {
    rh["reason"] = r.reason;
  }
  j["rhat"] = rh;
  const AcceptanceRates a = acceptance_rates(fit);
  j["acceptance"] = {{"alpha", a.alpha}, {"xi", a.xi}};
  json per_chain = json::array();
  for (const auto& c : fit.chains)
    per_chain.push_back({{"alpha_proposed", c.acceptance.alpha_proposed},
                         {"alpha_accepted", c.acceptance.alpha_accepted},
                         {"xi_proposed", c.acceptance.xi_proposed},
                         {"xi_accepted", c.acceptance.xi_accepted}});
  j["acceptance_per_chain"] = per_chain;
  j["warnings"] = fit.warnings;
  return j;
}

json effect_json(const Effect& e, const std::vector<double>& levels) {
  json j;
  j["label"] = e.label;
  j["covariates"] = e.covariates;
  j["terms"] = e.terms;
  json grid = json::object();
  for (const auto& c : e.covariates) {
    if (e.grid.type(c) == ColumnType::numeric) {
      const VectorXd& v = e.grid.numeric(c);
      grid[c] = std::vector<double>(v.data(), v.data() + v.size());
    } else {
      const Factor& f = e.grid.factor(c);
      std::vector<std::string> labels;
      for (int code : f.codes) labels.push_back(f.levels[code]);
      grid[c] = labels;
    }
  }
  j["grid"] = grid;
  j["mean"] = std::vector<double>(e.band.mean.data(), e.band.mean.data() + e.band.mean.size());
  json q = json::object();
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const VectorXd col = e.band.quantiles.col(static_cast<Eigen::Index>(l));
    q[format("%g", levels[l])] = std::vector<double>(col.data(), col.data() + col.size());
  }
  j["quantiles"] = q;
  return j;
}

}  // namespace ssgam

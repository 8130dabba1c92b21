// Acceptance suite: one PASS/FAIL line per criterion.
#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/inverse_gamma.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "ssgam/cli.hpp"
#include "ssgam/simulate.hpp"
#include "support.hpp"

using namespace ssgam;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
};

int failures = 0;

template <class F>
void criterion(int id, const char* title, F body) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " exception: " << e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s criterion %2d: %s [%.1fs]%s\n", o.pass ? "PASS" : "FAIL", id, title, secs, o.detail.str().c_str());
  std::fflush(stdout);
}

std::string fmt(double v, const char* f = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

McmcConfig mcmc(int chains, int length, int burnin, int thin, std::uint64_t seed) {
  McmcConfig c;
  c.n_chains = chains;
  c.chain_length = length;
  c.burnin = burnin;
  c.thin = thin;
  c.seed = seed;
  return c;
}

// Largest |deviation| / standard error over the mean and covariance entries.
double moment_z(const MatrixXd& draws, const VectorXd& mu, const MatrixXd& sigma) {
  const double n = static_cast<double>(draws.rows());
  const VectorXd mean = draws.colwise().mean();
  const MatrixXd c = draws.rowwise() - mean.transpose();
  const MatrixXd cov = c.transpose() * c / (n - 1);
  double worst = 0;
  for (Eigen::Index k = 0; k < mu.size(); ++k) {
    worst = std::max(worst, std::abs(mean[k] - mu[k]) / std::sqrt(sigma(k, k) / n));
    for (Eigen::Index l = k; l < mu.size(); ++l)
      worst = std::max(worst, std::abs(cov(k, l) - sigma(k, l)) /
                                  std::sqrt((sigma(k, k) * sigma(l, l) + sigma(k, l) * sigma(k, l)) / n));
  }
  return worst;
}

const char* kSimFormula = "y ~ (sm1 + sm2 + f + lin1)^2 + lin2 + lin3 + noise1 + noise2 + noise3 + noise4";

FullDesign toy() { return testing::toy_design(20, {3, 4}, 2024); }

// Logistic data split into 524 training and 200 test rows.
std::pair<DataTable, DataTable> logistic_split() {
  const DataTable all = simulate_logistic(1109, 724).data;
  std::vector<int> idx(724);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(1109712439);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<int> test(idx.begin(), idx.begin() + 200), train(idx.begin() + 200, idx.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {all.subset(train), all.subset(test)};
}

FitResult fit_logistic(const DataTable& train, double v0) {
  HyperParams h;
  h.v0 = v0;
  const ModelSpec spec = parse_model("diabetes ~ pregnant + glucose + pressure + mass + pedigree + age",
                                     train.schema(), FamilyKind::binomial);
  return fit_model(spec, train, {}, h, mcmc(8, 5000, 500, 5, 1));
}

double inclusion_of(const FitResult& fit, const std::string& label) {
  const VectorXd inc = inclusion_probabilities(fit);
  for (int j = 0; j < fit.p(); ++j)
    if (fit.design.blocks[j].label == label) return inc[j];
  throw std::runtime_error("no term " + label);
}

}  // namespace

int main() {
  criterion(1, "alpha/xi conditional draws match dense-oracle moments within 3 MC SE (1e5 draws)", [](Outcome& o) {
    const FullDesign d = toy();
    const VectorXd y = testing::toy_response(d, 7);
    const SamplerContext ctx(d, y, Family(), HyperParams{}, mcmc(1, 10, 0, 1, 1));
    Rng rng(99);
    ChainState s = init_state(ctx, rng);
    s.phi = 0.15;
    s.gamma << 1, 1;
    s.tau2 << 4, 12;
    const int n = 100000;

    // alpha: collapsed design [B_1 xi_1, B_2 xi_2]
    MatrixXd Xa(20, 2);
    Xa.col(0) = d.blocks[0].B * s.xi.head(3);
    Xa.col(1) = d.blocks[1].B * s.xi.tail(4);
    const VectorXd r = y - d.Xu * s.beta_u;
    MatrixXd Qa = Xa.transpose() * Xa / s.phi;
    Qa.diagonal() += (s.gamma.array() * s.tau2.array()).inverse().matrix();
    const MatrixXd Sa = Qa.inverse();
    const VectorXd ma = Sa * Xa.transpose() * r / s.phi;
    MatrixXd da(n, 2);
    for (int i = 0; i < n; ++i) {
      ChainState t = s;
      update_alpha_block(ctx, t, ctx.alpha_blocks()[0], rng);
      da.row(i) = t.alpha.transpose();
    }
    const double za = moment_z(da, ma, Sa);

    // xi for the second term: alpha_2 B_2 with prior N(m, I)
    const MatrixXd Xx = s.alpha[1] * d.blocks[1].B;
    const VectorXd rx = r - s.alpha[0] * d.blocks[0].B * s.xi.head(3);
    MatrixXd Qx = Xx.transpose() * Xx / s.phi + MatrixXd::Identity(4, 4);
    const MatrixXd Sx = Qx.inverse();
    const VectorXd mx = Sx * (Xx.transpose() * rx / s.phi + s.m.tail(4));
    MatrixXd dx(n, 4);
    for (int i = 0; i < n; ++i) {
      ChainState t = s;
      update_xi_block(ctx, t, ctx.xi_blocks()[1], rng);
      dx.row(i) = t.xi.tail(4).transpose();
    }
    const double zx = moment_z(dx, mx, Sx);
    o.pass = za < 3 && zx < 3;
    o.detail << " max |z| alpha " << fmt(za) << ", xi " << fmt(zx);
  });

  criterion(2, "tau2, w, phi, m, gamma updates match closed forms (KS < 0.02, 1e5 draws)", [](Outcome& o) {
    const HyperParams h;
    Rng rng(2);
    const int n = 100000;
    ChainState s;
    s.alpha = VectorXd::Constant(1, 0.9);
    s.gamma = VectorXd::Constant(1, 1.0);
    s.tau2 = VectorXd::Constant(1, 1.0);
    std::map<std::string, double> ks;

    std::vector<double> t2(n);
    for (auto& v : t2) {
      update_tau2(s, h, rng);
      v = s.tau2[0];
    }
    boost::math::inverse_gamma_distribution<double> ig_tau(h.a_tau + 0.5, h.b_tau + 0.81 / 2);
    ks["tau2"] = testing::ks_distance(t2, [&](double x) { return cdf(ig_tau, x); });

    ChainState g = s;
    g.gamma = VectorXd(6);
    g.gamma << 1, h.v0, 1, 1, h.v0, 1;
    std::vector<double> ws(n);
    for (auto& v : ws) {
      update_w(g, h, rng);
      v = g.w;
    }
    boost::math::beta_distribution<double> beta_w(h.a_w + 4, h.b_w + 2);
    ks["w"] = testing::ks_distance(ws, [&](double x) { return cdf(beta_w, x); });

    VectorXd y(5);
    y << 0.3, -0.2, 1.1, 0.4, -0.9;
    s.eta = VectorXd::Constant(5, 0.1);
    std::vector<double> ph(n);
    for (auto& v : ph) {
      update_phi(s, y, h, rng);
      v = s.phi;
    }
    boost::math::inverse_gamma_distribution<double> ig_phi(h.a_phi + 2.5,
                                                           h.b_phi + (y.array() - 0.1).square().sum() / 2);
    ks["phi"] = testing::ks_distance(ph, [&](double x) { return cdf(ig_phi, x); });

    // Two-point distributions: KS distance is |empirical - exact| probability.
    s.xi = VectorXd::Constant(1, 0.35);
    s.m = VectorXd::Ones(1);
    double plus = 0;
    for (int i = 0; i < n; ++i) {
      update_m(s, rng);
      plus += s.m[0] > 0;
    }
    ks["m"] = std::abs(plus / n - 1 / (1 + std::exp(-0.7)));

    s.alpha[0] = 0.015;
    s.tau2[0] = 0.02;
    s.w = 0.4;
    const double slab = 0.4 * std::exp(-0.015 * 0.015 / (2 * 0.02)) / std::sqrt(0.02);
    const double spike = 0.6 * std::exp(-0.015 * 0.015 / (2 * h.v0 * 0.02)) / std::sqrt(h.v0 * 0.02);
    double ones = 0;
    for (int i = 0; i < n; ++i) {
      update_gamma(s, h, rng);
      ones += s.gamma[0] == 1.0;
    }
    ks["gamma"] = std::abs(ones / n - slab / (slab + spike));

    for (const auto& [name, v] : ks) {
      o.pass = o.pass && v < 0.02;
      o.detail << " " << name << "=" << fmt(v, "%.4f");
    }
  });

  criterion(3, "likelihood off: tau2 ~ IG(5, 25), w ~ Beta(1, 1) (KS < 0.02)", [](Outcome& o) {
    const FullDesign d = testing::toy_design(20, {3, 4, 2, 5, 3}, 3);
    const VectorXd y = testing::toy_response(d, 3);
    auto run = [&](bool rescale, double* ks_tau, double* ks_w) {
      SamplerOptions opt;
      opt.use_likelihood = false;
      opt.rescale = rescale;
      const SamplerContext ctx(d, y, Family(), HyperParams{}, mcmc(4, 100000, 1000, 4, 3), opt);
      const auto chains = run_chains(ctx);
      std::vector<double> tau, w;
      for (const auto& c : chains) {
        for (Eigen::Index r = 0; r < c.tau2.rows(); ++r) tau.push_back(c.tau2(r, 0));
        for (Eigen::Index r = 0; r < c.w.size(); ++r) w.push_back(c.w[r]);
      }
      boost::math::inverse_gamma_distribution<double> ig(5, 25);
      boost::math::beta_distribution<double> be(1, 1);
      *ks_tau = testing::ks_distance(tau, [&](double x) { return cdf(ig, x); });
      *ks_w = testing::ks_distance(w, [&](double x) { return cdf(be, x); });
    };
    double kt = 0, kw = 0, kt_off = 0, kw_off = 0;
    run(true, &kt, &kw);
    run(false, &kt_off, &kw_off);
    o.pass = kt < 0.02 && kw < 0.02;
    o.detail << " KS tau2=" << fmt(kt, "%.4f") << " w=" << fmt(kw, "%.4f") << " (with the rescaling step; without it: tau2="
             << fmt(kt_off, "%.4f") << " w=" << fmt(kw_off, "%.4f") << ")";
  });

  criterion(4, "cubic P-spline, 20 functions, 2nd-order penalty, n=200: 8 <= d <= 12", [](Outcome& o) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u;
    VectorXd x(200);
    for (auto& v : x) v = u(rng);
    const int d = static_cast<int>(orthogonal_decomposition(bspline_penalized_basis(x, 20, 3, 2)).B.cols());
    o.pass = d >= 8 && d <= 12;
    o.detail << " d=" << d;
  });

  criterion(5, "blocks have Frobenius norm 0.5, are centered, interactions orthogonal to parents", [](Outcome& o) {
    const auto sim = simulate_additive(5, 200, 3);
    const FullDesign d = build_full_design(parse_model(kSimFormula, sim.data.schema()), sim.data);
    std::map<std::string, const DesignBlock*> by_label;
    for (const auto& b : d.blocks) by_label[b.label] = &b;
    double frob = 0, centered = 0, inter = 0;
    const VectorXd ones = VectorXd::Ones(d.n());
    for (const auto& b : d.blocks) {
      frob = std::max(frob, std::abs(b.B.norm() - 0.5));
      centered = std::max(centered, (ones.transpose() * b.B).cwiseAbs().maxCoeff());
      if (b.label.rfind("sm(", 0) == 0 && b.label.find(':') == std::string::npos) {
        const std::string lin = "lin(" + b.label.substr(3);
        if (by_label.count(lin)) centered = std::max(centered, (by_label[lin]->B.transpose() * b.B).cwiseAbs().maxCoeff());
      }
      const auto colon = b.label.find(':');
      if (colon != std::string::npos)
        for (const std::string parent : {b.label.substr(0, colon), b.label.substr(colon + 1)})
          inter = std::max(inter, (by_label.at(parent)->B.transpose() * b.B).cwiseAbs().maxCoeff());
    }
    o.pass = frob < 1e-8 && centered < 1e-8 && inter < 1e-8;
    o.detail << " max | |B|_F - 0.5 | = " << fmt(frob) << ", max |Z'B| = " << fmt(centered)
             << ", max |B_parent' B| = " << fmt(inter);
  });

  criterion(6, "simulation recovery over 5 seeds (>= 4 of 5)", [](Outcome& o) {
    const std::vector<std::string> signal = {"lin(sm1)", "sm(sm1)",  "lin(sm2)",        "sm(sm2)",       "fct(f)",
                                             "lin(lin2)", "lin(lin3)", "lin(sm2):fct(f)", "sm(sm2):fct(f)"};
    int good = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto sim = simulate_additive(seed, 200, 3);
      const FitResult fit = fit_model(parse_model(kSimFormula, sim.data.schema()), sim.data, {}, {},
                                      mcmc(3, 2500, 100, 5, seed));
      const VectorXd inc = inclusion_probabilities(fit);
      double min_signal = 1, max_noise = 0;
      for (int j = 0; j < fit.p(); ++j) {
        const std::string& l = fit.design.blocks[j].label;
        if (std::find(signal.begin(), signal.end(), l) != signal.end()) min_signal = std::min(min_signal, inc[j]);
        if (l.find("noise") != std::string::npos) max_noise = std::max(max_noise, inc[j]);
      }
      const auto top = model_table(fit).front();
      bool lin1_in_top = false;
      for (int j = 0; j < fit.p(); ++j)
        if (fit.design.blocks[j].label == "lin(lin1)") lin1_in_top = top.included[j];
      const bool ok = min_signal > 0.9 && max_noise < 0.3 && !lin1_in_top;
      good += ok;
      o.detail << "\n      seed " << seed << ": min P(signal)=" << fmt(min_signal, "%.3f")
               << " max P(noise)=" << fmt(max_noise, "%.3f") << " top model "
               << (lin1_in_top ? "includes" : "excludes") << " lin(lin1) (p=" << fmt(top.probability, "%.3f") << ")"
               << (ok ? " ok" : " not met");
    }
    o.pass = good >= 4;
    o.detail << "\n      " << good << "/5 seeds met all conditions";
  });

  criterion(7, "simulation formula: 37 model terms, coefficients within 15% of 257", [](Outcome& o) {
    const auto sim = simulate_additive(7, 200, 3);
    const ModelSpec spec = parse_model(kSimFormula, sim.data.schema());
    const FullDesign d = build_full_design(spec, sim.data);
    const int coefficients = d.q() + d.n_unpenalized();
    o.pass = spec.terms.size() == 37 && d.p() + 1 == 37 && std::abs(coefficients - 257) <= 0.15 * 257;
    o.detail << " terms=" << spec.terms.size() << " coefficients=" << coefficients;
  });

  const auto [train, test] = logistic_split();
  FitResult m0, m1;
  criterion(8, "binomial: posterior deviance < null deviance; held-out deviance < intercept-only", [&](Outcome& o) {
    m0 = fit_logistic(train, 2.5e-4);
    const DevianceSummary dev = deviance_summary(m0);
    const Prediction pr = predict(m0, test, {0.1, 0.9}, false);
    const VectorXd& yt = test.numeric("diabetes");
    const Family fam(FamilyKind::binomial);
    double model = 0, base = 0;
    const double pbar = train.numeric("diabetes").mean();
    for (Eigen::Index i = 0; i < yt.size(); ++i) {
      const double p = pr.response.mean[i];
      model += -2 * (yt[i] > 0.5 ? std::log(p) : std::log1p(-p));
      base += -2 * (yt[i] > 0.5 ? std::log(pbar) : std::log1p(-pbar));
    }
    o.pass = dev.mean_posterior_deviance < dev.null_deviance && model < base;
    const AcceptanceRates a = acceptance_rates(m0);
    o.detail << " null=" << fmt(dev.null_deviance, "%.1f") << " mean posterior=" << fmt(dev.mean_posterior_deviance, "%.1f")
             << "; test deviance " << fmt(model, "%.2f") << " vs intercept-only " << fmt(base, "%.2f")
             << "; P-IWLS acceptance alpha " << fmt(a.alpha, "%.2f") << " xi " << fmt(a.xi, "%.2f");
  });

  criterion(9, "v0 = 0.005 refit keeps lin(glucose) and lin(mass) selected at 0.9", [&](Outcome& o) {
    if (m0.chains.empty()) m0 = fit_logistic(train, 2.5e-4);
    m1 = fit_logistic(train, 0.005);
    bool same = true;
    for (const char* t : {"lin(glucose)", "lin(mass)"}) {
      const double a = inclusion_of(m0, t), b = inclusion_of(m1, t);
      same = same && (a > 0.9) && (b > 0.9);
      o.detail << " " << t << ": " << fmt(a, "%.3f") << " -> " << fmt(b, "%.3f");
    }
    o.pass = same;
  });

  criterion(10, "identical config and seed give byte-identical samples.csv", [](Outcome& o) {
    namespace fs = std::filesystem;
    RunConfig c = load_config(SSGAM_ADDITIVE_CONFIG);
    const fs::path root = fs::temp_directory_path() / "ssgam_acceptance_determinism";
    fs::remove_all(root);
    auto read = [](const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    c.output_dir = (root / "a").string();
    fit_command(c);
    c.output_dir = (root / "b").string();
    fit_command(c);
    const std::string a = read(root / "a" / "samples.csv"), b = read(root / "b" / "samples.csv");
    o.pass = !a.empty() && a == b;
    o.detail << " " << a.size() << " bytes each";
    fs::remove_all(root);
  });

  criterion(11, "R-hat is exactly 1 for duplicated chains and < 1.1 for the toy model with 4 chains", [](Outcome& o) {
    const FullDesign d = toy();
    const VectorXd y = testing::toy_response(d, 7);
    FitResult fit;
    fit.design = d;
    fit.y = y;
    fit.mcmc = mcmc(4, 2500, 100, 5, 11);
    const SamplerContext ctx(d, y, Family(), fit.hyper, fit.mcmc);
    fit.chains = run_chains(ctx);
    const RhatReport r = gelman_rubin(fit);
    FitResult dup = fit;
    for (auto& c : dup.chains) c = fit.chains[0];
    const RhatReport rd = gelman_rubin(dup);
    o.pass = rd.available && rd.values.minCoeff() == 1.0 && rd.max() == 1.0 && r.available && r.max() < 1.1;
    o.detail << " duplicated: " << fmt(rd.max(), "%.17g") << "; toy max R-hat " << fmt(r.max(), "%.4f") << " over "
             << r.names.size() << " parameters";
  });

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

#include "ssgam/simulate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace ssgam {

namespace {

using Eigen::VectorXd;

double beta_density(double x, double a, double b) {
  const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  return std::exp(log_norm + (a - 1) * std::log(x) + (b - 1) * std::log1p(-x));
}

double sd(const VectorXd& v) {
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

Factor integer_factor(const std::vector<int>& values, int n_levels) {
  Factor f;
  for (int l = 1; l <= n_levels; ++l) f.levels.push_back(std::to_string(l));
  for (int v : values) f.codes.push_back(v - 1);
  return f;
}

}  // namespace

SimulatedData simulate_additive(std::uint64_t seed, int n, double snr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif;
  std::normal_distribution<double> norm;
  std::student_t_distribution<double> t5(5.0);

  VectorXd sm1(n), sm2(n), noise1(n), noise2(n), noise3(n), eta(n), y(n);
  std::array<VectorXd, 3> lin = {VectorXd(n), VectorXd(n), VectorXd(n)};
  for (int i = 0; i < n; ++i) sm1[i] = unif(rng);
  for (int i = 0; i < n; ++i) sm2[i] = unif(rng);
  // Three consecutive runs of floor(n/3), recycled to length n.
  const int run = std::max(1, n / 3);
  std::vector<int> f(n);
  for (int i = 0; i < n; ++i) f[i] = (i % (3 * run)) / run + 1;
  for (auto& col : lin)
    for (int i = 0; i < n; ++i) col[i] = norm(rng);
  for (int i = 0; i < n; ++i) noise1[i] = sm1[i] + norm(rng);
  for (int i = 0; i < n; ++i) noise2[i] = unif(rng);
  for (int i = 0; i < n; ++i) noise3[i] = unif(rng);
  const int run4 = std::max(1, n / 4);
  std::vector<int> noise4(n);
  for (int i = 0; i < n; ++i) noise4[i] = (i % (4 * run4)) / run4 + 1;
  std::shuffle(noise4.begin(), noise4.end(), rng);

  for (int i = 0; i < n; ++i) {
    const double fsm1 = beta_density(sm1[i], 7, 3) / 2;
    const double ff = f[i] / 2.0;
    const double bump = f[i] == 1 ? -beta_density(sm2[i], 6, 4)
                        : f[i] == 2 ? beta_density(sm2[i], 6, 9)
                                    : beta_density(sm2[i], 9, 6);
    const double fsm2f = ff + ff * sm2[i] + bump / 2;
    eta[i] = fsm1 + fsm2f + 0.1 * lin[0][i] + 0.2 * lin[1][i] + 0.3 * lin[2][i];
  }
  const double scale = sd(eta) / snr;
  for (int i = 0; i < n; ++i) y[i] = eta[i] + scale * t5(rng);

  SimulatedData out;
  out.eta = eta;
  out.data.add_numeric("y", y);
  out.data.add_numeric("sm1", sm1);
  out.data.add_numeric("sm2", sm2);
  out.data.add_factor("f", integer_factor(f, 3));
  out.data.add_numeric("lin1", lin[0]);
  out.data.add_numeric("lin2", lin[1]);
  out.data.add_numeric("lin3", lin[2]);
  out.data.add_numeric("noise1", noise1);
  out.data.add_numeric("noise2", noise2);
  out.data.add_numeric("noise3", noise3);
  out.data.add_factor("noise4", integer_factor(noise4, 4));
  return out;
}

SimulatedData simulate_logistic(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> norm;
  std::uniform_real_distribution<double> unif;
  std::poisson_distribution<int> parity(3.5);
  std::gamma_distribution<double> age_excess(2.0, 6.0);

  VectorXd pregnant(n), glucose(n), pressure(n), mass(n), pedigree(n), age(n), eta(n), y(n);
  for (int i = 0; i < n; ++i) {
    pregnant[i] = parity(rng);
    glucose[i] = std::clamp(122 + 30 * norm(rng), 56.0, 199.0);
    pressure[i] = std::clamp(72 + 12 * norm(rng), 30.0, 120.0);
    mass[i] = std::clamp(33 + 7 * norm(rng), 18.0, 67.0);
    pedigree[i] = 0.42 * std::exp(0.6 * norm(rng));
    age[i] = std::round(21 + age_excess(rng));
  }
  for (int i = 0; i < n; ++i) {
    const double zg = (glucose[i] - 122) / 30;
    const double zm = (mass[i] - 33) / 7;
    // Risk rises with age up to the mid forties and then levels off.
    const double fa = 1.2 * std::tanh((age[i] - 33) / 8);
    eta[i] = -0.9 + 1.1 * zg + 0.8 * zm + fa;
    const double p = 1 / (1 + std::exp(-eta[i]));
    y[i] = unif(rng) < p ? 1.0 : 0.0;
  }

  SimulatedData out;
  out.eta = eta;
  out.data.add_numeric("diabetes", y);
  out.data.add_numeric("pregnant", pregnant);
  out.data.add_numeric("glucose", glucose);
  out.data.add_numeric("pressure", pressure);
  out.data.add_numeric("mass", mass);
  out.data.add_numeric("pedigree", pedigree);
  out.data.add_numeric("age", age);
  return out;
}

}  // namespace ssgam

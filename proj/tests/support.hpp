#pragma once

#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssgam/design.hpp"
#include "ssgam/sampler.hpp"

namespace testing {

// A hand-made design: intercept plus `dims.size()` random penalized blocks,
// each scaled to Frobenius norm 0.5.
inline ssgam::FullDesign toy_design(int n, const std::vector<int>& dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> norm;
  ssgam::FullDesign d;
  d.Xu = Eigen::MatrixXd::Ones(n, 1);
  d.xu_labels = {"u"};
  d.xu_pieces.push_back(ssgam::UnpenalizedPiece{});
  d.offset = Eigen::VectorXd::Zero(n);
  for (std::size_t j = 0; j < dims.size(); ++j) {
    ssgam::DesignBlock b;
    b.label = "t" + std::to_string(j + 1);
    b.B.resize(n, dims[j]);
    for (Eigen::Index i = 0; i < b.B.size(); ++i) b.B.data()[i] = norm(rng);
    b.B = ssgam::scale_frobenius(ssgam::center(b.B, d.Xu));
    b.d = dims[j];
    d.blocks.push_back(b);
  }
  return d;
}

inline Eigen::VectorXd toy_response(const ssgam::FullDesign& d, std::uint64_t seed, double noise = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> norm;
  Eigen::VectorXd y = Eigen::VectorXd::Constant(d.n(), 1.0);
  for (const auto& b : d.blocks) {
    Eigen::VectorXd beta(b.d);
    for (auto& v : beta) v = 2 * norm(rng);
    y += b.B * beta;
  }
  for (auto& v : y) v += noise * norm(rng);
  return y;
}

// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
template <class Cdf>
double ks_distance(std::vector<double> x, Cdf cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (static_cast<double>(i) + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace testing

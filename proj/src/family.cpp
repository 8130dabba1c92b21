#include "ssgam/family.hpp"

#include <cmath>
#include <numbers>

#include "ssgam/error.hpp"

namespace ssgam {

namespace {

// log(1 + exp(x)) without overflow.
double log1pexp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

double Family::response(double eta) const {
  switch (kind_) {
    case FamilyKind::gaussian: return eta;
    case FamilyKind::binomial: return eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
    case FamilyKind::poisson: return std::exp(eta);
  }
  return eta;
}

Eigen::VectorXd Family::response(const Eigen::VectorXd& eta) const {
  Eigen::VectorXd out(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) out[i] = response(eta[i]);
  return out;
}

double Family::variance(double eta) const {
  switch (kind_) {
    case FamilyKind::gaussian: return 1.0;
    case FamilyKind::binomial: {
      const double mu = response(eta);
      return mu * (1.0 - mu);
    }
    case FamilyKind::poisson: return std::exp(eta);
  }
  return 1.0;
}

double Family::log_likelihood(const Eigen::VectorXd& y, const Eigen::VectorXd& eta, double phi) const {
  double ll = 0;
  switch (kind_) {
    case FamilyKind::gaussian: {
      const double ss = (y - eta).squaredNorm();
      ll = -0.5 * static_cast<double>(y.size()) * std::log(2 * std::numbers::pi * phi) - ss / (2 * phi);
      break;
    }
    case FamilyKind::binomial:
      for (Eigen::Index i = 0; i < y.size(); ++i) ll += y[i] * eta[i] - log1pexp(eta[i]);
      break;
    case FamilyKind::poisson:
      for (Eigen::Index i = 0; i < y.size(); ++i) ll += y[i] * eta[i] - std::exp(eta[i]) - std::lgamma(y[i] + 1);
      break;
  }
  return ll;
}

void Family::validate(const Eigen::VectorXd& y) const {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y[i];
    if (!std::isfinite(v)) throw DataError("response has a missing or non-finite value at row " + std::to_string(i + 1));
    if (kind_ == FamilyKind::binomial && (v < 0 || v > 1))
      throw DataError("binomial models need responses between 0 and 1; row " + std::to_string(i + 1) + " has " +
                      std::to_string(v));
    if (kind_ == FamilyKind::poisson && (v < 0 || v != std::floor(v)))
      throw DataError("poisson models need nonnegative integer responses; row " + std::to_string(i + 1) + " has " +
                      std::to_string(v));
  }
}

}  // namespace ssgam

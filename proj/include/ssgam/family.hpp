#pragma once

#include <Eigen/Dense>

#include "ssgam/formula.hpp"

namespace ssgam {

// Exponential-family response with its canonical link: identity (gaussian),
// logit (binomial, single trials in [0, 1]) or log (poisson).
class Family {
 public:
  explicit Family(FamilyKind kind = FamilyKind::gaussian) : kind_(kind) {}

  FamilyKind kind() const { return kind_; }
  bool is_gaussian() const { return kind_ == FamilyKind::gaussian; }

  double response(double eta) const;  // h(eta)
  Eigen::VectorXd response(const Eigen::VectorXd& eta) const;
  // b''(theta): variance function at the mean, i.e. the IWLS weight for phi = 1.
  double variance(double eta) const;

  // log p(y | eta, phi); phi is ignored for binomial and poisson.
  double log_likelihood(const Eigen::VectorXd& y, const Eigen::VectorXd& eta, double phi) const;
  double deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& eta, double phi) const {
    return -2.0 * log_likelihood(y, eta, phi);
  }

  // Throws DataError for responses outside the family's support.
  void validate(const Eigen::VectorXd& y) const;

 private:
  FamilyKind kind_;
};

}  // namespace ssgam

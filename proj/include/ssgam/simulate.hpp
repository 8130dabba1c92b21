#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "ssgam/data.hpp"

namespace ssgam {

struct SimulatedData {
  DataTable data;       // response column "y" plus covariates
  Eigen::VectorXd eta;  // true linear predictor
};

// Additive Gaussian-response example with smooth, varying-coefficient and
// noise covariates: y, sm1, sm2, f, lin1..lin3, noise1..noise4.
// Errors are t_5 scaled to sd(eta) / snr.
SimulatedData simulate_additive(std::uint64_t seed, int n = 200, double snr = 3.0);

// Logistic-response data shaped like a diabetes screening study: pregnant,
// glucose, pressure, mass, pedigree, age and a 0/1 response "diabetes".
SimulatedData simulate_logistic(std::uint64_t seed, int n = 524);

}  // namespace ssgam

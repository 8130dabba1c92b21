#include <doctest.h>

#include <random>

#include "ssgam/design.hpp"
#include "ssgam/simulate.hpp"

using namespace ssgam;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd uniform_sample(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u;
  VectorXd x(n);
  for (auto& v : x) v = u(rng);
  return x;
}

const DesignBlock& block(const FullDesign& d, const std::string& label) {
  for (const auto& b : d.blocks)
    if (b.label == label) return b;
  FAIL("no block " << label);
  throw;
}

const char* kSimFormula = "y ~ (sm1 + sm2 + f + lin1)^2 + lin2 + lin3 + noise1 + noise2 + noise3 + noise4";

}  // namespace

TEST_CASE("cubic B-splines form a partition of unity with the textbook knot values") {
  const VectorXd x = uniform_sample(200, 1);
  const BSplineGrid g = make_bspline_grid(x, 20, 3);
  const MatrixXd B = g.eval(x);
  CHECK(B.cols() == 20);
  CHECK((B.rowwise().sum().array() - 1).abs().maxCoeff() < 1e-12);
  CHECK(B.minCoeff() >= 0);

  // At an interior knot of an equidistant cubic basis the nonzero values are 1/6, 2/3, 1/6.
  const auto knots = g.knots();
  VectorXd at(1);
  at << knots[8];
  const MatrixXd row = g.eval(at);
  std::vector<double> nonzero;
  for (Eigen::Index k = 0; k < row.cols(); ++k)
    if (row(0, k) > 1e-12) nonzero.push_back(row(0, k));
  REQUIRE(nonzero.size() == 3);
  CHECK(nonzero[0] == doctest::Approx(1.0 / 6));
  CHECK(nonzero[1] == doctest::Approx(2.0 / 3));
  CHECK(nonzero[2] == doctest::Approx(1.0 / 6));

  // Beyond the range each function continues along its edge tangent.
  VectorXd probe(4);
  probe << g.hi - 1e-6, g.hi, g.hi + 0.3, g.hi + 0.6;
  const MatrixXd e = g.eval(probe);
  const Eigen::RowVectorXd slope = (e.row(1) - e.row(0)) / 1e-6;
  CHECK((e.row(2) - e.row(1) - 0.3 * slope).cwiseAbs().maxCoeff() < 1e-3);
  CHECK((e.row(3) - 2 * e.row(2) + e.row(1)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((e.rowwise().sum().array() - 1).abs().maxCoeff() < 1e-9);
  VectorXd bad(1);
  bad << std::nan("");
  CHECK_THROWS_AS(g.eval(bad), DesignError);
}

TEST_CASE("second-order difference penalty") {
  MatrixXd D(3, 5);
  D << 1, -2, 1, 0, 0,
       0, 1, -2, 1, 0,
       0, 0, 1, -2, 1;
  CHECK((difference_penalty(5, 2) - D.transpose() * D).norm() < 1e-14);
  const MatrixXd N = penalty_nullspace(difference_penalty(10, 2));
  CHECK(N.cols() == 2);
  CHECK((difference_penalty(10, 2) * N).norm() < 1e-10);
}

TEST_CASE("orthogonal polynomials are orthonormal, centered and reproducible") {
  const VectorXd x = uniform_sample(50, 2);
  const MatrixXd P = poly_basis(x, 3);
  CHECK((P.transpose() * P - MatrixXd::Identity(3, 3)).norm() < 1e-10);
  CHECK(P.colwise().sum().cwiseAbs().maxCoeff() < 1e-10);
  CHECK((eval_poly(fit_poly(x, 3), x) - P).norm() < 1e-12);
}

TEST_CASE("sum-to-zero contrasts") {
  const MatrixXd C = sum_to_zero_contrasts({0, 1, 2, 2}, 3);
  MatrixXd expected(4, 2);
  expected << 1, 0, 0, 1, -1, -1, -1, -1;
  CHECK(C == expected);
}

TEST_CASE("a 20-function cubic P-spline keeps 8 to 12 columns") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const VectorXd x = uniform_sample(200, seed);
    const auto od = orthogonal_decomposition(bspline_penalized_basis(x, 20, 3, 2));
    CAPTURE(seed);
    CHECK(od.B.cols() >= 8);
    CHECK(od.B.cols() <= 12);
    CHECK(od.mass_retained >= 0.999);
    // Columns of B = U+ D+^{1/2} are mutually orthogonal.
    const MatrixXd G = od.B.transpose() * od.B;
    CHECK((G - MatrixXd(G.diagonal().asDiagonal())).norm() < 1e-8 * G.norm());
  }
}

TEST_CASE("dense and factored eigen routes span the same basis") {
  const VectorXd x = uniform_sample(120, 4);
  const PenalizedBasis pb = bspline_penalized_basis(x, 20, 3, 2);
  const auto dense = orthogonal_decomposition(pb, 0.999, EigenRoute::dense);
  const auto factored = orthogonal_decomposition(pb, 0.999, EigenRoute::factored);
  REQUIRE(dense.B.cols() == factored.B.cols());
  const MatrixXd a = dense.B * dense.B.transpose();
  const MatrixXd b = factored.B * factored.B.transpose();
  CHECK((a - b).norm() < 1e-6 * a.norm());
}

TEST_CASE("mixed-model decomposition") {
  const VectorXd x = uniform_sample(100, 5);
  const PenalizedBasis pb = bspline_penalized_basis(x, 12, 3, 2);
  const auto mm = mixed_model_decomposition(pb);
  CHECK(mm.Bu.cols() == 2);
  CHECK(mm.B.cols() == 10);
  // The penalized part gets an identity penalty.
  const MatrixXd L = mm.penalized_transform;
  CHECK((L.transpose() * pb.penalty * L - MatrixXd::Identity(10, 10)).norm() < 1e-8);
}

TEST_CASE("simulation design: size, scaling, centering") {
  const auto sim = simulate_additive(1, 200, 3);
  const ModelSpec spec = parse_model(kSimFormula, sim.data.schema());
  const FullDesign d = build_full_design(spec, sim.data);
  CHECK(d.p() + 1 == 37);
  const int coefficients = d.q() + d.n_unpenalized();
  CHECK(coefficients >= 0.85 * 257);
  CHECK(coefficients <= 1.15 * 257);
  CHECK(block(d, "sm(sm1)").d >= 8);
  CHECK(block(d, "sm(sm1)").d <= 12);
  CHECK(block(d, "sm(sm2):fct(f)").d == 13);

  const VectorXd ones = VectorXd::Ones(d.n());
  for (const auto& b : d.blocks) {
    CAPTURE(b.label);
    CHECK(std::abs(b.B.norm() - 0.5) < 1e-8);
    CHECK((ones.transpose() * b.B).cwiseAbs().maxCoeff() < 1e-8);
  }
  // sm() parts are orthogonal to their lin() counterparts.
  for (const char* cov : {"sm1", "sm2", "lin1", "noise2"}) {
    const std::string c(cov);
    CAPTURE(c);
    CHECK((block(d, "lin(" + c + ")").B.transpose() * block(d, "sm(" + c + ")").B).cwiseAbs().maxCoeff() < 1e-8);
  }
  // Interactions are orthogonal to both parents.
  for (const auto& b : d.blocks) {
    const auto colon = b.label.find(':');
    if (colon == std::string::npos) continue;
    for (const std::string parent : {b.label.substr(0, colon), b.label.substr(colon + 1)}) {
      CAPTURE(b.label);
      CAPTURE(parent);
      CHECK((block(d, parent).B.transpose() * b.B).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("mass 0.999 default and configurable truncation") {
  const auto sim = simulate_additive(2, 200, 3);
  const ModelSpec spec = parse_model("y ~ sm1", sim.data.schema());
  DesignOptions loose;
  loose.mass = 0.99;
  const int d_default = block(build_full_design(spec, sim.data), "sm(sm1)").d;
  const int d_loose = block(build_full_design(spec, sim.data, loose), "sm(sm1)").d;
  CHECK(d_loose < d_default);
}

TEST_CASE("evaluating the recipes on training rows reproduces the design") {
  const auto sim = simulate_additive(3, 150, 3);
  const ModelSpec spec = parse_model(kSimFormula, sim.data.schema());
  for (Decomposition dec : {Decomposition::orthogonal, Decomposition::mixed}) {
    DesignOptions opt;
    opt.decomposition = dec;
    const FullDesign d = build_full_design(spec, sim.data, opt);
    const EvaluatedDesign ev = evaluate_design(d, sim.data);
    CAPTURE(to_string(dec));
    CHECK((ev.Xu - d.Xu).cwiseAbs().maxCoeff() < 1e-10);
    for (int j = 0; j < d.p(); ++j) {
      CAPTURE(d.blocks[j].label);
      CHECK((ev.blocks[j] - d.blocks[j].B).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("new data: subsets evaluate row by row, unseen levels fail") {
  const auto sim = simulate_additive(4, 120, 3);
  const ModelSpec spec = parse_model("y ~ sm1 + f + sm1:f", sim.data.schema());
  const FullDesign d = build_full_design(spec, sim.data);
  const DataTable rows = sim.data.subset({5, 17, 99});
  const EvaluatedDesign ev = evaluate_design(d, rows);
  for (int j = 0; j < d.p(); ++j) {
    CHECK((ev.blocks[j].row(0) - d.blocks[j].B.row(5)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((ev.blocks[j].row(2) - d.blocks[j].B.row(99)).cwiseAbs().maxCoeff() < 1e-10);
  }
  DataTable bad;
  bad.add_numeric("sm1", VectorXd::Constant(1, 0.5));
  bad.add_factor("f", Factor{{0}, {"9"}});
  CHECK_THROWS(evaluate_design(d, bad));
  const EvaluatedDesign empty = evaluate_design(d, sim.data.subset({}));
  CHECK(empty.Xu.rows() == 0);
}

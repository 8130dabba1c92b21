#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssgam/data.hpp"
#include "ssgam/formula.hpp"

namespace ssgam {

// Eigenvalues below this fraction of the largest count as zero.
inline constexpr double kRankTolerance = 1e-10;

struct PenalizedBasis {
  Eigen::MatrixXd basis;    // n x d~
  Eigen::MatrixXd penalty;  // d~ x d~, symmetric PSD
  int nullspace_dim = 0;
};

// ---- raw bases -------------------------------------------------------------

// Three-term recurrence coefficients of discrete orthogonal polynomials, so
// the same basis can be evaluated at new points.
struct PolyCoefficients {
  std::vector<double> alpha;  // centering constants, one per degree
  std::vector<double> norm2;  // squared norms, norm2[0] = n
  int degree() const { return static_cast<int>(alpha.size()); }
};

PolyCoefficients fit_poly(const Eigen::VectorXd& x, int degree);
Eigen::MatrixXd eval_poly(const PolyCoefficients& coef, const Eigen::VectorXd& x);
// Orthonormal polynomials of degree 1..degree, orthogonal to the constant.
Eigen::MatrixXd poly_basis(const Eigen::VectorXd& x, int degree);

// Equidistant knot grid for a B-spline basis of fixed size.
struct BSplineGrid {
  double lo = 0, hi = 1;  // evaluation range (padded training range)
  int n_basis = 0;
  int degree = 3;

  std::vector<double> knots() const;
  // Linear extrapolation outside [lo, hi].
  Eigen::MatrixXd eval(const Eigen::VectorXd& x) const;
};

BSplineGrid make_bspline_grid(const Eigen::VectorXd& x, int n_basis, int degree);
Eigen::MatrixXd difference_matrix(int n, int order);
Eigen::MatrixXd difference_penalty(int n, int order);

PenalizedBasis bspline_penalized_basis(const Eigen::VectorXd& x, int n_basis, int spline_degree,
                                       int penalty_order);
// Sum-to-zero contrasts with identity penalty.
Eigen::MatrixXd sum_to_zero_contrasts(const std::vector<int>& codes, int n_levels);
PenalizedBasis fct_design(const Factor& f);
// Indicator coding with precision C^{-1}; identity when `correlation` is empty.
PenalizedBasis rnd_design(const Factor& f, const Eigen::MatrixXd& correlation = {});
// Indicator coding with graph-Laplacian precision diag(rowsums(N)) - N.
PenalizedBasis mrf_design(const Factor& f, const Eigen::MatrixXd& adjacency);

// Column (i * b + j) is column i of A times column j of B, elementwise.
Eigen::MatrixXd tensor_interaction(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// ---- reparameterizations ---------------------------------------------------

enum class Decomposition { orthogonal, mixed };
enum class EigenRoute { dense, factored };

std::string to_string(Decomposition d);
std::string to_string(EigenRoute r);

struct OrthogonalDecomposition {
  Eigen::MatrixXd B;            // U+ D+^{1/2}, truncated
  Eigen::MatrixXd U0;           // orthonormal basis of the unpenalized function space
  Eigen::MatrixXd transform;    // B = basis * transform
  Eigen::VectorXd eigenvalues;  // all positive eigenvalues, descending
  double mass_retained = 1.0;
};

OrthogonalDecomposition orthogonal_decomposition(const PenalizedBasis& pb, double mass = 0.999,
                                                 EigenRoute route = EigenRoute::dense);

struct MixedModelDecomposition {
  Eigen::MatrixXd Bu;                     // basis * nullspace
  Eigen::MatrixXd B;                      // basis * penalized_transform
  Eigen::MatrixXd nullspace;              // Lambda_0
  Eigen::MatrixXd penalized_transform;    // L (L'L)^{-1} = Lambda_+ Gamma_+^{-1/2}
};

MixedModelDecomposition mixed_model_decomposition(const PenalizedBasis& pb);

// Orthonormal basis of the penalty nullspace (d~ x n_P).
Eigen::MatrixXd penalty_nullspace(const Eigen::MatrixXd& penalty);

struct Centering {
  Eigen::MatrixXd centered;
  std::vector<int> kept;        // independent columns of Z used
  Eigen::MatrixXd coefficients; // centered = B - Z[:, kept] * coefficients
};

Centering center_with_coefficients(const Eigen::MatrixXd& b, const Eigen::MatrixXd& z);
// Projects the columns of B onto the orthogonal complement of span(Z).
// Returns B unchanged when Z has no columns.
Eigen::MatrixXd center(const Eigen::MatrixXd& b, const Eigen::MatrixXd& z);

Eigen::MatrixXd scale_frobenius(const Eigen::MatrixXd& b);

// ---- full design -----------------------------------------------------------

struct LabeledMatrix {
  std::vector<std::string> labels;
  Eigen::MatrixXd values;
};

struct DesignOptions {
  Decomposition decomposition = Decomposition::orthogonal;
  EigenRoute eigen_route = EigenRoute::dense;
  double mass = 0.999;
  std::string offset_column;
  // Named correlation (rnd) and adjacency (mrf) matrices referenced by terms.
  std::map<std::string, LabeledMatrix> matrices;
};

// Everything needed to evaluate a main-effect basis on new rows.
struct RawBasisRecipe {
  TermKind kind = TermKind::lin;
  std::vector<std::string> covariates;
  PolyCoefficients poly;                 // lin
  std::vector<BSplineGrid> grids;        // sm (1), srf (2)
  std::vector<std::string> levels;       // fct, rnd, mrf: training levels / regions
  std::vector<int> level_columns;        // rnd/mrf: column of each factor level

  Eigen::MatrixXd eval(const DataTable& data) const;
};

struct BlockLineage {
  std::string kind;            // "sm", "lin", ... or "interaction"
  std::string decomposition;   // "orthogonal" or "mixed"
  double mass_retained = 1.0;
};

// How a block is rebuilt from data:
//   raw  = basis(data)                         (main effects)
//        = row tensor of parent blocks         (interactions)
//   Z    = [1, raw * nullspace]                (main effects)
//        = [1, parent blocks...]               (interactions)
//   B    = raw * transform - Z[:, z_kept] * center_coef
struct BlockRecipe {
  RawBasisRecipe raw;
  std::vector<BlockRecipe> parents;  // interactions only
  Eigen::MatrixXd nullspace;
  Eigen::MatrixXd transform;
  std::vector<int> z_kept;
  Eigen::MatrixXd center_coef;
};

struct DesignBlock {
  std::string label;
  Eigen::MatrixXd B;
  int d = 0;
  BlockLineage lineage;
  std::vector<std::string> covariates;
  BlockRecipe recipe;
};

// An unpenalized column group of X_u.
struct UnpenalizedPiece {
  std::string label;        // "u" for the intercept
  enum class Kind { intercept, numeric, factor, nullspace } kind = Kind::intercept;
  std::string covariate;    // numeric / factor
  std::vector<std::string> levels;
  RawBasisRecipe raw;       // nullspace remainders
  Eigen::MatrixXd transform;
  std::vector<int> z_kept;
  Eigen::MatrixXd center_coef;
  int columns = 1;
};

struct FullDesign {
  Eigen::MatrixXd Xu;
  std::vector<std::string> xu_labels;  // one per column
  std::vector<UnpenalizedPiece> xu_pieces;
  std::vector<DesignBlock> blocks;
  Eigen::VectorXd offset;
  DesignOptions options;

  int n() const { return static_cast<int>(Xu.rows()); }
  int p() const { return static_cast<int>(blocks.size()); }
  int q() const;
  int n_unpenalized() const { return static_cast<int>(Xu.cols()); }
  // [X_u B_1 ... B_p]
  Eigen::MatrixXd X() const;
  std::vector<int> block_offsets() const;  // start of each block within the penalized columns
  std::vector<std::string> covariates() const;
};

// Design matrices evaluated on new rows with the training transformations.
struct EvaluatedDesign {
  Eigen::MatrixXd Xu;
  std::vector<Eigen::MatrixXd> blocks;
  Eigen::VectorXd offset;
};

FullDesign build_full_design(const ModelSpec& spec, const DataTable& data, const DesignOptions& options = {});
EvaluatedDesign evaluate_design(const FullDesign& design, const DataTable& data);
// One block or a subset of X_u pieces on new rows; `data` needs only the
// covariates involved.
Eigen::MatrixXd evaluate_block(const DesignBlock& block, const DataTable& data);
Eigen::MatrixXd evaluate_unpenalized(const std::vector<UnpenalizedPiece>& pieces, const DataTable& data);

// Factor view of a column; numeric columns are coded by their distinct values.
Factor factor_view(const DataTable& data, const std::string& column);

}  // namespace ssgam

#include "ssgam/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace ssgam {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void require_finite(const VectorXd& x, const std::string& name) {
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]))
      throw DesignError("missing or non-finite value in column '" + name + "' at row " + std::to_string(i + 1));
}

struct SymmetricSpectrum {
  VectorXd values;   // descending
  MatrixXd vectors;
};

SymmetricSpectrum eigen_descending(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw DesignError("symmetric eigendecomposition failed");
  const Eigen::Index k = m.rows();
  SymmetricSpectrum s{es.eigenvalues().reverse(), es.eigenvectors().rowwise().reverse()};
  (void)k;
  return s;
}

// Splits the spectrum of a symmetric PSD matrix into positive and null parts.
struct PenaltySplit {
  MatrixXd positive_vectors;
  VectorXd positive_values;
  MatrixXd null_vectors;
};

PenaltySplit split_penalty(const MatrixXd& penalty) {
  const double asym = (penalty - penalty.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * std::max(1.0, penalty.cwiseAbs().maxCoeff()))
    throw DesignError("penalty matrix is not symmetric");
  SymmetricSpectrum s = eigen_descending(0.5 * (penalty + penalty.transpose()));
  const double top = s.values.size() ? s.values[0] : 0.0;
  if (top <= 0) throw DesignError("penalty matrix has no positive eigenvalues");
  if (s.values[s.values.size() - 1] < -1e-8 * top) throw DesignError("penalty matrix is indefinite");
  Eigen::Index r = 0;
  while (r < s.values.size() && s.values[r] > kRankTolerance * top) ++r;
  return {s.vectors.leftCols(r), s.values.head(r), s.vectors.rightCols(s.values.size() - r)};
}

// Orthonormal basis for the column space of m (rank-revealing).
MatrixXd orthonormal_range(const MatrixXd& m) {
  if (m.cols() == 0) return MatrixXd(m.rows(), 0);
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeThinU);
  const VectorXd& sv = svd.singularValues();
  Eigen::Index r = 0;
  while (r < sv.size() && sv[r] * sv[r] > kRankTolerance * sv[0] * sv[0]) ++r;
  return svd.matrixU().leftCols(r);
}

// Right singular vectors spanning the numerical row space of m.
MatrixXd rank_rotation(const MatrixXd& m, Eigen::Index* rank) {
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  Eigen::Index r = 0;
  while (r < sv.size() && sv[0] > 0 && sv[r] * sv[r] > kRankTolerance * sv[0] * sv[0]) ++r;
  *rank = r;
  return svd.matrixV().leftCols(r);
}

MatrixXd hcat(const std::vector<MatrixXd>& parts, Eigen::Index rows) {
  Eigen::Index cols = 0;
  for (const auto& p : parts) cols += p.cols();
  MatrixXd out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p;
    c += p.cols();
  }
  return out;
}

MatrixXd select_columns(const MatrixXd& m, const std::vector<int>& cols) {
  MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(j) = m.col(cols[j]);
  return out;
}

std::string format_level(double v) {
  std::ostringstream os;
  os.precision(15);
  os << v;
  return os.str();
}

}  // namespace

std::string to_string(Decomposition d) { return d == Decomposition::orthogonal ? "orthogonal" : "mixed"; }
std::string to_string(EigenRoute r) { return r == EigenRoute::dense ? "dense" : "factored"; }

// ---- polynomials ---------------------------------------------------------------

PolyCoefficients fit_poly(const VectorXd& x, int degree) {
  if (degree < 1) throw DesignError("polynomial degree must be at least 1");
  require_finite(x, "lin()");
  std::set<double> distinct(x.data(), x.data() + x.size());
  if (static_cast<int>(distinct.size()) < degree + 1)
    throw DesignError("lin() of degree " + std::to_string(degree) + " needs at least " + std::to_string(degree + 1) +
                      " distinct values, got " + std::to_string(distinct.size()));
  const double n = static_cast<double>(x.size());
  PolyCoefficients c;
  c.norm2.push_back(n);
  VectorXd prev = VectorXd::Ones(x.size());
  c.alpha.push_back(x.mean());
  VectorXd cur = x.array() - c.alpha[0];
  for (int k = 1; k <= degree; ++k) {
    const double nk = cur.squaredNorm();
    c.norm2.push_back(nk);
    if (k == degree) break;
    c.alpha.push_back((x.array() * cur.array().square()).sum() / nk);
    VectorXd next = (x.array() - c.alpha[k]) * cur.array() - (nk / c.norm2[k - 1]) * prev.array();
    prev = std::move(cur);
    cur = std::move(next);
  }
  return c;
}

MatrixXd eval_poly(const PolyCoefficients& coef, const VectorXd& x) {
  const int degree = coef.degree();
  MatrixXd out(x.size(), degree);
  VectorXd prev = VectorXd::Ones(x.size());
  VectorXd cur = x.array() - coef.alpha[0];
  for (int k = 1; k <= degree; ++k) {
    out.col(k - 1) = cur / std::sqrt(coef.norm2[k]);
    if (k == degree) break;
    VectorXd next = (x.array() - coef.alpha[k]) * cur.array() - (coef.norm2[k] / coef.norm2[k - 1]) * prev.array();
    prev = std::move(cur);
    cur = std::move(next);
  }
  return out;
}

MatrixXd poly_basis(const VectorXd& x, int degree) { return eval_poly(fit_poly(x, degree), x); }

// ---- B-splines -------------------------------------------------------------------

std::vector<double> BSplineGrid::knots() const {
  const double h = (hi - lo) / (n_basis - degree);
  std::vector<double> t(n_basis + degree + 1);
  for (int i = 0; i < static_cast<int>(t.size()); ++i) t[i] = lo + (i - degree) * h;
  return t;
}

MatrixXd BSplineGrid::eval(const VectorXd& x) const {
  const std::vector<double> t = knots();
  const double h = (hi - lo) / (n_basis - degree);
  MatrixXd out = MatrixXd::Zero(x.size(), n_basis);
  std::vector<double> left(degree + 1), right(degree + 1), N(degree + 1), lower(degree + 1);
  for (Eigen::Index r = 0; r < x.size(); ++r) {
    const double v = x[r];
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "non-finite value " << v << " in a spline covariate";
      throw DesignError(os.str());
    }
    // Outside the range the basis continues linearly from the nearest edge.
    const double u = std::clamp(v, lo, hi);
    int span = degree + static_cast<int>(std::floor((u - lo) / h));
    span = std::clamp(span, degree, n_basis - 1);
    N[0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
      if (j == degree) lower = N;
      left[j] = u - t[span + 1 - j];
      right[j] = t[span + j] - u;
      double saved = 0.0;
      for (int k = 0; k < j; ++k) {
        const double tmp = N[k] / (right[k + 1] + left[j - k]);
        N[k] = saved + right[k + 1] * tmp;
        saved = left[j - k] * tmp;
      }
      N[j] = saved;
    }
    for (int j = 0; j <= degree; ++j) out(r, span - degree + j) = N[j];
    if (v != u && degree > 0) {
      // lower[k] is the degree-1 function with index span - degree + 1 + k.
      for (int j = 0; j <= degree; ++j) {
        const double a = j >= 1 ? lower[j - 1] : 0.0;
        const double b = j < degree ? lower[j] : 0.0;
        out(r, span - degree + j) += (v - u) / h * (a - b);
      }
    }
  }
  return out;
}

BSplineGrid make_bspline_grid(const VectorXd& x, int n_basis, int degree) {
  if (x.size() == 0) throw DesignError("cannot build a spline basis on zero observations");
  require_finite(x, "sm()");
  if (degree < 0) throw DesignError("spline degree must be nonnegative");
  if (n_basis < degree + 1)
    throw DesignError("a degree-" + std::to_string(degree) + " B-spline basis needs at least " +
                      std::to_string(degree + 1) + " functions");
  const double mn = x.minCoeff(), mx = x.maxCoeff();
  if (!(mx > mn)) throw DesignError("degenerate covariate: all values are equal");
  const double eps = 1e-6 * (mx - mn);
  return BSplineGrid{mn - eps, mx + eps, n_basis, degree};
}

MatrixXd difference_matrix(int n, int order) {
  MatrixXd d = MatrixXd::Identity(n, n);
  for (int k = 0; k < order; ++k) {
    const Eigen::Index rows = d.rows() - 1;
    d = (d.bottomRows(rows) - d.topRows(rows)).eval();
  }
  return d;
}

MatrixXd difference_penalty(int n, int order) {
  const MatrixXd d = difference_matrix(n, order);
  return d.transpose() * d;
}

PenalizedBasis bspline_penalized_basis(const VectorXd& x, int n_basis, int spline_degree, int penalty_order) {
  if (penalty_order < 1) throw DesignError("difference penalty order must be at least 1");
  if (n_basis < spline_degree + 1 + penalty_order)
    throw DesignError("n_basis = " + std::to_string(n_basis) + " is too small: need at least spline degree + 1 + "
                      "penalty order = " + std::to_string(spline_degree + 1 + penalty_order));
  const BSplineGrid grid = make_bspline_grid(x, n_basis, spline_degree);
  return {grid.eval(x), difference_penalty(n_basis, penalty_order), penalty_order};
}

// ---- factors ---------------------------------------------------------------------

MatrixXd sum_to_zero_contrasts(const std::vector<int>& codes, int n_levels) {
  MatrixXd out = MatrixXd::Zero(static_cast<Eigen::Index>(codes.size()), n_levels - 1);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] == n_levels - 1) out.row(i).setConstant(-1.0);
    else out(i, codes[i]) = 1.0;
  }
  return out;
}

namespace {

void require_levels_observed(const Factor& f, const char* what) {
  if (f.n_levels() < 2) throw DesignError(std::string(what) + " needs a factor with at least 2 levels");
  std::vector<int> count(f.n_levels(), 0);
  for (int c : f.codes) ++count[c];
  for (int l = 0; l < f.n_levels(); ++l)
    if (count[l] == 0) throw DesignError(std::string(what) + ": level '" + f.levels[l] + "' is never observed");
}

MatrixXd indicators(const std::vector<int>& codes, const std::vector<int>& level_columns, int n_columns) {
  MatrixXd out = MatrixXd::Zero(static_cast<Eigen::Index>(codes.size()), n_columns);
  for (std::size_t i = 0; i < codes.size(); ++i) out(i, level_columns[codes[i]]) = 1.0;
  return out;
}

std::vector<int> identity_columns(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

PenalizedBasis fct_design(const Factor& f) {
  require_levels_observed(f, "fct()");
  return {sum_to_zero_contrasts(f.codes, f.n_levels()), MatrixXd::Identity(f.n_levels() - 1, f.n_levels() - 1), 0};
}

PenalizedBasis rnd_design(const Factor& f, const MatrixXd& correlation) {
  if (f.n_levels() < 1) throw DesignError("rnd() needs at least one level");
  const int L = f.n_levels();
  MatrixXd precision = MatrixXd::Identity(L, L);
  if (correlation.size() != 0) {
    if (correlation.rows() != L || correlation.cols() != L)
      throw DesignError("rnd() correlation matrix must be " + std::to_string(L) + " x " + std::to_string(L));
    if ((correlation - correlation.transpose()).cwiseAbs().maxCoeff() > 1e-10)
      throw DesignError("rnd() correlation matrix is not symmetric");
    Eigen::LLT<MatrixXd> llt(correlation);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(correlation, Eigen::EigenvaluesOnly);
    if (llt.info() != Eigen::Success || es.eigenvalues().minCoeff() <= kRankTolerance * es.eigenvalues().maxCoeff())
      throw DesignError("rnd() correlation matrix is not positive definite");
    precision = llt.solve(MatrixXd::Identity(L, L));
    precision = 0.5 * (precision + precision.transpose()).eval();
  }
  return {indicators(f.codes, identity_columns(L), L), precision, 0};
}

PenalizedBasis mrf_design(const Factor& f, const MatrixXd& adjacency) {
  const int R = static_cast<int>(adjacency.rows());
  if (adjacency.cols() != R) throw DesignError("mrf() adjacency matrix must be square");
  if (f.n_levels() != R)
    throw DesignError("mrf() region mismatch: factor has " + std::to_string(f.n_levels()) +
                      " levels but the adjacency matrix has " + std::to_string(R) + " regions");
  if (R < 2) throw DesignError("mrf() needs at least 2 regions");
  if ((adjacency - adjacency.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw DesignError("mrf() adjacency matrix is not symmetric");
  if (adjacency.minCoeff() < 0) throw DesignError("mrf() adjacency matrix has negative weights");
  if (adjacency.diagonal().cwiseAbs().maxCoeff() != 0) throw DesignError("mrf() adjacency matrix has a nonzero diagonal");
  std::vector<bool> seen(R, false);
  std::queue<int> todo;
  todo.push(0);
  seen[0] = true;
  int reached = 1;
  while (!todo.empty()) {
    const int r = todo.front();
    todo.pop();
    for (int s = 0; s < R; ++s)
      if (adjacency(r, s) > 0 && !seen[s]) {
        seen[s] = true;
        ++reached;
        todo.push(s);
      }
  }
  if (reached != R)
    throw DesignError("mrf() neighborhood graph is disconnected (" + std::to_string(reached) + " of " +
                      std::to_string(R) + " regions reachable)");
  MatrixXd precision = -adjacency;
  precision.diagonal() = adjacency.rowwise().sum();
  return {indicators(f.codes, identity_columns(R), R), precision, 1};
}

MatrixXd tensor_interaction(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows())
    throw DesignError("tensor_interaction: row counts differ (" + std::to_string(a.rows()) + " vs " +
                      std::to_string(b.rows()) + ")");
  MatrixXd out(a.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) out.col(i * b.cols() + j) = a.col(i).cwiseProduct(b.col(j));
  return out;
}

// ---- decompositions ----------------------------------------------------------------

MatrixXd penalty_nullspace(const MatrixXd& penalty) { return split_penalty(penalty).null_vectors; }

OrthogonalDecomposition orthogonal_decomposition(const PenalizedBasis& pb, double mass, EigenRoute route) {
  if (!(mass > 0 && mass <= 1)) throw DesignError("retained eigenvalue mass must lie in (0, 1]");
  const MatrixXd& Bt = pb.basis;
  if (Bt.cols() != pb.penalty.rows()) throw DesignError("basis and penalty dimensions differ");
  const PenaltySplit split = split_penalty(pb.penalty);
  // Factor of the penalty pseudo-inverse: P^- = F F'.
  const MatrixXd F = split.positive_vectors * split.positive_values.cwiseSqrt().cwiseInverse().asDiagonal();
  const MatrixXd M = Bt * F;

  VectorXd values;
  MatrixXd transform;
  if (route == EigenRoute::dense) {
    SymmetricSpectrum s = eigen_descending(M * M.transpose());
    const double top = s.values.size() ? s.values[0] : 0.0;
    Eigen::Index r = 0;
    while (top > 0 && r < s.values.size() && r < M.cols() && s.values[r] > kRankTolerance * top) ++r;
    values = s.values.head(r);
    // B = U+ D+^{1/2} = Bt P^- Bt' U+ D+^{-1/2}
    transform = F * (M.transpose() * s.vectors.leftCols(r)) * values.cwiseSqrt().cwiseInverse().asDiagonal();
  } else {
    Eigen::BDCSVD<MatrixXd> svd(M, Eigen::ComputeThinV);
    const VectorXd sv = svd.singularValues();
    Eigen::Index r = 0;
    while (r < sv.size() && sv[0] > 0 && sv[r] * sv[r] > kRankTolerance * sv[0] * sv[0]) ++r;
    values = sv.head(r).array().square();
    transform = F * svd.matrixV().leftCols(r);
  }
  if (values.size() == 0) throw DesignError("orthogonal decomposition: all eigenvalues are numerically zero");

  const double total = values.sum();
  Eigen::Index d = 0;
  double acc = 0;
  while (d < values.size()) {
    acc += values[d++];
    if (acc >= mass * total * (1 - 1e-12)) break;
  }
  OrthogonalDecomposition out;
  out.eigenvalues = values;
  out.transform = transform.leftCols(d);
  out.B = Bt * out.transform;
  out.mass_retained = acc / total;
  out.U0 = orthonormal_range(Bt * split.null_vectors);
  return out;
}

MixedModelDecomposition mixed_model_decomposition(const PenalizedBasis& pb) {
  if (pb.basis.cols() != pb.penalty.rows()) throw DesignError("basis and penalty dimensions differ");
  const PenaltySplit split = split_penalty(pb.penalty);
  MixedModelDecomposition out;
  out.nullspace = split.null_vectors;
  out.penalized_transform = split.positive_vectors * split.positive_values.cwiseSqrt().cwiseInverse().asDiagonal();
  out.Bu = pb.basis * out.nullspace;
  out.B = pb.basis * out.penalized_transform;
  return out;
}

Centering center_with_coefficients(const MatrixXd& b, const MatrixXd& z) {
  Centering c;
  if (z.cols() == 0) {
    c.centered = b;
    c.coefficients = MatrixXd::Zero(0, b.cols());
    return c;
  }
  if (z.rows() != b.rows()) throw DesignError("center: Z and B have different row counts");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(z);
  qr.setThreshold(std::sqrt(kRankTolerance));
  const Eigen::Index rank = qr.rank();
  for (Eigen::Index k = 0; k < rank; ++k) c.kept.push_back(qr.colsPermutation().indices()[k]);
  std::sort(c.kept.begin(), c.kept.end());
  const MatrixXd zk = select_columns(z, c.kept);
  Eigen::HouseholderQR<MatrixXd> qk(zk);
  const MatrixXd Q = qk.householderQ() * MatrixXd::Identity(zk.rows(), zk.cols());
  const MatrixXd R = qk.matrixQR().topRows(zk.cols()).triangularView<Eigen::Upper>();
  c.coefficients = R.triangularView<Eigen::Upper>().solve(Q.transpose() * b);
  c.centered = b - zk * c.coefficients;
  return c;
}

MatrixXd center(const MatrixXd& b, const MatrixXd& z) { return center_with_coefficients(b, z).centered; }

MatrixXd scale_frobenius(const MatrixXd& b) {
  const double norm = b.norm();
  if (!(norm > 0)) throw DesignError("cannot scale a zero matrix to unit Frobenius norm");
  return b * (0.5 / norm);
}

// ---- evaluation on data -----------------------------------------------------------

Factor factor_view(const DataTable& data, const std::string& column) {
  if (data.type(column) == ColumnType::factor) return data.factor(column);
  const VectorXd& v = data.numeric(column);
  require_finite(v, column);
  std::vector<std::string> labels(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) labels[i] = format_level(v[i]);
  return make_factor(labels);
}

namespace {

std::vector<int> codes_against(const DataTable& data, const std::string& column, const std::vector<std::string>& levels) {
  const Factor f = factor_view(data, column);
  std::vector<std::string> labels(f.codes.size());
  for (std::size_t i = 0; i < f.codes.size(); ++i) labels[i] = f.levels[f.codes[i]];
  return Factor{{}, levels}.encode(labels, column);
}

}  // namespace

MatrixXd RawBasisRecipe::eval(const DataTable& data) const {
  switch (kind) {
    case TermKind::lin: return eval_poly(poly, data.numeric(covariates[0]));
    case TermKind::sm: return grids[0].eval(data.numeric(covariates[0]));
    case TermKind::srf:
      return tensor_interaction(grids[0].eval(data.numeric(covariates[0])), grids[1].eval(data.numeric(covariates[1])));
    case TermKind::fct:
      return sum_to_zero_contrasts(codes_against(data, covariates[0], levels), static_cast<int>(levels.size()));
    case TermKind::rnd:
    case TermKind::mrf: {
      const int cols = level_columns.empty() ? 0 : *std::max_element(level_columns.begin(), level_columns.end()) + 1;
      return indicators(codes_against(data, covariates[0], levels), level_columns, cols);
    }
    case TermKind::u: break;
  }
  throw DesignError("no raw basis for u() terms");
}

namespace {

MatrixXd eval_recipe(const BlockRecipe& r, const DataTable& data, Eigen::Index n) {
  MatrixXd raw;
  std::vector<MatrixXd> zparts = {MatrixXd::Ones(n, 1)};
  if (r.parents.empty()) {
    raw = r.raw.eval(data);
    if (r.nullspace.cols() > 0) zparts.push_back(raw * r.nullspace);
  } else {
    std::vector<MatrixXd> parent_blocks;
    for (const auto& p : r.parents) parent_blocks.push_back(eval_recipe(p, data, n));
    raw = parent_blocks[0];
    for (std::size_t i = 1; i < parent_blocks.size(); ++i) raw = tensor_interaction(raw, parent_blocks[i]);
    zparts.insert(zparts.end(), parent_blocks.begin(), parent_blocks.end());
  }
  MatrixXd out = raw * r.transform;
  if (!r.z_kept.empty()) out -= select_columns(hcat(zparts, n), r.z_kept) * r.center_coef;
  return out;
}

// Centers, drops numerically dependent directions and scales; folds all of it
// into the recipe so evaluation on the training data reproduces the block.
void finish_recipe(BlockRecipe& r, const MatrixXd& raw, const MatrixXd& z, const std::string& label) {
  const MatrixXd decomposed = raw * r.transform;
  Centering c = center_with_coefficients(decomposed, z);
  Eigen::Index rank = 0;
  const MatrixXd rot = rank_rotation(c.centered, &rank);
  if (rank == 0) throw DesignError("term " + label + " has an empty penalized part after centering");
  MatrixXd transform = r.transform;
  MatrixXd coef = c.coefficients;
  if (rank < c.centered.cols()) {
    transform = transform * rot;
    coef = coef * rot;
  }
  const MatrixXd centered = (rank < c.centered.cols()) ? MatrixXd(c.centered * rot) : c.centered;
  const double s = 0.5 / centered.norm();
  r.transform = transform * s;
  r.center_coef = coef * s;
  r.z_kept = c.kept;
}

std::string join_kinds(const TermSpec& t) {
  std::string s;
  for (const auto& p : t.parts) s += (s.empty() ? "" : ":") + to_string(p.kind);
  return s;
}

class DesignBuilder {
 public:
  DesignBuilder(const ModelSpec& spec, const DataTable& data, const DesignOptions& options)
      : spec_(spec), data_(data), options_(options), n_(static_cast<Eigen::Index>(data.n_rows())) {}

  FullDesign build() {
    if (n_ == 0) throw DesignError("no observations");
    FullDesign fd;
    fd.options = options_;
    fd.offset = VectorXd::Zero(n_);
    if (!options_.offset_column.empty()) {
      fd.offset = data_.numeric(options_.offset_column);
      require_finite(fd.offset, options_.offset_column);
    }
    for (const auto& name : data_.names())
      if (data_.type(name) == ColumnType::numeric) require_finite(data_.numeric(name), name);

    UnpenalizedPiece intercept;
    intercept.label = "u";
    intercept.kind = UnpenalizedPiece::Kind::intercept;
    pieces_.push_back(intercept);

    for (const auto& term : spec_.terms) {
      if (term.is_intercept()) continue;
      if (term.kind() == TermKind::u && !term.is_interaction()) {
        add_explicit_unpenalized(term);
        continue;
      }
      DesignBlock block;
      block.label = term.label;
      block.covariates = term.covariates;
      block.lineage.decomposition = to_string(options_.decomposition);
      if (term.is_interaction()) {
        block.lineage.kind = join_kinds(term);
        block.recipe = interaction_recipe(term, &block.lineage.mass_retained);
      } else {
        block.lineage.kind = to_string(term.kind());
        block.recipe = main_recipe(term.parts[0], true, &block.lineage.mass_retained);
      }
      block.B = eval_recipe(block.recipe, data_, n_);
      block.d = static_cast<int>(block.B.cols());
      fd.blocks.push_back(std::move(block));
    }
    fd.xu_pieces = pieces_;
    fd.Xu = evaluate_unpenalized(pieces_, data_, n_);
    for (const auto& p : pieces_) {
      if (p.kind == UnpenalizedPiece::Kind::intercept) fd.xu_labels.push_back("u");
      else if (p.columns == 1) fd.xu_labels.push_back(p.label);
      else
        for (int k = 0; k < p.columns; ++k) fd.xu_labels.push_back(p.label + "[" + std::to_string(k + 1) + "]");
    }
    return fd;
  }

  static MatrixXd evaluate_unpenalized(const std::vector<UnpenalizedPiece>& pieces, const DataTable& data,
                                       Eigen::Index n) {
    std::vector<MatrixXd> cols;
    for (const auto& p : pieces) {
      switch (p.kind) {
        case UnpenalizedPiece::Kind::intercept: cols.push_back(MatrixXd::Ones(n, 1)); break;
        case UnpenalizedPiece::Kind::numeric: cols.push_back(data.numeric(p.covariate)); break;
        case UnpenalizedPiece::Kind::factor: {
          const std::vector<int> codes = codes_against(data, p.covariate, p.levels);
          MatrixXd m = MatrixXd::Zero(n, static_cast<Eigen::Index>(p.levels.size()) - 1);
          for (Eigen::Index i = 0; i < n; ++i)
            if (codes[i] > 0) m(i, codes[i] - 1) = 1.0;
          cols.push_back(m);
          break;
        }
        case UnpenalizedPiece::Kind::nullspace: {
          MatrixXd m = p.raw.eval(data) * p.transform;
          if (!p.z_kept.empty()) m -= MatrixXd::Ones(n, 1) * p.center_coef;
          cols.push_back(m);
          break;
        }
      }
    }
    return hcat(cols, n);
  }

 private:
  void add_explicit_unpenalized(const TermSpec& term) {
    const std::string& cov = term.parts[0].covariates[0];
    UnpenalizedPiece p;
    p.label = term.label;
    p.covariate = cov;
    if (data_.type(cov) == ColumnType::numeric) {
      p.kind = UnpenalizedPiece::Kind::numeric;
      p.columns = 1;
    } else {
      p.kind = UnpenalizedPiece::Kind::factor;
      p.levels = data_.factor(cov).levels;
      p.columns = static_cast<int>(p.levels.size()) - 1;
      if (p.columns < 1) throw DesignError("u(" + cov + ") needs a factor with at least 2 levels");
    }
    pieces_.push_back(p);
  }

  // Whether the model already represents the linear nullspace of sm(x).
  bool has_lin_for(const std::string& cov, int needed_degree) const {
    for (const auto& t : spec_.terms)
      if (!t.is_interaction() && t.kind() == TermKind::lin && t.covariates[0] == cov &&
          t.parts[0].options.degree >= needed_degree)
        return true;
    return false;
  }

  RawBasisRecipe raw_recipe(const Component& c, PenalizedBasis* pb) {
    RawBasisRecipe r;
    r.kind = c.kind;
    r.covariates = c.covariates;
    switch (c.kind) {
      case TermKind::lin: {
        r.poly = fit_poly(data_.numeric(c.covariates[0]), c.options.degree);
        *pb = {eval_poly(r.poly, data_.numeric(c.covariates[0])), MatrixXd::Identity(c.options.degree, c.options.degree), 0};
        break;
      }
      case TermKind::sm: {
        const VectorXd& x = data_.numeric(c.covariates[0]);
        *pb = bspline_penalized_basis(x, c.options.n_basis, c.options.spline_degree, c.options.penalty_order);
        r.grids = {make_bspline_grid(x, c.options.n_basis, c.options.spline_degree)};
        break;
      }
      case TermKind::srf: {
        const int K = c.options.n_basis;
        if (K < c.options.spline_degree + 1 + c.options.penalty_order)
          throw DesignError("srf() basis size too small for its degree and penalty order");
        for (const auto& cov : c.covariates)
          r.grids.push_back(make_bspline_grid(data_.numeric(cov), K, c.options.spline_degree));
        const MatrixXd P1 = difference_penalty(K, c.options.penalty_order);
        const MatrixXd I = MatrixXd::Identity(K, K);
        MatrixXd P = MatrixXd::Zero(K * K, K * K);
        for (int i = 0; i < K; ++i)
          for (int j = 0; j < K; ++j) {
            P.block(i * K, j * K, K, K) += P1(i, j) * I;
            P.block(i * K, j * K, K, K) += I(i, j) * P1;
          }
        *pb = {r.eval(data_), P, c.options.penalty_order * c.options.penalty_order};
        break;
      }
      case TermKind::fct: {
        const Factor f = factor_view(data_, c.covariates[0]);
        *pb = fct_design(f);
        r.levels = f.levels;
        break;
      }
      case TermKind::rnd: {
        const Factor f = factor_view(data_, c.covariates[0]);
        r.levels = f.levels;
        r.level_columns = identity_columns(f.n_levels());
        if (c.options.matrix.empty()) {
          *pb = rnd_design(f);
        } else {
          const MatrixXd C = aligned_matrix(c, f);
          *pb = rnd_design(f, C);
        }
        break;
      }
      case TermKind::mrf: {
        const Factor f = factor_view(data_, c.covariates[0]);
        const LabeledMatrix& N = named_matrix(c);
        // Columns follow the regions of N; every observed level must be a region.
        r.levels = N.labels;
        r.level_columns = identity_columns(static_cast<int>(N.labels.size()));
        std::set<std::string> regions(N.labels.begin(), N.labels.end());
        for (const auto& l : f.levels)
          if (!regions.count(l))
            throw DesignError("mrf(): level '" + l + "' of '" + c.covariates[0] + "' is not a region of " + c.options.matrix);
        Factor region_factor{codes_against(data_, c.covariates[0], N.labels), N.labels};
        PenalizedBasis b = mrf_design(region_factor, N.values);
        *pb = b;
        break;
      }
      case TermKind::u:
        throw DesignError("u() terms have no penalized basis");
    }
    return r;
  }

  const LabeledMatrix& named_matrix(const Component& c) const {
    auto it = options_.matrices.find(c.options.matrix);
    if (it == options_.matrices.end())
      throw DesignError("matrix '" + c.options.matrix + "' referenced by " + c.label() + " was not supplied");
    return it->second;
  }

  MatrixXd aligned_matrix(const Component& c, const Factor& f) const {
    const LabeledMatrix& m = named_matrix(c);
    const int L = f.n_levels();
    if (static_cast<int>(m.labels.size()) != L)
      throw DesignError("matrix '" + c.options.matrix + "' has " + std::to_string(m.labels.size()) +
                        " labels but '" + c.covariates[0] + "' has " + std::to_string(L) + " levels");
    std::vector<int> idx = Factor{{}, m.labels}.encode(f.levels, c.covariates[0]);
    MatrixXd out(L, L);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) out(i, j) = m.values(idx[i], idx[j]);
    return out;
  }

  BlockRecipe main_recipe(const Component& c, bool route_nullspace, double* mass_retained) {
    const std::string key = c.label();
    if (auto it = main_cache_.find(key); it != main_cache_.end()) {
      *mass_retained = main_mass_[key];
      if (route_nullspace) route(c, it->second);
      return it->second;
    }
    PenalizedBasis pb;
    BlockRecipe r;
    r.raw = raw_recipe(c, &pb);
    if (options_.decomposition == Decomposition::orthogonal) {
      OrthogonalDecomposition od = orthogonal_decomposition(pb, options_.mass, options_.eigen_route);
      r.transform = od.transform;
      *mass_retained = od.mass_retained;
    } else {
      MixedModelDecomposition mm = mixed_model_decomposition(pb);
      r.transform = mm.penalized_transform;
      *mass_retained = 1.0;
    }
    r.nullspace = pb.nullspace_dim > 0 ? penalty_nullspace(pb.penalty) : MatrixXd(pb.penalty.rows(), 0);
    std::vector<MatrixXd> z = {MatrixXd::Ones(n_, 1)};
    if (r.nullspace.cols() > 0) z.push_back(pb.basis * r.nullspace);
    finish_recipe(r, pb.basis, hcat(z, n_), key);
    main_cache_[key] = r;
    main_mass_[key] = *mass_retained;
    if (route_nullspace) route(c, r);
    return r;
  }

  // Sends the non-constant part of a penalty nullspace to X_u unless another
  // term of the model already represents it.
  void route(const Component& c, const BlockRecipe& r) {
    if (r.nullspace.cols() == 0 || routed_.count(c.label())) return;
    if (c.kind == TermKind::sm && has_lin_for(c.covariates[0], c.options.penalty_order - 1)) return;
    const MatrixXd raw = r.raw.eval(data_);
    const MatrixXd null_part = raw * r.nullspace;
    Centering cen = center_with_coefficients(null_part, MatrixXd::Ones(n_, 1));
    Eigen::Index rank = 0;
    const MatrixXd rot = rank_rotation(cen.centered, &rank);
    routed_.insert(c.label());
    if (rank == 0) return;  // constant only: absorbed by the intercept
    UnpenalizedPiece p;
    p.label = "u(" + c.label() + ")";
    p.kind = UnpenalizedPiece::Kind::nullspace;
    p.raw = r.raw;
    p.transform = r.nullspace * rot;
    p.z_kept = cen.kept;
    p.center_coef = cen.coefficients * rot;
    p.columns = static_cast<int>(rank);
    pieces_.push_back(p);
  }

  BlockRecipe interaction_recipe(const TermSpec& term, double* mass_retained) {
    BlockRecipe r;
    std::vector<MatrixXd> parent_blocks;
    for (const auto& part : term.parts) {
      double ignored = 1.0;
      r.parents.push_back(main_recipe(part, false, &ignored));
      parent_blocks.push_back(eval_recipe(r.parents.back(), data_, n_));
    }
    MatrixXd raw = parent_blocks[0];
    for (std::size_t i = 1; i < parent_blocks.size(); ++i) raw = tensor_interaction(raw, parent_blocks[i]);
    const Eigen::Index k = raw.cols();
    if (options_.decomposition == Decomposition::orthogonal) {
      OrthogonalDecomposition od =
          orthogonal_decomposition({raw, MatrixXd::Identity(k, k), 0}, options_.mass, options_.eigen_route);
      r.transform = od.transform;
      *mass_retained = od.mass_retained;
    } else {
      r.transform = MatrixXd::Identity(k, k);
      *mass_retained = 1.0;
    }
    r.nullspace = MatrixXd(k, 0);
    std::vector<MatrixXd> z = {MatrixXd::Ones(n_, 1)};
    z.insert(z.end(), parent_blocks.begin(), parent_blocks.end());
    finish_recipe(r, raw, hcat(z, n_), term.label);
    return r;
  }

  const ModelSpec& spec_;
  const DataTable& data_;
  const DesignOptions& options_;
  Eigen::Index n_;
  std::vector<UnpenalizedPiece> pieces_;
  std::map<std::string, BlockRecipe> main_cache_;
  std::map<std::string, double> main_mass_;
  std::set<std::string> routed_;
};

}  // namespace

int FullDesign::q() const {
  int q = 0;
  for (const auto& b : blocks) q += b.d;
  return q;
}

Eigen::MatrixXd FullDesign::X() const {
  std::vector<MatrixXd> parts = {Xu};
  for (const auto& b : blocks) parts.push_back(b.B);
  return hcat(parts, Xu.rows());
}

std::vector<int> FullDesign::block_offsets() const {
  std::vector<int> out;
  int acc = 0;
  for (const auto& b : blocks) {
    out.push_back(acc);
    acc += b.d;
  }
  return out;
}

std::vector<std::string> FullDesign::covariates() const {
  std::vector<std::string> out;
  auto add = [&](const std::string& c) {
    if (!c.empty() && std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  };
  for (const auto& p : xu_pieces) {
    add(p.covariate);
    for (const auto& c : p.raw.covariates) add(c);
  }
  for (const auto& b : blocks)
    for (const auto& c : b.covariates) add(c);
  if (!options.offset_column.empty()) add(options.offset_column);
  return out;
}

FullDesign build_full_design(const ModelSpec& spec, const DataTable& data, const DesignOptions& options) {
  return DesignBuilder(spec, data, options).build();
}

EvaluatedDesign evaluate_design(const FullDesign& design, const DataTable& data) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.n_rows());
  EvaluatedDesign out;
  for (const auto& c : design.covariates())
    if (!data.has(c)) throw DesignError("new data is missing column '" + c + "'");
  out.offset = design.options.offset_column.empty() ? VectorXd::Zero(n) : VectorXd(data.numeric(design.options.offset_column));
  if (n == 0) {
    out.Xu = MatrixXd(0, design.n_unpenalized());
    for (const auto& b : design.blocks) out.blocks.push_back(MatrixXd(0, b.d));
    return out;
  }
  out.Xu = DesignBuilder::evaluate_unpenalized(design.xu_pieces, data, n);
  for (const auto& b : design.blocks) out.blocks.push_back(eval_recipe(b.recipe, data, n));
  return out;
}

MatrixXd evaluate_block(const DesignBlock& block, const DataTable& data) {
  const auto n = static_cast<Eigen::Index>(data.n_rows());
  if (n == 0) return MatrixXd(0, block.d);
  return eval_recipe(block.recipe, data, n);
}

MatrixXd evaluate_unpenalized(const std::vector<UnpenalizedPiece>& pieces, const DataTable& data) {
  const auto n = static_cast<Eigen::Index>(data.n_rows());
  return DesignBuilder::evaluate_unpenalized(pieces, data, n);
}

}  // namespace ssgam

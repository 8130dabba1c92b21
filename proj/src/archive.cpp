#include "ssgam/archive.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "ssgam/error.hpp"

namespace ssgam {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_num(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) {
    // stod rejects "inf"/"nan" spellings from some printf implementations
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    throw ArchiveError("samples.csv: cannot parse '" + s + "' as a number");
  }
  return v;
}

json matrix_json(const MatrixXd& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

MatrixXd matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ArchiveError("fit.json: matrix size mismatch");
  return Eigen::Map<const MatrixXd>(data.data(), rows, cols);
}

TermKind term_kind_from(const std::string& s) {
  for (TermKind k : {TermKind::u, TermKind::lin, TermKind::sm, TermKind::fct, TermKind::rnd, TermKind::srf, TermKind::mrf})
    if (to_string(k) == s) return k;
  throw ArchiveError("fit.json: unknown term kind '" + s + "'");
}

json raw_json(const RawBasisRecipe& r) {
  json grids = json::array();
  for (const auto& g : r.grids) grids.push_back({{"lo", g.lo}, {"hi", g.hi}, {"n_basis", g.n_basis}, {"degree", g.degree}});
  return {{"kind", to_string(r.kind)},
          {"covariates", r.covariates},
          {"poly", {{"alpha", r.poly.alpha}, {"norm2", r.poly.norm2}}},
          {"grids", grids},
          {"levels", r.levels},
          {"level_columns", r.level_columns}};
}

RawBasisRecipe raw_from(const json& j) {
  RawBasisRecipe r;
  r.kind = term_kind_from(j.at("kind").get<std::string>());
  r.covariates = j.at("covariates").get<std::vector<std::string>>();
  r.poly.alpha = j.at("poly").at("alpha").get<std::vector<double>>();
  r.poly.norm2 = j.at("poly").at("norm2").get<std::vector<double>>();
  for (const auto& g : j.at("grids")) {
    BSplineGrid grid;
    grid.lo = g.at("lo").get<double>();
    grid.hi = g.at("hi").get<double>();
    grid.n_basis = g.at("n_basis").get<int>();
    grid.degree = g.at("degree").get<int>();
    r.grids.push_back(grid);
  }
  r.levels = j.at("levels").get<std::vector<std::string>>();
  r.level_columns = j.at("level_columns").get<std::vector<int>>();
  return r;
}

json recipe_json(const BlockRecipe& r) {
  json parents = json::array();
  for (const auto& p : r.parents) parents.push_back(recipe_json(p));
  return {{"raw", raw_json(r.raw)},
          {"parents", parents},
          {"nullspace", matrix_json(r.nullspace)},
          {"transform", matrix_json(r.transform)},
          {"z_kept", r.z_kept},
          {"center_coef", matrix_json(r.center_coef)}};
}

BlockRecipe recipe_from(const json& j) {
  BlockRecipe r;
  r.raw = raw_from(j.at("raw"));
  for (const auto& p : j.at("parents")) r.parents.push_back(recipe_from(p));
  r.nullspace = matrix_from(j.at("nullspace"));
  r.transform = matrix_from(j.at("transform"));
  r.z_kept = j.at("z_kept").get<std::vector<int>>();
  r.center_coef = matrix_from(j.at("center_coef"));
  return r;
}

const char* piece_kind(UnpenalizedPiece::Kind k) {
  switch (k) {
    case UnpenalizedPiece::Kind::intercept: return "intercept";
    case UnpenalizedPiece::Kind::numeric: return "numeric";
    case UnpenalizedPiece::Kind::factor: return "factor";
    case UnpenalizedPiece::Kind::nullspace: return "nullspace";
  }
  return "";
}

UnpenalizedPiece::Kind piece_kind_from(const std::string& s) {
  for (auto k : {UnpenalizedPiece::Kind::intercept, UnpenalizedPiece::Kind::numeric, UnpenalizedPiece::Kind::factor,
                 UnpenalizedPiece::Kind::nullspace})
    if (s == piece_kind(k)) return k;
  throw ArchiveError("fit.json: unknown unpenalized piece kind '" + s + "'");
}

std::vector<std::string> term_coefficient_names(const FitResult& fit, const std::string& prefix) {
  std::vector<std::string> out;
  for (const auto& b : fit.design.blocks)
    for (int k = 0; k < b.d; ++k) out.push_back(prefix + b.label + "." + std::to_string(k + 1));
  return out;
}

}  // namespace

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// ---- samples.csv ---------------------------------------------------------------

std::vector<std::string> sample_columns(const FitResult& fit) {
  std::vector<std::string> cols = {"chain", "iter"};
  const auto labels = fit.term_labels();
  for (const auto& l : labels) cols.push_back("alpha." + l);
  for (const auto& l : labels) cols.push_back("gamma." + l);
  for (const auto& l : labels) cols.push_back("tau2." + l);
  cols.push_back("w");
  cols.push_back("phi");
  for (const auto& c : term_coefficient_names(fit, "")) cols.push_back(c);
  for (int k = 0; k < fit.design.n_unpenalized(); ++k) cols.push_back("u." + std::to_string(k + 1));
  for (const auto& c : term_coefficient_names(fit, "m.")) cols.push_back(c);
  cols.push_back("deviance");
  return cols;
}

void write_samples_csv(const FitResult& fit, std::ostream& out) {
  const auto cols = sample_columns(fit);
  for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << csv_field(cols[k]);
  out << "\n";
  std::string line;
  for (std::size_t c = 0; c < fit.chains.size(); ++c) {
    const ChainSamples& s = fit.chains[c];
    for (int r = 0; r < s.size(); ++r) {
      line = std::to_string(c + 1) + "," + std::to_string(s.iteration[r]);
      auto row = [&](const MatrixXd& m) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) line += "," + num(m(r, j));
      };
      row(s.alpha);
      row(s.gamma);
      row(s.tau2);
      line += "," + num(s.w[r]) + "," + num(s.phi[r]);
      row(s.xi);
      row(s.beta_u);
      row(s.m);
      line += "," + num(s.deviance[r]);
      out << line << "\n";
    }
  }
}

void read_samples_csv(FitResult& fit, std::istream& in) {
  const auto expected = sample_columns(fit);
  std::string line;
  if (!std::getline(in, line)) throw ArchiveError("samples.csv is empty");
  if (split_csv_line(line) != expected) throw ArchiveError("samples.csv columns do not match the archived design");

  std::map<int, std::vector<std::vector<double>>> rows;  // chain -> rows
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != expected.size())
      throw ArchiveError("samples.csv line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                         " fields, expected " + std::to_string(expected.size()));
    std::vector<double> v(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) v[k] = parse_num(cells[k]);
    rows[static_cast<int>(v[0])].push_back(std::move(v));
  }

  const int p = fit.p();
  const int q = fit.design.q();
  const int ku = fit.design.n_unpenalized();
  const EvaluatedDesign ev{fit.design.Xu, {}, fit.design.offset};
  std::vector<ChainSamples> chains(fit.chains.size());
  if (rows.size() != chains.size()) throw ArchiveError("samples.csv chain count does not match fit.json");
  for (auto& [chain, rs] : rows) {
    if (chain < 1 || chain > static_cast<int>(chains.size())) throw ArchiveError("samples.csv has an unknown chain id");
    ChainSamples& s = chains[chain - 1];
    const auto D = static_cast<Eigen::Index>(rs.size());
    s.alpha.resize(D, p);
    s.gamma.resize(D, p);
    s.tau2.resize(D, p);
    s.xi.resize(D, q);
    s.m.resize(D, q);
    s.beta_u.resize(D, ku);
    s.w.resize(D);
    s.phi.resize(D);
    s.deviance.resize(D);
    for (Eigen::Index r = 0; r < D; ++r) {
      const auto& v = rs[r];
      std::size_t at = 1;
      s.iteration.push_back(static_cast<int>(v[at++]));
      for (int j = 0; j < p; ++j) s.alpha(r, j) = v[at++];
      for (int j = 0; j < p; ++j) s.gamma(r, j) = v[at++];
      for (int j = 0; j < p; ++j) s.tau2(r, j) = v[at++];
      s.w[r] = v[at++];
      s.phi[r] = v[at++];
      for (int j = 0; j < q; ++j) s.xi(r, j) = v[at++];
      for (int j = 0; j < ku; ++j) s.beta_u(r, j) = v[at++];
      for (int j = 0; j < q; ++j) s.m(r, j) = v[at++];
      s.deviance[r] = v[at++];
    }
    s.acceptance = fit.chains[chain - 1].acceptance;
    s.warnings = fit.chains[chain - 1].warnings;
  }
  fit.chains = std::move(chains);

  // Linear predictor traces from the draws.
  const MatrixXd X = fit.design.X().rightCols(q);
  for (auto& s : fit.chains) {
    MatrixXd beta = s.xi;
    int at = 0;
    for (int j = 0; j < p; ++j) {
      const int d = fit.design.blocks[j].d;
      beta.middleCols(at, d).array().colwise() *= s.alpha.col(j).array();
      at += d;
    }
    s.eta = beta * X.transpose() + s.beta_u * ev.Xu.transpose();
    s.eta.rowwise() += ev.offset.transpose();
  }
}

// ---- design and data ---------------------------------------------------------------

json design_to_json(const FullDesign& d) {
  json pieces = json::array();
  for (const auto& p : d.xu_pieces)
    pieces.push_back({{"label", p.label},
                      {"kind", piece_kind(p.kind)},
                      {"covariate", p.covariate},
                      {"levels", p.levels},
                      {"raw", raw_json(p.raw)},
                      {"transform", matrix_json(p.transform)},
                      {"z_kept", p.z_kept},
                      {"center_coef", matrix_json(p.center_coef)},
                      {"columns", p.columns}});
  json blocks = json::array();
  for (const auto& b : d.blocks)
    blocks.push_back({{"label", b.label},
                      {"d", b.d},
                      {"covariates", b.covariates},
                      {"lineage",
                       {{"kind", b.lineage.kind},
                        {"decomposition", b.lineage.decomposition},
                        {"mass_retained", b.lineage.mass_retained}}},
                      {"recipe", recipe_json(b.recipe)}});
  return {{"options",
           {{"decomposition", to_string(d.options.decomposition)},
            {"eigen_route", to_string(d.options.eigen_route)},
            {"mass", d.options.mass},
            {"offset_column", d.options.offset_column}}},
          {"xu_labels", d.xu_labels},
          {"xu_pieces", pieces},
          {"blocks", blocks}};
}

FullDesign design_from_json(const json& j, const DataTable& data) {
  FullDesign d;
  const json& o = j.at("options");
  d.options.decomposition =
      o.at("decomposition").get<std::string>() == "mixed" ? Decomposition::mixed : Decomposition::orthogonal;
  d.options.eigen_route = o.at("eigen_route").get<std::string>() == "factored" ? EigenRoute::factored : EigenRoute::dense;
  d.options.mass = o.at("mass").get<double>();
  d.options.offset_column = o.at("offset_column").get<std::string>();
  d.xu_labels = j.at("xu_labels").get<std::vector<std::string>>();
  for (const auto& pj : j.at("xu_pieces")) {
    UnpenalizedPiece p;
    p.label = pj.at("label").get<std::string>();
    p.kind = piece_kind_from(pj.at("kind").get<std::string>());
    p.covariate = pj.at("covariate").get<std::string>();
    p.levels = pj.at("levels").get<std::vector<std::string>>();
    p.raw = raw_from(pj.at("raw"));
    p.transform = matrix_from(pj.at("transform"));
    p.z_kept = pj.at("z_kept").get<std::vector<int>>();
    p.center_coef = matrix_from(pj.at("center_coef"));
    p.columns = pj.at("columns").get<int>();
    d.xu_pieces.push_back(p);
  }
  for (const auto& bj : j.at("blocks")) {
    DesignBlock b;
    b.label = bj.at("label").get<std::string>();
    b.d = bj.at("d").get<int>();
    b.covariates = bj.at("covariates").get<std::vector<std::string>>();
    b.lineage.kind = bj.at("lineage").at("kind").get<std::string>();
    b.lineage.decomposition = bj.at("lineage").at("decomposition").get<std::string>();
    b.lineage.mass_retained = bj.at("lineage").at("mass_retained").get<double>();
    b.recipe = recipe_from(bj.at("recipe"));
    b.B = evaluate_block(b, data);
    d.blocks.push_back(std::move(b));
  }
  d.Xu = evaluate_unpenalized(d.xu_pieces, data);
  const auto n = static_cast<Eigen::Index>(data.n_rows());
  d.offset = d.options.offset_column.empty() ? VectorXd::Zero(n) : VectorXd(data.numeric(d.options.offset_column));
  return d;
}

json data_to_json(const DataTable& data) {
  json cols = json::array();
  for (const auto& name : data.names()) {
    if (data.type(name) == ColumnType::numeric) {
      const VectorXd& v = data.numeric(name);
      cols.push_back({{"name", name}, {"type", "numeric"}, {"values", std::vector<double>(v.data(), v.data() + v.size())}});
    } else {
      const Factor& f = data.factor(name);
      cols.push_back({{"name", name}, {"type", "factor"}, {"levels", f.levels}, {"codes", f.codes}});
    }
  }
  return {{"rows", data.n_rows()}, {"columns", cols}};
}

DataTable data_from_json(const json& j) {
  DataTable t;
  for (const auto& c : j.at("columns")) {
    const auto name = c.at("name").get<std::string>();
    if (c.at("type").get<std::string>() == "numeric") {
      const auto v = c.at("values").get<std::vector<double>>();
      t.add_numeric(name, Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    } else {
      t.add_factor(name, Factor{c.at("codes").get<std::vector<int>>(), c.at("levels").get<std::vector<std::string>>()});
    }
  }
  return t;
}

// ---- whole fits ----------------------------------------------------------------------

json fit_to_json(const FitResult& fit) {
  json schema = json::object();
  for (const auto& [name, type] : fit.data.schema()) schema[name] = type == ColumnType::numeric ? "numeric" : "factor";
  json chains = json::array();
  for (const auto& c : fit.chains)
    chains.push_back({{"saved", c.size()},
                      {"acceptance",
                       {{"alpha_proposed", c.acceptance.alpha_proposed},
                        {"alpha_accepted", c.acceptance.alpha_accepted},
                        {"xi_proposed", c.acceptance.xi_proposed},
                        {"xi_accepted", c.acceptance.xi_accepted},
                        {"u_proposed", c.acceptance.u_proposed},
                        {"u_accepted", c.acceptance.u_accepted}}},
                      {"warnings", c.warnings}});
  const HyperParams& h = fit.hyper;
  const McmcConfig& m = fit.mcmc;
  const SamplerOptions& s = fit.sampler;
  return {{"format", kArchiveFormat},
          {"version", kArchiveVersion},
          {"formula", render(fit.spec)},
          {"family", to_string(fit.spec.family)},
          {"schema", schema},
          {"hyper",
           {{"a_tau", h.a_tau}, {"b_tau", h.b_tau}, {"v0", h.v0}, {"a_w", h.a_w}, {"b_w", h.b_w},
            {"a_phi", h.a_phi}, {"b_phi", h.b_phi}}},
          {"mcmc",
           {{"n_chains", m.n_chains}, {"chain_length", m.chain_length}, {"burnin", m.burnin}, {"thin", m.thin},
            {"block_size_alpha", m.block_size_alpha}, {"block_size_xi", m.block_size_xi}, {"seed", m.seed},
            {"threads", m.threads}}},
          {"sampler",
           {{"use_likelihood", s.use_likelihood}, {"rescale", s.rescale},
            {"unpenalized_variance", s.unpenalized_variance}, {"init_variance", s.init_variance},
            {"fisher_steps", s.fisher_steps}, {"init_noise", s.init_noise}}},
          {"design", design_to_json(fit.design)},
          {"data", data_to_json(fit.data)},
          {"chains", chains},
          {"warnings", fit.warnings}};
}

FitResult fit_from_json(const json& j) {
  if (j.value("format", "") != kArchiveFormat) throw ArchiveError("not an ssgam fit archive");
  if (j.value("version", -1) != kArchiveVersion)
    throw ArchiveError("archive version " + std::to_string(j.value("version", -1)) + " is not supported (expected " +
                       std::to_string(kArchiveVersion) + ")");
  FitResult fit;
  fit.data = data_from_json(j.at("data"));
  fit.spec = parse_model(j.at("formula").get<std::string>(), fit.data.schema(),
                         parse_family(j.at("family").get<std::string>()));
  fit.family = Family(fit.spec.family);
  fit.y = fit.data.numeric(fit.spec.response);
  const json& h = j.at("hyper");
  fit.hyper = {h.at("a_tau"), h.at("b_tau"), h.at("v0"), h.at("a_w"), h.at("b_w"), h.at("a_phi"), h.at("b_phi")};
  const json& m = j.at("mcmc");
  fit.mcmc.n_chains = m.at("n_chains");
  fit.mcmc.chain_length = m.at("chain_length");
  fit.mcmc.burnin = m.at("burnin");
  fit.mcmc.thin = m.at("thin");
  fit.mcmc.block_size_alpha = m.at("block_size_alpha");
  fit.mcmc.block_size_xi = m.at("block_size_xi");
  fit.mcmc.seed = m.at("seed");
  fit.mcmc.threads = m.at("threads");
  const json& s = j.at("sampler");
  fit.sampler.use_likelihood = s.at("use_likelihood");
  fit.sampler.rescale = s.at("rescale");
  fit.sampler.unpenalized_variance = s.at("unpenalized_variance");
  fit.sampler.init_variance = s.at("init_variance");
  fit.sampler.fisher_steps = s.at("fisher_steps");
  fit.sampler.init_noise = s.at("init_noise");
  fit.design = design_from_json(j.at("design"), fit.data);
  for (const auto& c : j.at("chains")) {
    ChainSamples cs;
    const json& a = c.at("acceptance");
    cs.acceptance.alpha_proposed = a.at("alpha_proposed");
    cs.acceptance.alpha_accepted = a.at("alpha_accepted");
    cs.acceptance.xi_proposed = a.at("xi_proposed");
    cs.acceptance.xi_accepted = a.at("xi_accepted");
    cs.acceptance.u_proposed = a.at("u_proposed");
    cs.acceptance.u_accepted = a.at("u_accepted");
    cs.warnings = c.at("warnings").get<std::vector<std::string>>();
    fit.chains.push_back(std::move(cs));
  }
  fit.warnings = j.at("warnings").get<std::vector<std::string>>();
  return fit;
}

void save_fit(const FitResult& fit, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "fit.json");
    if (!out) throw ArchiveError("cannot write " + (fs::path(dir) / "fit.json").string());
    out << fit_to_json(fit).dump() << "\n";
  }
  std::ofstream out(fs::path(dir) / "samples.csv");
  if (!out) throw ArchiveError("cannot write " + (fs::path(dir) / "samples.csv").string());
  write_samples_csv(fit, out);
}

FitResult load_fit(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "fit.json");
  if (!in) throw ArchiveError("no fit archive at " + dir + " (missing fit.json)");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ArchiveError(std::string("fit.json is not valid JSON: ") + e.what());
  }
  FitResult fit;
  try {
    fit = fit_from_json(j);
  } catch (const json::exception& e) {
    throw ArchiveError(std::string("fit.json is malformed: ") + e.what());
  }
  std::ifstream samples(fs::path(dir) / "samples.csv");
  if (!samples) throw ArchiveError("no samples.csv in " + dir);
  read_samples_csv(fit, samples);
  return fit;
}

}  // namespace ssgam

#include "ssgam/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ssgam/error.hpp"
#include "ssgam/simulate.hpp"

namespace ssgam {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + (where.empty() ? "" : where + ".") + key + "'");
}

template <class T>
void read(const json& obj, const char* key, T& target, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    target = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + (where.empty() ? "" : where + ".") + key + "' has the wrong type");
  }
}

std::string resolve(const std::string& path, const std::string& base) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).lexically_normal().string();
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string quantile_suffix(double level) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "q%g", level * 100);
  return buf;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

void write_text(const std::string& text, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json versions() {
  return {{"ssgam", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"compiler", __VERSION__},
          {"archive_format", kArchiveVersion}};
}

std::vector<std::string> required_columns(const FitResult& fit) {
  std::vector<std::string> required = fit.design.covariates();
  if (!fit.design.options.offset_column.empty()) required.push_back(fit.design.options.offset_column);
  return required;
}

void check_quantiles(const std::vector<double>& q) {
  for (double l : q)
    if (!(l > 0 && l < 1)) throw ConfigError("quantile levels must lie strictly between 0 and 1");
}

}  // namespace

// ---- configuration --------------------------------------------------------------

RunConfig parse_config(const json& doc, const std::string& base_dir) {
  check_keys(doc,
             {"formula", "family", "data", "simulate", "schema", "offset", "hyper", "mcmc", "sampler", "design", "seed",
              "output", "test_data", "effects"},
             "");
  RunConfig c;
  c.source = doc;
  read(doc, "formula", c.formula, "");
  if (c.formula.empty()) throw ConfigError("config needs a 'formula'");
  std::string family = "gaussian";
  read(doc, "family", family, "");
  c.family = parse_family(family);

  read(doc, "data", c.data_path, "");
  if (doc.contains("simulate")) {
    const json& s = doc.at("simulate");
    check_keys(s, {"generator", "n", "seed", "snr"}, "simulate");
    SimulateSpec spec;
    read(s, "generator", spec.generator, "simulate");
    read(s, "n", spec.n, "simulate");
    read(s, "seed", spec.seed, "simulate");
    read(s, "snr", spec.snr, "simulate");
    if (spec.generator != "additive" && spec.generator != "logistic")
      throw ConfigError("simulate.generator must be 'additive' or 'logistic'");
    if (spec.n < 8) throw ConfigError("simulate.n must be at least 8");
    c.simulate = spec;
  }
  if (c.data_path.empty() == !c.simulate) throw ConfigError("config needs exactly one of 'data' or 'simulate'");
  c.data_path = resolve(c.data_path, base_dir);
  if (!c.data_path.empty() && !fs::exists(c.data_path)) throw ConfigError("data file not found: " + c.data_path);

  if (doc.contains("schema")) {
    const json& s = doc.at("schema");
    if (!s.is_object()) throw ConfigError("schema must map column names to 'factor' or 'numeric'");
    for (const auto& [col, type] : s.items()) {
      if (type == "factor") c.schema[col] = ColumnType::factor;
      else if (type == "numeric") c.schema[col] = ColumnType::numeric;
      else throw ConfigError("schema." + col + " must be 'factor' or 'numeric'");
    }
  }
  read(doc, "offset", c.design.offset_column, "");

  if (doc.contains("hyper")) {
    const json& h = doc.at("hyper");
    check_keys(h, {"a_tau", "b_tau", "v0", "a_w", "b_w", "a_phi", "b_phi"}, "hyper");
    read(h, "a_tau", c.hyper.a_tau, "hyper");
    read(h, "b_tau", c.hyper.b_tau, "hyper");
    read(h, "v0", c.hyper.v0, "hyper");
    read(h, "a_w", c.hyper.a_w, "hyper");
    read(h, "b_w", c.hyper.b_w, "hyper");
    read(h, "a_phi", c.hyper.a_phi, "hyper");
    read(h, "b_phi", c.hyper.b_phi, "hyper");
  }
  c.hyper.validate();
  if (doc.contains("mcmc")) {
    const json& m = doc.at("mcmc");
    check_keys(m, {"n_chains", "chain_length", "burnin", "thin", "block_size_alpha", "block_size_xi", "threads"}, "mcmc");
    read(m, "n_chains", c.mcmc.n_chains, "mcmc");
    read(m, "chain_length", c.mcmc.chain_length, "mcmc");
    read(m, "burnin", c.mcmc.burnin, "mcmc");
    read(m, "thin", c.mcmc.thin, "mcmc");
    read(m, "block_size_alpha", c.mcmc.block_size_alpha, "mcmc");
    read(m, "block_size_xi", c.mcmc.block_size_xi, "mcmc");
    read(m, "threads", c.mcmc.threads, "mcmc");
  }
  read(doc, "seed", c.mcmc.seed, "");
  c.mcmc.validate();
  if (doc.contains("sampler")) {
    const json& s = doc.at("sampler");
    check_keys(s, {"use_likelihood", "rescale", "unpenalized_variance", "init_variance", "fisher_steps", "init_noise"},
               "sampler");
    read(s, "use_likelihood", c.sampler.use_likelihood, "sampler");
    read(s, "rescale", c.sampler.rescale, "sampler");
    read(s, "unpenalized_variance", c.sampler.unpenalized_variance, "sampler");
    read(s, "init_variance", c.sampler.init_variance, "sampler");
    read(s, "fisher_steps", c.sampler.fisher_steps, "sampler");
    read(s, "init_noise", c.sampler.init_noise, "sampler");
  }
  if (doc.contains("design")) {
    const json& d = doc.at("design");
    check_keys(d, {"decomposition", "eigen_route", "mass"}, "design");
    std::string decomposition = "orthogonal", route = "dense";
    read(d, "decomposition", decomposition, "design");
    read(d, "eigen_route", route, "design");
    read(d, "mass", c.design.mass, "design");
    if (decomposition == "orthogonal") c.design.decomposition = Decomposition::orthogonal;
    else if (decomposition == "mixed") c.design.decomposition = Decomposition::mixed;
    else throw ConfigError("design.decomposition must be 'orthogonal' or 'mixed'");
    if (route == "dense") c.design.eigen_route = EigenRoute::dense;
    else if (route == "factored") c.design.eigen_route = EigenRoute::factored;
    else throw ConfigError("design.eigen_route must be 'dense' or 'factored'");
    if (!(c.design.mass > 0 && c.design.mass <= 1)) throw ConfigError("design.mass must lie in (0, 1]");
  }
  read(doc, "output", c.output_dir, "");
  c.output_dir = resolve(c.output_dir, base_dir);
  read(doc, "test_data", c.test_data_path, "");
  c.test_data_path = resolve(c.test_data_path, base_dir);
  if (!c.test_data_path.empty() && !fs::exists(c.test_data_path))
    throw ConfigError("test data file not found: " + c.test_data_path);
  if (doc.contains("effects")) {
    const json& e = doc.at("effects");
    check_keys(e, {"separate", "quantiles"}, "effects");
    read(e, "separate", c.separate_effects, "effects");
    read(e, "quantiles", c.quantiles, "effects");
  }
  check_quantiles(c.quantiles);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(doc, fs::path(path).parent_path().string().empty() ? "." : fs::path(path).parent_path().string());
}

json config_to_json(const RunConfig& c) {
  json schema = json::object();
  for (const auto& [k, v] : c.schema) schema[k] = v == ColumnType::factor ? "factor" : "numeric";
  json j = {{"formula", c.formula},
            {"family", to_string(c.family)},
            {"schema", schema},
            {"offset", c.design.offset_column},
            {"hyper",
             {{"a_tau", c.hyper.a_tau}, {"b_tau", c.hyper.b_tau}, {"v0", c.hyper.v0}, {"a_w", c.hyper.a_w},
              {"b_w", c.hyper.b_w}, {"a_phi", c.hyper.a_phi}, {"b_phi", c.hyper.b_phi}}},
            {"mcmc",
             {{"n_chains", c.mcmc.n_chains}, {"chain_length", c.mcmc.chain_length}, {"burnin", c.mcmc.burnin},
              {"thin", c.mcmc.thin}, {"block_size_alpha", c.mcmc.block_size_alpha},
              {"block_size_xi", c.mcmc.block_size_xi}, {"threads", c.mcmc.threads}}},
            {"seed", c.mcmc.seed},
            {"sampler",
             {{"use_likelihood", c.sampler.use_likelihood}, {"rescale", c.sampler.rescale},
              {"unpenalized_variance", c.sampler.unpenalized_variance}, {"init_variance", c.sampler.init_variance},
              {"fisher_steps", c.sampler.fisher_steps}, {"init_noise", c.sampler.init_noise}}},
            {"design",
             {{"decomposition", to_string(c.design.decomposition)},
              {"eigen_route", to_string(c.design.eigen_route)},
              {"mass", c.design.mass}}},
            {"output", c.output_dir},
            {"effects", {{"separate", c.separate_effects}, {"quantiles", c.quantiles}}}};
  if (c.simulate)
    j["simulate"] = {{"generator", c.simulate->generator}, {"n", c.simulate->n}, {"seed", c.simulate->seed},
                     {"snr", c.simulate->snr}};
  else
    j["data"] = c.data_path;
  if (!c.test_data_path.empty()) j["test_data"] = c.test_data_path;
  return j;
}

// ---- running --------------------------------------------------------------------

DataTable ingest(const RunConfig& c) {
  if (c.simulate) {
    const SimulateSpec& s = *c.simulate;
    return s.generator == "additive" ? simulate_additive(s.seed, s.n, s.snr).data : simulate_logistic(s.seed, s.n).data;
  }
  return read_csv(c.data_path, c.schema);
}

FitResult run_fit(const RunConfig& c) {
  const DataTable data = ingest(c);
  const ModelSpec spec = parse_model(c.formula, data.schema(), c.family);
  return fit_model(spec, data, c.design, c.hyper, c.mcmc, c.sampler);
}

std::string effect_file_name(const std::string& label) {
  std::string out;
  for (char ch : label) {
    const bool keep = std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.';
    out += keep ? ch : '_';
  }
  return out + ".json";
}

void write_csv(const DataTable& data, std::ostream& out) {
  const auto names = data.names();
  for (std::size_t k = 0; k < names.size(); ++k) out << (k ? "," : "") << csv_field(names[k]);
  out << "\n";
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (k) out << ",";
      if (data.type(names[k]) == ColumnType::numeric) {
        out << num(data.numeric(names[k])[static_cast<Eigen::Index>(i)]);
      } else {
        const Factor& f = data.factor(names[k]);
        out << csv_field(f.levels[f.codes[i]]);
      }
    }
    out << "\n";
  }
}

void write_predictions_csv(const Prediction& pred, std::ostream& out) {
  std::vector<std::string> header;
  std::vector<const Band*> bands;
  auto add = [&](const std::string& name, const Band& b) {
    header.push_back(name);
    for (double l : pred.levels) header.push_back(name + "." + quantile_suffix(l));
    bands.push_back(&b);
  };
  add("mean", pred.response);
  add("eta", pred.eta);
  for (std::size_t j = 0; j < pred.terms.size(); ++j) add(pred.term_labels[j], pred.terms[j]);
  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << csv_field(header[k]);
  out << "\n";
  for (Eigen::Index i = 0; i < pred.eta.mean.size(); ++i) {
    bool first = true;
    for (const Band* b : bands) {
      out << (first ? "" : ",") << num(b->mean[i]);
      first = false;
      for (Eigen::Index l = 0; l < b->quantiles.cols(); ++l) out << "," << num(b->quantiles(i, l));
    }
    out << "\n";
  }
}

std::vector<std::string> write_reports(const FitResult& fit, const std::string& dir, bool separate_effects,
                                       const std::vector<double>& quantiles) {
  const fs::path root(dir);
  fs::create_directories(root / "effects");
  std::vector<std::string> written;
  write_text(summary_text(fit), root / "summary.txt");
  written.push_back("summary.txt");
  write_json(summary_json(fit), root / "summary.json");
  written.push_back("summary.json");
  write_json(model_table_json(fit), root / "model_table.json");
  written.push_back("model_table.json");
  write_json(diagnostics_json(fit), root / "diagnostics.json");
  written.push_back("diagnostics.json");
  json index = json::array();
  for (const auto& e : effects(fit, !separate_effects, quantiles)) {
    const std::string file = effect_file_name(e.label);
    write_json(effect_json(e, quantiles), root / "effects" / file);
    index.push_back({{"label", e.label}, {"file", file}, {"terms", e.terms}});
    written.push_back("effects/" + file);
  }
  write_json({{"mode", separate_effects ? "separate" : "cumulative"}, {"effects", index}},
             root / "effects" / "index.json");
  written.push_back("effects/index.json");
  return written;
}

std::vector<std::string> fit_command(const RunConfig& c, const std::vector<std::string>& argv) {
  const auto started = std::chrono::steady_clock::now();
  const std::string started_at = utc_now();
  const FitResult fit = run_fit(c);
  fs::create_directories(c.output_dir);
  save_fit(fit, c.output_dir);
  std::vector<std::string> written = {"fit.json", "samples.csv"};
  for (const auto& f : write_reports(fit, c.output_dir, c.separate_effects, c.quantiles)) written.push_back(f);
  if (!c.test_data_path.empty()) {
    const DataTable test = read_csv_like(c.test_data_path, fit.data, required_columns(fit));
    std::ofstream out(fs::path(c.output_dir) / "predictions.csv");
    if (!out) throw ConfigError("cannot write predictions.csv");
    write_predictions_csv(predict(fit, test, c.quantiles), out);
    written.push_back("predictions.csv");
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  json manifest = {{"command", "fit"},
                   {"argv", argv},
                   {"config", config_to_json(c)},
                   {"config_source", c.source},
                   {"seed", c.mcmc.seed},
                   {"versions", versions()},
                   {"started_utc", started_at},
                   {"wall_clock_seconds", seconds},
                   {"artifacts", written}};
  write_json(manifest, fs::path(c.output_dir) / "manifest.json");
  written.push_back("manifest.json");
  return written;
}

std::vector<std::string> predict_command(const std::string& archive_dir, const std::string& newdata_path,
                                         const std::string& out_path, const std::vector<double>& quantiles) {
  check_quantiles(quantiles);
  const FitResult fit = load_fit(archive_dir);
  const DataTable newdata = read_csv_like(newdata_path, fit.data, required_columns(fit));
  const Prediction pred = predict(fit, newdata, quantiles);
  if (!out_path.empty() && fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
  std::ofstream out(out_path);
  if (!out) throw ConfigError("cannot write " + out_path);
  write_predictions_csv(pred, out);
  return {out_path};
}

std::vector<std::string> summarize_command(const std::string& archive_dir, const std::string& out_dir,
                                           bool separate_effects, const std::vector<double>& quantiles) {
  check_quantiles(quantiles);
  const FitResult fit = load_fit(archive_dir);
  return write_reports(fit, out_dir, separate_effects, quantiles);
}

}  // namespace ssgam

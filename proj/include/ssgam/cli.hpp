#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssgam/archive.hpp"
#include "ssgam/summary.hpp"

namespace ssgam {

inline constexpr const char* kVersion = "1.0.0";

// Built-in data generators usable in place of a CSV file.
struct SimulateSpec {
  std::string generator = "additive";  // "additive" or "logistic"
  int n = 200;
  std::uint64_t seed = 1;
  double snr = 3.0;  // additive only
};

struct RunConfig {
  std::string formula;
  FamilyKind family = FamilyKind::gaussian;
  std::string data_path;                  // either this...
  std::optional<SimulateSpec> simulate;   // ...or this
  Schema schema;                          // column type overrides
  HyperParams hyper;
  McmcConfig mcmc;
  SamplerOptions sampler;
  DesignOptions design;
  std::string output_dir = "out";
  std::string test_data_path;
  bool separate_effects = false;
  std::vector<double> quantiles = {0.1, 0.9};

  nlohmann::json source;  // the document as read, echoed into the manifest
};

// Parses a JSON config document. Relative paths resolve against `base_dir`.
// Unknown keys are errors.
RunConfig parse_config(const nlohmann::json& doc, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);
nlohmann::json config_to_json(const RunConfig& config);

DataTable ingest(const RunConfig& config);
FitResult run_fit(const RunConfig& config);

// Output file name for an effect label, e.g. "sm(x):fct(f)" -> "sm_x__fct_f_.json".
std::string effect_file_name(const std::string& label);

void write_csv(const DataTable& data, std::ostream& out);
void write_predictions_csv(const Prediction& pred, std::ostream& out);

// Writes summary.txt/json, model_table.json, diagnostics.json and effects/.
// Returns the relative paths written.
std::vector<std::string> write_reports(const FitResult& fit, const std::string& dir, bool separate_effects,
                                       const std::vector<double>& quantiles);

// The three verbs. Each returns the list of files written.
std::vector<std::string> fit_command(const RunConfig& config, const std::vector<std::string>& argv = {});
std::vector<std::string> predict_command(const std::string& archive_dir, const std::string& newdata_path,
                                         const std::string& out_path, const std::vector<double>& quantiles = {0.1, 0.9});
std::vector<std::string> summarize_command(const std::string& archive_dir, const std::string& out_dir,
                                           bool separate_effects, const std::vector<double>& quantiles = {0.1, 0.9});

}  // namespace ssgam

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssgam/summary.hpp"

namespace ssgam {

// A fit on disk is a directory holding `fit.json` (model, design recipes,
// training data, settings) and `samples.csv` (one row per saved draw).
inline constexpr const char* kArchiveFormat = "ssgam-fit";
inline constexpr int kArchiveVersion = 1;

// Column names of samples.csv in order.
std::vector<std::string> sample_columns(const FitResult& fit);
void write_samples_csv(const FitResult& fit, std::ostream& out);
// Fills the per-chain draws of `fit` (whose design is already set) from a
// samples table. Linear predictor traces are recomputed from the draws.
void read_samples_csv(FitResult& fit, std::istream& in);

nlohmann::json design_to_json(const FullDesign& design);
// Rebuilds a design from its recipes, re-evaluating the blocks on `data`.
FullDesign design_from_json(const nlohmann::json& j, const DataTable& data);

nlohmann::json data_to_json(const DataTable& data);
DataTable data_from_json(const nlohmann::json& j);

nlohmann::json fit_to_json(const FitResult& fit);
// Restores everything but the draws.
FitResult fit_from_json(const nlohmann::json& j);

void save_fit(const FitResult& fit, const std::string& dir);
FitResult load_fit(const std::string& dir);

// CSV field quoting for names that contain separators or quotes.
std::string csv_field(const std::string& s);
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace ssgam

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssgam/error.hpp"
#include "ssgam/formula.hpp"

namespace ssgam {

// A factor column: integer codes into `levels`.
struct Factor {
  std::vector<int> codes;
  std::vector<std::string> levels;

  std::size_t size() const { return codes.size(); }
  int n_levels() const { return static_cast<int>(levels.size()); }
  // Re-codes `labels` against these levels; throws on unseen levels.
  std::vector<int> encode(const std::vector<std::string>& labels, const std::string& column) const;
};

class DataTable {
 public:
  std::size_t n_rows() const { return n_rows_; }
  std::vector<std::string> names() const;

  void add_numeric(const std::string& name, Eigen::VectorXd values);
  void add_factor(const std::string& name, Factor values);

  bool has(const std::string& name) const;
  ColumnType type(const std::string& name) const;
  const Eigen::VectorXd& numeric(const std::string& name) const;
  const Factor& factor(const std::string& name) const;
  Schema schema() const;

  // Rows in `rows`, order preserved.
  DataTable subset(const std::vector<int>& rows) const;

 private:
  void check_rows(const std::string& name, std::size_t n);

  std::size_t n_rows_ = 0;
  std::vector<std::string> order_;
  std::map<std::string, Eigen::VectorXd> numeric_;
  std::map<std::string, Factor> factor_;
};

// Builds a factor with levels sorted numerically when every label parses as a
// number, otherwise lexicographically.
Factor make_factor(const std::vector<std::string>& labels);

// Reads a CSV with a header row. Columns listed in `overrides` get that type;
// others are numeric when every cell parses as a number, else factors.
// Empty cells, "NA" and unparseable declared-numeric cells are errors.
DataTable read_csv(const std::string& path, const std::map<std::string, ColumnType>& overrides = {});
DataTable parse_csv(const std::string& text, const std::map<std::string, ColumnType>& overrides = {});

// Re-reads a CSV against the schema of a training table: same column types,
// factor levels coded with the training levels.
DataTable read_csv_like(const std::string& path, const DataTable& reference,
                        const std::vector<std::string>& required);
DataTable parse_csv_like(const std::string& text, const DataTable& reference,
                         const std::vector<std::string>& required);

}  // namespace ssgam

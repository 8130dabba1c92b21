#include "ssgam/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ssgam {

std::vector<int> Factor::encode(const std::vector<std::string>& labels, const std::string& column) const {
  std::map<std::string, int> index;
  for (int i = 0; i < n_levels(); ++i) index[levels[i]] = i;
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    auto it = index.find(l);
    if (it == index.end()) throw DataError("unseen factor level '" + l + "' in column '" + column + "'");
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::string> DataTable::names() const { return order_; }

void DataTable::check_rows(const std::string& name, std::size_t n) {
  if (has(name)) throw DataError("duplicate column '" + name + "'");
  if (order_.empty()) n_rows_ = n;
  else if (n != n_rows_)
    throw DataError("column '" + name + "' has " + std::to_string(n) + " rows, expected " + std::to_string(n_rows_));
  order_.push_back(name);
}

void DataTable::add_numeric(const std::string& name, Eigen::VectorXd values) {
  check_rows(name, static_cast<std::size_t>(values.size()));
  numeric_[name] = std::move(values);
}

void DataTable::add_factor(const std::string& name, Factor values) {
  check_rows(name, values.size());
  factor_[name] = std::move(values);
}

bool DataTable::has(const std::string& name) const { return numeric_.count(name) || factor_.count(name); }

ColumnType DataTable::type(const std::string& name) const {
  if (numeric_.count(name)) return ColumnType::numeric;
  if (factor_.count(name)) return ColumnType::factor;
  throw DataError("no column named '" + name + "'");
}

const Eigen::VectorXd& DataTable::numeric(const std::string& name) const {
  auto it = numeric_.find(name);
  if (it == numeric_.end()) throw DataError("no numeric column named '" + name + "'");
  return it->second;
}

const Factor& DataTable::factor(const std::string& name) const {
  auto it = factor_.find(name);
  if (it == factor_.end()) throw DataError("no factor column named '" + name + "'");
  return it->second;
}

Schema DataTable::schema() const {
  Schema s;
  for (const auto& n : order_) s[n] = type(n);
  return s;
}

DataTable DataTable::subset(const std::vector<int>& rows) const {
  DataTable out;
  for (const auto& name : order_) {
    if (type(name) == ColumnType::numeric) {
      const auto& v = numeric(name);
      Eigen::VectorXd s(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) s[i] = v[rows[i]];
      out.add_numeric(name, std::move(s));
    } else {
      const auto& f = factor(name);
      Factor s{{}, f.levels};
      for (int r : rows) s.codes.push_back(f.codes[r]);
      out.add_factor(name, std::move(s));
    }
  }
  if (order_.empty()) out.n_rows_ = rows.size();
  return out;
}

namespace {

std::optional<double> to_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (*b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> cells;  // column-major
};

std::vector<std::string> split_record(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw DataError("unterminated quote on line " + std::to_string(line_no));
  out.push_back(trim(field));
  return out;
}

RawTable read_raw(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  RawTable t;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (trim(line).empty()) continue;
      if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
      t.header = split_record(line, line_no);
      for (const auto& h : t.header)
        if (h.empty()) throw DataError("empty column name in header");
      t.cells.resize(t.header.size());
      have_header = true;
      continue;
    }
    if (trim(line).empty()) continue;
    auto rec = split_record(line, line_no);
    if (rec.size() != t.header.size())
      throw DataError("line " + std::to_string(line_no) + " has " + std::to_string(rec.size()) +
                      " fields, expected " + std::to_string(t.header.size()));
    for (std::size_t j = 0; j < rec.size(); ++j) {
      if (rec[j].empty() || rec[j] == "NA")
        throw DataError("missing value in row " + std::to_string(t.cells[j].size() + 1) + ", column '" +
                        t.header[j] + "'; data must not contain missing values");
      t.cells[j].push_back(rec[j]);
    }
  }
  if (!have_header) throw DataError("empty file: no header row");
  return t;
}

Eigen::VectorXd parse_numeric_column(const std::vector<std::string>& cells, const std::string& name) {
  Eigen::VectorXd v(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto x = to_number(cells[i]);
    if (!x) throw DataError("unparseable number '" + cells[i] + "' in row " + std::to_string(i + 1) +
                            ", column '" + name + "'");
    v[i] = *x;
  }
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

Factor make_factor(const std::vector<std::string>& labels) {
  std::vector<std::string> levels = labels;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  const bool all_numeric = std::all_of(levels.begin(), levels.end(), [](const auto& l) { return to_number(l).has_value(); });
  if (all_numeric)
    std::stable_sort(levels.begin(), levels.end(), [](const auto& a, const auto& b) { return *to_number(a) < *to_number(b); });
  Factor f{{}, levels};
  f.codes = f.encode(labels, "");
  return f;
}

DataTable parse_csv(const std::string& text, const std::map<std::string, ColumnType>& overrides) {
  RawTable raw = read_raw(text);
  for (const auto& [name, _] : overrides)
    if (std::find(raw.header.begin(), raw.header.end(), name) == raw.header.end())
      throw DataError("schema override names unknown column '" + name + "'");
  DataTable t;
  for (std::size_t j = 0; j < raw.header.size(); ++j) {
    const auto& name = raw.header[j];
    const auto& cells = raw.cells[j];
    std::optional<ColumnType> type;
    if (auto it = overrides.find(name); it != overrides.end()) type = it->second;
    if (!type) {
      const bool numeric = std::all_of(cells.begin(), cells.end(), [](const auto& c) { return to_number(c).has_value(); });
      type = numeric ? ColumnType::numeric : ColumnType::factor;
    }
    if (*type == ColumnType::numeric) t.add_numeric(name, parse_numeric_column(cells, name));
    else t.add_factor(name, make_factor(cells));
  }
  return t;
}

DataTable read_csv(const std::string& path, const std::map<std::string, ColumnType>& overrides) {
  return parse_csv(read_file(path), overrides);
}

DataTable parse_csv_like(const std::string& text, const DataTable& reference,
                         const std::vector<std::string>& required) {
  RawTable raw = read_raw(text);
  DataTable t;
  for (std::size_t j = 0; j < raw.header.size(); ++j) {
    const auto& name = raw.header[j];
    if (!reference.has(name)) continue;
    if (reference.type(name) == ColumnType::numeric) {
      t.add_numeric(name, parse_numeric_column(raw.cells[j], name));
    } else {
      const Factor& ref = reference.factor(name);
      t.add_factor(name, Factor{ref.encode(raw.cells[j], name), ref.levels});
    }
  }
  for (const auto& r : required)
    if (!t.has(r)) throw DataError("new data is missing column '" + r + "'");
  return t;
}

DataTable read_csv_like(const std::string& path, const DataTable& reference,
                        const std::vector<std::string>& required) {
  return parse_csv_like(read_file(path), reference, required);
}

}  // namespace ssgam

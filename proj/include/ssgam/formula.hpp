#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ssgam/error.hpp"

namespace ssgam {

enum class TermKind { u, lin, sm, fct, rnd, srf, mrf };

enum class FamilyKind { gaussian, binomial, poisson };

enum class ColumnType { numeric, factor };

using Schema = std::map<std::string, ColumnType>;

std::string to_string(TermKind kind);
std::string to_string(FamilyKind kind);
FamilyKind parse_family(const std::string& name);

// Wrapper arguments. Only the fields relevant to a kind are used; the rest
// keep their defaults so that equality comparisons stay meaningful.
struct TermOptions {
  int degree = 1;          // lin(): polynomial degree
  int n_basis = 20;        // sm()/srf(): B-spline basis size (per axis for srf)
  int spline_degree = 3;   // sm()/srf(): cubic by default
  int penalty_order = 2;   // sm(): 2nd differences, srf(): 1st differences
  std::string matrix;      // rnd(): correlation name, mrf(): adjacency name

  bool operator==(const TermOptions&) const = default;
};

TermOptions default_options(TermKind kind);

// One main-effect component, e.g. sm(x) or srf(x1, x2).
struct Component {
  TermKind kind = TermKind::u;
  std::vector<std::string> covariates;
  TermOptions options;

  std::string label() const;
  bool operator==(const Component&) const = default;
};

struct TermSpec {
  std::string label;
  // Main effects have one part; an interaction has one part per parent.
  std::vector<Component> parts;
  std::vector<std::string> covariates;

  TermKind kind() const { return parts.front().kind; }
  int interaction_order() const { return static_cast<int>(parts.size()); }
  bool is_interaction() const { return parts.size() > 1; }
  bool is_intercept() const {
    return parts.size() == 1 && parts[0].kind == TermKind::u && parts[0].covariates.empty();
  }
  bool operator==(const TermSpec&) const = default;
};

struct ModelSpec {
  std::string response;
  FamilyKind family = FamilyKind::gaussian;
  std::vector<TermSpec> terms;
  std::vector<std::string> removed_terms;

  const TermSpec* find(const std::string& label) const;
  bool operator==(const ModelSpec&) const = default;
};

// ---- raw syntax tree -------------------------------------------------------

struct AstNode {
  enum class Type { variable, call, sum, interaction, power };

  Type type = Type::variable;
  std::string name;                                          // variable / wrapper name
  std::vector<std::string> args;                             // positional covariates
  std::vector<std::pair<std::string, std::string>> kwargs;   // key = value
  std::vector<AstNode> children;
  bool removed = false;                                      // preceded by '-' in a sum
  int exponent = 1;                                          // power nodes
  std::size_t offset = 0;                                    // byte offset in the text
};

struct FormulaAst {
  std::string response;
  AstNode rhs;  // always a sum node
};

FormulaAst parse_formula(const std::string& text);

// Expands raw covariates into typed terms, `^2` groups into main effects plus
// pairwise interactions, and prepends the global intercept.
ModelSpec expand_terms(const FormulaAst& ast, const Schema& schema,
                       FamilyKind family = FamilyKind::gaussian);

ModelSpec parse_model(const std::string& text, const Schema& schema,
                      FamilyKind family = FamilyKind::gaussian);

// Canonical text; reparsing it with the same schema reproduces the spec.
std::string render(const ModelSpec& spec);

}  // namespace ssgam

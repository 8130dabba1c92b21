#include "ssgam/formula.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>
#include <sstream>

namespace ssgam {

std::string to_string(TermKind kind) {
  switch (kind) {
    case TermKind::u: return "u";
    case TermKind::lin: return "lin";
    case TermKind::sm: return "sm";
    case TermKind::fct: return "fct";
    case TermKind::rnd: return "rnd";
    case TermKind::srf: return "srf";
    case TermKind::mrf: return "mrf";
  }
  return "?";
}

std::string to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::gaussian: return "gaussian";
    case FamilyKind::binomial: return "binomial";
    case FamilyKind::poisson: return "poisson";
  }
  return "?";
}

FamilyKind parse_family(const std::string& name) {
  if (name == "gaussian") return FamilyKind::gaussian;
  if (name == "binomial") return FamilyKind::binomial;
  if (name == "poisson") return FamilyKind::poisson;
  throw ConfigError("unknown family '" + name + "' (expected gaussian, binomial or poisson)");
}

TermOptions default_options(TermKind kind) {
  TermOptions o;
  if (kind == TermKind::srf) {
    o.n_basis = 8;
    o.penalty_order = 1;
  }
  return o;
}

std::string Component::label() const {
  std::string s = to_string(kind) + "(";
  for (std::size_t i = 0; i < covariates.size(); ++i) {
    if (i) s += ", ";
    s += covariates[i];
  }
  const TermOptions d = default_options(kind);
  auto arg = [&](const std::string& key, const std::string& value) {
    s += (covariates.empty() ? "" : ", ") + key + "=" + value;
  };
  switch (kind) {
    case TermKind::lin:
      if (options.degree != d.degree) arg("degree", std::to_string(options.degree));
      break;
    case TermKind::sm:
    case TermKind::srf:
      if (options.n_basis != d.n_basis) arg("K", std::to_string(options.n_basis));
      if (options.spline_degree != d.spline_degree)
        arg("spline.degree", std::to_string(options.spline_degree));
      if (options.penalty_order != d.penalty_order)
        arg("diff.ord", std::to_string(options.penalty_order));
      break;
    case TermKind::rnd:
      if (!options.matrix.empty()) arg("C", options.matrix);
      break;
    case TermKind::mrf:
      if (!options.matrix.empty()) arg("N", options.matrix);
      break;
    default:
      break;
  }
  return s + ")";
}

const TermSpec* ModelSpec::find(const std::string& label) const {
  for (const auto& t : terms)
    if (t.label == label) return &t;
  return nullptr;
}

// ---- tokenizer ---------------------------------------------------------------

namespace {

enum class Tok { ident, number, tilde, plus, minus, colon, caret, lparen, rparen, comma, equals, star, end };

struct Token {
  Tok kind;
  std::string text;
  std::size_t offset;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (ident_start(c)) {
      while (i < text.size() && ident_char(text[i])) ++i;
      out.push_back({Tok::ident, text.substr(start, i - start), start});
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      while (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.')) ++i;
      out.push_back({Tok::number, text.substr(start, i - start), start});
      continue;
    }
    Tok k;
    switch (c) {
      case '~': k = Tok::tilde; break;
      case '+': k = Tok::plus; break;
      case '-': k = Tok::minus; break;
      case ':': k = Tok::colon; break;
      case '^': k = Tok::caret; break;
      case '(': k = Tok::lparen; break;
      case ')': k = Tok::rparen; break;
      case ',': k = Tok::comma; break;
      case '=': k = Tok::equals; break;
      case '*': k = Tok::star; break;
      default:
        throw FormulaError(std::string("unexpected character '") + c + "' at offset " +
                               std::to_string(i),
                           i);
    }
    out.push_back({k, std::string(1, c), i});
    ++i;
  }
  out.push_back({Tok::end, "", text.size()});
  return out;
}

const std::set<std::string> kWrappers = {"lin", "sm", "fct", "rnd", "srf", "mrf", "u"};

class Parser {
 public:
  explicit Parser(const std::string& text) : tokens_(tokenize(text)) {}

  FormulaAst parse() {
    std::size_t tildes = 0;
    for (const auto& t : tokens_) tildes += t.kind == Tok::tilde;
    if (tildes == 0) throw FormulaError("formula needs a '~' separating response and terms", 0);
    FormulaAst ast;
    if (peek().kind != Tok::ident) fail("expected response name before '~'");
    ast.response = next().text;
    if (peek().kind != Tok::tilde) fail("expected '~' after response");
    next();
    ast.rhs = parse_sum(false);
    if (peek().kind == Tok::tilde) fail("duplicate response: more than one '~'");
    if (peek().kind != Tok::end) fail("unexpected '" + peek().text + "'");
    return ast;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& next() { return tokens_[pos_++]; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormulaError(msg + " at offset " + std::to_string(peek().offset), peek().offset);
  }

  AstNode parse_sum(bool nested) {
    AstNode sum;
    sum.type = AstNode::Type::sum;
    sum.offset = peek().offset;
    bool removed = false;
    if (peek().kind == Tok::minus) fail("a formula cannot start with '-'");
    for (;;) {
      AstNode item = parse_product();
      item.removed = removed;
      sum.children.push_back(std::move(item));
      if (peek().kind == Tok::plus || peek().kind == Tok::minus) {
        removed = next().kind == Tok::minus;
        if (peek().kind == Tok::end || peek().kind == Tok::rparen)
          fail("trailing operator without a term");
        continue;
      }
      if (peek().kind == Tok::star)
        fail("'*' is not supported; write the main effects and interactions explicitly, e.g. "
             "'a + b + a:b' or '(a + b)^2'");
      if (nested && peek().kind != Tok::rparen) fail("expected ')'");
      break;
    }
    return sum;
  }

  AstNode parse_product() {
    AstNode first = parse_power();
    if (peek().kind != Tok::colon) return first;
    AstNode inter;
    inter.type = AstNode::Type::interaction;
    inter.offset = first.offset;
    inter.children.push_back(std::move(first));
    while (peek().kind == Tok::colon) {
      next();
      inter.children.push_back(parse_power());
    }
    return inter;
  }

  AstNode parse_power() {
    AstNode base = parse_primary();
    if (peek().kind != Tok::caret) return base;
    next();
    if (peek().kind != Tok::number) fail("expected an integer exponent after '^'");
    const Token& num = next();
    int e = 0;
    auto [p, ec] = std::from_chars(num.text.data(), num.text.data() + num.text.size(), e);
    if (ec != std::errc() || p != num.text.data() + num.text.size())
      throw FormulaError("exponent must be an integer at offset " + std::to_string(num.offset), num.offset);
    if (e < 1 || e > 2)
      throw FormulaError("only '^2' interaction expansion is supported (got ^" + num.text +
                             ") at offset " + std::to_string(num.offset),
                         num.offset);
    AstNode pw;
    pw.type = AstNode::Type::power;
    pw.offset = base.offset;
    pw.exponent = e;
    pw.children.push_back(std::move(base));
    return pw;
  }

  AstNode parse_primary() {
    const Token& t = peek();
    if (t.kind == Tok::lparen) {
      next();
      AstNode inner = parse_sum(true);
      if (peek().kind != Tok::rparen) fail("unbalanced parentheses: expected ')'");
      next();
      return inner;
    }
    if (t.kind == Tok::end) fail("expected a term");
    if (t.kind != Tok::ident) fail("unexpected '" + t.text + "'");
    AstNode node;
    node.name = next().text;
    node.offset = t.offset;
    if (peek().kind != Tok::lparen) {
      node.type = AstNode::Type::variable;
      return node;
    }
    if (!kWrappers.count(node.name))
      throw FormulaError("unknown term wrapper '" + node.name + "' at offset " + std::to_string(node.offset) +
                             " (expected one of lin, sm, fct, rnd, srf, mrf, u)",
                         node.offset);
    node.type = AstNode::Type::call;
    next();
    if (peek().kind == Tok::rparen) {
      next();
      return node;
    }
    for (;;) {
      if (peek().kind != Tok::ident) fail("expected a covariate or key=value argument");
      std::string name = next().text;
      if (peek().kind == Tok::equals) {
        next();
        if (peek().kind != Tok::ident && peek().kind != Tok::number) fail("expected a value after '='");
        node.kwargs.emplace_back(name, next().text);
      } else {
        if (!node.kwargs.empty()) fail("positional argument after key=value argument");
        node.args.push_back(name);
      }
      if (peek().kind == Tok::comma) {
        next();
        continue;
      }
      if (peek().kind != Tok::rparen) fail("expected ',' or ')' in argument list");
      next();
      break;
    }
    return node;
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

// ---- expansion ---------------------------------------------------------------

using Candidate = std::vector<Component>;

std::string candidate_label(const Candidate& c) {
  std::string s;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (i) s += ":";
    s += c[i].label();
  }
  return s;
}

bool disjoint(const Candidate& a, const Candidate& b) {
  for (const auto& ca : a)
    for (const auto& cb : b)
      for (const auto& x : ca.covariates)
        if (std::find(cb.covariates.begin(), cb.covariates.end(), x) != cb.covariates.end()) return false;
  return true;
}

Candidate join(const Candidate& a, const Candidate& b) {
  Candidate out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

int parse_int_arg(const AstNode& node, const std::string& key, const std::string& value) {
  int v = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size() || v < 0)
    throw FormulaError("argument " + key + " of " + node.name + "() must be a nonnegative integer, got '" +
                           value + "' at offset " + std::to_string(node.offset),
                       node.offset);
  return v;
}

class Expander {
 public:
  Expander(const Schema& schema) : schema_(schema) {}

  std::vector<Candidate> eval(const AstNode& node, bool removal) {
    switch (node.type) {
      case AstNode::Type::variable: return eval_variable(node);
      case AstNode::Type::call: return {{make_component(node)}};
      case AstNode::Type::sum: {
        std::vector<Candidate> out;
        for (const auto& child : node.children) {
          auto items = eval(child, removal || child.removed);
          if (child.removed && !removal) {
            for (const auto& c : items) explicit_removals_.push_back(candidate_label(c));
            continue;
          }
          out.insert(out.end(), items.begin(), items.end());
        }
        return out;
      }
      case AstNode::Type::interaction: {
        std::vector<Candidate> acc = eval(node.children[0], removal);
        for (std::size_t i = 1; i < node.children.size(); ++i) {
          const auto rhs = eval(node.children[i], removal);
          std::vector<Candidate> next;
          for (const auto& a : acc)
            for (const auto& b : rhs) add_product(next, a, b, removal);
          acc = std::move(next);
        }
        return acc;
      }
      case AstNode::Type::power: {
        auto base = eval(node.children[0], removal);
        if (node.exponent == 1) return base;
        std::vector<Candidate> out = base;
        for (std::size_t i = 0; i < base.size(); ++i)
          for (std::size_t j = i + 1; j < base.size(); ++j) add_product(out, base[i], base[j], removal);
        return out;
      }
    }
    return {};
  }

  std::vector<std::string> explicit_removals_;
  std::vector<std::string> auto_removals_;

 private:
  void add_product(std::vector<Candidate>& out, const Candidate& a, const Candidate& b, bool removal) {
    Candidate c = join(a, b);
    if (!removal && !disjoint(a, b)) {
      auto_removals_.push_back(candidate_label(c));
      return;
    }
    out.push_back(std::move(c));
  }

  ColumnType column_type(const std::string& name, std::size_t offset) const {
    auto it = schema_.find(name);
    if (it == schema_.end())
      throw FormulaError("covariate '" + name + "' not found in data at offset " + std::to_string(offset), offset);
    return it->second;
  }

  std::vector<Candidate> eval_variable(const AstNode& node) {
    const ColumnType type = column_type(node.name, node.offset);
    if (type == ColumnType::factor) return {{Component{TermKind::fct, {node.name}, default_options(TermKind::fct)}}};
    return {{Component{TermKind::lin, {node.name}, default_options(TermKind::lin)}},
            {Component{TermKind::sm, {node.name}, default_options(TermKind::sm)}}};
  }

  Component make_component(const AstNode& node) {
    static const std::map<std::string, TermKind> kinds = {
        {"u", TermKind::u},     {"lin", TermKind::lin}, {"sm", TermKind::sm},  {"fct", TermKind::fct},
        {"rnd", TermKind::rnd}, {"srf", TermKind::srf}, {"mrf", TermKind::mrf}};
    Component c;
    c.kind = kinds.at(node.name);
    c.options = default_options(c.kind);
    c.covariates = node.args;

    std::size_t expected = c.kind == TermKind::srf ? 2 : 1;
    if (c.kind == TermKind::u) expected = node.args.empty() ? 0 : 1;
    if (c.covariates.size() != expected)
      throw FormulaError(node.name + "() takes " + std::to_string(expected) + " covariate(s), got " +
                             std::to_string(c.covariates.size()) + " at offset " + std::to_string(node.offset),
                         node.offset);
    if (c.kind == TermKind::srf && c.covariates[0] == c.covariates[1])
      throw FormulaError("srf() needs two distinct covariates at offset " + std::to_string(node.offset),
                         node.offset);

    const bool numeric_only = c.kind == TermKind::lin || c.kind == TermKind::sm || c.kind == TermKind::srf;
    for (const auto& cov : c.covariates) {
      if (column_type(cov, node.offset) == ColumnType::factor && numeric_only)
        throw FormulaError("factor '" + cov + "' passed to numeric-only wrapper " + node.name +
                               "() at offset " + std::to_string(node.offset),
                           node.offset);
    }

    for (const auto& [key, value] : node.kwargs) {
      auto bad = [&] {
        throw FormulaError("unknown argument '" + key + "' for " + node.name + "() at offset " +
                               std::to_string(node.offset),
                           node.offset);
      };
      switch (c.kind) {
        case TermKind::lin:
          if (key != "degree") bad();
          c.options.degree = parse_int_arg(node, key, value);
          if (c.options.degree < 1)
            throw FormulaError("lin() degree must be at least 1 at offset " + std::to_string(node.offset),
                               node.offset);
          break;
        case TermKind::sm:
        case TermKind::srf:
          if (key == "K") c.options.n_basis = parse_int_arg(node, key, value);
          else if (key == "spline.degree") c.options.spline_degree = parse_int_arg(node, key, value);
          else if (key == "diff.ord") c.options.penalty_order = parse_int_arg(node, key, value);
          else bad();
          break;
        case TermKind::rnd:
          if (key != "C") bad();
          c.options.matrix = value;
          break;
        case TermKind::mrf:
          if (key != "N") bad();
          c.options.matrix = value;
          break;
        default:
          bad();
      }
    }
    if (c.kind == TermKind::mrf && c.options.matrix.empty())
      throw FormulaError("mrf() requires a neighborhood structure, e.g. mrf(region, N=adj) at offset " +
                             std::to_string(node.offset),
                         node.offset);
    return c;
  }

  const Schema& schema_;
};

}  // namespace

FormulaAst parse_formula(const std::string& text) { return Parser(text).parse(); }

ModelSpec expand_terms(const FormulaAst& ast, const Schema& schema, FamilyKind family) {
  auto resp = schema.find(ast.response);
  if (resp == schema.end()) throw FormulaError("response '" + ast.response + "' not found in data", 0);
  if (resp->second != ColumnType::numeric)
    throw FormulaError("response '" + ast.response + "' must be numeric", 0);

  Expander ex(schema);
  const std::vector<Candidate> candidates = ex.eval(ast.rhs, false);

  ModelSpec spec;
  spec.response = ast.response;
  spec.family = family;

  std::set<std::string> removed_set;
  for (const auto& labels : {ex.explicit_removals_, ex.auto_removals_})
    for (const auto& l : labels)
      if (removed_set.insert(l).second) spec.removed_terms.push_back(l);

  TermSpec intercept;
  intercept.label = "u";
  intercept.parts = {Component{TermKind::u, {}, default_options(TermKind::u)}};
  spec.terms.push_back(intercept);

  std::set<std::string> seen = {"u"};
  std::vector<TermSpec> collected;
  for (const auto& c : candidates) {
    if (c.size() == 1 && c[0].kind == TermKind::u && c[0].covariates.empty()) continue;
    if (c.size() > 1)
      for (const auto& part : c)
        if (part.kind == TermKind::u)
          throw FormulaError("u() terms cannot be part of an interaction: " + candidate_label(c));
    TermSpec t;
    t.label = candidate_label(c);
    if (removed_set.count(t.label) || !seen.insert(t.label).second) continue;
    t.parts = c;
    for (const auto& part : c)
      for (const auto& cov : part.covariates) t.covariates.push_back(cov);
    if (std::find(t.covariates.begin(), t.covariates.end(), ast.response) != t.covariates.end())
      throw FormulaError("response '" + ast.response + "' cannot also be a covariate");
    collected.push_back(std::move(t));
  }
  std::stable_sort(collected.begin(), collected.end(), [](const TermSpec& a, const TermSpec& b) {
    return a.interaction_order() < b.interaction_order();
  });
  spec.terms.insert(spec.terms.end(), collected.begin(), collected.end());
  if (spec.terms.size() < 2) throw FormulaError("the model has no terms besides the intercept");
  return spec;
}

ModelSpec parse_model(const std::string& text, const Schema& schema, FamilyKind family) {
  return expand_terms(parse_formula(text), schema, family);
}

std::string render(const ModelSpec& spec) {
  std::ostringstream os;
  os << spec.response << " ~ ";
  bool first = true;
  for (const auto& t : spec.terms) {
    if (t.is_intercept()) continue;
    os << (first ? "" : " + ") << t.label;
    first = false;
  }
  for (const auto& r : spec.removed_terms) os << " - " << r;
  return os.str();
}

}  // namespace ssgam

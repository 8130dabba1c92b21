#include <doctest.h>

#include <algorithm>

#include "ssgam/formula.hpp"

using namespace ssgam;

namespace {

Schema additive_schema() {
  Schema s;
  for (const char* c : {"y", "sm1", "sm2", "lin1", "lin2", "lin3", "noise1", "noise2", "noise3"})
    s[c] = ColumnType::numeric;
  s["f"] = ColumnType::factor;
  s["noise4"] = ColumnType::factor;
  return s;
}

std::vector<std::string> labels(const ModelSpec& m) {
  std::vector<std::string> out;
  for (const auto& t : m.terms) out.push_back(t.label);
  return out;
}

bool has(const ModelSpec& m, const std::string& label) { return m.find(label) != nullptr; }

}  // namespace

TEST_CASE("raw numeric covariates split into lin and sm, factors become fct") {
  const ModelSpec m = parse_model("y ~ sm1 + f", additive_schema());
  CHECK(labels(m) == std::vector<std::string>{"u", "lin(sm1)", "sm(sm1)", "fct(f)"});
  CHECK(m.terms[0].is_intercept());
  CHECK(m.response == "y");
}

TEST_CASE("the simulation formula expands to 37 terms") {
  const ModelSpec m =
      parse_model("y ~ (sm1 + sm2 + f + lin1)^2 + lin2 + lin3 + noise1 + noise2 + noise3 + noise4", additive_schema());
  CHECK(m.terms.size() == 37);
  CHECK(has(m, "sm(sm2):fct(f)"));
  CHECK(has(m, "sm(sm1):sm(sm2)"));
  CHECK(has(m, "fct(noise4)"));
  // A covariate's own lin/sm parts never interact.
  CHECK_FALSE(has(m, "lin(sm1):sm(sm1)"));
  CHECK_FALSE(has(m, "lin(lin2):lin(lin3)"));
  // Interactions come after all main effects.
  const auto first_interaction = std::find_if(m.terms.begin(), m.terms.end(), [](const TermSpec& t) {
    return t.is_interaction();
  });
  CHECK(std::all_of(first_interaction, m.terms.end(), [](const TermSpec& t) { return t.is_interaction(); }));
}

TEST_CASE("render reparses to the same spec") {
  const Schema s = additive_schema();
  for (const char* f : {"y ~ sm1 + f", "y ~ (sm1 + f)^2 - sm(sm1):fct(f)",
                        "y ~ lin(sm1, degree=2) + sm(sm2, K=12) + fct(noise4)",
                        "y ~ (sm1 + sm2 + f + lin1)^2 + lin2 + noise4"}) {
    CAPTURE(f);
    const ModelSpec a = parse_model(f, s);
    const ModelSpec b = parse_model(render(a), s);
    CHECK(a == b);
  }
}

TEST_CASE("explicit removal drops a term") {
  const ModelSpec m = parse_model("y ~ sm1 - sm(sm1)", additive_schema());
  CHECK(labels(m) == std::vector<std::string>{"u", "lin(sm1)"});
}

TEST_CASE("wrapper options are parsed") {
  const ModelSpec m = parse_model("y ~ sm(sm1, K=10) + lin(sm2, degree=3)", additive_schema());
  REQUIRE(m.find("sm(sm1, K=10)"));
  CHECK(m.find("sm(sm1, K=10)")->parts[0].options.n_basis == 10);
  CHECK(m.find("lin(sm2, degree=3)")->parts[0].options.degree == 3);
}

TEST_CASE("formula errors carry positions") {
  const Schema s = additive_schema();
  CHECK_THROWS_AS(parse_model("y sm1", s), FormulaError);
  CHECK_THROWS_AS(parse_model("y ~ (sm1 + sm2", s), FormulaError);
  CHECK_THROWS_AS(parse_model("y ~ sm1 + nope", s), FormulaError);
  CHECK_THROWS_AS(parse_model("y ~ (sm1 + sm2)^3", s), FormulaError);
  CHECK_THROWS_AS(parse_model("y ~ sm(f)", s), FormulaError);
  CHECK_THROWS_AS(parse_model("y ~ y", s), FormulaError);
  try {
    parse_model("y ~ sm1 + bogus(sm2)", s);
    FAIL("expected an error");
  } catch (const FormulaError& e) {
    CHECK(e.offset() == 10);
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
}

TEST_CASE("family names") {
  CHECK(parse_family("binomial") == FamilyKind::binomial);
  CHECK(to_string(FamilyKind::poisson) == "poisson");
  CHECK_THROWS_AS(parse_family("gamma"), ConfigError);
}

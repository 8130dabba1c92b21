#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ssgam/cli.hpp"
#include "ssgam/simulate.hpp"

using namespace ssgam;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ssgam_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

json small_config(const fs::path& out) {
  return {{"formula", "y ~ sm1 + f + noise2"},
          {"simulate", {{"generator", "additive"}, {"n", 90}, {"seed", 3}}},
          {"mcmc", {{"n_chains", 2}, {"chain_length", 100}, {"burnin", 20}, {"thin", 2}}},
          {"seed", 11},
          {"output", out.string()}};
}

}  // namespace

TEST_CASE("config parsing") {
  const fs::path dir = scratch("config");
  RunConfig c = parse_config(small_config(dir / "out"));
  CHECK(c.mcmc.n_chains == 2);
  CHECK(c.mcmc.seed == 11);
  CHECK(c.hyper.a_tau == 5);
  CHECK(c.hyper.v0 == 2.5e-4);
  CHECK(c.simulate->n == 90);

  const RunConfig defaults = parse_config({{"formula", "y ~ x"}, {"simulate", json::object()}});
  CHECK(defaults.mcmc.n_chains == 3);
  CHECK(defaults.mcmc.chain_length == 2500);
  CHECK(defaults.mcmc.burnin == 100);
  CHECK(defaults.mcmc.thin == 5);
  CHECK(defaults.design.decomposition == Decomposition::orthogonal);

  json j = small_config(dir);
  j["mcmc"]["chains"] = 4;
  CHECK_THROWS_WITH_AS(parse_config(j), "unknown config key 'mcmc.chains'", ConfigError);
  j = small_config(dir);
  j["data"] = "missing.csv";
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j = small_config(dir);
  j.erase("simulate");
  j["data"] = "missing.csv";
  CHECK_THROWS_WITH_AS(parse_config(j, dir.string()), doctest::Contains("not found"), ConfigError);
  j = small_config(dir);
  j["family"] = "gamma";
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j = small_config(dir);
  j["hyper"] = {{"v0", -1}};
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j = small_config(dir);
  j["mcmc"]["thin"] = "five";
  CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("wrong type"), ConfigError);
}

TEST_CASE("CSV ingest") {
  const fs::path dir = scratch("ingest");
  spit(dir / "a.csv", "y,x,g\n1,0.5,a\n0,1.5,b\n1,2.5,a\n");
  const DataTable t = read_csv((dir / "a.csv").string());
  CHECK(t.type("x") == ColumnType::numeric);
  CHECK(t.type("g") == ColumnType::factor);
  CHECK(t.factor("g").levels == std::vector<std::string>{"a", "b"});

  spit(dir / "b.csv", "y,x\n1,0.5\n0,\n");
  CHECK_THROWS_WITH_AS(read_csv((dir / "b.csv").string()), doctest::Contains("row 2, column 'x'"), DataError);

  spit(dir / "c.csv", "y,x\n1,0.5\n2,0.7\n0,0.1\n1,0.3\n0,0.9\n1,0.2\n0,0.4\n1,0.8\n");
  json cfg = {{"formula", "y ~ lin(x)"}, {"family", "binomial"}, {"data", "c.csv"}};
  const RunConfig rc = parse_config(cfg, dir.string());
  CHECK_THROWS_WITH_AS(run_fit(rc), doctest::Contains("responses between 0 and 1"), DataError);
}

TEST_CASE("fit, reload, predict and summarize") {
  const fs::path dir = scratch("fit");
  const RunConfig c = parse_config(small_config(dir / "a"));
  const auto written = fit_command(c);
  for (const char* f : {"fit.json", "samples.csv", "summary.txt", "summary.json", "model_table.json",
                        "diagnostics.json", "manifest.json", "effects/index.json", "effects/sm1.json"})
    CHECK(fs::exists(dir / "a" / f));

  const std::string header = slurp(dir / "a" / "samples.csv").substr(0, 200);
  CHECK(header.rfind("chain,iter,alpha.lin(sm1),alpha.sm(sm1),", 0) == 0);

  const json manifest = json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest["seed"] == 11);
  CHECK(manifest["config"]["mcmc"]["n_chains"] == 2);
  CHECK(manifest.contains("wall_clock_seconds"));

  SUBCASE("determinism") {
    RunConfig again = c;
    again.output_dir = (dir / "b").string();
    fit_command(again);
    CHECK(slurp(dir / "a" / "samples.csv") == slurp(dir / "b" / "samples.csv"));
    again.output_dir = (dir / "c").string();
    again.mcmc.seed = 12;
    fit_command(again);
    CHECK(slurp(dir / "a" / "samples.csv") != slurp(dir / "c" / "samples.csv"));
  }

  SUBCASE("reloaded fit matches the original") {
    const FitResult original = run_fit(c);
    const FitResult loaded = load_fit((dir / "a").string());
    REQUIRE(loaded.chains.size() == original.chains.size());
    for (std::size_t k = 0; k < loaded.chains.size(); ++k) {
      CHECK(loaded.chains[k].alpha == original.chains[k].alpha);
      CHECK(loaded.chains[k].xi == original.chains[k].xi);
      CHECK(loaded.chains[k].w == original.chains[k].w);
      CHECK(loaded.chains[k].iteration == original.chains[k].iteration);
      CHECK((loaded.chains[k].eta - original.chains[k].eta).cwiseAbs().maxCoeff() < 1e-10);
    }
    const Prediction a = predict(original, original.data);
    const Prediction b = predict(loaded, original.data);
    CHECK((a.eta.mean - b.eta.mean).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(summary_text(original) == summary_text(loaded));
  }

  SUBCASE("predict command") {
    const FitResult fit = load_fit((dir / "a").string());
    {
      std::ofstream out(dir / "train.csv");
      write_csv(fit.data, out);
    }
    predict_command((dir / "a").string(), (dir / "train.csv").string(), (dir / "pred.csv").string());
    std::ifstream in(dir / "pred.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("mean,mean.q10,mean.q90,eta,eta.q10,eta.q90,", 0) == 0);
    const Prediction expected = predict(fit, fit.data);
    int rows = 0;
    while (std::getline(in, line)) {
      const auto cells = split_csv_line(line);
      CHECK(std::stod(cells[0]) == expected.response.mean[rows]);
      ++rows;
    }
    CHECK(rows == 90);

    spit(dir / "empty.csv", "y,sm1,f,noise2\n");
    predict_command((dir / "a").string(), (dir / "empty.csv").string(), (dir / "empty_pred.csv").string());
    const std::string empty = slurp(dir / "empty_pred.csv");
    CHECK(std::count(empty.begin(), empty.end(), '\n') == 1);

    spit(dir / "unseen.csv", "sm1,f,noise2\n0.5,7,0.5\n");
    CHECK_THROWS_WITH_AS(
        predict_command((dir / "a").string(), (dir / "unseen.csv").string(), (dir / "x.csv").string()),
        doctest::Contains("unseen factor level '7'"), DataError);
    spit(dir / "short.csv", "sm1,noise2\n0.5,0.5\n");
    CHECK_THROWS_WITH_AS(
        predict_command((dir / "a").string(), (dir / "short.csv").string(), (dir / "x.csv").string()),
        doctest::Contains("missing column 'f'"), DataError);
  }

  SUBCASE("summarize command and separate effects") {
    summarize_command((dir / "a").string(), (dir / "s").string(), true);
    CHECK(slurp(dir / "s" / "summary.txt") == slurp(dir / "a" / "summary.txt"));
    CHECK(fs::exists(dir / "s" / "effects" / "sm_sm1_.json"));
    const json e = json::parse(slurp(dir / "s" / "effects" / "sm_sm1_.json"));
    CHECK(e["grid"]["sm1"].size() == 100);
    CHECK(e["quantiles"]["0.1"].size() == 100);
    CHECK(e["quantiles"]["0.9"].size() == 100);
  }

  SUBCASE("archive errors") {
    json j = json::parse(slurp(dir / "a" / "fit.json"));
    j["version"] = 99;
    fs::create_directories(dir / "v");
    spit(dir / "v" / "fit.json", j.dump());
    fs::copy_file(dir / "a" / "samples.csv", dir / "v" / "samples.csv");
    CHECK_THROWS_WITH_AS(load_fit((dir / "v").string()), doctest::Contains("version 99"), ArchiveError);
    CHECK_THROWS_AS(load_fit((dir / "nowhere").string()), ArchiveError);
  }
}

TEST_CASE("command-line exit codes") {
  const fs::path dir = scratch("exit");
  spit(dir / "good.json", small_config(dir / "out").dump());
  json bad = small_config(dir / "out2");
  bad["formula"] = "y ~ sm1 + nothing";
  spit(dir / "bad.json", bad.dump());
  const std::string cli = SSGAM_CLI_PATH;
  CHECK(std::system((cli + " fit -c " + (dir / "good.json").string() + " > /dev/null").c_str()) == 0);
  CHECK(std::system((cli + " fit -c " + (dir / "bad.json").string() + " > /dev/null 2> " +
                     (dir / "err.txt").string()).c_str()) != 0);
  CHECK(slurp(dir / "err.txt").rfind("error [formula]:", 0) == 0);
  CHECK(std::system((cli + " summarize -f " + (dir / "missing").string() + " > /dev/null 2>&1").c_str()) != 0);
}

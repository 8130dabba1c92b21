// Command-line front end: fit, predict, summarize, simulate.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "ssgam/cli.hpp"
#include "ssgam/error.hpp"
#include "ssgam/simulate.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Bayesian additive models with spike-and-slab term selection"};
  app.set_version_flag("--version", ssgam::kVersion);
  app.require_subcommand(1);

  std::string config_path, out_dir, predict_path;
  std::optional<std::uint64_t> seed;
  bool separate = false;
  auto* fit = app.add_subcommand("fit", "fit a model described by a JSON config");
  fit->add_option("-c,--config", config_path, "config file")->required()->check(CLI::ExistingFile);
  fit->add_option("-o,--out", out_dir, "output directory (overrides the config)");
  fit->add_option("-s,--seed", seed, "random seed (overrides the config)");
  fit->add_flag("--separate-effects", separate, "write one effect per term instead of cumulated effects");
  fit->add_option("--predict", predict_path, "also predict for this CSV (overrides the config)")
      ->check(CLI::ExistingFile);

  std::string archive, newdata, pred_out = "predictions.csv";
  std::vector<double> quantiles = {0.1, 0.9};
  auto* pred = app.add_subcommand("predict", "predict new data from a saved fit");
  pred->add_option("-f,--fit", archive, "fit directory (holding fit.json and samples.csv)")->required();
  pred->add_option("-d,--data", newdata, "CSV with new rows")->required()->check(CLI::ExistingFile);
  pred->add_option("-o,--out", pred_out, "output CSV");
  pred->add_option("-q,--quantiles", quantiles, "band quantile levels")->expected(1, -1);

  std::string sum_out;
  bool sum_separate = false;
  auto* summ = app.add_subcommand("summarize", "recompute summaries from a saved fit");
  summ->add_option("-f,--fit", archive, "fit directory")->required();
  summ->add_option("-o,--out", sum_out, "output directory (defaults to the fit directory)");
  summ->add_flag("--separate-effects", sum_separate, "write one effect per term");

  std::string generator = "additive", sim_out = "data.csv";
  int n = 0;
  std::uint64_t sim_seed = 1;
  double snr = 3.0;
  auto* sim = app.add_subcommand("simulate", "write a simulated data set");
  sim->add_option("-g,--generator", generator, "additive or logistic")
      ->check(CLI::IsMember({"additive", "logistic"}));
  sim->add_option("-n", n, "rows (default 200 additive, 524 logistic)");
  sim->add_option("-s,--seed", sim_seed, "random seed");
  sim->add_option("--snr", snr, "signal-to-noise ratio (additive)");
  sim->add_option("-o,--out", sim_out, "output CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    std::vector<std::string> written;
    if (*fit) {
      ssgam::RunConfig config = ssgam::load_config(config_path);
      if (!out_dir.empty()) config.output_dir = out_dir;
      if (seed) config.mcmc.seed = *seed;
      if (separate) config.separate_effects = true;
      if (!predict_path.empty()) config.test_data_path = predict_path;
      written = ssgam::fit_command(config, std::vector<std::string>(argv, argv + argc));
      for (auto& f : written) f = (std::filesystem::path(config.output_dir) / f).string();
    } else if (*pred) {
      written = ssgam::predict_command(archive, newdata, pred_out, quantiles);
    } else if (*summ) {
      const std::string dir = sum_out.empty() ? archive : sum_out;
      written = ssgam::summarize_command(archive, dir, sum_separate);
      for (auto& f : written) f = (std::filesystem::path(dir) / f).string();
    } else if (*sim) {
      const auto data = generator == "additive" ? ssgam::simulate_additive(sim_seed, n ? n : 200, snr)
                                                : ssgam::simulate_logistic(sim_seed, n ? n : 524);
      std::ofstream out(sim_out);
      if (!out) throw ssgam::ConfigError("cannot write " + sim_out);
      ssgam::write_csv(data.data, out);
      written.push_back(sim_out);
    }
    for (const auto& f : written) std::cout << f << "\n";
  } catch (const ssgam::Error& e) {
    std::cerr << "error [" << e.module() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// Command-line front end: dataset generation, experiment runs, aggregation.
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tbgp/experiments.hpp"
#include "tbgp/potential.hpp"

namespace {

int cmd_gen_data(const std::string& kind, int n, double l2, double u2, std::uint64_t seed,
                 const std::string& out, const tbgp::MooneyRivlinParams& params,
                 const std::string& sampling) {
  tbgp::DatasetMetadata meta;
  meta.kind = tbgp::dataset_kind_from_string(kind);
  meta.n = n;
  meta.seed = seed;
  meta.range = tbgp::StretchRange{l2, u2};
  meta.params = params;

  const auto mode = sampling == "uniform_square" ? tbgp::StretchSampling::uniform_square
                                                 : tbgp::StretchSampling::uniform_stretch;
  std::mt19937_64 rng(seed);
  const auto pairs = tbgp::make_dataset(meta.kind, n, meta.range, params, rng, mode);
  tbgp::write_dataset_csv(out, pairs, meta);
  std::cout << "wrote " << pairs.size() << " pairs to " << out << '\n';
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& output_dir) {
  tbgp::ExperimentConfig cfg = tbgp::load_config(config_path);
  if (!output_dir.empty()) cfg.output_dir = output_dir;

  const auto results = tbgp::run_learning_curve(cfg);
  int failures = 0;
  for (const auto& r : results) {
    if (!r.ok()) ++failures;
  }
  const auto agg = tbgp::aggregate_results(results);
  tbgp::write_report_csv(cfg.output_dir / "summary.csv", agg);

  std::cout << "completed " << results.size() << " fits across " << cfg.sizes.size()
            << " sizes; " << failures << " failures\n"
            << "results: " << (cfg.output_dir / "results.csv").string() << '\n'
            << "summary: " << (cfg.output_dir / "summary.csv").string() << '\n';
  return failures == 0 ? 0 : 2;
}

int cmd_report(const std::string& results_path, const std::string& out) {
  const auto rows = tbgp::read_results_csv(results_path);
  const auto agg = tbgp::aggregate_results(rows);
  tbgp::write_report_csv(out, agg);
  std::cout << "wrote " << agg.size() << " aggregate rows to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-constrained GP regression of hyperelastic constitutive models"};
  app.require_subcommand(1);

  // gen-data
  std::string gd_kind = "mooney_rivlin", gd_out = "dataset.csv", gd_sampling = "uniform_stretch";
  int gd_n = 100;
  double gd_l2 = 1.0, gd_u2 = 1.5;
  std::uint64_t gd_seed = 0;
  tbgp::MooneyRivlinParams gd_params;
  auto* gen = app.add_subcommand("gen-data", "Generate a labeled (B, sigma) dataset CSV");
  gen->add_option("--kind", gd_kind, "mooney_rivlin or matrix_exp")
      ->check(CLI::IsMember({"mooney_rivlin", "matrix_exp"}));
  gen->add_option("--n", gd_n, "number of pairs")->check(CLI::PositiveNumber);
  gen->add_option("--l2", gd_l2, "lower eigenvalue bound of B");
  gen->add_option("--u2", gd_u2, "upper eigenvalue bound of B");
  gen->add_option("--seed", gd_seed, "random seed");
  gen->add_option("--out", gd_out, "output CSV path");
  gen->add_option("--c1", gd_params.c1, "Mooney-Rivlin c1 (MPa)");
  gen->add_option("--c2", gd_params.c2, "Mooney-Rivlin c2 (MPa)");
  gen->add_option("--c3", gd_params.c3, "Mooney-Rivlin c3 (MPa)");
  gen->add_option("--sampling", gd_sampling, "uniform_stretch or uniform_square")
      ->check(CLI::IsMember({"uniform_stretch", "uniform_square"}));

  // run
  std::string run_config, run_outdir;
  auto* run = app.add_subcommand("run", "Run a learning-curve experiment from a config file");
  run->add_option("--config", run_config, "JSON experiment config")->required();
  run->add_option("--output-dir", run_outdir, "override the config's output directory");

  // report
  std::string rep_results = "results.csv", rep_out = "summary.csv";
  auto* rep = app.add_subcommand("report", "Aggregate per-trial results into medians + IQR");
  rep->add_option("--results", rep_results, "per-trial results CSV");
  rep->add_option("--out", rep_out, "aggregated output CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return cmd_gen_data(gd_kind, gd_n, gd_l2, gd_u2, gd_seed, gd_out, gd_params, gd_sampling);
    }
    if (run->parsed()) return cmd_run(run_config, run_outdir);
    if (rep->parsed()) return cmd_report(rep_results, rep_out);
  } catch (const tbgp::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tbgp/experiments.hpp"

using namespace tbgp;

namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

ExperimentConfig smoke_config(const fs::path& out_dir) {
  ExperimentConfig cfg;
  cfg.kind = DatasetKind::matrix_exp;
  cfg.sizes = {4};
  cfg.trials = 1;
  cfg.restarts = 2;
  cfg.test_size = 50;
  cfg.seed = 42;
  cfg.regressors = {Regressor::gp, Regressor::tbgp};
  cfg.output_dir = out_dir;
  cfg.record_timing = false;
  return cfg;
}

}  // namespace

TEST_CASE("evaluate_metrics on exact and shifted predictions") {
  Eigen::MatrixXd truth(3, 6), pred(3, 6);
  for (int c = 0; c < 6; ++c) {
    truth.col(c) << 1.0, 2.0, 3.0;
    pred.col(c) << 1.0, 2.0, 3.0;
  }
  const MetricRecord exact = evaluate_metrics(truth, pred);
  CHECK(exact.rmse_all == 0.0);
  CHECK(exact.fvu_all == doctest::Approx(0.0).epsilon(1e-14));

  const MetricRecord shifted = evaluate_metrics(truth, pred.array() + 0.7);
  CHECK(shifted.rmse_all == doctest::Approx(0.7).epsilon(1e-12));
  // Pearson correlation is shift invariant.
  CHECK(shifted.fvu_all == doctest::Approx(0.0).epsilon(1e-12));
  for (int c = 0; c < 6; ++c) {
    CHECK(shifted.rmse_comp[static_cast<std::size_t>(c)] == doctest::Approx(0.7).epsilon(1e-12));
  }
}

TEST_CASE("evaluate_metrics matches a hand-computed 3-point example") {
  // truth column (1,2,3) vs prediction (1.1, 1.9, 3.2), worked out by hand.
  Eigen::MatrixXd truth(3, 6), pred(3, 6);
  for (int c = 0; c < 6; ++c) {
    truth.col(c) << 1.0, 2.0, 3.0;
    pred.col(c) << 1.1, 1.9, 3.2;
  }
  const MetricRecord rec = evaluate_metrics(truth, pred);
  CHECK(rec.rmse_comp[0] == doctest::Approx(0.14142135623730964).epsilon(1e-12));
  CHECK(rec.fvu_comp[0] == doctest::Approx(0.018545994065282123).epsilon(1e-10));
  CHECK(rec.rmse_all == doctest::Approx(0.14142135623730964).epsilon(1e-12));
}

TEST_CASE("evaluate_metrics flags zero-variance truth columns") {
  Eigen::MatrixXd truth(3, 6), pred(3, 6);
  truth.setOnes();
  pred.setRandom();
  const MetricRecord rec = evaluate_metrics(truth, pred);
  for (int c = 0; c < 6; ++c) CHECK(std::isnan(rec.fvu_comp[static_cast<std::size_t>(c)]));
}

TEST_CASE("evaluate_metrics validates shapes") {
  CHECK_THROWS_AS(evaluate_metrics(Eigen::MatrixXd(3, 6), Eigen::MatrixXd(4, 6)),
                  InvalidInputError);
  CHECK_THROWS_AS(evaluate_metrics(Eigen::MatrixXd(1, 6), Eigen::MatrixXd(1, 6)),
                  InvalidInputError);
}

TEST_CASE("derive_seed is deterministic and sensitive to every slot") {
  CHECK(derive_seed(1, 2, 3, 4) == derive_seed(1, 2, 3, 4));
  CHECK(derive_seed(1, 2, 3, 4) != derive_seed(1, 2, 3, 5));
  CHECK(derive_seed(1, 2, 3, 4) != derive_seed(1, 2, 4, 4));
  CHECK(derive_seed(1, 2, 3, 4) != derive_seed(1, 3, 3, 4));
  CHECK(derive_seed(1, 2, 3, 4) != derive_seed(2, 2, 3, 4));
}

TEST_CASE("config loading: valid file") {
  const fs::path dir = fresh_dir("tbgp_cfg_ok");
  write_file(dir / "cfg.json", R"({
    "version": 1,
    "problem": {"kind": "mooney_rivlin", "range": [1.0, 1.5]},
    "train": {"sizes": [10, 20], "trials": 3, "restarts": 4, "eps2": 1e-10},
    "test": {"size": 100},
    "regressors": ["gp", "tbgp", "potential_tbgp"],
    "seed": 7,
    "output_dir": "out"
  })");
  const ExperimentConfig cfg = load_config(dir / "cfg.json");
  CHECK(cfg.kind == DatasetKind::mooney_rivlin);
  CHECK(cfg.sizes == std::vector<int>{10, 20});
  CHECK(cfg.trials == 3);
  CHECK(cfg.restarts == 4);
  CHECK(cfg.test_size == 100);
  CHECK(cfg.seed == 7);
  CHECK(cfg.regressors.size() == 3);
  fs::remove_all(dir);
}

TEST_CASE("config loading: errors carry location information") {
  const fs::path dir = fresh_dir("tbgp_cfg_bad");

  write_file(dir / "syntax.json", "{\n  \"version\": 1,\n  oops\n}\n");
  try {
    load_config(dir / "syntax.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);  // line of 'oops'
  }

  write_file(dir / "unknown.json", R"({
    "version": 1,
    "problem": {"kind": "matrix_exp"},
    "train": {"sizes": [4]},
    "typo_key": true
  })");
  try {
    load_config(dir / "unknown.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("typo_key") != std::string::npos);
  }

  write_file(dir / "badver.json", R"({"version": 2, "problem": {"kind": "matrix_exp"},
                                      "train": {"sizes": [4]}})");
  CHECK_THROWS_AS(load_config(dir / "badver.json"), ConfigError);

  // potential_tbgp needs strictly positive I3, which matrix_exp cannot promise.
  write_file(dir / "potexp.json", R"({
    "version": 1,
    "problem": {"kind": "matrix_exp"},
    "train": {"sizes": [4]},
    "regressors": ["potential_tbgp"]
  })");
  CHECK_THROWS_AS(load_config(dir / "potexp.json"), ConfigError);

  fs::remove_all(dir);
}

TEST_CASE("smoke run produces finite rows for every regressor") {
  const fs::path dir = fresh_dir("tbgp_smoke_run");
  const ExperimentConfig cfg = smoke_config(dir);
  const auto results = run_learning_curve(cfg);

  REQUIRE(results.size() == 2);  // one row per regressor
  for (const auto& r : results) {
    CHECK(r.ok());
    CHECK(std::isfinite(r.metrics.rmse_all));
    CHECK(std::isfinite(r.metrics.fvu_all));
    CHECK(std::isfinite(r.cond_estimate));
    CHECK(r.size == 4);
    CHECK(r.trial == 0);
  }
  CHECK(fs::exists(dir / "results.csv"));
  fs::remove_all(dir);
}

TEST_CASE("identical config and seed give byte-identical result files") {
  const fs::path a = fresh_dir("tbgp_det_a");
  const fs::path b = fresh_dir("tbgp_det_b");
  ExperimentConfig ca = smoke_config(a);
  ExperimentConfig cb = smoke_config(b);
  ca.trials = 2;
  cb.trials = 2;
  run_learning_curve(ca);
  run_learning_curve(cb);
  CHECK(slurp(a / "results.csv") == slurp(b / "results.csv"));
  CHECK(!slurp(a / "results.csv").empty());
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("a truncated results file resumes to the identical full file") {
  const fs::path full = fresh_dir("tbgp_resume_full");
  const fs::path part = fresh_dir("tbgp_resume_part");
  ExperimentConfig cf = smoke_config(full);
  cf.trials = 3;
  run_learning_curve(cf);
  const std::string complete = slurp(full / "results.csv");

  // Keep the header, all of trial 0, and a torn fragment of trial 1.
  std::istringstream in(complete);
  std::string line;
  std::ostringstream torn;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (n <= 1 + 14 + 3) torn << line << '\n';  // header + trial0 (2 x 7 rows) + 3 rows
  }
  write_file(part / "results.csv", torn.str());

  ExperimentConfig cp = smoke_config(part);
  cp.trials = 3;
  run_learning_curve(cp);
  CHECK(slurp(part / "results.csv") == complete);
  fs::remove_all(full);
  fs::remove_all(part);
}

TEST_CASE("results CSV round trip preserves trial rows") {
  const fs::path dir = fresh_dir("tbgp_csv_rt");
  ExperimentConfig cfg = smoke_config(dir);
  cfg.rotation_test = true;
  const auto results = run_rotation_test(cfg);
  const auto back = read_results_csv(dir / "results.csv");
  REQUIRE(back.size() == results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    CHECK(back[i].regressor == results[i].regressor);
    CHECK(back[i].size == results[i].size);
    CHECK(back[i].seed == results[i].seed);
    CHECK(back[i].metrics.rmse_all == doctest::Approx(results[i].metrics.rmse_all));
    CHECK(std::isfinite(back[i].rotated_rmse));
    CHECK(back[i].status == "ok");
  }
  fs::remove_all(dir);
}

TEST_CASE("rotation test records rotated-training error") {
  const fs::path dir = fresh_dir("tbgp_rot_smoke");
  ExperimentConfig cfg = smoke_config(dir);
  cfg.sizes = {16};
  const auto results = run_rotation_test(cfg);
  for (const auto& r : results) {
    CHECK(std::isfinite(r.rotated_rmse));
    CHECK(r.rotated_rmse >= 0.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("per-trial fit failures are recorded in-row and the run continues") {
  const fs::path dir = fresh_dir("tbgp_failrow");
  ExperimentConfig cfg = smoke_config(dir);
  cfg.sizes = {1};  // tbgp needs at least 2 pairs, gp copes
  const auto results = run_learning_curve(cfg);
  REQUIRE(results.size() == 2);
  CHECK(results[0].regressor == "gp");
  CHECK(results[0].ok());
  CHECK(results[1].regressor == "tbgp");
  CHECK(results[1].status == "error:invalid_input");

  // Failed rows survive the CSV roundtrip with their status.
  const auto back = read_results_csv(dir / "results.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].status == "error:invalid_input");

  const auto agg = aggregate_results(results);
  for (const auto& a : agg) {
    if (a.regressor == "tbgp") {
      CHECK(a.n_failed == 1);
      CHECK(std::isnan(a.rmse[0]));
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("aggregation groups by regressor and size") {
  const fs::path dir = fresh_dir("tbgp_agg");
  ExperimentConfig cfg = smoke_config(dir);
  cfg.sizes = {4, 8};
  cfg.trials = 3;
  const auto results = run_learning_curve(cfg);
  CHECK(results.size() == 2 * 2 * 3);  // sizes x regressors x trials

  const auto agg = aggregate_results(results);
  REQUIRE(agg.size() == 4);  // one row per (regressor, size)
  for (const auto& a : agg) {
    CHECK(a.n_trials == 3);
    CHECK(a.n_failed == 0);
    CHECK(std::isfinite(a.rmse[0]));
    CHECK(a.rmse[1] <= a.rmse[0]);
    CHECK(a.rmse[0] <= a.rmse[2]);
  }

  write_report_csv(dir / "report.csv", agg);
  const std::string report = slurp(dir / "report.csv");
  CHECK(std::count(report.begin(), report.end(), '\n') == 5);  // header + 4 rows
  fs::remove_all(dir);
}

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tbgp/datagen.hpp"
#include "tbgp/tbgp_model.hpp"

namespace tbgp {

enum class Regressor { gp, tbgp, potential_tbgp };

std::string to_string(Regressor r);
Regressor regressor_from_string(const std::string& s);

/// Declarative description of a learning-curve experiment. Loaded from a
/// versioned JSON file; see README for the schema.
struct ExperimentConfig {
  DatasetKind kind = DatasetKind::matrix_exp;
  StretchRange range{1.0, 1.5};
  MooneyRivlinParams params{};
  StretchSampling sampling = StretchSampling::uniform_stretch;

  std::vector<int> sizes;
  int trials = 100;
  int restarts = 20;
  int test_size = 10000;
  double eps2 = 1e-10;

  std::vector<Regressor> regressors{Regressor::gp, Regressor::tbgp, Regressor::potential_tbgp};
  bool rotation_test = false;
  FeatureMode feature_mode = FeatureMode::invariants;

  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  /// Wall-clock timing makes result files non-reproducible byte-for-byte;
  /// disable it when exact determinism of the output matters.
  bool record_timing = true;
  /// Write (I1,I2,I3,phi) scatter rows at the largest size, first trial.
  bool dump_potential_scatter = false;

  void validate() const;  // throws ConfigError
};

/// Parses and validates a config file; syntax errors are reported with
/// line/column, semantic errors with the offending key path.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Component order follows the tensor serialization contract
/// (xx, yy, zz, xy, xz, yz); index 6 is the pooled value.
struct MetricRecord {
  std::array<double, 6> rmse_comp{};
  std::array<double, 6> fvu_comp{};  // 1 - rho^2; NaN when undefined
  double rmse_all = 0.0;
  double fvu_all = 0.0;
};

/// Per-component and pooled RMSE plus fraction of variance unexplained.
/// Zero-variance truth columns report NaN for 1 - rho^2.
MetricRecord evaluate_metrics(const Eigen::Ref<const Eigen::MatrixXd>& truth,
                              const Eigen::Ref<const Eigen::MatrixXd>& pred);

struct TrialResult {
  std::string regressor;
  int size = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  MetricRecord metrics;
  double rotated_rmse = std::numeric_limits<double>::quiet_NaN();
  double pot_rmse = std::numeric_limits<double>::quiet_NaN();
  double pot_fvu = std::numeric_limits<double>::quiet_NaN();
  double cond_estimate = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
};

/// SplitMix64-style seed derivation; the per-trial stream is
/// derive_seed(master, size, trial, salt) so trials are independent of
/// execution order and of each other.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c);

/// Runs the learning-curve protocol: per (size, trial) a fresh training set,
/// a shared held-out test set, one fit per enabled regressor. Rows stream to
/// <output_dir>/results.csv as trials complete; rerunning with a partial
/// file resumes after the last complete (size, trial) group. Per-trial fit
/// failures are recorded in-row and do not stop the run.
std::vector<TrialResult> run_learning_curve(const ExperimentConfig& cfg);

/// Learning curve with the rotated-training-set evaluation forced on: after
/// fitting, every training pair is rotated by a fresh random rotation and
/// the prediction error on the rotated pairs is recorded.
std::vector<TrialResult> run_rotation_test(const ExperimentConfig& cfg);

/// Results CSV schema (fixed column set, empty field = not applicable):
/// regressor,size,trial,seed,component,rmse,fvu,rotated_rmse,pot_rmse,
/// pot_fvu,cond_estimate,wall_ms,status
void append_results_csv(const std::filesystem::path& path, const std::vector<TrialResult>& rows,
                        bool write_header);
std::vector<TrialResult> read_results_csv(const std::filesystem::path& path);

struct AggregateRow {
  std::string regressor;
  int size = 0;
  int n_trials = 0;
  int n_failed = 0;
  // median / q25 / q75 per metric; NaN when no data
  std::array<double, 3> rmse{}, fvu{}, rotated_rmse{}, pot_rmse{}, pot_fvu{}, cond{}, wall_ms{};
};

/// One row per (regressor, size): medians with interquartile bands over the
/// per-trial pooled metrics. Failed trials are excluded from the statistics
/// but counted.
std::vector<AggregateRow> aggregate_results(const std::vector<TrialResult>& rows);
void write_report_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows);

}  // namespace tbgp

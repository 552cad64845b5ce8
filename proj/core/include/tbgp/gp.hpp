#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "tbgp/evidence.hpp"

namespace tbgp {

/// Exact-inference GP regressor with a shared squared-exponential kernel
/// across all output columns. Immutable once fitted; prediction is safe to
/// call concurrently.
class GpModel {
public:
  /// Factorizes K(X,X) + eps2 I and precomputes the weight matrix. On
  /// factorization failure the jitter escalates tenfold per attempt up to
  /// 1e-6; if every rung fails an IllConditionedError carries the ladder.
  static GpModel fit(Eigen::MatrixXd x, Eigen::MatrixXd y, Kernel kernel, double eps2);

  /// Posterior mean K* (K + eps2 I)^-1 Y at query rows (Q x D) -> (Q x M).
  Eigen::MatrixXd predict_mean(const Eigen::Ref<const Eigen::MatrixXd>& xs) const;

  /// Single-point posterior mean evaluated in extended precision. Optimized
  /// fits can carry weight entries orders of magnitude above the prediction;
  /// the extended accumulation keeps the cancellation noise below the
  /// rotational-equivariance budget of the tensor-basis models.
  Eigen::VectorXd predict_mean_accurate(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Posterior variance diag(K** - K* (K+eps2 I)^-1 K*^T) + eps2, with the
  /// epistemic part clamped at zero (clamp events are counted).
  Eigen::VectorXd predict_var(const Eigen::Ref<const Eigen::MatrixXd>& xs) const;

  /// Log marginal likelihood of the training data, summed over output columns.
  double log_evidence() const { return log_evidence_; }

  const Eigen::MatrixXd& inputs() const { return x_; }
  const Eigen::MatrixXd& targets() const { return y_; }
  const Kernel& kernel() const { return kernel_; }
  double noise_variance() const { return eps2_requested_; }
  /// Noise actually used after any jitter escalation.
  double effective_noise_variance() const { return eps2_used_; }
  const std::vector<double>& jitter_ladder() const { return jitter_ladder_; }
  bool duplicate_rows_flagged() const { return duplicate_rows_; }
  /// kappa_2(K + eps2 I) proxy from the Cholesky diagonal ratio.
  double condition_estimate() const { return condition_estimate_; }
  long variance_clamp_count() const { return variance_clamps_.load(); }

  /// Self-describing JSON dump (format_version, X, Y, kernel, eps2). Reload
  /// refits the factorization from the same bytes, so predictions on the
  /// same platform are bit-identical.
  void save(const std::filesystem::path& path) const;
  static GpModel load(const std::filesystem::path& path);

  GpModel(const GpModel& o) { copy_from(o); }
  GpModel& operator=(const GpModel& o) {
    copy_from(o);
    return *this;
  }
  GpModel(GpModel&&) = default;
  GpModel& operator=(GpModel&&) = default;

private:
  GpModel() = default;
  void copy_from(const GpModel& o);

  Eigen::MatrixXd x_, y_;
  Kernel kernel_;
  double eps2_requested_ = 0.0;
  double eps2_used_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd weights_;  // (K + eps2 I)^-1 Y
  double log_evidence_ = 0.0;
  double condition_estimate_ = 0.0;
  bool duplicate_rows_ = false;
  std::vector<double> jitter_ladder_;
  mutable std::atomic<long> variance_clamps_{0};
};

/// Evidence objective for a plain GP over (X, Y); caches the squared
/// distance matrix so hyperparameter iterations cost one factorization.
class GpEvidenceProblem final : public EvidenceProblem {
public:
  GpEvidenceProblem(Eigen::MatrixXd x, Eigen::MatrixXd y, double eps2);

  int size() const override { return static_cast<int>(x_.rows()); }
  const Eigen::MatrixXd& targets() const override { return y_; }
  double noise_variance() const override { return eps2_; }
  void covariance(double theta1, double theta2, Eigen::MatrixXd& k) const override;
  void covariance_dtheta2(double theta1, double theta2, Eigen::MatrixXd& dk) const override;

private:
  Eigen::MatrixXd x_, y_;
  Eigen::MatrixXd dist2_;
  double eps2_;
};

/// Multi-start evidence maximization over (log theta1, log theta2).
FitReport optimize_hyperparameters(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                   double eps2, int restarts, std::mt19937_64& rng,
                                   const OptimizerOptions& options = {});

/// optimize_hyperparameters followed by fit with the winning kernel.
GpModel fit_optimized(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double eps2,
                      int restarts, std::mt19937_64& rng, const OptimizerOptions& options = {},
                      FitReport* report_out = nullptr);

}  // namespace tbgp

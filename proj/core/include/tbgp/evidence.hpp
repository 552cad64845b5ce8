#pragma once

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "tbgp/errors.hpp"

namespace tbgp {

/// Squared-exponential covariance k(x,x') = theta1 * exp(-theta2 |x-x'|^2).
struct Kernel {
  double theta1 = 1.0;  // signal variance
  double theta2 = 1.0;  // inverse squared length scale

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& y) const {
    return theta1 * std::exp(-theta2 * (x - y).squaredNorm());
  }
};

inline double kernel_eval(const Kernel& k, const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::Ref<const Eigen::VectorXd>& y) {
  return k(x, y);
}

/// A marginal-likelihood objective over (theta1, theta2). Implementations
/// assemble the (noiseless) covariance of their joint system and its
/// theta2-derivative; the theta1-derivative is K/theta1 since the kernel is
/// linear in theta1.
class EvidenceProblem {
public:
  virtual ~EvidenceProblem() = default;
  virtual int size() const = 0;
  virtual const Eigen::MatrixXd& targets() const = 0;  // size() x M
  virtual double noise_variance() const = 0;
  virtual void covariance(double theta1, double theta2, Eigen::MatrixXd& k) const = 0;
  virtual void covariance_dtheta2(double theta1, double theta2, Eigen::MatrixXd& dk) const = 0;
};

struct EvidenceValue {
  double value = 0.0;                // log evidence, summed over target columns
  Eigen::Vector2d grad_log_theta{0.0, 0.0};  // d/d log(theta1), d/d log(theta2)
  bool ok = false;                   // false when factorization failed
};

/// Log evidence and (optionally) its gradient in log-hyperparameter space.
/// A failed Cholesky factorization yields ok = false, value = -inf.
EvidenceValue evaluate_evidence(const EvidenceProblem& problem, double theta1, double theta2,
                                bool want_gradient);

struct OptimizerOptions {
  int max_iterations = 60;
  int memory = 8;              // L-BFGS history length
  double grad_tol = 1e-6;      // relative to max(1, |L|)
  double f_tol = 1e-10;        // relative decrease threshold
  double init_low = -4.0;      // log-space initialization range
  double init_high = 4.0;
  double bound_low = -10.0;    // log-space box bounds
  double bound_high = 10.0;
};

enum class RestartStatus { converged, max_iterations, failed };

struct RestartRecord {
  Eigen::Vector2d log_theta{0.0, 0.0};
  double value = 0.0;
  RestartStatus status = RestartStatus::failed;
  int iterations = 0;
};

struct FitReport {
  Kernel kernel;              // best restart
  double log_evidence = 0.0;  // evidence at `kernel`
  int restarts = 0;
  std::vector<RestartRecord> records;
};

/// Multi-start maximization of the log evidence with L-BFGS in log space.
/// Initial points are drawn uniformly in [init_low, init_high]^2; iterates
/// are kept inside [bound_low, bound_high]^2. Throws OptimizationFailedError
/// when no restart reaches a finite evidence value.
FitReport maximize_evidence(const EvidenceProblem& problem, int restarts, std::mt19937_64& rng,
                            const OptimizerOptions& options = {});

}  // namespace tbgp

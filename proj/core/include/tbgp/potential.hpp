#pragma once

#include <array>
#include <filesystem>
#include <random>
#include <vector>

#include "tbgp/datagen.hpp"
#include "tbgp/evidence.hpp"
#include "tbgp/materials.hpp"
#include "tbgp/tbgp_model.hpp"
#include "tbgp/tensor.hpp"

namespace tbgp {

/// Maps expansion coefficients at a stretch state to the partial derivatives
/// of the strain-energy density:
///   dPhi/dI1 = (I3^{1/2}/2)(c2 + c3 I1)
///   dPhi/dI2 = -c3 I3^{1/2}/2
///   dPhi/dI3 = c1 / (2 I3^{1/2})
/// Throws InvalidStretchError when I3 <= 0.
PotentialGradientSample coefficients_to_gradient(const BasisCoefficients& c,
                                                 const Invariants& inv);

/// Exact algebraic inverse of coefficients_to_gradient.
BasisCoefficients gradient_to_coefficients(const PotentialGradientSample& g);

/// Analytic derivative blocks of the squared-exponential kernel between two
/// point sets in invariant space. d_first[i] is the derivative with respect
/// to component i of the FIRST argument; d_both[i][j] differentiates with
/// respect to component i of the first and component j of the second.
struct KernelDerivativeBlocks {
  Eigen::MatrixXd value;                                   // N x N'
  std::array<Eigen::MatrixXd, 3> d_first;                  // each N x N'
  std::array<std::array<Eigen::MatrixXd, 3>, 3> d_both;    // each N x N'
};

KernelDerivativeBlocks kernel_derivative_blocks(const Kernel& k,
                                                const Eigen::Ref<const Eigen::MatrixXd>& a,
                                                const Eigen::Ref<const Eigen::MatrixXd>& b);

/// GP over the strain-energy density observed only through its gradient,
/// grounded by Phi(3,3,1) = 0. The joint covariance over
/// [ground value; dPhi/dI1 rows; dPhi/dI2 rows; dPhi/dI3 rows] is the
/// (3N+1) x (3N+1) augmented block matrix; the weight vector solves it
/// against the observed targets.
class PotentialGpModel {
public:
  static PotentialGpModel fit(const std::vector<TensorPair>& pairs, double eps2, int restarts,
                              std::mt19937_64& rng, const OptimizerOptions& options = {});

  /// E[Phi] at an invariant triple (cross-covariance row times weights).
  double predict_potential(const Invariants& inv) const;

  /// Predicted (dPhi/dI1, dPhi/dI2, dPhi/dI3) at an invariant triple.
  Eigen::Vector3d predict_gradient(const Invariants& inv) const;

  /// Gradient prediction mapped through gradient_to_coefficients and the
  /// tensor basis. Throws InvalidStretchError when I3(B) <= 0.
  SymTensor3 predict_stress(const SymTensor3& b) const;

  const Kernel& kernel() const { return kernel_; }
  const FitReport& fit_report() const { return report_; }
  double effective_noise_variance() const { return eps2_used_; }
  const std::vector<double>& jitter_ladder() const { return jitter_ladder_; }
  double condition_estimate() const { return condition_estimate_; }
  /// Phi-hat at the grounding point; the fit keeps |residual| <= 1e-6 MPa.
  double grounding_residual() const { return grounding_residual_; }
  const Eigen::MatrixXd& training_invariants() const { return invariants_; }
  static Eigen::Vector3d grounding_point() { return {3.0, 3.0, 1.0}; }

  /// Rows (I1, I2, I3, phi_hat) for a set of invariant triples.
  void write_potential_csv(const std::filesystem::path& path,
                           const Eigen::Ref<const Eigen::MatrixXd>& invariant_rows) const;

private:
  PotentialGpModel() = default;

  Eigen::MatrixXd invariants_;  // N x 3
  Kernel kernel_;
  double eps2_requested_ = 0.0;
  double eps2_used_ = 0.0;
  Eigen::VectorXd weights_;     // (3N+1)
  FitReport report_;
  std::vector<double> jitter_ladder_;
  double condition_estimate_ = 0.0;
  double grounding_residual_ = 0.0;
};

/// Evidence objective over the augmented (ground + gradient) system; used by
/// the potential fit and exposed for gradient checks.
class PotentialEvidenceProblem final : public EvidenceProblem {
public:
  PotentialEvidenceProblem(Eigen::MatrixXd invariant_rows, Eigen::VectorXd targets, double eps2);

  int size() const override { return static_cast<int>(targets_.rows()); }
  const Eigen::MatrixXd& targets() const override { return targets_; }
  double noise_variance() const override { return eps2_; }
  void covariance(double theta1, double theta2, Eigen::MatrixXd& k) const override;
  void covariance_dtheta2(double theta1, double theta2, Eigen::MatrixXd& dk) const override;

private:
  Eigen::MatrixXd inv_;      // N x 3
  Eigen::MatrixXd targets_;  // (3N+1) x 1
  double eps2_;
};

/// Assembles the augmented covariance (without noise) for training points.
void assemble_augmented_covariance(const Kernel& k,
                                   const Eigen::Ref<const Eigen::MatrixXd>& invariant_rows,
                                   Eigen::MatrixXd& out);

}  // namespace tbgp

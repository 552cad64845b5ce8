#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tbgp/datagen.hpp"
#include "tbgp/gp.hpp"
#include "tbgp/tensor.hpp"

namespace tbgp {

/// GP inputs for the reduced problem: the invariant triple (the default), or
/// the sorted eigenvalues, which are an equivalent invariant set kept for
/// ablation runs.
enum class FeatureMode { invariants, eigenvalues };

struct FeaturizedData {
  Eigen::MatrixXd features;      // N x 3 (invariants or eigenvalues)
  Eigen::MatrixXd coefficients;  // N x 3 (c1, c2, c3)
  std::vector<bool> collinear;   // per-row residual check from the 3x3 solve
  int non_collinear_count = 0;
};

/// Reduces (B, sigma) pairs to rows of the invariant->coefficient problem:
/// eigh(B), pair sigma eigenvalues through B's eigenbasis, solve the 3x3
/// system. Non-collinear rows are flagged but kept.
FeaturizedData featurize(const std::vector<TensorPair>& pairs,
                         FeatureMode mode = FeatureMode::invariants);

/// Rotation-invariant stress regressor: a single GP from the three
/// invariants to the three expansion coefficients. Prediction is exactly
/// equivariant because eigenvector orientation never enters the model.
class TbgpModel {
public:
  static TbgpModel fit(const std::vector<TensorPair>& pairs, double eps2, int restarts,
                       std::mt19937_64& rng, FeatureMode mode = FeatureMode::invariants,
                       const OptimizerOptions& options = {});

  /// Predict coefficients at the features of B, then reconstruct the tensor.
  SymTensor3 predict_stress(const SymTensor3& b) const;

  /// Predicted (c1, c2, c3) rows for a feature matrix (Q x 3).
  Eigen::MatrixXd predict_coefficients(const Eigen::Ref<const Eigen::MatrixXd>& features) const {
    return gp_.predict_mean(features);
  }

  Eigen::Vector3d features_of(const SymTensor3& b) const;

  const GpModel& gp() const { return gp_; }
  const FitReport& fit_report() const { return report_; }
  FeatureMode feature_mode() const { return mode_; }
  int non_collinear_rows() const { return non_collinear_; }

  /// Provenance carried along for experiment bookkeeping.
  std::string dataset_id;
  std::uint64_t seed = 0;

private:
  TbgpModel(GpModel gp, FitReport report, FeatureMode mode, int non_collinear)
      : gp_(std::move(gp)), report_(std::move(report)), mode_(mode), non_collinear_(non_collinear) {}

  GpModel gp_;
  FitReport report_;
  FeatureMode mode_;
  int non_collinear_ = 0;
};

}  // namespace tbgp

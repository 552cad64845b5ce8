#include "tbgp/tbgp_model.hpp"

namespace tbgp {

FeaturizedData featurize(const std::vector<TensorPair>& pairs, FeatureMode mode) {
  const auto n = static_cast<Eigen::Index>(pairs.size());
  FeaturizedData data;
  data.features.resize(n, 3);
  data.coefficients.resize(n, 3);
  data.collinear.resize(pairs.size(), true);

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& [b, sigma] = pairs[static_cast<std::size_t>(i)];
    const EigenSystem es = eigh(b);
    const Eigen::Vector3d lambda_sigma = paired_eigenvalues(es, sigma);
    const CoefficientFit fit = solve_coefficients(es.eigenvalues, lambda_sigma);

    if (mode == FeatureMode::invariants) {
      data.features.row(i) = invariants(es).vec();
    } else {
      data.features.row(i) = es.eigenvalues;
    }
    data.coefficients.row(i) = fit.coefficients.vec();
    if (!fit.collinear) {
      data.collinear[static_cast<std::size_t>(i)] = false;
      ++data.non_collinear_count;
    }
  }
  return data;
}

TbgpModel TbgpModel::fit(const std::vector<TensorPair>& pairs, double eps2, int restarts,
                         std::mt19937_64& rng, FeatureMode mode,
                         const OptimizerOptions& options) {
  if (pairs.size() < 2) throw InvalidInputError("TbgpModel::fit: need at least 2 pairs");
  const FeaturizedData data = featurize(pairs, mode);
  FitReport report;
  GpModel gp = fit_optimized(data.features, data.coefficients, eps2, restarts, rng, options,
                             &report);
  return TbgpModel(std::move(gp), std::move(report), mode, data.non_collinear_count);
}

Eigen::Vector3d TbgpModel::features_of(const SymTensor3& b) const {
  return mode_ == FeatureMode::invariants ? invariants_accurate(b).vec()
                                          : Eigen::Vector3d(eigh(b).eigenvalues);
}

SymTensor3 TbgpModel::predict_stress(const SymTensor3& b) const {
  const Eigen::VectorXd c = gp_.predict_mean_accurate(features_of(b));
  return reconstruct(BasisCoefficients{c(0), c(1), c(2)}, b);
}

}  // namespace tbgp

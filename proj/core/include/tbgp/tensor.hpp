#pragma once

#include <array>
#include <random>

#include <Eigen/Dense>

#include "tbgp/errors.hpp"

namespace tbgp {

/// Symmetric 3x3 tensor stored as its six independent components.
/// Component order xx, yy, zz, xy, xz, yz is the serialization contract
/// used by every CSV file in this project.
struct SymTensor3 {
  double xx = 0.0, yy = 0.0, zz = 0.0;
  double xy = 0.0, xz = 0.0, yz = 0.0;

  static SymTensor3 identity() { return {1.0, 1.0, 1.0, 0.0, 0.0, 0.0}; }

  /// Builds from a (nearly) symmetric matrix; off-diagonal pairs are averaged.
  static SymTensor3 from_matrix(const Eigen::Matrix3d& m);

  static SymTensor3 from_components(const std::array<double, 6>& c) {
    return {c[0], c[1], c[2], c[3], c[4], c[5]};
  }

  Eigen::Matrix3d matrix() const;
  std::array<double, 6> components() const { return {xx, yy, zz, xy, xz, yz}; }

  bool is_finite() const;
  double frobenius_norm() const { return matrix().norm(); }

  SymTensor3 operator+(const SymTensor3& o) const;
  SymTensor3 operator-(const SymTensor3& o) const;
  SymTensor3 operator*(double s) const;
};

/// Eigenvalues sorted descending with the matching orthonormal column basis.
struct EigenSystem {
  Eigen::Vector3d eigenvalues;   // lambda1 >= lambda2 >= lambda3
  Eigen::Matrix3d eigenvectors;  // column i pairs with eigenvalues[i]
};

/// Principal invariants (trace, second invariant, determinant).
struct Invariants {
  double i1 = 0.0, i2 = 0.0, i3 = 0.0;
  Eigen::Vector3d vec() const { return {i1, i2, i3}; }
};

/// Coefficients of the expansion sigma = c1 I + c2 B + c3 B^2.
struct BasisCoefficients {
  double c1 = 0.0, c2 = 0.0, c3 = 0.0;
  Eigen::Vector3d vec() const { return {c1, c2, c3}; }
};

/// Result of the per-pair 3x3 coefficient solve. `collinear` is false when
/// the least-squares residual exceeds 1e-8 * |lambda_sigma|, i.e. the input
/// tensors did not share an eigenbasis.
struct CoefficientFit {
  BasisCoefficients coefficients;
  double residual = 0.0;
  bool collinear = true;
};

/// Proper rotation (orthogonal, det +1), validated on construction.
class Rotation3 {
public:
  explicit Rotation3(const Eigen::Matrix3d& m);
  static Rotation3 identity() { return Rotation3(Eigen::Matrix3d::Identity()); }
  const Eigen::Matrix3d& matrix() const { return m_; }
  Rotation3 transposed() const { return Rotation3(m_.transpose()); }

private:
  Eigen::Matrix3d m_;
};

/// Spectral decomposition of a symmetric tensor; eigenvalues descending.
/// Throws InvalidInputError on non-finite input.
EigenSystem eigh(const SymTensor3& t);

/// Principal invariants computed from the eigenvalues of t.
Invariants invariants(const SymTensor3& t);
Invariants invariants(const EigenSystem& es);

/// The same invariants evaluated directly from the components (trace,
/// 1/2(tr^2 - tr(B^2)), det) in extended precision. Prediction paths use
/// this form so query-side noise stays at the ulp level; values agree with
/// invariants() to ~1e-15 relative.
Invariants invariants_accurate(const SymTensor3& t);

/// Solves [1 lambda_i lambda_i^2] c = lambda_sigma_i for the expansion
/// coefficients. Rank-deficient systems (repeated eigenvalues) fall back to
/// the minimal-norm least-squares solution via SVD with relative singular
/// value cutoff 1e-10.
CoefficientFit solve_coefficients(const Eigen::Vector3d& lambda_b,
                                  const Eigen::Vector3d& lambda_sigma);

/// c1 I + c2 B + c3 B^2.
SymTensor3 reconstruct(const BasisCoefficients& c, const SymTensor3& b);

/// Haar-uniform rotation via a uniform unit quaternion.
Rotation3 sample_rotation(std::mt19937_64& rng);

/// R t R^T.
SymTensor3 rotate(const SymTensor3& t, const Rotation3& r);

/// Stress eigenvalues paired to the stretch eigenbasis: diag(Q^T sigma Q)
/// with Q from the stretch tensor's eigh. Robust under degenerate subspaces
/// where sigma's own decomposition could reorder columns.
Eigen::Vector3d paired_eigenvalues(const EigenSystem& stretch_basis,
                                   const SymTensor3& sigma);

}  // namespace tbgp

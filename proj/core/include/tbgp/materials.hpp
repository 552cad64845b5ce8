#pragma once

#include "tbgp/tensor.hpp"

namespace tbgp {

/// Gradient of a strain-energy density with respect to the invariants,
/// attached to the invariant triple it was evaluated at.
struct PotentialGradientSample {
  Invariants inv;
  double d_i1 = 0.0, d_i2 = 0.0, d_i3 = 0.0;  // MPa
  Eigen::Vector3d vec() const { return {d_i1, d_i2, d_i3}; }
};

/// Compressible Mooney-Rivlin parameters (MPa). The large volumetric
/// modulus c3 makes the default response nearly incompressible.
struct MooneyRivlinParams {
  double c1 = 0.162;
  double c2 = 0.0059;
  double c3 = 10.0;
};

/// Phi = c1 (I3^{-1/2} I1 - 3) + c2 (I3^{-2/3} I2 - 3) + c3 (I3^{1/2} - 1)^2.
/// Throws InvalidStretchError when I3 <= 0.
double mr_energy(const MooneyRivlinParams& p, const Invariants& inv);

/// Analytic partials of mr_energy with respect to (I1, I2, I3).
PotentialGradientSample mr_energy_gradient(const MooneyRivlinParams& p, const Invariants& inv);

/// Cauchy stress sigma = (2/I3^{1/2}) (I3 dPhi/dI3 I
///   + (dPhi/dI1 + I1 dPhi/dI2) B - dPhi/dI2 B^2).
SymTensor3 mr_stress(const MooneyRivlinParams& p, const SymTensor3& b);

/// exp(B) = Q exp(Lambda) Q^T for symmetric B.
SymTensor3 matrix_exp(const SymTensor3& b);

}  // namespace tbgp

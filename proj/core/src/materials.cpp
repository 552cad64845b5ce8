#include "tbgp/materials.hpp"

#include <cmath>

namespace tbgp {

namespace {

void require_valid_stretch(double i3, const char* where) {
  if (!(i3 > 0.0)) {
    throw InvalidStretchError(std::string(where) + ": I3 must be positive");
  }
}

}  // namespace

double mr_energy(const MooneyRivlinParams& p, const Invariants& inv) {
  require_valid_stretch(inv.i3, "mr_energy");
  const double s = std::sqrt(inv.i3);
  const double dev = std::cbrt(inv.i3 * inv.i3);  // I3^{2/3}
  return p.c1 * (inv.i1 / s - 3.0) + p.c2 * (inv.i2 / dev - 3.0) +
         p.c3 * (s - 1.0) * (s - 1.0);
}

PotentialGradientSample mr_energy_gradient(const MooneyRivlinParams& p, const Invariants& inv) {
  require_valid_stretch(inv.i3, "mr_energy_gradient");
  const double s = std::sqrt(inv.i3);

  PotentialGradientSample g;
  g.inv = inv;
  g.d_i1 = p.c1 / s;
  g.d_i2 = p.c2 * std::pow(inv.i3, -2.0 / 3.0);
  g.d_i3 = -0.5 * p.c1 * inv.i1 * std::pow(inv.i3, -1.5) -
           (2.0 / 3.0) * p.c2 * inv.i2 * std::pow(inv.i3, -5.0 / 3.0) +
           p.c3 * (s - 1.0) / s;
  return g;
}

SymTensor3 mr_stress(const MooneyRivlinParams& p, const SymTensor3& b) {
  const Invariants inv = invariants(b);
  require_valid_stretch(inv.i3, "mr_stress");
  const PotentialGradientSample g = mr_energy_gradient(p, inv);

  const double pref = 2.0 / std::sqrt(inv.i3);
  const Eigen::Matrix3d bm = b.matrix();
  const Eigen::Matrix3d m = pref * (inv.i3 * g.d_i3 * Eigen::Matrix3d::Identity() +
                                    (g.d_i1 + inv.i1 * g.d_i2) * bm - g.d_i2 * (bm * bm));
  return SymTensor3::from_matrix(m);
}

SymTensor3 matrix_exp(const SymTensor3& b) {
  const EigenSystem es = eigh(b);
  const Eigen::Vector3d el = es.eigenvalues.array().exp();
  const Eigen::Matrix3d m =
      es.eigenvectors * el.asDiagonal() * es.eigenvectors.transpose();
  return SymTensor3::from_matrix(m);
}

}  // namespace tbgp

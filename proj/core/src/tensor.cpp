#include "tbgp/tensor.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace tbgp {

SymTensor3 SymTensor3::from_matrix(const Eigen::Matrix3d& m) {
  SymTensor3 t;
  t.xx = m(0, 0);
  t.yy = m(1, 1);
  t.zz = m(2, 2);
  t.xy = 0.5 * (m(0, 1) + m(1, 0));
  t.xz = 0.5 * (m(0, 2) + m(2, 0));
  t.yz = 0.5 * (m(1, 2) + m(2, 1));
  return t;
}

Eigen::Matrix3d SymTensor3::matrix() const {
  Eigen::Matrix3d m;
  m << xx, xy, xz,
       xy, yy, yz,
       xz, yz, zz;
  return m;
}

bool SymTensor3::is_finite() const {
  for (double v : components()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

SymTensor3 SymTensor3::operator+(const SymTensor3& o) const {
  return {xx + o.xx, yy + o.yy, zz + o.zz, xy + o.xy, xz + o.xz, yz + o.yz};
}

SymTensor3 SymTensor3::operator-(const SymTensor3& o) const {
  return {xx - o.xx, yy - o.yy, zz - o.zz, xy - o.xy, xz - o.xz, yz - o.yz};
}

SymTensor3 SymTensor3::operator*(double s) const {
  return {xx * s, yy * s, zz * s, xy * s, xz * s, yz * s};
}

Rotation3::Rotation3(const Eigen::Matrix3d& m) : m_(m) {
  const double ortho = (m * m.transpose() - Eigen::Matrix3d::Identity()).norm();
  if (!(ortho <= 1e-11) || std::abs(m.determinant() - 1.0) > 1e-11) {
    throw InvalidInputError("Rotation3: matrix is not a proper rotation");
  }
}

EigenSystem eigh(const SymTensor3& t) {
  if (!t.is_finite()) {
    throw InvalidInputError("eigh: non-finite tensor component");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(t.matrix());
  // Eigen returns ascending order; flip to descending.
  EigenSystem es;
  es.eigenvalues = solver.eigenvalues().reverse();
  es.eigenvectors = solver.eigenvectors().rowwise().reverse();
  return es;
}

Invariants invariants(const EigenSystem& es) {
  const Eigen::Vector3d& l = es.eigenvalues;
  Invariants inv;
  inv.i1 = l(0) + l(1) + l(2);
  inv.i2 = l(0) * l(1) + l(1) * l(2) + l(2) * l(0);
  inv.i3 = l(0) * l(1) * l(2);
  return inv;
}

Invariants invariants(const SymTensor3& t) { return invariants(eigh(t)); }

Invariants invariants_accurate(const SymTensor3& t) {
  const long double xx = t.xx, yy = t.yy, zz = t.zz;
  const long double xy = t.xy, xz = t.xz, yz = t.yz;
  const long double tr = xx + yy + zz;
  const long double tr2 = xx * xx + yy * yy + zz * zz +
                          2.0L * (xy * xy + xz * xz + yz * yz);
  const long double det = xx * (yy * zz - yz * yz) - xy * (xy * zz - yz * xz) +
                          xz * (xy * yz - yy * xz);
  Invariants inv;
  inv.i1 = static_cast<double>(tr);
  inv.i2 = static_cast<double>(0.5L * (tr * tr - tr2));
  inv.i3 = static_cast<double>(det);
  return inv;
}

CoefficientFit solve_coefficients(const Eigen::Vector3d& lambda_b,
                                  const Eigen::Vector3d& lambda_sigma) {
  Eigen::Matrix3d vand;
  for (int i = 0; i < 3; ++i) {
    vand(i, 0) = 1.0;
    vand(i, 1) = lambda_b(i);
    vand(i, 2) = lambda_b(i) * lambda_b(i);
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(vand, Eigen::ComputeFullU | Eigen::ComputeFullV);
  svd.setThreshold(1e-10);
  const Eigen::Vector3d c = svd.solve(lambda_sigma);

  CoefficientFit fit;
  fit.coefficients = {c(0), c(1), c(2)};
  fit.residual = (vand * c - lambda_sigma).norm();
  fit.collinear = fit.residual <= 1e-8 * lambda_sigma.norm();
  return fit;
}

SymTensor3 reconstruct(const BasisCoefficients& c, const SymTensor3& b) {
  const Eigen::Matrix3d bm = b.matrix();
  const Eigen::Matrix3d m = c.c1 * Eigen::Matrix3d::Identity() + c.c2 * bm + c.c3 * (bm * bm);
  return SymTensor3::from_matrix(m);
}

Rotation3 sample_rotation(std::mt19937_64& rng) {
  // Four standard normals normalized is exactly uniform on S^3.
  std::normal_distribution<double> gauss(0.0, 1.0);
  double w, x, y, z, n2;
  do {
    w = gauss(rng);
    x = gauss(rng);
    y = gauss(rng);
    z = gauss(rng);
    n2 = w * w + x * x + y * y + z * z;
  } while (n2 < 1e-290);
  const double inv = 1.0 / std::sqrt(n2);
  Eigen::Quaterniond q(w * inv, x * inv, y * inv, z * inv);
  return Rotation3(q.toRotationMatrix());
}

SymTensor3 rotate(const SymTensor3& t, const Rotation3& r) {
  // Extended-precision product: the rotated tensor feeds rotation-invariance
  // checks whose budgets sit near the double ulp level.
  using ld = long double;
  const Eigen::Matrix3d& rm = r.matrix();
  const Eigen::Matrix3d tm = t.matrix();
  Eigen::Matrix<ld, 3, 3> a;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      ld acc = 0.0L;
      for (int k = 0; k < 3; ++k) acc += static_cast<ld>(rm(i, k)) * static_cast<ld>(tm(k, j));
      a(i, j) = acc;
    }
  SymTensor3 out;
  auto entry = [&](int i, int j) {
    ld acc = 0.0L;
    for (int k = 0; k < 3; ++k) acc += a(i, k) * static_cast<ld>(rm(j, k));
    return acc;
  };
  out.xx = static_cast<double>(entry(0, 0));
  out.yy = static_cast<double>(entry(1, 1));
  out.zz = static_cast<double>(entry(2, 2));
  out.xy = static_cast<double>(0.5L * (entry(0, 1) + entry(1, 0)));
  out.xz = static_cast<double>(0.5L * (entry(0, 2) + entry(2, 0)));
  out.yz = static_cast<double>(0.5L * (entry(1, 2) + entry(2, 1)));
  return out;
}

Eigen::Vector3d paired_eigenvalues(const EigenSystem& stretch_basis,
                                   const SymTensor3& sigma) {
  const Eigen::Matrix3d& q = stretch_basis.eigenvectors;
  return (q.transpose() * sigma.matrix() * q).diagonal();
}

}  // namespace tbgp

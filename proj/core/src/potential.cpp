#include "tbgp/potential.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Cholesky>

namespace tbgp {

PotentialGradientSample coefficients_to_gradient(const BasisCoefficients& c,
                                                 const Invariants& inv) {
  if (!(inv.i3 > 0.0)) {
    throw InvalidStretchError("coefficients_to_gradient: I3 must be positive");
  }
  const double s = std::sqrt(inv.i3);
  PotentialGradientSample g;
  g.inv = inv;
  g.d_i1 = 0.5 * s * (c.c2 + c.c3 * inv.i1);
  g.d_i2 = -0.5 * c.c3 * s;
  g.d_i3 = 0.5 * c.c1 / s;
  return g;
}

BasisCoefficients gradient_to_coefficients(const PotentialGradientSample& g) {
  if (!(g.inv.i3 > 0.0)) {
    throw InvalidStretchError("gradient_to_coefficients: I3 must be positive");
  }
  const double s = std::sqrt(g.inv.i3);
  BasisCoefficients c;
  c.c1 = 2.0 * s * g.d_i3;
  c.c2 = (2.0 / s) * (g.d_i1 + g.inv.i1 * g.d_i2);
  c.c3 = -(2.0 / s) * g.d_i2;
  return c;
}

KernelDerivativeBlocks kernel_derivative_blocks(const Kernel& k,
                                                const Eigen::Ref<const Eigen::MatrixXd>& a,
                                                const Eigen::Ref<const Eigen::MatrixXd>& b) {
  const Eigen::Index na = a.rows(), nb = b.rows();
  KernelDerivativeBlocks blocks;
  blocks.value.resize(na, nb);
  for (auto& m : blocks.d_first) m.resize(na, nb);
  for (auto& row : blocks.d_both)
    for (auto& m : row) m.resize(na, nb);

  for (Eigen::Index q = 0; q < nb; ++q) {
    for (Eigen::Index p = 0; p < na; ++p) {
      const Eigen::Vector3d u = a.row(p) - b.row(q);
      const double e = k.theta1 * std::exp(-k.theta2 * u.squaredNorm());
      blocks.value(p, q) = e;
      for (int i = 0; i < 3; ++i) {
        blocks.d_first[static_cast<std::size_t>(i)](p, q) = -2.0 * k.theta2 * u(i) * e;
        for (int j = 0; j < 3; ++j) {
          const double delta = (i == j) ? 1.0 : 0.0;
          blocks.d_both[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)](p, q) =
              2.0 * k.theta2 * e * (delta - 2.0 * k.theta2 * u(i) * u(j));
        }
      }
    }
  }
  return blocks;
}

namespace {

// Layout of the augmented system: row/col 0 is the grounding value, then the
// dPhi/dI1 group, the dPhi/dI2 group, the dPhi/dI3 group (N rows each).
inline Eigen::Index aug_index(Eigen::Index n, int group, Eigen::Index point) {
  return 1 + group * n + point;
}

// The weight vector of the augmented system carries entries many orders of
// magnitude above the predicted value, so prediction rows are evaluated and
// accumulated in extended precision: double rounding of the kernel rows
// would otherwise leave noise of order eps * sum|w_i row_i|, which breaks
// the 1e-10 equivariance budget on ill-conditioned fits.
using extended = long double;

void assemble_augmented(double theta1, double theta2,
                        const Eigen::Ref<const Eigen::MatrixXd>& inv, bool dtheta2,
                        Eigen::MatrixXd& out) {
  const Eigen::Index n = inv.rows();
  const Eigen::Vector3d ig = PotentialGpModel::grounding_point();
  out.resize(3 * n + 1, 3 * n + 1);

  // Ground-ground.
  out(0, 0) = dtheta2 ? 0.0 : theta1;

  // Ground vs gradient groups: Cov(Phi(Ig), dPhi(I_b)/dI_j) = dK(Ig,I_b)/d(I_b)_j.
  for (Eigen::Index b = 0; b < n; ++b) {
    const Eigen::Vector3d u = ig - inv.row(b).transpose();
    const double r2 = u.squaredNorm();
    const double e = theta1 * std::exp(-theta2 * r2);
    for (int j = 0; j < 3; ++j) {
      const double v = dtheta2 ? 2.0 * u(j) * e * (1.0 - theta2 * r2)
                               : 2.0 * theta2 * u(j) * e;
      out(0, aug_index(n, j, b)) = v;
      out(aug_index(n, j, b), 0) = v;
    }
  }

  // Gradient-gradient groups.
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index a = 0; a < n; ++a) {
      const Eigen::Vector3d u = inv.row(a) - inv.row(b);
      const double r2 = u.squaredNorm();
      const double e = theta1 * std::exp(-theta2 * r2);
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          const double delta = (i == j) ? 1.0 : 0.0;
          double v;
          if (dtheta2) {
            v = 2.0 * e *
                (delta * (1.0 - theta2 * r2) - 2.0 * theta2 * u(i) * u(j) * (2.0 - theta2 * r2));
          } else {
            v = 2.0 * theta2 * e * (delta - 2.0 * theta2 * u(i) * u(j));
          }
          out(aug_index(n, i, a), aug_index(n, j, b)) = v;
        }
      }
    }
  }
}

}  // namespace

void assemble_augmented_covariance(const Kernel& k,
                                   const Eigen::Ref<const Eigen::MatrixXd>& invariant_rows,
                                   Eigen::MatrixXd& out) {
  assemble_augmented(k.theta1, k.theta2, invariant_rows, false, out);
}

PotentialEvidenceProblem::PotentialEvidenceProblem(Eigen::MatrixXd invariant_rows,
                                                   Eigen::VectorXd targets, double eps2)
    : inv_(std::move(invariant_rows)), targets_(std::move(targets)), eps2_(eps2) {
  if (targets_.rows() != 3 * inv_.rows() + 1) {
    throw InvalidInputError("PotentialEvidenceProblem: targets must have 3N+1 rows");
  }
}

void PotentialEvidenceProblem::covariance(double theta1, double theta2,
                                          Eigen::MatrixXd& k) const {
  assemble_augmented(theta1, theta2, inv_, false, k);
}

void PotentialEvidenceProblem::covariance_dtheta2(double theta1, double theta2,
                                                  Eigen::MatrixXd& dk) const {
  assemble_augmented(theta1, theta2, inv_, true, dk);
}

PotentialGpModel PotentialGpModel::fit(const std::vector<TensorPair>& pairs, double eps2,
                                       int restarts, std::mt19937_64& rng,
                                       const OptimizerOptions& options) {
  if (pairs.empty()) throw InvalidInputError("PotentialGpModel::fit: need at least 1 pair");

  const FeaturizedData data = featurize(pairs, FeatureMode::invariants);
  const Eigen::Index n = data.features.rows();
  if ((data.features.col(2).array() <= 0.0).any()) {
    throw InvalidStretchError("PotentialGpModel::fit: every training state needs I3 > 0");
  }

  Eigen::VectorXd targets(3 * n + 1);
  targets(0) = 0.0;  // grounding: Phi(3,3,1) = 0
  for (Eigen::Index r = 0; r < n; ++r) {
    const Invariants inv{data.features(r, 0), data.features(r, 1), data.features(r, 2)};
    const BasisCoefficients c{data.coefficients(r, 0), data.coefficients(r, 1),
                              data.coefficients(r, 2)};
    const PotentialGradientSample g = coefficients_to_gradient(c, inv);
    targets(aug_index(n, 0, r)) = g.d_i1;
    targets(aug_index(n, 1, r)) = g.d_i2;
    targets(aug_index(n, 2, r)) = g.d_i3;
  }

  PotentialEvidenceProblem problem(data.features, targets, eps2);
  FitReport report = maximize_evidence(problem, restarts, rng, options);

  PotentialGpModel m;
  m.invariants_ = data.features;
  m.kernel_ = report.kernel;
  m.eps2_requested_ = eps2;
  m.report_ = std::move(report);

  Eigen::MatrixXd kaug;
  assemble_augmented_covariance(m.kernel_, m.invariants_, kaug);

  double jitter = eps2;
  Eigen::LLT<Eigen::MatrixXd> llt;
  bool ok = false;
  while (true) {
    m.jitter_ladder_.push_back(jitter);
    Eigen::MatrixXd kn = kaug;
    kn.diagonal().array() += jitter;
    llt.compute(kn);
    if (llt.info() == Eigen::Success) {
      ok = true;
      m.eps2_used_ = jitter;
      break;
    }
    if (jitter >= 1e-6) break;
    jitter = std::min(jitter * 10.0, 1e-6);
  }
  if (!ok) {
    throw IllConditionedError(
        "PotentialGpModel::fit: augmented factorization failed after jitter escalation",
        m.jitter_ladder_);
  }

  m.weights_ = llt.solve(targets);

  const auto& lfac = llt.matrixLLT();
  double lmax = 0.0, lmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < lfac.rows(); ++i) {
    lmax = std::max(lmax, lfac(i, i));
    lmin = std::min(lmin, lfac(i, i));
  }
  m.condition_estimate_ = (lmax / lmin) * (lmax / lmin);

  const Eigen::Vector3d ig = grounding_point();
  m.grounding_residual_ = m.predict_potential(Invariants{ig(0), ig(1), ig(2)});
  return m;
}

double PotentialGpModel::predict_potential(const Invariants& inv) const {
  const Eigen::Index n = invariants_.rows();
  const extended q[3] = {inv.i1, inv.i2, inv.i3};
  const Eigen::Vector3d ig = grounding_point();
  const extended t1 = kernel_.theta1, t2 = kernel_.theta2;

  extended acc = 0.0L;
  {
    extended r2 = 0.0L;
    for (int j = 0; j < 3; ++j) {
      const extended u = q[j] - static_cast<extended>(ig(j));
      r2 += u * u;
    }
    acc += static_cast<extended>(weights_(0)) * t1 * expl(-t2 * r2);
  }
  for (Eigen::Index b = 0; b < n; ++b) {
    extended u[3], r2 = 0.0L;
    for (int j = 0; j < 3; ++j) {
      u[j] = q[j] - static_cast<extended>(invariants_(b, j));
      r2 += u[j] * u[j];
    }
    const extended e = t1 * expl(-t2 * r2);
    // Cov(Phi(q), dPhi(I_b)/dI_j) = dK(q, I_b)/d(I_b)_j = 2 theta2 u_j e.
    for (int j = 0; j < 3; ++j) {
      acc += static_cast<extended>(weights_(aug_index(n, j, b))) * 2.0L * t2 * u[j] * e;
    }
  }
  return static_cast<double>(acc);
}

Eigen::Vector3d PotentialGpModel::predict_gradient(const Invariants& inv) const {
  const Eigen::Index n = invariants_.rows();
  const extended q[3] = {inv.i1, inv.i2, inv.i3};
  const Eigen::Vector3d ig = grounding_point();
  const extended t1 = kernel_.theta1, t2 = kernel_.theta2;

  extended acc[3] = {0.0L, 0.0L, 0.0L};
  {
    extended u[3], r2 = 0.0L;
    for (int j = 0; j < 3; ++j) {
      u[j] = q[j] - static_cast<extended>(ig(j));
      r2 += u[j] * u[j];
    }
    const extended e = t1 * expl(-t2 * r2);
    // Cov(dPhi(q)/dI_i, Phi(Ig)) = dK(q, Ig)/dq_i = -2 theta2 u_i e.
    for (int i = 0; i < 3; ++i) {
      acc[i] += static_cast<extended>(weights_(0)) * (-2.0L) * t2 * u[i] * e;
    }
  }
  for (Eigen::Index b = 0; b < n; ++b) {
    extended u[3], r2 = 0.0L;
    for (int j = 0; j < 3; ++j) {
      u[j] = q[j] - static_cast<extended>(invariants_(b, j));
      r2 += u[j] * u[j];
    }
    const extended e = t1 * expl(-t2 * r2);
    for (int i = 0; i < 3; ++i) {
      const extended w_dot_row =
          static_cast<extended>(weights_(aug_index(n, 0, b))) *
              ((i == 0 ? 1.0L : 0.0L) - 2.0L * t2 * u[i] * u[0]) +
          static_cast<extended>(weights_(aug_index(n, 1, b))) *
              ((i == 1 ? 1.0L : 0.0L) - 2.0L * t2 * u[i] * u[1]) +
          static_cast<extended>(weights_(aug_index(n, 2, b))) *
              ((i == 2 ? 1.0L : 0.0L) - 2.0L * t2 * u[i] * u[2]);
      acc[i] += 2.0L * t2 * e * w_dot_row;
    }
  }
  return {static_cast<double>(acc[0]), static_cast<double>(acc[1]),
          static_cast<double>(acc[2])};
}

SymTensor3 PotentialGpModel::predict_stress(const SymTensor3& b) const {
  const Invariants inv = invariants_accurate(b);
  if (!(inv.i3 > 0.0)) {
    throw InvalidStretchError("PotentialGpModel::predict_stress: I3 must be positive");
  }
  const Eigen::Vector3d grad = predict_gradient(inv);
  PotentialGradientSample g;
  g.inv = inv;
  g.d_i1 = grad(0);
  g.d_i2 = grad(1);
  g.d_i3 = grad(2);
  return reconstruct(gradient_to_coefficients(g), b);
}

void PotentialGpModel::write_potential_csv(
    const std::filesystem::path& path,
    const Eigen::Ref<const Eigen::MatrixXd>& invariant_rows) const {
  std::ofstream out(path);
  if (!out) throw Error("write_potential_csv: cannot open " + path.string());
  out << "I1,I2,I3,phi\n";
  char buf[140];
  for (Eigen::Index r = 0; r < invariant_rows.rows(); ++r) {
    const Invariants inv{invariant_rows(r, 0), invariant_rows(r, 1), invariant_rows(r, 2)};
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", inv.i1, inv.i2, inv.i3,
                  predict_potential(inv));
    out << buf;
  }
}

}  // namespace tbgp

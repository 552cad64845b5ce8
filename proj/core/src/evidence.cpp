#include "tbgp/evidence.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>

namespace tbgp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

EvidenceValue evaluate_evidence(const EvidenceProblem& problem, double theta1, double theta2,
                                bool want_gradient) {
  EvidenceValue out;
  out.value = -kInf;

  const int n = problem.size();
  const Eigen::MatrixXd& y = problem.targets();
  const auto m = static_cast<double>(y.cols());

  Eigen::MatrixXd k(n, n);
  problem.covariance(theta1, theta2, k);
  Eigen::MatrixXd kn = k;
  kn.diagonal().array() += problem.noise_variance();

  Eigen::LLT<Eigen::MatrixXd> llt(kn);
  if (llt.info() != Eigen::Success) return out;

  const Eigen::MatrixXd alpha = llt.solve(y);
  const double quad = (y.array() * alpha.array()).sum();
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += std::log(llt.matrixLLT()(i, i));
  logdet *= 2.0;

  out.value = -0.5 * quad - 0.5 * m * logdet -
              0.5 * m * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (!std::isfinite(out.value)) {
    out.value = -kInf;
    return out;
  }
  out.ok = true;
  if (!want_gradient) return out;

  // dL/dtheta = 1/2 tr((alpha alpha^T - M Kinv) dK/dtheta), column-summed.
  const Eigen::MatrixXd kinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd p = alpha * alpha.transpose() - m * kinv;

  // The kernel is linear in theta1, so dK/dtheta1 = K/theta1.
  const double d1 = 0.5 * (p.array() * k.array()).sum() / theta1;

  Eigen::MatrixXd dk2(n, n);
  problem.covariance_dtheta2(theta1, theta2, dk2);
  const double d2 = 0.5 * (p.array() * dk2.array()).sum();

  out.grad_log_theta = {theta1 * d1, theta2 * d2};
  if (!out.grad_log_theta.allFinite()) {
    out.ok = false;
    out.value = -kInf;
  }
  return out;
}

namespace {

struct LbfgsResult {
  Eigen::Vector2d x;
  double f = kInf;  // minimized objective (-L)
  RestartStatus status = RestartStatus::failed;
  int iterations = 0;
};

// Minimizes f(x) = -log evidence over the log-hyperparameter box. Two-loop
// L-BFGS with Armijo backtracking; the history is dropped whenever the
// iterate is clamped to the box.
LbfgsResult lbfgs_minimize(const EvidenceProblem& problem, Eigen::Vector2d x0,
                           const OptimizerOptions& opt) {
  const auto eval = [&](const Eigen::Vector2d& x, bool grad) {
    EvidenceValue v = evaluate_evidence(problem, std::exp(x(0)), std::exp(x(1)), grad);
    v.value = -v.value;
    v.grad_log_theta = -v.grad_log_theta;
    return v;
  };
  const auto clamp = [&](Eigen::Vector2d v) {
    v(0) = std::clamp(v(0), opt.bound_low, opt.bound_high);
    v(1) = std::clamp(v(1), opt.bound_low, opt.bound_high);
    return v;
  };

  LbfgsResult res;
  res.x = clamp(x0);
  EvidenceValue cur = eval(res.x, true);
  if (!cur.ok) return res;
  res.f = cur.value;

  std::vector<Eigen::Vector2d> s_hist, y_hist;
  Eigen::Vector2d g = cur.grad_log_theta;

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    res.iterations = iter;
    if (g.lpNorm<Eigen::Infinity>() <= opt.grad_tol * std::max(1.0, std::abs(res.f))) {
      res.status = RestartStatus::converged;
      return res;
    }

    // Two-loop recursion.
    Eigen::Vector2d q = g;
    const int h = static_cast<int>(s_hist.size());
    std::vector<double> alpha_memo(h);
    for (int i = h - 1; i >= 0; --i) {
      const double rho = 1.0 / y_hist[i].dot(s_hist[i]);
      alpha_memo[i] = rho * s_hist[i].dot(q);
      q -= alpha_memo[i] * y_hist[i];
    }
    if (h > 0) {
      const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (int i = 0; i < h; ++i) {
      const double rho = 1.0 / y_hist[i].dot(s_hist[i]);
      const double beta = rho * y_hist[i].dot(q);
      q += (alpha_memo[i] - beta) * s_hist[i];
    }
    Eigen::Vector2d dir = -q;
    if (dir.dot(g) >= 0.0 || !dir.allFinite()) dir = -g;

    // Armijo backtracking; value-only evaluations until a step is accepted.
    double step = (h == 0) ? 1.0 / std::max(1.0, g.norm()) : 1.0;
    const double slope = dir.dot(g);
    EvidenceValue next;
    Eigen::Vector2d xn;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      xn = clamp(res.x + step * dir);
      next = eval(xn, false);
      if (next.ok && next.value <= res.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No descent step from here; treat the current point as the answer.
      res.status = RestartStatus::converged;
      return res;
    }

    next = eval(xn, true);
    if (!next.ok) {
      res.status = RestartStatus::failed;
      return res;
    }

    const Eigen::Vector2d s = xn - res.x;
    const Eigen::Vector2d yv = next.grad_log_theta - g;
    const bool clamped = (xn - (res.x + step * dir)).norm() > 0.0;
    const double f_prev = res.f;
    res.x = xn;
    res.f = next.value;
    g = next.grad_log_theta;

    if (clamped) {
      s_hist.clear();
      y_hist.clear();
    } else if (yv.dot(s) > 1e-12 * yv.norm() * s.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
      }
    }

    if (std::abs(f_prev - res.f) <= opt.f_tol * (1.0 + std::abs(res.f))) {
      res.status = RestartStatus::converged;
      res.iterations = iter + 1;
      return res;
    }
  }
  res.status = RestartStatus::max_iterations;
  res.iterations = opt.max_iterations;
  return res;
}

}  // namespace

FitReport maximize_evidence(const EvidenceProblem& problem, int restarts, std::mt19937_64& rng,
                            const OptimizerOptions& options) {
  if (restarts < 1) throw InvalidInputError("maximize_evidence: restarts must be >= 1");

  FitReport report;
  report.restarts = restarts;
  double best = -kInf;

  std::uniform_real_distribution<double> init(options.init_low, options.init_high);
  for (int r = 0; r < restarts; ++r) {
    Eigen::Vector2d x0{init(rng), init(rng)};
    LbfgsResult lr = lbfgs_minimize(problem, x0, options);

    RestartRecord rec;
    rec.log_theta = lr.x;
    rec.value = -lr.f;
    rec.status = lr.status;
    rec.iterations = lr.iterations;
    report.records.push_back(rec);

    if (lr.status != RestartStatus::failed && std::isfinite(rec.value) && rec.value > best) {
      best = rec.value;
      report.kernel = Kernel{std::exp(lr.x(0)), std::exp(lr.x(1))};
      report.log_evidence = rec.value;
    }
  }

  if (!std::isfinite(best)) {
    std::ostringstream msg;
    msg << "maximize_evidence: all " << restarts << " restarts failed;";
    for (const auto& rec : report.records) {
      msg << " [log_theta=(" << rec.log_theta(0) << "," << rec.log_theta(1)
          << ") value=" << rec.value << "]";
    }
    throw OptimizationFailedError(msg.str());
  }
  return report;
}

}  // namespace tbgp

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "tbgp/gp.hpp"

using namespace tbgp;

namespace {

Eigen::MatrixXd column(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

// Independent dense-algebra evidence oracle (determinant + inverse route).
double evidence_oracle(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Kernel k,
                       double eps2) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) cov(i, j) = kernel_eval(k, x.row(i), x.row(j));
  cov.diagonal().array() += eps2;
  const Eigen::MatrixXd inv = cov.fullPivLu().inverse();
  const double logdet = std::log(cov.fullPivLu().determinant());
  double acc = 0.0;
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    acc += -0.5 * y.col(c).dot(inv * y.col(c)) - 0.5 * logdet -
           0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
  }
  return acc;
}

}  // namespace

TEST_CASE("kernel_eval basics") {
  Kernel k{1.0, 1.0};
  Eigen::VectorXd a(2), b(2);
  a << 0.5, 0.5;
  b = a;
  CHECK(kernel_eval(k, a, b) == doctest::Approx(1.0).epsilon(1e-15));

  b << 1.5, 0.5;  // squared distance 1
  CHECK(kernel_eval(k, a, b) == doctest::Approx(0.36787944117144233).epsilon(1e-12));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd p(3), q(3);
    for (int i = 0; i < 3; ++i) {
      p(i) = u(rng);
      q(i) = u(rng);
    }
    Kernel kk{0.5 + std::abs(u(rng)), 0.5 + std::abs(u(rng))};
    CHECK(kernel_eval(kk, p, q) == kernel_eval(kk, q, p));
  }
}

TEST_CASE("fit on a single training point") {
  const Eigen::MatrixXd x = column({0.3});
  const Eigen::MatrixXd y = column({2.0});
  const double eps2 = 1e-10;
  const Kernel k{1.5, 1.0};
  const GpModel m = GpModel::fit(x, y, k, eps2);
  // 1x1 system: mean(x0) = y0 * theta1 / (theta1 + eps2).
  const double expected = 2.0 * k.theta1 / (k.theta1 + eps2);
  CHECK(m.predict_mean(x)(0, 0) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(m.predict_mean(x)(0, 0) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("interpolation at training inputs") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 20;
  Eigen::MatrixXd x(n, 1), y(n, 1);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = u(rng);
    y(i, 0) = std::exp(x(i, 0));
  }
  const GpModel m = GpModel::fit(x, y, Kernel{1.0, 10.0}, 1e-10);
  const Eigen::MatrixXd mean = m.predict_mean(x);
  CHECK((mean - y).cwiseAbs().maxCoeff() < 1e-6 * y.cwiseAbs().maxCoeff());
}

TEST_CASE("duplicate rows are flagged but fit succeeds") {
  Eigen::MatrixXd x(3, 1), y(3, 1);
  x << 0.1, 0.1, 0.9;
  y << 1.0, 1.0, 2.0;
  const GpModel m = GpModel::fit(x, y, Kernel{1.0, 1.0}, 1e-10);
  CHECK(m.duplicate_rows_flagged());
  CHECK(std::isfinite(m.log_evidence()));
}

TEST_CASE("predict_mean decays to the prior far from data") {
  const GpModel m = GpModel::fit(column({0.0}), column({3.0}), Kernel{1.0, 1.0}, 1e-10);
  CHECK(std::abs(m.predict_mean(column({40.0}))(0, 0)) < 1e-12);
}

TEST_CASE("predict_mean matches a known smooth function (dense sampling)") {
  const int n = 20;
  Eigen::MatrixXd x(n, 1), y(n, 1);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = static_cast<double>(i) / (n - 1);
    y(i, 0) = std::exp(x(i, 0));
  }
  std::mt19937_64 rng(5);
  const GpModel m = fit_optimized(x, y, 1e-10, 5, rng);
  CHECK(m.predict_mean(column({0.5}))(0, 0) ==
        doctest::Approx(std::exp(0.5)).epsilon(1e-3));
}

TEST_CASE("predict_var at training, far away, and monotone approach") {
  const double eps2 = 1e-10;
  const Kernel k{2.0, 1.0};
  const GpModel m = GpModel::fit(column({0.0}), column({1.0}), k, eps2);

  const double at_train = m.predict_var(column({0.0}))(0);
  CHECK(std::abs(at_train - eps2) < 1e-9 * k.theta1);

  const double far = m.predict_var(column({50.0}))(0);
  CHECK(far == doctest::Approx(k.theta1 + eps2).epsilon(1e-12));

  double prev = far;
  for (double d = 3.0; d > 0.05; d -= 0.25) {
    const double v = m.predict_var(column({d}))(0);
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
}

TEST_CASE("log_evidence closed form for N=1, y=0") {
  const double eps2 = 1e-10;
  const Kernel k{1.7, 2.3};
  const GpModel m = GpModel::fit(column({0.4}), column({0.0}), k, eps2);
  const double expected = -0.5 * std::log(k.theta1 + eps2) - 0.5 * std::log(2.0 * M_PI);
  CHECK(m.log_evidence() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log_evidence agrees with brute-force determinant oracle") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::MatrixXd x(5, 2), y(5, 2);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 2; ++j) {
      x(i, j) = u(rng);
      y(i, j) = u(rng);
    }
  const Kernel k{1.3, 0.8};
  const GpModel m = GpModel::fit(x, y, k, 1e-6);
  const double oracle = evidence_oracle(x, y, k, 1e-6);
  CHECK(m.log_evidence() == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("log_evidence invariant to row permutation") {
  Eigen::MatrixXd x(4, 1), y(4, 1);
  x << 0.1, 0.4, 0.7, 0.9;
  y << 1.0, -0.5, 0.3, 2.0;
  Eigen::MatrixXd xp(4, 1), yp(4, 1);
  const int perm[4] = {2, 0, 3, 1};
  for (int i = 0; i < 4; ++i) {
    xp(i, 0) = x(perm[i], 0);
    yp(i, 0) = y(perm[i], 0);
  }
  const Kernel k{1.0, 3.0};
  const GpModel a = GpModel::fit(x, y, k, 1e-10);
  const GpModel b = GpModel::fit(xp, yp, k, 1e-10);
  CHECK(a.log_evidence() == doctest::Approx(b.log_evidence()).epsilon(1e-12));
}

TEST_CASE("predict_mean is linear in Y") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::MatrixXd x(10, 2), y(10, 3);
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 2; ++j) x(i, j) = u(rng);
    for (int j = 0; j < 3; ++j) y(i, j) = u(rng);
  }
  const Kernel k{1.0, 2.0};
  const GpModel a = GpModel::fit(x, y, k, 1e-10);
  const GpModel b = GpModel::fit(x, 2.0 * y, k, 1e-10);
  Eigen::MatrixXd q(3, 2);
  q << 0.1, 0.2, -0.5, 0.8, 0.0, 0.0;
  const Eigen::MatrixXd ma = a.predict_mean(q);
  const Eigen::MatrixXd mb = b.predict_mean(q);
  CHECK((mb - 2.0 * ma).cwiseAbs().maxCoeff() < 1e-14 * ma.cwiseAbs().maxCoeff());
}

TEST_CASE("predict_var is independent of Y (bit-equal)") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::MatrixXd x(8, 2), y1(8, 1), y2(8, 1);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 2; ++j) x(i, j) = u(rng);
    y1(i, 0) = u(rng);
    y2(i, 0) = 10.0 * u(rng) + 3.0;
  }
  const Kernel k{1.0, 1.5};
  const GpModel a = GpModel::fit(x, y1, k, 1e-10);
  const GpModel b = GpModel::fit(x, y2, k, 1e-10);
  Eigen::MatrixXd q(5, 2);
  q.setRandom();
  const Eigen::VectorXd va = a.predict_var(q);
  const Eigen::VectorXd vb = b.predict_var(q);
  CHECK(std::memcmp(va.data(), vb.data(), sizeof(double) * 5) == 0);
}

TEST_CASE("cholesky and SVD-pseudoinverse predictions agree") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::MatrixXd x(15, 2), y(15, 2);
  for (int i = 0; i < 15; ++i) {
    for (int j = 0; j < 2; ++j) {
      x(i, j) = 2.0 * u(rng);
      y(i, j) = u(rng);
    }
  }
  const Kernel k{1.0, 2.0};
  const double eps2 = 1e-8;
  const GpModel m = GpModel::fit(x, y, k, eps2);

  Eigen::MatrixXd cov(15, 15);
  for (int i = 0; i < 15; ++i)
    for (int j = 0; j < 15; ++j) cov(i, j) = kernel_eval(k, x.row(i), x.row(j));
  cov.diagonal().array() += eps2;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cov, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::MatrixXd w_svd = svd.solve(y);

  Eigen::MatrixXd q(4, 2);
  q << 0.3, -0.2, 1.1, 0.4, -0.9, 0.0, 0.2, 0.2;
  Eigen::MatrixXd kstar(4, 15);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 15; ++j) kstar(i, j) = kernel_eval(k, q.row(i), x.row(j));

  const Eigen::MatrixXd a = m.predict_mean(q);
  const Eigen::MatrixXd b = kstar * w_svd;
  CHECK((a - b).norm() / b.norm() < 1e-8);
}

TEST_CASE("log_evidence decreases as eps2 grows on smooth data") {
  const int n = 15;
  Eigen::MatrixXd x(n, 1), y(n, 1);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = static_cast<double>(i) / (n - 1);
    y(i, 0) = std::sin(3.0 * x(i, 0));
  }
  const Kernel k{1.0, 8.0};
  double prev = GpModel::fit(x, y, k, 1e-10).log_evidence();
  for (double eps2 : {1e-8, 1e-6, 1e-4, 1e-2}) {
    const double cur = GpModel::fit(x, y, k, eps2).log_evidence();
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("evidence gradient matches central finite differences") {
  // Points are spread wide enough that the covariance stays well conditioned
  // over the sampled hyperparameter box; otherwise the FD oracle itself
  // drowns in factorization noise.
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-2, 2);
  Eigen::MatrixXd x(12, 2), y(12, 2);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 2; ++j) {
      x(i, j) = u(rng);
      y(i, j) = std::sin(x(i, 0)) + 0.1 * u(rng);
    }
  const GpEvidenceProblem problem(x, y, 1e-8);

  std::uniform_real_distribution<double> logu(-1.0, 1.2);
  for (int t = 0; t < 20; ++t) {
    const double l1 = logu(rng), l2 = logu(rng);
    const EvidenceValue ev = evaluate_evidence(problem, std::exp(l1), std::exp(l2), true);
    REQUIRE(ev.ok);
    const double h = 1e-5;
    for (int d = 0; d < 2; ++d) {
      const double lp1 = l1 + (d == 0 ? h : 0.0), lp2 = l2 + (d == 1 ? h : 0.0);
      const double lm1 = l1 - (d == 0 ? h : 0.0), lm2 = l2 - (d == 1 ? h : 0.0);
      const double fp = evaluate_evidence(problem, std::exp(lp1), std::exp(lp2), false).value;
      const double fm = evaluate_evidence(problem, std::exp(lm1), std::exp(lm2), false).value;
      const double fd = (fp - fm) / (2.0 * h);
      CHECK(std::abs(ev.grad_log_theta(d) - fd) <
            1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("hyperparameter recovery on GP-sampled data") {
  // Draw one sample path from a GP with known kernel; the evidence maximum
  // should land near the generating hyperparameters.
  const int n = 200;
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  Eigen::MatrixXd x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = u(rng);

  const Kernel truth{1.0, 2.0};
  Eigen::MatrixXd cov(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cov(i, j) = kernel_eval(truth, x.row(i), x.row(j));
  cov.diagonal().array() += 1e-10;
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(cov).matrixL();
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z(i) = gauss(rng);
  const Eigen::MatrixXd y = l * z;

  std::mt19937_64 opt_rng(23);
  const FitReport report = optimize_hyperparameters(x, y, 1e-10, 10, opt_rng);
  CHECK(report.kernel.theta2 > truth.theta2 / 1.5);
  CHECK(report.kernel.theta2 < truth.theta2 * 1.5);

  // FitReport invariant: reported evidence matches a refit at the optimum.
  const GpModel m = GpModel::fit(x, y, report.kernel, 1e-10);
  CHECK(report.log_evidence ==
        doctest::Approx(m.log_evidence()).epsilon(1e-9));
}

TEST_CASE("optimizer restarts are deterministic under a fixed seed") {
  Eigen::MatrixXd x(6, 1), y(6, 1);
  x << 0.0, 0.2, 0.4, 0.6, 0.8, 1.0;
  y << 0.0, 0.5, 0.8, 0.9, 0.7, 0.2;
  std::mt19937_64 a(31), b(31);
  const FitReport ra = optimize_hyperparameters(x, y, 1e-10, 1, a);
  const FitReport rb = optimize_hyperparameters(x, y, 1e-10, 1, b);
  CHECK(ra.kernel.theta1 == rb.kernel.theta1);
  CHECK(ra.kernel.theta2 == rb.kernel.theta2);
  CHECK(ra.log_evidence == rb.log_evidence);
}

TEST_CASE("model persistence reloads bit-identically") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::MatrixXd x(12, 3), y(12, 2);
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = u(rng);
    for (int j = 0; j < 2; ++j) y(i, j) = u(rng);
  }
  const GpModel m = GpModel::fit(x, y, Kernel{1.23456789, 0.987654321}, 1e-10);
  const auto path = std::filesystem::temp_directory_path() / "tbgp_model_roundtrip.json";
  m.save(path);
  const GpModel r = GpModel::load(path);
  std::filesystem::remove(path);

  Eigen::MatrixXd q(7, 3);
  q.setRandom();
  const Eigen::MatrixXd pa = m.predict_mean(q);
  const Eigen::MatrixXd pb = r.predict_mean(q);
  CHECK(std::memcmp(pa.data(), pb.data(),
                    sizeof(double) * static_cast<std::size_t>(pa.size())) == 0);
}

TEST_CASE("optimization fails with diagnostics when no restart is usable") {
  // Identical points with zero noise make the covariance exactly singular
  // at every hyperparameter, so every restart dies at its initial point.
  Eigen::MatrixXd x(3, 1), y(3, 1);
  x << 0.5, 0.5, 0.5;
  y << 1.0, 2.0, 3.0;
  std::mt19937_64 rng(1);
  try {
    optimize_hyperparameters(x, y, 0.0, 3, rng);
    FAIL("expected OptimizationFailedError");
  } catch (const OptimizationFailedError& e) {
    CHECK(std::string(e.what()).find("all 3 restarts failed") != std::string::npos);
  }
}

TEST_CASE("jitter ladder is escalated and reported on failure") {
  // A huge signal variance over near-duplicate points cancels the diagonal
  // dominance far below the last jitter rung.
  Eigen::MatrixXd x(4, 1), y(4, 1);
  x << 0.1, 0.1 + 1e-13, 0.1 + 2e-13, 0.9;
  y << 1, 1, 1, 2;
  try {
    GpModel::fit(x, y, Kernel{1e20, 1.0}, 1e-10);
    FAIL("expected IllConditionedError");
  } catch (const IllConditionedError& e) {
    REQUIRE(e.attempted_jitter.size() == 5);
    CHECK(e.attempted_jitter.front() == 1e-10);
    CHECK(e.attempted_jitter.back() == 1e-6);
  }
}

TEST_CASE("fit input validation") {
  CHECK_THROWS_AS(GpModel::fit(Eigen::MatrixXd(), Eigen::MatrixXd(), Kernel{}, 1e-10),
                  InvalidInputError);
  Eigen::MatrixXd x(1, 1), y(1, 1);
  x << 0.0;
  y << std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(GpModel::fit(x, y, Kernel{}, 1e-10), InvalidInputError);
  y << 1.0;
  CHECK_THROWS_AS(GpModel::fit(x, y, Kernel{-1.0, 1.0}, 1e-10), InvalidInputError);
}

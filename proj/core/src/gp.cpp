#include "tbgp/gp.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

namespace tbgp {

namespace {

void squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Eigen::MatrixXd& d2) {
  d2.resize(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    d2.col(j) = (a.rowwise() - b.row(j)).rowwise().squaredNorm();
  }
}

}  // namespace

void GpModel::copy_from(const GpModel& o) {
  x_ = o.x_;
  y_ = o.y_;
  kernel_ = o.kernel_;
  eps2_requested_ = o.eps2_requested_;
  eps2_used_ = o.eps2_used_;
  llt_ = o.llt_;
  weights_ = o.weights_;
  log_evidence_ = o.log_evidence_;
  condition_estimate_ = o.condition_estimate_;
  duplicate_rows_ = o.duplicate_rows_;
  jitter_ladder_ = o.jitter_ladder_;
  variance_clamps_.store(o.variance_clamps_.load());
}

GpModel GpModel::fit(Eigen::MatrixXd x, Eigen::MatrixXd y, Kernel kernel, double eps2) {
  if (x.rows() < 1 || x.rows() != y.rows()) {
    throw InvalidInputError("GpModel::fit: need N >= 1 with matching target rows");
  }
  if (!x.allFinite() || !y.allFinite()) {
    throw InvalidInputError("GpModel::fit: non-finite training data");
  }
  if (!(kernel.theta1 > 0.0) || !(kernel.theta2 > 0.0)) {
    throw InvalidInputError("GpModel::fit: kernel hyperparameters must be positive");
  }

  GpModel m;
  m.x_ = std::move(x);
  m.y_ = std::move(y);
  m.kernel_ = kernel;
  m.eps2_requested_ = eps2;

  const Eigen::Index n = m.x_.rows();
  for (Eigen::Index i = 0; i < n && !m.duplicate_rows_; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if ((m.x_.row(i) - m.x_.row(j)).norm() < 1e-12) {
        m.duplicate_rows_ = true;
        break;
      }
    }
  }

  Eigen::MatrixXd d2;
  squared_distances(m.x_, m.x_, d2);
  const Eigen::MatrixXd k = kernel.theta1 * (-kernel.theta2 * d2.array()).exp().matrix();

  // Jitter ladder: eps2, 10 eps2, ... capped at 1e-6.
  double jitter = eps2;
  bool ok = false;
  while (true) {
    m.jitter_ladder_.push_back(jitter);
    Eigen::MatrixXd kn = k;
    kn.diagonal().array() += jitter;
    m.llt_.compute(kn);
    if (m.llt_.info() == Eigen::Success) {
      ok = true;
      m.eps2_used_ = jitter;
      break;
    }
    if (jitter >= 1e-6) break;
    jitter = std::min(jitter * 10.0, 1e-6);
  }
  if (!ok) {
    throw IllConditionedError("GpModel::fit: factorization failed after jitter escalation",
                              m.jitter_ladder_);
  }

  m.weights_ = m.llt_.solve(m.y_);

  const auto& lfac = m.llt_.matrixLLT();
  double logdet = 0.0, lmax = 0.0, lmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = lfac(i, i);
    logdet += std::log(d);
    lmax = std::max(lmax, d);
    lmin = std::min(lmin, d);
  }
  logdet *= 2.0;
  m.condition_estimate_ = (lmax / lmin) * (lmax / lmin);

  const double quad = (m.y_.array() * m.weights_.array()).sum();
  const auto mm = static_cast<double>(m.y_.cols());
  m.log_evidence_ = -0.5 * quad - 0.5 * mm * logdet -
                    0.5 * mm * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  return m;
}

Eigen::MatrixXd GpModel::predict_mean(const Eigen::Ref<const Eigen::MatrixXd>& xs) const {
  Eigen::MatrixXd d2;
  squared_distances(xs, x_, d2);
  const Eigen::MatrixXd kstar = kernel_.theta1 * (-kernel_.theta2 * d2.array()).exp().matrix();
  return kstar * weights_;
}

Eigen::VectorXd GpModel::predict_mean_accurate(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::Index n = x_.rows(), m = y_.cols(), d = x_.cols();
  const long double t1 = kernel_.theta1, t2 = kernel_.theta2;
  std::vector<long double> acc(static_cast<std::size_t>(m), 0.0L);
  for (Eigen::Index i = 0; i < n; ++i) {
    long double r2 = 0.0L;
    for (Eigen::Index j = 0; j < d; ++j) {
      const long double u = static_cast<long double>(x(j)) - static_cast<long double>(x_(i, j));
      r2 += u * u;
    }
    const long double k = t1 * expl(-t2 * r2);
    for (Eigen::Index c = 0; c < m; ++c) {
      acc[static_cast<std::size_t>(c)] += static_cast<long double>(weights_(i, c)) * k;
    }
  }
  Eigen::VectorXd out(m);
  for (Eigen::Index c = 0; c < m; ++c) out(c) = static_cast<double>(acc[static_cast<std::size_t>(c)]);
  return out;
}

Eigen::VectorXd GpModel::predict_var(const Eigen::Ref<const Eigen::MatrixXd>& xs) const {
  Eigen::MatrixXd d2;
  squared_distances(x_, xs, d2);
  Eigen::MatrixXd kstar_t = kernel_.theta1 * (-kernel_.theta2 * d2.array()).exp().matrix();
  // v = L^-1 K*^T; epistemic variance theta1 - |v_q|^2.
  llt_.matrixL().solveInPlace(kstar_t);
  Eigen::VectorXd var(xs.rows());
  for (Eigen::Index q = 0; q < xs.rows(); ++q) {
    double epi = kernel_.theta1 - kstar_t.col(q).squaredNorm();
    if (epi < 0.0) {
      epi = 0.0;
      variance_clamps_.fetch_add(1, std::memory_order_relaxed);
    }
    var(q) = epi + eps2_used_;
  }
  return var;
}

GpEvidenceProblem::GpEvidenceProblem(Eigen::MatrixXd x, Eigen::MatrixXd y, double eps2)
    : x_(std::move(x)), y_(std::move(y)), eps2_(eps2) {
  squared_distances(x_, x_, dist2_);
}

void GpEvidenceProblem::covariance(double theta1, double theta2, Eigen::MatrixXd& k) const {
  k = theta1 * (-theta2 * dist2_.array()).exp().matrix();
}

void GpEvidenceProblem::covariance_dtheta2(double theta1, double theta2,
                                           Eigen::MatrixXd& dk) const {
  dk = (-theta1 * dist2_.array() * (-theta2 * dist2_.array()).exp()).matrix();
}

FitReport optimize_hyperparameters(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                   double eps2, int restarts, std::mt19937_64& rng,
                                   const OptimizerOptions& options) {
  GpEvidenceProblem problem(x, y, eps2);
  return maximize_evidence(problem, restarts, rng, options);
}

GpModel fit_optimized(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double eps2,
                      int restarts, std::mt19937_64& rng, const OptimizerOptions& options,
                      FitReport* report_out) {
  FitReport report = optimize_hyperparameters(x, y, eps2, restarts, rng, options);
  if (report_out) *report_out = report;
  return GpModel::fit(x, y, report.kernel, eps2);
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (n == 0) return {};
  const auto d = static_cast<Eigen::Index>(rows[0].size());
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rows[i][j].get<double>();
  return m;
}

}  // namespace

void GpModel::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format_version"] = 1;
  j["kind"] = "gp_model";
  j["theta1"] = kernel_.theta1;
  j["theta2"] = kernel_.theta2;
  j["eps2"] = eps2_requested_;
  j["x"] = matrix_to_json(x_);
  j["y"] = matrix_to_json(y_);
  std::ofstream out(path);
  if (!out) throw Error("GpModel::save: cannot open " + path.string());
  out << j.dump(2) << '\n';
}

GpModel GpModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("GpModel::load: cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format_version", 0) != 1 || j.value("kind", "") != "gp_model") {
    throw Error("GpModel::load: unsupported model file " + path.string());
  }
  return fit(matrix_from_json(j.at("x")), matrix_from_json(j.at("y")),
             Kernel{j.at("theta1").get<double>(), j.at("theta2").get<double>()},
             j.at("eps2").get<double>());
}

}  // namespace tbgp

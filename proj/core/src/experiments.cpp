#include "tbgp/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tbgp/potential.hpp"

namespace tbgp {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kResultsHeader =
    "regressor,size,trial,seed,component,rmse,fvu,rotated_rmse,pot_rmse,pot_fvu,"
    "cond_estimate,wall_ms,status";
constexpr std::array<const char*, 6> kComponents = {"xx", "yy", "zz", "xy", "xz", "yz"};
}  // namespace

std::string to_string(Regressor r) {
  switch (r) {
    case Regressor::gp: return "gp";
    case Regressor::tbgp: return "tbgp";
    case Regressor::potential_tbgp: return "potential_tbgp";
  }
  return "?";
}

Regressor regressor_from_string(const std::string& s) {
  if (s == "gp") return Regressor::gp;
  if (s == "tbgp") return Regressor::tbgp;
  if (s == "potential_tbgp") return Regressor::potential_tbgp;
  throw ConfigError("unknown regressor: " + s);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c) {
  auto mix = [](std::uint64_t x, std::uint64_t y) {
    std::uint64_t z = x + 0x9e3779b97f4a7c15ULL * (y + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(master, a), b), c);
}

MetricRecord evaluate_metrics(const Eigen::Ref<const Eigen::MatrixXd>& truth,
                              const Eigen::Ref<const Eigen::MatrixXd>& pred) {
  if (truth.rows() != pred.rows() || truth.cols() != 6 || pred.cols() != 6) {
    throw InvalidInputError("evaluate_metrics: expected matching N x 6 matrices");
  }
  if (truth.rows() < 2) {
    throw InvalidInputError("evaluate_metrics: need at least 2 rows");
  }
  const auto n = static_cast<double>(truth.rows());

  MetricRecord rec;
  auto pearson_fvu = [](const Eigen::VectorXd& t, const Eigen::VectorXd& p) {
    const double mt = t.mean(), mp = p.mean();
    const Eigen::ArrayXd dt = t.array() - mt, dp = p.array() - mp;
    const double vt = (dt * dt).sum(), vp = (dp * dp).sum();
    if (vt <= 0.0 || vp <= 0.0) return kNaN;
    const double rho = (dt * dp).sum() / std::sqrt(vt * vp);
    return 1.0 - rho * rho;
  };

  for (int c = 0; c < 6; ++c) {
    const Eigen::VectorXd diff = pred.col(c) - truth.col(c);
    rec.rmse_comp[static_cast<std::size_t>(c)] = std::sqrt(diff.squaredNorm() / n);
    rec.fvu_comp[static_cast<std::size_t>(c)] = pearson_fvu(truth.col(c), pred.col(c));
  }
  rec.rmse_all = std::sqrt((pred - truth).squaredNorm() / (n * 6.0));

  // Pooled correlation over all components flattened; a paired comparison
  // metric, components keep their natural scales.
  Eigen::VectorXd tf(truth.size()), pf(pred.size());
  Eigen::Index k = 0;
  for (int c = 0; c < 6; ++c) {
    tf.segment(k, truth.rows()) = truth.col(c);
    pf.segment(k, truth.rows()) = pred.col(c);
    k += truth.rows();
  }
  rec.fvu_all = pearson_fvu(tf, pf);
  return rec;
}

void ExperimentConfig::validate() const {
  if (sizes.empty()) throw ConfigError("config: train.sizes must be non-empty");
  std::set<int> seen;
  for (int s : sizes) {
    if (s < 1) throw ConfigError("config: train.sizes entries must be >= 1");
    if (!seen.insert(s).second) throw ConfigError("config: train.sizes must not repeat");
  }
  if (trials < 1) throw ConfigError("config: train.trials must be >= 1");
  if (restarts < 1) throw ConfigError("config: train.restarts must be >= 1");
  if (test_size < 2) throw ConfigError("config: test.size must be >= 2");
  if (!(eps2 > 0.0)) throw ConfigError("config: train.eps2 must be positive");
  if (regressors.empty()) throw ConfigError("config: regressors must be non-empty");
  if (kind == DatasetKind::mooney_rivlin) {
    if (!(range.l2 > 0.0) || !(range.l2 < range.u2)) {
      throw ConfigError("config: problem.range must satisfy 0 < l2 < u2");
    }
    if (!(params.c3 > 0.0)) throw ConfigError("config: problem.params.c3 must be positive");
  }
  const bool has_potential =
      std::find(regressors.begin(), regressors.end(), Regressor::potential_tbgp) !=
      regressors.end();
  if (has_potential && kind != DatasetKind::mooney_rivlin) {
    throw ConfigError(
        "config: regressors: potential_tbgp requires problem.kind = mooney_rivlin "
        "(matrix_exp states can have I3 <= 0)");
  }
}

namespace {

void reject_unknown_keys(const nlohmann::json& j, const std::string& where,
                         std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
          return item.key() == a;
        }) == allowed.end()) {
      throw ConfigError("config: unknown key '" + where + item.key() + "'");
    }
  }
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Translate the byte offset into a line/column pair.
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("config: " + path.string() + ":" + std::to_string(line) + ":" +
                      std::to_string(col) + ": " + e.what());
  }

  try {
    reject_unknown_keys(j, "", {"version", "problem", "train", "test", "regressors",
                                "rotation_test", "feature_mode", "seed", "output_dir",
                                "record_timing", "dump_potential_scatter"});
    if (j.value("version", 0) != 1) {
      throw ConfigError("config: version: missing or unsupported (expected 1)");
    }

    ExperimentConfig cfg;
    const auto& problem = j.at("problem");
    reject_unknown_keys(problem, "problem.", {"kind", "range", "params", "sampling"});
    cfg.kind = dataset_kind_from_string(problem.at("kind").get<std::string>());
    if (problem.contains("range")) {
      cfg.range.l2 = problem["range"].at(0).get<double>();
      cfg.range.u2 = problem["range"].at(1).get<double>();
    }
    if (problem.contains("params")) {
      const auto& p = problem["params"];
      reject_unknown_keys(p, "problem.params.", {"c1", "c2", "c3"});
      cfg.params.c1 = p.value("c1", cfg.params.c1);
      cfg.params.c2 = p.value("c2", cfg.params.c2);
      cfg.params.c3 = p.value("c3", cfg.params.c3);
    }
    if (problem.contains("sampling")) {
      const auto s = problem["sampling"].get<std::string>();
      if (s == "uniform_stretch") {
        cfg.sampling = StretchSampling::uniform_stretch;
      } else if (s == "uniform_square") {
        cfg.sampling = StretchSampling::uniform_square;
      } else {
        throw ConfigError("config: problem.sampling: unknown value '" + s + "'");
      }
    }

    const auto& train = j.at("train");
    reject_unknown_keys(train, "train.", {"sizes", "trials", "restarts", "eps2"});
    cfg.sizes = train.at("sizes").get<std::vector<int>>();
    cfg.trials = train.value("trials", cfg.trials);
    cfg.restarts = train.value("restarts", cfg.restarts);
    cfg.eps2 = train.value("eps2", cfg.eps2);

    if (j.contains("test")) {
      reject_unknown_keys(j["test"], "test.", {"size"});
      cfg.test_size = j["test"].value("size", cfg.test_size);
    }
    if (j.contains("regressors")) {
      cfg.regressors.clear();
      for (const auto& r : j["regressors"]) {
        cfg.regressors.push_back(regressor_from_string(r.get<std::string>()));
      }
    }
    cfg.rotation_test = j.value("rotation_test", cfg.rotation_test);
    if (j.contains("feature_mode")) {
      const auto s = j["feature_mode"].get<std::string>();
      if (s == "invariants") {
        cfg.feature_mode = FeatureMode::invariants;
      } else if (s == "eigenvalues") {
        cfg.feature_mode = FeatureMode::eigenvalues;
      } else {
        throw ConfigError("config: feature_mode: unknown value '" + s + "'");
      }
    }
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
    cfg.record_timing = j.value("record_timing", cfg.record_timing);
    cfg.dump_potential_scatter = j.value("dump_potential_scatter", cfg.dump_potential_scatter);

    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Results CSV

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_opt(const std::string& s) { return s.empty() ? kNaN : std::stod(s); }

void write_row(std::ostream& out, const TrialResult& t, const std::string& component,
               double rmse, double fvu, bool is_all) {
  out << t.regressor << ',' << t.size << ',' << t.trial << ',' << t.seed << ',' << component
      << ',' << fmt(rmse) << ',' << fmt(fvu) << ',';
  if (is_all) {
    out << fmt(t.rotated_rmse) << ',' << fmt(t.pot_rmse) << ',' << fmt(t.pot_fvu) << ','
        << fmt(t.cond_estimate) << ',' << fmt(t.wall_ms);
  } else {
    out << ",,,,";
  }
  out << ',' << t.status << '\n';
}

}  // namespace

void append_results_csv(const std::filesystem::path& path, const std::vector<TrialResult>& rows,
                        bool write_header) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("append_results_csv: cannot open " + path.string());
  if (write_header) out << kResultsHeader << '\n';
  for (const auto& t : rows) {
    if (t.ok()) {
      for (std::size_t c = 0; c < 6; ++c) {
        write_row(out, t, kComponents[c], t.metrics.rmse_comp[c], t.metrics.fvu_comp[c], false);
      }
    }
    write_row(out, t, "all", t.ok() ? t.metrics.rmse_all : kNaN,
              t.ok() ? t.metrics.fvu_all : kNaN, true);
  }
  out.flush();
}

std::vector<TrialResult> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("read_results_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) {
    throw Error("read_results_csv: missing or malformed header in " + path.string());
  }

  std::vector<TrialResult> out;
  std::map<std::tuple<std::string, int, int>, std::size_t> index;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    while (f.size() < 13) f.emplace_back();
    if (f.size() != 13) {
      throw Error("read_results_csv: line " + std::to_string(lineno) + ": expected 13 columns");
    }

    const std::tuple<std::string, int, int> key{f[0], std::stoi(f[1]), std::stoi(f[2])};
    auto it = index.find(key);
    if (it == index.end()) {
      TrialResult t;
      t.regressor = f[0];
      t.size = std::get<1>(key);
      t.trial = std::get<2>(key);
      t.seed = std::stoull(f[3]);
      index.emplace(key, out.size());
      out.push_back(std::move(t));
      it = index.find(key);
    }
    TrialResult& t = out[it->second];

    const std::string& comp = f[4];
    const double rmse = parse_opt(f[5]);
    const double fvu = parse_opt(f[6]);
    if (comp == "all") {
      t.metrics.rmse_all = rmse;
      t.metrics.fvu_all = fvu;
      t.rotated_rmse = parse_opt(f[7]);
      t.pot_rmse = parse_opt(f[8]);
      t.pot_fvu = parse_opt(f[9]);
      t.cond_estimate = parse_opt(f[10]);
      t.wall_ms = std::isnan(parse_opt(f[11])) ? 0.0 : parse_opt(f[11]);
      t.status = f[12];
    } else {
      const auto pos = std::find(kComponents.begin(), kComponents.end(), comp);
      if (pos == kComponents.end()) {
        throw Error("read_results_csv: line " + std::to_string(lineno) + ": bad component '" +
                    comp + "'");
      }
      const auto c = static_cast<std::size_t>(pos - kComponents.begin());
      t.metrics.rmse_comp[c] = rmse;
      t.metrics.fvu_comp[c] = fvu;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runner

namespace {

struct TestSet {
  std::vector<TensorPair> pairs;
  Eigen::MatrixXd truth;        // Q x 6
  Eigen::MatrixXd b_comps;      // Q x 6
  Eigen::MatrixXd invariants;   // Q x 3
  Eigen::MatrixXd eigenvalues;  // Q x 3
  Eigen::VectorXd phi_truth;    // Q (Mooney-Rivlin only)
};

Eigen::MatrixXd pairs_to_inputs(const std::vector<TensorPair>& pairs) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(pairs.size()), 6);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto c = pairs[i].first.components();
    for (int j = 0; j < 6; ++j) x(static_cast<Eigen::Index>(i), j) = c[static_cast<std::size_t>(j)];
  }
  return x;
}

Eigen::MatrixXd pairs_to_targets(const std::vector<TensorPair>& pairs) {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(pairs.size()), 6);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto c = pairs[i].second.components();
    for (int j = 0; j < 6; ++j) y(static_cast<Eigen::Index>(i), j) = c[static_cast<std::size_t>(j)];
  }
  return y;
}

TestSet make_test_set(const ExperimentConfig& cfg, std::mt19937_64& rng) {
  TestSet ts;
  ts.pairs = make_dataset(cfg.kind, cfg.test_size, cfg.range, cfg.params, rng, cfg.sampling);
  ts.truth = pairs_to_targets(ts.pairs);
  ts.b_comps = pairs_to_inputs(ts.pairs);
  const auto q = static_cast<Eigen::Index>(ts.pairs.size());
  ts.invariants.resize(q, 3);
  ts.eigenvalues.resize(q, 3);
  for (Eigen::Index i = 0; i < q; ++i) {
    const EigenSystem es = eigh(ts.pairs[static_cast<std::size_t>(i)].first);
    ts.invariants.row(i) = invariants(es).vec();
    ts.eigenvalues.row(i) = es.eigenvalues;
  }
  if (cfg.kind == DatasetKind::mooney_rivlin) {
    ts.phi_truth.resize(q);
    for (Eigen::Index i = 0; i < q; ++i) {
      ts.phi_truth(i) = mr_energy(cfg.params, Invariants{ts.invariants(i, 0), ts.invariants(i, 1),
                                                         ts.invariants(i, 2)});
    }
  }
  return ts;
}

std::vector<TensorPair> rotate_pairs(const std::vector<TensorPair>& pairs,
                                     std::mt19937_64& rng) {
  std::vector<TensorPair> out;
  out.reserve(pairs.size());
  for (const auto& [b, sigma] : pairs) {
    const Rotation3 r = sample_rotation(rng);
    out.emplace_back(rotate(b, r), rotate(sigma, r));
  }
  return out;
}

double pooled_rmse(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred) {
  return std::sqrt((pred - truth).squaredNorm() /
                   static_cast<double>(truth.rows() * truth.cols()));
}

std::string status_for(const std::exception& e) {
  if (dynamic_cast<const IllConditionedError*>(&e)) return "error:ill_conditioned";
  if (dynamic_cast<const OptimizationFailedError*>(&e)) return "error:optimization_failed";
  if (dynamic_cast<const InvalidStretchError*>(&e)) return "error:invalid_stretch";
  if (dynamic_cast<const InvalidInputError*>(&e)) return "error:invalid_input";
  return "error:other";
}

struct TrialContext {
  const ExperimentConfig& cfg;
  const std::vector<TensorPair>& train;
  const std::vector<TensorPair>* rotated_train;  // null unless rotation test
  const TestSet& test;
  bool dump_scatter = false;
};

void eval_gp(const TrialContext& ctx, std::mt19937_64& rng, TrialResult& t) {
  const GpModel model = fit_optimized(pairs_to_inputs(ctx.train), pairs_to_targets(ctx.train),
                                      ctx.cfg.eps2, ctx.cfg.restarts, rng);
  t.metrics = evaluate_metrics(ctx.test.truth, model.predict_mean(ctx.test.b_comps));
  t.cond_estimate = model.condition_estimate();
  if (ctx.rotated_train) {
    t.rotated_rmse = pooled_rmse(pairs_to_targets(*ctx.rotated_train),
                                 model.predict_mean(pairs_to_inputs(*ctx.rotated_train)));
  }
}

void eval_tbgp(const TrialContext& ctx, std::mt19937_64& rng, TrialResult& t) {
  TbgpModel model =
      TbgpModel::fit(ctx.train, ctx.cfg.eps2, ctx.cfg.restarts, rng, ctx.cfg.feature_mode);
  model.dataset_id = to_string(ctx.cfg.kind) + "/size" + std::to_string(t.size) + "/trial" +
                     std::to_string(t.trial);
  model.seed = t.seed;
  const Eigen::MatrixXd& features = ctx.cfg.feature_mode == FeatureMode::invariants
                                        ? ctx.test.invariants
                                        : ctx.test.eigenvalues;
  const Eigen::MatrixXd coefs = model.predict_coefficients(features);
  Eigen::MatrixXd pred(features.rows(), 6);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const SymTensor3 s = reconstruct(BasisCoefficients{coefs(i, 0), coefs(i, 1), coefs(i, 2)},
                                     ctx.test.pairs[static_cast<std::size_t>(i)].first);
    const auto c = s.components();
    for (int j = 0; j < 6; ++j) pred(i, j) = c[static_cast<std::size_t>(j)];
  }
  t.metrics = evaluate_metrics(ctx.test.truth, pred);
  t.cond_estimate = model.gp().condition_estimate();
  if (ctx.rotated_train) {
    Eigen::MatrixXd rpred(static_cast<Eigen::Index>(ctx.rotated_train->size()), 6);
    for (std::size_t i = 0; i < ctx.rotated_train->size(); ++i) {
      const auto c = model.predict_stress((*ctx.rotated_train)[i].first).components();
      for (int j = 0; j < 6; ++j)
        rpred(static_cast<Eigen::Index>(i), j) = c[static_cast<std::size_t>(j)];
    }
    t.rotated_rmse = pooled_rmse(pairs_to_targets(*ctx.rotated_train), rpred);
  }
}

void eval_potential(const TrialContext& ctx, std::mt19937_64& rng, TrialResult& t) {
  const PotentialGpModel model =
      PotentialGpModel::fit(ctx.train, ctx.cfg.eps2, ctx.cfg.restarts, rng);
  const Eigen::Index q = ctx.test.invariants.rows();

  Eigen::MatrixXd pred(q, 6);
  Eigen::VectorXd phi(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    const Invariants inv{ctx.test.invariants(i, 0), ctx.test.invariants(i, 1),
                         ctx.test.invariants(i, 2)};
    const Eigen::Vector3d grad = model.predict_gradient(inv);
    PotentialGradientSample g;
    g.inv = inv;
    g.d_i1 = grad(0);
    g.d_i2 = grad(1);
    g.d_i3 = grad(2);
    const SymTensor3 s = reconstruct(gradient_to_coefficients(g),
                                     ctx.test.pairs[static_cast<std::size_t>(i)].first);
    const auto c = s.components();
    for (int j = 0; j < 6; ++j) pred(i, j) = c[static_cast<std::size_t>(j)];
    phi(i) = model.predict_potential(inv);
  }
  t.metrics = evaluate_metrics(ctx.test.truth, pred);
  t.cond_estimate = model.condition_estimate();

  if (ctx.test.phi_truth.size() == q) {
    const Eigen::VectorXd diff = phi - ctx.test.phi_truth;
    t.pot_rmse = std::sqrt(diff.squaredNorm() / static_cast<double>(q));
    const double mt = ctx.test.phi_truth.mean(), mp = phi.mean();
    const Eigen::ArrayXd dt = ctx.test.phi_truth.array() - mt, dp = phi.array() - mp;
    const double vt = (dt * dt).sum(), vp = (dp * dp).sum();
    t.pot_fvu = (vt > 0.0 && vp > 0.0)
                    ? 1.0 - std::pow((dt * dp).sum() / std::sqrt(vt * vp), 2)
                    : kNaN;
    // Soft physical check: the truth potential is nonnegative on the sampled
    // range, so a clearly negative prediction is worth a log line.
    if (phi.minCoeff() < -1e-3) {
      std::cerr << "[warn] potential prediction dips to " << phi.minCoeff()
                << " MPa (size=" << t.size << " trial=" << t.trial << ")\n";
    }
  }

  if (ctx.rotated_train) {
    Eigen::MatrixXd rpred(static_cast<Eigen::Index>(ctx.rotated_train->size()), 6);
    for (std::size_t i = 0; i < ctx.rotated_train->size(); ++i) {
      const auto c = model.predict_stress((*ctx.rotated_train)[i].first).components();
      for (int j = 0; j < 6; ++j)
        rpred(static_cast<Eigen::Index>(i), j) = c[static_cast<std::size_t>(j)];
    }
    t.rotated_rmse = pooled_rmse(pairs_to_targets(*ctx.rotated_train), rpred);
  }

  if (ctx.dump_scatter) {
    model.write_potential_csv(ctx.cfg.output_dir /
                                  ("potential_scatter_size" + std::to_string(t.size) + ".csv"),
                              ctx.test.invariants);
  }
}

// Keeps only complete (size, trial) groups in a partial results file.
// Returns the set of completed (size, trial) keys; rewrites the file when
// trailing partial rows had to be dropped.
std::set<std::pair<int, int>> clean_partial_results(const std::filesystem::path& path,
                                                    const ExperimentConfig& cfg) {
  std::set<std::pair<int, int>> done;
  if (!std::filesystem::exists(path)) return done;

  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) {
    throw Error("results file exists but has a bad header: " + path.string());
  }

  struct Group {
    std::vector<std::string> lines;
    std::set<std::string> all_rows_seen;  // regressors with an "all" row
  };
  std::vector<std::pair<int, int>> order;
  std::map<std::pair<int, int>, Group> groups;

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string reg, size_s, trial_s, seed_s, comp;
    std::getline(ss, reg, ',');
    std::getline(ss, size_s, ',');
    std::getline(ss, trial_s, ',');
    std::getline(ss, seed_s, ',');
    std::getline(ss, comp, ',');
    const std::pair<int, int> key{std::stoi(size_s), std::stoi(trial_s)};
    if (!groups.count(key)) order.push_back(key);
    Group& g = groups[key];
    g.lines.push_back(line);
    if (comp == "all") g.all_rows_seen.insert(reg);
  }
  in.close();

  std::ofstream out(path, std::ios::trunc);
  out << kResultsHeader << '\n';
  for (const auto& key : order) {
    const Group& g = groups[key];
    bool complete = true;
    for (Regressor r : cfg.regressors) {
      if (!g.all_rows_seen.count(to_string(r))) {
        complete = false;
        break;
      }
    }
    if (!complete) continue;
    for (const auto& l : g.lines) out << l << '\n';
    done.insert(key);
  }
  return done;
}

}  // namespace

std::vector<TrialResult> run_learning_curve(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path results_path = cfg.output_dir / "results.csv";

  const bool existed = std::filesystem::exists(results_path);
  const std::set<std::pair<int, int>> done = clean_partial_results(results_path, cfg);
  if (!existed) {
    std::ofstream out(results_path);
    out << kResultsHeader << '\n';
  }

  const int max_size = *std::max_element(cfg.sizes.begin(), cfg.sizes.end());

  std::vector<TrialResult> all;
  if (existed) all = read_results_csv(results_path);

  for (int size : cfg.sizes) {
    for (int trial = 0; trial < cfg.trials; ++trial) {
      if (done.count({size, trial})) continue;

      const std::uint64_t trial_seed =
          derive_seed(cfg.seed, static_cast<std::uint64_t>(size),
                      static_cast<std::uint64_t>(trial), 0);
      std::mt19937_64 rng_train(derive_seed(trial_seed, 1, 0, 0));
      std::mt19937_64 rng_test(derive_seed(trial_seed, 2, 0, 0));
      std::mt19937_64 rng_rot(derive_seed(trial_seed, 3, 0, 0));

      const std::vector<TensorPair> train =
          make_dataset(cfg.kind, size, cfg.range, cfg.params, rng_train, cfg.sampling);
      const TestSet test = make_test_set(cfg, rng_test);

      std::vector<TensorPair> rotated;
      if (cfg.rotation_test) rotated = rotate_pairs(train, rng_rot);

      std::vector<TrialResult> rows;
      for (std::size_t ri = 0; ri < cfg.regressors.size(); ++ri) {
        const Regressor reg = cfg.regressors[ri];
        TrialResult t;
        t.regressor = to_string(reg);
        t.size = size;
        t.trial = trial;
        t.seed = trial_seed;

        TrialContext ctx{cfg, train, cfg.rotation_test ? &rotated : nullptr, test, false};
        ctx.dump_scatter = cfg.dump_potential_scatter && reg == Regressor::potential_tbgp &&
                           size == max_size && trial == 0;

        std::mt19937_64 rng_fit(derive_seed(trial_seed, 10, ri, 0));
        const auto start = std::chrono::steady_clock::now();
        try {
          switch (reg) {
            case Regressor::gp: eval_gp(ctx, rng_fit, t); break;
            case Regressor::tbgp: eval_tbgp(ctx, rng_fit, t); break;
            case Regressor::potential_tbgp: eval_potential(ctx, rng_fit, t); break;
          }
        } catch (const std::exception& e) {
          t.status = status_for(e);
          std::cerr << "[warn] " << t.regressor << " size=" << size << " trial=" << trial
                    << " failed: " << e.what() << '\n';
        }
        if (cfg.record_timing) {
          t.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
        }
        rows.push_back(std::move(t));
      }
      append_results_csv(results_path, rows, false);
      for (auto& r : rows) all.push_back(std::move(r));
    }
  }
  return all;
}

std::vector<TrialResult> run_rotation_test(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.rotation_test = true;
  return run_learning_curve(c);
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

std::array<double, 3> quartiles(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
  if (v.empty()) return {kNaN, kNaN, kNaN};
  std::sort(v.begin(), v.end());
  auto at = [&](double p) {
    const double idx = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(idx));
    const auto hi = static_cast<std::size_t>(std::ceil(idx));
    return v[lo] + (v[hi] - v[lo]) * (idx - static_cast<double>(lo));
  };
  return {at(0.5), at(0.25), at(0.75)};
}

}  // namespace

std::vector<AggregateRow> aggregate_results(const std::vector<TrialResult>& rows) {
  std::vector<std::pair<std::string, int>> order;
  std::map<std::pair<std::string, int>, std::vector<const TrialResult*>> groups;
  for (const auto& r : rows) {
    const std::pair<std::string, int> key{r.regressor, r.size};
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }

  std::vector<AggregateRow> out;
  for (const auto& key : order) {
    const auto& g = groups[key];
    AggregateRow a;
    a.regressor = key.first;
    a.size = key.second;
    a.n_trials = static_cast<int>(g.size());

    std::vector<double> rmse, fvu, rot, prmse, pfvu, cond, wall;
    for (const TrialResult* t : g) {
      if (!t->ok()) {
        ++a.n_failed;
        continue;
      }
      rmse.push_back(t->metrics.rmse_all);
      fvu.push_back(t->metrics.fvu_all);
      rot.push_back(t->rotated_rmse);
      prmse.push_back(t->pot_rmse);
      pfvu.push_back(t->pot_fvu);
      cond.push_back(t->cond_estimate);
      wall.push_back(t->wall_ms);
    }
    a.rmse = quartiles(rmse);
    a.fvu = quartiles(fvu);
    a.rotated_rmse = quartiles(rot);
    a.pot_rmse = quartiles(prmse);
    a.pot_fvu = quartiles(pfvu);
    a.cond = quartiles(cond);
    a.wall_ms = quartiles(wall);
    out.push_back(std::move(a));
  }
  return out;
}

void write_report_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("write_report_csv: cannot open " + path.string());
  out << "regressor,size,n_trials,n_failed,"
         "rmse_med,rmse_q25,rmse_q75,fvu_med,fvu_q25,fvu_q75,"
         "rotated_rmse_med,rotated_rmse_q25,rotated_rmse_q75,"
         "pot_rmse_med,pot_rmse_q25,pot_rmse_q75,pot_fvu_med,pot_fvu_q25,pot_fvu_q75,"
         "cond_med,cond_q25,cond_q75,wall_ms_med,wall_ms_q25,wall_ms_q75\n";
  auto dump3 = [&](const std::array<double, 3>& q) {
    out << ',' << fmt(q[0]) << ',' << fmt(q[1]) << ',' << fmt(q[2]);
  };
  for (const auto& a : rows) {
    out << a.regressor << ',' << a.size << ',' << a.n_trials << ',' << a.n_failed;
    dump3(a.rmse);
    dump3(a.fvu);
    dump3(a.rotated_rmse);
    dump3(a.pot_rmse);
    dump3(a.pot_fvu);
    dump3(a.cond);
    dump3(a.wall_ms);
    out << '\n';
  }
}

}  // namespace tbgp

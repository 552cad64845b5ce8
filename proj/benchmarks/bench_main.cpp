#include <random>

#include <benchmark/benchmark.h>

#include "tbgp/gp.hpp"
#include "tbgp/potential.hpp"
#include "tbgp/tbgp_model.hpp"

namespace {

using namespace tbgp;

std::vector<TensorPair> mooney_pairs(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return make_dataset(DatasetKind::mooney_rivlin, n, StretchRange{1.0, 1.5},
                      MooneyRivlinParams{}, rng);
}

void BM_Eigh(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const SymTensor3 b = sample_deformation(StretchRange{0.9, 2.0}, rng).b;
  for (auto _ : state) {
    benchmark::DoNotOptimize(eigh(b));
  }
}
BENCHMARK(BM_Eigh);

void BM_SolveCoefficients(benchmark::State& state) {
  const Eigen::Vector3d lb(1.0, 1.3, 1.7);
  const Eigen::Vector3d ls(0.2, 0.5, 1.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_coefficients(lb, ls));
  }
}
BENCHMARK(BM_SolveCoefficients);

void BM_Featurize(benchmark::State& state) {
  const auto pairs = mooney_pairs(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(featurize(pairs));
  }
}
BENCHMARK(BM_Featurize)->Arg(64)->Arg(256);

void BM_GpEvidenceEval(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd x(n, 3), y(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) {
      x(i, j) = u(rng);
      y(i, j) = std::sin(3.0 * x(i, j));
    }
  const GpEvidenceProblem problem(x, y, 1e-10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_evidence(problem, 1.0, 2.0, true));
  }
}
BENCHMARK(BM_GpEvidenceEval)->Arg(64)->Arg(200);

void BM_GpFitPredict(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd x(n, 6), y(n, 6), q(1000, 6);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 6; ++j) {
      x(i, j) = u(rng);
      y(i, j) = std::sin(3.0 * x(i, j));
    }
  for (int i = 0; i < 1000; ++i)
    for (int j = 0; j < 6; ++j) q(i, j) = u(rng);
  for (auto _ : state) {
    const GpModel m = GpModel::fit(x, y, Kernel{1.0, 2.0}, 1e-10);
    benchmark::DoNotOptimize(m.predict_mean(q));
  }
}
BENCHMARK(BM_GpFitPredict)->Arg(64)->Arg(200);

void BM_AugmentedAssembly(benchmark::State& state) {
  const auto pairs = mooney_pairs(static_cast<int>(state.range(0)), 5);
  const FeaturizedData data = featurize(pairs);
  Eigen::MatrixXd k;
  for (auto _ : state) {
    assemble_augmented_covariance(Kernel{1.0, 0.5}, data.features, k);
    benchmark::DoNotOptimize(k);
  }
}
BENCHMARK(BM_AugmentedAssembly)->Arg(64)->Arg(200);

void BM_PotentialEvidenceEval(benchmark::State& state) {
  const auto pairs = mooney_pairs(static_cast<int>(state.range(0)), 6);
  const FeaturizedData data = featurize(pairs);
  const Eigen::Index n = data.features.rows();
  Eigen::VectorXd targets = Eigen::VectorXd::Zero(3 * n + 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Invariants inv{data.features(r, 0), data.features(r, 1), data.features(r, 2)};
    const BasisCoefficients c{data.coefficients(r, 0), data.coefficients(r, 1),
                              data.coefficients(r, 2)};
    const PotentialGradientSample g = coefficients_to_gradient(c, inv);
    targets(1 + 0 * n + r) = g.d_i1;
    targets(1 + 1 * n + r) = g.d_i2;
    targets(1 + 2 * n + r) = g.d_i3;
  }
  const PotentialEvidenceProblem problem(data.features, targets, 1e-10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_evidence(problem, 1.0, 0.5, true));
  }
}
BENCHMARK(BM_PotentialEvidenceEval)->Arg(64)->Arg(200);

void BM_TbgpPredict(benchmark::State& state) {
  const auto pairs = mooney_pairs(64, 7);
  std::mt19937_64 rng(8);
  const TbgpModel model = TbgpModel::fit(pairs, 1e-10, 2, rng);
  std::mt19937_64 qrng(9);
  const SymTensor3 b = sample_deformation(StretchRange{1.0, 1.5}, qrng).b;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.predict_stress(b));
  }
}
BENCHMARK(BM_TbgpPredict);

}  // namespace

BENCHMARK_MAIN();

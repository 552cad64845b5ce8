#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tbgp/materials.hpp"
#include "tbgp/tensor.hpp"

namespace tbgp {

/// Bounds [l^2, u^2] on the eigenvalues of the generated stretch tensors.
struct StretchRange {
  double l2 = 1.0;
  double u2 = 1.5;
};

/// How the diagonal stretch entries are drawn. The principal stretches of V
/// are uniform on [l, u] by default, which makes the eigenvalues of B = V^2
/// land in [l^2, u^2] but not uniformly; uniform_square samples V^2 entries
/// uniformly instead, as a sensitivity check.
enum class StretchSampling { uniform_stretch, uniform_square };

struct Deformation {
  Eigen::Matrix3d f;  // deformation gradient R V, det > 0
  SymTensor3 b;       // R V^2 R^T
};

/// Random deformation state via polar decomposition F = R V with Haar R.
Deformation sample_deformation(const StretchRange& range, std::mt19937_64& rng,
                               StretchSampling sampling = StretchSampling::uniform_stretch);

/// Symmetric part of a 3x3 matrix with U[0,1] entries.
SymTensor3 sample_symmetric_matrix(std::mt19937_64& rng);

enum class DatasetKind { mooney_rivlin, matrix_exp };

using TensorPair = std::pair<SymTensor3, SymTensor3>;  // (B, sigma)

/// n labeled pairs through the matching truth model; deterministic under the
/// caller's stream. `range` and `params` apply to the Mooney-Rivlin path.
std::vector<TensorPair> make_dataset(DatasetKind kind, int n, const StretchRange& range,
                                     const MooneyRivlinParams& params, std::mt19937_64& rng,
                                     StretchSampling sampling = StretchSampling::uniform_stretch);

/// Sidecar metadata recorded next to every dataset file.
struct DatasetMetadata {
  std::uint64_t seed = 0;
  DatasetKind kind = DatasetKind::matrix_exp;
  StretchRange range;
  int n = 0;
  MooneyRivlinParams params;
};

std::string to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& s);

/// 12-column CSV (b_xx..b_yz, sigma_xx..sigma_yz) with mandatory header,
/// plus `<path>.meta.json`.
void write_dataset_csv(const std::filesystem::path& path, const std::vector<TensorPair>& pairs,
                       const DatasetMetadata& meta);

/// Reads the 12-column CSV; header is validated.
std::vector<TensorPair> read_dataset_csv(const std::filesystem::path& path);

}  // namespace tbgp

#include "tbgp/datagen.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace tbgp {

Deformation sample_deformation(const StretchRange& range, std::mt19937_64& rng,
                               StretchSampling sampling) {
  if (!(range.l2 > 0.0) || !(range.l2 <= range.u2)) {
    throw InvalidInputError("sample_deformation: require 0 < l2 <= u2");
  }
  Eigen::Vector3d v;  // principal stretches
  if (sampling == StretchSampling::uniform_stretch) {
    std::uniform_real_distribution<double> dist(std::sqrt(range.l2), std::sqrt(range.u2));
    v = {dist(rng), dist(rng), dist(rng)};
  } else {
    std::uniform_real_distribution<double> dist(range.l2, range.u2);
    v = {std::sqrt(dist(rng)), std::sqrt(dist(rng)), std::sqrt(dist(rng))};
  }
  const Rotation3 r = sample_rotation(rng);

  Deformation d;
  d.f = r.matrix() * v.asDiagonal();
  const Eigen::Vector3d v2 = v.array().square();
  d.b = SymTensor3::from_matrix(r.matrix() * v2.asDiagonal() * r.matrix().transpose());
  return d;
}

SymTensor3 sample_symmetric_matrix(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Eigen::Matrix3d m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = u01(rng);
  return SymTensor3::from_matrix(0.5 * (m + m.transpose()));
}

std::vector<TensorPair> make_dataset(DatasetKind kind, int n, const StretchRange& range,
                                     const MooneyRivlinParams& params, std::mt19937_64& rng,
                                     StretchSampling sampling) {
  if (n < 1) throw InvalidInputError("make_dataset: n must be >= 1");
  std::vector<TensorPair> pairs;
  pairs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (kind == DatasetKind::mooney_rivlin) {
      const SymTensor3 b = sample_deformation(range, rng, sampling).b;
      pairs.emplace_back(b, mr_stress(params, b));
    } else {
      const SymTensor3 b = sample_symmetric_matrix(rng);
      pairs.emplace_back(b, matrix_exp(b));
    }
  }
  return pairs;
}

std::string to_string(DatasetKind kind) {
  return kind == DatasetKind::mooney_rivlin ? "mooney_rivlin" : "matrix_exp";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "mooney_rivlin") return DatasetKind::mooney_rivlin;
  if (s == "matrix_exp") return DatasetKind::matrix_exp;
  throw InvalidInputError("unknown dataset kind: " + s);
}

namespace {

constexpr const char* kHeader =
    "b_xx,b_yy,b_zz,b_xy,b_xz,b_yz,sigma_xx,sigma_yy,sigma_zz,sigma_xy,sigma_xz,sigma_yz";

void write_components(std::ostream& out, const SymTensor3& t, bool trailing_comma) {
  const auto c = t.components();
  for (std::size_t i = 0; i < c.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", c[i]);
    out << buf;
    if (i + 1 < c.size() || trailing_comma) out << ',';
  }
}

}  // namespace

void write_dataset_csv(const std::filesystem::path& path, const std::vector<TensorPair>& pairs,
                       const DatasetMetadata& meta) {
  std::ofstream out(path);
  if (!out) throw Error("write_dataset_csv: cannot open " + path.string());
  out << kHeader << '\n';
  for (const auto& [b, sigma] : pairs) {
    write_components(out, b, true);
    write_components(out, sigma, false);
    out << '\n';
  }

  nlohmann::json j;
  j["seed"] = meta.seed;
  j["kind"] = to_string(meta.kind);
  j["range"] = {meta.range.l2, meta.range.u2};
  j["n"] = meta.n;
  j["params"] = {{"c1", meta.params.c1}, {"c2", meta.params.c2}, {"c3", meta.params.c3}};
  std::ofstream side(path.string() + ".meta.json");
  if (!side) throw Error("write_dataset_csv: cannot open sidecar for " + path.string());
  side << j.dump(2) << '\n';
}

std::vector<TensorPair> read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("read_dataset_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kHeader) {
    throw Error("read_dataset_csv: missing or malformed header in " + path.string());
  }
  std::vector<TensorPair> pairs;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::array<double, 12> v{};
    std::string cell;
    for (int i = 0; i < 12; ++i) {
      if (!std::getline(ss, cell, ',')) {
        throw Error("read_dataset_csv: line " + std::to_string(lineno) + ": expected 12 columns");
      }
      v[static_cast<std::size_t>(i)] = std::stod(cell);
    }
    pairs.emplace_back(SymTensor3{v[0], v[1], v[2], v[3], v[4], v[5]},
                       SymTensor3{v[6], v[7], v[8], v[9], v[10], v[11]});
  }
  return pairs;
}

}  // namespace tbgp

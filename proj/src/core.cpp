// src/core.cpp

// Copyright 2026  The embalign Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "embalign/core.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <thread>
#include <unordered_set>

namespace embalign {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RngSeed RngSeed::derive(std::string_view stage) const {
  return RngSeed{splitmix64(value ^ fnv1a64(stage))};
}

EmbeddingSet::EmbeddingSet(Matrix vectors, std::vector<std::string> user_ids,
                           std::vector<std::optional<int>> labels,
                           std::optional<int> num_classes)
    : vectors_(std::move(vectors)),
      user_ids_(std::move(user_ids)),
      labels_(std::move(labels)) {
  const Index n = vectors_.rows();
  if (n < 1) throw ValidationError("embedding set must contain at least one record");
  if (vectors_.cols() < 2)
    throw ValidationError("embedding dimension must be >= 2, got " +
                          std::to_string(vectors_.cols()));
  if (static_cast<Index>(user_ids_.size()) != n)
    throw ValidationError("user id count " + std::to_string(user_ids_.size()) +
                          " does not match record count " + std::to_string(n));
  if (labels_.empty()) labels_.assign(static_cast<std::size_t>(n), std::nullopt);
  if (static_cast<Index>(labels_.size()) != n)
    throw ValidationError("label count does not match record count");
  if (!vectors_.allFinite()) throw ValidationError("embedding vectors must be finite");

  int max_label = -1;
  for (std::size_t i = 0; i < user_ids_.size(); ++i) {
    if (user_ids_[i].empty())
      throw ValidationError("record " + std::to_string(i) + " has an empty user id");
    if (labels_[i]) {
      if (*labels_[i] < 0)
        throw ValidationError("record " + std::to_string(i) + " has a negative class label");
      max_label = std::max(max_label, *labels_[i]);
    }
  }
  num_classes_ = num_classes.value_or(max_label + 1);
  if (max_label >= num_classes_)
    throw ValidationError("class label " + std::to_string(max_label) +
                          " is not below the declared class count " +
                          std::to_string(num_classes_));
}

EmbeddingSet::EmbeddingSet(Matrix vectors, std::vector<std::string> user_ids)
    : EmbeddingSet(std::move(vectors), std::move(user_ids), {}) {}

bool EmbeddingSet::fully_labeled() const {
  return std::all_of(labels_.begin(), labels_.end(),
                     [](const std::optional<int>& l) { return l.has_value(); });
}

EmbeddingSet EmbeddingSet::subset(std::span<const Index> rows) const {
  Matrix v(static_cast<Index>(rows.size()), dim());
  std::vector<std::string> ids;
  std::vector<std::optional<int>> labels;
  ids.reserve(rows.size());
  labels.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Index r = rows[k];
    if (r < 0 || r >= size()) throw ValidationError("subset row out of range");
    v.row(static_cast<Index>(k)) = vectors_.row(r);
    ids.push_back(user_ids_[static_cast<std::size_t>(r)]);
    labels.push_back(labels_[static_cast<std::size_t>(r)]);
  }
  return EmbeddingSet(std::move(v), std::move(ids), std::move(labels), num_classes_);
}

EmbeddingSet EmbeddingSet::with_vectors(Matrix vectors) const {
  if (vectors.rows() != size())
    throw ValidationError("replacement vectors have " + std::to_string(vectors.rows()) +
                          " rows, set has " + std::to_string(size()));
  return EmbeddingSet(std::move(vectors), user_ids_, labels_, num_classes_);
}

std::vector<std::string> EmbeddingSet::distinct_users() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& id : user_ids_)
    if (seen.insert(id).second) out.push_back(id);
  return out;
}

double orthogonality_error(const Matrix& w) {
  return (w.transpose() * w - Matrix::Identity(w.cols(), w.cols())).norm();
}

Matrix polar_projection(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

Rotation Rotation::from_matrix(Matrix m) {
  if (m.rows() != m.cols() || m.rows() < 1)
    throw ValidationError("rotation must be square, got " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()));
  if (!m.allFinite()) throw ValidationError("rotation contains non-finite entries");
  const double orth = embalign::orthogonality_error(m);
  if (orth > kRotationTolerance)
    throw ValidationError("matrix is not orthogonal: ||W^T W - I||_F = " + std::to_string(orth));
  const double d = m.determinant();
  if (std::abs(std::abs(d) - 1.0) > kRotationTolerance)
    throw ValidationError("rotation determinant magnitude " + std::to_string(std::abs(d)) +
                          " is not 1");
  return Rotation(std::move(m));
}

Rotation Rotation::nearest(const Matrix& m) {
  if (m.rows() != m.cols()) throw ValidationError("rotation must be square");
  if (embalign::orthogonality_error(m) > kRotationTolerance)
    return from_matrix(polar_projection(m));
  return from_matrix(m);
}

Rotation Rotation::identity(Index dim) {
  if (dim < 1) throw ValidationError("rotation dimension must be positive");
  return Rotation(Matrix::Identity(dim, dim));
}

double Rotation::det() const { return matrix_.determinant(); }

Rotation Rotation::transpose() const { return Rotation(matrix_.transpose()); }

Rotation Rotation::then(const Rotation& other) const {
  if (other.dim() != dim()) throw ValidationError("rotation dimensions differ");
  return Rotation::nearest(matrix_ * other.matrix_);
}

std::map<int, RowVector> class_centroids(const EmbeddingSet& set) {
  std::map<int, RowVector> sums;
  std::map<int, Index> counts;
  for (Index i = 0; i < set.size(); ++i) {
    const auto label = set.label(i);
    if (!label) continue;
    auto it = sums.find(*label);
    if (it == sums.end())
      sums.emplace(*label, set.vectors().row(i));
    else
      it->second += set.vectors().row(i);
    ++counts[*label];
  }
  for (auto& [label, v] : sums) v /= static_cast<double>(counts[label]);
  return sums;
}

EmbeddingSet apply_alignment(const EmbeddingSet& set, const Rotation& w) {
  if (set.dim() != w.dim())
    throw ValidationError("dimension mismatch: embeddings have D=" + std::to_string(set.dim()) +
                          ", rotation has D=" + std::to_string(w.dim()));
  return set.with_vectors(set.vectors() * w.matrix());
}

Matrix standard_normal(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  // Row-major fill order so the draw sequence does not depend on storage order.
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

Rotation random_rotation(Index dim, RngSeed seed) {
  if (dim < 2) throw ValidationError("random_rotation needs D >= 2, got " + std::to_string(dim));
  auto rng = seed.engine();
  const Matrix g = standard_normal(dim, dim, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(dim, dim);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  // Sign fix makes the factorization unique, which gives the Haar measure.
  for (Index j = 0; j < dim; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  if (q.determinant() < 0) q.col(dim - 1) *= -1.0;
  return Rotation::nearest(q);
}

std::vector<Index> sample_without_replacement(Index n, Index k, std::mt19937_64& rng) {
  if (k > n || k < 0) throw ValidationError("cannot sample " + std::to_string(k) +
                                            " items from " + std::to_string(n));
  std::vector<Index> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Index{0});
  // Partial Fisher-Yates with an explicit integer draw; std::shuffle's
  // sequence is implementation-defined.
  for (Index i = 0; i < k; ++i) {
    const std::uint64_t span = static_cast<std::uint64_t>(n - i);
    const Index j = i + static_cast<Index>(rng() % span);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

int thread_count() {
  const char* env = std::getenv("EMBALIGN_THREADS");
  if (env == nullptr) return 1;
  const int requested = std::atoi(env);
  const int hw = std::max(1u, std::thread::hardware_concurrency());
  return std::clamp(requested, 1, hw);
}

}  // namespace embalign

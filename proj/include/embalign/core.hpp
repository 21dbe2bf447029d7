// include/embalign/core.hpp

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

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace embalign {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Bad input: shape mismatch, violated precondition, invalid config.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File system or format failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine failed (non-convergence, underflow, lost definiteness).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Root seed for every stochastic operation.
///
/// Sub-stages never share a stream: each derives its own seed from the stage
/// name with derive(), so adding a stage does not perturb the others.
/// The derivation is splitmix64(value XOR fnv1a64(stage)), which is stable
/// across platforms and standard libraries.
struct RngSeed {
  std::uint64_t value = 0;

  RngSeed derive(std::string_view stage) const;
  std::mt19937_64 engine() const { return std::mt19937_64(value); }

  friend bool operator==(const RngSeed&, const RngSeed&) = default;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

/// N labeled D-dimensional vectors produced by one encoder.
///
/// Immutable after construction. Vectors are stored in 64-bit floating point
/// and are never length-normalized.
class EmbeddingSet {
 public:
  EmbeddingSet(Matrix vectors, std::vector<std::string> user_ids,
               std::vector<std::optional<int>> labels,
               std::optional<int> num_classes = std::nullopt);

  /// Convenience constructor for unlabeled sets.
  EmbeddingSet(Matrix vectors, std::vector<std::string> user_ids);

  Index size() const { return vectors_.rows(); }
  Index dim() const { return vectors_.cols(); }

  const Matrix& vectors() const { return vectors_; }
  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::optional<int>>& labels() const { return labels_; }
  const std::string& user_id(Index i) const { return user_ids_[static_cast<std::size_t>(i)]; }
  std::optional<int> label(Index i) const { return labels_[static_cast<std::size_t>(i)]; }

  /// Number of declared classes; 0 when no record carries a label.
  int num_classes() const { return num_classes_; }
  /// True when every record carries a class label.
  bool fully_labeled() const;

  /// Rows in the given order (duplicates allowed).
  EmbeddingSet subset(std::span<const Index> rows) const;
  /// Same records and metadata, replaced vectors (must be N x D').
  EmbeddingSet with_vectors(Matrix vectors) const;
  /// Distinct user ids in first-appearance order.
  std::vector<std::string> distinct_users() const;

 private:
  Matrix vectors_;
  std::vector<std::string> user_ids_;
  std::vector<std::optional<int>> labels_;
  int num_classes_ = 0;
};

/// Tolerance on ||W^T W - I||_F and on | |det W| - 1 | for a valid rotation.
inline constexpr double kRotationTolerance = 1e-6;

double orthogonality_error(const Matrix& w);

/// Nearest orthogonal matrix in Frobenius norm (polar factor U V^T).
Matrix polar_projection(const Matrix& m);

/// D x D orthogonal matrix W. Embeddings are row vectors and map as e * W.
class Rotation {
 public:
  /// Validates orthogonality and the determinant; throws ValidationError.
  static Rotation from_matrix(Matrix m);
  /// Validates, re-projecting through the polar factor first when the drift
  /// exceeds kRotationTolerance.
  static Rotation nearest(const Matrix& m);
  static Rotation identity(Index dim);

  Index dim() const { return matrix_.rows(); }
  const Matrix& matrix() const { return matrix_; }
  double det() const;
  double orthogonality_error() const { return embalign::orthogonality_error(matrix_); }

  Rotation transpose() const;
  /// this * other: applying the result equals applying this, then other.
  Rotation then(const Rotation& other) const;

 private:
  explicit Rotation(Matrix m) : matrix_(std::move(m)) {}
  Matrix matrix_;
};

/// Mean vector of each class over the labeled records, ordered by label.
std::map<int, RowVector> class_centroids(const EmbeddingSet& set);

/// Row i of the result is e_i * W; ids, labels and order are preserved.
EmbeddingSet apply_alignment(const EmbeddingSet& set, const Rotation& w);

/// Haar-distributed rotation with det = +1.
Rotation random_rotation(Index dim, RngSeed seed);

/// Samples k distinct indices from [0, n) in random order.
std::vector<Index> sample_without_replacement(Index n, Index k, std::mt19937_64& rng);

/// Matrix of standard normal draws.
Matrix standard_normal(Index rows, Index cols, std::mt19937_64& rng);

/// Value of EMBALIGN_THREADS, clamped to [1, hardware], default 1.
int thread_count();

}  // namespace embalign

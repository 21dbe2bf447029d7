// include/embalign/gmm.hpp

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

#include "embalign/core.hpp"

#include <string>
#include <vector>

namespace embalign {

struct GmmComponent {
  double prior = 1.0;
  RowVector mean;
  RowVector var;  ///< diagonal covariance
};

/// Diagonal-covariance Gaussian mixture.
struct GmmModel {
  Index dim = 0;
  std::vector<GmmComponent> components;
  double variance_floor = 0.0;
  /// Mean training log-likelihood per EM iteration (empty for hand-built models).
  std::vector<double> train_trace;
  /// One entry per empty-component re-seed.
  std::vector<std::string> log;

  Index size() const { return static_cast<Index>(components.size()); }
  /// Throws ValidationError unless priors sum to 1, variances are positive and
  /// shapes agree.
  void validate() const;
};

struct GmmFitOptions {
  int max_iters = 200;
  /// Stop when the mean log-likelihood gain drops below tol * (1 + |ll|).
  double tol = 1e-10;
  int kmeans_iters = 10;
  double floor_ratio = 1e-6;  ///< variance floor relative to mean data variance
};

/// EM from a k-means++ start. Requires N >= 10 K.
GmmModel fit_gmm(const Matrix& data, int k, RngSeed seed, const GmmFitOptions& options = {});
GmmModel fit_gmm(const EmbeddingSet& set, int k, RngSeed seed, const GmmFitOptions& options = {});

/// log N(y; mu, diag(var)), with D log 2 pi in the normalizer.
double log_gaussian(const RowVector& y, const GmmComponent& c);
/// Same for y = e W.
double log_gaussian(const RowVector& e, const Matrix& w, const GmmComponent& c);

/// log sum_i p_i N(y; mu_i, var_i), max-shifted. If grad is given it receives
/// d/dy of the result.
double gmm_loglik(const RowVector& y, const GmmModel& gmm, RowVector* grad = nullptr);
double gmm_loglik(const RowVector& e, const Matrix& w, const GmmModel& gmm);

/// Mean of gmm_loglik(e_n W) over the rows of e. If grad_w is given it
/// receives the gradient with respect to W.
double score_set(const Matrix& e, const Matrix& w, const GmmModel& gmm, Matrix* grad_w = nullptr);
double score_set(const EmbeddingSet& e, const Rotation& w, const GmmModel& gmm);

/// Combines the two directional scores
///   s_fwd = score_set(E_src, W, gmm_dst),  s_bwd = score_set(E_dst, W^T, gmm_src)
/// by max (default) or min.
struct SymmetricScore {
  double forward = 0.0;
  double backward = 0.0;
  double value = 0.0;
  bool forward_selected = true;
};

SymmetricScore symmetric_score(const Matrix& e_src, const Matrix& w, const Matrix& e_dst,
                               const GmmModel& gmm_src, const GmmModel& gmm_dst,
                               bool use_min = false);
double symmetric_score(const EmbeddingSet& e_src, const Rotation& w, const EmbeddingSet& e_dst,
                       const GmmModel& gmm_src, const GmmModel& gmm_dst, bool use_min = false);

/// Draws n points; row-major, deterministic under rng.
Matrix sample_gmm(const GmmModel& gmm, Index n, std::mt19937_64& rng);

}  // namespace embalign

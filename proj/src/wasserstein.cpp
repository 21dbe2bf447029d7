// src/wasserstein.cpp

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

#include "embalign/alignment.hpp"
#include "embalign/transport.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <sstream>

namespace embalign {

std::string to_string(OtMode mode) {
  switch (mode) {
    case OtMode::kAuto: return "auto";
    case OtMode::kExact: return "exact";
    case OtMode::kSinkhorn: return "sinkhorn";
  }
  return "auto";
}

std::string to_string(WassersteinInit init) {
  switch (init) {
    case WassersteinInit::kAuto: return "auto";
    case WassersteinInit::kIdentity: return "identity";
    case WassersteinInit::kMoments: return "moments";
    case WassersteinInit::kCluster: return "cluster";
  }
  return "auto";
}

OtMode parse_ot_mode(const std::string& name) {
  if (name == "auto") return OtMode::kAuto;
  if (name == "exact") return OtMode::kExact;
  if (name == "sinkhorn") return OtMode::kSinkhorn;
  throw ValidationError("unknown OT mode '" + name + "' (expected auto, exact or sinkhorn)");
}

WassersteinInit parse_wasserstein_init(const std::string& name) {
  if (name == "auto") return WassersteinInit::kAuto;
  if (name == "identity") return WassersteinInit::kIdentity;
  if (name == "moments") return WassersteinInit::kMoments;
  if (name == "cluster") return WassersteinInit::kCluster;
  throw ValidationError("unknown init '" + name +
                        "' (expected auto, identity, moments or cluster)");
}

int WassersteinConfig::batch_size(int stage) const {
  return static_cast<int>(std::llround(initial_batch * std::pow(batch_growth_factor, stage)));
}

void WassersteinConfig::validate(Index n_source, Index n_dest) const {
  if (initial_batch < 1) throw ValidationError("wasserstein: initial_batch must be positive");
  if (!(batch_growth_factor > 1.0) || !std::isfinite(batch_growth_factor))
    throw ValidationError("wasserstein: batch_growth_factor must be > 1");
  if (epochs_per_stage < 1) throw ValidationError("wasserstein: epochs_per_stage must be positive");
  if (stages < 1) throw ValidationError("wasserstein: stages must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("wasserstein: learning_rate must be positive");
  if (exact_max_batch < 1) throw ValidationError("wasserstein: exact_max_batch must be positive");
  if (!(sinkhorn_reg_ratio > 0.0)) throw ValidationError("wasserstein: sinkhorn_reg_ratio must be positive");
  if (sinkhorn_max_iters < 1) throw ValidationError("wasserstein: sinkhorn_max_iters must be positive");
  if (!(sinkhorn_tol > 0.0)) throw ValidationError("wasserstein: sinkhorn_tol must be positive");
  if (eval_sample < 1) throw ValidationError("wasserstein: eval_sample must be positive");
  const Index n = std::min(n_source, n_dest);
  const int last = batch_size(stages - 1);
  if (last > n)
    throw ValidationError("wasserstein: final batch " + std::to_string(initial_batch) + " x " +
                          std::to_string(batch_growth_factor) + "^" + std::to_string(stages - 1) +
                          " = " + std::to_string(last) + " exceeds the smaller set size " +
                          std::to_string(n));
  if (ot_mode == OtMode::kExact && last > 4096)
    throw ValidationError("wasserstein: exact matching supports batches up to 4096");
}

Matrix moment_init(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) throw ValidationError("moment_init: dimension mismatch");
  auto axes = [](const Matrix& e) {
    const Matrix m = e.transpose() * e / static_cast<double>(e.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
    if (eig.info() != Eigen::Success) throw NumericError("moment_init: eigensolver failed");
    // Descending eigenvalue order.
    Matrix v = eig.eigenvectors().rowwise().reverse();
    const Matrix p = e * v;
    for (Index j = 0; j < v.cols(); ++j)
      if (p.col(j).array().cube().mean() < 0.0) v.col(j) *= -1.0;
    return v;
  };
  return axes(x) * axes(y).transpose();
}

double transport_cost(const Matrix& x, const Matrix& y, const Matrix& w, Index sample,
                      RngSeed seed) {
  const Index n = std::min({sample, x.rows(), y.rows()});
  auto rng = seed.engine();
  const auto xi = sample_without_replacement(x.rows(), n, rng);
  const auto yi = sample_without_replacement(y.rows(), n, rng);
  Matrix xb(n, x.cols());
  Matrix yb(n, y.cols());
  for (Index i = 0; i < n; ++i) {
    xb.row(i) = x.row(xi[static_cast<std::size_t>(i)]);
    yb.row(i) = y.row(yi[static_cast<std::size_t>(i)]);
  }
  const Matrix cost = squared_euclidean_cost(xb * w, yb);
  return assignment_cost(cost, exact_assignment(cost)) / static_cast<double>(n);
}

namespace {

bool has_shared_classes(const EmbeddingSet& x, const EmbeddingSet& y) {
  if (!x.fully_labeled() || !y.fully_labeled()) return false;
  const auto cx = class_centroids(x);
  const auto cy = class_centroids(y);
  int shared = 0;
  for (const auto& [label, _] : cx) shared += static_cast<int>(cy.count(label));
  return shared >= 2 && static_cast<std::size_t>(shared) == cx.size();
}

}  // namespace

AlignmentResult wasserstein_procrustes(const EmbeddingSet& x, const EmbeddingSet& y,
                                       const WassersteinConfig& config,
                                       const std::optional<Rotation>& init) {
  if (x.dim() != y.dim())
    throw ValidationError("wasserstein: dimensions differ (" + std::to_string(x.dim()) + " vs " +
                          std::to_string(y.dim()) + ")");
  config.validate(x.size(), y.size());
  if (init && init->dim() != x.dim()) throw ValidationError("wasserstein: init dimension mismatch");

  const Matrix& xv = x.vectors();
  const Matrix& yv = y.vectors();
  const Index d = x.dim();
  const RngSeed eval_seed = config.seed.derive("wasserstein/eval");
  auto cost_of = [&](const Matrix& w) {
    return transport_cost(xv, yv, w, config.eval_sample, eval_seed);
  };

  AlignmentResult result;
  result.method = "wasserstein";

  Matrix w;
  if (init) {
    w = init->matrix();
    result.init = "given";
  } else {
    std::vector<std::pair<std::string, Matrix>> candidates;
    const auto mode = config.init;
    if (mode == WassersteinInit::kIdentity || mode == WassersteinInit::kAuto)
      candidates.emplace_back("identity", Matrix::Identity(d, d));
    if (mode == WassersteinInit::kMoments || mode == WassersteinInit::kAuto)
      candidates.emplace_back("moments", polar_projection(moment_init(xv, yv)));
    if (mode == WassersteinInit::kCluster) {
      if (!has_shared_classes(x, y))
        throw ValidationError("wasserstein: cluster init needs class labels on both sets");
      candidates.emplace_back("cluster", cluster_center_procrustes(x, y).rotation.matrix());
    }
    if (mode == WassersteinInit::kAuto && has_shared_classes(x, y))
      candidates.emplace_back("cluster", cluster_center_procrustes(x, y).rotation.matrix());

    if (candidates.size() == 1) {
      result.init = candidates.front().first;
      w = candidates.front().second;
    } else {
      double best = std::numeric_limits<double>::infinity();
      std::ostringstream note;
      note << "init candidates (probe transport cost):";
      for (const auto& [name, cand] : candidates) {
        const double c = cost_of(cand);
        note << ' ' << name << '=' << c;
        if (c < best) {
          best = c;
          result.init = name;
          w = cand;
        }
      }
      result.warnings.push_back(note.str());
    }
  }
  result.loss_trace.push_back(cost_of(w));

  auto rng = config.seed.derive("wasserstein/batches").engine();
  int sinkhorn_unconverged = 0;
  for (int stage = 0; stage < config.stages; ++stage) {
    const Index b = config.batch_size(stage);
    const bool exact = config.ot_mode == OtMode::kExact ||
                       (config.ot_mode == OtMode::kAuto && b <= config.exact_max_batch);
    Matrix xb(b, d);
    Matrix yb(b, d);
    Matrix ym(b, d);
    for (int epoch = 0; epoch < config.epochs_per_stage; ++epoch) {
      const auto xi = sample_without_replacement(x.size(), b, rng);
      const auto yi = sample_without_replacement(y.size(), b, rng);
      for (Index i = 0; i < b; ++i) {
        xb.row(i) = xv.row(xi[static_cast<std::size_t>(i)]);
        yb.row(i) = yv.row(yi[static_cast<std::size_t>(i)]);
      }
      const Matrix xw = xb * w;
      const Matrix cost = squared_euclidean_cost(xw, yb);
      std::vector<Index> match;
      if (exact) {
        match = exact_assignment(cost);
      } else {
        const auto plan = sinkhorn(cost, config.sinkhorn_reg_ratio * median_entry(cost),
                                   config.sinkhorn_max_iters, config.sinkhorn_tol);
        if (!plan.converged) ++sinkhorn_unconverged;
        match = round_coupling(plan.coupling);
      }
      for (Index i = 0; i < b; ++i) ym.row(i) = yb.row(match[static_cast<std::size_t>(i)]);
      const Matrix grad = (2.0 / static_cast<double>(b)) * xb.transpose() * (xw - ym);
      w = polar_projection(w - config.learning_rate * grad);
    }
    result.loss_trace.push_back(cost_of(w));
  }
  if (sinkhorn_unconverged > 0)
    result.warnings.push_back("sinkhorn stopped at max_iters in " +
                              std::to_string(sinkhorn_unconverged) + " batches");
  result.rotation = Rotation::nearest(w);
  return result;
}

}  // namespace embalign

// src/finetune.cpp

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

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>

namespace embalign {

void FinetuneConfig::validate(Index n_source, Index n_dest) const {
  if (iterations < 1) throw ValidationError("finetune: iterations must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("finetune: learning rate must be positive");
  if (gmm_components < 1) throw ValidationError("finetune: need K >= 1 GMM components");
  const Index cap = std::min(n_source, n_dest) / 10;
  if (gmm_components > cap)
    throw ValidationError("finetune: K=" + std::to_string(gmm_components) +
                          " exceeds min(N_source, N_dest)/10 = " + std::to_string(cap));
  if (orth_batch < 1) throw ValidationError("finetune: orthogonality batch must be positive");
  if (max_halvings < 0) throw ValidationError("finetune: max_halvings must be >= 0");
  if (gmm_max_iters < 1) throw ValidationError("finetune: gmm_max_iters must be positive");
}

FinetuneObjective::FinetuneObjective(Matrix source, Matrix dest, GmmModel gmm_source,
                                     GmmModel gmm_dest, Matrix orth_batch, bool symmetric_min)
    : source_(std::move(source)),
      dest_(std::move(dest)),
      gmm_source_(std::move(gmm_source)),
      gmm_dest_(std::move(gmm_dest)),
      orth_batch_(std::move(orth_batch)),
      symmetric_min_(symmetric_min) {
  if (source_.cols() != dest_.cols() || orth_batch_.cols() != source_.cols() ||
      gmm_source_.dim != source_.cols() || gmm_dest_.dim != dest_.cols())
    throw ValidationError("finetune objective: dimension mismatch");
}

double FinetuneObjective::det_loss(const Matrix& w, Matrix* grad) {
  Eigen::PartialPivLU<Matrix> lu(w);
  const double det = lu.determinant();
  if (!(det > 0.0))
    throw NumericError("finetune: det(W) = " + std::to_string(det) +
                       " <= 0, log det undefined");
  const double logdet = std::log(det);
  if (grad != nullptr) {
    const double sign = logdet > 0.0 ? 1.0 : (logdet < 0.0 ? -1.0 : 0.0);
    *grad = sign * lu.inverse().transpose();
  }
  return std::abs(logdet);
}

double FinetuneObjective::orthogonality_loss(const Matrix& w, const Matrix& u, Matrix* grad) {
  const double b = static_cast<double>(u.rows());
  const Matrix r = u - u * (w.transpose() * w);
  if (grad != nullptr) {
    const Matrix m = u.transpose() * r;
    *grad = (-2.0 / b) * (w * m.transpose() + w * m);
  }
  return r.squaredNorm() / b;
}

double FinetuneObjective::score(const Matrix& w, Matrix* grad) const {
  Matrix g_fwd;
  Matrix g_bwd;
  const double fwd = score_set(source_, w, gmm_dest_, grad ? &g_fwd : nullptr);
  const double bwd = score_set(dest_, w.transpose(), gmm_source_, grad ? &g_bwd : nullptr);
  const bool take_fwd = symmetric_min_ ? fwd <= bwd : fwd >= bwd;
  if (grad != nullptr) *grad = take_fwd ? g_fwd : Matrix(g_bwd.transpose());
  return take_fwd ? fwd : bwd;
}

FinetuneObjective::Terms FinetuneObjective::evaluate(const Matrix& w, Matrix* grad) const {
  Terms t;
  Matrix g_det;
  Matrix g_orth;
  Matrix g_score;
  t.det = det_loss(w, grad ? &g_det : nullptr);
  t.orth = orthogonality_loss(w, orth_batch_, grad ? &g_orth : nullptr);
  t.score = score(w, grad ? &g_score : nullptr);
  t.total = t.det + t.orth - t.score;
  if (grad != nullptr) *grad = g_det + g_orth - g_score;
  return t;
}

AlignmentResult finetune_rotation(const Rotation& w0, const EmbeddingSet& source,
                                  const EmbeddingSet& dest, const FinetuneConfig& config) {
  if (source.dim() != dest.dim() || source.dim() != w0.dim())
    throw ValidationError("finetune: dimension mismatch (source " + std::to_string(source.dim()) +
                          ", target " + std::to_string(dest.dim()) + ", W " +
                          std::to_string(w0.dim()) + ")");
  config.validate(source.size(), dest.size());
  if (!(w0.det() > 0.0))
    throw NumericError("finetune: initial W has det <= 0; start from a proper rotation");

  GmmFitOptions gmm_options;
  gmm_options.max_iters = config.gmm_max_iters;
  GmmModel gmm_source =
      fit_gmm(source, config.gmm_components, config.seed.derive("finetune/gmm-source"), gmm_options);
  GmmModel gmm_dest =
      fit_gmm(dest, config.gmm_components, config.seed.derive("finetune/gmm-target"), gmm_options);

  auto rng = config.seed.derive("finetune/orth-batch").engine();
  const Index b = std::min<Index>(config.orth_batch, source.size());
  const auto rows = sample_without_replacement(source.size(), b, rng);
  const Matrix u = source.subset(rows).vectors();

  AlignmentResult result;
  result.method = "finetune";
  for (const auto& line : gmm_source.log) result.warnings.push_back("source GMM: " + line);
  for (const auto& line : gmm_dest.log) result.warnings.push_back("target GMM: " + line);

  const FinetuneObjective objective(source.vectors(), dest.vectors(), std::move(gmm_source),
                                    std::move(gmm_dest), u, config.symmetric_min);
  Matrix w = w0.matrix();
  Matrix grad;
  double loss = objective.evaluate(w, &grad).total;
  result.loss_trace.push_back(loss);

  for (int it = 0; it < config.iterations; ++it) {
    double step = config.learning_rate;
    bool accepted = false;
    for (int h = 0; h <= config.max_halvings; ++h, step *= 0.5) {
      const Matrix trial = w - step * grad;
      double trial_loss = std::numeric_limits<double>::infinity();
      try {
        trial_loss = objective.evaluate(trial).total;
      } catch (const NumericError&) {
        // det <= 0 at the trial point: treat as an infinite loss and back off.
      }
      if (trial_loss < loss) {
        w = trial;
        loss = objective.evaluate(w, &grad).total;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    result.loss_trace.push_back(loss);
  }

  result.rotation = Rotation::nearest(polar_projection(w));
  if (!(result.rotation.det() > 0.0))
    throw NumericError("finetune: projected W has det <= 0");
  return result;
}

}  // namespace embalign

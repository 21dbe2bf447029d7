// include/embalign/alignment.hpp

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
#include "embalign/gmm.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace embalign {

// Direction convention: every routine returns W with X W ~ Y, i.e. W maps the
// source space (first argument, the attacker's encoder) into the target space.

struct AlignmentResult {
  std::string method;
  Rotation rotation = Rotation::identity(2);
  bool underdetermined = false;
  bool oracle = false;
  /// Starting point of iterative methods; empty for closed-form ones.
  std::string init;
  /// Transport cost at the start and after each stage (wasserstein), or loss
  /// at the start and after each accepted step (finetune).
  std::vector<double> loss_trace;
  std::vector<std::string> warnings;
};

struct ProcrustesOptions {
  /// Flip the last singular direction when U V^T is a reflection.
  bool proper_rotation = false;
};

/// argmin over orthogonal W of ||X W - Y||_F, W = U V^T with U S V^T = X^T Y.
AlignmentResult orthogonal_procrustes(const Matrix& x, const Matrix& y,
                                      const ProcrustesOptions& options = {});
AlignmentResult orthogonal_procrustes(const EmbeddingSet& x, const EmbeddingSet& y,
                                      const ProcrustesOptions& options = {});

/// Procrustes on matched class centroids. An empty correspondence means the
/// identity map over the labels of x.
AlignmentResult cluster_center_procrustes(const EmbeddingSet& x, const EmbeddingSet& y,
                                          const std::map<int, int>& correspondence = {},
                                          const ProcrustesOptions& options = {});

/// Procrustes on a row-paired attack/target set; tagged oracle.
AlignmentResult oracle_procrustes(const EmbeddingSet& e_attack,
                                  const EmbeddingSet& e_paired_target,
                                  const ProcrustesOptions& options = {});

// ---------------------------------------------------------------------------
// Fine-tuning on the GMM losses.

struct FinetuneConfig {
  int iterations = 100;
  double learning_rate = 1e-3;
  int gmm_components = 10;
  RngSeed seed{0};
  /// Rows of the source set used as U in the orthogonality term.
  int orth_batch = 256;
  bool symmetric_min = false;
  int max_halvings = 10;
  int gmm_max_iters = 200;

  void validate(Index n_source, Index n_dest) const;
};

/// L(W) = |log det W| + (1/b) ||U - U W^T W||_F^2 - S(W) where S is the
/// symmetric GMM score of the source/destination sets.
class FinetuneObjective {
 public:
  struct Terms {
    double det = 0.0;
    double orth = 0.0;
    double score = 0.0;  ///< S(W); enters the loss with a minus sign
    double total = 0.0;
  };

  FinetuneObjective(Matrix source, Matrix dest, GmmModel gmm_source, GmmModel gmm_dest,
                    Matrix orth_batch, bool symmetric_min);

  /// Throws NumericError when det W <= 0.
  Terms evaluate(const Matrix& w, Matrix* grad = nullptr) const;

  static double det_loss(const Matrix& w, Matrix* grad = nullptr);
  static double orthogonality_loss(const Matrix& w, const Matrix& u, Matrix* grad = nullptr);
  double score(const Matrix& w, Matrix* grad = nullptr) const;

  const GmmModel& gmm_source() const { return gmm_source_; }
  const GmmModel& gmm_dest() const { return gmm_dest_; }

 private:
  Matrix source_;
  Matrix dest_;
  GmmModel gmm_source_;
  GmmModel gmm_dest_;
  Matrix orth_batch_;
  bool symmetric_min_;
};

/// Gradient descent with step halving from w0; the result is projected back
/// onto the orthogonal group. loss_trace holds the loss at w0 and after each
/// accepted step.
AlignmentResult finetune_rotation(const Rotation& w0, const EmbeddingSet& source,
                                  const EmbeddingSet& dest, const FinetuneConfig& config);

// ---------------------------------------------------------------------------
// Wasserstein Procrustes.

enum class OtMode { kAuto, kExact, kSinkhorn };
enum class WassersteinInit { kAuto, kIdentity, kMoments, kCluster };

std::string to_string(OtMode mode);
std::string to_string(WassersteinInit init);
OtMode parse_ot_mode(const std::string& name);
WassersteinInit parse_wasserstein_init(const std::string& name);

struct WassersteinConfig {
  int initial_batch = 128;
  double batch_growth_factor = 2.0;
  int epochs_per_stage = 50;
  int stages = 5;
  double learning_rate = 5e-3;
  RngSeed seed{0};
  /// kAuto: exact assignment up to exact_max_batch, Sinkhorn above.
  OtMode ot_mode = OtMode::kAuto;
  int exact_max_batch = 4096;
  /// Sinkhorn regularization relative to the median batch cost.
  double sinkhorn_reg_ratio = 0.05;
  int sinkhorn_max_iters = 1000;
  double sinkhorn_tol = 1e-6;
  WassersteinInit init = WassersteinInit::kAuto;
  /// Rows drawn once for the stage-end transport cost.
  int eval_sample = 512;

  int batch_size(int stage) const;
  void validate(Index n_source, Index n_dest) const;
};

/// Principal axes of the uncentered second moment of each set, sign-fixed by
/// third-moment skewness and paired by rank: W = V_x V_y^T.
Matrix moment_init(const Matrix& x, const Matrix& y);

/// Mean exact-assignment cost between a subsample of x W and of y.
double transport_cost(const Matrix& x, const Matrix& y, const Matrix& w, Index sample,
                      RngSeed seed);

AlignmentResult wasserstein_procrustes(const EmbeddingSet& x, const EmbeddingSet& y,
                                       const WassersteinConfig& config,
                                       const std::optional<Rotation>& init = std::nullopt);

}  // namespace embalign

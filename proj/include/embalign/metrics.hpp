// include/embalign/metrics.hpp

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

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace embalign {

/// a.b / (|a| |b|), clamped to [-1, 1]. Throws on a zero vector.
double cosine(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b);

/// Row-wise cosine between two equally shaped matrices.
Vector row_cosines(const Matrix& a, const Matrix& b);

struct TrialScores {
  std::vector<double> genuine;
  std::vector<double> impostor;
};

enum class Pooling { kPerRecord, kMeanPerUser };

std::string to_string(Pooling pooling);
Pooling parse_pooling(const std::string& name);

/// Cross trials: every probe record against every enrollment entry (a record,
/// or a user mean under kMeanPerUser). Genuine when the user ids agree.
/// Probe records whose user is not enrolled are skipped.
TrialScores build_trials(const EmbeddingSet& enroll, const EmbeddingSet& probe,
                         Pooling pooling = Pooling::kPerRecord);

/// Trials within one set. Per-record: each unordered pair i < j once, so
/// self-comparisons never occur. Mean-per-user: each record against every
/// user mean.
TrialScores build_self_trials(const EmbeddingSet& set, Pooling pooling = Pooling::kPerRecord);

/// Accept when score >= threshold.
struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

/// Sweeps every distinct score as a threshold and picks the one minimizing
/// |FAR - FRR|; ties go to the lower threshold. eer = (FAR + FRR) / 2 there.
EerResult compute_eer(const TrialScores& trials);

struct FarThreshold {
  double threshold = 0.0;
  /// False when fewer than one impostor score fits under x percent; the
  /// threshold is then just above the maximum score.
  bool resolvable = true;
  /// Fraction of impostor scores >= threshold.
  double far = 0.0;
};

/// Smallest threshold whose false acceptance rate on the impostor scores is at
/// most x percent.
FarThreshold far_threshold(std::vector<double> impostor, double percent);

/// Fraction of rows i with cosine(spoof_i, target_i) >= tau.
double compute_sfar(const EmbeddingSet& target, const EmbeddingSet& spoof, double tau);

/// Nearest-centroid-by-cosine class.
int nearest_centroid(const Eigen::Ref<const RowVector>& v,
                     const std::map<int, RowVector>& centroids);

/// Fraction of rows where the nearest centroid of spoof_i equals that of
/// original_i. Every record of `original` must carry a label covered by the
/// centroid map.
double classification_accuracy(const EmbeddingSet& original, const EmbeddingSet& spoof,
                               const std::map<int, RowVector>& centroids);

struct EvalConfig {
  Pooling pooling = Pooling::kPerRecord;
  std::vector<double> far_levels{1.0, 0.1};
};

struct SfarEntry {
  std::string level;  ///< "EER", "1%", "0.1%"
  std::optional<double> threshold;
  std::optional<double> sfar;
};

struct AttackReport {
  std::string method;
  bool oracle = false;
  Index dim = 0;
  Index n_target = 0;
  Index n_spoof = 0;
  std::optional<double> accuracy;
  /// Equal error rate of the spoofed embeddings scored against the target
  /// enrollment (cross trials).
  std::optional<double> eer;
  /// Equal error rate of the attacked system on its own enrollment set.
  double target_eer = 0.0;
  /// Operating threshold of the attacked system at its EER.
  double eer_threshold = 0.0;
  std::vector<SfarEntry> sfar;
  std::optional<double> mean_cosine;
  bool underdetermined = false;
  double det = 1.0;
  double orthogonality_error = 0.0;
  std::vector<std::string> warnings;

  std::optional<double> sfar_at(const std::string& level) const;
};

/// Scores the attack of spoof_i = attack_i W on target_i. The thresholds come
/// from the target set's own trials. Without a paired attack set only the
/// target-system fields are filled.
AttackReport evaluate_attack(const EmbeddingSet& target, const Rotation& w,
                             const std::optional<EmbeddingSet>& attack_paired,
                             const EvalConfig& config = {}, const std::string& method = "");

}  // namespace embalign

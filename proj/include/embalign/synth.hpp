// include/embalign/synth.hpp

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

#include <optional>
#include <string>
#include <vector>

namespace embalign {

/// Two simulated encoders observing the same latent samples.
///
///   z        = c_class(u) + user_scale * a * n_u + a * n_r
///   e_attack = z
///   e_target = z Q + nonlinearity * residual_gain * s * g(z) + noise_scale * n
///
/// with a a per-dimension spread profile whose extreme standard deviations differ by
/// `anisotropy` (RMS 1), class centers ~ N(0, class_scale^2 I), users assigned
/// to classes round robin, g(z) = ((z A) * (z B)) C a random rank-m quadratic
/// field, and s the RMS ratio |z| / |g(z)| over the sample.
struct WorldConfig {
  RngSeed seed{0};
  int users = 240;
  int records_per_user = 20;
  int dim = 32;
  /// Without classes every user gets its own center ~ N(0, class_scale^2 I).
  std::optional<int> classes = 10;
  double class_scale = 4.0;
  double user_scale = 1.0;
  double noise_scale = 0.3;
  double nonlinearity = 0.2;
  int residual_rank = 4;
  double residual_gain = 3.5;
  double anisotropy = 8.0;

  void validate() const;
};

struct WorldOutput {
  EmbeddingSet e_attack;
  EmbeddingSet e_target;
  Rotation hidden_rotation;
  /// e_attack row i and e_target row pairing[i] come from the same sample.
  std::vector<Index> pairing;
  /// RMS ratio s used to scale the residual field.
  double residual_scale = 0.0;
};

WorldOutput generate_world(const WorldConfig& config);

/// Per-dimension standard deviations of the latent spread, geometrically
/// spaced with ratio `anisotropy` between the first and last dimension and
/// unit RMS.
RowVector spread_profile(int dim, double anisotropy);

/// Randomly partitions users into parts of sizes round(f_i * n), remainders
/// going to the largest fractional parts. Users are listed in input order
/// within each part.
std::vector<std::vector<std::string>> split_disjoint(const std::vector<std::string>& users,
                                                     const std::vector<double>& fractions,
                                                     RngSeed seed);

/// Row indices of records whose user is in `users`, in set order.
std::vector<Index> rows_of_users(const EmbeddingSet& set, const std::vector<std::string>& users);

}  // namespace embalign

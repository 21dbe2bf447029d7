// tests/helpers.hpp

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

// Shared fixtures for the unit tests.

#pragma once

#include "embalign/core.hpp"

#include <random>
#include <string>
#include <vector>

namespace embalign::testing {

inline std::mt19937_64 rng_for(std::uint64_t seed) { return RngSeed{seed}.engine(); }

inline std::string user_name(Index u) {
  std::string s = std::to_string(u);
  return "u" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

/// `users` users with `per_user` records each, rows grouped by user.
inline EmbeddingSet make_set(const Matrix& v, Index per_user, std::optional<int> classes = {}) {
  std::vector<std::string> ids;
  std::vector<std::optional<int>> labels;
  for (Index i = 0; i < v.rows(); ++i) {
    const Index u = i / per_user;
    ids.push_back(user_name(u));
    labels.push_back(classes ? std::optional<int>(static_cast<int>(u % *classes)) : std::nullopt);
  }
  return EmbeddingSet(v, ids, labels, classes);
}

inline EmbeddingSet random_set(Index users, Index per_user, Index dim, std::uint64_t seed,
                               std::optional<int> classes = {}) {
  auto rng = rng_for(seed);
  return make_set(standard_normal(users * per_user, dim, rng), per_user, classes);
}

/// Largest |a - b| / max(|b|, floor) over entries.
inline double max_relative_error(const Matrix& a, const Matrix& b, double floor = 1e-6) {
  double worst = 0.0;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / std::max(std::abs(b(i, j)), floor));
  return worst;
}

}  // namespace embalign::testing

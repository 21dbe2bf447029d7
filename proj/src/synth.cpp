// src/synth.cpp

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

#include "embalign/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace embalign {

void WorldConfig::validate() const {
  if (users < 2) throw ValidationError("users must be >= 2, got " + std::to_string(users));
  if (records_per_user < 2)
    throw ValidationError("records_per_user must be >= 2, got " + std::to_string(records_per_user));
  if (dim < 2) throw ValidationError("dim must be >= 2, got " + std::to_string(dim));
  if (classes && *classes < 1) throw ValidationError("classes must be >= 1");
  for (double s : {class_scale, user_scale, noise_scale, residual_gain})
    if (!std::isfinite(s) || s < 0.0) throw ValidationError("scales must be finite and >= 0");
  if (!(nonlinearity >= 0.0 && nonlinearity <= 1.0))
    throw ValidationError("nonlinearity must be in [0, 1]");
  if (residual_rank < 1) throw ValidationError("residual_rank must be >= 1");
  if (!std::isfinite(anisotropy) || anisotropy < 1.0)
    throw ValidationError("anisotropy must be >= 1");
}

RowVector spread_profile(int dim, double anisotropy) {
  const double half = 0.5 * std::log(anisotropy);
  RowVector a(dim);
  for (int j = 0; j < dim; ++j) {
    const double t = dim == 1 ? 0.0 : static_cast<double>(j) / (dim - 1);
    a[j] = std::exp(half - 2.0 * half * t);
  }
  return a / std::sqrt(a.array().square().mean());
}

WorldOutput generate_world(const WorldConfig& config) {
  config.validate();
  const Index d = config.dim;
  const Index n_users = config.users;
  const Index n = n_users * config.records_per_user;
  const RowVector a = spread_profile(config.dim, config.anisotropy);

  auto rng_centers = config.seed.derive("synth/centers").engine();
  Matrix user_centers(n_users, d);
  std::vector<std::optional<int>> user_class(static_cast<std::size_t>(n_users));
  if (config.classes) {
    const Matrix class_centers = config.class_scale * standard_normal(*config.classes, d, rng_centers);
    const Matrix offsets = standard_normal(n_users, d, rng_centers);
    for (Index u = 0; u < n_users; ++u) {
      const int c = static_cast<int>(u % *config.classes);
      user_class[static_cast<std::size_t>(u)] = c;
      user_centers.row(u) =
          class_centers.row(c) + config.user_scale * offsets.row(u).cwiseProduct(a);
    }
  } else {
    user_centers = config.class_scale * standard_normal(n_users, d, rng_centers);
  }

  auto rng_records = config.seed.derive("synth/records").engine();
  const Matrix spread = standard_normal(n, d, rng_records);
  Matrix z(n, d);
  std::vector<std::string> ids;
  std::vector<std::optional<int>> labels;
  ids.reserve(static_cast<std::size_t>(n));
  labels.reserve(static_cast<std::size_t>(n));
  const int width = static_cast<int>(std::to_string(n_users - 1).size());
  for (Index u = 0; u < n_users; ++u) {
    std::string id = std::to_string(u);
    id = "u" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
    for (int r = 0; r < config.records_per_user; ++r) {
      const Index i = u * config.records_per_user + r;
      z.row(i) = user_centers.row(u) + spread.row(i).cwiseProduct(a);
      ids.push_back(id);
      labels.push_back(user_class[static_cast<std::size_t>(u)]);
    }
  }

  const Rotation q = random_rotation(d, config.seed.derive("synth/rotation"));

  auto rng_field = config.seed.derive("synth/residual").engine();
  const int m = config.residual_rank;
  const Matrix fa = standard_normal(d, m, rng_field);
  const Matrix fb = standard_normal(d, m, rng_field);
  const Matrix fc = standard_normal(m, d, rng_field);
  const Matrix g = ((z * fa).array() * (z * fb).array()).matrix() * fc;
  const double g_power = g.rowwise().squaredNorm().mean();
  const double scale = g_power > 0.0 ? std::sqrt(z.rowwise().squaredNorm().mean() / g_power) : 0.0;

  auto rng_noise = config.seed.derive("synth/noise").engine();
  const Matrix noise = standard_normal(n, d, rng_noise);
  Matrix t = z * q.matrix();
  if (config.nonlinearity > 0.0) t += (config.nonlinearity * config.residual_gain * scale) * g;
  if (config.noise_scale > 0.0) t += config.noise_scale * noise;

  const std::optional<int> declared = config.classes;
  std::vector<Index> pairing(static_cast<std::size_t>(n));
  std::iota(pairing.begin(), pairing.end(), Index{0});
  return WorldOutput{EmbeddingSet(std::move(z), ids, labels, declared),
                     EmbeddingSet(std::move(t), ids, labels, declared), q, std::move(pairing),
                     scale};
}

std::vector<std::vector<std::string>> split_disjoint(const std::vector<std::string>& users,
                                                     const std::vector<double>& fractions,
                                                     RngSeed seed) {
  if (fractions.empty()) throw ValidationError("split: no fractions given");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ValidationError("split: fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("split: fractions must sum to 1");
  {
    std::unordered_set<std::string> seen(users.begin(), users.end());
    if (seen.size() != users.size()) throw ValidationError("split: duplicate user ids");
  }
  const std::size_t n = users.size();
  const std::size_t parts = fractions.size();
  if (n < parts)
    throw ValidationError("split: " + std::to_string(n) + " users cannot fill " +
                          std::to_string(parts) + " parts");

  std::vector<std::size_t> sizes(parts);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const double exact = fractions[p] * static_cast<double>(n);
    sizes[p] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += sizes[p];
    remainders.emplace_back(exact - static_cast<double>(sizes[p]), p);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& l, const auto& r) { return l.first > r.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[remainders[k % parts].second];
  for (std::size_t p = 0; p < parts; ++p)
    if (sizes[p] == 0)
      throw ValidationError("split: part " + std::to_string(p) + " would receive no users");

  auto rng = seed.engine();
  const auto order = sample_without_replacement(static_cast<Index>(n), static_cast<Index>(n), rng);
  std::vector<int> part_of(n);
  std::size_t cursor = 0;
  for (std::size_t p = 0; p < parts; ++p)
    for (std::size_t k = 0; k < sizes[p]; ++k)
      part_of[static_cast<std::size_t>(order[cursor++])] = static_cast<int>(p);
  std::vector<std::vector<std::string>> out(parts);
  for (std::size_t i = 0; i < n; ++i) out[static_cast<std::size_t>(part_of[i])].push_back(users[i]);
  return out;
}

std::vector<Index> rows_of_users(const EmbeddingSet& set, const std::vector<std::string>& users) {
  const std::unordered_set<std::string> keep(users.begin(), users.end());
  std::vector<Index> rows;
  for (Index i = 0; i < set.size(); ++i)
    if (keep.count(set.user_id(i))) rows.push_back(i);
  return rows;
}

}  // namespace embalign

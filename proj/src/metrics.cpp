// src/metrics.cpp

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

#include "embalign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>
#include <unordered_map>

namespace embalign {

namespace {

Matrix normalized_rows(const Matrix& m) {
  const Vector norms = m.rowwise().norm();
  if ((norms.array() <= 0.0).any()) throw ValidationError("cosine of a zero vector");
  return norms.cwiseInverse().asDiagonal() * m;
}

// Dense user index per record, plus the number of distinct users.
std::vector<int> user_index(const std::vector<std::string>& ids,
                            std::unordered_map<std::string, int>& table) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto [it, inserted] = table.emplace(id, static_cast<int>(table.size()));
    out.push_back(it->second);
  }
  return out;
}

// Mean vector per user, in the order of the user table.
Matrix user_means(const Matrix& v, const std::vector<int>& users, int n_users) {
  Matrix sums = Matrix::Zero(n_users, v.cols());
  std::vector<Index> counts(static_cast<std::size_t>(n_users), 0);
  for (Index i = 0; i < v.rows(); ++i) {
    sums.row(users[static_cast<std::size_t>(i)]) += v.row(i);
    ++counts[static_cast<std::size_t>(users[static_cast<std::size_t>(i)])];
  }
  for (int u = 0; u < n_users; ++u)
    if (counts[static_cast<std::size_t>(u)] > 0)
      sums.row(u) /= static_cast<double>(counts[static_cast<std::size_t>(u)]);
  return sums;
}

// Runs body(begin, end, out) over row blocks, possibly in parallel, and
// concatenates the per-block outputs in block order.
template <typename Body>
TrialScores blocked(Index rows, Body body) {
  const int threads = std::max(1, std::min<int>(thread_count(), static_cast<int>(rows)));
  std::vector<TrialScores> parts(static_cast<std::size_t>(threads));
  auto bounds = [&](int t) { return rows * t / threads; };
  if (threads == 1) {
    body(0, rows, parts[0]);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] { body(bounds(t), bounds(t + 1), parts[static_cast<std::size_t>(t)]); });
    for (auto& th : pool) th.join();
  }
  TrialScores out;
  for (auto& p : parts) {
    out.genuine.insert(out.genuine.end(), p.genuine.begin(), p.genuine.end());
    out.impostor.insert(out.impostor.end(), p.impostor.begin(), p.impostor.end());
  }
  return out;
}

void require_trials(const TrialScores& t) {
  if (t.genuine.empty())
    throw ValidationError("no genuine trials: every user needs >= 2 records (or must appear in "
                          "both enrollment and probe sets)");
  if (t.impostor.empty()) throw ValidationError("no impostor trials: need >= 2 users");
}

}  // namespace

double cosine(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b) {
  if (a.size() != b.size()) throw ValidationError("cosine: dimension mismatch");
  const double aa = a.dot(a);
  const double bb = b.dot(b);
  if (aa == 0.0 || bb == 0.0) throw ValidationError("cosine of a zero vector");
  // sqrt(fl(s * s)) == s, so cosine(v, v) is exactly 1.
  return std::clamp(a.dot(b) / std::sqrt(aa * bb), -1.0, 1.0);
}

Vector row_cosines(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ValidationError("row_cosines: shape mismatch");
  Vector out(a.rows());
  for (Index i = 0; i < a.rows(); ++i) out[i] = cosine(a.row(i), b.row(i));
  return out;
}

std::string to_string(Pooling pooling) {
  return pooling == Pooling::kPerRecord ? "per-record" : "mean-per-user";
}

Pooling parse_pooling(const std::string& name) {
  if (name == "per-record") return Pooling::kPerRecord;
  if (name == "mean-per-user") return Pooling::kMeanPerUser;
  throw ValidationError("unknown pooling '" + name + "' (expected per-record or mean-per-user)");
}

TrialScores build_trials(const EmbeddingSet& enroll, const EmbeddingSet& probe, Pooling pooling) {
  if (&enroll == &probe) return build_self_trials(enroll, pooling);
  if (enroll.dim() != probe.dim()) throw ValidationError("build_trials: dimension mismatch");

  std::unordered_map<std::string, int> table;
  const auto eu = user_index(enroll.user_ids(), table);
  const int enrolled_users = static_cast<int>(table.size());
  const auto pu = user_index(probe.user_ids(), table);
  int overlap = 0;
  {
    std::vector<char> seen(static_cast<std::size_t>(enrolled_users), 0);
    for (int u : pu)
      if (u < enrolled_users && !seen[static_cast<std::size_t>(u)]) {
        seen[static_cast<std::size_t>(u)] = 1;
        ++overlap;
      }
  }
  if (overlap < 2)
    throw ValidationError("build_trials: enrollment and probe sets share " +
                          std::to_string(overlap) + " users, need >= 2");

  Matrix ev = normalized_rows(enroll.vectors());
  std::vector<int> eusers = eu;
  if (pooling == Pooling::kMeanPerUser) {
    ev = normalized_rows(user_means(enroll.vectors(), eu, enrolled_users));
    eusers.resize(static_cast<std::size_t>(enrolled_users));
    for (int u = 0; u < enrolled_users; ++u) eusers[static_cast<std::size_t>(u)] = u;
  }
  const Matrix pv = normalized_rows(probe.vectors());

  TrialScores t = blocked(pv.rows(), [&](Index begin, Index end, TrialScores& out) {
    for (Index i = begin; i < end; ++i) {
      const int user = pu[static_cast<std::size_t>(i)];
      if (user >= enrolled_users) continue;
      const Vector s = ev * pv.row(i).transpose();
      for (Index j = 0; j < ev.rows(); ++j) {
        const double c = std::clamp(s[j], -1.0, 1.0);
        (eusers[static_cast<std::size_t>(j)] == user ? out.genuine : out.impostor).push_back(c);
      }
    }
  });
  require_trials(t);
  return t;
}

TrialScores build_self_trials(const EmbeddingSet& set, Pooling pooling) {
  std::unordered_map<std::string, int> table;
  const auto users = user_index(set.user_ids(), table);
  const int n_users = static_cast<int>(table.size());
  if (n_users < 2) throw ValidationError("build_trials: need >= 2 users");
  const Matrix v = normalized_rows(set.vectors());

  TrialScores t;
  if (pooling == Pooling::kPerRecord) {
    t = blocked(v.rows(), [&](Index begin, Index end, TrialScores& out) {
      for (Index i = begin; i < end; ++i) {
        const Index rest = v.rows() - i - 1;
        if (rest == 0) continue;
        const Vector s = v.bottomRows(rest) * v.row(i).transpose();
        const int user = users[static_cast<std::size_t>(i)];
        for (Index k = 0; k < rest; ++k) {
          const double c = std::clamp(s[k], -1.0, 1.0);
          (users[static_cast<std::size_t>(i + 1 + k)] == user ? out.genuine : out.impostor)
              .push_back(c);
        }
      }
    });
  } else {
    const Matrix means = normalized_rows(user_means(set.vectors(), users, n_users));
    t = blocked(v.rows(), [&](Index begin, Index end, TrialScores& out) {
      for (Index i = begin; i < end; ++i) {
        const Vector s = means * v.row(i).transpose();
        for (int u = 0; u < n_users; ++u) {
          const double c = std::clamp(s[u], -1.0, 1.0);
          (u == users[static_cast<std::size_t>(i)] ? out.genuine : out.impostor).push_back(c);
        }
      }
    });
  }
  require_trials(t);
  return t;
}

EerResult compute_eer(const TrialScores& trials) {
  if (trials.genuine.empty() || trials.impostor.empty())
    throw ValidationError("compute_eer needs non-empty genuine and impostor scores");
  std::vector<double> g = trials.genuine;
  std::vector<double> im = trials.impostor;
  for (double s : g)
    if (!std::isfinite(s)) throw ValidationError("compute_eer: non-finite genuine score");
  for (double s : im)
    if (!std::isfinite(s)) throw ValidationError("compute_eer: non-finite impostor score");
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  const double ng = static_cast<double>(g.size());
  const double ni = static_cast<double>(im.size());

  EerResult best;
  double best_gap = std::numeric_limits<double>::infinity();
  std::size_t gi = 0;  // genuine scores < threshold (rejected)
  std::size_t ii = 0;  // impostor scores < threshold (rejected)
  std::size_t a = 0;
  std::size_t b = 0;
  while (a < g.size() || b < im.size()) {
    const double t = (b >= im.size() || (a < g.size() && g[a] <= im[b])) ? g[a] : im[b];
    gi = a;
    ii = b;
    const double frr = static_cast<double>(gi) / ng;
    const double far = static_cast<double>(im.size() - ii) / ni;
    const double gap = std::abs(far - frr);
    if (gap < best_gap) {
      best_gap = gap;
      best = {(far + frr) / 2.0, t, far, frr};
    }
    while (a < g.size() && g[a] == t) ++a;
    while (b < im.size() && im[b] == t) ++b;
  }
  return best;
}

FarThreshold far_threshold(std::vector<double> impostor, double percent) {
  if (!(percent > 0.0) || percent > 100.0)
    throw ValidationError("far_threshold: x must be in (0, 100], got " + std::to_string(percent));
  if (impostor.empty()) throw ValidationError("far_threshold: no impostor scores");
  std::sort(impostor.begin(), impostor.end());
  const std::size_t n = impostor.size();
  // Largest number of impostor scores that may be accepted.
  const auto k = static_cast<std::size_t>(
      std::floor(percent * static_cast<double>(n) / 100.0 + 1e-9));
  FarThreshold out;
  if (k >= n) {
    out.threshold = impostor.front();
  } else {
    // Just above the largest score that must be rejected.
    out.threshold = std::nextafter(impostor[n - k - 1], std::numeric_limits<double>::infinity());
    out.resolvable = k >= 1;
  }
  const auto accepted = static_cast<std::size_t>(
      impostor.end() - std::lower_bound(impostor.begin(), impostor.end(), out.threshold));
  out.far = static_cast<double>(accepted) / static_cast<double>(n);
  return out;
}

double compute_sfar(const EmbeddingSet& target, const EmbeddingSet& spoof, double tau) {
  if (target.size() != spoof.size())
    throw ValidationError("compute_sfar: spoof set has " + std::to_string(spoof.size()) +
                          " rows, target set has " + std::to_string(target.size()) +
                          "; rows must be paired");
  if (target.dim() != spoof.dim()) throw ValidationError("compute_sfar: dimension mismatch");
  const Vector c = row_cosines(spoof.vectors(), target.vectors());
  return static_cast<double>((c.array() >= tau).count()) / static_cast<double>(c.size());
}

int nearest_centroid(const Eigen::Ref<const RowVector>& v,
                     const std::map<int, RowVector>& centroids) {
  if (centroids.empty()) throw ValidationError("nearest_centroid: no centroids");
  int best = centroids.begin()->first;
  double best_cos = -std::numeric_limits<double>::infinity();
  for (const auto& [label, c] : centroids) {
    const double s = cosine(v, c);
    if (s > best_cos) {
      best_cos = s;
      best = label;
    }
  }
  return best;
}

double classification_accuracy(const EmbeddingSet& original, const EmbeddingSet& spoof,
                               const std::map<int, RowVector>& centroids) {
  if (original.size() != spoof.size() || original.dim() != spoof.dim())
    throw ValidationError("classification_accuracy: sets are not paired");
  for (Index i = 0; i < original.size(); ++i) {
    const auto label = original.label(i);
    if (!label)
      throw ValidationError("classification_accuracy: record " + std::to_string(i) +
                            " has no class label");
    if (!centroids.count(*label))
      throw ValidationError("classification_accuracy: no centroid for class " +
                            std::to_string(*label));
  }
  Index agree = 0;
  for (Index i = 0; i < original.size(); ++i)
    if (nearest_centroid(spoof.vectors().row(i), centroids) ==
        nearest_centroid(original.vectors().row(i), centroids))
      ++agree;
  return static_cast<double>(agree) / static_cast<double>(original.size());
}

std::optional<double> AttackReport::sfar_at(const std::string& level) const {
  for (const auto& e : sfar)
    if (e.level == level) return e.sfar;
  return std::nullopt;
}

AttackReport evaluate_attack(const EmbeddingSet& target, const Rotation& w,
                             const std::optional<EmbeddingSet>& attack_paired,
                             const EvalConfig& config, const std::string& method) {
  if (target.dim() != w.dim())
    throw ValidationError("evaluate: target dim " + std::to_string(target.dim()) +
                          " does not match rotation dim " + std::to_string(w.dim()));
  AttackReport r;
  r.method = method;
  r.dim = target.dim();
  r.n_target = target.size();
  r.det = w.det();
  r.orthogonality_error = w.orthogonality_error();

  const TrialScores system = build_self_trials(target, config.pooling);
  const EerResult sys = compute_eer(system);
  r.target_eer = sys.eer;
  r.eer_threshold = sys.threshold;

  r.sfar.push_back({"EER", sys.threshold, std::nullopt});
  for (double level : config.far_levels) {
    const FarThreshold ft = far_threshold(system.impostor, level);
    char name[32];
    std::snprintf(name, sizeof(name), "%g%%", level);
    SfarEntry e{name, std::nullopt, std::nullopt};
    if (ft.resolvable)
      e.threshold = ft.threshold;
    else
      r.warnings.push_back(std::string("quantile_unresolvable: FAR ") + name + " needs >= " +
                           std::to_string(static_cast<long long>(std::ceil(100.0 / level))) +
                           " impostor scores, have " + std::to_string(system.impostor.size()));
    r.sfar.push_back(e);
  }

  if (!attack_paired) {
    r.warnings.push_back("no paired attack set: spoof metrics not computed");
    return r;
  }
  if (attack_paired->dim() != target.dim())
    throw ValidationError("evaluate: attack dim " + std::to_string(attack_paired->dim()) +
                          " does not match target dim " + std::to_string(target.dim()));
  if (attack_paired->size() != target.size())
    throw ValidationError("evaluate: attack set has " + std::to_string(attack_paired->size()) +
                          " rows, target set has " + std::to_string(target.size()) +
                          "; rows must be paired");
  const EmbeddingSet spoof = target.with_vectors(attack_paired->vectors() * w.matrix());
  r.n_spoof = spoof.size();
  for (auto& e : r.sfar)
    if (e.threshold) e.sfar = compute_sfar(target, spoof, *e.threshold);
  r.mean_cosine = row_cosines(spoof.vectors(), target.vectors()).mean();
  r.eer = compute_eer(build_trials(target, spoof, config.pooling)).eer;
  if (target.fully_labeled() && target.num_classes() > 0) {
    const auto centroids = class_centroids(target);
    r.accuracy = classification_accuracy(target, spoof, centroids);
  }
  return r;
}

}  // namespace embalign

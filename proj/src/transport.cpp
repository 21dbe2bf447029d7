// src/transport.cpp

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

#include "embalign/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace embalign {

namespace {

void require_finite(const Matrix& cost) {
  if (cost.rows() < 1 || cost.cols() < 1) throw ValidationError("cost matrix is empty");
  if (!cost.allFinite()) throw ValidationError("cost matrix has non-finite entries");
}

// log(sum_k exp(x_k + y_k)), max-shifted; vectorized through Eigen's exp.
double log_sum_exp_shifted(const Vector& x, const Eigen::Ref<const Vector>& y) {
  const double mx = (x + y).maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((x.array() + y.array() - mx).exp().sum());
}

}  // namespace

SinkhornResult sinkhorn(const Matrix& cost, double reg, int max_iters, double tol) {
  require_finite(cost);
  if (!(reg > 0.0)) throw ValidationError("sinkhorn regularization must be positive");
  if (max_iters < 1) throw ValidationError("sinkhorn max_iters must be positive");
  if (!(tol > 0.0)) throw ValidationError("sinkhorn tolerance must be positive");

  const Index n = cost.rows();
  const Index m = cost.cols();
  // Scaled kernel in both storage orders so every log-sum-exp walks
  // contiguous memory.
  const Matrix kcols = -cost / reg;                    // column j contiguous
  const Matrix krows = kcols.transpose();              // column i = row i of K
  if (!kcols.allFinite())
    throw NumericError("sinkhorn: cost / reg overflows at reg=" + std::to_string(reg) +
                       "; increase the regularization");

  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  Vector u = Vector::Zero(n);  // f / reg
  Vector v = Vector::Zero(m);  // g / reg

  SinkhornResult result;
  auto row_error = [&]() {
    double err = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double row = (v.array() + krows.col(i).array() + u[i]).exp().sum();
      err += std::abs(row - std::exp(log_a));
    }
    return err;
  };

  int it = 0;
  double err = std::numeric_limits<double>::infinity();
  for (it = 1; it <= max_iters; ++it) {
    for (Index i = 0; i < n; ++i) u[i] = log_a - log_sum_exp_shifted(v, krows.col(i));
    for (Index j = 0; j < m; ++j) v[j] = log_b - log_sum_exp_shifted(u, kcols.col(j));
    if (!u.allFinite() || !v.allFinite())
      throw NumericError("sinkhorn: potentials became non-finite at reg=" + std::to_string(reg) +
                         "; increase the regularization");
    if (it % kSinkhornCheckEvery == 0 || it == max_iters) {
      err = row_error();
      result.marginal_trace.push_back(err);
      if (err <= tol) {
        result.converged = true;
        break;
      }
    }
  }
  result.iterations = std::min(it, max_iters);
  result.marginal_error = err;

  result.coupling.resize(n, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) result.coupling(i, j) = std::exp(u[i] + v[j] + kcols(i, j));
  result.cost = (result.coupling.array() * cost.array()).sum();
  return result;
}

std::vector<Index> exact_assignment(const Matrix& cost) {
  require_finite(cost);
  if (cost.rows() != cost.cols())
    throw ValidationError("exact_assignment needs a square cost matrix, got " +
                          std::to_string(cost.rows()) + "x" + std::to_string(cost.cols()));
  const Index n = cost.rows();
  if (n > 4096) throw ValidationError("exact_assignment supports n <= 4096");

  // Shortest augmenting path with dual potentials (Kuhn-Munkres, O(n^3)).
  // 1-based indexing; column 0 is the virtual source.
  const Matrix a = cost.transpose();  // a.col(i) is row i of the cost, contiguous
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Index> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  std::vector<double> minv(static_cast<std::size_t>(n + 1));
  std::vector<char> used(static_cast<std::size_t>(n + 1));

  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Index i0 = p[static_cast<std::size_t>(j0)];
      const double* row = a.col(i0 - 1).data();
      const double ui0 = u[static_cast<std::size_t>(i0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) continue;
        const double cur = row[j - 1] - ui0 - v[sj];
        if (cur < minv[sj]) {
          minv[sj] = cur;
          way[sj] = j0;
        }
        if (minv[sj] < delta) {
          delta = minv[sj];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) {
          u[static_cast<std::size_t>(p[sj])] += delta;
          v[sj] -= delta;
        } else {
          minv[sj] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<Index> assignment(static_cast<std::size_t>(n));
  for (Index j = 1; j <= n; ++j)
    assignment[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return assignment;
}

double assignment_cost(const Matrix& cost, const std::vector<Index>& assignment) {
  double total = 0.0;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    total += cost(static_cast<Index>(i), assignment[i]);
  return total;
}

std::vector<Index> round_coupling(const Matrix& coupling) {
  std::vector<Index> out(static_cast<std::size_t>(coupling.rows()));
  for (Index i = 0; i < coupling.rows(); ++i) {
    Index best = 0;
    coupling.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

Matrix squared_euclidean_cost(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ValidationError("cost: point dimensions differ");
  const Vector an = a.rowwise().squaredNorm();
  const Vector bn = b.rowwise().squaredNorm();
  Matrix c = -2.0 * a * b.transpose();
  c.colwise() += an;
  c.rowwise() += bn.transpose();
  return c.cwiseMax(0.0);
}

double median_entry(const Matrix& m) {
  std::vector<double> values(m.data(), m.data() + m.size());
  if (values.empty()) throw ValidationError("median of an empty matrix");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(values.begin(), mid);
  return 0.5 * (lo + hi);
}

double default_sinkhorn_reg(const Matrix& cost) {
  const double med = median_entry(cost);
  return med > 0.0 ? 0.05 * med : 0.05;
}

}  // namespace embalign

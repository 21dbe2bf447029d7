// include/embalign/transport.hpp

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

#include <vector>

namespace embalign {

/// Entropic OT solution between uniform marginals 1/n and 1/m.
struct SinkhornResult {
  Matrix coupling;
  double cost = 0.0;              ///< <C, P>
  double marginal_error = 0.0;    ///< L1 row-marginal violation at return
  int iterations = 0;
  bool converged = false;
  /// Marginal violation sampled every `kSinkhornCheckEvery` iterations.
  std::vector<double> marginal_trace;
};

inline constexpr int kSinkhornCheckEvery = 10;

/// Log-domain Sinkhorn. Column marginals are exact after every sweep; the
/// reported error is the L1 distance of the row sums to 1/n.
///
/// Throws ValidationError for non-finite costs or reg <= 0, NumericError when
/// C / reg overflows (increase reg).
SinkhornResult sinkhorn(const Matrix& cost, double reg, int max_iters = 1000, double tol = 1e-6);

/// Permutation pi minimizing sum_i C(i, pi(i)); square costs only, n <= 4096.
std::vector<Index> exact_assignment(const Matrix& cost);

/// Sum of C(i, pi(i)).
double assignment_cost(const Matrix& cost, const std::vector<Index>& assignment);

/// Row-wise argmax of a coupling (many-to-one rounding).
std::vector<Index> round_coupling(const Matrix& coupling);

/// C(i, j) = ||a_i - b_j||^2, clamped at zero.
Matrix squared_euclidean_cost(const Matrix& a, const Matrix& b);

double median_entry(const Matrix& m);

/// Default entropic regularization: 0.05 * median(C).
double default_sinkhorn_reg(const Matrix& cost);

}  // namespace embalign

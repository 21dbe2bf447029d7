// src/procrustes.cpp

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

#include <Eigen/SVD>

#include <set>
#include <sstream>

namespace embalign {

AlignmentResult orthogonal_procrustes(const Matrix& x, const Matrix& y,
                                      const ProcrustesOptions& options) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw ValidationError("procrustes: shape mismatch, X is " + std::to_string(x.rows()) + "x" +
                          std::to_string(x.cols()) + ", Y is " + std::to_string(y.rows()) + "x" +
                          std::to_string(y.cols()));
  if (x.rows() < 1 || x.cols() < 2) throw ValidationError("procrustes: need N >= 1 and D >= 2");
  if (!x.allFinite() || !y.allFinite()) throw ValidationError("procrustes: non-finite input");

  const Index d = x.cols();
  const Matrix m = x.transpose() * y;
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.info() != Eigen::Success) throw NumericError("procrustes: SVD did not converge");
  Matrix u = svd.matrixU();
  const Matrix& v = svd.matrixV();
  if (options.proper_rotation && (u * v.transpose()).determinant() < 0) u.col(d - 1) *= -1.0;

  AlignmentResult r;
  r.method = "procrustes";
  r.rotation = Rotation::nearest(u * v.transpose());

  const auto& s = svd.singularValues();
  const double cutoff = s[0] * 1e-10;
  Index rank = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s[i] > cutoff) ++rank;
  if (x.rows() < d || rank < d) {
    r.underdetermined = true;
    r.warnings.push_back("underdetermined: " + std::to_string(x.rows()) + " pairs, rank " +
                         std::to_string(rank) + " < D=" + std::to_string(d));
  }
  return r;
}

AlignmentResult orthogonal_procrustes(const EmbeddingSet& x, const EmbeddingSet& y,
                                      const ProcrustesOptions& options) {
  return orthogonal_procrustes(x.vectors(), y.vectors(), options);
}

AlignmentResult cluster_center_procrustes(const EmbeddingSet& x, const EmbeddingSet& y,
                                          const std::map<int, int>& correspondence,
                                          const ProcrustesOptions& options) {
  if (x.dim() != y.dim())
    throw ValidationError("cluster procrustes: dimensions differ (" + std::to_string(x.dim()) +
                          " vs " + std::to_string(y.dim()) + ")");
  if (!x.fully_labeled() || !y.fully_labeled())
    throw ValidationError("cluster procrustes needs class labels on every record of both sets");
  const auto cx = class_centroids(x);
  const auto cy = class_centroids(y);

  std::map<int, int> corr = correspondence;
  if (corr.empty())
    for (const auto& [label, _] : cx) corr.emplace(label, label);

  std::set<int> targets;
  std::vector<int> missing_x;
  std::vector<int> missing_y;
  for (const auto& [a, b] : corr) {
    if (!targets.insert(b).second)
      throw ValidationError("cluster correspondence is not a bijection (label " +
                            std::to_string(b) + " used twice)");
    if (!cx.count(a)) missing_x.push_back(a);
    if (!cy.count(b)) missing_y.push_back(b);
  }
  if (!missing_x.empty() || !missing_y.empty()) {
    std::ostringstream msg;
    msg << "cluster procrustes: absent labels;";
    msg << " source:";
    for (int l : missing_x) msg << ' ' << l;
    msg << "; target:";
    for (int l : missing_y) msg << ' ' << l;
    throw ValidationError(msg.str());
  }
  if (corr.size() < 2) throw ValidationError("cluster procrustes needs at least 2 classes");

  Matrix px(static_cast<Index>(corr.size()), x.dim());
  Matrix py(static_cast<Index>(corr.size()), y.dim());
  Index row = 0;
  for (const auto& [a, b] : corr) {
    px.row(row) = cx.at(a);
    py.row(row) = cy.at(b);
    ++row;
  }
  AlignmentResult r = orthogonal_procrustes(px, py, options);
  r.method = "procrustes-cluster";
  return r;
}

AlignmentResult oracle_procrustes(const EmbeddingSet& e_attack,
                                  const EmbeddingSet& e_paired_target,
                                  const ProcrustesOptions& options) {
  AlignmentResult r = orthogonal_procrustes(e_attack, e_paired_target, options);
  r.method = "oracle";
  r.oracle = true;
  return r;
}

}  // namespace embalign

// src/gmm.cpp

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

#include "embalign/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace embalign {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct Prepared {
  std::vector<double> log_weight;  // log p_k + normalizer
  Matrix mean;                     // K x D
  Matrix ivar;                     // K x D
};

Prepared prepare(const GmmModel& gmm) {
  const Index k = gmm.size();
  Prepared p;
  p.mean.resize(k, gmm.dim);
  p.ivar.resize(k, gmm.dim);
  p.log_weight.resize(static_cast<std::size_t>(k));
  for (Index c = 0; c < k; ++c) {
    const auto& comp = gmm.components[static_cast<std::size_t>(c)];
    p.mean.row(c) = comp.mean;
    p.ivar.row(c) = comp.var.cwiseInverse();
    const double log_det = comp.var.array().log().sum();
    p.log_weight[static_cast<std::size_t>(c)] =
        std::log(comp.prior) - 0.5 * (static_cast<double>(gmm.dim) * kLog2Pi + log_det);
  }
  return p;
}

// n x K matrix of log p_k + log N(y_n; k).
Matrix joint_log_density(const Matrix& y, const Prepared& p) {
  const Index k = p.mean.rows();
  Matrix lp(y.rows(), k);
  for (Index c = 0; c < k; ++c) {
    const Matrix diff = y.rowwise() - p.mean.row(c);
    lp.col(c) = (-0.5 * (diff.array().square().matrix() * p.ivar.row(c).transpose())).array() +
                p.log_weight[static_cast<std::size_t>(c)];
  }
  return lp;
}

// Row-wise log-sum-exp; responsibilities are written into lp in place.
Vector normalize_rows(Matrix& lp) {
  Vector out(lp.rows());
  for (Index i = 0; i < lp.rows(); ++i) {
    const double mx = lp.row(i).maxCoeff();
    if (!std::isfinite(mx)) throw NumericError("mixture density underflowed for every component");
    const double s = (lp.row(i).array() - mx).exp().sum();
    out[i] = mx + std::log(s);
    lp.row(i) = (lp.row(i).array() - out[i]).exp();
  }
  return out;
}

Matrix kmeans_pp(const Matrix& x, int k, std::mt19937_64& rng, int lloyd_iters) {
  const Index n = x.rows();
  Matrix centers(k, x.cols());
  centers.row(0) = x.row(static_cast<Index>(rng() % static_cast<std::uint64_t>(n)));
  Vector d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index pick = 0;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(rng() % static_cast<std::uint64_t>(n));
    }
    centers.row(c) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < lloyd_iters; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      (centers.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (assign[static_cast<std::size_t>(i)] != static_cast<int>(best)) changed = true;
      assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0)
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    if (!changed && it > 0) break;
  }
  return centers;
}

}  // namespace

void GmmModel::validate() const {
  if (components.empty()) throw ValidationError("GMM has no components");
  double total = 0.0;
  for (const auto& c : components) {
    if (c.mean.size() != dim || c.var.size() != dim)
      throw ValidationError("GMM component dimension does not match model dimension");
    if (!(c.prior > 0.0) || !(c.prior <= 1.0)) throw ValidationError("GMM prior outside (0, 1]");
    if (!(c.var.minCoeff() > 0.0) || !c.var.allFinite() || !c.mean.allFinite())
      throw ValidationError("GMM variances must be positive and finite");
    total += c.prior;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("GMM priors do not sum to 1");
}

GmmModel fit_gmm(const Matrix& data, int k, RngSeed seed, const GmmFitOptions& options) {
  if (k < 1) throw ValidationError("GMM needs K >= 1");
  const Index n = data.rows();
  const Index d = data.cols();
  if (n < 10 * static_cast<Index>(k))
    throw ValidationError("GMM fit needs N >= 10*K: N=" + std::to_string(n) +
                          ", K=" + std::to_string(k));
  if (!data.allFinite()) throw ValidationError("GMM data must be finite");

  const RowVector mu = data.colwise().mean();
  const RowVector data_var = (data.rowwise() - mu).array().square().colwise().mean();
  const double mean_var = data_var.mean();
  GmmModel gmm;
  gmm.dim = d;
  gmm.variance_floor = mean_var > 0.0 ? options.floor_ratio * mean_var
                                      : std::numeric_limits<double>::min();
  const RowVector global_var = data_var.cwiseMax(gmm.variance_floor);

  auto rng = seed.engine();
  const Matrix centers = kmeans_pp(data, k, rng, options.kmeans_iters);
  gmm.components.resize(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    auto& comp = gmm.components[static_cast<std::size_t>(c)];
    comp.prior = 1.0 / k;
    comp.mean = centers.row(c);
    comp.var = global_var;
  }

  int reseeds = 0;
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < options.max_iters; ++it) {
    const Prepared p = prepare(gmm);
    Matrix resp = joint_log_density(data, p);
    const double ll = normalize_rows(resp).mean();
    gmm.train_trace.push_back(ll);
    if (it > 0 && ll - prev < options.tol * (1.0 + std::abs(ll))) break;
    prev = ll;

    const RowVector nk = resp.colwise().sum();
    for (int c = 0; c < k; ++c) {
      auto& comp = gmm.components[static_cast<std::size_t>(c)];
      if (nk[c] <= 1e-10) {
        if (++reseeds >= 3)
          throw NumericError("GMM component became empty for the third time; reduce K");
        // Re-seed at the point farthest from every current mean.
        Vector nearest = Vector::Constant(n, std::numeric_limits<double>::infinity());
        for (const auto& other : gmm.components)
          nearest = nearest.cwiseMin((data.rowwise() - other.mean).rowwise().squaredNorm());
        Index far = 0;
        nearest.maxCoeff(&far);
        comp.mean = data.row(far);
        comp.var = global_var;
        comp.prior = 1.0 / k;
        gmm.log.push_back("iteration " + std::to_string(it) + ": component " +
                          std::to_string(c) + " empty, re-seeded at record " +
                          std::to_string(far));
        continue;
      }
      const Vector& w = resp.col(c);
      comp.prior = nk[c] / static_cast<double>(n);
      comp.mean = (w.transpose() * data) / nk[c];
      const Matrix diff = data.rowwise() - comp.mean;
      comp.var = ((w.transpose() * diff.array().square().matrix()) / nk[c])
                     .cwiseMax(gmm.variance_floor);
    }
    double total = 0.0;
    for (const auto& comp : gmm.components) total += comp.prior;
    for (auto& comp : gmm.components) comp.prior /= total;
  }
  gmm.validate();
  return gmm;
}

GmmModel fit_gmm(const EmbeddingSet& set, int k, RngSeed seed, const GmmFitOptions& options) {
  return fit_gmm(set.vectors(), k, seed, options);
}

double log_gaussian(const RowVector& y, const GmmComponent& c) {
  if (y.size() != c.mean.size()) throw ValidationError("log_gaussian: dimension mismatch");
  const double maha = ((y - c.mean).array().square() / c.var.array()).sum();
  const double log_det = c.var.array().log().sum();
  return -0.5 * (static_cast<double>(y.size()) * kLog2Pi + log_det + maha);
}

double log_gaussian(const RowVector& e, const Matrix& w, const GmmComponent& c) {
  if (e.size() != w.rows()) throw ValidationError("log_gaussian: dimension mismatch");
  return log_gaussian(RowVector(e * w), c);
}

double gmm_loglik(const RowVector& y, const GmmModel& gmm, RowVector* grad) {
  if (y.size() != gmm.dim) throw ValidationError("gmm_loglik: dimension mismatch");
  const Index k = gmm.size();
  std::vector<double> lp(static_cast<std::size_t>(k));
  for (Index c = 0; c < k; ++c) {
    const auto& comp = gmm.components[static_cast<std::size_t>(c)];
    lp[static_cast<std::size_t>(c)] = std::log(comp.prior) + log_gaussian(y, comp);
  }
  const double mx = *std::max_element(lp.begin(), lp.end());
  double s = 0.0;
  for (double v : lp) s += std::exp(v - mx);
  const double out = mx + std::log(s);
  if (grad != nullptr) {
    grad->setZero(y.size());
    for (Index c = 0; c < k; ++c) {
      const auto& comp = gmm.components[static_cast<std::size_t>(c)];
      const double gamma = std::exp(lp[static_cast<std::size_t>(c)] - out);
      *grad -= gamma * ((y - comp.mean).array() / comp.var.array()).matrix();
    }
  }
  return out;
}

double gmm_loglik(const RowVector& e, const Matrix& w, const GmmModel& gmm) {
  if (e.size() != w.rows()) throw ValidationError("gmm_loglik: dimension mismatch");
  return gmm_loglik(RowVector(e * w), gmm);
}

double score_set(const Matrix& e, const Matrix& w, const GmmModel& gmm, Matrix* grad_w) {
  if (e.rows() < 1) throw ValidationError("score_set: empty embedding set");
  if (e.cols() != w.rows() || w.cols() != gmm.dim)
    throw ValidationError("score_set: dimension mismatch");
  const Prepared p = prepare(gmm);
  const Matrix y = e * w;
  Matrix resp = joint_log_density(y, p);
  const double score = normalize_rows(resp).mean();
  if (grad_w != nullptr) {
    Matrix gy = Matrix::Zero(y.rows(), y.cols());
    for (Index c = 0; c < gmm.size(); ++c) {
      const Matrix scaled =
          ((y.rowwise() - p.mean.row(c)).array().rowwise() * p.ivar.row(c).array()).matrix();
      gy -= resp.col(c).asDiagonal() * scaled;
    }
    *grad_w = e.transpose() * gy / static_cast<double>(e.rows());
  }
  return score;
}

double score_set(const EmbeddingSet& e, const Rotation& w, const GmmModel& gmm) {
  return score_set(e.vectors(), w.matrix(), gmm);
}

SymmetricScore symmetric_score(const Matrix& e_src, const Matrix& w, const Matrix& e_dst,
                               const GmmModel& gmm_src, const GmmModel& gmm_dst, bool use_min) {
  SymmetricScore s;
  s.forward = score_set(e_src, w, gmm_dst);
  s.backward = score_set(e_dst, w.transpose(), gmm_src);
  s.forward_selected = use_min ? s.forward <= s.backward : s.forward >= s.backward;
  s.value = s.forward_selected ? s.forward : s.backward;
  return s;
}

double symmetric_score(const EmbeddingSet& e_src, const Rotation& w, const EmbeddingSet& e_dst,
                       const GmmModel& gmm_src, const GmmModel& gmm_dst, bool use_min) {
  return symmetric_score(e_src.vectors(), w.matrix(), e_dst.vectors(), gmm_src, gmm_dst, use_min)
      .value;
}

Matrix sample_gmm(const GmmModel& gmm, Index n, std::mt19937_64& rng) {
  gmm.validate();
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(n, gmm.dim);
  for (Index i = 0; i < n; ++i) {
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t pick = gmm.components.size() - 1;
    for (std::size_t c = 0; c < gmm.components.size(); ++c) {
      acc += gmm.components[c].prior;
      if (u < acc) {
        pick = c;
        break;
      }
    }
    const auto& comp = gmm.components[pick];
    for (Index j = 0; j < gmm.dim; ++j)
      out(i, j) = comp.mean[j] + std::sqrt(comp.var[j]) * normal(rng);
  }
  return out;
}

}  // namespace embalign

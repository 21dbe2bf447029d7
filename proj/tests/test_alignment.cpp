// tests/test_alignment.cpp

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

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"

#include "embalign/alignment.hpp"
#include "embalign/gmm.hpp"
#include "embalign/synth.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>

using namespace embalign;
using namespace embalign::testing;

namespace {

void check_rotation_invariants(const Rotation& w) {
  CHECK(w.orthogonality_error() <= kRotationTolerance);
  CHECK(std::abs(std::abs(w.det()) - 1.0) <= kRotationTolerance);
}

Matrix quarter_turn() {
  Matrix r(2, 2);
  r << 0, 1, -1, 0;
  return r;
}

// Labeled clustered set with one class per user group.
EmbeddingSet clustered(Index classes, Index per_class, Index dim, std::uint64_t seed,
                       double spread = 0.3) {
  auto rng = rng_for(seed);
  const Matrix centers = standard_normal(classes, dim, rng) * 4.0;
  Matrix v = standard_normal(classes * per_class, dim, rng) * spread;
  std::vector<std::string> ids;
  std::vector<std::optional<int>> labels;
  for (Index i = 0; i < v.rows(); ++i) {
    const int c = static_cast<int>(i / per_class);
    v.row(i) += centers.row(c);
    ids.push_back(user_name(i / 2));
    labels.push_back(c);
  }
  return EmbeddingSet(v, ids, labels, static_cast<int>(classes));
}

}  // namespace

// ---------------------------------------------------------------- Procrustes

TEST_CASE("procrustes of a set onto itself is the identity") {
  const EmbeddingSet x = random_set(20, 5, 8, 1);
  const AlignmentResult r = orthogonal_procrustes(x, x);
  CHECK((r.rotation.matrix() - Matrix::Identity(8, 8)).norm() <= 1e-10);
  CHECK(!r.underdetermined);
}

TEST_CASE("procrustes recovers a 64-dim rotation from 512 pairs") {
  auto rng = rng_for(2);
  const Matrix x = standard_normal(512, 64, rng);
  const Matrix q = random_rotation(64, RngSeed{2}).matrix();
  const auto start = std::chrono::steady_clock::now();
  const AlignmentResult r = orthogonal_procrustes(x, x * q);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK((r.rotation.matrix() - q).norm() <= 1e-8);
  CHECK(seconds < 1.0);
  check_rotation_invariants(r.rotation);
}

TEST_CASE("procrustes on two planar points") {
  const Matrix x = Matrix::Identity(2, 2);
  const Matrix y = x * quarter_turn();
  const AlignmentResult r = orthogonal_procrustes(x, y);
  CHECK((r.rotation.matrix() - quarter_turn()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("property: procrustes minimizes the Frobenius residual") {
  auto rng = rng_for(3);
  const Matrix x = standard_normal(60, 6, rng);
  const Matrix y = x * random_rotation(6, RngSeed{3}).matrix() + standard_normal(60, 6, rng) * 0.5;
  const Matrix w = orthogonal_procrustes(x, y).rotation.matrix();
  const double best = (x * w - y).norm();
  for (std::uint64_t s = 0; s < 100; ++s) {
    // Small random rotation composed with the optimum.
    const Matrix a = standard_normal(6, 6, rng) * 0.05;
    const Matrix skew = a - a.transpose();
    const Matrix perturb = polar_projection(Matrix::Identity(6, 6) + skew);
    CHECK((x * (w * perturb) - y).norm() >= best - 1e-9);
    const Matrix far = w * random_rotation(6, RngSeed{s + 100}).matrix();
    CHECK((x * far - y).norm() >= best - 1e-9);
  }
}

TEST_CASE("property: procrustes is scale invariant") {
  auto rng = rng_for(4);
  for (double c : {1e-3, 0.5, 7.0, 1e4}) {
    const Matrix x = standard_normal(40, 5, rng);
    const Matrix y = standard_normal(40, 5, rng);
    const Matrix w1 = orthogonal_procrustes(x, y).rotation.matrix();
    const Matrix w2 = orthogonal_procrustes(Matrix(c * x), Matrix(c * y)).rotation.matrix();
    CHECK((w1 - w2).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("procrustes reflection handling") {
  auto rng = rng_for(5);
  const Matrix x = standard_normal(30, 4, rng);
  Matrix flip = Matrix::Identity(4, 4);
  flip(3, 3) = -1;
  const AlignmentResult free = orthogonal_procrustes(x, x * flip);
  CHECK(free.rotation.det() == doctest::Approx(-1.0));
  ProcrustesOptions proper;
  proper.proper_rotation = true;
  const AlignmentResult rot = orthogonal_procrustes(x, x * flip, proper);
  CHECK(rot.rotation.det() == doctest::Approx(1.0));
  check_rotation_invariants(rot.rotation);
}

TEST_CASE("procrustes preconditions and rank warnings") {
  auto rng = rng_for(6);
  CHECK_THROWS_AS(orthogonal_procrustes(standard_normal(5, 3, rng), standard_normal(4, 3, rng)),
                  ValidationError);
  const AlignmentResult r = orthogonal_procrustes(standard_normal(3, 6, rng), standard_normal(3, 6, rng));
  CHECK(r.underdetermined);
  check_rotation_invariants(r.rotation);
}

// ------------------------------------------------------ cluster Procrustes

TEST_CASE("cluster procrustes of identical sets is the identity") {
  const EmbeddingSet x = clustered(10, 20, 8, 7);
  const AlignmentResult r = cluster_center_procrustes(x, x);
  CHECK((r.rotation.matrix() - Matrix::Identity(8, 8)).norm() <= 1e-8);
  CHECK(r.method == "procrustes-cluster");
}

TEST_CASE("cluster procrustes recovers Q when centroids span the space") {
  const EmbeddingSet x = clustered(16, 20, 16, 8);
  const Rotation q = random_rotation(16, RngSeed{8});
  const AlignmentResult r = cluster_center_procrustes(x, apply_alignment(x, q));
  CHECK((r.rotation.matrix() - q.matrix()).norm() <= 1e-6);
  CHECK(!r.underdetermined);
}

TEST_CASE("ten centroids in 16 dims cannot pin the rotation") {
  const EmbeddingSet x = clustered(10, 20, 16, 9);
  const Rotation q = random_rotation(16, RngSeed{9});
  const EmbeddingSet y = apply_alignment(x, q);
  const AlignmentResult r = cluster_center_procrustes(x, y);
  CHECK(r.underdetermined);
  // Centroids are still mapped exactly.
  const auto cx = class_centroids(x);
  const auto cy = class_centroids(y);
  for (const auto& [label, c] : cx) CHECK((c * r.rotation.matrix() - cy.at(label)).norm() <= 1e-8);
}

TEST_CASE("cluster procrustes in 512 dims is flagged underdetermined") {
  const EmbeddingSet x = clustered(10, 10, 512, 10);
  CHECK(cluster_center_procrustes(x, x).underdetermined);
}

TEST_CASE("cluster procrustes honors an explicit correspondence") {
  const EmbeddingSet x = clustered(16, 10, 12, 11);
  const Rotation q = random_rotation(12, RngSeed{11});
  std::vector<std::optional<int>> relabeled;
  std::map<int, int> corr;
  for (int c = 0; c < 16; ++c) corr[c] = (c + 5) % 16;
  for (Index i = 0; i < x.size(); ++i) relabeled.push_back(corr.at(*x.label(i)));
  const EmbeddingSet y((x.vectors() * q.matrix()).eval(), x.user_ids(), relabeled, 16);
  CHECK((cluster_center_procrustes(x, y, corr).rotation.matrix() - q.matrix()).norm() <= 1e-6);
}

TEST_CASE("cluster procrustes preconditions") {
  const EmbeddingSet labeled = clustered(4, 10, 4, 12);
  const EmbeddingSet unlabeled = random_set(10, 4, 4, 12);
  CHECK_THROWS_WITH_AS(cluster_center_procrustes(labeled, unlabeled),
                       doctest::Contains("class labels"), ValidationError);
  CHECK_THROWS_WITH_AS(cluster_center_procrustes(labeled, labeled, {{0, 1}, {1, 1}}),
                       doctest::Contains("bijection"), ValidationError);
  CHECK_THROWS_WITH_AS(cluster_center_procrustes(labeled, labeled, {{0, 0}, {9, 1}}),
                       doctest::Contains("absent labels"), ValidationError);
  CHECK_THROWS_AS(cluster_center_procrustes(labeled, labeled, {{0, 0}}), ValidationError);
}

// ------------------------------------------------------------------ oracle

TEST_CASE("oracle recovers Q from noiseless pairs") {
  const EmbeddingSet x = random_set(50, 4, 10, 13);
  const Rotation q = random_rotation(10, RngSeed{13});
  const AlignmentResult r = oracle_procrustes(x, apply_alignment(x, q));
  CHECK((r.rotation.matrix() - q.matrix()).norm() <= 1e-8);
  CHECK(r.oracle);
  CHECK(r.method == "oracle");
}

TEST_CASE("oracle output stays orthogonal under noise") {
  auto rng = rng_for(14);
  const EmbeddingSet x = random_set(50, 4, 10, 14);
  const Rotation q = random_rotation(10, RngSeed{14});
  const Matrix noisy = x.vectors() * q.matrix() + standard_normal(200, 10, rng) * 0.1;
  const AlignmentResult r = oracle_procrustes(x, x.with_vectors(noisy));
  CHECK(r.rotation.orthogonality_error() <= 1e-10);
  CHECK((r.rotation.matrix() - q.matrix()).norm() > 1e-8);
  CHECK((r.rotation.matrix() - q.matrix()).norm() < 0.5);
}

TEST_CASE("oracle on a single pair is underdetermined") {
  Matrix a(1, 3), b(1, 3);
  a << 1, 2, 3;
  b << 3, 2, 1;
  const AlignmentResult r = oracle_procrustes(EmbeddingSet(a, {"u"}), EmbeddingSet(b, {"u"}));
  CHECK(r.underdetermined);
  check_rotation_invariants(r.rotation);
}

// ------------------------------------------------------------------ fine-tune

namespace {

struct SmallProblem {
  Matrix source, dest, u;
  GmmModel gs, gd;
};

SmallProblem small_problem(std::uint64_t seed) {
  auto rng = rng_for(seed);
  SmallProblem p;
  p.source = standard_normal(60, 8, rng);
  p.source.topRows(30).rowwise() += RowVector::Constant(8, 2.0);
  p.dest = standard_normal(50, 8, rng) * 1.3;
  p.dest.topRows(25).rowwise() -= RowVector::Constant(8, 1.5);
  p.u = standard_normal(16, 8, rng);
  p.gs = fit_gmm(p.source, 2, RngSeed{seed});
  p.gd = fit_gmm(p.dest, 2, RngSeed{seed + 1});
  return p;
}

}  // namespace

TEST_CASE("fine-tune gradients match central differences on D=8, K=2") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const SmallProblem p = small_problem(20 + s);
    auto rng = rng_for(40 + s);
    // Off the manifold, so det != 1 and every term is smooth.
    const Matrix w = random_rotation(8, RngSeed{s}).matrix() * 1.05 + standard_normal(8, 8, rng) * 0.05;
    REQUIRE(w.determinant() > 0);
    for (bool use_min : {false, true}) {
      const FinetuneObjective obj(p.source, p.dest, p.gs, p.gd, p.u, use_min);
      Matrix g_det, g_orth, g_score, g_total;
      FinetuneObjective::det_loss(w, &g_det);
      FinetuneObjective::orthogonality_loss(w, p.u, &g_orth);
      obj.score(w, &g_score);
      obj.evaluate(w, &g_total);
      const auto fd_det = central_difference(w, [](const Matrix& m) { return FinetuneObjective::det_loss(m); });
      const auto fd_orth = central_difference(
          w, [&](const Matrix& m) { return FinetuneObjective::orthogonality_loss(m, p.u); });
      const auto fd_score = central_difference(w, [&](const Matrix& m) { return obj.score(m); });
      const auto fd_total = central_difference(w, [&](const Matrix& m) { return obj.evaluate(m).total; });
      CHECK(max_relative_error(g_det, fd_det, 1e-3) <= 1e-4);
      CHECK(max_relative_error(g_orth, fd_orth, 1e-3) <= 1e-4);
      CHECK(max_relative_error(g_score, fd_score, 1e-3) <= 1e-4);
      CHECK(max_relative_error(g_total, fd_total, 1e-3) <= 1e-4);
    }
  }
}

TEST_CASE("det and orthogonality losses vanish on exact rotations") {
  auto rng = rng_for(50);
  const Matrix u = standard_normal(32, 8, rng);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix w = random_rotation(8, RngSeed{s}).matrix();
    CHECK(FinetuneObjective::det_loss(w) <= 1e-10);
    CHECK(FinetuneObjective::orthogonality_loss(w, u) <= 1e-10);
  }
  Matrix reflection = Matrix::Identity(3, 3);
  reflection(0, 0) = -1;
  CHECK_THROWS_AS(FinetuneObjective::det_loss(reflection), NumericError);
}

TEST_CASE("fine-tuning from the optimum of identical Gaussian sets stays put") {
  auto rng = rng_for(51);
  // Rotate the sample onto its principal axes so its covariance is exactly
  // diagonal; the diagonal Gaussian fit then leaves W = I stationary.
  Matrix v = standard_normal(2000, 4, rng) * RowVector({{1.0, 1.5, 2.0, 2.5}}).asDiagonal();
  const Matrix centered = v.rowwise() - v.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(centered.transpose() * centered);
  v = v * eig.eigenvectors();
  const EmbeddingSet e = make_set(v, 10);
  FinetuneConfig cfg;
  cfg.gmm_components = 1;
  cfg.iterations = 100;
  const AlignmentResult r = finetune_rotation(Rotation::identity(4), e, e, cfg);
  REQUIRE(!r.loss_trace.empty());
  CHECK(r.loss_trace.front() - r.loss_trace.back() < 1e-6);
}

TEST_CASE("fine-tuning loss trace strictly decreases and output is a proper rotation") {
  WorldConfig w;
  w.users = 60;
  w.records_per_user = 10;
  w.dim = 8;
  const WorldOutput world = generate_world(w);
  FinetuneConfig cfg;
  cfg.iterations = 30;
  const Rotation start = random_rotation(8, RngSeed{52});
  const AlignmentResult r = finetune_rotation(start, world.e_attack, world.e_target, cfg);
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i) CHECK(r.loss_trace[i] < r.loss_trace[i - 1]);
  check_rotation_invariants(r.rotation);
  CHECK(r.rotation.det() > 0);
  const AlignmentResult again = finetune_rotation(start, world.e_attack, world.e_target, cfg);
  CHECK(again.rotation.matrix() == r.rotation.matrix());
}

TEST_CASE("fine-tuning preconditions") {
  const EmbeddingSet e = random_set(10, 5, 4, 53);
  FinetuneConfig cfg;
  cfg.gmm_components = 6;
  CHECK_THROWS_AS(finetune_rotation(Rotation::identity(4), e, e, cfg), ValidationError);
  cfg.gmm_components = 2;
  Matrix flip = Matrix::Identity(4, 4);
  flip(0, 0) = -1;
  CHECK_THROWS_AS(finetune_rotation(Rotation::from_matrix(flip), e, e, cfg), NumericError);
  CHECK_THROWS_AS(finetune_rotation(Rotation::identity(3), e, e, cfg), ValidationError);
}

// ---------------------------------------------------------------- Wasserstein

namespace {

WorldOutput cluster_world(int dim, double noise, std::uint64_t seed) {
  WorldConfig w;
  w.seed = RngSeed{seed};
  w.dim = dim;
  w.users = 100;
  w.records_per_user = 20;
  w.noise_scale = noise;
  w.nonlinearity = 0.0;
  return generate_world(w);
}

EmbeddingSet shuffled(const EmbeddingSet& e, std::uint64_t seed) {
  auto rng = rng_for(seed);
  return e.subset(sample_without_replacement(e.size(), e.size(), rng));
}

}  // namespace

TEST_CASE("wasserstein recovers a hidden rotation without correspondences") {
  const WorldOutput world = cluster_world(16, 0.0, 60);
  WassersteinConfig cfg;
  cfg.stages = 4;  // 128 .. 1024 within N = 2000
  const AlignmentResult r = wasserstein_procrustes(world.e_attack, shuffled(world.e_target, 61), cfg);
  const Matrix truth = world.e_attack.vectors() * world.hidden_rotation.matrix();
  const Matrix aligned = world.e_attack.vectors() * r.rotation.matrix();
  double mean = 0.0;
  for (Index i = 0; i < truth.rows(); ++i)
    mean += aligned.row(i).dot(truth.row(i)) / (aligned.row(i).norm() * truth.row(i).norm());
  mean /= static_cast<double>(truth.rows());
  CHECK(mean >= 0.999);
  check_rotation_invariants(r.rotation);
  REQUIRE(r.loss_trace.size() == 5);
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i)
    CHECK(r.loss_trace[i] <= 1.05 * r.loss_trace[i - 1]);
}

TEST_CASE("wasserstein rejects a schedule larger than the data") {
  const EmbeddingSet e = random_set(20, 5, 4, 62);
  WassersteinConfig cfg;
  CHECK_THROWS_AS(wasserstein_procrustes(e, e, cfg), ValidationError);
  cfg.initial_batch = 16;
  cfg.stages = 4;  // last batch 128 > 100
  CHECK_THROWS_AS(wasserstein_procrustes(e, e, cfg), ValidationError);
}

TEST_CASE("wasserstein is bitwise deterministic under a seed") {
  const WorldOutput world = cluster_world(8, 0.3, 63);
  WassersteinConfig cfg;
  cfg.initial_batch = 64;
  cfg.stages = 3;
  cfg.epochs_per_stage = 10;
  cfg.seed = RngSeed{5};
  const EmbeddingSet y = shuffled(world.e_target, 64);
  const AlignmentResult a = wasserstein_procrustes(world.e_attack, y, cfg);
  const AlignmentResult b = wasserstein_procrustes(world.e_attack, y, cfg);
  CHECK(a.rotation.matrix() == b.rotation.matrix());
  CHECK(a.loss_trace == b.loss_trace);
}

TEST_CASE("wasserstein with Sinkhorn matching and fixed initializations") {
  const WorldOutput world = cluster_world(8, 0.1, 65);
  const EmbeddingSet y = shuffled(world.e_target, 66);
  WassersteinConfig cfg;
  cfg.initial_batch = 64;
  cfg.stages = 2;
  cfg.epochs_per_stage = 10;
  cfg.ot_mode = OtMode::kSinkhorn;
  for (auto init : {WassersteinInit::kIdentity, WassersteinInit::kMoments, WassersteinInit::kCluster}) {
    cfg.init = init;
    const AlignmentResult r = wasserstein_procrustes(world.e_attack, y, cfg);
    check_rotation_invariants(r.rotation);
    CHECK(r.loss_trace.size() == 3);
  }
  CHECK(parse_ot_mode(to_string(OtMode::kExact)) == OtMode::kExact);
  CHECK(parse_wasserstein_init("moments") == WassersteinInit::kMoments);
  CHECK_THROWS_AS(parse_ot_mode("fast"), ValidationError);
}

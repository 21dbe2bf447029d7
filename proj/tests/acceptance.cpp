// tests/acceptance.cpp

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

// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance            run criteria 1-9
//   acceptance 1 5 6      run the listed criteria only
//
// Exit status is the number of failed criteria.

#include "helpers.hpp"
#include "oracles.hpp"

#include "embalign/alignment.hpp"
#include "embalign/experiment.hpp"
#include "embalign/gmm.hpp"
#include "embalign/metrics.hpp"
#include "embalign/serialize.hpp"
#include "embalign/synth.hpp"
#include "embalign/transport.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <unistd.h>

using namespace embalign;
using namespace embalign::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Outcome procrustes_recovery() {
  auto rng = rng_for(1);
  const Matrix x = standard_normal(512, 64, rng);
  const Rotation q = random_rotation(64, RngSeed{1}.derive("q"));
  const Matrix y = x * q.matrix();
  const auto t0 = Clock::now();
  const AlignmentResult r = orthogonal_procrustes(x, y);
  const double secs = seconds_since(t0);
  const double err = (r.rotation.matrix() - q.matrix()).norm();
  return {err <= 1e-8 && secs < 1.0, fmt("||W-Q||_F=%.3g, %.3fs", err, secs)};
}

Outcome wasserstein_recovery() {
  WorldConfig w;
  w.seed = RngSeed{2};
  w.dim = 32;
  w.users = 100;
  w.records_per_user = 20;
  w.classes = 10;
  w.noise_scale = 0.01;
  w.nonlinearity = 0.0;
  const WorldOutput world = generate_world(w);
  auto rng = rng_for(3);
  const EmbeddingSet target = world.e_target.subset(
      sample_without_replacement(world.e_target.size(), world.e_target.size(), rng));

  WassersteinConfig cfg;
  cfg.seed = RngSeed{2}.derive("wasserstein");
  cfg.stages = 4;  // batches 128 .. 1024 within 2000 rows
  const auto t0 = Clock::now();
  const AlignmentResult r = wasserstein_procrustes(world.e_attack, target, cfg);
  const double secs = seconds_since(t0);

  const Matrix truth = world.e_attack.vectors() * world.hidden_rotation.matrix();
  const Matrix aligned = world.e_attack.vectors() * r.rotation.matrix();
  const double mean = row_cosines(aligned, truth).mean();
  return {mean >= 0.95 && secs < 300.0, fmt("mean cosine %.4f, %.1fs", mean, secs)};
}

struct GridRun {
  std::string json;
  ExperimentResult result;
  double seconds = 0.0;
};

GridRun run_grid(const ExperimentSpec& spec) {
  const auto t0 = Clock::now();
  GridRun g;
  g.result = run_experiment(spec);
  g.seconds = seconds_since(t0);
  const auto path = std::filesystem::temp_directory_path() /
                    ("embalign_acceptance_" + std::to_string(::getpid()) + ".json");
  write_json(path, experiment_to_json(spec, g.result));
  std::ifstream in(path, std::ios::binary);
  g.json.assign(std::istreambuf_iterator<char>(in), {});
  std::filesystem::remove(path);
  return g;
}

std::optional<GridRun> first_grid;

const GridRun& default_grid() {
  if (!first_grid) first_grid = run_grid(ExperimentSpec{});
  return *first_grid;
}

Outcome method_ordering() {
  const GridRun& g = default_grid();
  if (g.result.failed_stage) return {false, "stage " + *g.result.failed_stage + " failed: " +
                                                g.result.error.value_or("")};
  std::ostringstream d;
  for (const auto& o : g.result.outcomes)
    d << o.report.method << '=' << fmt("%.4f", o.report.sfar_at("EER").value_or(-1.0)) << ' ';
  for (const auto& f : g.result.ordering.failures) d << "[" << f << "] ";
  d << fmt("%.1fs", g.seconds);
  return {g.result.ordering.passed && g.seconds < 900.0, d.str()};
}

double oracle_sfar(double nonlinearity) {
  ExperimentSpec spec;
  spec.methods = {"oracle"};
  spec.world.nonlinearity = nonlinearity;
  const ExperimentResult r = run_experiment(spec);
  if (r.failed_stage || r.outcomes.empty()) throw NumericError("oracle run failed");
  return r.outcomes.front().report.sfar_at("EER").value_or(-1.0);
}

Outcome oracle_gap() {
  const double linear = oracle_sfar(0.0);
  const double bent = oracle_sfar(0.5);
  return {linear - bent >= 0.15,
          fmt("sFAR_EER %.4f at nonlinearity 0, %.4f at 0.5, gap %.4f", linear, bent,
              linear - bent)};
}

Outcome gmm_oracle() {
  auto rng = rng_for(5);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Index k = 1 + t % 3;
    const Index d = 1 + (t / 3) % 4;
    const GmmModel g = random_gmm(k, d, rng);
    const RowVector y = standard_normal(1, d, rng) * 2.0;
    worst = std::max(worst, std::abs(gmm_loglik(y, g) - naive_loglik(y, g)));
  }
  return {worst <= 1e-9, fmt("max |diff| %.3g over 100 models", worst)};
}

Outcome eer_oracle() {
  auto rng = rng_for(7);
  int mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    const TrialScores s = seeded_score_set(t, rng);
    const EerResult fast = compute_eer(s);
    const EerResult slow = brute_force_eer(s);
    if (fast.eer != slow.eer || fast.threshold != slow.threshold || fast.far != slow.far ||
        fast.frr != slow.frr)
      ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 100 sets differ"};
}

Outcome gradient_checks() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto rng = rng_for(20 + s);
    Matrix source = standard_normal(60, 8, rng);
    source.topRows(30).rowwise() += RowVector::Constant(8, 2.0);
    Matrix dest = standard_normal(50, 8, rng) * 1.3;
    dest.topRows(25).rowwise() -= RowVector::Constant(8, 1.5);
    const Matrix u = standard_normal(16, 8, rng);
    const GmmModel gs = fit_gmm(source, 2, RngSeed{20 + s});
    const GmmModel gd = fit_gmm(dest, 2, RngSeed{21 + s});
    const Matrix w = random_rotation(8, RngSeed{s}).matrix() * 1.05 + standard_normal(8, 8, rng) * 0.05;
    if (w.determinant() <= 0) return {false, "perturbed start has det <= 0"};
    for (bool use_min : {false, true}) {
      const FinetuneObjective obj(source, dest, gs, gd, u, use_min);
      Matrix g_det, g_orth, g_score, g_total;
      FinetuneObjective::det_loss(w, &g_det);
      FinetuneObjective::orthogonality_loss(w, u, &g_orth);
      obj.score(w, &g_score);
      obj.evaluate(w, &g_total);
      worst = std::max({worst,
          max_relative_error(g_det, central_difference(w, [](const Matrix& m) {
            return FinetuneObjective::det_loss(m); }), 1e-3),
          max_relative_error(g_orth, central_difference(w, [&](const Matrix& m) {
            return FinetuneObjective::orthogonality_loss(m, u); }), 1e-3),
          max_relative_error(g_score, central_difference(w, [&](const Matrix& m) {
            return obj.score(m); }), 1e-3),
          max_relative_error(g_total, central_difference(w, [&](const Matrix& m) {
            return obj.evaluate(m).total; }), 1e-3)});
    }
  }
  auto rng = rng_for(50);
  const Matrix u = standard_normal(32, 8, rng);
  double zero = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix w = random_rotation(8, RngSeed{s}).matrix();
    zero = std::max({zero, FinetuneObjective::det_loss(w),
                     FinetuneObjective::orthogonality_loss(w, u)});
  }
  return {worst <= 1e-4 && zero <= 1e-10,
          fmt("max relative gradient error %.3g, max loss on rotations %.3g", worst, zero)};
}

Outcome sinkhorn_correctness() {
  double worst_marginal = 0.0, worst_gap = 0.0;
  bool all_converged = true;
  int case_id = 0;
  for (Index dim : {8, 32, 64}) {
    for (std::uint64_t s = 0; s < 2; ++s, ++case_id) {
      auto rng = rng_for(100 + static_cast<std::uint64_t>(case_id));
      const Matrix a = standard_normal(64, dim, rng);
      const Matrix b = standard_normal(64, dim, rng);
      const Matrix c = squared_euclidean_cost(a, b);
      const double exact = assignment_cost(c, exact_assignment(c)) / 64.0;
      const auto r = sinkhorn(c, 0.01 * median_entry(c), 400000, 1e-6);
      all_converged = all_converged && r.converged;
      const double rows = (r.coupling.rowwise().sum().array() - 1.0 / 64).abs().sum();
      const double cols = (r.coupling.colwise().sum().array() - 1.0 / 64).abs().sum();
      worst_marginal = std::max({worst_marginal, rows, cols});
      worst_gap = std::max(worst_gap, std::abs(r.cost - exact) / exact);
    }
  }
  return {all_converged && worst_marginal <= 1e-6 && worst_gap <= 0.01,
          fmt("max marginal violation %.3g, max relative cost gap %.4f", worst_marginal,
              worst_gap) + (all_converged ? "" : ", not converged")};
}

Outcome determinism() {
  const GridRun& a = default_grid();
  const GridRun b = run_grid(ExperimentSpec{});
  const bool same = a.json == b.json;
  return {same && !a.json.empty(),
          std::string(same ? "identical" : "different") + fmt(" (%.0f bytes)",
                                                               static_cast<double>(a.json.size()))};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "procrustes exact recovery", procrustes_recovery},
      {2, "wasserstein unsupervised recovery", wasserstein_recovery},
      {3, "method ordering on the default world", method_ordering},
      {4, "oracle gap under nonlinearity", oracle_gap},
      {5, "gmm scoring oracle", gmm_oracle},
      {6, "eer oracle", eer_oracle},
      {7, "gradient checks", gradient_checks},
      {8, "sinkhorn correctness", sinkhorn_correctness},
      {9, "grid determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d: %s  %s  (%s)\n", c.id, o.pass ? "PASS" : "FAIL", c.name,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed;
}

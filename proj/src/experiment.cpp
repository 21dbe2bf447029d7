// src/experiment.cpp

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

#include "embalign/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace embalign {

void ExperimentSpec::validate() const {
  if (methods.empty()) throw ValidationError("experiment: method list is empty");
  for (const auto& m : methods)
    if (std::find(kExperimentMethods.begin(), kExperimentMethods.end(), m) ==
        kExperimentMethods.end())
      throw ValidationError("experiment: unknown method '" + m + "'");
  if (!(align_fraction > 0.0 && align_fraction < 1.0))
    throw ValidationError("experiment: align_fraction must be in (0, 1)");
  world.validate();
}

ExperimentSpec resolve_seeds(ExperimentSpec spec) {
  spec.world.seed = spec.seed;
  spec.wasserstein.seed = spec.seed.derive("align/wasserstein");
  spec.finetune.seed = spec.seed.derive("align/finetune");
  return spec;
}

OrderingCheck check_ordering(const std::vector<MethodOutcome>& outcomes) {
  OrderingCheck check;
  std::map<std::string, double> sfar;
  for (const auto& o : outcomes)
    if (auto v = o.report.sfar_at("EER")) sfar[o.alignment.method] = *v;
  auto fail = [&](const std::string& msg) {
    check.passed = false;
    check.failures.push_back(msg);
  };
  char buf[160];
  std::string prev;
  for (const auto& m : kExperimentMethods) {
    if (!sfar.count(m)) continue;
    if (!prev.empty()) {
      const bool strict = prev == "identity";
      const bool ok = strict ? sfar[prev] < sfar[m] : sfar[prev] <= sfar[m];
      if (!ok) {
        std::snprintf(buf, sizeof(buf), "%s (%.4f) %s %s (%.4f) violated", prev.c_str(),
                      sfar[prev], strict ? "<" : "<=", m.c_str(), sfar[m]);
        fail(buf);
      }
    }
    prev = m;
  }
  if (sfar.count("identity") && !(sfar["identity"] < 0.10)) {
    std::snprintf(buf, sizeof(buf), "identity sFAR_EER %.4f is not < 0.10", sfar["identity"]);
    fail(buf);
  }
  if (sfar.count("oracle") && !(sfar["oracle"] > 0.60)) {
    std::snprintf(buf, sizeof(buf), "oracle sFAR_EER %.4f is not > 0.60", sfar["oracle"]);
    fail(buf);
  }
  return check;
}

ExperimentResult run_experiment(const ExperimentSpec& input, const ProgressFn& progress) {
  const ExperimentSpec spec = resolve_seeds(input);
  spec.validate();
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };

  ExperimentResult result;
  std::string stage = "synth";
  try {
    say("generating world");
    const WorldOutput world = generate_world(spec.world);

    stage = "split";
    const auto parts = split_disjoint(world.e_attack.distinct_users(),
                                      {spec.align_fraction, 1.0 - spec.align_fraction},
                                      spec.seed.derive("experiment/split"));
    const auto align_rows = rows_of_users(world.e_attack, parts[0]);
    const auto eval_rows = rows_of_users(world.e_attack, parts[1]);
    const EmbeddingSet x = world.e_attack.subset(align_rows);
    const EmbeddingSet y_paired = world.e_target.subset(align_rows);
    auto rng = spec.seed.derive("experiment/shuffle").engine();
    const auto perm = sample_without_replacement(y_paired.size(), y_paired.size(), rng);
    const EmbeddingSet y = y_paired.subset(perm);
    const EmbeddingSet target = world.e_target.subset(eval_rows);
    const EmbeddingSet attack = world.e_attack.subset(eval_rows);

    std::optional<AlignmentResult> cluster;
    auto get_cluster = [&]() -> const AlignmentResult& {
      if (!cluster) cluster = cluster_center_procrustes(x, y);
      return *cluster;
    };

    for (const auto& method : spec.methods) {
      stage = method;
      say("aligning: " + method);
      MethodOutcome out;
      out.config = Json::object();
      if (method == "identity") {
        out.alignment.method = "identity";
        out.alignment.rotation = Rotation::identity(x.dim());
      } else if (method == "procrustes-cluster") {
        out.alignment = get_cluster();
      } else if (method == "procrustes-cluster+finetune") {
        Rotation w0 = get_cluster().rotation;
        std::string init = "procrustes-cluster";
        if (!(w0.det() > 0.0)) {
          ProcrustesOptions proper;
          proper.proper_rotation = true;
          w0 = cluster_center_procrustes(x, y, {}, proper).rotation;
          init = "procrustes-cluster (proper rotation)";
        }
        out.alignment = finetune_rotation(w0, x, y, spec.finetune);
        out.alignment.init = init;
        out.config = to_json(spec.finetune);
      } else if (method == "wasserstein") {
        out.alignment = wasserstein_procrustes(x, y, spec.wasserstein);
        out.config = to_json(spec.wasserstein);
      } else if (method == "oracle") {
        out.alignment = oracle_procrustes(x, y_paired);
      }
      out.alignment.method = method;

      stage = method + " (evaluation)";
      say("evaluating: " + method);
      out.report = evaluate_attack(target, out.alignment.rotation, attack, spec.eval, method);
      out.report.oracle = out.alignment.oracle;
      out.report.underdetermined = out.alignment.underdetermined;
      result.outcomes.push_back(std::move(out));
    }
  } catch (const std::exception& e) {
    result.failed_stage = stage;
    result.error = e.what();
  }
  result.ordering = check_ordering(result.outcomes);
  return result;
}

Json spec_to_json(const ExperimentSpec& input) {
  const ExperimentSpec spec = resolve_seeds(input);
  Json j;
  j["seed"] = spec.seed.value;
  j["world"] = to_json(spec.world);
  j["methods"] = spec.methods;
  j["align_fraction"] = spec.align_fraction;
  j["eval"] = to_json(spec.eval);
  j["wasserstein"] = to_json(spec.wasserstein);
  j["finetune"] = to_json(spec.finetune);
  return j;
}

ExperimentSpec spec_from_json(const Json& j, ExperimentSpec base) {
  if (!j.is_object()) throw ValidationError("experiment spec must be a JSON object");
  if (j.contains("seed")) base.seed.value = j.at("seed").get<std::uint64_t>();
  if (j.contains("world")) base.world = world_config_from_json(j.at("world"), base.world);
  if (j.contains("methods")) base.methods = j.at("methods").get<std::vector<std::string>>();
  if (j.contains("align_fraction")) base.align_fraction = j.at("align_fraction").get<double>();
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    if (e.contains("pooling")) base.eval.pooling = parse_pooling(e.at("pooling").get<std::string>());
    if (e.contains("far_levels")) base.eval.far_levels = e.at("far_levels").get<std::vector<double>>();
  }
  if (j.contains("wasserstein")) {
    const auto& w = j.at("wasserstein");
    auto& c = base.wasserstein;
    if (w.contains("initial_batch")) c.initial_batch = w.at("initial_batch").get<int>();
    if (w.contains("batch_growth_factor")) c.batch_growth_factor = w.at("batch_growth_factor").get<double>();
    if (w.contains("epochs_per_stage")) c.epochs_per_stage = w.at("epochs_per_stage").get<int>();
    if (w.contains("stages")) c.stages = w.at("stages").get<int>();
    if (w.contains("learning_rate")) c.learning_rate = w.at("learning_rate").get<double>();
    if (w.contains("ot_mode")) c.ot_mode = parse_ot_mode(w.at("ot_mode").get<std::string>());
    if (w.contains("exact_max_batch")) c.exact_max_batch = w.at("exact_max_batch").get<int>();
    if (w.contains("sinkhorn_reg_ratio")) c.sinkhorn_reg_ratio = w.at("sinkhorn_reg_ratio").get<double>();
    if (w.contains("sinkhorn_max_iters")) c.sinkhorn_max_iters = w.at("sinkhorn_max_iters").get<int>();
    if (w.contains("sinkhorn_tol")) c.sinkhorn_tol = w.at("sinkhorn_tol").get<double>();
    if (w.contains("init")) c.init = parse_wasserstein_init(w.at("init").get<std::string>());
    if (w.contains("eval_sample")) c.eval_sample = w.at("eval_sample").get<int>();
  }
  if (j.contains("finetune")) {
    const auto& f = j.at("finetune");
    auto& c = base.finetune;
    if (f.contains("iterations")) c.iterations = f.at("iterations").get<int>();
    if (f.contains("learning_rate")) c.learning_rate = f.at("learning_rate").get<double>();
    if (f.contains("gmm_components")) c.gmm_components = f.at("gmm_components").get<int>();
    if (f.contains("orth_batch")) c.orth_batch = f.at("orth_batch").get<int>();
    if (f.contains("symmetric")) {
      const auto s = f.at("symmetric").get<std::string>();
      if (s != "min" && s != "max") throw ValidationError("finetune.symmetric must be min or max");
      c.symmetric_min = s == "min";
    }
    if (f.contains("max_halvings")) c.max_halvings = f.at("max_halvings").get<int>();
    if (f.contains("gmm_max_iters")) c.gmm_max_iters = f.at("gmm_max_iters").get<int>();
  }
  return base;
}

Json experiment_to_json(const ExperimentSpec& spec, const ExperimentResult& result) {
  Json j;
  j["spec"] = spec_to_json(spec);
  Json rows = Json::array();
  for (const auto& o : result.outcomes) {
    Json row;
    row["report"] = report_to_json(o.report);
    row["alignment"] = alignment_to_json(o.alignment, o.config);
    rows.push_back(row);
  }
  j["results"] = rows;
  Json ordering;
  ordering["passed"] = result.ordering.passed;
  ordering["failures"] = result.ordering.failures;
  j["ordering_check"] = ordering;
  j["failed_stage"] = result.failed_stage ? Json(*result.failed_stage) : Json(nullptr);
  j["error"] = result.error ? Json(*result.error) : Json(nullptr);
  return j;
}

}  // namespace embalign

// include/embalign/experiment.hpp

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

#include "embalign/alignment.hpp"
#include "embalign/metrics.hpp"
#include "embalign/serialize.hpp"
#include "embalign/synth.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace embalign {

inline const std::vector<std::string> kExperimentMethods = {
    "identity", "procrustes-cluster", "procrustes-cluster+finetune", "wasserstein", "oracle"};

/// One seeded world, a user-disjoint split into an alignment population and
/// held-out evaluation users, and every requested method run on it.
///
/// Unsupervised methods see e_attack and a row-shuffled e_target of the
/// alignment users; the oracle sees the same rows paired. All attacks are
/// scored on the evaluation users.
struct ExperimentSpec {
  RngSeed seed{0};
  WorldConfig world;
  std::vector<std::string> methods = kExperimentMethods;
  double align_fraction = 0.5;
  EvalConfig eval;
  WassersteinConfig wasserstein;
  FinetuneConfig finetune;

  void validate() const;
};

/// Seeds of every stage, fanned out from spec.seed.
ExperimentSpec resolve_seeds(ExperimentSpec spec);

struct MethodOutcome {
  AlignmentResult alignment;
  AttackReport report;
  Json config;
};

struct OrderingCheck {
  bool passed = true;
  std::vector<std::string> failures;
};

struct ExperimentResult {
  std::vector<MethodOutcome> outcomes;
  OrderingCheck ordering;
  /// Set when a stage threw; outcomes hold the methods that finished.
  std::optional<std::string> failed_stage;
  std::optional<std::string> error;
};

using ProgressFn = std::function<void(const std::string&)>;

ExperimentResult run_experiment(const ExperimentSpec& spec, const ProgressFn& progress = {});

/// identity < cluster <= finetune <= wasserstein <= oracle on sFAR_EER over
/// the methods present, identity < 0.10 and oracle > 0.60.
OrderingCheck check_ordering(const std::vector<MethodOutcome>& outcomes);

Json spec_to_json(const ExperimentSpec& spec);
/// Fields present in j override `base`.
ExperimentSpec spec_from_json(const Json& j, ExperimentSpec base = {});
Json experiment_to_json(const ExperimentSpec& spec, const ExperimentResult& result);

}  // namespace embalign

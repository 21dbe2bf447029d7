// tools/embalign.cpp

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

// embalign: generate synthetic two-encoder worlds, align embedding spaces,
// and score the resulting spoofing attack.
//
// Exit codes: 0 success, 1 environment or I/O failure, 2 usage or validation.

#include "embalign/alignment.hpp"
#include "embalign/embedding_io.hpp"
#include "embalign/experiment.hpp"
#include "embalign/gmm.hpp"
#include "embalign/metrics.hpp"
#include "embalign/serialize.hpp"
#include "embalign/synth.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace embalign;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string format = "csv";
  bool table = false;
};

// Optional overrides for the world generator, shared by synth and experiment.
struct WorldFlags {
  std::optional<int> users, records_per_user, dim, classes, residual_rank;
  std::optional<double> class_scale, user_scale, noise_scale, nonlinearity, residual_gain,
      anisotropy;

  void add(CLI::App* app) {
    app->add_option("--users", users, "Number of users (>= 2)");
    app->add_option("--records-per-user", records_per_user, "Records per user (>= 2)");
    app->add_option("--dim", dim, "Embedding dimension");
    app->add_option("--classes", classes, "Number of classes; 0 for unlabeled users");
    app->add_option("--class-scale", class_scale, "Std of class centers");
    app->add_option("--user-scale", user_scale, "Std of user offsets within a class");
    app->add_option("--noise-scale", noise_scale, "Std of target-side noise");
    app->add_option("--nonlinearity", nonlinearity, "Residual field magnitude in [0, 1]");
    app->add_option("--residual-rank", residual_rank, "Rank of the quadratic residual field");
    app->add_option("--residual-gain", residual_gain, "Residual gain per unit nonlinearity");
    app->add_option("--anisotropy", anisotropy, "Std ratio between the widest and narrowest dimension");
  }

  void apply(WorldConfig& c) const {
    if (users) c.users = *users;
    if (records_per_user) c.records_per_user = *records_per_user;
    if (dim) c.dim = *dim;
    if (classes) c.classes = *classes > 0 ? std::optional<int>(*classes) : std::nullopt;
    if (class_scale) c.class_scale = *class_scale;
    if (user_scale) c.user_scale = *user_scale;
    if (noise_scale) c.noise_scale = *noise_scale;
    if (nonlinearity) c.nonlinearity = *nonlinearity;
    if (residual_rank) c.residual_rank = *residual_rank;
    if (residual_gain) c.residual_gain = *residual_gain;
    if (anisotropy) c.anisotropy = *anisotropy;
  }
};

struct WassersteinFlags {
  std::optional<int> initial_batch, epochs, stages, exact_max_batch, sinkhorn_max_iters,
      eval_sample;
  std::optional<double> growth, lr, sinkhorn_reg_ratio;
  std::optional<std::string> ot_mode, init;

  void add(CLI::App* app) {
    app->add_option("--initial-batch", initial_batch, "Wasserstein: first batch size");
    app->add_option("--growth", growth, "Wasserstein: batch growth factor per stage");
    app->add_option("--epochs", epochs, "Wasserstein: epochs per stage");
    app->add_option("--stages", stages, "Wasserstein: number of stages");
    app->add_option("--wass-lr", lr, "Wasserstein: learning rate");
    app->add_option("--ot-mode", ot_mode, "Wasserstein: auto, exact or sinkhorn");
    app->add_option("--exact-max-batch", exact_max_batch,
                    "Wasserstein: largest batch matched exactly in auto mode");
    app->add_option("--sinkhorn-reg", sinkhorn_reg_ratio,
                    "Wasserstein: Sinkhorn reg as a fraction of the median cost");
    app->add_option("--sinkhorn-max-iters", sinkhorn_max_iters, "Wasserstein: Sinkhorn iteration cap");
    app->add_option("--init", init, "Wasserstein: auto, identity, moments or cluster");
    app->add_option("--eval-sample", eval_sample, "Wasserstein: rows for stage-end cost");
  }

  void apply(WassersteinConfig& c) const {
    if (initial_batch) c.initial_batch = *initial_batch;
    if (growth) c.batch_growth_factor = *growth;
    if (epochs) c.epochs_per_stage = *epochs;
    if (stages) c.stages = *stages;
    if (lr) c.learning_rate = *lr;
    if (ot_mode) c.ot_mode = parse_ot_mode(*ot_mode);
    if (exact_max_batch) c.exact_max_batch = *exact_max_batch;
    if (sinkhorn_reg_ratio) c.sinkhorn_reg_ratio = *sinkhorn_reg_ratio;
    if (sinkhorn_max_iters) c.sinkhorn_max_iters = *sinkhorn_max_iters;
    if (init) c.init = parse_wasserstein_init(*init);
    if (eval_sample) c.eval_sample = *eval_sample;
  }
};

struct FinetuneFlags {
  std::optional<int> iterations, components, orth_batch, halvings;
  std::optional<double> lr;
  bool symmetric_min = false;

  void add(CLI::App* app) {
    app->add_option("--ft-iterations", iterations, "Fine-tune: gradient steps");
    app->add_option("--ft-lr", lr, "Fine-tune: learning rate");
    app->add_option("--gmm-components", components, "Fine-tune: GMM components per set");
    app->add_option("--orth-batch", orth_batch, "Fine-tune: rows in the orthogonality batch");
    app->add_option("--max-halvings", halvings, "Fine-tune: step halvings before giving up");
    app->add_flag("--symmetric-min", symmetric_min,
                  "Fine-tune: combine the two directional scores by min instead of max");
  }

  void apply(FinetuneConfig& c) const {
    if (iterations) c.iterations = *iterations;
    if (lr) c.learning_rate = *lr;
    if (components) c.gmm_components = *components;
    if (orth_batch) c.orth_batch = *orth_batch;
    if (halvings) c.max_halvings = *halvings;
    if (symmetric_min) c.symmetric_min = true;
  }
};

fs::path out_path(const GlobalOptions& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<Index> read_pairing(const fs::path& path, Index expected) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("attack_row,target_row", 0) != 0)
    throw ValidationError(path.string() + ": pairing header must be attack_row,target_row");
  std::vector<Index> pairing(static_cast<std::size_t>(expected), -1);
  std::vector<char> used(static_cast<std::size_t>(expected), 0);
  Index count = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    long long a = 0;
    long long t = 0;
    char comma = 0;
    std::istringstream row(line);
    if (!(row >> a >> comma >> t) || comma != ',')
      throw ValidationError(path.string() + ": malformed pairing line '" + line + "'");
    if (a < 0 || a >= expected || t < 0 || t >= expected || pairing[static_cast<std::size_t>(a)] >= 0 ||
        used[static_cast<std::size_t>(t)])
      throw ValidationError(path.string() + ": pairing is not a bijection over " +
                            std::to_string(expected) + " rows");
    pairing[static_cast<std::size_t>(a)] = t;
    used[static_cast<std::size_t>(t)] = 1;
    ++count;
  }
  if (count != expected)
    throw ValidationError(path.string() + ": pairing covers " + std::to_string(count) + " of " +
                          std::to_string(expected) + " rows");
  return pairing;
}

void write_pairing(const fs::path& path, const std::vector<Index>& pairing) {
  std::ostringstream out;
  out << "attack_row,target_row\n";
  for (std::size_t i = 0; i < pairing.size(); ++i) out << i << ',' << pairing[i] << '\n';
  write_text(path, out.str());
}

// Attack rows reordered so that row k pairs with target row k.
EmbeddingSet align_rows(const EmbeddingSet& attack, const std::vector<Index>& pairing) {
  std::vector<Index> order(pairing.size());
  for (std::size_t i = 0; i < pairing.size(); ++i)
    order[static_cast<std::size_t>(pairing[i])] = static_cast<Index>(i);
  return attack.subset(order);
}

void print_table(const std::vector<AttackReport>& reports) { std::cout << render_table(reports); }

// ---------------------------------------------------------------------------

int cmd_synth(const GlobalOptions& g, const WorldFlags& flags) {
  WorldConfig cfg;
  flags.apply(cfg);
  cfg.seed = RngSeed{g.seed};
  const auto format = parse_format(g.format);
  const WorldOutput world = generate_world(cfg);

  const std::string ext = format_extension(format);
  write_embeddings(out_path(g, "e_attack" + ext), world.e_attack, format);
  write_embeddings(out_path(g, "e_target" + ext), world.e_target, format);
  AlignmentResult hidden;
  hidden.method = "hidden";
  hidden.rotation = world.hidden_rotation;
  write_json(out_path(g, "hidden_rotation.json"), alignment_to_json(hidden));
  write_pairing(out_path(g, "pairing.csv"), world.pairing);

  Json manifest;
  manifest["config"] = to_json(cfg);
  manifest["records"] = world.e_attack.size();
  manifest["residual_scale"] = world.residual_scale;
  Json files;
  files["e_attack"] = "e_attack" + ext;
  files["e_target"] = "e_target" + ext;
  files["hidden_rotation"] = "hidden_rotation.json";
  files["pairing"] = "pairing.csv";
  manifest["files"] = files;
  write_json(out_path(g, "world.json"), manifest);
  std::cout << "synth: " << world.e_attack.size() << " records, D=" << cfg.dim << ", written to "
            << g.out_dir << '\n';
  return kExitOk;
}

struct AlignArgs {
  std::string method;
  std::string source;
  std::string target;
  std::string pairing;
  std::string init_rotation;
  std::string output;
  bool proper_rotation = false;
  WassersteinFlags wass;
  FinetuneFlags ft;
};

int cmd_align(const GlobalOptions& g, const AlignArgs& a) {
  const RngSeed root{g.seed};
  const EmbeddingSet source = read_embeddings(a.source);
  const EmbeddingSet target = read_embeddings(a.target);
  if (source.dim() != target.dim())
    throw ValidationError("source has D=" + std::to_string(source.dim()) + ", target has D=" +
                          std::to_string(target.dim()));
  ProcrustesOptions popt;
  popt.proper_rotation = a.proper_rotation;

  Json config;
  config["source"] = a.source;
  config["target"] = a.target;
  config["seed"] = g.seed;
  config["proper_rotation"] = a.proper_rotation;

  auto paired_target = [&]() {
    if (a.pairing.empty()) throw ValidationError(a.method + " requires --pairing");
    if (source.size() != target.size())
      throw ValidationError("paired sets must have equal record counts");
    config["pairing"] = a.pairing;
    // Target rows reordered so that row i pairs with source row i.
    const auto p = read_pairing(a.pairing, source.size());
    return target.subset(p);
  };

  AlignmentResult r;
  if (a.method == "identity") {
    r.method = "identity";
    r.rotation = Rotation::identity(source.dim());
  } else if (a.method == "procrustes") {
    r = orthogonal_procrustes(source, a.pairing.empty() ? target : paired_target(), popt);
  } else if (a.method == "oracle") {
    r = oracle_procrustes(source, paired_target(), popt);
  } else if (a.method == "procrustes-cluster") {
    if (!source.fully_labeled() || !target.fully_labeled())
      throw ValidationError("procrustes-cluster needs class labels; missing in " +
                            std::string(!source.fully_labeled() ? a.source : a.target));
    r = cluster_center_procrustes(source, target, {}, popt);
  } else if (a.method == "finetune" || a.method == "procrustes-cluster+finetune") {
    FinetuneConfig cfg;
    a.ft.apply(cfg);
    cfg.seed = root.derive("align/finetune");
    Rotation w0 = Rotation::identity(source.dim());
    std::string init = "identity";
    if (!a.init_rotation.empty()) {
      w0 = alignment_from_json(read_json(a.init_rotation)).rotation;
      init = a.init_rotation;
    } else if (a.method == "procrustes-cluster+finetune") {
      ProcrustesOptions proper;
      proper.proper_rotation = true;
      w0 = cluster_center_procrustes(source, target, {}, proper).rotation;
      init = "procrustes-cluster";
    }
    r = finetune_rotation(w0, source, target, cfg);
    r.init = init;
    config["finetune"] = to_json(cfg);
  } else if (a.method == "wasserstein") {
    WassersteinConfig cfg;
    a.wass.apply(cfg);
    cfg.seed = root.derive("align/wasserstein");
    r = wasserstein_procrustes(source, target, cfg);
    config["wasserstein"] = to_json(cfg);
  } else {
    throw ValidationError("unknown method '" + a.method + "'");
  }
  r.method = a.method;

  const fs::path path = a.output.empty() ? out_path(g, "alignment_" + a.method + ".json")
                                         : fs::path(a.output);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_json(path, alignment_to_json(r, config));
  char line[256];
  const std::string loss = r.loss_trace.empty() ? "n/a" : std::to_string(r.loss_trace.back());
  std::snprintf(line, sizeof(line), "align: method=%s final_loss=%s orthogonality_error=%.3e det=%.6f%s",
                r.method.c_str(), loss.c_str(), r.rotation.orthogonality_error(), r.rotation.det(),
                r.underdetermined ? " underdetermined" : "");
  std::cout << line << '\n';
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string target;
  std::string attack;
  std::string rotation;
  std::string pairing;
  std::string output;
  std::string pooling = "per-record";
};

int cmd_eval(const GlobalOptions& g, const EvalArgs& a) {
  const EmbeddingSet target = read_embeddings(a.target);
  const AlignmentResult alignment = alignment_from_json(read_json(a.rotation));
  if (alignment.rotation.dim() != target.dim())
    throw ValidationError("rotation has D=" + std::to_string(alignment.rotation.dim()) +
                          ", target embeddings have D=" + std::to_string(target.dim()));
  std::optional<EmbeddingSet> attack;
  if (!a.attack.empty()) {
    EmbeddingSet raw = read_embeddings(a.attack);
    if (raw.dim() != target.dim())
      throw ValidationError("attack embeddings have D=" + std::to_string(raw.dim()) +
                            ", target embeddings have D=" + std::to_string(target.dim()));
    if (!a.pairing.empty()) raw = align_rows(raw, read_pairing(a.pairing, raw.size()));
    attack = std::move(raw);
  }
  EvalConfig cfg;
  cfg.pooling = parse_pooling(a.pooling);
  AttackReport report = evaluate_attack(target, alignment.rotation, attack, cfg, alignment.method);
  report.oracle = alignment.oracle;
  report.underdetermined = alignment.underdetermined;

  Json j = report_to_json(report);
  Json config = to_json(cfg);
  config["target"] = a.target;
  config["attack"] = a.attack.empty() ? Json(nullptr) : Json(a.attack);
  config["rotation"] = a.rotation;
  config["pairing"] = a.pairing.empty() ? Json(nullptr) : Json(a.pairing);
  j["config"] = config;
  const fs::path path = a.output.empty() ? out_path(g, "report.json") : fs::path(a.output);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_json(path, j);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  if (g.table) print_table({report});
  return kExitOk;
}

struct ExperimentArgs {
  std::string spec_file;
  std::vector<std::string> methods;
  std::optional<double> align_fraction;
  bool require_ordering = false;
  WorldFlags world;
  WassersteinFlags wass;
  FinetuneFlags ft;
};

int cmd_experiment(const GlobalOptions& g, const ExperimentArgs& a, bool seed_given) {
  ExperimentSpec spec;
  if (!a.spec_file.empty()) spec = spec_from_json(read_json(a.spec_file), spec);
  if (seed_given || a.spec_file.empty()) spec.seed = RngSeed{g.seed};
  a.world.apply(spec.world);
  a.wass.apply(spec.wasserstein);
  a.ft.apply(spec.finetune);
  if (!a.methods.empty()) spec.methods = a.methods;
  if (a.align_fraction) spec.align_fraction = *a.align_fraction;
  spec.validate();

  const ExperimentResult result =
      run_experiment(spec, [](const std::string& s) { std::cerr << "experiment: " << s << '\n'; });
  write_json(out_path(g, "experiment.json"), experiment_to_json(spec, result));
  std::vector<AttackReport> reports;
  for (const auto& o : result.outcomes) reports.push_back(o.report);
  const std::string table = render_table(reports);
  write_text(out_path(g, "experiment_table.txt"), table);
  std::cout << table;
  std::cout << "ordering check: " << (result.ordering.passed ? "passed" : "FAILED") << '\n';
  for (const auto& f : result.ordering.failures) std::cout << "  " << f << '\n';
  if (result.failed_stage) {
    std::cerr << "error: stage '" << *result.failed_stage << "' failed: " << *result.error << '\n';
    return kExitIo;
  }
  if (a.require_ordering && !result.ordering.passed) return kExitIo;
  return kExitOk;
}

struct GmmArgs {
  std::string input;
  int components = 0;
  int max_iters = 200;
  std::string output;
};

int cmd_gmm_fit(const GlobalOptions& g, const GmmArgs& a) {
  const EmbeddingSet set = read_embeddings(a.input);
  int k = a.components;
  if (k == 0) k = set.fully_labeled() && set.num_classes() > 0 ? 10 : 8;
  GmmFitOptions opt;
  opt.max_iters = a.max_iters;
  const GmmModel gmm = fit_gmm(set, k, RngSeed{g.seed}.derive("gmm-fit"), opt);
  const fs::path path = a.output.empty() ? out_path(g, "gmm.json") : fs::path(a.output);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_json(path, gmm_to_json(gmm));
  std::cout << "gmm-fit: K=" << k << " iterations=" << gmm.train_trace.size()
            << " mean_loglik=" << (gmm.train_trace.empty() ? 0.0 : gmm.train_trace.back()) << '\n';
  for (const auto& line : gmm.log) std::cerr << "warning: " << line << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Embedding-space alignment and spoofing evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Root seed for every stochastic stage");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_option("--format", g.format, "Embedding file format for writers")
      ->check(CLI::IsMember({"csv", "bin"}));
  app.add_flag("--table", g.table, "Print a text table of the report");

  WorldFlags synth_flags;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-encoder world");
  synth_flags.add(synth);

  AlignArgs align_args;
  auto* align = app.add_subcommand("align", "Estimate a rotation from the source to the target space");
  align->add_option("--method", align_args.method, "Alignment method")
      ->required()
      ->check(CLI::IsMember({"identity", "procrustes", "procrustes-cluster", "finetune",
                             "procrustes-cluster+finetune", "wasserstein", "oracle"}));
  align->add_option("--source", align_args.source, "Source (attack) embeddings")->required();
  align->add_option("--target", align_args.target, "Target embeddings")->required();
  align->add_option("--pairing", align_args.pairing, "Pairing CSV (attack_row,target_row)");
  align->add_option("--init-rotation", align_args.init_rotation, "Starting rotation for finetune");
  align->add_option("--output", align_args.output, "Output JSON path");
  align->add_flag("--proper-rotation", align_args.proper_rotation,
                  "Force det = +1 in Procrustes solutions");
  align_args.wass.add(align);
  align_args.ft.add(align);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Score an alignment as a spoofing attack");
  eval->add_option("--target", eval_args.target, "Target enrollment embeddings")->required();
  eval->add_option("--attack", eval_args.attack, "Attack-side embeddings of the same samples");
  eval->add_option("--rotation", eval_args.rotation, "Alignment JSON")->required();
  eval->add_option("--pairing", eval_args.pairing, "Pairing CSV when rows are not in order");
  eval->add_option("--output", eval_args.output, "Output report path");
  eval->add_option("--pooling", eval_args.pooling, "per-record or mean-per-user")
      ->check(CLI::IsMember({"per-record", "mean-per-user"}));

  ExperimentArgs exp_args;
  auto* experiment = app.add_subcommand("experiment", "Run every method on one seeded world");
  experiment->add_option("--spec", exp_args.spec_file, "Experiment spec JSON");
  experiment->add_option("--methods", exp_args.methods, "Methods in report order")
      ->delimiter(',');
  experiment->add_option("--align-fraction", exp_args.align_fraction,
                         "Share of users in the alignment population");
  experiment->add_flag("--require-ordering", exp_args.require_ordering,
                       "Exit 1 when the method ordering check fails");
  exp_args.world.add(experiment);
  exp_args.wass.add(experiment);
  exp_args.ft.add(experiment);

  GmmArgs gmm_args;
  auto* gmm = app.add_subcommand("gmm-fit", "Fit a diagonal GMM to an embedding set");
  gmm->add_option("--input", gmm_args.input, "Embedding file")->required();
  gmm->add_option("--components", gmm_args.components, "K (default 10 if labeled, else 8)");
  gmm->add_option("--max-iters", gmm_args.max_iters, "EM iteration cap");
  gmm->add_option("--output", gmm_args.output, "Output JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(g, synth_flags);
    if (*align) return cmd_align(g, align_args);
    if (*eval) return cmd_eval(g, eval_args);
    if (*experiment) {
      if (experiment->count("--methods") && exp_args.methods.empty())
        throw ValidationError("experiment: method list is empty");
      return cmd_experiment(g, exp_args, seed_opt->count() > 0);
    }
    if (*gmm) return cmd_gmm_fit(g, gmm_args);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON input: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}

// src/serialize.cpp

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

#include "embalign/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace embalign {

namespace {

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> optional_from(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

Json row_to_json(const RowVector& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

RowVector row_from_json(const Json& j) {
  RowVector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = j[i].get<double>();
  return v;
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(row_to_json(m.row(i)));
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) throw ValidationError("matrix must be a non-empty array of rows");
  const std::size_t cols = j[0].size();
  Matrix m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw ValidationError("matrix rows differ in length");
    for (std::size_t k = 0; k < cols; ++k)
      m(static_cast<Index>(i), static_cast<Index>(k)) = j[i][k].get<double>();
  }
  return m;
}

Json to_json(const WorldConfig& c) {
  Json j;
  j["seed"] = c.seed.value;
  j["users"] = c.users;
  j["records_per_user"] = c.records_per_user;
  j["dim"] = c.dim;
  j["classes"] = c.classes ? Json(*c.classes) : Json(nullptr);
  j["class_scale"] = c.class_scale;
  j["user_scale"] = c.user_scale;
  j["noise_scale"] = c.noise_scale;
  j["nonlinearity"] = c.nonlinearity;
  j["residual_rank"] = c.residual_rank;
  j["residual_gain"] = c.residual_gain;
  j["anisotropy"] = c.anisotropy;
  return j;
}

WorldConfig world_config_from_json(const Json& j, WorldConfig base) {
  if (!j.is_object()) throw ValidationError("world config must be a JSON object");
  base.seed.value = get_or<std::uint64_t>(j, "seed", base.seed.value);
  base.users = get_or(j, "users", base.users);
  base.records_per_user = get_or(j, "records_per_user", base.records_per_user);
  base.dim = get_or(j, "dim", base.dim);
  if (j.contains("classes"))
    base.classes = j.at("classes").is_null() ? std::nullopt
                                             : std::optional<int>(j.at("classes").get<int>());
  base.class_scale = get_or(j, "class_scale", base.class_scale);
  base.user_scale = get_or(j, "user_scale", base.user_scale);
  base.noise_scale = get_or(j, "noise_scale", base.noise_scale);
  base.nonlinearity = get_or(j, "nonlinearity", base.nonlinearity);
  base.residual_rank = get_or(j, "residual_rank", base.residual_rank);
  base.residual_gain = get_or(j, "residual_gain", base.residual_gain);
  base.anisotropy = get_or(j, "anisotropy", base.anisotropy);
  return base;
}

Json to_json(const WassersteinConfig& c) {
  Json j;
  j["initial_batch"] = c.initial_batch;
  j["batch_growth_factor"] = c.batch_growth_factor;
  j["epochs_per_stage"] = c.epochs_per_stage;
  j["stages"] = c.stages;
  j["learning_rate"] = c.learning_rate;
  j["seed"] = c.seed.value;
  j["ot_mode"] = to_string(c.ot_mode);
  j["exact_max_batch"] = c.exact_max_batch;
  j["sinkhorn_reg_ratio"] = c.sinkhorn_reg_ratio;
  j["sinkhorn_max_iters"] = c.sinkhorn_max_iters;
  j["sinkhorn_tol"] = c.sinkhorn_tol;
  j["init"] = to_string(c.init);
  j["eval_sample"] = c.eval_sample;
  return j;
}

Json to_json(const FinetuneConfig& c) {
  Json j;
  j["iterations"] = c.iterations;
  j["learning_rate"] = c.learning_rate;
  j["gmm_components"] = c.gmm_components;
  j["seed"] = c.seed.value;
  j["orth_batch"] = c.orth_batch;
  j["symmetric"] = c.symmetric_min ? "min" : "max";
  j["max_halvings"] = c.max_halvings;
  j["gmm_max_iters"] = c.gmm_max_iters;
  return j;
}

Json to_json(const EvalConfig& c) {
  Json j;
  j["pooling"] = to_string(c.pooling);
  j["far_levels"] = c.far_levels;
  return j;
}

Json alignment_to_json(const AlignmentResult& r, const Json& config) {
  Json j;
  j["method"] = r.method;
  j["dim"] = r.rotation.dim();
  j["matrix"] = matrix_to_json(r.rotation.matrix());
  j["det"] = r.rotation.det();
  j["orthogonality_error"] = r.rotation.orthogonality_error();
  j["underdetermined"] = r.underdetermined;
  j["oracle"] = r.oracle;
  j["init"] = r.init.empty() ? Json(nullptr) : Json(r.init);
  j["config"] = config;
  j["loss_trace"] = r.loss_trace;
  j["warnings"] = r.warnings;
  return j;
}

AlignmentResult alignment_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("matrix"))
    throw ValidationError("alignment JSON needs a 'matrix' field");
  AlignmentResult r;
  r.method = get_or<std::string>(j, "method", "unknown");
  const Matrix m = matrix_from_json(j.at("matrix"));
  if (j.contains("dim") && j.at("dim").get<Index>() != m.rows())
    throw ValidationError("alignment JSON: dim does not match the matrix");
  r.rotation = Rotation::from_matrix(m);
  r.underdetermined = get_or(j, "underdetermined", false);
  r.oracle = get_or(j, "oracle", false);
  if (j.contains("init") && !j.at("init").is_null()) r.init = j.at("init").get<std::string>();
  if (j.contains("loss_trace")) r.loss_trace = j.at("loss_trace").get<std::vector<double>>();
  if (j.contains("warnings")) r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

Json gmm_to_json(const GmmModel& g) {
  Json j;
  j["dim"] = g.dim;
  j["K"] = g.size();
  Json comps = Json::array();
  for (const auto& c : g.components) {
    Json cj;
    cj["prior"] = c.prior;
    cj["mean"] = row_to_json(c.mean);
    cj["var"] = row_to_json(c.var);
    comps.push_back(cj);
  }
  j["components"] = comps;
  return j;
}

GmmModel gmm_from_json(const Json& j) {
  GmmModel g;
  g.dim = j.at("dim").get<Index>();
  for (const auto& cj : j.at("components")) {
    GmmComponent c;
    c.prior = cj.at("prior").get<double>();
    c.mean = row_from_json(cj.at("mean"));
    c.var = row_from_json(cj.at("var"));
    g.components.push_back(std::move(c));
  }
  if (j.contains("K") && j.at("K").get<Index>() != g.size())
    throw ValidationError("GMM JSON: K does not match the component list");
  g.validate();
  return g;
}

Json report_to_json(const AttackReport& r) {
  Json j;
  j["method"] = r.method;
  j["oracle"] = r.oracle;
  j["dim"] = r.dim;
  j["n_target"] = r.n_target;
  j["n_spoof"] = r.n_spoof;
  j["accuracy"] = optional_number(r.accuracy);
  j["eer"] = optional_number(r.eer);
  j["target_eer"] = r.target_eer;
  j["eer_threshold"] = r.eer_threshold;
  Json sfar = Json::object();
  Json thresholds = Json::object();
  for (const auto& e : r.sfar) {
    sfar[e.level] = optional_number(e.sfar);
    thresholds[e.level] = optional_number(e.threshold);
  }
  j["sfar"] = sfar;
  j["thresholds"] = thresholds;
  j["mean_cosine"] = optional_number(r.mean_cosine);
  j["underdetermined"] = r.underdetermined;
  j["det"] = r.det;
  j["orthogonality_error"] = r.orthogonality_error;
  j["warnings"] = r.warnings;
  return j;
}

AttackReport report_from_json(const Json& j) {
  AttackReport r;
  r.method = j.at("method").get<std::string>();
  r.oracle = j.at("oracle").get<bool>();
  r.dim = j.at("dim").get<Index>();
  r.n_target = j.at("n_target").get<Index>();
  r.n_spoof = j.at("n_spoof").get<Index>();
  r.accuracy = optional_from(j.at("accuracy"));
  r.eer = optional_from(j.at("eer"));
  r.target_eer = j.at("target_eer").get<double>();
  r.eer_threshold = j.at("eer_threshold").get<double>();
  const auto& thresholds = j.at("thresholds");
  for (const auto& [level, value] : j.at("sfar").items())
    r.sfar.push_back({level, optional_from(thresholds.at(level)), optional_from(value)});
  r.mean_cosine = optional_from(j.at("mean_cosine"));
  r.underdetermined = j.at("underdetermined").get<bool>();
  r.det = j.at("det").get<double>();
  r.orthogonality_error = j.at("orthogonality_error").get<double>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

std::string render_table(const std::vector<AttackReport>& reports) {
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * *v);
    return std::string(buf);
  };
  std::size_t width = 9;
  for (const auto& r : reports) width = std::max(width, r.method.size());
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s  %9s  %8s  %9s  %8s\n", static_cast<int>(width),
                "Alignment", "Accuracy", "EER", "sFAR_EER", "sFAR_1%");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%-*s  %9s  %8s  %9s  %8s\n", static_cast<int>(width),
                  r.method.c_str(), pct(r.accuracy).c_str(), pct(r.eer).c_str(),
                  pct(r.sfar_at("EER")).c_str(), pct(r.sfar_at("1%")).c_str());
    out << line;
  }
  return out.str();
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace embalign

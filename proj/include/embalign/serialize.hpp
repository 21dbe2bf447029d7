// include/embalign/serialize.hpp

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
#include "embalign/gmm.hpp"
#include "embalign/metrics.hpp"
#include "embalign/synth.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace embalign {

// JSON documents use insertion-ordered objects so key order is fixed. Doubles
// are written in shortest round-trip form, which reads back bit-exactly.
using Json = nlohmann::ordered_json;

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

Json to_json(const WorldConfig& c);
WorldConfig world_config_from_json(const Json& j, WorldConfig base = {});
Json to_json(const WassersteinConfig& c);
Json to_json(const FinetuneConfig& c);
Json to_json(const EvalConfig& c);

/// {method, dim, matrix, det, orthogonality_error, underdetermined, oracle,
///  init, config, loss_trace, warnings}
Json alignment_to_json(const AlignmentResult& r, const Json& config = Json::object());
/// Reads the matrix and metadata back; validates the rotation.
AlignmentResult alignment_from_json(const Json& j);

/// {dim, K, components: [{prior, mean, var}]}
Json gmm_to_json(const GmmModel& g);
GmmModel gmm_from_json(const Json& j);

Json report_to_json(const AttackReport& r);
AttackReport report_from_json(const Json& j);

/// Fixed-width table: Alignment / Accuracy / EER / sFAR_EER / sFAR_1%.
std::string render_table(const std::vector<AttackReport>& reports);

Json read_json(const std::filesystem::path& path);
/// Writes j.dump(2) plus a trailing newline.
void write_json(const std::filesystem::path& path, const Json& j);

}  // namespace embalign

// include/embalign/embedding_io.hpp

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

#include <filesystem>
#include <iosfwd>
#include <string>

namespace embalign {

// Two on-disk encodings of an EmbeddingSet:
//
//  csv: UTF-8, header `user_id,class_label,v0,...,v{D-1}`, one record per
//       line, empty class_label when absent. Values are written with 17
//       significant digits, so a CSV round trip is exact.
//  bin: magic `EMB1`, u32 N, u32 D (little endian), then per record
//       u16 id length, id bytes, i32 class label (-1 = absent), D float32.
//       Values are promoted to double on load.
enum class EmbeddingFormat { kCsv, kBinary };

EmbeddingFormat parse_format(const std::string& name);
std::string format_extension(EmbeddingFormat format);

EmbeddingSet read_embeddings_csv(std::istream& in);
EmbeddingSet read_embeddings_binary(std::istream& in);
void write_embeddings_csv(std::ostream& out, const EmbeddingSet& set);
void write_embeddings_binary(std::ostream& out, const EmbeddingSet& set);

/// Detects the format from the leading magic bytes.
EmbeddingSet read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set,
                      EmbeddingFormat format);

}  // namespace embalign

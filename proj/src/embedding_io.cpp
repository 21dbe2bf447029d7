// src/embedding_io.cpp

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

#include "embalign/embedding_io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace embalign {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary embedding I/O assumes a little-endian host");

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

double parse_double(const std::string& text, std::size_t line_no) {
  // strtod accepts the forms we write (and exponent notation); from_chars for
  // doubles is missing from some of the toolchains we target.
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size())
    throw ValidationError("line " + std::to_string(line_no) + ": invalid number '" + text + "'");
  return v;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError("unexpected end of binary embedding file");
  return value;
}

}  // namespace

EmbeddingFormat parse_format(const std::string& name) {
  if (name == "csv") return EmbeddingFormat::kCsv;
  if (name == "bin") return EmbeddingFormat::kBinary;
  throw ValidationError("unknown embedding format '" + name + "' (expected csv or bin)");
}

std::string format_extension(EmbeddingFormat format) {
  return format == EmbeddingFormat::kCsv ? ".csv" : ".bin";
}

EmbeddingSet read_embeddings_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty embedding file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  if (header.size() < 4 || header[0] != "user_id" || header[1] != "class_label")
    throw ValidationError("embedding CSV header must start with user_id,class_label,v0,...");
  const std::size_t dim = header.size() - 2;
  for (std::size_t k = 0; k < dim; ++k)
    if (header[k + 2] != "v" + std::to_string(k))
      throw ValidationError("embedding CSV header column " + std::to_string(k + 2) + " should be v" +
                    std::to_string(k));

  std::vector<double> values;
  std::vector<std::string> ids;
  std::vector<std::optional<int>> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != dim + 2)
      throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                    std::to_string(dim + 2) + " fields, got " + std::to_string(fields.size()));
    ids.push_back(fields[0]);
    if (fields[1].empty()) {
      labels.emplace_back(std::nullopt);
    } else {
      int label = 0;
      const auto* first = fields[1].data();
      const auto* last = first + fields[1].size();
      auto [ptr, ec] = std::from_chars(first, last, label);
      if (ec != std::errc() || ptr != last)
        throw ValidationError("line " + std::to_string(line_no) + ": invalid class label '" +
                      fields[1] + "'");
      labels.emplace_back(label);
    }
    for (std::size_t k = 0; k < dim; ++k) values.push_back(parse_double(fields[k + 2], line_no));
  }
  const Index n = static_cast<Index>(ids.size());
  if (n == 0) throw ValidationError("embedding file has no records");
  Matrix v(n, static_cast<Index>(dim));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < static_cast<Index>(dim); ++j)
      v(i, j) = values[static_cast<std::size_t>(i) * dim + static_cast<std::size_t>(j)];
  return EmbeddingSet(std::move(v), std::move(ids), std::move(labels));
}

void write_embeddings_csv(std::ostream& out, const EmbeddingSet& set) {
  out << "user_id,class_label";
  for (Index j = 0; j < set.dim(); ++j) out << ",v" << j;
  out << '\n';
  char buf[32];
  for (Index i = 0; i < set.size(); ++i) {
    const auto& id = set.user_id(i);
    if (id.find_first_of(",\n\r") != std::string::npos)
      throw ValidationError("user id '" + id + "' cannot be written to CSV");
    out << id << ',';
    if (auto l = set.label(i)) out << *l;
    for (Index j = 0; j < set.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", set.vectors()(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

EmbeddingSet read_embeddings_binary(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || std::memcmp(magic.data(), "EMB1", 4) != 0)
    throw ValidationError("binary embedding file must start with EMB1");
  const auto n = read_le<std::uint32_t>(in);
  const auto d = read_le<std::uint32_t>(in);
  if (n == 0) throw ValidationError("binary embedding file has no records");
  Matrix v(static_cast<Index>(n), static_cast<Index>(d));
  std::vector<std::string> ids;
  std::vector<std::optional<int>> labels;
  ids.reserve(n);
  labels.reserve(n);
  std::vector<float> row(d);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto len = read_le<std::uint16_t>(in);
    std::string id(len, '\0');
    in.read(id.data(), len);
    if (!in) throw IoError("unexpected end of binary embedding file");
    ids.push_back(std::move(id));
    const auto label = read_le<std::int32_t>(in);
    labels.push_back(label < 0 ? std::nullopt : std::optional<int>(label));
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(d * sizeof(float)));
    if (!in) throw IoError("unexpected end of binary embedding file");
    for (std::uint32_t j = 0; j < d; ++j) v(i, j) = static_cast<double>(row[j]);
  }
  return EmbeddingSet(std::move(v), std::move(ids), std::move(labels));
}

void write_embeddings_binary(std::ostream& out, const EmbeddingSet& set) {
  out.write("EMB1", 4);
  write_le(out, static_cast<std::uint32_t>(set.size()));
  write_le(out, static_cast<std::uint32_t>(set.dim()));
  for (Index i = 0; i < set.size(); ++i) {
    const auto& id = set.user_id(i);
    if (id.size() > std::numeric_limits<std::uint16_t>::max())
      throw ValidationError("user id too long for binary format");
    write_le(out, static_cast<std::uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    write_le(out, static_cast<std::int32_t>(set.label(i).value_or(-1)));
    for (Index j = 0; j < set.dim(); ++j)
      write_le(out, static_cast<float>(set.vectors()(i, j)));
  }
}

EmbeddingSet read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  const bool binary = in.gcount() == 4 && std::memcmp(magic.data(), "EMB1", 4) == 0;
  in.clear();
  in.seekg(0);
  try {
    return binary ? read_embeddings_binary(in) : read_embeddings_csv(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set,
                      EmbeddingFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  if (format == EmbeddingFormat::kCsv)
    write_embeddings_csv(out, set);
  else
    write_embeddings_binary(out, set);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace embalign

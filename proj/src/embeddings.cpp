// Copyright 2026 The Tiereval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tiereval/embeddings.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "tiereval/errors.hpp"

namespace tiereval {
namespace {

namespace fs = std::filesystem;

fs::path binary_path(const std::string& sidecar_path) {
  return fs::path(sidecar_path).replace_extension(".bin");
}

std::uint32_t load_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_le32(std::uint32_t v, unsigned char* p) {
  p[0] = static_cast<unsigned char>(v);
  p[1] = static_cast<unsigned char>(v >> 8);
  p[2] = static_cast<unsigned char>(v >> 16);
  p[3] = static_cast<unsigned char>(v >> 24);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t start = 0;
    while (start < cell.size() && cell[start] == ' ') ++start;
    cells.push_back(cell.substr(start));
  }
  return cells;
}

}  // namespace

void EmbeddingMatrix::validate() const {
  if (static_cast<std::size_t>(rows.rows()) != ids.size()) {
    throw DataError("embedding matrix has " + std::to_string(rows.rows()) +
                    " rows for " + std::to_string(ids.size()) + " ids");
  }
  if (modality == "image" && dim() != kImageDim) {
    throw DataError("image embeddings must be " + std::to_string(kImageDim) +
                    "-d, got " + std::to_string(dim()));
  }
  if (modality == "image+text" && dim() != kMultimodalDim) {
    throw DataError("image+text embeddings must be " + std::to_string(kMultimodalDim) +
                    "-d, got " + std::to_string(dim()));
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw DataError("duplicate embedding id '" + id + "'");
  }
  if (!rows.allFinite()) throw DataError("embedding matrix contains non-finite values");
}

EmbeddingMatrix read_embeddings(const std::string& sidecar_path) {
  std::ifstream side(sidecar_path);
  if (!side) throw MissingInputError("embedding sidecar '" + sidecar_path + "' not found");
  const auto j = nlohmann::json::parse(side, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw DataError("embedding sidecar '" + sidecar_path + "' is not a JSON object");
  }
  EmbeddingMatrix m;
  std::size_t count = 0, dim = 0;
  try {
    count = j.at("count").get<std::size_t>();
    dim = j.at("dim").get<std::size_t>();
    m.ids = j.at("ids").get<std::vector<std::string>>();
    m.modality = j.value("modality", std::string("image"));
    m.normalized = j.value("normalized", false);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("embedding sidecar '" + sidecar_path + "': " + e.what());
  }
  if (m.ids.size() != count) {
    throw DataError("embedding sidecar '" + sidecar_path + "': count " +
                    std::to_string(count) + " but " + std::to_string(m.ids.size()) +
                    " ids");
  }
  const fs::path bin = binary_path(sidecar_path);
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw MissingInputError("embedding data '" + bin.string() + "' not found");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() != count * dim * 4) {
    throw DataError("embedding data '" + bin.string() + "' has " +
                    std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(count * dim * 4));
  }
  m.rows.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  const unsigned char* p = bytes.data();
  for (std::size_t r = 0; r < count; ++r) {
    for (std::size_t c = 0; c < dim; ++c, p += 4) {
      m.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          static_cast<double>(std::bit_cast<float>(load_le32(p)));
    }
  }
  m.validate();
  return m;
}

void write_embeddings(const std::string& sidecar_path, const EmbeddingMatrix& m) {
  m.validate();
  const nlohmann::json side = {{"count", m.count()},
                               {"dim", m.dim()},
                               {"modality", m.modality},
                               {"normalized", m.normalized},
                               {"ids", m.ids}};
  std::ofstream out(sidecar_path);
  if (!out) throw MissingInputError("cannot write '" + sidecar_path + "'");
  out << side.dump(2) << '\n';
  std::vector<unsigned char> bytes(m.count() * m.dim() * 4);
  unsigned char* p = bytes.data();
  for (Eigen::Index r = 0; r < m.rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.rows.cols(); ++c, p += 4) {
      store_le32(std::bit_cast<std::uint32_t>(static_cast<float>(m.rows(r, c))), p);
    }
  }
  const fs::path bin = binary_path(sidecar_path);
  std::ofstream bout(bin, std::ios::binary);
  if (!bout) throw MissingInputError("cannot write '" + bin.string() + "'");
  bout.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
}

EmbeddingMatrix read_embeddings_csv(const std::string& path,
                                    const std::string& modality) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("embedding CSV '" + path + "' not found");
  EmbeddingMatrix m;
  m.modality = modality;
  std::vector<std::vector<double>> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (lineno == 1 && !cells.empty() && cells[0] == "id") continue;
    if (cells.size() < 2) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected id and values");
    }
    std::vector<double> row;
    row.reserve(cells.size() - 1);
    for (std::size_t i = 1; i < cells.size(); ++i) {
      double v = 0.0;
      const char* b = cells[i].data();
      const char* e = b + cells[i].size();
      const auto [ptr, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || ptr != e) {
        throw DataError(path + ":" + std::to_string(lineno) + ": bad value '" +
                        cells[i] + "'");
      }
      row.push_back(v);
    }
    if (!values.empty() && row.size() != values.front().size()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": ragged row");
    }
    m.ids.push_back(cells[0]);
    values.push_back(std::move(row));
  }
  const std::size_t dim = values.empty() ? 0 : values.front().size();
  m.rows.resize(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < values.size(); ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      m.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r][c];
    }
  }
  m.validate();
  return m;
}

void write_embeddings_csv(const std::string& path, const EmbeddingMatrix& m) {
  m.validate();
  std::ofstream out(path);
  if (!out) throw MissingInputError("cannot write '" + path + "'");
  out << "id";
  for (std::size_t c = 0; c < m.dim(); ++c) out << ",v" << c;
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < m.count(); ++r) {
    out << m.ids[r];
    for (std::size_t c = 0; c < m.dim(); ++c) {
      const auto res = std::to_chars(buf, buf + sizeof(buf),
                                     m.rows(static_cast<Eigen::Index>(r),
                                            static_cast<Eigen::Index>(c)));
      out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

EmbeddingMatrix load_embeddings(const std::string& path) {
  if (fs::path(path).extension() == ".csv") return read_embeddings_csv(path);
  return read_embeddings(path);
}

EmbeddingMatrix build_multimodal(const EmbeddingMatrix& image,
                                 const EmbeddingMatrix& text) {
  if (image.ids != text.ids) {
    throw DataError("image and text embeddings do not list the same ids in order");
  }
  EmbeddingMatrix m;
  m.ids = image.ids;
  m.normalized = image.normalized && text.normalized;
  m.modality = image.modality == "image" && text.dim() == kImageDim ? "image+text"
                                                                    : "concat";
  m.rows.resize(image.rows.rows(), image.rows.cols() + text.rows.cols());
  m.rows << image.rows, text.rows;
  m.validate();
  return m;
}

EmbeddingMatrix select_rows(const EmbeddingMatrix& m,
                            std::span<const std::string> ids) {
  std::unordered_map<std::string, Eigen::Index> pos;
  for (std::size_t i = 0; i < m.ids.size(); ++i) {
    pos.emplace(m.ids[i], static_cast<Eigen::Index>(i));
  }
  EmbeddingMatrix out;
  out.modality = m.modality;
  out.normalized = m.normalized;
  out.rows.resize(static_cast<Eigen::Index>(ids.size()), m.rows.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = pos.find(ids[i]);
    if (it == pos.end()) throw DataError("no embedding for sample '" + ids[i] + "'");
    out.rows.row(static_cast<Eigen::Index>(i)) = m.rows.row(it->second);
    out.ids.push_back(ids[i]);
  }
  return out;
}

void l2_normalize_rows(Eigen::MatrixXd& rows) {
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const double n = rows.row(r).norm();
    if (n > 0.0) rows.row(r) /= n;
  }
}

}  // namespace tiereval

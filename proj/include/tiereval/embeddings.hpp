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

// Embedding interchange format.
//
//   <name>.json  {"count", "dim", "modality", "ids": [...], "normalized"}
//   <name>.bin   count * dim little-endian float32, row-major, ids order
//
// A CSV fallback holds one row per sample: id,v0,...,v{dim-1}, with an
// optional header row whose first cell is "id".

#ifndef TIEREVAL_EMBEDDINGS_HPP_
#define TIEREVAL_EMBEDDINGS_HPP_

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

namespace tiereval {

inline constexpr std::size_t kImageDim = 512;
inline constexpr std::size_t kMultimodalDim = 1024;

struct EmbeddingMatrix {
  std::vector<std::string> ids;
  // "image" (512), "image+text" (1024), or any other tag (unchecked dim).
  std::string modality = "image";
  bool normalized = false;
  // ids.size() x dim.
  Eigen::MatrixXd rows;

  std::size_t dim() const { return static_cast<std::size_t>(rows.cols()); }
  std::size_t count() const { return ids.size(); }

  // Throws DataError on a row/id count mismatch, duplicate ids, a dimension
  // that contradicts the modality, or a non-finite value.
  void validate() const;
};

// Reads the sidecar at `sidecar_path` and the binary next to it (same stem,
// ".bin"). Throws MissingInputError naming the absent file, DataError on
// size or content mismatches.
EmbeddingMatrix read_embeddings(const std::string& sidecar_path);
void write_embeddings(const std::string& sidecar_path, const EmbeddingMatrix& m);

EmbeddingMatrix read_embeddings_csv(const std::string& path,
                                    const std::string& modality = "image");
void write_embeddings_csv(const std::string& path, const EmbeddingMatrix& m);

// Dispatches on extension: ".csv" reads CSV, anything else a sidecar.
EmbeddingMatrix load_embeddings(const std::string& path);

// Row-wise concatenation [image | text]. Throws DataError unless both carry
// the same ids in the same order.
EmbeddingMatrix build_multimodal(const EmbeddingMatrix& image,
                                 const EmbeddingMatrix& text);

// Rows for `ids`, in that order. Throws DataError naming a missing id.
EmbeddingMatrix select_rows(const EmbeddingMatrix& m,
                            std::span<const std::string> ids);

// Zero rows are left unchanged.
void l2_normalize_rows(Eigen::MatrixXd& rows);

}  // namespace tiereval

#endif  // TIEREVAL_EMBEDDINGS_HPP_

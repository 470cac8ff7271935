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

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "test_util.hpp"
#include "tiereval/errors.hpp"

namespace tiereval {
namespace {

using testing::TempDir;
using testing::read_file;
using testing::write_file;

EmbeddingMatrix random_matrix(std::size_t n, std::size_t dim, const std::string& modality,
                              unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<float> dist;
  EmbeddingMatrix m;
  m.modality = modality;
  m.rows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    m.ids.push_back("s" + std::to_string(i));
    for (std::size_t k = 0; k < dim; ++k) {
      m.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = dist(gen);
    }
  }
  return m;
}

TEST(EmbeddingsTest, BinaryRoundTripIsExactForFloatValues) {
  TempDir dir;
  const EmbeddingMatrix m = random_matrix(7, kImageDim, "image", 1);
  write_embeddings(dir.file("img.json"), m);
  EXPECT_EQ(std::filesystem::file_size(dir.file("img.bin")), 7 * kImageDim * 4);
  const EmbeddingMatrix back = read_embeddings(dir.file("img.json"));
  EXPECT_EQ(back.ids, m.ids);
  EXPECT_EQ(back.modality, "image");
  EXPECT_EQ(back.rows, m.rows);
  const auto sidecar = nlohmann::json::parse(read_file(dir.file("img.json")));
  EXPECT_EQ(sidecar["count"], 7);
  EXPECT_EQ(sidecar["dim"], kImageDim);
}

TEST(EmbeddingsTest, BinaryIsLittleEndianFloat32RowMajor) {
  TempDir dir;
  EmbeddingMatrix m;
  m.modality = "probe";
  m.ids = {"a", "b"};
  m.rows.resize(2, 2);
  m.rows << 1.0, 2.0, -0.5, 0.25;
  write_embeddings(dir.file("p.json"), m);
  const std::string bytes = read_file(dir.file("p.bin"));
  ASSERT_EQ(bytes.size(), 16u);
  // 2.0f = 0x40000000, second value of the first row.
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 0x40);
  // -0.5f = 0xBF000000, first value of the second row.
  EXPECT_EQ(static_cast<unsigned char>(bytes[11]), 0xBF);
}

TEST(EmbeddingsTest, CsvRoundTripWithAndWithoutHeader) {
  TempDir dir;
  const EmbeddingMatrix m = random_matrix(5, kImageDim, "image", 2);
  write_embeddings_csv(dir.file("e.csv"), m);
  const EmbeddingMatrix back = load_embeddings(dir.file("e.csv"));
  EXPECT_EQ(back.ids, m.ids);
  EXPECT_TRUE(back.rows.isApprox(m.rows, 1e-6));
  write_file(dir.file("h.csv"), "id,v0,v1\nx,1,2\ny,3,4\n");
  const EmbeddingMatrix h = read_embeddings_csv(dir.file("h.csv"), "probe");
  ASSERT_EQ(h.count(), 2u);
  EXPECT_EQ(h.dim(), 2u);
  EXPECT_DOUBLE_EQ(h.rows(1, 0), 3.0);
}

TEST(EmbeddingsTest, MultimodalConcatenationIs1024d) {
  const EmbeddingMatrix img = random_matrix(4, kImageDim, "image", 3);
  const EmbeddingMatrix txt = random_matrix(4, kImageDim, "text", 4);
  const EmbeddingMatrix mm = build_multimodal(img, txt);
  EXPECT_EQ(mm.dim(), kMultimodalDim);
  EXPECT_EQ(mm.modality, "image+text");
  EXPECT_EQ(mm.rows.leftCols(kImageDim), img.rows);
  EXPECT_EQ(mm.rows.rightCols(kImageDim), txt.rows);
}

TEST(EmbeddingsTest, MultimodalRejectsIdMismatch) {
  const EmbeddingMatrix img = random_matrix(4, kImageDim, "image", 3);
  EmbeddingMatrix txt = random_matrix(4, kImageDim, "text", 4);
  std::swap(txt.ids[0], txt.ids[1]);
  EXPECT_THROW(build_multimodal(img, txt), DataError);
}

TEST(EmbeddingsTest, MissingFilesAreMissingInput) {
  TempDir dir;
  EXPECT_THROW(read_embeddings(dir.file("none.json")), MissingInputError);
  write_embeddings(dir.file("e.json"), random_matrix(2, kImageDim, "image", 5));
  std::filesystem::remove(dir.file("e.bin"));
  try {
    read_embeddings(dir.file("e.json"));
    FAIL() << "expected MissingInputError";
  } catch (const MissingInputError& e) {
    EXPECT_NE(std::string(e.what()).find("e.bin"), std::string::npos);
  }
}

TEST(EmbeddingsTest, WrongBinarySizeIsDataError) {
  TempDir dir;
  write_embeddings(dir.file("e.json"), random_matrix(2, kImageDim, "image", 5));
  write_file(dir.file("e.bin"), std::string(100, '\0'));
  EXPECT_THROW(read_embeddings(dir.file("e.json")), DataError);
}

TEST(EmbeddingsTest, ValidationRejectsBadMatrices) {
  EmbeddingMatrix wrong_dim = random_matrix(2, 100, "image", 6);
  EXPECT_THROW(wrong_dim.validate(), DataError);
  EmbeddingMatrix dup = random_matrix(2, kImageDim, "image", 6);
  dup.ids[1] = dup.ids[0];
  EXPECT_THROW(dup.validate(), DataError);
  EmbeddingMatrix nan = random_matrix(2, kImageDim, "image", 6);
  nan.rows(0, 0) = std::nan("");
  EXPECT_THROW(nan.validate(), DataError);
}

TEST(EmbeddingsTest, SelectRowsReordersAndRejectsUnknownIds) {
  const EmbeddingMatrix m = random_matrix(5, kImageDim, "image", 7);
  const std::vector<std::string> ids = {"s3", "s0"};
  const EmbeddingMatrix sel = select_rows(m, ids);
  EXPECT_EQ(sel.ids, ids);
  EXPECT_EQ(sel.rows.row(0), m.rows.row(3));
  const std::vector<std::string> bad = {"s9"};
  EXPECT_THROW(select_rows(m, bad), DataError);
}

TEST(EmbeddingsTest, L2NormalizeLeavesZeroRows) {
  Eigen::MatrixXd rows(2, 2);
  rows << 3.0, 4.0, 0.0, 0.0;
  l2_normalize_rows(rows);
  EXPECT_DOUBLE_EQ(rows(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(rows(0, 1), 0.8);
  EXPECT_EQ(rows(1, 0), 0.0);
}

}  // namespace
}  // namespace tiereval

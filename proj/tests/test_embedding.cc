#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.h"
#include "tema/binary_io.h"
#include "tema/embedding.h"

using tema::Matrix;
using tema::Vector;

TEST_CASE("rng streams are reproducible") {
  tema::Rng a(99), b(99), c(100);
  for (int i = 0; i < 10; ++i) CHECK(a.NextU64() == b.NextU64());
  CHECK(a.NextU64() != c.NextU64());
  for (int i = 0; i < 1000; ++i) {
    const double u = a.Uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(a.Below(7) < 7u);
  }
}

TEST_CASE("uniform init respects the bound and the seed") {
  tema::Rng r1(1), r2(1);
  const Matrix t = tema::InitUniformTable(500, 2, r1);
  CHECK(t.cwiseAbs().maxCoeff() < 0.7072);
  CHECK(tema::MatrixDigest(t) == tema::MatrixDigest(tema::InitUniformTable(500, 2, r2)));
}

TEST_CASE("gelu") {
  CHECK(tema::Gelu(0.0) == 0.0);
  const double oracle =
      0.5 * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (1.0 + 0.044715)));
  CHECK(tema::Gelu(1.0) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(tema::Gelu(1.0) == doctest::Approx(0.8412).epsilon(1e-4));
  for (double x : {-2.0, -0.3, 0.7, 3.0}) {
    const double fd = (tema::Gelu(x + 1e-6) - tema::Gelu(x - 1e-6)) / 2e-6;
    CHECK(tema::GeluDerivative(x) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("tag pooling") {
  Matrix e(2, 2);
  e << 1, 0, 0, 1;
  const Vector p = tema::PoolTagEmbedding({"i", {{0, 0.75}, {1, 0.25}}}, e);
  CHECK(p[0] == doctest::Approx(0.75));
  CHECK(p[1] == doctest::Approx(0.25));

  tema::Rng rng(4);
  const Matrix big = tema::InitUniformTable(5, 3, rng);
  CHECK((tema::PoolTagEmbedding({"i", {{3, 1.0}}}, big) - big.row(3).transpose()).norm() == 0.0);
  tema::TagScoreVector uniform{"i", {}};
  for (int k = 0; k < 5; ++k) uniform.entries.emplace_back(k, 0.2);
  CHECK((tema::PoolTagEmbedding(uniform, big) - big.colwise().mean().transpose()).norm() < 1e-12);
  try {
    tema::PoolTagEmbedding({"i", {{7, 1.0}}}, big);
    FAIL("no throw");
  } catch (const tema::Error& e) {
    CHECK(std::string(e.what()).find('7') != std::string::npos);
  }
}

TEST_CASE("cosine scores") {
  Matrix rows(3, 2);
  rows << 2, 1, 1, 2, 0, 0;
  Vector h(2);
  h << 1, 2;
  const Vector s = tema::CosineSimilarityScores(h, rows);
  CHECK(s[0] == doctest::Approx(0.8));
  CHECK(s[1] == doctest::Approx(1.0));
  CHECK(s[2] == 0.0);
  Vector ortho(2);
  ortho << -1, 2;
  CHECK(tema::CosineSimilarityScores(ortho, rows)[0] == doctest::Approx(0.0));
  CHECK_THROWS_AS(tema::CosineSimilarityScores(Vector::Zero(2), rows), tema::Error);
  CHECK_THROWS_AS(tema::CosineSimilarityScores(Vector::Ones(3), rows), tema::Error);
}

TEST_CASE("fusion mlp") {
  tema::FusionMlp mlp;
  mlp.w1 = Matrix::Zero(4, 3);
  mlp.b1 = Matrix::Zero(1, 3);
  mlp.w2 = Matrix::Ones(3, 2);
  mlp.b2 = Matrix::Zero(1, 2);
  const Vector z = Vector::Zero(1);
  CHECK(tema::FuseItemEmbedding(z, z, z, z, mlp).norm() == 0.0);

  tema::FusionMlp unit;
  unit.w1 = Matrix::Ones(1, 1);
  unit.b1 = Matrix::Zero(1, 1);
  unit.w2 = Matrix::Ones(1, 1);
  unit.b2 = Matrix::Zero(1, 1);
  Matrix in(1, 1);
  in << 1.0;
  CHECK(unit.Forward(in)(0, 0) == doctest::Approx(0.8412).epsilon(1e-4));

  tema::Rng rng(8);
  const auto m = tema::FusionMlp::Init(4, 5, 3, rng);
  Matrix x = tema::InitUniformTable(2, 4, rng);
  const Matrix got = m.Forward(x);
  auto pre = oracle::MatMul(oracle::ToDense(x), oracle::ToDense(m.w1));
  for (auto& row : pre)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = tema::Gelu(row[j] + m.b1(0, j));
  const auto out = oracle::MatMul(pre, oracle::ToDense(m.w2));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) CHECK(got(i, j) == doctest::Approx(out[i][j] + m.b2(0, j)).epsilon(1e-9));

  try {
    tema::FuseItemEmbedding(Vector::Zero(2), z, z, z, m);
    FAIL("no throw");
  } catch (const tema::Error& e) {
    const std::string what = e.what();
    CHECK(what.find('4') != std::string::npos);
    CHECK(what.find('5') != std::string::npos);
  }
}

TEST_CASE("frozen embeddings round trip bitwise and align to the catalog") {
  const auto dir = std::filesystem::temp_directory_path() / "tema_frozen_t";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "img.bin").string();
  tema::Rng rng(2);
  const Matrix v = tema::QuantizeToFloat(tema::InitUniformTable(3, 512, rng));
  tema::WriteFrozenEmbeddings(path, tema::TensorKind::kImage, v);
  const tema::ItemCatalog cat({"a", "b"}, {"c"});
  const auto store = tema::LoadFrozenEmbeddings(path, cat, tema::TensorKind::kImage);
  CHECK(store.dim() == 512);
  CHECK(store.vectors.rows() == 3);
  CHECK(tema::MatrixDigest(store.vectors) == tema::MatrixDigest(v));
  CHECK_THROWS_AS(tema::LoadFrozenEmbeddings(path, cat, tema::TensorKind::kText), tema::Error);

  // Sidecar ids: one catalog item is missing from the file.
  tema::WriteFrozenEmbeddings(path, tema::TensorKind::kImage, v.topRows(2), {"c", "a"});
  const auto aligned = tema::LoadFrozenEmbeddings(path, cat, tema::TensorKind::kImage);
  CHECK(aligned.missing == 1);
  CHECK(aligned.vectors.row(0) == v.row(1));
  CHECK(aligned.vectors.row(2) == v.row(0));
  CHECK(aligned.vectors.row(1).norm() == 0.0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("tensor blocks reject corruption") {
  Matrix m(2, 2);
  m << 1, 2, 3, 4;
  std::ostringstream out;
  tema::WriteTensorBlock(out, tema::TensorKind::kParameter, m);
  const std::string bytes = out.str();
  {
    std::istringstream in(bytes);
    CHECK(tema::ReadTensorBlock(in).values == m);
  }
  std::string flipped = bytes;
  flipped[14] ^= 1;  // inside the payload
  std::istringstream bad(flipped);
  CHECK_THROWS_WITH_AS(tema::ReadTensorBlock(bad), doctest::Contains("CRC"), tema::Error);
  std::string magic = bytes;
  magic[0] = 'X';
  std::istringstream bad_magic(magic);
  CHECK_THROWS_AS(tema::ReadTensorBlock(bad_magic), tema::Error);
  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(tema::ReadTensorBlock(truncated), tema::Error);
}

TEST_CASE("digests") {
  CHECK(tema::Sha256Hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const unsigned char data[] = {'1', '2', '3', '4', '5', '6', '7', '8', '9'};
  CHECK(tema::Crc32(data) == 0xCBF43926u);
}

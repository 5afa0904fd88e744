#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <filesystem>
#include <set>

#include "toy.h"
#include "tema/binary_io.h"
#include "tema/model.h"

using tema::Matrix;
using tema::Modality;
using tema::SequenceKind;
using tema::Vector;

namespace {

Vector Softmax(const Vector& s) {
  Vector e(s.size());
  double z = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) z += (e[i] = std::exp(s[i]));
  return e / z;
}

Vector Cosines(const Vector& h, const Matrix& rows) {
  Vector out(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const Vector r = rows.row(i).transpose();
    out[i] = h.dot(r) / (h.norm() * r.norm());
  }
  return out;
}

// Item rows of one modality, recomputed from scratch.
Matrix ItemRows(const tema::ModelParams& p, const tema::ItemFeatures& f, Modality m) {
  switch (m) {
    case Modality::kId: return p.id_table;
    case Modality::kImg: return f.image;
    case Modality::kTex: return f.text;
    default: {
      Matrix out = Matrix::Zero(f.num_items(), p.tag_table.cols());
      for (int i = 0; i < f.num_items(); ++i)
        for (const auto& [k, w] : f.tag_weights[static_cast<std::size_t>(i)])
          out.row(i) += w * p.tag_table.row(k);
      return out;
    }
  }
}

}  // namespace

TEST_CASE("modality prediction examples") {
  Matrix two(2, 2);
  two << 1, 0, 0, 1;
  Vector h(2);
  h << 1, 0;
  const Vector p = tema::ModalityPrediction(h, two);
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)));
  CHECK(p[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(0.2689).epsilon(1e-4));
  h << 1, 1;
  const Vector even = tema::ModalityPrediction(h, two);
  CHECK(even[0] == doctest::Approx(0.5));
  CHECK_THROWS_AS(tema::ModalityPrediction(Vector::Zero(2), two), tema::Error);
}

TEST_CASE("fusion, nll and total loss") {
  Vector a(2), b(2), c(2), d(2);
  a << 0.9, 0.1;
  b << 0.5, 0.5;
  c << 0.2, 0.8;
  d << 0.6, 0.4;
  const Vector f = tema::FusePredictions(a, b, c, d, {0.4, 0.2, 0.2});
  CHECK(f[0] == doctest::Approx(0.4 * 0.9 + 0.2 * 0.5 + 0.2 * 0.2 + 0.2 * 0.6).epsilon(1e-12));
  CHECK((tema::FusePredictions(a, a, a, a, {0.4, 0.2, 0.2}) - a).norm() < 1e-15);
  tema::Hyperparams defaults;
  CHECK(defaults.alpha_tag() == doctest::Approx(0.2));
  CHECK_THROWS_AS(tema::FusePredictions(a, b, c, d, {0.6, 0.3, 0.2}), tema::Error);

  const Vector uniform = Vector::Constant(4, 0.25);
  CHECK(tema::SequenceNll({uniform}, {2}) == doctest::Approx(std::log(4.0)));
  CHECK(tema::SequenceNll({uniform}, {2}) == doctest::Approx(1.3863).epsilon(1e-4));
  Vector sure = Vector::Zero(3);
  sure[1] = 1.0;
  CHECK(tema::SequenceNll({sure}, {1}) == 0.0);
  CHECK(tema::SequenceNll({sure}, {0}) == doctest::Approx(-std::log(1e-12)));
  CHECK_THROWS_AS(tema::SequenceNll({sure}, {3}), tema::Error);

  CHECK(tema::TotalLoss(1.0, 2.0, 3.0, 0.3, 0.1) == doctest::Approx(1.9));
  CHECK(tema::TotalLoss(1.0, 2.0, 3.0, 0.0, 0.0) == 1.0);
}

TEST_CASE("twelve streams and their isolation") {
  const auto hp = toy::Hyper();
  const auto f = toy::Features(4, 4, 8, 5, 1);
  const auto p = tema::ModelParams::Init(hp, 4, 4, 5);
  CHECK(p.streams.size() == 12);
  const auto hist = toy::Histories(1, 4, 4, 6, 2)[0];
  const auto base = tema::EncodeAllStreams(hist, p, tema::BuildFeatureTables(p, f));
  CHECK(base.size() == 12);

  // Image change of one item touches only image streams.
  auto f2 = f;
  f2.image.row(hist.x.back()) *= -2.0;
  const auto img = tema::EncodeAllStreams(hist, p, tema::BuildFeatureTables(p, f2));
  for (const auto& [id, h] : base) {
    const bool changed = (img.at(id) - h).norm() > 0.0;
    const bool expect = id.modality == Modality::kImg && id.sequence != SequenceKind::kY;
    CHECK_MESSAGE(changed == expect, id.Name());
  }

  // Swapping the last X item changes X streams, never Y streams.
  auto h2 = hist;
  h2.x.back() = (h2.x.back() + 1) % 4;
  const auto moved = tema::EncodeAllStreams(h2, p, tema::BuildFeatureTables(p, f));
  for (const auto& [id, h] : base) {
    if (id.sequence == SequenceKind::kX) CHECK((moved.at(id) - h).norm() > 0.0);
    if (id.sequence == SequenceKind::kY) CHECK((moved.at(id) - h).norm() == 0.0);
  }
}

TEST_CASE("shared mode and fused stream layouts") {
  auto hp = toy::Hyper();
  hp.attention = tema::AttentionMode::kShared;
  CHECK(tema::ModelParams::Init(hp, 4, 4, 5).streams.size() == 1);
  hp.attention = tema::AttentionMode::kMulti;
  hp.fused_stream = true;
  const auto p = tema::ModelParams::Init(hp, 4, 4, 5);
  CHECK(p.streams.size() == 13);
  CHECK(p.StreamIndex({SequenceKind::kMerged, Modality::kFused}) == 12);
  CHECK(p.StreamIndex({SequenceKind::kX, Modality::kFused}) == -1);
}

TEST_CASE("inference scores match an independent recomputation") {
  const auto hp = toy::Hyper();
  const auto f = toy::Features(5, 3, 8, 4, 3);
  const auto p = tema::ModelParams::Init(hp, 5, 3, 4);
  const auto tables = tema::BuildFeatureTables(p, f);
  const auto hist = toy::Histories(1, 5, 3, 6, 4)[0];
  const auto hs = tema::EncodeAllStreams(hist, p, tables);

  const double alpha[4] = {0.4, 0.2, 0.2, 0.2};
  Vector px = Vector::Zero(5), pm = Vector::Zero(8);
  for (int m = 0; m < 4; ++m) {
    const auto mod = static_cast<Modality>(m);
    const Matrix rows = ItemRows(p, f, mod);
    px += alpha[m] * Softmax(Cosines(hs.at({SequenceKind::kX, mod}), rows.topRows(5)));
    pm += alpha[m] * Softmax(Cosines(hs.at({SequenceKind::kMerged, mod}), rows));
  }
  const Vector want = px + hp.lambda2 * pm.head(5) / pm.head(5).sum();
  const Vector got = tema::ScoreDomain(p, tables, hist, tema::Domain::kX);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);

  std::vector<int> order(5);
  for (int i = 0; i < 5; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return want[a] > want[b]; });
  CHECK(tema::RankItems(got) == order);
}

TEST_CASE("ranking ties break by index; one-item catalogs rank first") {
  Vector s(4);
  s << 0.5, 0.9, 0.5, 0.1;
  CHECK(tema::RankItems(s) == std::vector<int>{1, 0, 2, 3});
  CHECK(tema::RankOf(s, 2) == 3);
  CHECK(tema::RankOf(Vector::Constant(1, 0.3), 0) == 1);
}

TEST_CASE("cosine argmax ignores positive rescaling") {
  tema::Rng rng(12);
  const Matrix cand = tema::InitUniformTable(7, 5, rng);
  for (int i = 0; i < 50; ++i) {
    const Vector h = tema::InitUniformTable(1, 5, rng).row(0).transpose();
    const double scale = 1e-3 + 1e3 * rng.Uniform();
    CHECK(tema::RankItems(tema::ModalityPrediction(h, cand)) ==
          tema::RankItems(tema::ModalityPrediction(scale * h, cand)));
  }
}

TEST_CASE("checkpoints round trip through float32") {
  auto hp = toy::Hyper();
  hp.fused_stream = true;
  const auto p = tema::ModelParams::Init(hp, 4, 3, 5);
  const auto path = (std::filesystem::temp_directory_path() / "tema_ckpt.bin").string();
  tema::WriteCheckpoint(path, p);
  const auto back = tema::ReadCheckpoint(path);
  CHECK(back.hyper.ToJson() == p.hyper.ToJson());
  const auto a = back.Registry();
  const auto b = p.Registry();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(tema::MatrixDigest(*a[i]) == tema::MatrixDigest(tema::QuantizeToFloat(*b[i])));
  }
  CHECK(tema::CheckpointBytes(back) == tema::CheckpointBytes(p));
  std::filesystem::remove(path);
}

TEST_CASE("registry lists each tensor once") {
  auto p = tema::ModelParams::Init(toy::Hyper(), 4, 4, 5);
  const auto names = p.RegistryNames();
  std::set<std::string> unique(names.begin(), names.end());
  CHECK(unique.size() == names.size());
  CHECK(p.Registry().size() == names.size());
}

TEST_CASE("hyperparameter validation names the field") {
  auto hp = toy::Hyper();
  hp.dropout = 1.5;
  CHECK_THROWS_WITH_AS(hp.Validate(), doctest::Contains("dropout"), tema::ConfigError);
  hp = toy::Hyper();
  hp.alphas = {0.5, 0.4, 0.3};
  CHECK_THROWS_AS(hp.Validate(), tema::ConfigError);
  CHECK(tema::Hyperparams::FromJson(toy::Hyper().ToJson()).ToJson() == toy::Hyper().ToJson());
}

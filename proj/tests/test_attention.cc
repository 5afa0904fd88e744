#include <doctest.h>

#include <cmath>

#include "oracles.h"
#include "tema/attention.h"

using tema::Matrix;
using tema::Vector;

namespace {

tema::AttentionParams Identity(int dim, int heads) {
  tema::AttentionParams p;
  p.heads = heads;
  p.wq = p.wk = p.wv = p.wo = Matrix::Identity(dim, dim);
  p.pos = Matrix::Zero(4, dim);
  return p;
}

}  // namespace

TEST_CASE("2x2 causal toy") {
  Matrix eye = Matrix::Identity(2, 2);
  Matrix w;
  const Matrix out = tema::ScaledDotAttention(eye, eye, eye, true, &w);
  CHECK(out(0, 0) == doctest::Approx(1.0));
  CHECK(out(0, 1) == doctest::Approx(0.0));
  const double a = std::exp(0.0), b = std::exp(1.0 / std::sqrt(2.0));
  CHECK(out(1, 0) == doctest::Approx(a / (a + b)));
  CHECK(out(1, 0) == doctest::Approx(0.3302).epsilon(1e-4));
  CHECK(out(1, 1) == doctest::Approx(0.6698).epsilon(1e-4));
  for (int i = 0; i < 2; ++i) CHECK(w.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("length one returns the value path") {
  tema::Rng rng(5);
  const auto p = tema::AttentionParams::Init(4, 2, 3, rng);
  const Matrix x = tema::InitUniformTable(1, 4, rng);
  const Vector h = tema::EncodeStream(x, p, {});
  CHECK((h.transpose() - x * p.wv * p.wo).norm() < 1e-12);
  CHECK((tema::EncodeStream(x, p, {}) - h).norm() == 0.0);
}

TEST_CASE("encoder matches the dense oracle and is causal") {
  tema::Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int heads = 1 + static_cast<int>(rng.Below(2));
    const int dim = heads * (1 + static_cast<int>(rng.Below(4)));
    const int len = 1 + static_cast<int>(rng.Below(6));
    const auto p = tema::AttentionParams::Init(dim, heads, len, rng);
    Matrix x = tema::InitUniformTable(len, dim, rng);
    const Matrix got = tema::EncodeSequence(x, p, {});
    const auto want = oracle::Attention(x, p);
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < dim; ++j) CHECK(std::abs(got(i, j) - want[i][j]) < 1e-9);
    const int t = static_cast<int>(rng.Below(static_cast<std::uint64_t>(len)));
    Matrix y = x;
    for (int r = t + 1; r < len; ++r) y.row(r) = tema::InitUniformTable(1, dim, rng);
    const Matrix perturbed = tema::EncodeSequence(y, p, {});
    CHECK((perturbed.topRows(t + 1) - got.topRows(t + 1)).norm() == 0.0);
  }
}

TEST_CASE("head count must divide the model dim") {
  tema::Rng rng(1);
  CHECK_THROWS_AS(tema::AttentionParams::Init(5, 2, 3, rng), tema::ConfigError);
  CHECK_THROWS_AS(tema::EncodeStream(Matrix(0, 4), Identity(4, 1), {}), tema::Error);
}

TEST_CASE("dropout is inert at inference and seeded in training") {
  tema::Rng rng(3);
  const auto p = tema::AttentionParams::Init(4, 2, 5, rng);
  const Matrix x = tema::InitUniformTable(5, 4, rng);
  tema::Rng d1(9), d2(9);
  const Vector a = tema::EncodeStream(x, p, {0.3, true, &d1});
  const Vector b = tema::EncodeStream(x, p, {0.3, true, &d2});
  CHECK((a - b).norm() == 0.0);
  tema::Rng d3(9);
  const Vector off = tema::EncodeStream(x, p, {0.3, false, &d3});
  CHECK((off - tema::EncodeStream(x, p, {})).norm() == 0.0);
}

TEST_CASE("backward matches finite differences") {
  tema::Rng rng(21);
  const auto p = tema::AttentionParams::Init(4, 2, 3, rng);
  const Matrix x = tema::InitUniformTable(3, 4, rng);
  const Matrix dout = tema::InitUniformTable(3, 4, rng);
  auto loss = [&](const tema::AttentionParams& q, const Matrix& in) {
    return tema::EncodeSequence(in, q, {}).cwiseProduct(dout).sum();
  };
  tema::StreamCache cache;
  tema::EncodeSequence(x, p, {}, &cache);
  auto grad = tema::AttentionParams::ZerosLike(p);
  const Matrix dx = tema::EncodeSequenceBackward(p, cache, dout, grad);
  const double h = 1e-6;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      auto plus = p, minus = p;
      plus.wq(i, j) += h;
      minus.wq(i, j) -= h;
      CHECK(grad.wq(i, j) == doctest::Approx((loss(plus, x) - loss(minus, x)) / (2 * h)).epsilon(1e-6));
      plus = p;
      minus = p;
      plus.wo(i, j) += h;
      minus.wo(i, j) -= h;
      CHECK(grad.wo(i, j) == doctest::Approx((loss(plus, x) - loss(minus, x)) / (2 * h)).epsilon(1e-6));
    }
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      Matrix xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      CHECK(dx(i, j) == doctest::Approx((loss(p, xp) - loss(p, xm)) / (2 * h)).epsilon(1e-6));
    }
  }
}

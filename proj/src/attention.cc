#include "tema/attention.h"

#include <cmath>
#include <limits>

namespace tema {
namespace {

// Row-wise softmax with entries above the diagonal excluded when causal.
Matrix MaskedSoftmax(const Matrix& scores, bool causal) {
  Matrix out = Matrix::Zero(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const Eigen::Index last = causal ? std::min(i, scores.cols() - 1) : scores.cols() - 1;
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j <= last; ++j) mx = std::max(mx, scores(i, j));
    double sum = 0.0;
    for (Eigen::Index j = 0; j <= last; ++j) {
      out(i, j) = std::exp(scores(i, j) - mx);
      sum += out(i, j);
    }
    for (Eigen::Index j = 0; j <= last; ++j) out(i, j) /= sum;
  }
  return out;
}

Matrix DropoutMask(Eigen::Index rows, Eigen::Index cols, const DropoutConfig& d) {
  Matrix mask(rows, cols);
  const double keep = 1.0 - d.rate;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = d.rng->Uniform() < keep ? 1.0 / keep : 0.0;
  }
  return mask;
}

}  // namespace

Matrix ScaledDotAttention(const Matrix& q, const Matrix& k, const Matrix& v,
                          bool causal, Matrix* weights) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw Error("attention shape mismatch");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix a = MaskedSoftmax((q * k.transpose()) * scale, causal);
  Matrix out = a * v;
  if (weights) *weights = std::move(a);
  return out;
}

AttentionParams AttentionParams::Init(int model_dim, int heads, int max_len,
                                      Rng& rng) {
  if (heads < 1 || model_dim % heads != 0) {
    throw ConfigError("model dim " + std::to_string(model_dim) +
                      " is not divisible by head count " + std::to_string(heads));
  }
  AttentionParams p;
  p.heads = heads;
  p.wq = InitUniformTable(model_dim, model_dim, rng);
  p.wk = InitUniformTable(model_dim, model_dim, rng);
  p.wv = InitUniformTable(model_dim, model_dim, rng);
  p.wo = InitUniformTable(model_dim, model_dim, rng);
  p.pos = InitUniformTable(max_len, model_dim, rng);
  return p;
}

AttentionParams AttentionParams::ZerosLike(const AttentionParams& p) {
  AttentionParams z;
  z.heads = p.heads;
  z.wq = Matrix::Zero(p.wq.rows(), p.wq.cols());
  z.wk = Matrix::Zero(p.wk.rows(), p.wk.cols());
  z.wv = Matrix::Zero(p.wv.rows(), p.wv.cols());
  z.wo = Matrix::Zero(p.wo.rows(), p.wo.cols());
  z.pos = Matrix::Zero(p.pos.rows(), p.pos.cols());
  return z;
}

Matrix EncodeSequence(const Matrix& tokens, const AttentionParams& params,
                      const DropoutConfig& dropout, StreamCache* cache) {
  if (tokens.rows() == 0) throw Error("empty stream");
  const int dim = params.model_dim();
  if (tokens.cols() != dim) {
    throw Error("stream token width " + std::to_string(tokens.cols()) +
                " does not match model dim " + std::to_string(dim));
  }
  const int dk = dim / params.heads;
  const Eigen::Index len = tokens.rows();

  StreamCache local;
  StreamCache& c = cache ? *cache : local;
  c.weights.assign(static_cast<std::size_t>(params.heads), Matrix());
  c.weight_masks.assign(static_cast<std::size_t>(params.heads), Matrix());
  if (dropout.active()) {
    c.input_mask = DropoutMask(len, dim, dropout);
    c.input = tokens.cwiseProduct(c.input_mask);
  } else {
    c.input_mask.resize(0, 0);
    c.input = tokens;
  }
  c.q = c.input * params.wq;
  c.k = c.input * params.wk;
  c.v = c.input * params.wv;
  c.concat.resize(len, dim);
  for (int h = 0; h < params.heads; ++h) {
    const auto hs = static_cast<std::size_t>(h);
    Matrix a;
    ScaledDotAttention(c.q.middleCols(h * dk, dk), c.k.middleCols(h * dk, dk),
                       c.v.middleCols(h * dk, dk), /*causal=*/true, &a);
    if (dropout.active()) {
      c.weight_masks[hs] = DropoutMask(len, len, dropout);
      c.concat.middleCols(h * dk, dk) =
          a.cwiseProduct(c.weight_masks[hs]) * c.v.middleCols(h * dk, dk);
    } else {
      c.concat.middleCols(h * dk, dk) = a * c.v.middleCols(h * dk, dk);
    }
    c.weights[hs] = std::move(a);
  }
  return c.concat * params.wo;
}

Vector EncodeStream(const Matrix& tokens, const AttentionParams& params,
                    const DropoutConfig& dropout) {
  const Matrix out = EncodeSequence(tokens, params, dropout);
  return out.row(out.rows() - 1).transpose();
}

Matrix EncodeSequenceBackward(const AttentionParams& params,
                              const StreamCache& cache, const Matrix& d_output,
                              AttentionParams& grad) {
  const int dim = params.model_dim();
  const int dk = dim / params.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  grad.wo.noalias() += cache.concat.transpose() * d_output;
  const Matrix d_concat = d_output * params.wo.transpose();

  Matrix dq(cache.q.rows(), dim);
  Matrix dk_all(cache.k.rows(), dim);
  Matrix dv(cache.v.rows(), dim);
  for (int h = 0; h < params.heads; ++h) {
    const auto hs = static_cast<std::size_t>(h);
    const auto& a = cache.weights[hs];
    const bool masked = cache.weight_masks[hs].size() > 0;
    const Matrix a_used = masked ? Matrix(a.cwiseProduct(cache.weight_masks[hs])) : a;
    const auto d_head = d_concat.middleCols(h * dk, dk);
    const auto v_head = cache.v.middleCols(h * dk, dk);

    dv.middleCols(h * dk, dk) = a_used.transpose() * d_head;
    Matrix d_a = d_head * v_head.transpose();
    if (masked) d_a = d_a.cwiseProduct(cache.weight_masks[hs]);
    // Softmax Jacobian row by row: dS = A * (dA - <dA, A>).
    const Eigen::VectorXd inner = d_a.cwiseProduct(a).rowwise().sum();
    Matrix d_s = a.cwiseProduct(d_a.colwise() - inner);
    d_s *= scale;
    dq.middleCols(h * dk, dk) = d_s * cache.k.middleCols(h * dk, dk);
    dk_all.middleCols(h * dk, dk) = d_s.transpose() * cache.q.middleCols(h * dk, dk);
  }

  grad.wq.noalias() += cache.input.transpose() * dq;
  grad.wk.noalias() += cache.input.transpose() * dk_all;
  grad.wv.noalias() += cache.input.transpose() * dv;
  Matrix d_input = dq * params.wq.transpose() + dk_all * params.wk.transpose() +
                   dv * params.wv.transpose();
  if (cache.input_mask.size() > 0) d_input = d_input.cwiseProduct(cache.input_mask);
  return d_input;
}

}  // namespace tema

#ifndef TEMA_ATTENTION_H_
#define TEMA_ATTENTION_H_

#include <vector>

#include "tema/common.h"
#include "tema/embedding.h"

namespace tema {

// softmax(Q K^T / sqrt(d_k) + mask) V for one head. With `causal`, position i
// attends to positions <= i. `weights`, when given, receives the attention
// matrix.
Matrix ScaledDotAttention(const Matrix& q, const Matrix& k, const Matrix& v,
                          bool causal, Matrix* weights = nullptr);

// Projections of one attention stream. All square in the stream's model dim.
struct AttentionParams {
  Matrix wq;
  Matrix wk;
  Matrix wv;
  Matrix wo;
  Matrix pos;  // max_len x model_dim
  int heads = 1;

  int model_dim() const { return static_cast<int>(wq.rows()); }
  int max_len() const { return static_cast<int>(pos.rows()); }

  static AttentionParams Init(int model_dim, int heads, int max_len, Rng& rng);
  static AttentionParams ZerosLike(const AttentionParams& p);
};

struct StreamCache {
  Matrix input;       // tokens after input dropout
  Matrix input_mask;  // empty when dropout is off
  Matrix q, k, v;
  std::vector<Matrix> weights;       // per head, post-softmax
  std::vector<Matrix> weight_masks;  // per head, empty when dropout is off
  Matrix concat;                     // per-head outputs side by side
};

struct DropoutConfig {
  double rate = 0.0;
  bool training = false;
  Rng* rng = nullptr;

  bool active() const { return training && rate > 0.0 && rng != nullptr; }
};

// Causal multi-head self-attention over `tokens` (len x model_dim, positional
// embeddings already added). Returns the output-projected representation of
// every position; row t depends only on tokens 0..t.
Matrix EncodeSequence(const Matrix& tokens, const AttentionParams& params,
                      const DropoutConfig& dropout, StreamCache* cache = nullptr);

// Final-position representation. Throws Error("empty stream") for len 0.
Vector EncodeStream(const Matrix& tokens, const AttentionParams& params,
                    const DropoutConfig& dropout);

// Backpropagates d(output) through EncodeSequence. Accumulates projection
// gradients into `grad` (positional rows are left to the caller) and returns
// d(tokens).
Matrix EncodeSequenceBackward(const AttentionParams& params,
                              const StreamCache& cache, const Matrix& d_output,
                              AttentionParams& grad);

}  // namespace tema

#endif  // TEMA_ATTENTION_H_

#ifndef TEMA_EMBEDDING_H_
#define TEMA_EMBEDDING_H_

#include <cstdint>
#include <string>
#include <vector>

#include "tema/binary_io.h"
#include "tema/common.h"
#include "tema/data.h"
#include "tema/tagging.h"

namespace tema {

// xoshiro256** seeded through SplitMix64. Doubles are derived by hand so the
// stream does not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  std::uint64_t NextU64();
  double Uniform();  // [0, 1)
  double Uniform(double lo, double hi);
  double Normal();
  // Uniform integer in [0, n).
  std::uint64_t Below(std::uint64_t n);

 private:
  std::uint64_t state_[4];
};

// rows x dim table with entries uniform in (-1/sqrt(dim), 1/sqrt(dim)).
Matrix InitUniformTable(int rows, int dim, Rng& rng);

// Tanh-approximation GELU: 0.5x(1 + tanh(sqrt(2/pi)(x + 0.044715x^3))).
double Gelu(double x);
double GeluDerivative(double x);

// Non-trainable per-item vectors indexed by global catalog index.
struct FrozenEmbeddingStore {
  TensorKind modality = TensorKind::kImage;
  Matrix vectors;
  int missing = 0;

  int dim() const { return static_cast<int>(vectors.cols()); }
};

// Writes one tensor block. When `item_ids` is non-empty, a sidecar
// `<path>.ids` lists the item of each row so the file can be re-aligned to a
// different catalog.
void WriteFrozenEmbeddings(const std::string& path, TensorKind modality,
                           const Matrix& vectors,
                           const std::vector<std::string>& item_ids = {});

// Aligns rows to catalog global indices. Without a sidecar the file must
// already be in catalog order. Items absent from the file get a zero vector
// and bump `missing`.
FrozenEmbeddingStore LoadFrozenEmbeddings(const std::string& path,
                                          const ItemCatalog& catalog,
                                          TensorKind expected_modality);

// Sum_i w_i * E_tag[i]. Throws Error naming an out-of-range index.
Vector PoolTagEmbedding(const TagScoreVector& weights, const Matrix& tag_table);

// Per-row cosine of h against every row of `rows`. Zero rows score 0.
// Throws Error when h has zero norm or the widths differ.
Vector CosineSimilarityScores(const Vector& h, const Matrix& rows);

// Two-layer GELU network mapping concat(e_id, e_img, e_tex, e_tag) to q dims.
struct FusionMlp {
  Matrix w1;  // input x hidden
  Matrix b1;  // 1 x hidden
  Matrix w2;  // hidden x q
  Matrix b2;  // 1 x q

  int input_dim() const { return static_cast<int>(w1.rows()); }
  int output_dim() const { return static_cast<int>(w2.cols()); }

  static FusionMlp Init(int input_dim, int hidden, int output_dim, Rng& rng);

  struct Cache {
    Matrix input;
    Matrix pre_activation;
    Matrix activation;
  };
  // Row-wise over a batch of concatenated inputs.
  Matrix Forward(const Matrix& input, Cache* cache = nullptr) const;
  // Accumulates parameter gradients into `grad` and returns d(input).
  Matrix Backward(const Cache& cache, const Matrix& d_output,
                  FusionMlp& grad) const;
};

// Concatenates the four item vectors and applies the fusion MLP. Throws Error
// with expected/actual widths on mismatch.
Vector FuseItemEmbedding(const Vector& e_id, const Vector& e_img,
                         const Vector& e_tex, const Vector& e_tag,
                         const FusionMlp& mlp);

}  // namespace tema

#endif  // TEMA_EMBEDDING_H_

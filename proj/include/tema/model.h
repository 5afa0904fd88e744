#ifndef TEMA_MODEL_H_
#define TEMA_MODEL_H_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tema/attention.h"
#include "tema/common.h"
#include "tema/data.h"
#include "tema/embedding.h"
#include "tema/tagging.h"

namespace tema {

enum class SequenceKind : std::uint8_t { kX = 0, kY = 1, kMerged = 2 };
enum class Modality : std::uint8_t { kId = 0, kImg = 1, kTex = 2, kTag = 3, kFused = 4 };

inline constexpr int kNumModalities = 5;
inline constexpr std::array<SequenceKind, 3> kSequenceKinds = {
    SequenceKind::kX, SequenceKind::kY, SequenceKind::kMerged};
inline constexpr std::array<Modality, 4> kBaseModalities = {
    Modality::kId, Modality::kImg, Modality::kTex, Modality::kTag};

struct StreamId {
  SequenceKind sequence = SequenceKind::kX;
  Modality modality = Modality::kId;

  auto operator<=>(const StreamId&) const = default;
  std::string Name() const;
};

// The twelve (sequence, modality) streams in registry order.
std::vector<StreamId> BaseStreams();

enum class AttentionMode { kMulti, kShared };

struct Hyperparams {
  int q = 256;
  int e = 512;
  int d = 256;
  int d_t = 256;
  int hidden = 256;
  int heads = 2;
  int max_len = 50;
  std::array<double, 3> alphas = {0.4, 0.2, 0.2};
  double lambda1 = 0.3;
  double lambda2 = 0.1;
  double dropout = 0.3;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 256;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 42;
  // Ablation switches.
  bool use_tags = true;
  AttentionMode attention = AttentionMode::kMulti;
  bool fused_stream = false;
  double fused_weight = 0.2;

  double alpha_tag() const { return 1.0 - alphas[0] - alphas[1] - alphas[2]; }
  // Throws ConfigError naming the first invalid field.
  void Validate() const;
  nlohmann::json ToJson() const;
  static Hyperparams FromJson(const nlohmann::json& j);
};

// Fixed per-item inputs: frozen image/text vectors and soft tag weights, all
// indexed by global catalog index.
struct ItemFeatures {
  int num_x = 0;
  int num_y = 0;
  Matrix image;
  Matrix text;
  int num_tags = 0;
  std::vector<std::vector<std::pair<int, double>>> tag_weights;

  int num_items() const { return num_x + num_y; }
  // Digest over every frozen input, for "never mutated" checks.
  std::string Checksum() const;
};

// Builds ItemFeatures from per-item tag vectors (missing items get the unknown
// tag) and aligned frozen stores.
ItemFeatures AssembleFeatures(const ItemCatalog& catalog,
                              const FrozenEmbeddingStore& image,
                              const FrozenEmbeddingStore& text,
                              const std::vector<TagScoreVector>& tag_vectors,
                              int num_tags, int unknown_index);

struct ParamRef {
  std::string name;
  Matrix* value;
};

struct ModelParams {
  Hyperparams hyper;
  int num_x = 0;
  int num_y = 0;
  int num_tags = 0;
  Matrix id_table;   // items x d
  Matrix tag_table;  // tags x d_t
  FusionMlp mlp;
  std::vector<StreamId> stream_ids;
  std::vector<AttentionParams> streams;

  static ModelParams Init(const Hyperparams& hyper, int num_x, int num_y,
                          int num_tags);
  static ModelParams ZerosLike(const ModelParams& p);

  // Every trainable tensor exactly once, in a fixed order.
  std::vector<ParamRef> Registry();
  std::vector<const Matrix*> Registry() const;
  std::vector<std::string> RegistryNames() const;

  int StreamIndex(StreamId id) const;  // -1 when the stream does not exist
  int ModalityDim(Modality m) const;
  std::string Digest() const;
};

// A user's history as global item indices.
struct EncodedHistory {
  std::vector<int> merged;
  std::vector<int> x;
  std::vector<int> y;

  const std::vector<int>& Sequence(SequenceKind s) const {
    return s == SequenceKind::kX ? x : s == SequenceKind::kY ? y : merged;
  }
};

EncodedHistory EncodeHistory(const std::vector<SequenceEvent>& events,
                             const ItemCatalog& catalog);

// Per-forward item tables, one per modality, plus row norms for cosine.
struct FeatureTables {
  std::array<Matrix, kNumModalities> table;
  std::array<Vector, kNumModalities> norms;
  std::array<Matrix, kNumModalities> unit;  // rows scaled to unit norm
  FusionMlp::Cache mlp_cache;
  bool has_fused = false;
};

FeatureTables BuildFeatureTables(const ModelParams& params,
                                 const ItemFeatures& features);

// --- per-operation building blocks -----------------------------------------

// softmax(cosine(h, candidates)). Throws Error on a zero-norm h.
Vector ModalityPrediction(const Vector& h, const Matrix& candidates);

// alpha-weighted mix; tag receives the residual 1 - a1 - a2 - a3.
Vector FusePredictions(const Vector& p_id, const Vector& p_img,
                       const Vector& p_tex, const Vector& p_tag,
                       const std::array<double, 3>& alphas);

// Sum over positions of -log max(P_t[target_t], 1e-12).
double SequenceNll(const std::vector<Vector>& distributions,
                   const std::vector<int>& targets);

double TotalLoss(double loss_x, double loss_y, double loss_merged,
                 double lambda1, double lambda2);

inline constexpr double kProbabilityFloor = 1e-12;

// Final-position representation of every stream for a history.
std::map<StreamId, Vector> EncodeAllStreams(const EncodedHistory& history,
                                            const ModelParams& params,
                                            const FeatureTables& tables);

struct LossBreakdown {
  double x = 0.0;
  double y = 0.0;
  double merged = 0.0;
  double total = 0.0;
};

// Teacher-forced loss of one user. When `grad` is non-null, accumulates
// `grad_scale` * d(loss) into `grad` (stream and positional tensors) and into
// `table_grads` (per-modality item tables).
LossBreakdown UserLoss(const ModelParams& params, const FeatureTables& tables,
                       const EncodedHistory& history,
                       const DropoutConfig& dropout, ModelParams* grad,
                       std::array<Matrix, kNumModalities>* table_grads,
                       double grad_scale = 1.0);

// Pushes item-table gradients back into id/tag tables and the fusion MLP.
void BackpropTables(const ModelParams& params, const ItemFeatures& features,
                    const FeatureTables& tables,
                    const std::array<Matrix, kNumModalities>& table_grads,
                    ModelParams& grad);

std::array<Matrix, kNumModalities> ZeroTableGrads(const ModelParams& params,
                                                  const FeatureTables& tables);

// Inference scores over the target domain's catalog (local indices).
Vector ScoreDomain(const ModelParams& params, const FeatureTables& tables,
                   const EncodedHistory& history, Domain target);

// Catalog-local indices sorted by score desc, ties by index asc.
std::vector<int> RankItems(const Vector& scores);
// 1-based rank of `item` under RankItems ordering.
int RankOf(const Vector& scores, int item);

// Checkpoint: u32 length + canonical JSON header, then one tensor block per
// registry entry.
void WriteCheckpoint(const std::string& path, const ModelParams& params);
ModelParams ReadCheckpoint(const std::string& path);
std::string CheckpointBytes(const ModelParams& params);
ModelParams ParseCheckpoint(const std::string& bytes);

}  // namespace tema

#endif  // TEMA_MODEL_H_

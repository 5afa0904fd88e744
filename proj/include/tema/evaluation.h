#ifndef TEMA_EVALUATION_H_
#define TEMA_EVALUATION_H_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tema/data.h"
#include "tema/embedding.h"
#include "tema/model.h"
#include "tema/tagging.h"
#include "tema/training.h"

namespace tema {

struct RankResult {
  std::string user;
  std::string target;
  int rank = 1;  // 1-based
};

// Mean of 1/rank. Throws Error on empty input.
double Mrr(std::span<const int> ranks);
double Mrr(const std::vector<RankResult>& ranks);

// Mean of 1/log2(rank+1) for rank <= k, else 0 (one relevant item per user).
double NdcgAtK(std::span<const int> ranks, int k);
double NdcgAtK(const std::vector<RankResult>& ranks, int k);

struct MetricsReport {
  std::string domain;
  double mrr = 0.0;
  double ndcg5 = 0.0;
  double ndcg10 = 0.0;
  int users = 0;
  int skipped = 0;
  std::string fingerprint;

  nlohmann::json ToJson() const;
  std::string Table() const;
};

enum class EvalTarget { kValid, kTest };

// Ranks every held-out target that falls in `target_domain` against the full
// domain catalog. Users whose target lies in the other domain are skipped.
std::vector<RankResult> RankHeldOut(const ModelParams& params,
                                    const DatasetSplit& split,
                                    const ItemFeatures& features,
                                    Domain target_domain,
                                    EvalTarget which, int* skipped = nullptr);

MetricsReport Evaluate(const ModelParams& params, const DatasetSplit& split,
                       const ItemFeatures& features, Domain target_domain,
                       EvalTarget which = EvalTarget::kTest);

// Teacher-forced ranks on the training sequences: every merged training
// position whose next item is in `target_domain`, ranked from its prefix.
std::vector<RankResult> RankTrainingPositions(const ModelParams& params,
                                              const DatasetSplit& split,
                                              const ItemFeatures& features,
                                              Domain target_domain);

// --- ablation ------------------------------------------------------------------

enum class TagSource { kNone, kKeyword, kLlm };

struct AblationConfig {
  std::string name;
  TagSource tag_source = TagSource::kLlm;
  AttentionMode attention = AttentionMode::kMulti;
  TagRepresentation representation = TagRepresentation::kWeightedMultiHot;
  SelectionStrategy selection;
};

struct AblationSpec {
  std::string name;
  std::vector<AblationConfig> configs;

  static AblationSpec TableIV();
  static AblationSpec TableV();
  static AblationSpec TableVI();
  static AblationSpec ByName(const std::string& grid);
};

// Everything needed to rebuild features per configuration.
struct AblationInputs {
  DatasetSplit split;
  FrozenEmbeddingStore image;
  FrozenEmbeddingStore text;
  TagVocabulary vocabulary;  // shared, unknown tag last
  std::map<std::string, std::vector<RawTagScore>> raw_scores;  // shared indices
  std::map<std::string, ItemText> item_texts;
  Hyperparams hyper;
  Domain target_domain = Domain::kX;
};

ItemFeatures FeaturesForConfig(const AblationInputs& inputs,
                               const AblationConfig& config);

struct AblationRow {
  std::string config;
  std::optional<MetricsReport> metrics;  // empty when the cell failed
  std::string error;
};

std::vector<AblationRow> RunAblation(const AblationSpec& spec,
                                     const AblationInputs& inputs,
                                     const TrainOptions& options = {});

std::string AblationCsv(const std::vector<AblationRow>& rows);
std::string AblationTable(const std::vector<AblationRow>& rows);

}  // namespace tema

#endif  // TEMA_EVALUATION_H_

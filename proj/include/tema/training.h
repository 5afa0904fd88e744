#ifndef TEMA_TRAINING_H_
#define TEMA_TRAINING_H_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tema/data.h"
#include "tema/model.h"

namespace tema {

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t t = 0;

  static AdamState For(const ModelParams& params);
};

// Bias-corrected Adam over every registry tensor. Frozen inputs live outside
// the registry and are never touched.
void AdamStep(ModelParams& params, const ModelParams& grads, AdamState& state,
              double lr, double beta1 = 0.9, double beta2 = 0.999,
              double eps = 1e-8);

struct GradientResult {
  ModelParams grad;
  double loss = 0.0;  // mean over users
  LossBreakdown mean_breakdown;
};

struct ComputeOptions {
  DropoutConfig dropout;        // rng ignored; per-user streams derive from seed
  std::uint64_t dropout_seed = 0;
  int threads = 1;              // >1 reassociates gradient sums
};

// Exact gradient of the mean per-user loss over `batch`. Throws Error naming
// the offending loss term when the loss is not finite.
GradientResult ComputeGradients(const ModelParams& params,
                                const ItemFeatures& features,
                                const std::vector<EncodedHistory>& batch,
                                const ComputeOptions& options = {});

// Mean loss only (no gradients), with dropout off.
double BatchLoss(const ModelParams& params, const ItemFeatures& features,
                 const std::vector<EncodedHistory>& batch);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double valid_mrr = 0.0;
};

struct TrainRunReport {
  std::vector<EpochRecord> epochs;
  int stopping_epoch = 0;
  int best_epoch = 0;
  std::string best_checkpoint_path;
  double wall_seconds = 0.0;

  nlohmann::json ToJson() const;
  std::string EpochCsv() const;
};

struct TrainOptions {
  std::string out_dir;  // empty: keep the checkpoint in memory only
  int threads = 1;
  bool verbose = false;
};

struct TrainResult {
  TrainRunReport report;
  ModelParams best;  // exactly what the checkpoint stores
};

// Held-out validation loss: mean over users of -log of the normalized
// inference score of the validation target.
double ValidationLoss(const ModelParams& params, const ItemFeatures& features,
                      const DatasetSplit& split);

TrainResult Train(const DatasetSplit& split, const ItemFeatures& features,
                  const Hyperparams& hyper, const TrainOptions& options = {});

struct GridCell {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double valid_mrr = 0.0;
};

struct GridSearchResult {
  double best_lambda1 = 0.0;
  double best_lambda2 = 0.0;
  std::vector<GridCell> cells;
};

GridSearchResult GridSearch(const DatasetSplit& split,
                            const ItemFeatures& features,
                            const Hyperparams& hyper_template,
                            const std::vector<double>& lambda1_grid,
                            const std::vector<double>& lambda2_grid,
                            const TrainOptions& options = {});

}  // namespace tema

#endif  // TEMA_TRAINING_H_

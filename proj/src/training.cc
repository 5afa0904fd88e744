#include "tema/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "tema/evaluation.h"
#include "tema/log.h"

namespace tema {

using nlohmann::json;

namespace {

std::uint64_t MixSeed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

void AddInto(ModelParams& acc, const ModelParams& g) {
  auto a = acc.Registry();
  const auto b = g.Registry();
  for (std::size_t i = 0; i < a.size(); ++i) *a[i].value += *b[i];
}

struct Partial {
  ModelParams grad;
  std::array<Matrix, kNumModalities> table_grads;
  LossBreakdown sum;
};

void RunUsers(const ModelParams& params, const FeatureTables& tables,
              const std::vector<EncodedHistory>& batch, std::size_t begin,
              std::size_t end, const ComputeOptions& options, double scale,
              Partial& out) {
  for (std::size_t u = begin; u < end; ++u) {
    Rng rng(MixSeed(options.dropout_seed, u));
    DropoutConfig dropout = options.dropout;
    dropout.rng = &rng;
    const auto l = UserLoss(params, tables, batch[u], dropout, &out.grad,
                            &out.table_grads, scale);
    out.sum.x += l.x;
    out.sum.y += l.y;
    out.sum.merged += l.merged;
    out.sum.total += l.total;
  }
}

}  // namespace

AdamState AdamState::For(const ModelParams& params) {
  AdamState s;
  for (const Matrix* m : params.Registry()) {
    s.m.push_back(Matrix::Zero(m->rows(), m->cols()));
    s.v.push_back(Matrix::Zero(m->rows(), m->cols()));
  }
  return s;
}

void AdamStep(ModelParams& params, const ModelParams& grads, AdamState& state,
              double lr, double beta1, double beta2, double eps) {
  auto refs = params.Registry();
  const auto g = grads.Registry();
  if (refs.size() != g.size() || refs.size() != state.m.size()) {
    throw Error("optimizer state does not match the parameter registry");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    const Matrix& gi = *g[i];
    m = beta1 * m + (1.0 - beta1) * gi;
    v = beta2 * v + (1.0 - beta2) * gi.cwiseProduct(gi);
    refs[i].value->array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

GradientResult ComputeGradients(const ModelParams& params,
                                const ItemFeatures& features,
                                const std::vector<EncodedHistory>& batch,
                                const ComputeOptions& options) {
  if (batch.empty()) throw Error("empty batch");
  const FeatureTables tables = BuildFeatureTables(params, features);
  const double scale = 1.0 / static_cast<double>(batch.size());
  const int threads = std::max(
      1, std::min<int>(options.threads, static_cast<int>(batch.size())));

  std::vector<Partial> parts(static_cast<std::size_t>(threads));
  for (auto& p : parts) {
    p.grad = ModelParams::ZerosLike(params);
    p.table_grads = ZeroTableGrads(params, tables);
  }
  if (threads == 1) {
    RunUsers(params, tables, batch, 0, batch.size(), options, scale, parts[0]);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (batch.size() + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const std::size_t b = std::min(batch.size(), t * chunk);
      const std::size_t e = std::min(batch.size(), b + chunk);
      pool.emplace_back([&, b, e, t] {
        RunUsers(params, tables, batch, b, e, options, scale,
                 parts[static_cast<std::size_t>(t)]);
      });
    }
    for (auto& th : pool) th.join();
  }

  GradientResult result;
  result.grad = std::move(parts[0].grad);
  auto table_grads = std::move(parts[0].table_grads);
  LossBreakdown sum = parts[0].sum;
  for (std::size_t t = 1; t < parts.size(); ++t) {
    AddInto(result.grad, parts[t].grad);
    for (int m = 0; m < kNumModalities; ++m) table_grads[m] += parts[t].table_grads[m];
    sum.x += parts[t].sum.x;
    sum.y += parts[t].sum.y;
    sum.merged += parts[t].sum.merged;
    sum.total += parts[t].sum.total;
  }
  BackpropTables(params, features, tables, table_grads, result.grad);

  result.mean_breakdown = {sum.x * scale, sum.y * scale, sum.merged * scale,
                           sum.total * scale};
  result.loss = result.mean_breakdown.total;
  if (!std::isfinite(result.loss)) {
    std::string term = "total";
    if (!std::isfinite(sum.x)) term = "X stream loss";
    else if (!std::isfinite(sum.y)) term = "Y stream loss";
    else if (!std::isfinite(sum.merged)) term = "merged (X+Y) stream loss";
    throw Error("non-finite training loss in " + term);
  }
  return result;
}

double BatchLoss(const ModelParams& params, const ItemFeatures& features,
                 const std::vector<EncodedHistory>& batch) {
  if (batch.empty()) throw Error("empty batch");
  const FeatureTables tables = BuildFeatureTables(params, features);
  double total = 0.0;
  for (const auto& h : batch) {
    total += UserLoss(params, tables, h, DropoutConfig{}, nullptr, nullptr).total;
  }
  return total / static_cast<double>(batch.size());
}

json TrainRunReport::ToJson() const {
  json epochs_json = json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"valid_loss", e.valid_loss},
                           {"valid_mrr", e.valid_mrr}});
  }
  return {{"epochs", epochs_json},
          {"stopping_epoch", stopping_epoch},
          {"best_epoch", best_epoch},
          {"best_checkpoint_path", best_checkpoint_path},
          {"wall_seconds", wall_seconds}};
}

std::string TrainRunReport::EpochCsv() const {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_loss,valid_loss,valid_mrr\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.train_loss << ',' << e.valid_loss << ','
        << e.valid_mrr << '\n';
  }
  return out.str();
}

double ValidationLoss(const ModelParams& params, const ItemFeatures& features,
                      const DatasetSplit& split) {
  if (split.users.empty()) throw Error("no validation users");
  const FeatureTables tables = BuildFeatureTables(params, features);
  double total = 0.0;
  for (const auto& us : split.users) {
    const auto history = EncodeHistory(us.train, split.catalog);
    const Vector scores = ScoreDomain(params, tables, history, us.valid.domain);
    const double mass = scores.sum();
    const double p = mass > 0.0 ? scores[split.catalog.LocalIndex(us.valid.item)] / mass
                                : 0.0;
    total -= std::log(std::max(p, kProbabilityFloor));
  }
  return total / static_cast<double>(split.users.size());
}

TrainResult Train(const DatasetSplit& split, const ItemFeatures& features,
                  const Hyperparams& hyper, const TrainOptions& options) {
  hyper.Validate();
  if (split.users.empty()) throw Error("training split has no users");
  const auto start = std::chrono::steady_clock::now();

  std::vector<EncodedHistory> histories;
  for (const auto& us : split.users) {
    histories.push_back(EncodeHistory(us.train, split.catalog));
  }
  ModelParams params = ModelParams::Init(hyper, features.num_x, features.num_y,
                                         features.num_tags);
  AdamState adam = AdamState::For(params);

  auto valid_mrr = [&](const ModelParams& p) {
    std::vector<RankResult> ranks;
    for (Domain d : {Domain::kX, Domain::kY}) {
      auto r = RankHeldOut(p, split, features, d, EvalTarget::kValid);
      ranks.insert(ranks.end(), r.begin(), r.end());
    }
    return ranks.empty() ? 0.0 : Mrr(ranks);
  };

  TrainResult result;
  std::string best_bytes;
  double best_valid = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<std::size_t> order(histories.size());
  std::iota(order.begin(), order.end(), 0);
  std::int64_t step = 0;

  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    Rng shuffle_rng(MixSeed(hyper.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.Below(i)]);
    }
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size();
         b += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t e =
          std::min(order.size(), b + static_cast<std::size_t>(hyper.batch_size));
      std::vector<EncodedHistory> batch;
      for (std::size_t i = b; i < e; ++i) batch.push_back(histories[order[i]]);

      ComputeOptions copts;
      copts.dropout.rate = hyper.dropout;
      copts.dropout.training = true;
      copts.dropout_seed = MixSeed(hyper.seed ^ 0xD5u, static_cast<std::uint64_t>(step));
      copts.threads = options.threads;
      const auto g = ComputeGradients(params, features, batch, copts);
      AdamStep(params, g.grad, adam, hyper.lr, hyper.beta1, hyper.beta2, hyper.eps);
      epoch_loss += g.loss * static_cast<double>(batch.size());
      ++step;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    rec.valid_loss = ValidationLoss(params, features, split);
    rec.valid_mrr = valid_mrr(params);
    if (!std::isfinite(rec.valid_loss)) {
      result.report.epochs.push_back(rec);
      throw Error("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.report.epochs.push_back(rec);
    if (options.verbose) {
      LogInfo("epoch " + std::to_string(epoch) + " train " +
              std::to_string(rec.train_loss) + " valid " +
              std::to_string(rec.valid_loss) + " mrr " + std::to_string(rec.valid_mrr));
    }
    result.report.stopping_epoch = epoch;
    if (rec.valid_loss < best_valid) {
      best_valid = rec.valid_loss;
      best_bytes = CheckpointBytes(params);
      result.report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= hyper.patience) {
      break;
    }
  }

  result.best = ParseCheckpoint(best_bytes);
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    const auto path = (std::filesystem::path(options.out_dir) / "checkpoint.bin").string();
    std::ofstream out(path, std::ios::binary);
    out.write(best_bytes.data(), static_cast<std::streamsize>(best_bytes.size()));
    if (!out) throw Error("cannot write checkpoint " + path);
    result.report.best_checkpoint_path = path;
  }
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

GridSearchResult GridSearch(const DatasetSplit& split,
                            const ItemFeatures& features,
                            const Hyperparams& hyper_template,
                            const std::vector<double>& lambda1_grid,
                            const std::vector<double>& lambda2_grid,
                            const TrainOptions& options) {
  if (lambda1_grid.empty() || lambda2_grid.empty()) {
    throw ConfigError("grid search needs non-empty lambda grids");
  }
  auto l1 = lambda1_grid;
  auto l2 = lambda2_grid;
  std::sort(l1.begin(), l1.end());
  std::sort(l2.begin(), l2.end());
  GridSearchResult out;
  double best = -1.0;
  TrainOptions cell_options = options;
  cell_options.out_dir.clear();
  for (double a : l1) {
    for (double b : l2) {
      Hyperparams h = hyper_template;
      h.lambda1 = a;
      h.lambda2 = b;
      const auto run = Train(split, features, h, cell_options);
      const double mrr =
          run.report.epochs[static_cast<std::size_t>(run.report.best_epoch - 1)].valid_mrr;
      out.cells.push_back({a, b, mrr});
      // Strict improvement keeps the lexicographically smallest on ties.
      if (mrr > best) {
        best = mrr;
        out.best_lambda1 = a;
        out.best_lambda2 = b;
      }
    }
  }
  return out;
}

}  // namespace tema

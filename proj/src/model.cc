#include "tema/model.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "tema/binary_io.h"

namespace tema {

using nlohmann::json;

namespace {

const char* SequenceName(SequenceKind s) {
  switch (s) {
    case SequenceKind::kX: return "X";
    case SequenceKind::kY: return "Y";
    case SequenceKind::kMerged: return "XY";
  }
  return "?";
}

const char* ModalityName(Modality m) {
  switch (m) {
    case Modality::kId: return "id";
    case Modality::kImg: return "img";
    case Modality::kTex: return "tex";
    case Modality::kTag: return "tag";
    case Modality::kFused: return "fused";
  }
  return "?";
}

int Mi(Modality m) { return static_cast<int>(m); }

struct CatalogRange {
  int offset;
  int size;
};

CatalogRange RangeFor(SequenceKind s, int num_x, int num_y) {
  switch (s) {
    case SequenceKind::kX: return {0, num_x};
    case SequenceKind::kY: return {num_x, num_y};
    case SequenceKind::kMerged: return {0, num_x + num_y};
  }
  return {0, 0};
}

SequenceKind SequenceOf(Domain d) {
  return d == Domain::kX ? SequenceKind::kX : SequenceKind::kY;
}

// Trailing window of at most max_len items.
std::vector<int> Window(const std::vector<int>& seq, int max_len) {
  if (static_cast<int>(seq.size()) <= max_len) return seq;
  return {seq.end() - max_len, seq.end()};
}

struct WeightedModality {
  Modality modality;
  int stream;
  double weight;
};

// Streams feeding a sequence's prediction, with their mixing weights.
std::vector<WeightedModality> ActiveModalities(const ModelParams& params,
                                               SequenceKind s) {
  const auto& h = params.hyper;
  std::vector<WeightedModality> out;
  if (h.attention == AttentionMode::kShared) {
    if (s == SequenceKind::kMerged) {
      out.push_back({Modality::kFused,
                     params.StreamIndex({s, Modality::kFused}), 1.0});
    }
    return out;
  }
  std::array<double, 4> w = {h.alphas[0], h.alphas[1], h.alphas[2], h.alpha_tag()};
  if (!h.use_tags) {
    const double sum = w[0] + w[1] + w[2];
    for (int i = 0; i < 3; ++i) w[i] = sum > 0.0 ? w[i] / sum : 1.0 / 3.0;
    w[3] = 0.0;
  }
  const bool fused = h.fused_stream && s == SequenceKind::kMerged;
  const double base_scale = fused ? 1.0 - h.fused_weight : 1.0;
  for (int i = 0; i < 4; ++i) {
    const Modality m = kBaseModalities[static_cast<std::size_t>(i)];
    if (m == Modality::kTag && !h.use_tags) continue;
    out.push_back({m, params.StreamIndex({s, m}), base_scale * w[i]});
  }
  if (fused) {
    out.push_back({Modality::kFused,
                   params.StreamIndex({s, Modality::kFused}), h.fused_weight});
  }
  return out;
}

double SequenceCoefficient(const Hyperparams& h, SequenceKind s) {
  if (h.attention == AttentionMode::kShared) {
    return s == SequenceKind::kMerged ? 1.0 : 0.0;
  }
  switch (s) {
    case SequenceKind::kX: return 1.0;
    case SequenceKind::kY: return h.lambda1;
    case SequenceKind::kMerged: return h.lambda2;
  }
  return 0.0;
}

Matrix StreamTokens(const Matrix& table, const AttentionParams& stream,
                    const std::vector<int>& items) {
  Matrix tokens(static_cast<Eigen::Index>(items.size()), table.cols());
  for (std::size_t i = 0; i < items.size(); ++i) {
    tokens.row(static_cast<Eigen::Index>(i)) =
        table.row(items[i]) + stream.pos.row(static_cast<Eigen::Index>(i));
  }
  return tokens;
}

Vector Softmax(const Vector& x) {
  const double mx = x.maxCoeff();
  Vector e = (x.array() - mx).exp().matrix();
  return e / e.sum();
}

// Cosine scores of h against rows [offset, offset+size) of a unit-row table.
Vector RangeCosine(const Vector& h, const Matrix& unit, CatalogRange r) {
  const double hn = h.norm();
  if (!(hn > 0.0)) throw Error("zero-norm preference vector");
  return unit.middleRows(r.offset, r.size) * (h / hn);
}

void AddJson(json& j, const std::string& k, const std::array<double, 3>& a) {
  j[k] = json::array({a[0], a[1], a[2]});
}

}  // namespace

std::string StreamId::Name() const {
  return std::string(SequenceName(sequence)) + "." + ModalityName(modality);
}

std::vector<StreamId> BaseStreams() {
  std::vector<StreamId> out;
  for (SequenceKind s : kSequenceKinds) {
    for (Modality m : kBaseModalities) out.push_back({s, m});
  }
  return out;
}

// --- hyperparameters --------------------------------------------------------

void Hyperparams::Validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
  };
  positive(q, "q");
  positive(e, "e");
  positive(d, "d");
  positive(d_t, "d_t");
  positive(hidden, "hidden");
  positive(heads, "heads");
  positive(max_len, "max_len");
  positive(batch_size, "batch_size");
  positive(max_epochs, "max_epochs");
  positive(patience, "patience");
  for (const auto& [name, dim] : {std::pair{"d", d}, {"e", e}, {"d_t", d_t}, {"q", q}}) {
    if (dim % heads != 0) {
      throw ConfigError(std::string(name) + " must be divisible by heads");
    }
  }
  for (double a : alphas) {
    if (a < 0.0) throw ConfigError("alphas must be non-negative");
  }
  if (alpha_tag() < -1e-12) throw ConfigError("alphas must sum to at most 1");
  if (lambda1 < 0.0) throw ConfigError("lambda1 must be non-negative");
  if (lambda2 < 0.0) throw ConfigError("lambda2 must be non-negative");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("beta1 must be in [0, 1)");
  if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (fused_weight < 0.0 || fused_weight > 1.0) {
    throw ConfigError("fused_weight must be in [0, 1]");
  }
}

json Hyperparams::ToJson() const {
  json j = {
      {"q", q},
      {"e", e},
      {"d", d},
      {"d_t", d_t},
      {"hidden", hidden},
      {"heads", heads},
      {"max_len", max_len},
      {"lambda1", lambda1},
      {"lambda2", lambda2},
      {"dropout", dropout},
      {"lr", lr},
      {"beta1", beta1},
      {"beta2", beta2},
      {"eps", eps},
      {"batch_size", batch_size},
      {"max_epochs", max_epochs},
      {"patience", patience},
      {"seed", seed},
      {"use_tags", use_tags},
      {"attention", attention == AttentionMode::kMulti ? "multi" : "shared"},
      {"fused_stream", fused_stream},
      {"fused_weight", fused_weight},
  };
  AddJson(j, "alphas", alphas);
  return j;
}

Hyperparams Hyperparams::FromJson(const json& j) {
  static const std::vector<std::string> kKnown = {
      "q", "e", "d", "d_t", "hidden", "heads", "max_len", "alphas", "lambda1",
      "lambda2", "dropout", "lr", "beta1", "beta2", "eps", "batch_size",
      "max_epochs", "patience", "seed", "use_tags", "attention",
      "fused_stream", "fused_weight"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) {
      throw ConfigError("unknown hyperparameter key '" + key + "'");
    }
  }
  Hyperparams h;
  auto get = [&j](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception&) {
      throw ConfigError(std::string("bad value for hyperparameter '") + key + "'");
    }
  };
  get("q", h.q);
  get("e", h.e);
  get("d", h.d);
  get("d_t", h.d_t);
  get("hidden", h.hidden);
  get("heads", h.heads);
  get("max_len", h.max_len);
  get("alphas", h.alphas);
  get("lambda1", h.lambda1);
  get("lambda2", h.lambda2);
  get("dropout", h.dropout);
  get("lr", h.lr);
  get("beta1", h.beta1);
  get("beta2", h.beta2);
  get("eps", h.eps);
  get("batch_size", h.batch_size);
  get("max_epochs", h.max_epochs);
  get("patience", h.patience);
  get("seed", h.seed);
  get("use_tags", h.use_tags);
  get("fused_stream", h.fused_stream);
  get("fused_weight", h.fused_weight);
  if (j.contains("attention")) {
    const auto mode = j.at("attention").get<std::string>();
    if (mode == "multi") {
      h.attention = AttentionMode::kMulti;
    } else if (mode == "shared") {
      h.attention = AttentionMode::kShared;
    } else {
      throw ConfigError("bad value for hyperparameter 'attention'");
    }
  }
  h.Validate();
  return h;
}

// --- features ---------------------------------------------------------------

std::string ItemFeatures::Checksum() const {
  std::string buf = MatrixDigest(image) + MatrixDigest(text);
  for (const auto& row : tag_weights) {
    for (const auto& [k, w] : row) {
      buf.append(reinterpret_cast<const char*>(&k), sizeof(k));
      buf.append(reinterpret_cast<const char*>(&w), sizeof(w));
    }
    buf.push_back('\n');
  }
  return Sha256Hex(buf);
}

ItemFeatures AssembleFeatures(const ItemCatalog& catalog,
                              const FrozenEmbeddingStore& image,
                              const FrozenEmbeddingStore& text,
                              const std::vector<TagScoreVector>& tag_vectors,
                              int num_tags, int unknown_index) {
  ItemFeatures f;
  f.num_x = catalog.Size(Domain::kX);
  f.num_y = catalog.Size(Domain::kY);
  f.image = image.vectors;
  f.text = text.vectors;
  if (f.image.rows() != f.num_items() || f.text.rows() != f.num_items()) {
    throw Error("frozen embeddings are not aligned to the catalog");
  }
  f.num_tags = num_tags;
  f.tag_weights.assign(static_cast<std::size_t>(f.num_items()),
                       {{unknown_index, 1.0}});
  for (const auto& v : tag_vectors) {
    if (!catalog.Contains(v.item)) continue;
    for (const auto& [k, w] : v.entries) {
      if (k < 0 || k >= num_tags) {
        throw Error("item '" + v.item + "' has tag index " + std::to_string(k) +
                    " outside the vocabulary");
      }
    }
    f.tag_weights[static_cast<std::size_t>(catalog.GlobalIndex(v.item))] = v.entries;
  }
  return f;
}

// --- parameters ---------------------------------------------------------------

ModelParams ModelParams::Init(const Hyperparams& hyper, int num_x, int num_y,
                              int num_tags) {
  hyper.Validate();
  ModelParams p;
  p.hyper = hyper;
  p.num_x = num_x;
  p.num_y = num_y;
  p.num_tags = num_tags;
  Rng rng(hyper.seed);
  p.id_table = InitUniformTable(num_x + num_y, hyper.d, rng);
  p.tag_table = InitUniformTable(num_tags, hyper.d_t, rng);
  p.mlp = FusionMlp::Init(hyper.d + 2 * hyper.e + hyper.d_t, hyper.hidden,
                          hyper.q, rng);
  if (hyper.attention == AttentionMode::kMulti) {
    p.stream_ids = BaseStreams();
    if (hyper.fused_stream) {
      p.stream_ids.push_back({SequenceKind::kMerged, Modality::kFused});
    }
  } else {
    p.stream_ids = {{SequenceKind::kMerged, Modality::kFused}};
  }
  for (const auto& id : p.stream_ids) {
    p.streams.push_back(AttentionParams::Init(p.ModalityDim(id.modality),
                                              hyper.heads, hyper.max_len, rng));
  }
  return p;
}

ModelParams ModelParams::ZerosLike(const ModelParams& p) {
  ModelParams z = p;
  for (auto& ref : z.Registry()) ref.value->setZero();
  return z;
}

std::vector<ParamRef> ModelParams::Registry() {
  std::vector<ParamRef> out = {
      {"id_table", &id_table}, {"tag_table", &tag_table},
      {"mlp.w1", &mlp.w1},     {"mlp.b1", &mlp.b1},
      {"mlp.w2", &mlp.w2},     {"mlp.b2", &mlp.b2},
  };
  for (std::size_t i = 0; i < streams.size(); ++i) {
    const auto prefix = "stream." + stream_ids[i].Name() + ".";
    auto& s = streams[i];
    out.push_back({prefix + "wq", &s.wq});
    out.push_back({prefix + "wk", &s.wk});
    out.push_back({prefix + "wv", &s.wv});
    out.push_back({prefix + "wo", &s.wo});
    out.push_back({prefix + "pos", &s.pos});
  }
  return out;
}

std::vector<const Matrix*> ModelParams::Registry() const {
  std::vector<const Matrix*> out;
  for (auto& ref : const_cast<ModelParams*>(this)->Registry()) {
    out.push_back(ref.value);
  }
  return out;
}

std::vector<std::string> ModelParams::RegistryNames() const {
  std::vector<std::string> out;
  for (auto& ref : const_cast<ModelParams*>(this)->Registry()) {
    out.push_back(ref.name);
  }
  return out;
}

int ModelParams::StreamIndex(StreamId id) const {
  const auto it = std::find(stream_ids.begin(), stream_ids.end(), id);
  return it == stream_ids.end() ? -1 : static_cast<int>(it - stream_ids.begin());
}

int ModelParams::ModalityDim(Modality m) const {
  switch (m) {
    case Modality::kId: return hyper.d;
    case Modality::kImg:
    case Modality::kTex: return hyper.e;
    case Modality::kTag: return hyper.d_t;
    case Modality::kFused: return hyper.q;
  }
  return 0;
}

std::string ModelParams::Digest() const {
  std::string buf;
  for (const Matrix* m : Registry()) buf += MatrixDigest(*m);
  return Sha256Hex(buf);
}

EncodedHistory EncodeHistory(const std::vector<SequenceEvent>& events,
                             const ItemCatalog& catalog) {
  EncodedHistory h;
  for (const auto& e : events) {
    const int g = catalog.GlobalIndex(e.item);
    h.merged.push_back(g);
    (e.domain == Domain::kX ? h.x : h.y).push_back(g);
  }
  return h;
}

// --- forward ------------------------------------------------------------------

FeatureTables BuildFeatureTables(const ModelParams& params,
                                 const ItemFeatures& features) {
  const auto& h = params.hyper;
  if (features.num_x != params.num_x || features.num_y != params.num_y) {
    throw Error("item features do not match the model catalog");
  }
  if (features.image.cols() != h.e || features.text.cols() != h.e) {
    throw Error("frozen embedding width " + std::to_string(features.image.cols()) +
                " does not match e=" + std::to_string(h.e));
  }
  const int n = features.num_items();
  FeatureTables t;
  t.table[Mi(Modality::kId)] = params.id_table;
  t.table[Mi(Modality::kImg)] = features.image;
  t.table[Mi(Modality::kTex)] = features.text;
  Matrix pooled = Matrix::Zero(n, h.d_t);
  if (h.use_tags) {
    for (int i = 0; i < n; ++i) {
      for (const auto& [k, w] : features.tag_weights[static_cast<std::size_t>(i)]) {
        pooled.row(i) += w * params.tag_table.row(k);
      }
    }
  }
  t.table[Mi(Modality::kTag)] = std::move(pooled);

  bool needs_fused = false;
  for (const auto& id : params.stream_ids) needs_fused |= id.modality == Modality::kFused;
  if (needs_fused) {
    Matrix concat(n, h.d + 2 * h.e + h.d_t);
    concat << t.table[Mi(Modality::kId)], t.table[Mi(Modality::kImg)],
        t.table[Mi(Modality::kTex)], t.table[Mi(Modality::kTag)];
    t.table[Mi(Modality::kFused)] = params.mlp.Forward(concat, &t.mlp_cache);
    t.has_fused = true;
  }
  for (int m = 0; m < kNumModalities; ++m) {
    const Matrix& tab = t.table[m];
    if (tab.size() == 0) continue;
    t.norms[m] = tab.rowwise().norm();
    t.unit[m] = tab;
    for (Eigen::Index r = 0; r < tab.rows(); ++r) {
      if (t.norms[m][r] > 0.0) t.unit[m].row(r) /= t.norms[m][r];
    }
  }
  return t;
}

Vector ModalityPrediction(const Vector& h, const Matrix& candidates) {
  return Softmax(CosineSimilarityScores(h, candidates));
}

Vector FusePredictions(const Vector& p_id, const Vector& p_img,
                       const Vector& p_tex, const Vector& p_tag,
                       const std::array<double, 3>& alphas) {
  if (p_id.size() != p_img.size() || p_id.size() != p_tex.size() ||
      p_id.size() != p_tag.size()) {
    throw Error("fused predictions cover different catalogs");
  }
  const double rest = 1.0 - alphas[0] - alphas[1] - alphas[2];
  if (rest < -1e-12 || alphas[0] < 0 || alphas[1] < 0 || alphas[2] < 0) {
    throw Error("fusion weights must form a convex combination");
  }
  return alphas[0] * p_id + alphas[1] * p_img + alphas[2] * p_tex + rest * p_tag;
}

double SequenceNll(const std::vector<Vector>& distributions,
                   const std::vector<int>& targets) {
  if (distributions.size() != targets.size()) {
    throw Error("one target per distribution required");
  }
  double loss = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto& p = distributions[t];
    if (targets[t] < 0 || targets[t] >= p.size()) {
      throw Error("target " + std::to_string(targets[t]) + " not in catalog");
    }
    loss -= std::log(std::max(p[targets[t]], kProbabilityFloor));
  }
  return loss;
}

double TotalLoss(double loss_x, double loss_y, double loss_merged,
                 double lambda1, double lambda2) {
  return loss_x + lambda1 * loss_y + lambda2 * loss_merged;
}

std::map<StreamId, Vector> EncodeAllStreams(const EncodedHistory& history,
                                            const ModelParams& params,
                                            const FeatureTables& tables) {
  std::map<StreamId, Vector> out;
  for (std::size_t i = 0; i < params.stream_ids.size(); ++i) {
    const auto& id = params.stream_ids[i];
    const auto seq = Window(history.Sequence(id.sequence), params.hyper.max_len);
    if (seq.empty()) throw Error("empty stream " + id.Name());
    const auto tokens = StreamTokens(tables.table[Mi(id.modality)], params.streams[i], seq);
    out.emplace(id, EncodeStream(tokens, params.streams[i], DropoutConfig{}));
  }
  return out;
}

std::array<Matrix, kNumModalities> ZeroTableGrads(const ModelParams&,
                                                  const FeatureTables& tables) {
  std::array<Matrix, kNumModalities> g;
  for (int m = 0; m < kNumModalities; ++m) {
    g[m] = Matrix::Zero(tables.table[m].rows(), tables.table[m].cols());
  }
  return g;
}

LossBreakdown UserLoss(const ModelParams& params, const FeatureTables& tables,
                       const EncodedHistory& history,
                       const DropoutConfig& dropout, ModelParams* grad,
                       std::array<Matrix, kNumModalities>* table_grads,
                       double grad_scale) {
  const auto& hp = params.hyper;
  LossBreakdown out;
  for (SequenceKind s : kSequenceKinds) {
    const double coef = SequenceCoefficient(hp, s);
    const auto active = ActiveModalities(params, s);
    if (coef == 0.0 || active.empty()) continue;
    const auto seq = Window(history.Sequence(s), hp.max_len);
    const int len = static_cast<int>(seq.size());
    if (len < 2) continue;
    const CatalogRange range = RangeFor(s, params.num_x, params.num_y);

    const std::size_t nm = active.size();
    std::vector<StreamCache> caches(nm);
    std::vector<Matrix> outputs(nm);
    std::vector<Matrix> d_outputs(nm);
    for (std::size_t a = 0; a < nm; ++a) {
      const auto& stream = params.streams[static_cast<std::size_t>(active[a].stream)];
      const auto tokens = StreamTokens(tables.table[Mi(active[a].modality)], stream, seq);
      outputs[a] = EncodeSequence(tokens, stream, dropout, &caches[a]);
      if (grad) d_outputs[a] = Matrix::Zero(outputs[a].rows(), outputs[a].cols());
    }

    double seq_loss = 0.0;
    std::vector<Vector> probs(nm);
    std::vector<Vector> cosines(nm);
    for (int t = 0; t + 1 < len; ++t) {
      const int target = seq[static_cast<std::size_t>(t + 1)] - range.offset;
      Vector fused = Vector::Zero(range.size);
      for (std::size_t a = 0; a < nm; ++a) {
        const Vector h = outputs[a].row(t).transpose();
        // Attention dropout can blank the single weight at t = 0; such an h
        // scores every candidate 0.
        cosines[a] = h.squaredNorm() > 0.0
                         ? RangeCosine(h, tables.unit[Mi(active[a].modality)], range)
                         : Vector::Zero(range.size);
        probs[a] = Softmax(cosines[a]);
        fused += active[a].weight * probs[a];
      }
      const double p_target = fused[target];
      seq_loss -= std::log(std::max(p_target, kProbabilityFloor));
      if (!grad || p_target <= kProbabilityFloor) continue;

      const double g = -grad_scale * coef / p_target;
      for (std::size_t a = 0; a < nm; ++a) {
        const int m = Mi(active[a].modality);
        const Vector& p = probs[a];
        const double gm = active[a].weight * g;
        // Softmax backward with a one-hot upstream gradient.
        Vector d_cos = -gm * p[target] * p;
        d_cos[target] += gm * p[target];

        const Vector h = outputs[a].row(t).transpose();
        const double hn = h.norm();
        if (!(hn > 0.0)) continue;
        const Vector h_unit = h / hn;
        const auto unit = tables.unit[m].middleRows(range.offset, range.size);
        const Vector& s_cos = cosines[a];
        const Vector d_h =
            (unit.transpose() * d_cos - d_cos.dot(s_cos) * h_unit) / hn;
        d_outputs[a].row(t) += d_h.transpose();

        auto& dt = (*table_grads)[static_cast<std::size_t>(m)];
        for (int r = 0; r < range.size; ++r) {
          const double nr = tables.norms[m][range.offset + r];
          if (nr <= 0.0 || d_cos[r] == 0.0) continue;
          dt.row(range.offset + r) +=
              (d_cos[r] / nr) * (h_unit.transpose() - s_cos[r] * unit.row(r));
        }
      }
    }
    if (grad) {
      for (std::size_t a = 0; a < nm; ++a) {
        const auto si = static_cast<std::size_t>(active[a].stream);
        const Matrix d_tokens = EncodeSequenceBackward(
            params.streams[si], caches[a], d_outputs[a], grad->streams[si]);
        grad->streams[si].pos.topRows(len) += d_tokens;
        auto& dt = (*table_grads)[static_cast<std::size_t>(Mi(active[a].modality))];
        for (int i = 0; i < len; ++i) dt.row(seq[static_cast<std::size_t>(i)]) += d_tokens.row(i);
      }
    }
    switch (s) {
      case SequenceKind::kX: out.x = seq_loss; break;
      case SequenceKind::kY: out.y = seq_loss; break;
      case SequenceKind::kMerged: out.merged = seq_loss; break;
    }
  }
  if (hp.attention == AttentionMode::kShared) {
    out.total = out.merged;
  } else {
    out.total = TotalLoss(out.x, out.y, out.merged, hp.lambda1, hp.lambda2);
  }
  return out;
}

void BackpropTables(const ModelParams& params, const ItemFeatures& features,
                    const FeatureTables& tables,
                    const std::array<Matrix, kNumModalities>& table_grads,
                    ModelParams& grad) {
  const auto& h = params.hyper;
  grad.id_table += table_grads[Mi(Modality::kId)];
  Matrix d_pooled = table_grads[Mi(Modality::kTag)];
  if (tables.has_fused) {
    FusionMlp& g = grad.mlp;
    const Matrix d_concat =
        params.mlp.Backward(tables.mlp_cache, table_grads[Mi(Modality::kFused)], g);
    grad.id_table += d_concat.leftCols(h.d);
    d_pooled += d_concat.rightCols(h.d_t);
  }
  if (!h.use_tags) return;
  for (int i = 0; i < features.num_items(); ++i) {
    for (const auto& [k, w] : features.tag_weights[static_cast<std::size_t>(i)]) {
      grad.tag_table.row(k) += w * d_pooled.row(i);
    }
  }
}

Vector ScoreDomain(const ModelParams& params, const FeatureTables& tables,
                   const EncodedHistory& history, Domain target) {
  const auto& hp = params.hyper;
  const CatalogRange target_range = RangeFor(SequenceOf(target), params.num_x, params.num_y);
  Vector scores = Vector::Zero(target_range.size);

  // Final-position fused distribution of one sequence over its catalog.
  auto final_distribution = [&](SequenceKind s, Vector* out) {
    const auto active = ActiveModalities(params, s);
    const auto seq = Window(history.Sequence(s), hp.max_len);
    if (active.empty() || seq.empty()) return false;
    const CatalogRange range = RangeFor(s, params.num_x, params.num_y);
    Vector fused = Vector::Zero(range.size);
    for (const auto& a : active) {
      const auto& stream = params.streams[static_cast<std::size_t>(a.stream)];
      const auto tokens = StreamTokens(tables.table[Mi(a.modality)], stream, seq);
      const Vector h = EncodeStream(tokens, stream, DropoutConfig{});
      fused += a.weight * Softmax(RangeCosine(h, tables.unit[Mi(a.modality)], range));
    }
    *out = std::move(fused);
    return true;
  };

  Vector p;
  if (hp.attention == AttentionMode::kMulti &&
      final_distribution(SequenceOf(target), &p)) {
    scores += p;
  }
  // The other single-domain distribution has no mass on target-domain items.
  if (final_distribution(SequenceKind::kMerged, &p)) {
    Vector sub = p.segment(target_range.offset, target_range.size);
    const double mass = sub.sum();
    if (mass > 0.0) sub /= mass;
    const double coef = hp.attention == AttentionMode::kMulti ? hp.lambda2 : 1.0;
    scores += coef * sub;
  }
  return scores;
}

std::vector<int> RankItems(const Vector& scores) {
  std::vector<int> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

int RankOf(const Vector& scores, int item) {
  int rank = 1;
  const double s = scores[item];
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (scores[i] > s || (scores[i] == s && i < item)) ++rank;
  }
  return rank;
}

// --- checkpoints --------------------------------------------------------------

std::string CheckpointBytes(const ModelParams& params) {
  json header = {{"hyper", params.hyper.ToJson()},
                 {"num_x", params.num_x},
                 {"num_y", params.num_y},
                 {"num_tags", params.num_tags},
                 {"registry", params.RegistryNames()}};
  const std::string text = header.dump();
  std::ostringstream out(std::ios::binary);
  const auto len = static_cast<std::uint32_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Matrix* m : params.Registry()) {
    WriteTensorBlock(out, TensorKind::kParameter, *m);
  }
  return out.str();
}

ModelParams ParseCheckpoint(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  std::uint32_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), sizeof(len))) {
    throw Error("checkpoint truncated");
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw Error("checkpoint header truncated");
  const json header = json::parse(text);
  const auto hyper = Hyperparams::FromJson(header.at("hyper"));
  ModelParams p = ModelParams::Init(hyper, header.at("num_x").get<int>(),
                                    header.at("num_y").get<int>(),
                                    header.at("num_tags").get<int>());
  if (header.at("registry").get<std::vector<std::string>>() != p.RegistryNames()) {
    throw Error("checkpoint registry does not match the model layout");
  }
  for (auto& ref : p.Registry()) {
    TensorBlock block = ReadTensorBlock(in);
    if (block.values.rows() != ref.value->rows() ||
        block.values.cols() != ref.value->cols()) {
      throw Error("checkpoint tensor " + ref.name + " has the wrong shape");
    }
    *ref.value = std::move(block.values);
  }
  return p;
}

void WriteCheckpoint(const std::string& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path);
  const auto bytes = CheckpointBytes(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ModelParams ReadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return ParseCheckpoint(bytes);
}

}  // namespace tema

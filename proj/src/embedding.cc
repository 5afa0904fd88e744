#include "tema/embedding.h"

#include <cmath>
#include <fstream>
#include <numbers>
#include <unordered_map>

#include "tema/log.h"

namespace tema {

namespace {

std::uint64_t SplitMix(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t Rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

// xoshiro256** seeded through SplitMix64.
Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& s : state_) s = SplitMix(x);
}

std::uint64_t Rng::NextU64() {
  const std::uint64_t result = Rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = Rotl(state_[3], 45);
  return result;
}

double Rng::Uniform() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

double Rng::Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

double Rng::Normal() {
  // Box-Muller; 1 - U keeps the log argument in (0, 1].
  const double u1 = 1.0 - Uniform();
  const double u2 = Uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::Below(std::uint64_t n) {
  if (n == 0) return 0;
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = ~0ull - (~0ull % n);
  std::uint64_t v;
  do {
    v = NextU64();
  } while (v >= limit);
  return v % n;
}

Matrix InitUniformTable(int rows, int dim, Rng& rng) {
  if (rows < 0 || dim < 1) throw Error("table dims must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  Matrix m(rows, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = rng.Uniform(-bound, bound);
  }
  return m;
}

double Gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

double GeluDerivative(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

void WriteFrozenEmbeddings(const std::string& path, TensorKind modality,
                           const Matrix& vectors,
                           const std::vector<std::string>& item_ids) {
  if (modality == TensorKind::kParameter) {
    throw Error("frozen embeddings must be image or text");
  }
  if (!item_ids.empty() &&
      static_cast<Eigen::Index>(item_ids.size()) != vectors.rows()) {
    throw Error("item id list does not match embedding row count");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  WriteTensorBlock(out, modality, vectors);
  if (!item_ids.empty()) {
    std::ofstream ids(path + ".ids");
    for (const auto& id : item_ids) ids << id << '\n';
  }
}

FrozenEmbeddingStore LoadFrozenEmbeddings(const std::string& path,
                                          const ItemCatalog& catalog,
                                          TensorKind expected_modality) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open frozen embeddings " + path);
  TensorBlock block = ReadTensorBlock(in);
  if (block.kind != expected_modality) {
    throw Error(path + ": modality mismatch");
  }

  std::vector<std::string> ids;
  std::ifstream ids_in(path + ".ids");
  if (ids_in) {
    std::string line;
    while (std::getline(ids_in, line)) {
      if (!line.empty()) ids.push_back(line);
    }
    if (static_cast<Eigen::Index>(ids.size()) != block.values.rows()) {
      throw Error(path + ".ids: row count mismatch");
    }
  }

  FrozenEmbeddingStore store;
  store.modality = block.kind;
  store.vectors = Matrix::Zero(catalog.TotalSize(), block.values.cols());
  std::vector<bool> filled(static_cast<std::size_t>(catalog.TotalSize()), false);
  if (ids.empty()) {
    const Eigen::Index n =
        std::min<Eigen::Index>(block.values.rows(), catalog.TotalSize());
    store.vectors.topRows(n) = block.values.topRows(n);
    for (Eigen::Index i = 0; i < n; ++i) filled[static_cast<std::size_t>(i)] = true;
  } else {
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (!catalog.Contains(ids[r])) continue;
      const int g = catalog.GlobalIndex(ids[r]);
      store.vectors.row(g) = block.values.row(static_cast<Eigen::Index>(r));
      filled[static_cast<std::size_t>(g)] = true;
    }
  }
  for (bool f : filled) store.missing += f ? 0 : 1;
  if (store.missing > 0) {
    LogWarning(path + ": " + std::to_string(store.missing) +
               " catalog items have no vector; using zeros");
  }
  return store;
}

Vector PoolTagEmbedding(const TagScoreVector& weights, const Matrix& tag_table) {
  Vector out = Vector::Zero(tag_table.cols());
  for (const auto& [idx, w] : weights.entries) {
    if (idx < 0 || idx >= tag_table.rows()) {
      throw Error("tag index " + std::to_string(idx) + " out of range (" +
                  std::to_string(tag_table.rows()) + " tags)");
    }
    out += w * tag_table.row(idx).transpose();
  }
  return out;
}

Vector CosineSimilarityScores(const Vector& h, const Matrix& rows) {
  if (h.size() != rows.cols()) {
    throw Error("cosine similarity width mismatch: query " +
                std::to_string(h.size()) + ", rows " + std::to_string(rows.cols()));
  }
  const double hn = h.norm();
  if (!(hn > 0.0)) throw Error("cosine similarity of a zero-norm query");
  Vector out(rows.rows());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const double rn = rows.row(r).norm();
    out[r] = rn > 0.0 ? rows.row(r).dot(h) / (hn * rn) : 0.0;
  }
  return out;
}

FusionMlp FusionMlp::Init(int input_dim, int hidden, int output_dim, Rng& rng) {
  // Bounds follow each layer's fan-in.
  auto uniform = [&rng](int rows, int cols, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.Uniform(-bound, bound);
    return m;
  };
  FusionMlp mlp;
  mlp.w1 = uniform(input_dim, hidden, input_dim);
  mlp.b1 = uniform(1, hidden, input_dim);
  mlp.w2 = uniform(hidden, output_dim, hidden);
  mlp.b2 = uniform(1, output_dim, hidden);
  return mlp;
}

Matrix FusionMlp::Forward(const Matrix& input, Cache* cache) const {
  if (input.cols() != w1.rows()) {
    throw Error("fusion MLP expects " + std::to_string(w1.rows()) +
                " input dims, got " + std::to_string(input.cols()));
  }
  Matrix pre = input * w1;
  pre.rowwise() += b1.row(0);
  Matrix act = pre.unaryExpr([](double x) { return Gelu(x); });
  Matrix out = act * w2;
  out.rowwise() += b2.row(0);
  if (cache) {
    cache->input = input;
    cache->pre_activation = std::move(pre);
    cache->activation = std::move(act);
  }
  return out;
}

Matrix FusionMlp::Backward(const Cache& cache, const Matrix& d_output,
                           FusionMlp& grad) const {
  grad.w2.noalias() += cache.activation.transpose() * d_output;
  grad.b2 += d_output.colwise().sum();
  Matrix d_act = d_output * w2.transpose();
  const Matrix d_pre = d_act.cwiseProduct(
      cache.pre_activation.unaryExpr([](double x) { return GeluDerivative(x); }));
  grad.w1.noalias() += cache.input.transpose() * d_pre;
  grad.b1 += d_pre.colwise().sum();
  return d_pre * w1.transpose();
}

Vector FuseItemEmbedding(const Vector& e_id, const Vector& e_img,
                         const Vector& e_tex, const Vector& e_tag,
                         const FusionMlp& mlp) {
  const Eigen::Index total = e_id.size() + e_img.size() + e_tex.size() + e_tag.size();
  if (total != mlp.input_dim()) {
    throw Error("fusion input width mismatch: expected " +
                std::to_string(mlp.input_dim()) + ", got " + std::to_string(total));
  }
  Matrix concat(1, total);
  concat << e_id.transpose(), e_img.transpose(), e_tex.transpose(), e_tag.transpose();
  return mlp.Forward(concat).row(0).transpose();
}

}  // namespace tema

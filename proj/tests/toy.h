// Tiny model fixtures.
#ifndef TEMA_TESTS_TOY_H_
#define TEMA_TESTS_TOY_H_

#include <vector>

#include "tema/embedding.h"
#include "tema/model.h"

namespace toy {

inline tema::Hyperparams Hyper(int dim = 8) {
  tema::Hyperparams h;
  h.q = h.e = h.d = h.d_t = h.hidden = dim;
  h.heads = 2;
  h.max_len = 6;
  h.batch_size = 4;
  h.seed = 5;
  return h;
}

// nx + ny items, random frozen vectors, 1-3 weighted tags per item.
inline tema::ItemFeatures Features(int nx, int ny, int dim, int num_tags,
                                   std::uint64_t seed) {
  tema::Rng rng(seed);
  tema::ItemFeatures f;
  f.num_x = nx;
  f.num_y = ny;
  f.image = tema::InitUniformTable(nx + ny, dim, rng);
  f.text = tema::InitUniformTable(nx + ny, dim, rng);
  f.num_tags = num_tags;
  for (int i = 0; i < nx + ny; ++i) {
    std::vector<std::pair<int, double>> w;
    const int k = 1 + static_cast<int>(rng.Below(3));
    double total = 0.0;
    for (int j = 0; j < k; ++j) {
      const int tag = (i + 2 * j) % num_tags;
      bool dup = false;
      for (const auto& e : w) dup |= e.first == tag;
      if (dup) continue;
      const double s = 1.0 + static_cast<double>(rng.Below(9));
      w.emplace_back(tag, s);
      total += s;
    }
    for (auto& e : w) e.second /= total;
    f.tag_weights.push_back(std::move(w));
  }
  return f;
}

// Random histories with at least two events in each domain.
inline std::vector<tema::EncodedHistory> Histories(int users, int nx, int ny,
                                                   int len, std::uint64_t seed) {
  tema::Rng rng(seed);
  std::vector<tema::EncodedHistory> out;
  for (int u = 0; u < users; ++u) {
    tema::EncodedHistory h;
    for (int t = 0; t < len; ++t) {
      const bool in_x = t < 2 ? true : t < 4 ? false : rng.Uniform() < 0.5;
      const int item = in_x ? static_cast<int>(rng.Below(static_cast<std::uint64_t>(nx)))
                            : nx + static_cast<int>(rng.Below(static_cast<std::uint64_t>(ny)));
      h.merged.push_back(item);
      (in_x ? h.x : h.y).push_back(item);
    }
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace toy

#endif  // TEMA_TESTS_TOY_H_

// Brute-force reference implementations shared by the unit and acceptance
// tests. Deliberately naive: plain loops over std containers.
#ifndef TEMA_TESTS_ORACLES_H_
#define TEMA_TESTS_ORACLES_H_

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tema/attention.h"
#include "tema/data.h"
#include "tema/tagging.h"

namespace oracle {

inline double Mrr(const std::vector<int>& ranks) {
  double s = 0.0;
  for (int r : ranks) s += 1.0 / r;
  return s / static_cast<double>(ranks.size());
}

inline double Ndcg(const std::vector<int>& ranks, int k) {
  double s = 0.0;
  for (int r : ranks) {
    if (r <= k) s += 1.0 / std::log2(r + 1.0);
  }
  return s / static_cast<double>(ranks.size());
}

// Count in how many responses each canonical tag occurs (once per response),
// average its scores, then sort.
inline std::vector<std::string> Vote(const std::vector<tema::TagResponse>& responses,
                                     int n) {
  std::map<std::string, int> freq;
  std::map<std::string, double> total;
  std::map<std::string, int> seen;
  for (const auto& r : responses) {
    std::set<std::string> in_this;
    for (const auto& p : r.pairs) {
      std::string t;
      for (char c : p.tag) t += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.pop_back();
      while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) t.erase(t.begin());
      if (t.empty()) continue;
      if (!in_this.insert(t).second) continue;
      freq[t] += 1;
      total[t] += p.score;
      seen[t] += 1;
    }
  }
  std::vector<std::string> tags;
  for (const auto& [t, f] : freq) tags.push_back(t);
  std::sort(tags.begin(), tags.end(), [&](const std::string& a, const std::string& b) {
    if (freq[a] != freq[b]) return freq[a] > freq[b];
    const double ma = total[a] / seen[a];
    const double mb = total[b] / seen[b];
    if (ma != mb) return ma > mb;
    return a < b;
  });
  if (static_cast<int>(tags.size()) > n) tags.resize(static_cast<std::size_t>(n));
  return tags;
}

using Dense = std::vector<std::vector<double>>;

inline Dense ToDense(const tema::Matrix& m) {
  Dense d(static_cast<std::size_t>(m.rows()),
          std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) d[i][j] = m(i, j);
  return d;
}

inline Dense MatMul(const Dense& a, const Dense& b) {
  Dense c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

// Causal multi-head attention, no dropout, computed one output row at a time.
inline Dense Attention(const tema::Matrix& tokens, const tema::AttentionParams& p) {
  const Dense x = ToDense(tokens);
  const Dense q = MatMul(x, ToDense(p.wq));
  const Dense k = MatMul(x, ToDense(p.wk));
  const Dense v = MatMul(x, ToDense(p.wv));
  const std::size_t len = x.size();
  const std::size_t dim = x[0].size();
  const std::size_t dk = dim / static_cast<std::size_t>(p.heads);
  Dense concat(len, std::vector<double>(dim, 0.0));
  for (int h = 0; h < p.heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * dk;
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<double> s(i + 1);
      double mx = -1e300;
      for (std::size_t j = 0; j <= i; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dk; ++c) dot += q[i][off + c] * k[j][off + c];
        s[j] = dot / std::sqrt(static_cast<double>(dk));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (std::size_t j = 0; j <= i; ++j)
        for (std::size_t c = 0; c < dk; ++c) concat[i][off + c] += s[j] / z * v[j][off + c];
    }
  }
  return MatMul(concat, ToDense(p.wo));
}

inline std::set<std::string> SurvivingUsers(const std::vector<tema::Interaction>& log,
                                            int min_total, int min_per_domain) {
  std::map<std::string, int> total, in_x, in_y;
  for (const auto& r : log) {
    total[r.user]++;
    (r.domain == tema::Domain::kX ? in_x : in_y)[r.user]++;
  }
  std::set<std::string> keep;
  for (const auto& [u, n] : total) {
    if (n >= min_total && in_x[u] >= min_per_domain && in_y[u] >= min_per_domain) {
      keep.insert(u);
    }
  }
  return keep;
}

}  // namespace oracle

#endif  // TEMA_TESTS_ORACLES_H_

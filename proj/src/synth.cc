#include "tema/synth.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tema/embedding.h"

namespace tema {

namespace {

const std::vector<std::string>& TagWords() {
  static const std::vector<std::string> words = {
      "spicy",  "sweet",   "savory",  "crunchy", "organic", "vegan",
      "rustic", "modern",  "compact", "vintage", "premium", "classic",
      "smoky",  "tangy",   "glazed",  "minimal", "bright",  "hearty",
      "zesty",  "elegant", "frozen",  "artisan", "nordic",  "tropical"};
  return words;
}

std::string ItemId(Domain d, int k) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%c%03d", d == Domain::kX ? 'F' : 'K', k);
  return buf;
}

std::string UserId(int u) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "u%03d", u);
  return buf;
}

struct DomainLayout {
  std::vector<int> cycle;    // position -> local item index
  std::vector<int> where;    // local item index -> position
  std::vector<int> start;    // position -> first position of its cycle
  std::vector<int> length;   // position -> length of its cycle
  std::vector<int> primary;  // local item index -> primary tag
};

int Successor(const DomainLayout& lay, int pos) {
  const auto p = static_cast<std::size_t>(pos);
  return lay.start[p] + (pos - lay.start[p] + 1) % lay.length[p];
}

}  // namespace

PlantedAffinities SynthDataset::Planted() const {
  PlantedAffinities p;
  p.tags = tags;
  for (const auto& item : items) {
    auto& row = p.item_affinity[item.id];
    for (const auto& [tag, w] : item.affinity) row[tag] = w;
  }
  return p;
}

SynthDataset GenerateSynthetic(const SynthOptions& o) {
  if (o.num_tags < 3 || o.num_tags > static_cast<int>(TagWords().size())) {
    throw ConfigError("synth: num_tags must be in [3, " +
                      std::to_string(TagWords().size()) + "]");
  }
  if (o.items_per_domain < 3 || o.num_users < 1 || o.min_events < 6 ||
      o.max_events < o.min_events || o.embedding_dim < 1 ||
      !(o.primary_min > 0.5 && o.primary_min <= o.primary_max && o.primary_max < 0.95)) {
    throw ConfigError("synth: invalid size parameters");
  }
  Rng rng(o.seed);
  SynthDataset data;
  data.options = o;
  data.tags.assign(TagWords().begin(), TagWords().begin() + o.num_tags);

  const int n = o.items_per_domain;
  const int dim = o.embedding_dim;
  Matrix tag_img(o.num_tags, dim), tag_tex(o.num_tags, dim);
  for (int i = 0; i < o.num_tags; ++i) {
    for (int j = 0; j < dim; ++j) {
      tag_img(i, j) = rng.Normal();
      tag_tex(i, j) = rng.Normal();
    }
  }

  const int t = o.num_tags;
  if (n > t * (t - 1)) {
    throw ConfigError("synth: at most num_tags*(num_tags-1) items per domain");
  }
  // Hidden tag permutation sigma: order[i] -> order[i+1].
  std::vector<int> order(static_cast<std::size_t>(t));
  for (int k = 0; k < t; ++k) order[static_cast<std::size_t>(k)] = k;
  for (int k = t; k > 1; --k) {
    std::swap(order[static_cast<std::size_t>(k - 1)],
              order[rng.Below(static_cast<std::uint64_t>(k))]);
  }

  DomainLayout layout[2];
  data.image.resize(2 * n, dim);
  data.text.resize(2 * n, dim);
  for (Domain d : {Domain::kX, Domain::kY}) {
    auto& lay = layout[DomainIndex(d)];
    lay.cycle.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) lay.cycle[static_cast<std::size_t>(k)] = k;
    for (int k = n; k > 1; --k) {
      std::swap(lay.cycle[static_cast<std::size_t>(k - 1)],
                lay.cycle[rng.Below(static_cast<std::uint64_t>(k))]);
    }
    lay.where.resize(static_cast<std::size_t>(n));
    lay.primary.resize(static_cast<std::size_t>(n));
    // Positions are laid out orbit by orbit: the item at position k of an
    // orbit carries tags (sigma^k(p0), sigma^k(s0)).
    lay.start.resize(static_cast<std::size_t>(n));
    lay.length.resize(static_cast<std::size_t>(n));
    std::vector<int> seq_p(static_cast<std::size_t>(n)), seq_s(static_cast<std::size_t>(n));
    std::vector<int> offsets(static_cast<std::size_t>(t - 1));
    for (int k = 0; k < t - 1; ++k) offsets[static_cast<std::size_t>(k)] = k + 1;
    for (int k = t - 1; k > 1; --k) {
      std::swap(offsets[static_cast<std::size_t>(k - 1)],
                offsets[rng.Below(static_cast<std::uint64_t>(k))]);
    }
    for (int begin = 0, orbit = 0; begin < n; ++orbit) {
      const int end = std::min(n, begin + t);
      const int first = static_cast<int>(rng.Below(static_cast<std::uint64_t>(t)));
      const int off = offsets[static_cast<std::size_t>(orbit)];
      for (int k = begin; k < end; ++k) {
        const int at = (first + k - begin) % t;
        seq_p[static_cast<std::size_t>(k)] = order[static_cast<std::size_t>(at)];
        seq_s[static_cast<std::size_t>(k)] = order[static_cast<std::size_t>((at + off) % t)];
        lay.start[static_cast<std::size_t>(k)] = begin;
        lay.length[static_cast<std::size_t>(k)] = end - begin;
      }
      begin = end;
    }

    std::vector<SynthItem> items(static_cast<std::size_t>(n));
    for (int pos = 0; pos < n; ++pos) {
      const int local = lay.cycle[static_cast<std::size_t>(pos)];
      lay.where[static_cast<std::size_t>(local)] = pos;
      const int p = seq_p[static_cast<std::size_t>(pos)];
      const int s = seq_s[static_cast<std::size_t>(pos)];
      lay.primary[static_cast<std::size_t>(local)] = p;

      SynthItem& item = items[static_cast<std::size_t>(local)];
      item.id = ItemId(d, local);
      item.domain = d;
      double wp = rng.Uniform(o.primary_min, o.primary_max);
      double ws = 1.0 - wp;
      int third = -1;
      if (rng.Uniform() < o.tertiary_prob) {
        do {
          third = static_cast<int>(rng.Below(static_cast<std::uint64_t>(o.num_tags)));
        } while (third == p || third == s);
      }
      double wt = 0.0;
      if (third >= 0) {
        wt = rng.Uniform(0.05, 0.12);
        ws -= wt;
      }
      item.affinity.push_back({data.tags[static_cast<std::size_t>(p)], wp});
      item.affinity.push_back({data.tags[static_cast<std::size_t>(s)], ws});
      if (third >= 0) item.affinity.push_back({data.tags[static_cast<std::size_t>(third)], wt});
      item.title = data.tags[static_cast<std::size_t>(p)] + " " +
                   data.tags[static_cast<std::size_t>(s)] + " " +
                   (d == Domain::kX ? "dish " : "tool ") + item.id;

      const int row = (d == Domain::kX ? 0 : n) + local;
      Vector img = tag_img.row(p).transpose();
      Vector tex = wp * tag_tex.row(p).transpose() + ws * tag_tex.row(s).transpose();
      if (third >= 0) tex += wt * tag_tex.row(third).transpose();
      tex /= tex.norm() / std::sqrt(static_cast<double>(dim));
      for (int j = 0; j < dim; ++j) {
        img[j] += o.image_noise * rng.Normal();
        tex[j] += o.text_noise * rng.Normal();
      }
      data.image.row(row) = img.normalized().transpose();
      data.text.row(row) = tex.normalized().transpose();
    }
    for (auto& it : items) data.items.push_back(std::move(it));
  }

  // Items of each domain grouped by primary tag, for preference jumps.
  std::vector<std::vector<int>> by_tag[2];
  for (int dd = 0; dd < 2; ++dd) {
    by_tag[dd].resize(static_cast<std::size_t>(o.num_tags));
    for (int local = 0; local < n; ++local) {
      by_tag[dd][static_cast<std::size_t>(layout[dd].primary[static_cast<std::size_t>(local)])]
          .push_back(local);
    }
  }
  auto pick_with_tag = [&](int dd, const std::vector<int>& prefs) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const int tag = prefs[rng.Below(prefs.size())];
      const auto& pool = by_tag[dd][static_cast<std::size_t>(tag)];
      if (!pool.empty()) return pool[rng.Below(pool.size())];
    }
    return static_cast<int>(rng.Below(static_cast<std::uint64_t>(n)));
  };

  const std::int64_t base_time = 1600000000;
  for (int u = 0; u < o.num_users; ++u) {
    // Hidden preference: a favourite tag plus two secondary ones.
    std::vector<int> prefs;
    while (prefs.size() < 3) {
      const int t = static_cast<int>(rng.Below(static_cast<std::uint64_t>(o.num_tags)));
      if (std::find(prefs.begin(), prefs.end(), t) == prefs.end()) prefs.push_back(t);
    }
    const int len = o.min_events +
                    static_cast<int>(rng.Below(static_cast<std::uint64_t>(
                        o.max_events - o.min_events + 1)));
    // Domain pattern with at least a third of the events in each domain.
    std::vector<int> doms(static_cast<std::size_t>(len));
    int count_x = 0;
    for (auto& dd : doms) {
      dd = rng.Uniform() < 0.5 ? 0 : 1;
      count_x += dd == 0;
    }
    const int min_each = len / 3;
    for (std::size_t i = 0; count_x < min_each; ++i) {
      if (doms[i] == 1) { doms[i] = 0; ++count_x; }
    }
    for (std::size_t i = 0; len - count_x < min_each; ++i) {
      if (doms[i] == 0) { doms[i] = 1; --count_x; }
    }
    if (o.end_in_x) {
      doms[static_cast<std::size_t>(len - 1)] = 0;
      doms[static_cast<std::size_t>(len - 2)] = 0;
    }

    int cur[2] = {-1, -1};
    const std::vector<int> fav = {prefs[0]};
    for (int step = 0; step < len; ++step) {
      const int dd = doms[static_cast<std::size_t>(step)];
      const auto& lay = layout[dd];
      int next;
      if (cur[dd] < 0) {
        next = pick_with_tag(dd, fav);
      } else if (rng.Uniform() >= o.follow_prob) {
        next = pick_with_tag(dd, prefs);
      } else {
        const int pos = lay.where[static_cast<std::size_t>(cur[dd])];
        next = lay.cycle[static_cast<std::size_t>(Successor(lay, pos))];
      }
      cur[dd] = next;
      const Domain d = dd == 0 ? Domain::kX : Domain::kY;
      data.log.push_back({UserId(u), ItemId(d, next), d,
                          base_time + static_cast<std::int64_t>(u) * 1000000 +
                              static_cast<std::int64_t>(step) * 3600});
    }
  }
  return data;
}

void WriteSynthetic(const SynthDataset& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path root(dir);
  {
    std::ofstream out(root / "interactions.tsv");
    if (!out) throw Error("cannot write " + (root / "interactions.tsv").string());
    for (const auto& r : data.log) {
      out << r.user << '\t' << r.item << '\t' << data.options.domains.Name(r.domain)
          << '\t' << r.timestamp << '\n';
    }
  }
  std::vector<std::pair<ItemText, std::string>> texts;
  std::vector<std::string> ids;
  for (const auto& item : data.items) {
    texts.push_back({{item.id, item.title, ""}, data.options.domains.Name(item.domain)});
    ids.push_back(item.id);
  }
  WriteItemTexts(texts, (root / "items.jsonl").string());
  WritePlantedAffinities(data.Planted(), (root / "planted.jsonl").string());
  WriteFrozenEmbeddings((root / "image.bin").string(), TensorKind::kImage,
                        data.image, ids);
  WriteFrozenEmbeddings((root / "text.bin").string(), TensorKind::kText,
                        data.text, ids);
}

}  // namespace tema

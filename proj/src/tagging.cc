#include "tema/tagging.h"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include "tema/binary_io.h"
#include "tema/log.h"

namespace tema {

using nlohmann::json;

namespace {

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t Fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t HashParts(std::uint64_t seed, std::string_view a,
                        std::string_view b = {}) {
  std::uint64_t h = SplitMix64(seed);
  h = Fnv1a(a, h);
  h = Fnv1a("\x1f", h);
  h = Fnv1a(b, h);
  return SplitMix64(h);
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t comma = s.find(',', start);
    if (comma == std::string::npos) comma = s.size();
    auto tag = CanonicalTag(std::string_view(s).substr(start, comma - start));
    if (!tag.empty()) out.push_back(std::move(tag));
    start = comma + 1;
  }
  return out;
}

std::string JoinTags(const std::vector<std::string>& tags) {
  std::string out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (i) out += ", ";
    out += tags[i];
  }
  return out;
}

// (score desc, tag asc) over raw integer scores.
void SortByScore(std::vector<RawTagScore>& v, const TagVocabulary& vocab) {
  std::sort(v.begin(), v.end(), [&](const RawTagScore& a, const RawTagScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return vocab.tags.at(a.tag_index) < vocab.tags.at(b.tag_index);
  });
}

}  // namespace

std::string CanonicalTag(std::string_view tag) {
  std::size_t b = 0;
  std::size_t e = tag.size();
  while (b < e && std::isspace(static_cast<unsigned char>(tag[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(tag[e - 1]))) --e;
  std::string out(tag.substr(b, e - b));
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

json TagResponse::ToJson() const {
  json arr = json::array();
  for (const auto& p : pairs) arr.push_back(json::array({p.tag, p.score}));
  return arr;
}

TagResponse TagResponse::FromJson(const json& j) {
  TagResponse r;
  for (const auto& p : j) {
    r.pairs.push_back({CanonicalTag(p.at(0).get<std::string>()),
                       p.at(1).get<double>()});
  }
  return r;
}

// --- prompts ---------------------------------------------------------------

PromptTemplate::PromptTemplate(std::string text, PromptKind kind)
    : text_(std::move(text)), kind_(kind) {
  const std::vector<std::string> required =
      kind == PromptKind::kDomainTags
          ? std::vector<std::string>{"{domain}", "{N}"}
          : std::vector<std::string>{"{item_title}", "{item_description}",
                                     "{tag_list}"};
  for (const auto& p : required) {
    if (text_.find(p) == std::string::npos) {
      throw ConfigError("prompt template is missing placeholder " + p);
    }
  }
}

PromptTemplate PromptTemplate::DefaultDomainTags() {
  return PromptTemplate(
      "You are building a tag vocabulary for a recommender system.\n"
      "List exactly {N} short semantic tags that describe items in the "
      "{domain} domain (genres, themes, styles, uses).\n"
      "Return a JSON array of [tag, relevance] pairs, relevance in [0, 1].",
      PromptKind::kDomainTags);
}

PromptTemplate PromptTemplate::DefaultItemMatch() {
  return PromptTemplate(
      "Item title: {item_title}\n"
      "Item description: {item_description}\n"
      "Candidate tags: {tag_list}\n"
      "For each candidate tag that applies to this item, give an integer "
      "relevance score from 1 to 100. Return a JSON array of [tag, score] "
      "pairs and omit tags that do not apply.",
      PromptKind::kItemMatch);
}

std::string PromptTemplate::Render(
    const std::map<std::string, std::string>& fields) const {
  std::string out;
  out.reserve(text_.size());
  std::size_t i = 0;
  while (i < text_.size()) {
    if (text_[i] == '{') {
      const std::size_t close = text_.find('}', i);
      if (close != std::string::npos) {
        const auto name = text_.substr(i + 1, close - i - 1);
        const auto it = fields.find(name);
        if (it != fields.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += text_[i++];
  }
  return out;
}

// --- providers -------------------------------------------------------------

MockProvider::MockProvider(std::uint64_t seed) : seed_(seed) {}

MockProvider::MockProvider(std::uint64_t seed, PlantedAffinities planted)
    : seed_(seed), planted_(std::move(planted)) {}

std::string MockProvider::Id() const {
  return "mock-v1:seed=" + std::to_string(seed_) + (planted_ ? ":planted" : "");
}

const std::vector<std::string>& MockProvider::TagPool(const std::string& domain) {
  static const std::map<std::string, std::vector<std::string>> kPools = {
      {"movie",
       {"war", "romance", "history", "comedy", "drama", "thriller", "horror",
        "documentary", "animation", "science fiction", "fantasy", "crime",
        "family", "musical", "western", "mystery", "adventure", "biography",
        "sports", "superhero", "action", "noir", "coming of age", "satire",
        "disaster", "spy", "martial arts", "independent", "classic", "foreign"}},
      {"book",
       {"war", "romance", "history", "mystery", "fantasy", "science fiction",
        "biography", "self help", "poetry", "thriller", "horror", "young adult",
        "children", "philosophy", "religion", "travel", "cooking", "business",
        "psychology", "classic literature", "short stories", "memoir",
        "graphic novel", "politics", "science", "art", "humor", "true crime",
        "adventure", "education"}},
      {"food",
       {"snack", "organic", "gluten free", "vegan", "spicy", "sweet", "savory",
        "beverage", "coffee", "tea", "baking", "breakfast", "condiment",
        "sauce", "candy", "chocolate", "nuts", "dried fruit", "pasta", "rice",
        "canned", "frozen", "dairy", "protein", "low sugar", "international",
        "gourmet", "bulk", "seasoning", "healthy"}},
      {"kitchen",
       {"cookware", "bakeware", "cutlery", "utensils", "storage", "appliance",
        "coffee maker", "blender", "knife", "cutting board", "dinnerware",
        "glassware", "nonstick", "stainless steel", "cast iron", "ceramic",
        "silicone", "dishwasher safe", "compact", "cleaning", "organization",
        "grilling", "measuring", "thermometer", "kettle", "food prep",
        "serving", "outdoor", "electric", "gift"}},
  };
  static const std::vector<std::string> kGeneric = {
      "popular", "classic", "modern", "premium", "budget", "gift", "durable",
      "compact", "family", "seasonal", "handmade", "eco friendly", "vintage",
      "colorful", "minimalist", "portable", "professional", "beginner",
      "bestseller", "limited edition", "imported", "local", "luxury",
      "everyday", "novelty", "educational", "outdoor", "indoor", "digital",
      "bundle"};
  const auto it = kPools.find(CanonicalTag(domain));
  return it == kPools.end() ? kGeneric : it->second;
}

TagResponse MockProvider::Query(const Prompt& prompt, double /*temperature*/) {
  TagResponse response;
  if (prompt.kind == PromptKind::kDomainTags) {
    const std::string domain = prompt.fields.count("domain")
                                   ? prompt.fields.at("domain")
                                   : std::string();
    int n = prompt.fields.count("N") ? std::stoi(prompt.fields.at("N")) : 30;
    std::vector<std::string> pool =
        planted_ ? planted_->tags : TagPool(domain);
    // Fisher-Yates driven by SplitMix64 so the order is portable.
    std::uint64_t state = HashParts(seed_, "domain", domain);
    for (std::size_t i = pool.size(); i > 1; --i) {
      state = SplitMix64(state);
      std::swap(pool[i - 1], pool[state % i]);
    }
    n = std::min<int>(n, static_cast<int>(pool.size()));
    for (int i = 0; i < n; ++i) {
      const auto h = HashParts(seed_, domain, pool[static_cast<std::size_t>(i)]);
      const double score = planted_ ? 1.0 : 0.5 + 0.01 * static_cast<double>(h % 51);
      response.pairs.push_back({CanonicalTag(pool[static_cast<std::size_t>(i)]), score});
    }
    return response;
  }

  const std::string item = prompt.fields.count("item_id")
                               ? prompt.fields.at("item_id")
                               : prompt.fields.at("item_title");
  const auto tags = SplitList(prompt.fields.at("tag_list"));
  if (planted_) {
    const auto it = planted_->item_affinity.find(item);
    if (it == planted_->item_affinity.end()) return response;
    for (const auto& tag : tags) {
      const auto a = it->second.find(tag);
      if (a == it->second.end() || a->second <= 0.0) continue;
      const double s = std::clamp(std::round(a->second * 100.0), 1.0, 100.0);
      response.pairs.push_back({tag, s});
    }
    return response;
  }
  for (const auto& tag : tags) {
    const double s = 1.0 + static_cast<double>(HashParts(seed_, item, tag) % 100);
    response.pairs.push_back({tag, s});
  }
  return response;
}

ScriptedProvider::ScriptedProvider(std::vector<TagResponse> script,
                                   std::string id)
    : script_(std::move(script)), id_(std::move(id)) {}

TagResponse ScriptedProvider::Query(const Prompt&, double) {
  if (script_.empty()) throw ProviderError("scripted provider has no responses");
  const auto& r = script_[static_cast<std::size_t>(calls_) % script_.size()];
  ++calls_;
  return r;
}

// --- cache -----------------------------------------------------------------

TagCache::TagCache(std::string path) : path_(std::move(path)) {
  if (path_.empty()) return;
  std::ifstream in(path_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    // First write wins; the file is append-only.
    entries_.emplace(j.at("key").get<std::string>(), j.at("response").dump());
  }
}

std::string TagCache::Key(const std::string& provider_id,
                          const std::string& prompt_text, int query_ordinal) {
  return Sha256Hex(provider_id + "\n" + std::to_string(query_ordinal) + "\n" +
                   prompt_text);
}

std::optional<std::string> TagCache::LookupRaw(const std::string& key) const {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<TagResponse> TagCache::Lookup(const std::string& key) const {
  auto raw = LookupRaw(key);
  if (!raw) return std::nullopt;
  return TagResponse::FromJson(json::parse(*raw));
}

void TagCache::Insert(const std::string& key, const TagResponse& response) {
  std::lock_guard<std::mutex> lock(mu_);
  const auto serialized = response.ToJson().dump();
  if (!entries_.emplace(key, serialized).second) return;
  if (path_.empty()) return;
  const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error("cannot append to tag cache " + path_);
  out << json{{"key", key}, {"response", json::parse(serialized)},
              {"created_at", now}}
             .dump()
      << '\n';
}

std::size_t TagCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

TagResponse CachedQuery(TagProvider& provider, TagCache* cache,
                        const Prompt& prompt, int query_ordinal,
                        const QueryOptions& options,
                        std::vector<std::string>* transcript) {
  const auto key = TagCache::Key(provider.Id(), prompt.text, query_ordinal);
  if (cache) {
    if (auto raw = cache->LookupRaw(key)) {
      if (transcript) transcript->push_back(*raw);
      return TagResponse::FromJson(json::parse(*raw));
    }
  }
  std::string last_error;
  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    try {
      TagResponse response = provider.Query(prompt, options.temperature);
      for (auto& p : response.pairs) p.tag = CanonicalTag(p.tag);
      if (transcript) transcript->push_back(response.ToJson().dump());
      if (cache) cache->Insert(key, response);
      return response;
    } catch (const ProviderError& e) {
      last_error = e.what();
      LogWarning("provider " + provider.Id() + " failed (attempt " +
                 std::to_string(attempt + 1) + "): " + last_error);
    }
  }
  if (!options.transcript_path.empty()) {
    std::ofstream out(options.transcript_path);
    if (transcript) {
      for (const auto& line : *transcript) out << line << '\n';
    }
  }
  throw ProviderError("provider " + provider.Id() + " failed after " +
                      std::to_string(options.max_retries + 1) +
                      " attempts: " + last_error);
}

// --- vocabulary ------------------------------------------------------------

TagVocabulary TagVocabulary::FromTags(std::string domain,
                                      std::vector<std::string> tags) {
  TagVocabulary v;
  v.domain = std::move(domain);
  for (auto& t : tags) {
    auto c = CanonicalTag(t);
    if (v.index.emplace(c, static_cast<int>(v.tags.size())).second) {
      v.tags.push_back(std::move(c));
    }
  }
  return v;
}

int TagVocabulary::IndexOf(const std::string& tag) const {
  const auto it = index.find(tag);
  return it == index.end() ? -1 : it->second;
}

TagVocabulary Vote(const std::vector<TagResponse>& responses, int n,
                   const std::string& domain) {
  if (n < 1) throw ConfigError("tag count N must be >= 1");
  struct Tally {
    int frequency = 0;
    std::vector<double> scores;
  };
  std::map<std::string, Tally> tally;
  for (const auto& response : responses) {
    std::set<std::string> seen;
    for (const auto& p : response.pairs) {
      auto tag = CanonicalTag(p.tag);
      if (tag.empty() || !seen.insert(tag).second) continue;
      auto& t = tally[tag];
      ++t.frequency;
      t.scores.push_back(p.score);
    }
  }
  if (tally.empty()) throw Error("no candidate tags");

  struct Ranked {
    std::string tag;
    int frequency;
    double mean;
  };
  std::vector<Ranked> ranked;
  for (auto& [tag, t] : tally) {
    // Summing in sorted order keeps the mean independent of response order.
    std::sort(t.scores.begin(), t.scores.end());
    double sum = 0.0;
    for (double s : t.scores) sum += s;
    ranked.push_back({tag, t.frequency, sum / static_cast<double>(t.scores.size())});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    if (a.mean != b.mean) return a.mean > b.mean;
    return a.tag < b.tag;
  });
  std::vector<std::string> tags;
  for (std::size_t i = 0; i < ranked.size() && static_cast<int>(i) < n; ++i) {
    tags.push_back(ranked[i].tag);
  }
  return TagVocabulary::FromTags(domain, std::move(tags));
}

TagVocabulary GenerateDomainTags(TagProvider& provider, TagCache* cache,
                                 const std::string& domain,
                                 const PromptTemplate& tmpl, int r, int n,
                                 const QueryOptions& options,
                                 std::vector<std::string>* transcript) {
  if (r < 1) throw ConfigError("query count R must be >= 1");
  if (n < 1) throw ConfigError("tag count N must be >= 1");
  if (tmpl.kind() != PromptKind::kDomainTags) {
    throw ConfigError("domain tag generation needs a domain_tags template");
  }
  Prompt prompt;
  prompt.kind = PromptKind::kDomainTags;
  prompt.fields = {{"domain", domain}, {"N", std::to_string(n)}};
  prompt.text = tmpl.Render(prompt.fields);

  std::vector<std::string> local_transcript;
  auto* log = transcript ? transcript : &local_transcript;
  std::vector<TagResponse> responses;
  for (int q = 0; q < r; ++q) {
    responses.push_back(CachedQuery(provider, cache, prompt, q, options, log));
    LogInfo("domain " + domain + " response " + std::to_string(q + 1) + "/" +
            std::to_string(r) + ": " + log->back());
  }
  return Vote(responses, n, domain);
}

TagVocabulary MergeVocabularies(const std::vector<TagVocabulary>& vocabs) {
  std::vector<std::string> tags;
  for (const auto& v : vocabs) {
    tags.insert(tags.end(), v.tags.begin(), v.tags.end());
  }
  auto merged = TagVocabulary::FromTags("shared", std::move(tags));
  if (merged.IndexOf(kUnknownTag) < 0) {
    merged.index.emplace(kUnknownTag, merged.size());
    merged.tags.push_back(kUnknownTag);
  }
  return merged;
}

std::vector<RawTagScore> MatchItemTags(TagProvider& provider, TagCache* cache,
                                       const ItemText& item,
                                       const TagVocabulary& vocabulary,
                                       const PromptTemplate& tmpl,
                                       const QueryOptions& options,
                                       MatchStats* stats) {
  if (vocabulary.tags.empty()) throw Error("empty tag vocabulary");
  if (item.title.empty()) throw Error("item '" + item.id + "' has no title");
  if (tmpl.kind() != PromptKind::kItemMatch) {
    throw ConfigError("item matching needs an item_match template");
  }
  Prompt prompt;
  prompt.kind = PromptKind::kItemMatch;
  prompt.fields = {{"item_id", item.id},
                   {"item_title", item.title},
                   {"item_description", item.description},
                   {"tag_list", JoinTags(vocabulary.tags)}};
  prompt.text = tmpl.Render(prompt.fields);
  const auto response = CachedQuery(provider, cache, prompt, 0, options);

  std::vector<RawTagScore> out;
  std::set<int> seen;
  for (const auto& p : response.pairs) {
    const int idx = vocabulary.IndexOf(p.tag);
    if (idx < 0) {
      LogWarning("item " + item.id + ": provider returned unknown tag '" +
                 p.tag + "', dropped");
      if (stats) ++stats->unknown_tags;
      continue;
    }
    const double rounded = std::round(p.score);
    if (rounded < 1.0 || rounded > 100.0) {
      if (stats) ++stats->out_of_range;
      continue;
    }
    if (!seen.insert(idx).second) continue;
    out.push_back({idx, static_cast<int>(rounded)});
  }
  return out;
}

// --- selection and normalization -------------------------------------------

void SelectionStrategy::Validate() const {
  if (r < 1) throw ConfigError("selection R must be >= 1");
  if (m < r) throw ConfigError("selection M must be >= R");
  if (theta < 1 || theta > 100) throw ConfigError("selection theta must be in [1, 100]");
}

SelectionMode ParseSelectionMode(const std::string& s) {
  if (s == "top_r") return SelectionMode::kTopR;
  if (s == "threshold") return SelectionMode::kThreshold;
  if (s == "hybrid") return SelectionMode::kHybrid;
  throw ConfigError("unknown selection strategy '" + s + "'");
}

std::string SelectionModeName(SelectionMode m) {
  switch (m) {
    case SelectionMode::kTopR: return "top_r";
    case SelectionMode::kThreshold: return "threshold";
    case SelectionMode::kHybrid: return "hybrid";
  }
  return "?";
}

std::vector<RawTagScore> SelectTags(const std::vector<RawTagScore>& raw,
                                    const SelectionStrategy& strategy,
                                    const TagVocabulary& vocabulary) {
  strategy.Validate();
  std::vector<RawTagScore> sorted = raw;
  SortByScore(sorted, vocabulary);
  std::vector<RawTagScore> out;
  switch (strategy.mode) {
    case SelectionMode::kTopR:
      for (std::size_t i = 0; i < sorted.size() && static_cast<int>(i) < strategy.r; ++i) {
        out.push_back(sorted[i]);
      }
      break;
    case SelectionMode::kThreshold:
      for (const auto& s : sorted) {
        if (s.score >= strategy.theta) out.push_back(s);
      }
      break;
    case SelectionMode::kHybrid:
      // Sorted order makes the top-R prefix plus every score >= theta a prefix
      // of `sorted` as well.
      for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (static_cast<int>(i) < strategy.r || sorted[i].score >= strategy.theta) {
          out.push_back(sorted[i]);
        }
      }
      if (static_cast<int>(out.size()) > strategy.m) {
        out.resize(static_cast<std::size_t>(strategy.m));
      }
      break;
  }
  return out;
}

TagScoreVector NormalizeScores(const std::vector<RawTagScore>& selected,
                               const std::string& item) {
  if (selected.empty()) throw Error("cannot normalize an empty tag selection");
  double total = 0.0;
  for (const auto& s : selected) {
    if (s.score <= 0) throw Error("tag scores must be positive");
    total += s.score;
  }
  TagScoreVector v;
  v.item = item;
  for (const auto& s : selected) {
    v.entries.emplace_back(s.tag_index, static_cast<double>(s.score) / total);
  }
  return v;
}

TagRepresentation ParseTagRepresentation(const std::string& s) {
  if (s == "one_hot") return TagRepresentation::kOneHot;
  if (s == "unweighted_multi_hot") return TagRepresentation::kUnweightedMultiHot;
  if (s == "weighted_multi_hot") return TagRepresentation::kWeightedMultiHot;
  throw ConfigError("unknown tag representation '" + s + "'");
}

std::string TagRepresentationName(TagRepresentation r) {
  switch (r) {
    case TagRepresentation::kOneHot: return "one_hot";
    case TagRepresentation::kUnweightedMultiHot: return "unweighted_multi_hot";
    case TagRepresentation::kWeightedMultiHot: return "weighted_multi_hot";
  }
  return "?";
}

TagScoreVector BuildTagVector(const std::string& item,
                              const std::vector<RawTagScore>& selected,
                              TagRepresentation representation,
                              int unknown_index) {
  TagScoreVector v;
  v.item = item;
  if (selected.empty()) {
    v.entries.emplace_back(unknown_index, 1.0);
    return v;
  }
  switch (representation) {
    case TagRepresentation::kOneHot: {
      // `selected` is sorted best-first.
      v.entries.emplace_back(selected.front().tag_index, 1.0);
      break;
    }
    case TagRepresentation::kUnweightedMultiHot: {
      const double w = 1.0 / static_cast<double>(selected.size());
      for (const auto& s : selected) v.entries.emplace_back(s.tag_index, w);
      break;
    }
    case TagRepresentation::kWeightedMultiHot:
      v = NormalizeScores(selected, item);
      break;
  }
  return v;
}

TagScoreVector KeywordTagVector(const ItemText& item,
                                const TagVocabulary& vocabulary,
                                int unknown_index) {
  const auto title = CanonicalTag(item.title);
  std::vector<int> matches;
  for (int i = 0; i < vocabulary.size(); ++i) {
    const auto& tag = vocabulary.tags[static_cast<std::size_t>(i)];
    if (tag == kUnknownTag || tag.empty()) continue;
    if (title.find(tag) != std::string::npos) matches.push_back(i);
  }
  TagScoreVector v;
  v.item = item.id;
  if (matches.empty()) {
    v.entries.emplace_back(unknown_index, 1.0);
    return v;
  }
  for (int m : matches) {
    v.entries.emplace_back(m, 1.0 / static_cast<double>(matches.size()));
  }
  return v;
}

// --- files -------------------------------------------------------------------

void WriteVocabularies(const std::vector<TagVocabulary>& vocabs,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& v : vocabs) {
    out << json{{"domain", v.domain}, {"tags", v.tags}}.dump() << '\n';
  }
}

std::vector<TagVocabulary> ReadVocabularies(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open tag vocabulary " + path);
  std::vector<TagVocabulary> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    out.push_back(TagVocabulary::FromTags(
        j.at("domain").get<std::string>(),
        j.at("tags").get<std::vector<std::string>>()));
  }
  return out;
}

void WriteTagScores(const std::vector<TagScoreVector>& scores,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& s : scores) {
    json entries = json::array();
    for (const auto& [idx, w] : s.entries) entries.push_back(json::array({idx, w}));
    out << json{{"item", s.item}, {"entries", entries}}.dump() << '\n';
  }
}

std::vector<TagScoreVector> ReadTagScores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open item-tag scores " + path);
  std::vector<TagScoreVector> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    TagScoreVector v;
    v.item = j.at("item").get<std::string>();
    for (const auto& e : j.at("entries")) {
      v.entries.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::map<std::string, ItemText> ReadItemTexts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open item metadata " + path);
  std::map<std::string, ItemText> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    ItemText t;
    t.id = j.at("id").get<std::string>();
    t.title = j.value("title", std::string());
    t.description = j.value("description", std::string());
    out.emplace(t.id, std::move(t));
  }
  return out;
}

void WriteItemTexts(const std::vector<std::pair<ItemText, std::string>>& items,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& [t, domain] : items) {
    out << json{{"id", t.id}, {"domain", domain}, {"title", t.title},
                {"description", t.description}}
               .dump()
        << '\n';
  }
}

void WritePlantedAffinities(const PlantedAffinities& planted,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << json{{"tags", planted.tags}}.dump() << '\n';
  for (const auto& [item, aff] : planted.item_affinity) {
    out << json{{"item", item}, {"affinity", aff}}.dump() << '\n';
  }
}

PlantedAffinities ReadPlantedAffinities(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open planted affinities " + path);
  PlantedAffinities p;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    if (header) {
      p.tags = j.at("tags").get<std::vector<std::string>>();
      header = false;
      continue;
    }
    p.item_affinity[j.at("item").get<std::string>()] =
        j.at("affinity").get<std::map<std::string, double>>();
  }
  return p;
}

}  // namespace tema

#ifndef TEMA_TAGGING_H_
#define TEMA_TAGGING_H_

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tema/common.h"

namespace tema {

// Lowercases ASCII letters and strips surrounding whitespace.
std::string CanonicalTag(std::string_view tag);

struct TagScore {
  std::string tag;
  double score = 0.0;
};

// One provider answer: ordered (tag, score) pairs. Scores are in [0, 1] for
// domain-tag generation and integers in [1, 100] for item matching.
struct TagResponse {
  std::vector<TagScore> pairs;

  nlohmann::json ToJson() const;
  static TagResponse FromJson(const nlohmann::json& j);
};

enum class PromptKind { kDomainTags, kItemMatch };

class PromptTemplate {
 public:
  // Throws ConfigError when a placeholder required by `kind` is missing.
  PromptTemplate(std::string text, PromptKind kind);

  static PromptTemplate DefaultDomainTags();
  static PromptTemplate DefaultItemMatch();

  PromptKind kind() const { return kind_; }
  const std::string& text() const { return text_; }
  // Substitutes every {name} with fields.at(name).
  std::string Render(const std::map<std::string, std::string>& fields) const;

 private:
  std::string text_;
  PromptKind kind_;
};

// An instantiated prompt. `fields` carries the structured values the text was
// rendered from, so offline providers need not parse prose.
struct Prompt {
  PromptKind kind = PromptKind::kDomainTags;
  std::string text;
  std::map<std::string, std::string> fields;
};

class ProviderError : public Error {
 public:
  using Error::Error;
};

class TagProvider {
 public:
  virtual ~TagProvider() = default;
  virtual std::string Id() const = 0;
  // Must be deterministic for identical prompts at temperature 0.
  virtual TagResponse Query(const Prompt& prompt, double temperature) = 0;
};

// Hidden item-tag affinities of a planted synthetic dataset.
struct PlantedAffinities {
  std::vector<std::string> tags;
  std::map<std::string, std::map<std::string, double>> item_affinity;
};

class MockProvider : public TagProvider {
 public:
  explicit MockProvider(std::uint64_t seed);
  MockProvider(std::uint64_t seed, PlantedAffinities planted);

  std::string Id() const override;
  TagResponse Query(const Prompt& prompt, double temperature) override;

  // Built-in 30-tag pool for a domain label; unknown labels get a generic pool.
  static const std::vector<std::string>& TagPool(const std::string& domain);

 private:
  std::uint64_t seed_;
  std::optional<PlantedAffinities> planted_;
};

// Replays a fixed list of responses in order and counts calls.
class ScriptedProvider : public TagProvider {
 public:
  explicit ScriptedProvider(std::vector<TagResponse> script,
                            std::string id = "scripted");
  std::string Id() const override { return id_; }
  TagResponse Query(const Prompt& prompt, double temperature) override;
  int calls() const { return calls_; }

 private:
  std::vector<TagResponse> script_;
  std::string id_;
  int calls_ = 0;
};

// Append-only line-oriented JSON cache {key, response, created_at}. An empty
// path keeps the cache in memory only.
class TagCache {
 public:
  explicit TagCache(std::string path = "");

  static std::string Key(const std::string& provider_id,
                         const std::string& prompt_text, int query_ordinal);

  std::optional<TagResponse> Lookup(const std::string& key) const;
  // Raw serialized response as stored, for byte-level comparisons.
  std::optional<std::string> LookupRaw(const std::string& key) const;
  void Insert(const std::string& key, const TagResponse& response);
  std::size_t size() const;

 private:
  std::string path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
};

struct QueryOptions {
  double temperature = 0.0;
  int max_retries = 2;
  // Where to dump the raw transcript if the provider keeps failing.
  std::string transcript_path;
};

// Looks the prompt up in `cache` (may be null), otherwise queries the provider
// with retries and records the answer.
TagResponse CachedQuery(TagProvider& provider, TagCache* cache,
                        const Prompt& prompt, int query_ordinal,
                        const QueryOptions& options,
                        std::vector<std::string>* transcript = nullptr);

struct TagVocabulary {
  std::string domain;
  std::vector<std::string> tags;
  std::unordered_map<std::string, int> index;

  static TagVocabulary FromTags(std::string domain, std::vector<std::string> tags);
  int IndexOf(const std::string& tag) const;  // -1 when absent
  int size() const { return static_cast<int>(tags.size()); }
};

inline constexpr const char* kUnknownTag = "<unknown>";

// Ranks canonicalized tags by (response frequency desc, mean score desc,
// tag asc) and keeps the first N. Throws Error("no candidate tags") when every
// response is empty.
TagVocabulary Vote(const std::vector<TagResponse>& responses, int n,
                   const std::string& domain = "");

// Issues R domain-tag queries and votes over the answers.
TagVocabulary GenerateDomainTags(TagProvider& provider, TagCache* cache,
                                 const std::string& domain,
                                 const PromptTemplate& tmpl, int r, int n,
                                 const QueryOptions& options = {},
                                 std::vector<std::string>* transcript = nullptr);

// Per-domain vocabularies concatenated with duplicates merged, then the
// reserved unknown tag appended last.
TagVocabulary MergeVocabularies(const std::vector<TagVocabulary>& vocabs);

struct ItemText {
  std::string id;
  std::string title;
  std::string description;
};

struct RawTagScore {
  int tag_index = 0;
  int score = 0;

  bool operator==(const RawTagScore&) const = default;
};

struct MatchStats {
  int unknown_tags = 0;
  int out_of_range = 0;
};

// Asks the provider to score `item` against `vocabulary` (indices refer to
// that vocabulary). Unknown tags and out-of-range scores are dropped.
std::vector<RawTagScore> MatchItemTags(TagProvider& provider, TagCache* cache,
                                       const ItemText& item,
                                       const TagVocabulary& vocabulary,
                                       const PromptTemplate& tmpl,
                                       const QueryOptions& options = {},
                                       MatchStats* stats = nullptr);

enum class SelectionMode { kTopR, kThreshold, kHybrid };

struct SelectionStrategy {
  SelectionMode mode = SelectionMode::kHybrid;
  int r = 5;
  int theta = 70;
  int m = 8;

  void Validate() const;
};

SelectionMode ParseSelectionMode(const std::string& s);
std::string SelectionModeName(SelectionMode m);

// Output sorted by (score desc, tag asc).
std::vector<RawTagScore> SelectTags(const std::vector<RawTagScore>& raw,
                                    const SelectionStrategy& strategy,
                                    const TagVocabulary& vocabulary);

struct TagScoreVector {
  std::string item;
  std::vector<std::pair<int, double>> entries;
};

// weight_i = raw_i / sum(raw). Throws Error on empty input.
TagScoreVector NormalizeScores(const std::vector<RawTagScore>& selected,
                               const std::string& item = "");

enum class TagRepresentation { kOneHot, kUnweightedMultiHot, kWeightedMultiHot };

TagRepresentation ParseTagRepresentation(const std::string& s);
std::string TagRepresentationName(TagRepresentation r);

// Turns a selection into a soft tag vector. Empty selections fall back to the
// unknown tag with weight 1.
TagScoreVector BuildTagVector(const std::string& item,
                              const std::vector<RawTagScore>& selected,
                              TagRepresentation representation,
                              int unknown_index);

// Static keyword assignment: tags whose text occurs in the lowercased title,
// weight 1/|matches|; falls back to the unknown tag.
TagScoreVector KeywordTagVector(const ItemText& item,
                                const TagVocabulary& vocabulary,
                                int unknown_index);

// File formats (line-oriented JSON).
void WriteVocabularies(const std::vector<TagVocabulary>& vocabs,
                       const std::string& path);
std::vector<TagVocabulary> ReadVocabularies(const std::string& path);
void WriteTagScores(const std::vector<TagScoreVector>& scores,
                    const std::string& path);
std::vector<TagScoreVector> ReadTagScores(const std::string& path);
// {id, domain, title, description}
std::map<std::string, ItemText> ReadItemTexts(const std::string& path);
void WriteItemTexts(const std::vector<std::pair<ItemText, std::string>>& items,
                    const std::string& path);
void WritePlantedAffinities(const PlantedAffinities& planted,
                            const std::string& path);
PlantedAffinities ReadPlantedAffinities(const std::string& path);

}  // namespace tema

#endif  // TEMA_TAGGING_H_

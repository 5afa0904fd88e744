#ifndef TEMA_CONFIG_H_
#define TEMA_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tema/common.h"
#include "tema/data.h"
#include "tema/evaluation.h"
#include "tema/model.h"
#include "tema/tagging.h"

namespace tema {

// Key schema (canonical JSON, keys sorted):
//   paths:   interactions, image, text, items, planted, tag_cache, out
//   domains: x, y
//   hyper:   see Hyperparams
//   tagging: provider (mock|planted), seed, R, N, strategy, theta, M,
//            representation, source (llm|keyword|none)
//   filters: min_total, min_per_domain, min_item_count
//   mode:    parallel, threads
//   grid:    lambda1, lambda2
//   target_domain
struct RunPaths {
  std::string interactions;
  std::string image;
  std::string text;
  std::string items;
  std::string planted;
  std::string tag_cache;
  std::string out = "run";

  bool operator==(const RunPaths&) const = default;
};

struct TaggingParams {
  std::string provider = "mock";
  std::uint64_t seed = 0;
  int r = 5;
  int n = 30;
  SelectionStrategy selection;
  TagRepresentation representation = TagRepresentation::kWeightedMultiHot;
  TagSource source = TagSource::kLlm;
};

struct RunConfig {
  RunPaths paths;
  DomainPair domains{"x", "y"};
  Hyperparams hyper;
  TaggingParams tagging;
  FilterOptions filters;
  bool parallel = false;
  int threads = 1;
  std::vector<double> lambda1_grid = {0.2, 0.3, 0.4, 0.5};
  std::vector<double> lambda2_grid = {0.05, 0.1, 0.15, 0.2};
  std::string target_domain;  // empty: the first domain

  nlohmann::json ToJson() const;
  std::string Canonical() const;  // sorted keys, two-space indent
  std::string Fingerprint() const;

  // Throws ConfigError naming the first offending key. Relative paths are
  // resolved against `base_dir`.
  static RunConfig FromJson(const nlohmann::json& j,
                            const std::string& base_dir = "");
  // Parses the file and checks that every named input path exists.
  static RunConfig Load(const std::string& path);
  void CheckInputs() const;

  Domain TargetDomain() const {
    return target_domain.empty() ? Domain::kX : domains.Resolve(target_domain);
  }
  int EffectiveThreads() const { return parallel ? threads : 1; }
};

}  // namespace tema

#endif  // TEMA_CONFIG_H_

#ifndef TEMA_PIPELINE_H_
#define TEMA_PIPELINE_H_

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tema/config.h"
#include "tema/evaluation.h"
#include "tema/synth.h"
#include "tema/tagging.h"
#include "tema/training.h"

namespace tema {

inline constexpr const char* kVersion = "0.1.0";

// Records what a subcommand consumed and produced. Contains no timestamps so
// identical runs give identical manifests.
class RunManifest {
 public:
  RunManifest(std::string subcommand, const RunConfig* config);

  void AddInput(const std::string& name, const std::string& path);
  void AddOutput(const std::string& dir, const std::string& file);
  void Set(const std::string& key, nlohmann::json value);
  // Writes manifest.<subcommand>.json into `dir`; returns its path.
  std::string Write(const std::string& dir) const;
  const nlohmann::json& data() const { return j_; }

 private:
  std::string subcommand_;
  nlohmann::json j_;
};

std::unique_ptr<TagProvider> MakeProvider(const RunConfig& config);

DatasetSplit PrepareSplit(const RunConfig& config);

struct TagArtifacts {
  std::vector<TagVocabulary> per_domain;  // X then Y
  TagVocabulary shared;
  std::map<std::string, ItemText> texts;
  std::map<std::string, std::vector<RawTagScore>> raw;  // shared indices
  MatchStats stats;
};

std::vector<TagVocabulary> GenerateVocabularies(
    const RunConfig& config, TagProvider& provider, TagCache* cache,
    const std::optional<Domain>& only = std::nullopt);

// Vocabularies plus raw item-tag scores for every catalog item. Each item is
// matched against its own domain's tags; indices are mapped to the shared
// vocabulary. Skips matching when the configured source is not the LLM.
TagArtifacts BuildTagArtifacts(const RunConfig& config, const DatasetSplit& split,
                               bool match_items);

AblationInputs MakeAblationInputs(const RunConfig& config, DatasetSplit split,
                                  TagArtifacts tags);
AblationConfig ConfigFromRun(const RunConfig& config);

// Full in-memory pipeline up to the model inputs.
struct PreparedRun {
  AblationInputs inputs;
  ItemFeatures features;
};
PreparedRun Prepare(const RunConfig& config);

// Subcommands. Each writes its artifacts and a manifest into `out_dir`.
void RunPreprocess(const RunConfig& config, const std::string& out_dir);
void RunTagsGenerate(const RunConfig& config, const std::string& out_dir,
                     const std::optional<std::string>& domain);
void RunTagsMatch(const RunConfig& config, const std::string& out_dir);
void RunFeaturesBuild(const RunConfig& config, const std::string& out_dir);
TrainResult RunTrain(const RunConfig& config, const std::string& out_dir);
MetricsReport RunEvaluate(const RunConfig& config, const std::string& checkpoint,
                          const std::string& domain, const std::string& out_dir);
std::vector<AblationRow> RunAblate(const RunConfig& config,
                                   const std::string& grid,
                                   const std::string& out_dir);
// Writes the dataset plus a ready-to-use config.json.
RunConfig RunSynth(const SynthOptions& options, const std::string& out_dir);

// The config `synth generate` writes: scaled-down dims, planted provider.
RunConfig SyntheticRunConfig(const SynthOptions& options, const std::string& dir);

}  // namespace tema

#endif  // TEMA_PIPELINE_H_

#include "tema/pipeline.h"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "tema/binary_io.h"
#include "tema/log.h"

namespace tema {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string Require(const std::string& path, const char* key) {
  if (path.empty()) throw ConfigError(std::string(key) + " is required");
  return path;
}

}  // namespace

// --- manifest -------------------------------------------------------------------

RunManifest::RunManifest(std::string subcommand, const RunConfig* config)
    : subcommand_(std::move(subcommand)) {
  j_["subcommand"] = subcommand_;
  j_["version"] = kVersion;
  j_["inputs"] = json::object();
  j_["outputs"] = json::object();
  if (config) {
    j_["config_fingerprint"] = config->Fingerprint();
    j_["config"] = config->ToJson();
  }
}

void RunManifest::AddInput(const std::string& name, const std::string& path) {
  if (path.empty() || !fs::exists(path)) return;
  j_["inputs"][name] = Sha256FileHex(path);
}

void RunManifest::AddOutput(const std::string& dir, const std::string& file) {
  j_["outputs"][file] = Sha256FileHex((fs::path(dir) / file).string());
}

void RunManifest::Set(const std::string& key, json value) {
  j_[key] = std::move(value);
}

std::string RunManifest::Write(const std::string& dir) const {
  fs::create_directories(dir);
  const auto path = fs::path(dir) / ("manifest." + subcommand_ + ".json");
  WriteText(path, j_.dump(2) + "\n");
  return path.string();
}

namespace {

void AddConfigInputs(RunManifest& m, const RunConfig& c) {
  m.AddInput("interactions", c.paths.interactions);
  m.AddInput("image", c.paths.image);
  m.AddInput("text", c.paths.text);
  m.AddInput("items", c.paths.items);
  m.AddInput("planted", c.paths.planted);
}

}  // namespace

// --- stages ---------------------------------------------------------------------

std::unique_ptr<TagProvider> MakeProvider(const RunConfig& config) {
  if (config.tagging.provider == "planted") {
    return std::make_unique<MockProvider>(
        config.tagging.seed,
        ReadPlantedAffinities(Require(config.paths.planted, "paths.planted")));
  }
  return std::make_unique<MockProvider>(config.tagging.seed);
}

DatasetSplit PrepareSplit(const RunConfig& config) {
  const auto log = ParseInteractions(
      Require(config.paths.interactions, "paths.interactions"), config.domains);
  const auto kept = ApplyFilters(log, config.filters);
  if (kept.empty()) throw Error("no interactions survive filtering");
  LogInfo("filtering kept " + std::to_string(kept.size()) + " of " +
          std::to_string(log.size()) + " interactions");
  return ChronologicalSplit(BuildSequences(kept), config.domains);
}

std::vector<TagVocabulary> GenerateVocabularies(const RunConfig& config,
                                                TagProvider& provider,
                                                TagCache* cache,
                                                const std::optional<Domain>& only) {
  std::vector<TagVocabulary> out;
  for (Domain d : {Domain::kX, Domain::kY}) {
    if (only && *only != d) continue;
    out.push_back(GenerateDomainTags(provider, cache, config.domains.Name(d),
                                     PromptTemplate::DefaultDomainTags(),
                                     config.tagging.r, config.tagging.n));
  }
  return out;
}

TagArtifacts BuildTagArtifacts(const RunConfig& config, const DatasetSplit& split,
                               bool match_items) {
  TagArtifacts t;
  auto provider = MakeProvider(config);
  TagCache cache(config.paths.tag_cache);
  t.per_domain = GenerateVocabularies(config, *provider, &cache);
  t.shared = MergeVocabularies(t.per_domain);

  if (!config.paths.items.empty()) t.texts = ReadItemTexts(config.paths.items);
  for (Domain d : {Domain::kX, Domain::kY}) {
    for (const auto& item : split.catalog.Items(d)) {
      if (!t.texts.count(item)) t.texts[item] = ItemText{item, item, ""};
    }
  }
  if (!match_items) return t;

  const auto tmpl = PromptTemplate::DefaultItemMatch();
  for (Domain d : {Domain::kX, Domain::kY}) {
    const auto& vocab = t.per_domain[static_cast<std::size_t>(DomainIndex(d))];
    for (const auto& item : split.catalog.Items(d)) {
      auto raw = MatchItemTags(*provider, &cache, t.texts.at(item), vocab, tmpl,
                               QueryOptions{}, &t.stats);
      for (auto& r : raw) {
        r.tag_index = t.shared.IndexOf(vocab.tags[static_cast<std::size_t>(r.tag_index)]);
      }
      t.raw[item] = std::move(raw);
    }
  }
  if (t.stats.unknown_tags || t.stats.out_of_range) {
    LogWarning("item matching dropped " + std::to_string(t.stats.unknown_tags) +
               " unknown tags and " + std::to_string(t.stats.out_of_range) +
               " out-of-range scores");
  }
  return t;
}

AblationInputs MakeAblationInputs(const RunConfig& config, DatasetSplit split,
                                  TagArtifacts tags) {
  AblationInputs in;
  in.image = LoadFrozenEmbeddings(Require(config.paths.image, "paths.image"),
                                  split.catalog, TensorKind::kImage);
  in.text = LoadFrozenEmbeddings(Require(config.paths.text, "paths.text"),
                                 split.catalog, TensorKind::kText);
  for (const auto* store : {&in.image, &in.text}) {
    if (store->dim() != config.hyper.e) {
      throw ConfigError("hyper.e is " + std::to_string(config.hyper.e) +
                        " but the frozen embeddings have width " +
                        std::to_string(store->dim()));
    }
    if (store->missing > 0) {
      LogWarning(std::to_string(store->missing) +
                 " catalog items have no frozen embedding; using zeros");
    }
  }
  in.split = std::move(split);
  in.vocabulary = std::move(tags.shared);
  in.raw_scores = std::move(tags.raw);
  in.item_texts = std::move(tags.texts);
  in.hyper = config.hyper;
  in.target_domain = config.TargetDomain();
  return in;
}

AblationConfig ConfigFromRun(const RunConfig& config) {
  AblationConfig c;
  c.name = "run";
  c.tag_source = config.hyper.use_tags ? config.tagging.source : TagSource::kNone;
  c.attention = config.hyper.attention;
  c.representation = config.tagging.representation;
  c.selection = config.tagging.selection;
  return c;
}

PreparedRun Prepare(const RunConfig& config) {
  DatasetSplit split = PrepareSplit(config);
  auto tags = BuildTagArtifacts(config, split,
                                config.tagging.source == TagSource::kLlm);
  PreparedRun run{MakeAblationInputs(config, std::move(split), std::move(tags)), {}};
  run.features = FeaturesForConfig(run.inputs, ConfigFromRun(config));
  return run;
}

// --- subcommands -----------------------------------------------------------------

void RunPreprocess(const RunConfig& config, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const DatasetSplit split = PrepareSplit(config);
  {
    std::ofstream out(fs::path(out_dir) / "split.jsonl");
    WriteSplitManifest(split, out);
  }
  {
    std::ofstream out(fs::path(out_dir) / "catalog.jsonl");
    WriteCatalog(split, out);
  }
  RunManifest m("preprocess", &config);
  AddConfigInputs(m, config);
  m.AddOutput(out_dir, "split.jsonl");
  m.AddOutput(out_dir, "catalog.jsonl");
  m.Set("users", split.users.size());
  m.Set("items", {{config.domains.x, split.catalog.Size(Domain::kX)},
                  {config.domains.y, split.catalog.Size(Domain::kY)}});
  m.Write(out_dir);
}

void RunTagsGenerate(const RunConfig& config, const std::string& out_dir,
                     const std::optional<std::string>& domain) {
  fs::create_directories(out_dir);
  std::optional<Domain> only;
  if (domain) {
    try {
      only = config.domains.Resolve(*domain);
    } catch (const Error& e) {
      throw ConfigError(std::string("--domain: ") + e.what());
    }
  }
  auto provider = MakeProvider(config);
  TagCache cache(config.paths.tag_cache);
  auto vocabs = GenerateVocabularies(config, *provider, &cache, only);
  const auto path = fs::path(out_dir) / "vocab.jsonl";
  if (only && fs::exists(path)) {
    // Keep the other domain's vocabulary from an earlier run.
    for (auto& v : ReadVocabularies(path.string())) {
      if (v.domain != vocabs[0].domain) vocabs.push_back(std::move(v));
    }
    std::sort(vocabs.begin(), vocabs.end(), [&](const auto& a, const auto& b) {
      return config.domains.Resolve(a.domain) < config.domains.Resolve(b.domain);
    });
  }
  WriteVocabularies(vocabs, path.string());
  RunManifest m("tags_generate", &config);
  AddConfigInputs(m, config);
  m.AddOutput(out_dir, "vocab.jsonl");
  m.Write(out_dir);
}

void RunTagsMatch(const RunConfig& config, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const DatasetSplit split = PrepareSplit(config);
  const auto tags = BuildTagArtifacts(config, split, true);
  std::vector<TagScoreVector> raw, selected;
  const int unknown = tags.shared.IndexOf(kUnknownTag);
  for (const auto& [item, scores] : tags.raw) {
    TagScoreVector r{item, {}};
    for (const auto& s : scores) r.entries.push_back({s.tag_index, s.score});
    raw.push_back(std::move(r));
    selected.push_back(BuildTagVector(
        item, SelectTags(scores, config.tagging.selection, tags.shared),
        config.tagging.representation, unknown));
  }
  WriteVocabularies({tags.shared}, (fs::path(out_dir) / "shared_vocab.jsonl").string());
  WriteTagScores(raw, (fs::path(out_dir) / "item_tag_raw.jsonl").string());
  WriteTagScores(selected, (fs::path(out_dir) / "item_tags.jsonl").string());
  RunManifest m("tags_match", &config);
  AddConfigInputs(m, config);
  for (const char* f : {"shared_vocab.jsonl", "item_tag_raw.jsonl", "item_tags.jsonl"}) {
    m.AddOutput(out_dir, f);
  }
  m.Set("unknown_tags_dropped", tags.stats.unknown_tags);
  m.Set("out_of_range_dropped", tags.stats.out_of_range);
  m.Write(out_dir);
}

void RunFeaturesBuild(const RunConfig& config, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const PreparedRun run = Prepare(config);
  std::vector<TagScoreVector> vectors;
  const auto& catalog = run.inputs.split.catalog;
  for (int g = 0; g < run.features.num_items(); ++g) {
    vectors.push_back({catalog.ItemAtGlobal(g),
                       run.features.tag_weights[static_cast<std::size_t>(g)]});
  }
  WriteTagScores(vectors, (fs::path(out_dir) / "item_tags.jsonl").string());
  const json summary = {
      {"num_x", run.features.num_x},
      {"num_y", run.features.num_y},
      {"num_tags", run.features.num_tags},
      {"image_missing", run.inputs.image.missing},
      {"text_missing", run.inputs.text.missing},
      {"checksum", run.features.Checksum()}};
  WriteText(fs::path(out_dir) / "features.json", summary.dump(2) + "\n");
  RunManifest m("features", &config);
  AddConfigInputs(m, config);
  m.AddOutput(out_dir, "item_tags.jsonl");
  m.AddOutput(out_dir, "features.json");
  m.Write(out_dir);
}

TrainResult RunTrain(const RunConfig& config, const std::string& out_dir) {
  const PreparedRun run = Prepare(config);
  TrainOptions opts;
  opts.out_dir = out_dir;
  opts.threads = config.EffectiveThreads();
  opts.verbose = true;
  TrainResult result = Train(run.inputs.split, run.features, config.hyper, opts);
  // Wall-clock time lives only in report.json, which the manifest leaves out.
  WriteText(fs::path(out_dir) / "report.json", result.report.ToJson().dump(2) + "\n");
  WriteText(fs::path(out_dir) / "epochs.csv", result.report.EpochCsv());
  RunManifest m("train", &config);
  AddConfigInputs(m, config);
  m.AddOutput(out_dir, "checkpoint.bin");
  m.AddOutput(out_dir, "epochs.csv");
  m.Set("best_epoch", result.report.best_epoch);
  m.Set("stopping_epoch", result.report.stopping_epoch);
  m.Write(out_dir);
  return result;
}

MetricsReport RunEvaluate(const RunConfig& config, const std::string& checkpoint,
                          const std::string& domain, const std::string& out_dir) {
  Domain target;
  try {
    target = domain.empty() ? config.TargetDomain() : config.domains.Resolve(domain);
  } catch (const Error& e) {
    throw ConfigError(std::string("--domain: ") + e.what());
  }
  const PreparedRun run = Prepare(config);
  const ModelParams params = ReadCheckpoint(checkpoint);
  if (params.num_x != run.features.num_x || params.num_y != run.features.num_y ||
      params.num_tags != run.features.num_tags) {
    throw Error("checkpoint " + checkpoint + " does not match the dataset catalog");
  }
  const auto report = Evaluate(params, run.inputs.split, run.features, target);
  fs::create_directories(out_dir);
  const std::string file = "metrics_" + config.domains.Name(target) + ".json";
  WriteText(fs::path(out_dir) / file, report.ToJson().dump(2) + "\n");
  RunManifest m("evaluate_" + config.domains.Name(target), &config);
  AddConfigInputs(m, config);
  m.AddInput("checkpoint", checkpoint);
  m.AddOutput(out_dir, file);
  m.Write(out_dir);
  return report;
}

std::vector<AblationRow> RunAblate(const RunConfig& config, const std::string& grid,
                                   const std::string& out_dir) {
  const AblationSpec spec = AblationSpec::ByName(grid);
  DatasetSplit split = PrepareSplit(config);
  auto tags = BuildTagArtifacts(config, split, true);
  const AblationInputs inputs =
      MakeAblationInputs(config, std::move(split), std::move(tags));
  TrainOptions opts;
  opts.threads = config.EffectiveThreads();
  const auto rows = RunAblation(spec, inputs, opts);
  fs::create_directories(out_dir);
  WriteText(fs::path(out_dir) / ("ablation_" + grid + ".csv"), AblationCsv(rows));
  WriteText(fs::path(out_dir) / ("ablation_" + grid + ".txt"), AblationTable(rows));
  RunManifest m("ablate_" + grid, &config);
  AddConfigInputs(m, config);
  m.AddOutput(out_dir, "ablation_" + grid + ".csv");
  m.AddOutput(out_dir, "ablation_" + grid + ".txt");
  m.Write(out_dir);
  return rows;
}

RunConfig SyntheticRunConfig(const SynthOptions& options, const std::string& dir) {
  RunConfig c;
  const fs::path root(dir);
  c.paths.interactions = (root / "interactions.tsv").string();
  c.paths.image = (root / "image.bin").string();
  c.paths.text = (root / "text.bin").string();
  c.paths.items = (root / "items.jsonl").string();
  c.paths.planted = (root / "planted.jsonl").string();
  c.paths.tag_cache = (root / "tag_cache.jsonl").string();
  c.paths.out = (root / "run").string();
  c.domains = options.domains;
  c.tagging.provider = "planted";
  c.tagging.seed = options.seed;
  c.tagging.n = options.num_tags;
  const int dim = options.embedding_dim;
  c.hyper.q = dim;
  c.hyper.e = dim;
  c.hyper.d = dim;
  c.hyper.d_t = dim;
  c.hyper.hidden = dim;
  c.hyper.max_epochs = 200;
  c.hyper.lr = 0.01;
  return c;
}

RunConfig RunSynth(const SynthOptions& options, const std::string& out_dir) {
  const SynthDataset data = GenerateSynthetic(options);
  WriteSynthetic(data, out_dir);
  RunConfig config = SyntheticRunConfig(options, out_dir);
  // Paths in the written config are relative to its own directory.
  RunConfig portable = config;
  for (std::string* p : {&portable.paths.interactions, &portable.paths.image,
                         &portable.paths.text, &portable.paths.items,
                         &portable.paths.planted, &portable.paths.tag_cache,
                         &portable.paths.out}) {
    *p = fs::path(*p).filename().string();
  }
  WriteText(fs::path(out_dir) / "config.json", portable.Canonical());
  RunManifest m("synth", &portable);
  m.Set("seed", options.seed);
  for (const char* f : {"interactions.tsv", "items.jsonl", "planted.jsonl",
                        "image.bin", "image.bin.ids", "text.bin", "text.bin.ids",
                        "config.json"}) {
    m.AddOutput(out_dir, f);
  }
  m.Write(out_dir);
  return config;
}

}  // namespace tema

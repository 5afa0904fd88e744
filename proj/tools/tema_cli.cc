// Command-line front end for the tagging / training / evaluation pipeline.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tema/config.h"
#include "tema/log.h"
#include "tema/pipeline.h"

namespace {

using nlohmann::json;

struct Common {
  std::string config_path;
  std::string out;
  std::vector<std::string> sets;
  bool verbose = false;
};

void AddCommon(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Run config (canonical JSON)");
  cmd->add_option("--out", c.out, "Output directory (overrides paths.out)");
  cmd->add_option("--set", c.sets,
                  "Override a config key, e.g. --set hyper.lr=0.005")
      ->take_all();
  cmd->add_flag("-v,--verbose", c.verbose, "Log progress to stderr");
}

// Applies "a.b.c=value" onto the raw config JSON. Values parse as JSON when
// possible, otherwise as strings.
void ApplySet(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw tema::ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

tema::RunConfig LoadConfig(const Common& c) {
  json j = json::object();
  std::string base;
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw tema::ConfigError("cannot open config " + c.config_path);
    j = json::parse(in, nullptr, false);
    if (j.is_discarded()) {
      throw tema::ConfigError("config " + c.config_path + " is not valid JSON");
    }
    base = std::filesystem::path(c.config_path).parent_path().string();
  }
  for (const auto& s : c.sets) ApplySet(j, s);
  tema::RunConfig config = tema::RunConfig::FromJson(j, base);
  if (!c.out.empty()) config.paths.out = c.out;
  config.CheckInputs();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tag-enhanced multi-attention cross-domain sequential recommender"};
  app.require_subcommand(1);

  Common common;

  auto* data = app.add_subcommand("data", "Interaction data");
  data->require_subcommand(1);
  auto* preprocess = data->add_subcommand("preprocess", "Filter and split the log");
  AddCommon(preprocess, common);

  auto* tags = app.add_subcommand("tags", "Tag vocabulary and item matching");
  tags->require_subcommand(1);
  auto* generate = tags->add_subcommand("generate", "Domain tag generation");
  AddCommon(generate, common);
  std::optional<std::string> domain;
  std::optional<int> gen_r, gen_n;
  generate->add_option("--domain", domain, "Only this domain");
  generate->add_option("--R", gen_r, "Queries per domain");
  generate->add_option("--N", gen_n, "Tags kept per domain");

  auto* match = tags->add_subcommand("match", "Item-tag matching and selection");
  AddCommon(match, common);
  std::optional<std::string> strategy;
  std::optional<int> match_r, theta, match_m;
  match->add_option("--strategy", strategy, "top_r | threshold | hybrid");
  match->add_option("--R", match_r, "Top-R");
  match->add_option("--theta", theta, "Score threshold");
  match->add_option("--M", match_m, "Hybrid cap");

  auto* features = app.add_subcommand("features", "Item features");
  features->require_subcommand(1);
  auto* build = features->add_subcommand("build", "Assemble frozen and tag inputs");
  AddCommon(build, common);

  auto* train = app.add_subcommand("train", "Train a model");
  AddCommon(train, common);

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  AddCommon(evaluate, common);
  std::string checkpoint, eval_domain;
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  evaluate->add_option("--domain", eval_domain, "Target domain label");

  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid");
  AddCommon(ablate, common);
  std::string grid;
  ablate->add_option("--grid", grid, "tableIV | tableV | tableVI")->required();

  auto* synth = app.add_subcommand("synth", "Planted synthetic data");
  synth->require_subcommand(1);
  auto* synth_gen = synth->add_subcommand("generate", "Write a synthetic dataset");
  tema::SynthOptions synth_opts;
  std::string synth_out = "synth";
  bool synth_verbose = false;
  synth_gen->add_option("--seed", synth_opts.seed, "Generator seed");
  synth_gen->add_option("--out", synth_out, "Output directory");
  synth_gen->add_option("--users", synth_opts.num_users, "Number of users");
  synth_gen->add_option("--items", synth_opts.items_per_domain, "Items per domain");
  synth_gen->add_option("--tags", synth_opts.num_tags, "Hidden tags");
  synth_gen->add_flag("-v,--verbose", synth_verbose, "Log progress to stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (common.verbose || synth_verbose) tema::SetLogLevel(tema::LogLevel::kInfo);
    if (synth_gen->parsed()) {
      const auto config = tema::RunSynth(synth_opts, synth_out);
      std::cout << "wrote " << synth_out << "/config.json\n";
      return 0;
    }

    tema::RunConfig config = LoadConfig(common);
    const std::string out = config.paths.out;
    if (preprocess->parsed()) {
      tema::RunPreprocess(config, out);
    } else if (generate->parsed()) {
      if (gen_r) config.tagging.r = *gen_r;
      if (gen_n) config.tagging.n = *gen_n;
      if (config.tagging.r < 1 || config.tagging.n < 1) {
        throw tema::ConfigError("--R and --N must be >= 1");
      }
      tema::RunTagsGenerate(config, out, domain);
    } else if (match->parsed()) {
      if (strategy) config.tagging.selection.mode = tema::ParseSelectionMode(*strategy);
      if (match_r) config.tagging.selection.r = config.tagging.r = *match_r;
      if (theta) config.tagging.selection.theta = *theta;
      if (match_m) config.tagging.selection.m = *match_m;
      config.tagging.selection.Validate();
      tema::RunTagsMatch(config, out);
    } else if (build->parsed()) {
      tema::RunFeaturesBuild(config, out);
    } else if (train->parsed()) {
      const auto result = tema::RunTrain(config, out);
      std::cout << "best epoch " << result.report.best_epoch << " of "
                << result.report.stopping_epoch << "; checkpoint "
                << result.report.best_checkpoint_path << '\n';
    } else if (evaluate->parsed()) {
      const auto report = tema::RunEvaluate(config, checkpoint, eval_domain, out);
      std::cout << report.ToJson().dump(2) << '\n' << report.Table();
    } else if (ablate->parsed()) {
      const auto rows = tema::RunAblate(config, grid, out);
      std::cout << tema::AblationCsv(rows) << '\n' << tema::AblationTable(rows);
      for (const auto& r : rows) {
        if (!r.metrics) return 1;
      }
    }
    return 0;
  } catch (const tema::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

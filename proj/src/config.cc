#include "tema/config.h"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "tema/binary_io.h"

namespace tema {

using nlohmann::json;

namespace {

std::string SourceName(TagSource s) {
  switch (s) {
    case TagSource::kNone: return "none";
    case TagSource::kKeyword: return "keyword";
    case TagSource::kLlm: return "llm";
  }
  return "llm";
}

TagSource ParseSource(const std::string& s) {
  if (s == "none") return TagSource::kNone;
  if (s == "keyword") return TagSource::kKeyword;
  if (s == "llm") return TagSource::kLlm;
  throw ConfigError("tagging.source: unknown tag source '" + s + "'");
}

// Rejects keys outside `known`, naming the first one with its section prefix.
void CheckKeys(const json& j, const std::string& section,
               const std::vector<std::string>& known) {
  if (!j.is_object()) {
    throw ConfigError((section.empty() ? std::string("config") : section) +
                      ": expected an object");
  }
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown config key '" +
                        (section.empty() ? key : section + "." + key) + "'");
    }
  }
}

template <typename T>
void Get(const json& j, const std::string& section, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(field);
  } catch (const json::exception&) {
    throw ConfigError("bad value for config key '" + section + "." + key + "'");
  }
}

std::string Resolve(const std::string& base, const std::string& p) {
  if (p.empty() || base.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (std::filesystem::path(base) / p).lexically_normal().string();
}

}  // namespace

json RunConfig::ToJson() const {
  return {
      {"paths",
       {{"interactions", paths.interactions},
        {"image", paths.image},
        {"text", paths.text},
        {"items", paths.items},
        {"planted", paths.planted},
        {"tag_cache", paths.tag_cache},
        {"out", paths.out}}},
      {"domains", {{"x", domains.x}, {"y", domains.y}}},
      {"hyper", hyper.ToJson()},
      {"tagging",
       {{"provider", tagging.provider},
        {"seed", tagging.seed},
        {"R", tagging.r},
        {"N", tagging.n},
        {"strategy", SelectionModeName(tagging.selection.mode)},
        {"theta", tagging.selection.theta},
        {"M", tagging.selection.m},
        {"representation", TagRepresentationName(tagging.representation)},
        {"source", SourceName(tagging.source)}}},
      {"filters",
       {{"min_total", filters.min_total},
        {"min_per_domain", filters.min_per_domain},
        {"min_item_count", filters.min_item_count}}},
      {"mode", {{"parallel", parallel}, {"threads", threads}}},
      {"grid", {{"lambda1", lambda1_grid}, {"lambda2", lambda2_grid}}},
      {"target_domain", target_domain},
  };
}

std::string RunConfig::Canonical() const { return ToJson().dump(2) + "\n"; }

std::string RunConfig::Fingerprint() const { return Sha256Hex(ToJson().dump()); }

RunConfig RunConfig::FromJson(const json& j, const std::string& base_dir) {
  CheckKeys(j, "", {"paths", "domains", "hyper", "tagging", "filters", "mode",
                    "grid", "target_domain"});
  RunConfig c;
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    CheckKeys(p, "paths", {"interactions", "image", "text", "items", "planted",
                           "tag_cache", "out"});
    Get(p, "paths", "interactions", c.paths.interactions);
    Get(p, "paths", "image", c.paths.image);
    Get(p, "paths", "text", c.paths.text);
    Get(p, "paths", "items", c.paths.items);
    Get(p, "paths", "planted", c.paths.planted);
    Get(p, "paths", "tag_cache", c.paths.tag_cache);
    Get(p, "paths", "out", c.paths.out);
    for (std::string* s : {&c.paths.interactions, &c.paths.image, &c.paths.text,
                           &c.paths.items, &c.paths.planted, &c.paths.tag_cache,
                           &c.paths.out}) {
      *s = Resolve(base_dir, *s);
    }
  }
  if (j.contains("domains")) {
    const auto& d = j.at("domains");
    CheckKeys(d, "domains", {"x", "y"});
    Get(d, "domains", "x", c.domains.x);
    Get(d, "domains", "y", c.domains.y);
    if (c.domains.x.empty() || c.domains.y.empty() || c.domains.x == c.domains.y) {
      throw ConfigError("domains: labels must be non-empty and distinct");
    }
  }
  if (j.contains("hyper")) {
    std::vector<std::string> known;
    const json defaults = Hyperparams().ToJson();
    for (const auto& [key, value] : defaults.items()) known.push_back(key);
    CheckKeys(j.at("hyper"), "hyper", known);
    try {
      c.hyper = Hyperparams::FromJson(j.at("hyper"));
      c.hyper.Validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("hyper: ") + e.what());
    }
  }
  if (j.contains("tagging")) {
    const auto& t = j.at("tagging");
    CheckKeys(t, "tagging", {"provider", "seed", "R", "N", "strategy", "theta",
                             "M", "representation", "source"});
    Get(t, "tagging", "provider", c.tagging.provider);
    if (c.tagging.provider != "mock" && c.tagging.provider != "planted") {
      throw ConfigError("tagging.provider: expected mock or planted, got '" +
                        c.tagging.provider + "'");
    }
    Get(t, "tagging", "seed", c.tagging.seed);
    Get(t, "tagging", "R", c.tagging.r);
    Get(t, "tagging", "N", c.tagging.n);
    if (c.tagging.r < 1) throw ConfigError("tagging.R must be >= 1");
    if (c.tagging.n < 1) throw ConfigError("tagging.N must be >= 1");
    std::string s;
    if (t.contains("strategy")) {
      Get(t, "tagging", "strategy", s);
      try {
        c.tagging.selection.mode = ParseSelectionMode(s);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("tagging.strategy: ") + e.what());
      }
    }
    c.tagging.selection.r = c.tagging.r;
    Get(t, "tagging", "theta", c.tagging.selection.theta);
    Get(t, "tagging", "M", c.tagging.selection.m);
    try {
      c.tagging.selection.Validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("tagging: ") + e.what());
    }
    if (t.contains("representation")) {
      Get(t, "tagging", "representation", s);
      try {
        c.tagging.representation = ParseTagRepresentation(s);
      } catch (const Error& e) {
        throw ConfigError(std::string("tagging.representation: ") + e.what());
      }
    }
    if (t.contains("source")) {
      Get(t, "tagging", "source", s);
      c.tagging.source = ParseSource(s);
    }
  }
  if (j.contains("filters")) {
    const auto& f = j.at("filters");
    CheckKeys(f, "filters", {"min_total", "min_per_domain", "min_item_count"});
    Get(f, "filters", "min_total", c.filters.min_total);
    Get(f, "filters", "min_per_domain", c.filters.min_per_domain);
    Get(f, "filters", "min_item_count", c.filters.min_item_count);
    if (c.filters.min_total < 0 || c.filters.min_per_domain < 0 ||
        c.filters.min_item_count < 0) {
      throw ConfigError("filters: thresholds must be non-negative");
    }
  }
  if (j.contains("mode")) {
    const auto& m = j.at("mode");
    CheckKeys(m, "mode", {"parallel", "threads"});
    Get(m, "mode", "parallel", c.parallel);
    Get(m, "mode", "threads", c.threads);
    if (c.threads < 1) throw ConfigError("mode.threads must be >= 1");
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    CheckKeys(g, "grid", {"lambda1", "lambda2"});
    Get(g, "grid", "lambda1", c.lambda1_grid);
    Get(g, "grid", "lambda2", c.lambda2_grid);
    if (c.lambda1_grid.empty() || c.lambda2_grid.empty()) {
      throw ConfigError("grid: lambda grids must be non-empty");
    }
  }
  if (j.contains("target_domain")) {
    Get(j, "", "target_domain", c.target_domain);
  }
  try {
    if (!c.target_domain.empty()) c.domains.Resolve(c.target_domain);
  } catch (const Error&) {
    throw ConfigError("target_domain: '" + c.target_domain +
                      "' is neither domain label");
  }
  return c;
}

RunConfig RunConfig::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  const auto base = std::filesystem::path(path).parent_path().string();
  RunConfig c = FromJson(j, base);
  c.CheckInputs();
  return c;
}

void RunConfig::CheckInputs() const {
  const std::pair<const char*, const std::string*> inputs[] = {
      {"paths.interactions", &paths.interactions},
      {"paths.image", &paths.image},
      {"paths.text", &paths.text},
      {"paths.items", &paths.items},
      {"paths.planted", &paths.planted}};
  for (const auto& [key, p] : inputs) {
    if (!p->empty() && !std::filesystem::exists(*p)) {
      throw ConfigError(std::string(key) + ": no such file '" + *p + "'");
    }
  }
}

}  // namespace tema

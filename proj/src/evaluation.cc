#include "tema/evaluation.h"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "tema/binary_io.h"
#include "tema/log.h"

namespace tema {

using nlohmann::json;

namespace {

std::vector<int> RanksOf(const std::vector<RankResult>& r) {
  std::vector<int> out;
  out.reserve(r.size());
  for (const auto& x : r) out.push_back(x.rank);
  return out;
}

}  // namespace

double Mrr(std::span<const int> ranks) {
  if (ranks.empty()) throw Error("MRR over zero users");
  double s = 0.0;
  for (int r : ranks) {
    if (r < 1) throw Error("rank must be >= 1, got " + std::to_string(r));
    s += 1.0 / r;
  }
  return s / static_cast<double>(ranks.size());
}

double Mrr(const std::vector<RankResult>& ranks) {
  const auto v = RanksOf(ranks);
  return Mrr(std::span<const int>(v));
}

double NdcgAtK(std::span<const int> ranks, int k) {
  if (ranks.empty()) throw Error("NDCG over zero users");
  if (k < 1) throw Error("NDCG cutoff must be positive");
  double s = 0.0;
  for (int r : ranks) {
    if (r < 1) throw Error("rank must be >= 1, got " + std::to_string(r));
    if (r <= k) s += 1.0 / std::log2(r + 1.0);
  }
  return s / static_cast<double>(ranks.size());
}

double NdcgAtK(const std::vector<RankResult>& ranks, int k) {
  const auto v = RanksOf(ranks);
  return NdcgAtK(std::span<const int>(v), k);
}

json MetricsReport::ToJson() const {
  return {{"domain", domain}, {"mrr", mrr},   {"ndcg@5", ndcg5},
          {"ndcg@10", ndcg10}, {"users", users}, {"skipped", skipped},
          {"fingerprint", fingerprint}};
}

std::string MetricsReport::Table() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "domain   MRR      NDCG@5   NDCG@10  users  skipped\n";
  out << std::left << std::setw(9) << domain << std::setw(9) << mrr
      << std::setw(9) << ndcg5 << std::setw(9) << ndcg10 << std::setw(7)
      << users << skipped << '\n';
  return out.str();
}

std::vector<RankResult> RankHeldOut(const ModelParams& params,
                                    const DatasetSplit& split,
                                    const ItemFeatures& features,
                                    Domain target_domain, EvalTarget which,
                                    int* skipped) {
  const FeatureTables tables = BuildFeatureTables(params, features);
  std::vector<RankResult> out;
  int skip = 0;
  for (const auto& us : split.users) {
    const SequenceEvent& target = which == EvalTarget::kValid ? us.valid : us.test;
    if (target.domain != target_domain) {
      ++skip;
      continue;
    }
    std::vector<SequenceEvent> history = us.train;
    if (which == EvalTarget::kTest) history.push_back(us.valid);
    const Vector scores =
        ScoreDomain(params, tables, EncodeHistory(history, split.catalog), target_domain);
    out.push_back({us.user, target.item,
                   RankOf(scores, split.catalog.LocalIndex(target.item))});
  }
  if (skipped) *skipped = skip;
  return out;
}

MetricsReport Evaluate(const ModelParams& params, const DatasetSplit& split,
                       const ItemFeatures& features, Domain target_domain,
                       EvalTarget which) {
  MetricsReport report;
  report.domain = split.domains.Name(target_domain);
  const auto ranks =
      RankHeldOut(params, split, features, target_domain, which, &report.skipped);
  report.users = static_cast<int>(ranks.size());
  if (ranks.empty()) {
    throw Error("no held-out targets in domain '" + report.domain + "'");
  }
  report.mrr = Mrr(ranks);
  report.ndcg5 = NdcgAtK(ranks, 5);
  report.ndcg10 = NdcgAtK(ranks, 10);
  std::string buf = params.Digest() + features.Checksum() + report.domain;
  for (const auto& r : ranks) buf += r.user + '\t' + std::to_string(r.rank) + '\n';
  report.fingerprint = Sha256Hex(buf);
  return report;
}

std::vector<RankResult> RankTrainingPositions(const ModelParams& params,
                                              const DatasetSplit& split,
                                              const ItemFeatures& features,
                                              Domain target_domain) {
  const FeatureTables tables = BuildFeatureTables(params, features);
  std::vector<RankResult> out;
  for (const auto& us : split.users) {
    for (std::size_t t = 1; t < us.train.size(); ++t) {
      const auto& next = us.train[t];
      if (next.domain != target_domain) continue;
      std::vector<SequenceEvent> prefix(us.train.begin(),
                                        us.train.begin() + static_cast<std::ptrdiff_t>(t));
      const Vector scores = ScoreDomain(
          params, tables, EncodeHistory(prefix, split.catalog), target_domain);
      out.push_back({us.user, next.item,
                     RankOf(scores, split.catalog.LocalIndex(next.item))});
    }
  }
  return out;
}

// --- ablation ------------------------------------------------------------------

AblationSpec AblationSpec::TableIV() {
  AblationSpec s{"components", {}};
  AblationConfig base;
  base.name = "baseline";
  base.tag_source = TagSource::kNone;
  base.attention = AttentionMode::kShared;
  s.configs.push_back(base);

  AblationConfig tag = base;
  tag.name = "+tag";
  tag.tag_source = TagSource::kKeyword;
  s.configs.push_back(tag);

  AblationConfig llm = base;
  llm.name = "+llm";
  llm.tag_source = TagSource::kLlm;
  s.configs.push_back(llm);

  AblationConfig multi = llm;
  multi.name = "+multi";
  multi.attention = AttentionMode::kMulti;
  s.configs.push_back(multi);
  return s;
}

AblationSpec AblationSpec::TableV() {
  AblationSpec s{"representation", {}};
  for (auto r : {TagRepresentation::kOneHot, TagRepresentation::kUnweightedMultiHot,
                 TagRepresentation::kWeightedMultiHot}) {
    AblationConfig c;
    c.name = TagRepresentationName(r);
    c.representation = r;
    s.configs.push_back(c);
  }
  return s;
}

AblationSpec AblationSpec::TableVI() {
  AblationSpec s{"selection", {}};
  for (auto m : {SelectionMode::kTopR, SelectionMode::kThreshold,
                 SelectionMode::kHybrid}) {
    AblationConfig c;
    c.name = SelectionModeName(m);
    c.selection.mode = m;
    s.configs.push_back(c);
  }
  return s;
}

AblationSpec AblationSpec::ByName(const std::string& grid) {
  if (grid == "tableIV" || grid == "components") return TableIV();
  if (grid == "tableV" || grid == "representation") return TableV();
  if (grid == "tableVI" || grid == "selection") return TableVI();
  throw ConfigError("unknown ablation grid '" + grid +
                    "' (expected tableIV, tableV or tableVI)");
}

ItemFeatures FeaturesForConfig(const AblationInputs& inputs,
                               const AblationConfig& config) {
  const int unknown = inputs.vocabulary.IndexOf(kUnknownTag);
  if (unknown < 0) throw Error("shared vocabulary lacks the unknown tag");
  const auto& catalog = inputs.split.catalog;
  std::vector<TagScoreVector> vectors;
  for (Domain d : {Domain::kX, Domain::kY}) {
    for (const auto& item : catalog.Items(d)) {
      switch (config.tag_source) {
        case TagSource::kNone:
          break;
        case TagSource::kKeyword: {
          const auto it = inputs.item_texts.find(item);
          if (it != inputs.item_texts.end()) {
            vectors.push_back(KeywordTagVector(it->second, inputs.vocabulary, unknown));
          }
          break;
        }
        case TagSource::kLlm: {
          const auto it = inputs.raw_scores.find(item);
          const std::vector<RawTagScore> raw =
              it == inputs.raw_scores.end() ? std::vector<RawTagScore>{} : it->second;
          const auto selected = SelectTags(raw, config.selection, inputs.vocabulary);
          vectors.push_back(
              BuildTagVector(item, selected, config.representation, unknown));
          break;
        }
      }
    }
  }
  return AssembleFeatures(catalog, inputs.image, inputs.text, vectors,
                          inputs.vocabulary.size(), unknown);
}

std::vector<AblationRow> RunAblation(const AblationSpec& spec,
                                     const AblationInputs& inputs,
                                     const TrainOptions& options) {
  std::vector<AblationRow> rows;
  for (const auto& config : spec.configs) {
    AblationRow row;
    row.config = config.name;
    try {
      config.selection.Validate();
      Hyperparams h = inputs.hyper;
      h.attention = config.attention;
      h.use_tags = config.tag_source != TagSource::kNone;
      const ItemFeatures features = FeaturesForConfig(inputs, config);
      TrainOptions cell = options;
      if (!cell.out_dir.empty()) cell.out_dir += "/" + config.name;
      const auto run = Train(inputs.split, features, h, cell);
      row.metrics = Evaluate(run.best, inputs.split, features, inputs.target_domain);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      LogWarning("ablation cell '" + config.name + "' failed: " + e.what());
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string AblationCsv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "config,domain,mrr,ndcg@5,ndcg@10,users,error\n";
  for (const auto& r : rows) {
    out << r.config << ',';
    if (r.metrics) {
      out << r.metrics->domain << ',' << r.metrics->mrr << ',' << r.metrics->ndcg5
          << ',' << r.metrics->ndcg10 << ',' << r.metrics->users << ',';
    } else {
      out << ",,,,,";
    }
    std::string err = r.error;
    for (char& c : err) {
      if (c == ',' || c == '\n') c = ' ';
    }
    out << err << '\n';
  }
  return out.str();
}

std::string AblationTable(const std::vector<AblationRow>& rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.config.size() + 2);
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << std::left;
  out << std::setw(static_cast<int>(width)) << "config" << std::setw(9) << "MRR"
      << std::setw(9) << "NDCG@5" << "NDCG@10\n";
  for (const auto& r : rows) {
    out << std::setw(static_cast<int>(width)) << r.config;
    if (r.metrics) {
      out << std::setw(9) << r.metrics->mrr << std::setw(9) << r.metrics->ndcg5
          << r.metrics->ndcg10 << '\n';
    } else {
      out << "failed: " << r.error << '\n';
    }
  }
  return out.str();
}

}  // namespace tema

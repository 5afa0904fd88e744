#include <doctest.h>

#include <filesystem>

#include "oracles.h"
#include "tema/embedding.h"
#include "tema/evaluation.h"
#include "tema/pipeline.h"

TEST_CASE("hand-computed metrics") {
  const std::vector<int> ranks = {1, 2, 4};
  CHECK(tema::Mrr(ranks) == doctest::Approx(0.583333).epsilon(1e-6));
  CHECK(std::abs(tema::Mrr(ranks) - 7.0 / 12.0) < 1e-12);
  const std::vector<int> three = {3};
  CHECK(std::abs(tema::NdcgAtK(three, 5) - 0.5) < 1e-9);
  const std::vector<int> six = {6};
  CHECK(tema::NdcgAtK(six, 5) == 0.0);
  CHECK_THROWS_AS(tema::Mrr(std::vector<int>{}), tema::Error);
  CHECK_THROWS_AS(tema::Mrr(std::vector<int>{0}), tema::Error);
}

TEST_CASE("metrics agree with the brute-force oracle") {
  tema::Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> ranks(1 + rng.Below(50));
    for (auto& r : ranks) r = 1 + static_cast<int>(rng.Below(40));
    CHECK(tema::Mrr(ranks) == oracle::Mrr(ranks));
    CHECK(tema::NdcgAtK(ranks, 10) == oracle::Ndcg(ranks, 10));
  }
}

TEST_CASE("ablation grids") {
  const auto v = tema::AblationSpec::TableV();
  REQUIRE(v.configs.size() == 3);
  CHECK(v.configs[0].representation == tema::TagRepresentation::kOneHot);
  CHECK(v.configs[2].representation == tema::TagRepresentation::kWeightedMultiHot);
  CHECK(tema::AblationSpec::TableIV().configs.size() == 4);
  CHECK(tema::AblationSpec::TableVI().configs.size() == 3);
  CHECK_THROWS_AS(tema::AblationSpec::ByName("tableIX"), tema::ConfigError);
}

TEST_CASE("evaluation on a small planted run") {
  const auto dir = std::filesystem::temp_directory_path() / "tema_eval_t";
  std::filesystem::remove_all(dir);
  tema::SynthOptions o;
  o.num_users = 20;
  o.items_per_domain = 20;
  auto config = tema::RunSynth(o, dir.string());
  config.filters.min_item_count = 1;
  config.hyper.max_epochs = 2;
  const auto run = tema::Prepare(config);
  const auto trained = tema::Train(run.inputs.split, run.features, config.hyper);

  int skipped = 0;
  const auto ranks = tema::RankHeldOut(trained.best, run.inputs.split, run.features,
                                       tema::Domain::kX, tema::EvalTarget::kTest, &skipped);
  int in_x = 0;
  for (const auto& u : run.inputs.split.users) in_x += u.test.domain == tema::Domain::kX;
  CHECK(static_cast<int>(ranks.size()) == in_x);
  CHECK(skipped == static_cast<int>(run.inputs.split.users.size()) - in_x);
  for (const auto& r : ranks) {
    CHECK(r.rank >= 1);
    CHECK(r.rank <= run.inputs.split.catalog.Size(tema::Domain::kX));
  }

  const auto a = tema::Evaluate(trained.best, run.inputs.split, run.features, tema::Domain::kX);
  const auto b = tema::Evaluate(trained.best, run.inputs.split, run.features, tema::Domain::kX);
  CHECK(a.ToJson() == b.ToJson());
  CHECK(a.mrr == doctest::Approx(tema::Mrr(ranks)));
  CHECK(a.ToJson().contains("ndcg@10"));
  CHECK(!tema::RankTrainingPositions(trained.best, run.inputs.split, run.features,
                                     tema::Domain::kX).empty());
  std::filesystem::remove_all(dir);
}

#include <doctest.h>

#include <filesystem>

#include "toy.h"
#include "tema/binary_io.h"
#include "tema/pipeline.h"
#include "tema/training.h"

using tema::Matrix;

TEST_CASE("one adam step on a scalar moves by about lr") {
  auto hp = toy::Hyper(2);
  auto p = tema::ModelParams::Init(hp, 2, 2, 2);
  auto g = tema::ModelParams::ZerosLike(p);
  g.id_table(0, 0) = 1.0;
  auto state = tema::AdamState::For(p);
  const double before = p.id_table(0, 0);
  const Matrix tag_before = p.tag_table;
  tema::AdamStep(p, g, state, 1e-3);
  CHECK(state.t == 1);
  CHECK(p.id_table(0, 0) - before == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-9));
  CHECK(p.tag_table == tag_before);

  // A zero gradient is a fixed point.
  const auto frozen = p.id_table;
  tema::AdamStep(p, tema::ModelParams::ZerosLike(p), state, 1e-3);
  CHECK(state.t == 2);
  CHECK(p.id_table(1, 1) == frozen(1, 1));
}

TEST_CASE("gradients: mean over users, unused paths stay zero") {
  auto hp = toy::Hyper();
  hp.use_tags = false;
  hp.dropout = 0.0;
  const auto f = toy::Features(4, 4, 8, 5, 7);
  const auto p = tema::ModelParams::Init(hp, 4, 4, 5);
  const auto users = toy::Histories(2, 4, 4, 6, 8);
  const auto one = tema::ComputeGradients(p, f, users);
  CHECK(one.grad.tag_table.norm() == 0.0);
  CHECK(one.grad.id_table.norm() > 0.0);

  auto doubled = users;
  doubled.insert(doubled.end(), users.begin(), users.end());
  const auto two = tema::ComputeGradients(p, f, doubled);
  CHECK(two.loss == doctest::Approx(one.loss).epsilon(1e-12));
  CHECK((two.grad.id_table - one.grad.id_table).norm() < 1e-12);
}

TEST_CASE("threaded gradients agree with the single-threaded sum") {
  const auto hp = toy::Hyper();
  const auto f = toy::Features(4, 4, 8, 5, 7);
  const auto p = tema::ModelParams::Init(hp, 4, 4, 5);
  const auto users = toy::Histories(6, 4, 4, 6, 9);
  tema::ComputeOptions serial, threaded;
  serial.dropout = threaded.dropout = {0.3, true, nullptr};
  threaded.threads = 3;
  const auto a = tema::ComputeGradients(p, f, users, serial);
  const auto b = tema::ComputeGradients(p, f, users, threaded);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
  CHECK((a.grad.id_table - b.grad.id_table).norm() < 1e-10);
}

TEST_CASE("adam never touches frozen inputs") {
  const auto hp = toy::Hyper();
  const auto f = toy::Features(4, 4, 8, 5, 7);
  const std::string checksum = f.Checksum();
  auto p = tema::ModelParams::Init(hp, 4, 4, 5);
  auto state = tema::AdamState::For(p);
  const auto users = toy::Histories(3, 4, 4, 6, 1);
  for (int i = 0; i < 100; ++i) {
    tema::AdamStep(p, tema::ComputeGradients(p, f, users).grad, state, 1e-2);
  }
  CHECK(f.Checksum() == checksum);
}

TEST_CASE("planted training is reproducible and its loss falls") {
  const auto dir = std::filesystem::temp_directory_path() / "tema_train_t";
  std::filesystem::remove_all(dir);
  auto config = tema::RunSynth(tema::SynthOptions{}, dir.string());
  config.hyper.max_epochs = 6;
  const auto run = tema::Prepare(config);
  const auto a = tema::Train(run.inputs.split, run.features, config.hyper);
  const auto b = tema::Train(run.inputs.split, run.features, config.hyper);
  REQUIRE(a.report.epochs.size() == 6);
  for (std::size_t i = 0; i < a.report.epochs.size(); ++i) {
    CHECK(a.report.epochs[i].train_loss == b.report.epochs[i].train_loss);
  }
  for (std::size_t i = 1; i < 6; ++i) {
    CHECK(a.report.epochs[i].train_loss < a.report.epochs[i - 1].train_loss);
  }
  CHECK(tema::CheckpointBytes(a.best) == tema::CheckpointBytes(b.best));
  std::filesystem::remove_all(dir);
}

TEST_CASE("grid search keeps the first best cell") {
  const auto dir = std::filesystem::temp_directory_path() / "tema_grid_t";
  std::filesystem::remove_all(dir);
  tema::SynthOptions o;
  o.num_users = 20;
  o.items_per_domain = 20;
  auto config = tema::RunSynth(o, dir.string());
  config.filters.min_item_count = 1;
  config.hyper.max_epochs = 1;
  const auto run = tema::Prepare(config);
  const auto g = tema::GridSearch(run.inputs.split, run.features, config.hyper,
                                  {0.3, 0.2}, {0.1});
  REQUIRE(g.cells.size() == 2);
  CHECK(g.cells[0].lambda1 == 0.2);
  double best = -1.0;
  for (const auto& c : g.cells) best = std::max(best, c.valid_mrr);
  for (const auto& c : g.cells) {
    if (c.valid_mrr == best) {
      CHECK(g.best_lambda1 == c.lambda1);
      break;
    }
  }
  CHECK_THROWS_AS(tema::GridSearch(run.inputs.split, run.features, config.hyper, {}, {0.1}),
                  tema::Error);
  std::filesystem::remove_all(dir);
}

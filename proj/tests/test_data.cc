#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "oracles.h"
#include "tema/data.h"
#include "tema/embedding.h"
#include "tema/synth.h"

using tema::Domain;
using tema::Interaction;

namespace {

const tema::DomainPair kDomains{"food", "kitchen"};

std::vector<Interaction> Parse(const std::string& text) {
  std::istringstream in(text);
  return tema::ParseInteractions(in, kDomains);
}

std::vector<Interaction> UserWith(const std::string& u, int nx, int ny) {
  std::vector<Interaction> log;
  for (int i = 0; i < nx; ++i) log.push_back({u, "x" + std::to_string(i), Domain::kX, i});
  for (int i = 0; i < ny; ++i) log.push_back({u, "y" + std::to_string(i), Domain::kY, 100 + i});
  return log;
}

}  // namespace

TEST_CASE("parse maps the four fields") {
  const auto rows = Parse("u1\ti9\tfood\t100\n");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0] == Interaction{"u1", "i9", Domain::kX, 100});
  CHECK(Parse("").empty());
  CHECK(Parse("\n\nu1\ti9\tkitchen\t5\n").at(0).domain == Domain::kY);
}

TEST_CASE("parse errors carry the line number or token") {
  try {
    Parse("u1\ti9\tfood\n");
    FAIL("no throw");
  } catch (const tema::Error& e) {
    CHECK(std::string(e.what()).find(":1:") != std::string::npos);
  }
  try {
    Parse("u1\ti9\tfood\t1\nu1\ti9\tgarden\t2\n");
    FAIL("no throw");
  } catch (const tema::Error& e) {
    const std::string what = e.what();
    CHECK(what.find(":2:") != std::string::npos);
    CHECK(what.find("garden") != std::string::npos);
  }
  CHECK_THROWS_AS(Parse("u1\ti9\tfood\tnoon\n"), tema::Error);
}

TEST_CASE("user filter boundary") {
  CHECK(tema::FilterUsers(UserWith("u", 9, 3)).size() == 12);
  CHECK(tema::FilterUsers(UserWith("u", 10, 2)).empty());
  CHECK(tema::FilterUsers(UserWith("u", 6, 3)).empty());  // 9 total
}

TEST_CASE("user filter matches a manual count on a three-user log") {
  auto log = UserWith("a", 7, 3);
  const auto b = UserWith("b", 8, 1);
  const auto c = UserWith("c", 5, 5);
  log.insert(log.end(), b.begin(), b.end());
  log.insert(log.end(), c.begin(), c.end());
  const auto kept = tema::FilterUsers(log);
  std::set<std::string> users;
  for (const auto& r : kept) users.insert(r.user);
  CHECK(users == oracle::SurvivingUsers(log, 10, 3));
  CHECK(users == std::set<std::string>{"a", "c"});
}

TEST_CASE("item filter drops rare items") {
  std::vector<Interaction> log = {{"u", "a", Domain::kX, 1},
                                  {"v", "a", Domain::kX, 2},
                                  {"u", "b", Domain::kX, 3}};
  const auto kept = tema::FilterItems(log, 2);
  REQUIRE(kept.size() == 2);
  CHECK(kept[1].user == "v");
}

TEST_CASE("sequences follow timestamps, stable on ties") {
  const std::vector<Interaction> log = {{"u", "c", Domain::kX, 3},
                                        {"u", "a", Domain::kX, 1},
                                        {"u", "b", Domain::kY, 2},
                                        {"w", "q", Domain::kX, 5},
                                        {"w", "p", Domain::kX, 5}};
  const auto seqs = tema::BuildSequences(log);
  const auto& u = seqs.at("u");
  CHECK(u.seq_x == std::vector<std::string>{"a", "c"});
  CHECK(u.seq_y == std::vector<std::string>{"b"});
  REQUIRE(u.merged.size() == 3);
  CHECK(u.merged[1].item == "b");
  CHECK(seqs.at("w").seq_x == std::vector<std::string>{"q", "p"});
}

TEST_CASE("sequences match a sort-and-partition oracle") {
  tema::Rng rng(11);
  std::vector<Interaction> log;
  for (int i = 0; i < 20; ++i) {
    log.push_back({"u", "i" + std::to_string(i),
                   rng.Uniform() < 0.5 ? Domain::kX : Domain::kY,
                   static_cast<std::int64_t>(rng.Below(6))});
  }
  auto sorted = log;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  std::vector<std::string> xs, ys, all;
  for (const auto& r : sorted) {
    all.push_back(r.item);
    (r.domain == Domain::kX ? xs : ys).push_back(r.item);
  }
  const auto seqs = tema::BuildSequences(log);
  const auto& s = seqs.at("u");
  std::vector<std::string> merged;
  for (const auto& e : s.merged) merged.push_back(e.item);
  CHECK(merged == all);
  CHECK(s.seq_x == xs);
  CHECK(s.seq_y == ys);
}

TEST_CASE("leave-last-out split") {
  std::vector<Interaction> log;
  const std::string items = "abcde";
  for (int i = 0; i < 5; ++i) {
    log.push_back({"u", std::string(1, items[static_cast<std::size_t>(i)]),
                   i % 2 ? Domain::kY : Domain::kX, i});
  }
  const auto split = tema::ChronologicalSplit(tema::BuildSequences(log), kDomains);
  REQUIRE(split.users.size() == 1);
  const auto& u = split.users[0];
  REQUIRE(u.train.size() == 3);
  CHECK(u.train[2].item == "c");
  CHECK(u.valid.item == "d");
  CHECK(u.test.item == "e");
  CHECK(split.catalog.LocalIndex("a") == 0);
  CHECK(split.catalog.LocalIndex("c") == 1);
  CHECK(split.catalog.LocalIndex("e") == 2);
  CHECK(split.catalog.GlobalIndex("b") == 3);
}

TEST_CASE("catalog over {a, c} is lexicographic and dense") {
  const tema::ItemCatalog cat({"c", "a", "c"}, {});
  CHECK(cat.Size(Domain::kX) == 2);
  CHECK(cat.LocalIndex("a") == 0);
  CHECK(cat.LocalIndex("c") == 1);
  CHECK_THROWS_AS(cat.LocalIndex("b"), tema::Error);
}

TEST_CASE("split rejects short users by name") {
  const std::vector<Interaction> log = {{"shorty", "a", Domain::kX, 1},
                                        {"shorty", "b", Domain::kY, 2}};
  try {
    tema::ChronologicalSplit(tema::BuildSequences(log), kDomains);
    FAIL("no throw");
  } catch (const tema::Error& e) {
    CHECK(std::string(e.what()).find("shorty") != std::string::npos);
  }
}

TEST_CASE("five users give five targets each way; manifest round trip") {
  std::vector<Interaction> log;
  for (int u = 0; u < 5; ++u) {
    for (int i = 0; i < 4; ++i) {
      log.push_back({"u" + std::to_string(u),
                     (i % 2 ? "y" : "x") + std::to_string(i + u),
                     i % 2 ? Domain::kY : Domain::kX, i});
    }
  }
  const auto split = tema::ChronologicalSplit(tema::BuildSequences(log), kDomains);
  CHECK(split.users.size() == 5);

  std::ostringstream manifest, catalog;
  tema::WriteSplitManifest(split, manifest);
  tema::WriteCatalog(split, catalog);
  const auto dir = std::filesystem::temp_directory_path() / "tema_data_rt";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "split.jsonl") << manifest.str();
  std::ofstream(dir / "catalog.jsonl") << catalog.str();
  const auto back = tema::ReadDataset((dir / "split.jsonl").string(),
                                      (dir / "catalog.jsonl").string(), kDomains);
  std::ostringstream again;
  tema::WriteSplitManifest(back, again);
  CHECK(again.str() == manifest.str());
  std::filesystem::remove_all(dir);
}

TEST_CASE("planted generator walks deterministic orbits") {
  tema::SynthOptions o;
  o.primary_min = 0.6;
  o.primary_max = 0.7;
  const auto a = tema::GenerateSynthetic(o);
  const auto b = tema::GenerateSynthetic(o);
  CHECK(a.log == b.log);
  CHECK((a.image - b.image).norm() == 0.0);

  for (const auto& item : a.items) {
    REQUIRE(item.affinity.size() >= 2);
    CHECK(item.affinity[0].second >= 0.6);
    CHECK(item.affinity[0].second < 0.7);
  }
  // follow_prob = 1: within a domain every item has a single successor.
  std::map<std::string, std::string> next;
  int conflicts = 0;
  for (const auto& [user, seq] : tema::BuildSequences(a.log)) {
    for (const auto* s : {&seq.seq_x, &seq.seq_y}) {
      for (std::size_t i = 0; i + 1 < s->size(); ++i) {
        const auto [it, fresh] = next.emplace((*s)[i], (*s)[i + 1]);
        conflicts += !fresh && it->second != (*s)[i + 1];
      }
    }
    REQUIRE(seq.merged.size() >= 2);
    CHECK(seq.merged.back().domain == Domain::kX);
    CHECK(seq.merged[seq.merged.size() - 2].domain == Domain::kX);
  }
  CHECK(conflicts == 0);

  o.primary_min = 0.45;
  CHECK_THROWS_AS(tema::GenerateSynthetic(o), tema::ConfigError);
}

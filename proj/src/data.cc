#include "tema/data.h"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tema {

using nlohmann::json;

Domain DomainPair::Resolve(const std::string& token) const {
  if (token == x) return Domain::kX;
  if (token == y) return Domain::kY;
  throw Error("unknown domain name '" + token + "'");
}

namespace {

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

}  // namespace

std::vector<Interaction> ParseInteractions(std::istream& in,
                                           const DomainPair& domains,
                                           const std::string& source) {
  std::vector<Interaction> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(line_no) + ": ";
    const auto fields = SplitTabs(line);
    if (fields.size() != 4) {
      throw Error(where + "expected 4 tab-separated fields, got " +
                  std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw Error(where + "empty user or item id");
    }
    Interaction row;
    row.user = fields[0];
    row.item = fields[1];
    try {
      row.domain = domains.Resolve(fields[2]);
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
    std::size_t consumed = 0;
    try {
      row.timestamp = std::stoll(fields[3], &consumed);
    } catch (const std::exception&) {
      consumed = 0;
    }
    if (consumed == 0 || consumed != fields[3].size() || row.timestamp < 0) {
      throw Error(where + "bad timestamp '" + fields[3] + "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<Interaction> ParseInteractions(const std::string& path,
                                           const DomainPair& domains) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open interactions file " + path);
  return ParseInteractions(in, domains, path);
}

std::vector<Interaction> FilterItems(const std::vector<Interaction>& log,
                                     int min_item_count) {
  std::unordered_map<std::string, int> counts;
  for (const auto& row : log) ++counts[row.item];
  std::vector<Interaction> kept;
  for (const auto& row : log) {
    if (counts[row.item] >= min_item_count) kept.push_back(row);
  }
  return kept;
}

std::vector<Interaction> FilterUsers(const std::vector<Interaction>& log,
                                     int min_total, int min_per_domain) {
  struct Counts {
    int total = 0;
    int per_domain[2] = {0, 0};
  };
  std::unordered_map<std::string, Counts> counts;
  for (const auto& row : log) {
    auto& c = counts[row.user];
    ++c.total;
    ++c.per_domain[DomainIndex(row.domain)];
  }
  std::vector<Interaction> kept;
  for (const auto& row : log) {
    const auto& c = counts[row.user];
    if (c.total >= min_total && c.per_domain[0] >= min_per_domain &&
        c.per_domain[1] >= min_per_domain) {
      kept.push_back(row);
    }
  }
  return kept;
}

std::vector<Interaction> ApplyFilters(const std::vector<Interaction>& log,
                                      const FilterOptions& options) {
  return FilterUsers(FilterItems(log, options.min_item_count),
                     options.min_total, options.min_per_domain);
}

std::map<std::string, UserSequences> BuildSequences(
    const std::vector<Interaction>& log) {
  std::map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < log.size(); ++i) by_user[log[i].user].push_back(i);

  std::map<std::string, UserSequences> out;
  for (auto& [user, rows] : by_user) {
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      return log[a].timestamp < log[b].timestamp;
    });
    UserSequences seq;
    seq.user = user;
    for (std::size_t i : rows) {
      const auto& row = log[i];
      seq.merged.push_back({row.item, row.domain});
      (row.domain == Domain::kX ? seq.seq_x : seq.seq_y).push_back(row.item);
    }
    out.emplace(user, std::move(seq));
  }
  return out;
}

std::vector<std::string> ProjectDomain(const std::vector<SequenceEvent>& merged,
                                       Domain d) {
  std::vector<std::string> out;
  for (const auto& e : merged) {
    if (e.domain == d) out.push_back(e.item);
  }
  return out;
}

ItemCatalog::ItemCatalog(std::vector<std::string> x_items,
                         std::vector<std::string> y_items) {
  items_[0] = std::move(x_items);
  items_[1] = std::move(y_items);
  for (int d = 0; d < 2; ++d) {
    auto& items = items_[d];
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto [it, inserted] = index_.emplace(
          items[i], std::make_pair(static_cast<Domain>(d), static_cast<int>(i)));
      if (!inserted) {
        throw Error("item '" + items[i] + "' appears in both domains");
      }
    }
  }
}

bool ItemCatalog::Contains(const std::string& item) const {
  return index_.contains(item);
}

int ItemCatalog::LocalIndex(const std::string& item) const {
  const auto it = index_.find(item);
  if (it == index_.end()) throw Error("item '" + item + "' not in catalog");
  return it->second.second;
}

int ItemCatalog::GlobalIndex(const std::string& item) const {
  const auto it = index_.find(item);
  if (it == index_.end()) throw Error("item '" + item + "' not in catalog");
  return Offset(it->second.first) + it->second.second;
}

Domain ItemCatalog::DomainOf(const std::string& item) const {
  const auto it = index_.find(item);
  if (it == index_.end()) throw Error("item '" + item + "' not in catalog");
  return it->second.first;
}

const std::string& ItemCatalog::ItemAtGlobal(int global) const {
  const Domain d = DomainOfGlobal(global);
  return ItemAt(d, global - Offset(d));
}

DatasetSplit ChronologicalSplit(
    const std::map<std::string, UserSequences>& sequences,
    const DomainPair& domains) {
  DatasetSplit split;
  split.domains = domains;
  std::vector<std::string> items[2];
  for (const auto& [user, seq] : sequences) {
    if (seq.merged.size() < 3) {
      throw Error("user '" + user + "' has " +
                  std::to_string(seq.merged.size()) +
                  " interactions; at least 3 are needed for a split");
    }
    UserSplit us;
    us.user = user;
    us.train.assign(seq.merged.begin(), seq.merged.end() - 2);
    us.valid = seq.merged[seq.merged.size() - 2];
    us.test = seq.merged.back();
    for (const auto& e : seq.merged) items[DomainIndex(e.domain)].push_back(e.item);
    split.users.push_back(std::move(us));
  }
  split.catalog = ItemCatalog(std::move(items[0]), std::move(items[1]));
  return split;
}

void WriteSplitManifest(const DatasetSplit& split, std::ostream& out) {
  for (const auto& us : split.users) {
    json train_items = json::array();
    json train_domains = json::array();
    for (const auto& e : us.train) {
      train_items.push_back(e.item);
      train_domains.push_back(split.domains.Name(e.domain));
    }
    json line = {
        {"user", us.user},
        {"train_items", train_items},
        {"valid_target", us.valid.item},
        {"test_target", us.test.item},
        {"domains",
         {{"train", train_domains},
          {"valid", split.domains.Name(us.valid.domain)},
          {"test", split.domains.Name(us.test.domain)}}},
    };
    out << line.dump() << '\n';
  }
}

void WriteCatalog(const DatasetSplit& split, std::ostream& out) {
  for (Domain d : {Domain::kX, Domain::kY}) {
    const auto& items = split.catalog.Items(d);
    for (std::size_t i = 0; i < items.size(); ++i) {
      json line = {{"item", items[i]},
                   {"domain", split.domains.Name(d)},
                   {"index", i}};
      out << line.dump() << '\n';
    }
  }
}

DatasetSplit ReadDataset(const std::string& manifest_path,
                         const std::string& catalog_path,
                         const DomainPair& domains) {
  DatasetSplit split;
  split.domains = domains;

  std::ifstream cat_in(catalog_path);
  if (!cat_in) throw Error("cannot open catalog " + catalog_path);
  std::vector<std::string> items[2];
  std::string line;
  while (std::getline(cat_in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    const Domain d = domains.Resolve(j.at("domain").get<std::string>());
    items[DomainIndex(d)].push_back(j.at("item").get<std::string>());
  }
  split.catalog = ItemCatalog(std::move(items[0]), std::move(items[1]));

  std::ifstream in(manifest_path);
  if (!in) throw Error("cannot open split manifest " + manifest_path);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    UserSplit us;
    us.user = j.at("user").get<std::string>();
    const auto& doms = j.at("domains");
    const auto& train_items = j.at("train_items");
    const auto& train_domains = doms.at("train");
    if (train_items.size() != train_domains.size()) {
      throw Error("manifest row for '" + us.user +
                  "' has mismatched train_items/domains lengths");
    }
    for (std::size_t i = 0; i < train_items.size(); ++i) {
      us.train.push_back({train_items[i].get<std::string>(),
                          domains.Resolve(train_domains[i].get<std::string>())});
    }
    us.valid = {j.at("valid_target").get<std::string>(),
                domains.Resolve(doms.at("valid").get<std::string>())};
    us.test = {j.at("test_target").get<std::string>(),
               domains.Resolve(doms.at("test").get<std::string>())};
    split.users.push_back(std::move(us));
  }
  std::sort(split.users.begin(), split.users.end(),
            [](const UserSplit& a, const UserSplit& b) { return a.user < b.user; });
  return split;
}

}  // namespace tema

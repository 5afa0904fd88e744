#ifndef TEMA_DATA_H_
#define TEMA_DATA_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "tema/common.h"

namespace tema {

struct Interaction {
  std::string user;
  std::string item;
  Domain domain = Domain::kX;
  std::int64_t timestamp = 0;

  bool operator==(const Interaction&) const = default;
};

// Reads a UTF-8 file of `user\titem\tdomain\ttimestamp` lines. Blank lines are
// skipped. Throws Error("<path>:<line>: ...") on malformed rows and on domain
// tokens that match neither label.
std::vector<Interaction> ParseInteractions(const std::string& path,
                                           const DomainPair& domains);
std::vector<Interaction> ParseInteractions(std::istream& in,
                                           const DomainPair& domains,
                                           const std::string& source = "input");

struct FilterOptions {
  int min_total = 10;
  int min_per_domain = 3;
  // Items with fewer interactions are dropped before user filtering.
  int min_item_count = 5;
};

std::vector<Interaction> FilterItems(const std::vector<Interaction>& log,
                                     int min_item_count);
// Keeps users with >= min_total interactions and >= min_per_domain in each
// domain. Single pass; preserves input order.
std::vector<Interaction> FilterUsers(const std::vector<Interaction>& log,
                                     int min_total = 10,
                                     int min_per_domain = 3);
std::vector<Interaction> ApplyFilters(const std::vector<Interaction>& log,
                                      const FilterOptions& options);

struct SequenceEvent {
  std::string item;
  Domain domain = Domain::kX;

  bool operator==(const SequenceEvent&) const = default;
};

struct UserSequences {
  std::string user;
  std::vector<std::string> seq_x;
  std::vector<std::string> seq_y;
  std::vector<SequenceEvent> merged;
};

// Sorted by user id. Events ordered by (timestamp, input position).
std::map<std::string, UserSequences> BuildSequences(
    const std::vector<Interaction>& log);

// Projects a merged sequence onto one domain.
std::vector<std::string> ProjectDomain(const std::vector<SequenceEvent>& merged,
                                       Domain d);

// Per-domain dense item indices, lexicographic by item id. Global indices
// place domain X first: global = local for X, nx + local for Y.
class ItemCatalog {
 public:
  ItemCatalog() = default;
  ItemCatalog(std::vector<std::string> x_items, std::vector<std::string> y_items);

  int Size(Domain d) const {
    return static_cast<int>(items_[DomainIndex(d)].size());
  }
  int TotalSize() const { return Size(Domain::kX) + Size(Domain::kY); }
  int Offset(Domain d) const { return d == Domain::kX ? 0 : Size(Domain::kX); }

  bool Contains(const std::string& item) const;
  // Throws Error for unknown items.
  int LocalIndex(const std::string& item) const;
  int GlobalIndex(const std::string& item) const;
  Domain DomainOf(const std::string& item) const;
  const std::string& ItemAt(Domain d, int local) const {
    return items_[DomainIndex(d)][static_cast<std::size_t>(local)];
  }
  const std::string& ItemAtGlobal(int global) const;
  Domain DomainOfGlobal(int global) const {
    return global < Size(Domain::kX) ? Domain::kX : Domain::kY;
  }
  const std::vector<std::string>& Items(Domain d) const {
    return items_[DomainIndex(d)];
  }

 private:
  std::vector<std::string> items_[2];
  std::unordered_map<std::string, std::pair<Domain, int>> index_;
};

struct UserSplit {
  std::string user;
  std::vector<SequenceEvent> train;
  SequenceEvent valid;
  SequenceEvent test;
};

struct DatasetSplit {
  DomainPair domains;
  std::vector<UserSplit> users;  // sorted by user id
  ItemCatalog catalog;
};

// Leave-last-out on the merged sequence. Throws Error naming the user when a
// merged sequence has fewer than 3 events.
DatasetSplit ChronologicalSplit(
    const std::map<std::string, UserSequences>& sequences,
    const DomainPair& domains);

// Line-oriented JSON: {user, train_items, valid_target, test_target, domains}.
void WriteSplitManifest(const DatasetSplit& split, std::ostream& out);
// Line-oriented JSON: {item, domain, index}.
void WriteCatalog(const DatasetSplit& split, std::ostream& out);
// Reads a manifest + catalog pair written by the functions above.
DatasetSplit ReadDataset(const std::string& manifest_path,
                         const std::string& catalog_path,
                         const DomainPair& domains);

}  // namespace tema

#endif  // TEMA_DATA_H_

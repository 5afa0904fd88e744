#ifndef TEMA_SYNTH_H_
#define TEMA_SYNTH_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tema/common.h"
#include "tema/data.h"
#include "tema/tagging.h"

namespace tema {

// Planted-preference generator. Every item has a primary and a secondary tag
// (plus sometimes a weak third). A hidden cyclic permutation sigma of the tags
// links items: (p, s) is followed by (sigma(p), sigma(s)), so the successor is
// pinned down by both weighted tags but only narrowed to a group by the
// primary one. Users start from their favourite tag and walk these orbits in
// both domains; with follow_prob < 1 they sometimes jump to another item
// carrying one of their preferred tags instead.
struct SynthOptions {
  std::uint64_t seed = 7;
  int num_users = 60;
  int items_per_domain = 80;
  int num_tags = 12;
  int min_events = 18;
  int max_events = 24;
  double follow_prob = 1.0;      // chance of stepping along the cycle
  bool end_in_x = true;          // last two events of every user in domain X
  double tertiary_prob = 0.5;    // chance an item carries a third, weak tag
  double primary_min = 0.55;     // primary tag weight ~ U[primary_min, primary_max)
  double primary_max = 0.75;
  int embedding_dim = 32;
  double image_noise = 1.0;      // image vectors: primary tag signal + noise
  double text_noise = 3.0;       // text vectors: full affinity signal + noise
  DomainPair domains{"food", "kitchen"};
};

struct SynthItem {
  std::string id;
  Domain domain = Domain::kX;
  std::vector<std::pair<std::string, double>> affinity;  // sorted by weight desc
  std::string title;
};

struct SynthDataset {
  SynthOptions options;
  std::vector<std::string> tags;
  std::vector<SynthItem> items;  // domain X first, each domain in id order
  std::vector<Interaction> log;
  Matrix image;                  // rows follow `items`
  Matrix text;

  PlantedAffinities Planted() const;
};

SynthDataset GenerateSynthetic(const SynthOptions& options);

// Writes interactions.tsv, items.jsonl, planted.jsonl, image.bin, text.bin
// (with .ids sidecars) into `dir`.
void WriteSynthetic(const SynthDataset& data, const std::string& dir);

}  // namespace tema

#endif  // TEMA_SYNTH_H_

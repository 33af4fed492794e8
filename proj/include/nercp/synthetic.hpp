#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nercp/corpus.hpp"
#include "nercp/embedding.hpp"

namespace nercp {

struct LanguageSpec {
  std::string name;
  double shift = 0.0;   // added to the emission noise
  double weight = 1.0;  // relative sampling frequency
};

// Hidden-Markov corpus: an IOB2 label chain emits words from per-group
// vocabularies (O plus one group per class). With probability
// emission_noise + shift a word comes from a different group. Word vectors
// are a unit indicator of the word's group plus Gaussian noise plus a
// constant bias feature.
struct SyntheticSpec {
  std::vector<std::string> classes{"PER", "LOC", "ORG", "MISC"};
  std::vector<LanguageSpec> languages{{"en", 0.0, 1.0}};
  int min_length = 1;
  int max_length = 20;
  double entity_rate = 0.15;    // P(start an entity) outside entities
  double continue_rate = 0.5;   // P(I-w) right after B-w or I-w
  double adjacent_rate = 0.15;  // P(start an entity) right after one ends
  double emission_noise = 0.03;
  double embedding_noise = 0.2;
  int vocab_per_group = 40;

  void validate() const;
};

struct SyntheticData {
  Corpus corpus;
  EmbeddingTable table;
};

// Sentence i depends only on (seed, i).
SyntheticData generate_synthetic(const SyntheticSpec& spec, std::size_t n, std::uint64_t seed);

}  // namespace nercp

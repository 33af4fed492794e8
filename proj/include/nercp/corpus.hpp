#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nercp/label_scheme.hpp"

namespace nercp {

struct Sentence {
  std::vector<std::string> tokens;
  std::string language;
  std::optional<LabelSequence> gold;

  int length() const { return static_cast<int>(tokens.size()); }
  friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct Corpus {
  LabelScheme scheme;
  std::vector<Sentence> sentences;
  std::map<std::string, std::string> metadata;

  explicit Corpus(LabelScheme s) : scheme(std::move(s)) {}
  std::size_t size() const { return sentences.size(); }
  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.scheme == b.scheme && a.sentences == b.sentences;
  }
};

struct ConllOptions {
  // Rewrite an I-w that does not continue a w entity as B-w instead of failing.
  bool repair = false;
};

// Token and label in the first and last whitespace-separated columns, blank
// lines between sentences, -DOCSTART- lines skipped. A line "# lang = xx" sets
// the language of the sentences that follow it.
Corpus parse_conll(std::istream& in, const LabelScheme& scheme, const ConllOptions& options = {});
Corpus parse_conll_string(const std::string& text, const LabelScheme& scheme, const ConllOptions& options = {});
std::string serialize_conll(const Corpus& corpus);

// Maps every entity class onto the single class `merged`.
Corpus merge_entity_classes(const Corpus& corpus, const std::string& merged = "Entity");

// Entity classes observed in a CoNLL file, in order of first appearance.
std::vector<std::string> scan_conll_classes(std::istream& in);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> calibration;
  std::vector<std::size_t> test;
};

// Seeded shuffle, then floor(n * f) items per part in order train,
// calibration, test.
SplitIndices split_indices(std::size_t n, const std::array<double, 3>& fractions, std::uint64_t seed);

struct CorpusSplit {
  Corpus train;
  Corpus calibration;
  Corpus test;
};
CorpusSplit split_dataset(const Corpus& corpus, const std::array<double, 3>& fractions, std::uint64_t seed);

}  // namespace nercp

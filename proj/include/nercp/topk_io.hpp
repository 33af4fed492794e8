#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nercp/corpus.hpp"
#include "nercp/decoding.hpp"

namespace nercp {

// JSON lines, one sentence each:
//   {"tokens": [...], "language": "en", "k": 100,
//    "candidates": [{"labels": ["B-PER", ...], "score": -1.5}, ...],
//    "gold": ["B-PER", ...]}            ("gold" optional)
struct IngestedSentence {
  Sentence sentence;
  TopKDecoding decoding;
  std::size_t line = 0;
};

struct Rejection {
  std::size_t line = 0;
  std::string reason;
};

struct IngestResult {
  std::vector<IngestedSentence> sentences;
  std::vector<Rejection> rejected;
  std::size_t reordered = 0;
};

// Invalid records are skipped and listed in `rejected`; candidates out of
// score order are re-sorted with a warning.
IngestResult ingest_topk(std::istream& in, const LabelScheme& scheme);

std::string topk_record(const LabelScheme& scheme, const Sentence& sentence, const TopKDecoding& decoding, int k);

}  // namespace nercp

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nercp/crf.hpp"

namespace nercp {

struct ScoredSequence {
  LabelSequence labels;
  double raw_score = 0.0;
  double prob = 0.0;  // top-K normalized
  int rank = 0;       // 1-based
};

// Ranked candidates for one sentence. Ranks are 1..size(), raw scores are
// nonincreasing and probabilities sum to one over the list.
class TopKDecoding {
 public:
  TopKDecoding() = default;
  explicit TopKDecoding(std::vector<ScoredSequence> ranked);

  std::size_t size() const { return seqs_.size(); }
  bool empty() const { return seqs_.empty(); }
  int length() const { return seqs_.empty() ? 0 : static_cast<int>(seqs_.front().labels.size()); }
  const ScoredSequence& at_rank(int rank) const { return seqs_.at(static_cast<std::size_t>(rank - 1)); }
  const std::vector<ScoredSequence>& sequences() const { return seqs_; }
  auto begin() const { return seqs_.begin(); }
  auto end() const { return seqs_.end(); }

  std::optional<int> find_rank(const LabelSequence& labels) const;

  // Identity of the decoding (labels and raw scores), used to reject set
  // operations that mix sets from different decodings.
  std::uint64_t fingerprint() const { return fingerprint_; }

 private:
  std::vector<ScoredSequence> seqs_;
  std::uint64_t fingerprint_ = 0;
};

// Exact K best admissible paths: nonincreasing raw score, equal scores ordered
// by lexicographic label-id order. Returns every path when fewer than K exist.
TopKDecoding beam_search_topk(const CrfParams& params, const EmbeddedSentence& x, int k);
TopKDecoding beam_search_topk(const CrfParams& params, const Matrix& emissions, int k);

// Sorts by (raw desc, labels asc), assigns ranks and prob = exp(raw - lse).
TopKDecoding topk_normalize(std::vector<ScoredSequence> candidates);

// Strict weak order used for ranking: higher raw first, then smaller labels.
bool ranks_before(const ScoredSequence& a, const ScoredSequence& b);

}  // namespace nercp

#include "nercp/decoding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <queue>

#include "nercp/error.hpp"

namespace nercp {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_mix(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffU;
    h *= kFnvPrime;
  }
}

struct Hyp {
  double score;
  int prev_label;
  int prev_index;
};

class KBest {
 public:
  KBest(const CrfParams& params, const Matrix& em, int k)
      : params_(params), em_(em), k_(k), t_(static_cast<int>(em.rows())), n_(params.num_labels()),
        hyps_(static_cast<std::size_t>(t_ * n_)) {}

  TopKDecoding run() {
    const LabelScheme& scheme = params_.scheme();
    for (int y = 0; y < n_; ++y) {
      if (!scheme.is_emitting(y) || !params_.allowed(scheme.start(), y)) continue;
      double s = 0.0;
      s += params_.transition(scheme.start(), y);
      s += em_(0, y);
      cell(0, y).push_back({s, scheme.start(), 0});
    }
    for (int j = 1; j < t_; ++j) {
      for (int y = 0; y < n_; ++y) {
        if (!scheme.is_emitting(y)) continue;
        cell(j, y) = merge(j - 1, y, em_(j, y));
      }
    }
    // Final merge over STOP: reuse the merge with a zero emission.
    std::vector<Hyp> final_hyps = merge(t_ - 1, scheme.stop(), 0.0);
    if (final_hyps.empty()) throw EmptyPathSpaceError("no admissible label path of length " + std::to_string(t_));
    std::vector<ScoredSequence> out;
    out.reserve(final_hyps.size());
    for (const Hyp& h : final_hyps) out.push_back({path(t_ - 1, h.prev_label, h.prev_index), h.score, 0.0, 0});
    return topk_normalize(std::move(out));
  }

 private:
  std::vector<Hyp>& cell(int j, int y) { return hyps_[static_cast<std::size_t>(j * n_ + y)]; }
  const std::vector<Hyp>& cell(int j, int y) const { return hyps_[static_cast<std::size_t>(j * n_ + y)]; }

  LabelSequence path(int j, int y, int idx) const {
    LabelSequence labels(static_cast<std::size_t>(j + 1));
    for (int pos = j; pos >= 0; --pos) {
      labels[static_cast<std::size_t>(pos)] = y;
      const Hyp& h = cell(pos, y)[static_cast<std::size_t>(idx)];
      y = h.prev_label;
      idx = h.prev_index;
    }
    return labels;
  }

  // True when prefix (j, ya, ia) is lexicographically smaller than (j, yb, ib).
  bool lex_less(int j, int ya, int ia, int yb, int ib) const {
    if (ya == yb && ia == ib) return false;
    return path(j, ya, ia) < path(j, yb, ib);
  }

  std::vector<Hyp> merge(int j, int y, double emission) const {
    struct Cursor {
      double score;
      int label;
      int index;
    };
    // Priority: higher score first, then lexicographically smaller prefix.
    auto worse = [&](const Cursor& a, const Cursor& b) {
      if (a.score != b.score) return a.score < b.score;
      return lex_less(j, b.label, b.index, a.label, a.index);
    };
    std::priority_queue<Cursor, std::vector<Cursor>, decltype(worse)> heap(worse);
    auto extend = [&](int p, int i) {
      double s = cell(j, p)[static_cast<std::size_t>(i)].score;
      s += params_.transition(p, y);
      s += emission;
      return s;
    };
    for (int p = 0; p < n_; ++p) {
      if (cell(j, p).empty() || !params_.allowed(p, y)) continue;
      heap.push({extend(p, 0), p, 0});
    }
    std::vector<Hyp> out;
    while (!heap.empty() && static_cast<int>(out.size()) < k_) {
      const Cursor c = heap.top();
      heap.pop();
      out.push_back({c.score, c.label, c.index});
      const int next = c.index + 1;
      if (next < static_cast<int>(cell(j, c.label).size())) heap.push({extend(c.label, next), c.label, next});
    }
    return out;
  }

  const CrfParams& params_;
  const Matrix& em_;
  int k_;
  int t_;
  int n_;
  std::vector<std::vector<Hyp>> hyps_;
};

}  // namespace

TopKDecoding::TopKDecoding(std::vector<ScoredSequence> ranked) : seqs_(std::move(ranked)) {
  std::uint64_t h = kFnvOffset;
  for (const auto& s : seqs_) {
    fnv_mix(h, s.labels.size());
    for (LabelId l : s.labels) fnv_mix(h, static_cast<std::uint64_t>(l));
    fnv_mix(h, std::bit_cast<std::uint64_t>(s.raw_score));
  }
  fingerprint_ = h;
}

std::optional<int> TopKDecoding::find_rank(const LabelSequence& labels) const {
  for (const auto& s : seqs_) {
    if (s.labels == labels) return s.rank;
  }
  return std::nullopt;
}

bool ranks_before(const ScoredSequence& a, const ScoredSequence& b) {
  if (a.raw_score != b.raw_score) return a.raw_score > b.raw_score;
  return a.labels < b.labels;
}

TopKDecoding topk_normalize(std::vector<ScoredSequence> candidates) {
  if (candidates.empty()) throw InputError("cannot normalize an empty decoding");
  for (const auto& c : candidates) {
    if (!std::isfinite(c.raw_score)) throw InputError("candidate scores must be finite");
  }
  std::stable_sort(candidates.begin(), candidates.end(), ranks_before);
  std::vector<double> raw;
  raw.reserve(candidates.size());
  for (const auto& c : candidates) raw.push_back(c.raw_score);
  const double lse = log_sum_exp(raw);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    candidates[i].prob = std::exp(candidates[i].raw_score - lse);
    candidates[i].rank = static_cast<int>(i + 1);
  }
  return TopKDecoding(std::move(candidates));
}

TopKDecoding beam_search_topk(const CrfParams& params, const Matrix& emissions, int k) {
  if (k < 1) throw InputError("K must be at least 1");
  if (emissions.rows() < 1) throw InputError("empty sentence");
  if (emissions.cols() != params.num_labels()) throw InputError("emission score width does not match the label set");
  return KBest(params, emissions, k).run();
}

TopKDecoding beam_search_topk(const CrfParams& params, const EmbeddedSentence& x, int k) {
  return beam_search_topk(params, emission_scores(params, x), k);
}

}  // namespace nercp

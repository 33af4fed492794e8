#include "nercp/stratum.hpp"

#include <algorithm>

#include "nercp/error.hpp"

namespace nercp {

LengthBins::LengthBins(std::vector<int> edges) : edges_(std::move(edges)) {
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    if (edges_[i] < 1 || (i > 0 && edges_[i] <= edges_[i - 1])) {
      throw InputError("length bin edges must be positive and strictly increasing");
    }
  }
}

int LengthBins::bin_of(int length) const {
  if (length < 1) throw InputError("sentence length must be positive");
  return static_cast<int>(std::lower_bound(edges_.begin(), edges_.end(), length) - edges_.begin());
}

std::string LengthBins::label(int bin) const {
  if (bin < 0 || bin >= count()) throw InputError("length bin out of range");
  const int lo = bin == 0 ? 1 : edges_[static_cast<std::size_t>(bin - 1)] + 1;
  if (bin == count() - 1) return std::to_string(lo - 1 > 0 ? lo - 1 : 1) + "+";
  return std::to_string(lo) + "-" + std::to_string(edges_[static_cast<std::size_t>(bin)]);
}

StratifyMode parse_stratify_mode(const std::string& text) {
  if (text == "none") return StratifyMode::None;
  if (text == "language") return StratifyMode::Language;
  if (text == "length") return StratifyMode::Length;
  if (text == "both") return StratifyMode::Both;
  throw InputError("unknown stratification mode '" + text + "'");
}

std::string to_string(StratifyMode mode) {
  switch (mode) {
    case StratifyMode::None: return "none";
    case StratifyMode::Language: return "language";
    case StratifyMode::Length: return "length";
    case StratifyMode::Both: return "both";
  }
  return "none";
}

StratumKey stratum_of(const std::string& language, int length, StratifyMode mode, const LengthBins& bins) {
  StratumKey key;
  if (mode == StratifyMode::Language || mode == StratifyMode::Both) key.language = language;
  if (mode == StratifyMode::Length || mode == StratifyMode::Both) key.length_bin = bins.bin_of(length);
  return key;
}

std::string describe(const StratumKey& key, const LengthBins& bins) {
  std::string out = "lang=" + key.language + ";len=";
  out += key.length_bin < 0 ? std::string("*") : bins.label(key.length_bin);
  return out;
}

}  // namespace nercp

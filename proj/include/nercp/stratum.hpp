#pragma once

#include <compare>
#include <string>
#include <vector>

namespace nercp {

// Sentence-length bins: [1, e0], [e0 + 1, e1], ..., [e_last + 1, inf).
class LengthBins {
 public:
  LengthBins() : LengthBins(std::vector<int>{10, 20, 30, 40}) {}
  explicit LengthBins(std::vector<int> edges);

  int count() const { return static_cast<int>(edges_.size()) + 1; }
  int bin_of(int length) const;
  std::string label(int bin) const;
  const std::vector<int>& edges() const { return edges_; }

 private:
  std::vector<int> edges_;
};

enum class StratifyMode { None, Language, Length, Both };

StratifyMode parse_stratify_mode(const std::string& text);
std::string to_string(StratifyMode mode);

// Calibration cell. Unused components hold the wildcard values "*" and -1.
struct StratumKey {
  std::string language = "*";
  int length_bin = -1;

  friend auto operator<=>(const StratumKey&, const StratumKey&) = default;
  friend bool operator==(const StratumKey&, const StratumKey&) = default;
};

StratumKey stratum_of(const std::string& language, int length, StratifyMode mode, const LengthBins& bins);
std::string describe(const StratumKey& key, const LengthBins& bins);

}  // namespace nercp

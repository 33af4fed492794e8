#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nercp/conformal.hpp"
#include "nercp/subsequence.hpp"

namespace nercp {

// Fraction of sets containing their gold target; exhaustive sets always
// count as covering.
double empirical_coverage(const std::vector<PredictionSet>& sets, const std::vector<std::optional<int>>& gold_ranks);
double entity_coverage(const std::vector<EntityPredictionSet>& sets, const std::vector<int>& gold_classes);

struct SetSizeSummary {
  double mean = 0.0;
  double exhaustive_fraction = 0.0;
};

// Exhaustive sets count as `exhaustive_size` members (normally K).
SetSizeSummary average_set_size(const std::vector<PredictionSet>& sets, double exhaustive_size);

// Wilson score interval for a binomial proportion.
std::pair<double, double> wilson_interval(std::size_t successes, std::size_t n, double z = 1.959963984540054);

struct ReportCell {
  std::string method;
  std::string score;
  std::string group;  // overall, language, length, class, entity_count
  std::string key;
  double alpha = 0.0;
  std::size_t n = 0;
  std::size_t covered = 0;
  double size_sum = 0.0;
  std::size_t exhaustive = 0;

  double desired() const { return 1.0 - alpha; }
  double coverage() const { return n == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(n); }
  double mean_size() const { return n == 0 ? 0.0 : size_sum / static_cast<double>(n); }
  double exhaustive_fraction() const { return n == 0 ? 0.0 : static_cast<double>(exhaustive) / static_cast<double>(n); }
  bool undercover() const { return coverage() < desired(); }
  void add(bool is_covered, double size, bool is_exhaustive);
};

struct EvalReport {
  std::uint64_t seed = 0;
  std::string config_digest;
  std::vector<ReportCell> cells;

  // Cells with n == 0 are dropped with a warning.
  void add(ReportCell cell);
  std::string csv() const;
  std::string json() const;
  // Long format: one row per (method, score, alpha) overall cell.
  std::string curves_csv() const;
};

std::string format_number(double v);

}  // namespace nercp

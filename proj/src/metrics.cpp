#include "nercp/metrics.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "nercp/error.hpp"
#include "nercp/logging.hpp"

namespace nercp {

double empirical_coverage(const std::vector<PredictionSet>& sets, const std::vector<std::optional<int>>& gold_ranks) {
  if (sets.size() != gold_ranks.size()) throw UsageError("need one gold target per prediction set");
  if (sets.empty()) throw InputError("no prediction sets");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) hit += sets[i].covers(gold_ranks[i]) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(sets.size());
}

double entity_coverage(const std::vector<EntityPredictionSet>& sets, const std::vector<int>& gold_classes) {
  if (sets.size() != gold_classes.size()) throw UsageError("need one gold class per entity set");
  if (sets.empty()) throw InputError("no prediction sets");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) hit += sets[i].contains(gold_classes[i]) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(sets.size());
}

SetSizeSummary average_set_size(const std::vector<PredictionSet>& sets, double exhaustive_size) {
  if (sets.empty()) throw InputError("no prediction sets");
  double total = 0.0;
  std::size_t exhaustive = 0;
  for (const auto& s : sets) {
    if (s.exhaustive) {
      total += exhaustive_size;
      ++exhaustive;
    } else {
      total += static_cast<double>(s.size());
    }
  }
  const auto n = static_cast<double>(sets.size());
  return {total / n, static_cast<double>(exhaustive) / n};
}

std::pair<double, double> wilson_interval(std::size_t successes, std::size_t n, double z) {
  if (n == 0) throw InputError("interval of an empty sample");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
  const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

void ReportCell::add(bool is_covered, double size, bool is_exhaustive) {
  ++n;
  covered += is_covered ? 1 : 0;
  size_sum += size;
  exhaustive += is_exhaustive ? 1 : 0;
}

void EvalReport::add(ReportCell cell) {
  if (cell.n == 0) {
    warn("report cell " + cell.method + "/" + cell.score + "/" + cell.group + "=" + cell.key + " is empty; omitted");
    return;
  }
  cells.push_back(std::move(cell));
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string EvalReport::csv() const {
  std::string out = "method,score,group,key,alpha,desired,coverage,mean_size,exhaustive_fraction,n,ci_low,ci_high,undercover\n";
  for (const auto& c : cells) {
    const auto [lo, hi] = wilson_interval(c.covered, c.n);
    out += c.method + "," + c.score + "," + c.group + "," + c.key + "," + format_number(c.alpha) + "," +
           format_number(c.desired()) + "," + format_number(c.coverage()) + "," + format_number(c.mean_size()) + "," +
           format_number(c.exhaustive_fraction()) + "," + std::to_string(c.n) + "," + format_number(lo) + "," +
           format_number(hi) + "," + (c.undercover() ? "1" : "0") + "\n";
  }
  return out;
}

std::string EvalReport::json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["config_digest"] = config_digest;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    const auto [lo, hi] = wilson_interval(c.covered, c.n);
    nlohmann::ordered_json cell;
    cell["method"] = c.method;
    cell["score"] = c.score;
    cell["group"] = c.group;
    cell["key"] = c.key;
    cell["alpha"] = c.alpha;
    cell["desired"] = c.desired();
    cell["coverage"] = c.coverage();
    cell["mean_size"] = c.mean_size();
    cell["exhaustive_fraction"] = c.exhaustive_fraction();
    cell["n"] = c.n;
    cell["ci"] = {lo, hi};
    cell["undercover"] = c.undercover();
    arr.push_back(std::move(cell));
  }
  j["cells"] = std::move(arr);
  return j.dump(2) + "\n";
}

std::string EvalReport::curves_csv() const {
  std::string out = "method,score,alpha,desired,coverage,mean_size\n";
  for (const auto& c : cells) {
    if (c.group != "overall") continue;
    out += c.method + "," + c.score + "," + format_number(c.alpha) + "," + format_number(c.desired()) + "," +
           format_number(c.coverage()) + "," + format_number(c.mean_size()) + "\n";
  }
  return out;
}

}  // namespace nercp

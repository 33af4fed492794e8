#include "nercp/hybrid.hpp"

#include <sstream>

#include "nercp/error.hpp"

namespace nercp {

ConditionalThresholds conditional_calibrate(const std::vector<PairedRecord>& records, double alpha, double beta) {
  if (records.empty()) throw CalibrationError("no calibration records");
  std::vector<NcValue> index;
  index.reserve(records.size());
  for (const auto& r : records) index.push_back(r.index);
  ConditionalThresholds out;
  out.tau_idx = conformal_quantile(std::move(index), alpha);
  std::vector<NcValue> prob;
  for (const auto& r : records) {
    if (out.tau_idx.exhaustive || (!r.index.is_miss() && r.index.value() <= out.tau_idx.tau)) prob.push_back(r.prob);
  }
  out.survivors = prob.size();
  if (prob.empty()) throw CalibrationError("no calibration record survives the index stage");
  out.tau_prob = conformal_quantile(std::move(prob), beta);
  return out;
}

PredictionSet conditional_set(const TopKDecoding& decoding, const ConditionalThresholds& t, const NcKind& prob_kind) {
  return naive_combine(prediction_set(decoding, NcKind::nc3(), t.tau_idx), prediction_set(decoding, prob_kind, t.tau_prob));
}

GridChoice hybrid_grid_search(const std::vector<GridPoint>& grid, double target,
                              const std::function<GridEvaluation(const GridPoint&)>& evaluate) {
  if (grid.empty()) throw InputError("empty grid");
  GridChoice choice;
  bool found = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const GridEvaluation e = evaluate(grid[i]);
    choice.all.push_back(e);
    if (e.coverage < target) continue;
    if (!found || e.mean_size < choice.evaluation.mean_size) {
      choice.index = i;
      choice.point = grid[i];
      choice.evaluation = e;
      found = true;
    }
  }
  if (!found) {
    std::ostringstream msg;
    msg << "no grid point reaches tuning coverage " << target << "; best coverages:";
    for (std::size_t i = 0; i < grid.size(); ++i) {
      msg << " (" << grid[i].first << ", " << grid[i].second << ") -> " << choice.all[i].coverage;
    }
    throw GridInfeasibleError(msg.str());
  }
  return choice;
}

}  // namespace nercp

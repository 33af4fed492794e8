#pragma once

#include <functional>
#include <vector>

#include "nercp/conformal.hpp"
#include "nercp/error.hpp"

namespace nercp {

// Index score and probability score of one calibration observation.
struct PairedRecord {
  NcValue index;
  NcValue prob;
};

struct ConditionalThresholds {
  Threshold tau_idx;
  Threshold tau_prob;
  std::size_t survivors = 0;
};

// Stage 1 calibrates the index score at level 1 - alpha on every record;
// stage 2 calibrates the probability score at level 1 - beta on the records
// whose index score is within tau_idx.
ConditionalThresholds conditional_calibrate(const std::vector<PairedRecord>& records, double alpha, double beta);

// Intersection of the NC3 set at tau_idx and the prob_kind set at tau_prob.
PredictionSet conditional_set(const TopKDecoding& decoding, const ConditionalThresholds& t, const NcKind& prob_kind);

struct GridPoint {
  double first = 0.0;   // alpha, or lambda for RAPS
  double second = 0.0;  // beta, or tau_idx for RAPS
};

struct GridEvaluation {
  double coverage = 0.0;
  double mean_size = 0.0;
};

struct GridChoice {
  std::size_t index = 0;
  GridPoint point;
  GridEvaluation evaluation;
  std::vector<GridEvaluation> all;
};

class GridInfeasibleError : public CalibrationError {
 public:
  using CalibrationError::CalibrationError;
};

// Smallest mean set size among points whose tuning coverage reaches target;
// ties go to the earlier grid point. Throws GridInfeasibleError when no point
// qualifies.
GridChoice hybrid_grid_search(const std::vector<GridPoint>& grid, double target,
                              const std::function<GridEvaluation(const GridPoint&)>& evaluate);

}  // namespace nercp

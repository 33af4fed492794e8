#pragma once

#include <random>
#include <vector>

#include "nercp/subsequence.hpp"

namespace nercp {

// 1 - (1 - alpha)^(1 / s_hat).
double sidak_alpha(double alpha, double s_hat);

// Entity count of the top candidate, floored at 1.
int estimated_entity_count(const LabelScheme& scheme, const TopKDecoding& decoding);

// Entity sets for every span observed in the decoding. With a generator, one
// ACP draw per (span, class) is taken in span order then class order.
std::vector<EntityPredictionSet> observed_entity_sets(const LabelScheme& scheme, const TopKDecoding& decoding,
                                                      const ClassThresholds& thresholds, std::mt19937_64* rng);

// Candidates whose every entity lies in the entity set of its span.
PredictionSet integrated_set(const LabelScheme& scheme, const TopKDecoding& decoding, const ClassThresholds& thresholds,
                             std::mt19937_64* rng = nullptr);

// Ranks up to the largest first-labeling index admitted by the index-score
// entity sets; empty when nothing is admitted.
PredictionSet integrated_index_set(const LabelScheme& scheme, const TopKDecoding& decoding,
                                   const ClassThresholds& index_thresholds, std::mt19937_64* rng = nullptr);

// Literal intersection; an exhaustive operand acts as the identity.
PredictionSet combine_integrated(const PredictionSet& set_int, const PredictionSet& set_idx);

struct IntegratedResult {
  PredictionSet set;
  int s_hat = 1;
  double alpha_sidak = 0.0;
};

// Integrated set at level alpha, with per-sentence Sidak adjustment when
// `sidak` is set.
IntegratedResult integrated_predict(const LabelScheme& scheme, const TopKDecoding& decoding,
                                    const ClassCalibration& calibration, double alpha, bool sidak,
                                    std::mt19937_64* rng = nullptr);

}  // namespace nercp

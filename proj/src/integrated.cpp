#include "nercp/integrated.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "nercp/error.hpp"
#include "nercp/rng.hpp"

namespace nercp {

double sidak_alpha(double alpha, double s_hat) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InputError("alpha must lie in [0, 1)");
  if (!(s_hat >= 1.0)) throw InputError("entity count estimate must be at least 1");
  return -std::expm1(std::log1p(-alpha) / s_hat);
}

int estimated_entity_count(const LabelScheme& scheme, const TopKDecoding& decoding) {
  if (decoding.empty()) throw InputError("empty decoding");
  return std::max<int>(1, static_cast<int>(extract_entities(scheme, decoding.at_rank(1).labels).size()));
}

std::vector<EntityPredictionSet> observed_entity_sets(const LabelScheme& scheme, const TopKDecoding& decoding,
                                                      const ClassThresholds& thresholds, std::mt19937_64* rng) {
  std::vector<EntityPredictionSet> out;
  for (const auto& [a, b] : observed_spans(scheme, decoding)) {
    std::vector<double> u;
    if (rng) {
      for (int w = 0; w < scheme.num_classes(); ++w) u.push_back(uniform01(*rng));
    }
    out.push_back(entity_prediction_set(scheme, decoding, a, b, thresholds, u));
  }
  return out;
}

PredictionSet integrated_set(const LabelScheme& scheme, const TopKDecoding& decoding, const ClassThresholds& thresholds,
                             std::mt19937_64* rng) {
  std::map<std::pair<int, int>, EntityPredictionSet> sets;
  for (auto& s : observed_entity_sets(scheme, decoding, thresholds, rng)) sets.emplace(std::pair{s.a, s.b}, std::move(s));
  std::vector<int> members;
  for (const auto& cand : decoding) {
    bool ok = true;
    for (const auto& e : extract_entities(scheme, cand.labels)) {
      if (!sets.at({e.a, e.b}).contains(e.cls)) {
        ok = false;
        break;
      }
    }
    if (ok) members.push_back(cand.rank);
  }
  return make_set(decoding, std::move(members));
}

PredictionSet integrated_index_set(const LabelScheme& scheme, const TopKDecoding& decoding,
                                   const ClassThresholds& index_thresholds, std::mt19937_64* rng) {
  if (index_thresholds.score() != EntityScore::Index) throw UsageError("index set needs index-score thresholds");
  for (const auto& [cls, t] : index_thresholds.classes()) {
    if (t.tau.exhaustive) return make_set(decoding, {}, true);
  }
  int max_index = 0;
  for (const auto& [a, b] : observed_spans(scheme, decoding)) {
    std::vector<double> u;
    if (rng) {
      for (int w = 0; w < scheme.num_classes(); ++w) u.push_back(uniform01(*rng));
    }
    const auto scores = span_scores(EntityScore::Index, scheme, decoding, a, b);
    const auto set = entity_prediction_set(scores, a, b, index_thresholds, u);
    for (int cls : set.classes) {
      const NcValue& idx = scores[static_cast<std::size_t>(cls)];
      if (!idx.is_miss()) max_index = std::max(max_index, static_cast<int>(idx.value()));
    }
  }
  std::vector<int> members;
  for (int r = 1; r <= max_index; ++r) members.push_back(r);
  return make_set(decoding, std::move(members));
}

PredictionSet combine_integrated(const PredictionSet& set_int, const PredictionSet& set_idx) {
  return naive_combine(set_int, set_idx);
}

IntegratedResult integrated_predict(const LabelScheme& scheme, const TopKDecoding& decoding,
                                    const ClassCalibration& calibration, double alpha, bool sidak, std::mt19937_64* rng) {
  IntegratedResult out;
  out.s_hat = estimated_entity_count(scheme, decoding);
  out.alpha_sidak = sidak ? sidak_alpha(alpha, out.s_hat) : alpha;
  out.set = integrated_set(scheme, decoding, calibration.thresholds(out.alpha_sidak), rng);
  return out;
}

}  // namespace nercp

#include "nercp/subsequence.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nercp/error.hpp"

namespace nercp {

EntityScore parse_entity_score(const std::string& text) {
  if (text == "nc1") return EntityScore::NC1;
  if (text == "nc2") return EntityScore::NC2;
  if (text == "nc3") return EntityScore::NC3;
  if (text == "index") return EntityScore::Index;
  throw InputError("unknown entity score '" + text + "'");
}

std::string to_string(EntityScore s) {
  switch (s) {
    case EntityScore::NC1: return "nc1";
    case EntityScore::NC2: return "nc2";
    case EntityScore::NC3: return "nc3";
    case EntityScore::Index: return "index";
  }
  return "nc1";
}

std::vector<double> class_probabilities(const LabelScheme& scheme, const TopKDecoding& decoding, int a, int b) {
  std::vector<double> probs(static_cast<std::size_t>(scheme.num_classes()), 0.0);
  for (const auto& s : decoding) {
    if (auto cls = span_class(scheme, s.labels, a, b)) probs[static_cast<std::size_t>(*cls)] += s.prob;
  }
  return probs;
}

double entity_class_probability(const LabelScheme& scheme, const TopKDecoding& decoding, int a, int b, int cls) {
  if (cls < 0 || cls >= scheme.num_classes()) throw InputError("entity class out of range");
  return class_probabilities(scheme, decoding, a, b)[static_cast<std::size_t>(cls)];
}

double entity_nc(EntityScore score, const std::vector<double>& class_probs, int cls) {
  if (cls < 0 || cls >= static_cast<int>(class_probs.size())) throw InputError("entity class out of range");
  const double p = class_probs[static_cast<std::size_t>(cls)];
  switch (score) {
    case EntityScore::NC1: return 1.0 - p;
    case EntityScore::NC2: {
      double s = 0.0;
      for (double q : class_probs) {
        if (q <= p) s += q;
      }
      return std::min(s, 1.0);
    }
    case EntityScore::NC3:
      return static_cast<double>(std::count_if(class_probs.begin(), class_probs.end(), [p](double q) { return q <= p; }));
    case EntityScore::Index: break;
  }
  throw UsageError("the index score is not a function of class probabilities");
}

double entity_nc(EntityScore score, const LabelScheme& scheme, const TopKDecoding& decoding, int a, int b, int cls) {
  return entity_nc(score, class_probabilities(scheme, decoding, a, b), cls);
}

NcValue entity_index_nc(const LabelScheme& scheme, const TopKDecoding& decoding, int a, int b, int cls) {
  for (const auto& s : decoding) {
    if (span_class(scheme, s.labels, a, b) == cls) return NcValue(static_cast<double>(s.rank));
  }
  return NcValue::miss();
}

std::vector<NcValue> span_scores(EntityScore score, const LabelScheme& scheme, const TopKDecoding& decoding, int a, int b) {
  const auto c = static_cast<std::size_t>(scheme.num_classes());
  std::vector<NcValue> out;
  out.reserve(c);
  if (score == EntityScore::Index) {
    std::vector<NcValue> first(c, NcValue::miss());
    for (const auto& s : decoding) {
      auto cls = span_class(scheme, s.labels, a, b);
      if (cls && first[static_cast<std::size_t>(*cls)].is_miss()) first[static_cast<std::size_t>(*cls)] = NcValue(s.rank);
    }
    return first;
  }
  const auto probs = class_probabilities(scheme, decoding, a, b);
  for (std::size_t w = 0; w < c; ++w) out.emplace_back(entity_nc(score, probs, static_cast<int>(w)));
  return out;
}

const ClassThreshold& ClassThresholds::at(int cls) const {
  auto it = classes_.find(cls);
  if (it == classes_.end()) throw UncalibratedError("no calibration records for entity class " + std::to_string(cls));
  return it->second;
}

ClassCalibration::ClassCalibration(const LabelScheme& scheme, EntityScore score, const std::vector<CalibrationRecord>& records)
    : num_classes_(scheme.num_classes()), score_(score) {
  for (const auto& r : records) {
    if (!r.entity_class) throw InputError("entity calibration record without a class");
    auto cls = scheme.find_class(*r.entity_class);
    if (!cls) throw InputError("unknown entity class '" + *r.entity_class + "'");
    values_[*cls].push_back(r.nc);
  }
  for (auto& [cls, v] : values_) {
    std::sort(v.begin(), v.end(), [](const NcValue& x, const NcValue& y) { return x < y; });
    ecdfs_[cls] = std::make_shared<const Ecdf>(v);
  }
}

std::size_t ClassCalibration::count(int cls) const {
  auto it = values_.find(cls);
  return it == values_.end() ? 0 : it->second.size();
}

std::vector<int> ClassCalibration::uncalibrated_classes() const {
  std::vector<int> out;
  for (int w = 0; w < num_classes_; ++w) {
    if (count(w) == 0) out.push_back(w);
  }
  return out;
}

ClassThresholds ClassCalibration::thresholds(double alpha) const {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InputError("alpha must lie in [0, 1)");
  ClassThresholds out(score_, alpha);
  for (const auto& [cls, v] : values_) {
    const std::size_t n = v.size();
    const double pos = std::ceil((1.0 - alpha) * static_cast<double>(n + 1) - 1e-9);
    const auto k = static_cast<std::size_t>(std::max(1.0, pos));
    Threshold tau = Threshold::all();
    if (k <= n && !v[k - 1].is_miss()) tau = Threshold::at(v[k - 1].value());
    out.set(cls, {tau, n, ecdfs_.at(cls)});
  }
  return out;
}

std::vector<CalibrationRecord> entity_calibration_records(EntityScore score, const LabelScheme& scheme,
                                                          const TopKDecoding& decoding, const LabelSequence& gold,
                                                          const StratumKey& stratum) {
  std::vector<CalibrationRecord> out;
  for (const auto& e : extract_entities(scheme, gold)) {
    const auto scores = span_scores(score, scheme, decoding, e.a, e.b);
    out.push_back({scores[static_cast<std::size_t>(e.cls)], stratum, scheme.class_name(e.cls)});
  }
  return out;
}

ClassThresholds class_calibrate(const LabelScheme& scheme, const std::vector<CalibrationRecord>& records, double alpha,
                                EntityScore score) {
  return ClassCalibration(scheme, score, records).thresholds(alpha);
}

bool EntityPredictionSet::contains(int cls) const { return std::binary_search(classes.begin(), classes.end(), cls); }

EntityPredictionSet entity_prediction_set(const std::vector<NcValue>& scores, int a, int b,
                                          const ClassThresholds& thresholds, const std::vector<double>& u) {
  if (!u.empty() && u.size() != scores.size()) throw InputError("need one ACP draw per entity class");
  EntityPredictionSet set{a, b, {}, {}};
  for (std::size_t w = 0; w < scores.size(); ++w) {
    const int cls = static_cast<int>(w);
    const ClassThreshold& t = thresholds.at(cls);
    const NcValue& nc = scores[w];
    if (t.tau.exhaustive) {
      set.classes.push_back(cls);
      continue;
    }
    if (nc.is_miss() || nc.value() > t.tau.tau) continue;
    if (u.empty() || nc.value() < t.tau.tau) {
      set.classes.push_back(cls);
      continue;
    }
    const double lo = t.ecdf->below(t.tau.tau);
    const double den = t.ecdf->at(t.tau.tau) - lo;
    const double v = den > 0.0 ? std::clamp(((1.0 - thresholds.alpha()) - lo) / den, 0.0, 1.0) : 0.0;
    set.draws.push_back({cls, u[w], v});
    if (u[w] <= v) set.classes.push_back(cls);
  }
  return set;
}

EntityPredictionSet entity_prediction_set(const LabelScheme& scheme, const TopKDecoding& decoding, int a, int b,
                                          const ClassThresholds& thresholds, const std::vector<double>& u) {
  return entity_prediction_set(span_scores(thresholds.score(), scheme, decoding, a, b), a, b, thresholds, u);
}

std::vector<std::pair<int, int>> observed_spans(const LabelScheme& scheme, const TopKDecoding& decoding) {
  std::set<std::pair<int, int>> spans;
  for (const auto& s : decoding) {
    for (const auto& e : extract_entities(scheme, s.labels)) spans.insert({e.a, e.b});
  }
  return {spans.begin(), spans.end()};
}

}  // namespace nercp

#pragma once

#include <map>
#include <memory>
#include <random>
#include <vector>

#include "nercp/conformal.hpp"
#include "nercp/spans.hpp"

namespace nercp {

// Entity-level scores. NC1-NC3 are the probability-based scores; Index is the
// first rank labeling the span with the class.
enum class EntityScore { NC1, NC2, NC3, Index };

EntityScore parse_entity_score(const std::string& text);
std::string to_string(EntityScore s);

// Top-K probability that y_{a..a+b} is one entity of each class (size c).
std::vector<double> class_probabilities(const LabelScheme& scheme, const TopKDecoding& decoding, int a, int b);
double entity_class_probability(const LabelScheme& scheme, const TopKDecoding& decoding, int a, int b, int cls);

// NC1: 1 - P(w); NC2: sum of P(w*) over classes with P(w*) <= P(w);
// NC3: number of such classes (w itself included).
double entity_nc(EntityScore score, const std::vector<double>& class_probs, int cls);
double entity_nc(EntityScore score, const LabelScheme& scheme, const TopKDecoding& decoding, int a, int b, int cls);
NcValue entity_index_nc(const LabelScheme& scheme, const TopKDecoding& decoding, int a, int b, int cls);

// Score of every class for one span; misses only arise for Index.
std::vector<NcValue> span_scores(EntityScore score, const LabelScheme& scheme, const TopKDecoding& decoding, int a, int b);

struct ClassThreshold {
  Threshold tau;
  std::size_t n = 0;
  std::shared_ptr<const Ecdf> ecdf;
};

// Per-class thresholds at one level. Classes without calibration records are
// absent and raise UncalibratedError when used.
class ClassThresholds {
 public:
  ClassThresholds(EntityScore score, double alpha) : score_(score), alpha_(alpha) {}

  EntityScore score() const { return score_; }
  double alpha() const { return alpha_; }
  const std::map<int, ClassThreshold>& classes() const { return classes_; }
  void set(int cls, ClassThreshold t) { classes_[cls] = std::move(t); }
  const ClassThreshold& at(int cls) const;

 private:
  EntityScore score_;
  double alpha_;
  std::map<int, ClassThreshold> classes_;
};

// Calibration scores of gold entities grouped by class; thresholds are
// recomputed for any level on demand.
class ClassCalibration {
 public:
  ClassCalibration(const LabelScheme& scheme, EntityScore score, const std::vector<CalibrationRecord>& records);

  EntityScore score() const { return score_; }
  std::size_t count(int cls) const;
  std::vector<int> uncalibrated_classes() const;
  ClassThresholds thresholds(double alpha) const;

 private:
  int num_classes_;
  EntityScore score_;
  std::map<int, std::vector<NcValue>> values_;  // sorted ascending
  std::map<int, std::shared_ptr<const Ecdf>> ecdfs_;
};

// Gold-entity calibration records of one sentence.
std::vector<CalibrationRecord> entity_calibration_records(EntityScore score, const LabelScheme& scheme,
                                                          const TopKDecoding& decoding, const LabelSequence& gold,
                                                          const StratumKey& stratum = {});

ClassThresholds class_calibrate(const LabelScheme& scheme, const std::vector<CalibrationRecord>& records, double alpha,
                                EntityScore score);

struct ClassDraw {
  int cls = 0;
  double u = 0.0;
  double v = 0.0;
};

struct EntityPredictionSet {
  int a = 1;
  int b = 0;
  std::vector<int> classes;  // ascending class ids
  std::vector<ClassDraw> draws;

  bool contains(int cls) const;
};

// Classes w with nc < tau_w, plus w with nc == tau_w when the draw u_w does
// not exceed V = ((1 - alpha) - F(tau-)) / (F(tau) - F(tau-)). Without draws
// (empty u) the rule is nc <= tau_w. u, when given, holds one value per class.
EntityPredictionSet entity_prediction_set(const LabelScheme& scheme, const TopKDecoding& decoding, int a, int b,
                                          const ClassThresholds& thresholds, const std::vector<double>& u = {});
EntityPredictionSet entity_prediction_set(const std::vector<NcValue>& scores, int a, int b,
                                          const ClassThresholds& thresholds, const std::vector<double>& u = {});

// Spans that are an entity in at least one candidate, in (a, b) order.
std::vector<std::pair<int, int>> observed_spans(const LabelScheme& scheme, const TopKDecoding& decoding);

}  // namespace nercp

#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nercp/decoding.hpp"
#include "nercp/stratum.hpp"

namespace nercp {

struct NcKind {
  enum class Base { NC1, NC2, NC3 };

  Base base = Base::NC1;
  // RAPS adds lambda * max(rank - tau_idx, 0) to an NC1 or NC2 base.
  bool raps = false;
  double lambda = 0.0;
  int tau_idx = 1;

  static NcKind nc1() { return {}; }
  static NcKind nc2() { return {Base::NC2}; }
  static NcKind nc3() { return {Base::NC3}; }
  static NcKind make_raps(Base base, double lambda, int tau_idx);

  std::string name() const;
  friend bool operator==(const NcKind&, const NcKind&) = default;
};

// "nc1", "nc2" or "nc3".
NcKind::Base parse_nc_base(const std::string& text);

// Nonconformity value; miss (target outside the decoding) orders above every
// finite value.
class NcValue {
 public:
  NcValue() = default;
  explicit NcValue(double v) : value_(v) {}
  static NcValue miss() { return NcValue(Miss{}); }

  bool is_miss() const { return miss_; }
  double value() const { return value_; }

  friend std::partial_ordering operator<=>(const NcValue& a, const NcValue& b) {
    if (a.miss_ || b.miss_) return a.miss_ == b.miss_ ? std::partial_ordering::equivalent
                                   : a.miss_ ? std::partial_ordering::greater : std::partial_ordering::less;
    return a.value_ <=> b.value_;
  }
  friend bool operator==(const NcValue& a, const NcValue& b) { return (a <=> b) == 0; }

 private:
  struct Miss {};
  explicit NcValue(Miss) : value_(std::numeric_limits<double>::infinity()), miss_(true) {}
  double value_ = 0.0;
  bool miss_ = false;
};

std::string to_string(const NcValue& v);

struct Threshold {
  double tau = 0.0;
  bool exhaustive = false;

  static Threshold at(double t) { return {t, false}; }
  static Threshold all() { return {0.0, true}; }
  bool admits(double nc) const { return exhaustive || nc <= tau; }
  friend bool operator==(const Threshold&, const Threshold&) = default;
};

// Empirical CDF of calibration values (misses count in n but never at or
// below a finite point).
class Ecdf {
 public:
  Ecdf() = default;
  explicit Ecdf(const std::vector<NcValue>& values);

  std::size_t size() const { return n_; }
  double at(double x) const;     // P(V <= x)
  double below(double x) const;  // P(V < x)

 private:
  std::vector<double> finite_;
  std::size_t n_ = 0;
};

struct CalibrationRecord {
  NcValue nc;
  StratumKey stratum;
  std::optional<std::string> entity_class;
};

// ceil((1 - alpha)(n + 1))-th smallest value; exhaustive when that index
// exceeds n or lands on a miss. alpha = 0 is accepted and always exhaustive.
Threshold conformal_quantile(std::vector<NcValue> values, double alpha);
Threshold conformal_quantile(const std::vector<CalibrationRecord>& records, double alpha);

// nc of every rank 1..K, in rank order.
std::vector<double> nc_profile(const NcKind& kind, const TopKDecoding& decoding);
double full_nc(const NcKind& kind, const TopKDecoding& decoding, int rank);
NcValue full_nc(const NcKind& kind, const TopKDecoding& decoding, const LabelSequence& target);

double raps_nc(double base_nc, int rank, double lambda, int tau_idx);

struct AcpDraw {
  double u = 0.0;
  double v = 0.0;
  int boundary_rank = 0;  // 0 when every candidate lies below the threshold
};

struct PredictionSet {
  std::vector<int> members;  // ascending ranks
  bool exhaustive = false;
  std::optional<AcpDraw> acp;
  std::uint64_t decoding_fingerprint = 0;
  int decoding_size = 0;

  bool contains(int rank) const;
  // Exhaustive sets cover everything, including targets outside the top K.
  bool covers(std::optional<int> gold_rank) const { return exhaustive || (gold_rank && contains(*gold_rank)); }
  std::size_t size() const { return members.size(); }
};

PredictionSet make_set(const TopKDecoding& decoding, std::vector<int> members, bool exhaustive = false);

// Ranks whose nc is at or below tau.
PredictionSet prediction_set(const TopKDecoding& decoding, const NcKind& kind, const Threshold& tau);

enum class OvershootKind { ProbGap, CumulativeGap, QuantileGap };

struct OvershootSpec {
  OvershootKind kind = OvershootKind::ProbGap;
  std::shared_ptr<const Ecdf> ecdf;  // required by QuantileGap

  static OvershootSpec prob_gap() { return {OvershootKind::ProbGap, nullptr}; }
  static OvershootSpec cumulative_gap() { return {OvershootKind::CumulativeGap, nullptr}; }
  static OvershootSpec quantile_gap(std::shared_ptr<const Ecdf> e) { return {OvershootKind::QuantileGap, std::move(e)}; }
  bool linear() const { return kind != OvershootKind::QuantileGap; }
};

OvershootKind parse_overshoot(const std::string& text);
std::string to_string(OvershootKind kind);

// Adaptive set: ranks with nc < tau always, plus the boundary rank (first
// rank with nc >= tau) when u <= V. `base` must come from prediction_set on
// the same decoding; an exhaustive base is returned unchanged.
PredictionSet acp_randomize(const PredictionSet& base, const TopKDecoding& decoding, const NcKind& kind,
                            const Threshold& tau, const OvershootSpec& spec, double alpha, double u);

// Calibration value matching acp_randomize: with a linear overshoot the gold
// rank g scores nc(g-1) + u * (nc(g) - nc(g-1)) with nc(0) = 0; QuantileGap
// uses the plain score.
NcValue acp_calibration_score(const NcKind& kind, const OvershootSpec& spec, const TopKDecoding& decoding,
                              std::optional<int> gold_rank, double u);

struct StratumThreshold {
  Threshold tau;
  std::size_t n = 0;
  bool undersized = false;
  std::shared_ptr<const Ecdf> ecdf;
};

class CalibratedThresholds {
 public:
  CalibratedThresholds(NcKind kind, double alpha) : kind_(kind), alpha_(alpha) {}

  const NcKind& kind() const { return kind_; }
  double alpha() const { return alpha_; }
  const std::map<StratumKey, StratumThreshold>& strata() const { return strata_; }
  void set(const StratumKey& key, StratumThreshold t) { strata_[key] = std::move(t); }
  // Throws UncalibratedError for strata absent at calibration time.
  const StratumThreshold& at(const StratumKey& key) const;

 private:
  NcKind kind_;
  double alpha_;
  std::map<StratumKey, StratumThreshold> strata_;
};

// One quantile per stratum. Strata with fewer than min_count records are
// calibrated anyway, flagged and reported through warn().
CalibratedThresholds stratified_calibrate(const std::vector<CalibrationRecord>& records, double alpha, const NcKind& kind,
                                          std::size_t min_count = 100);

// Checks that the thresholds were calibrated for `kind`.
PredictionSet prediction_set(const TopKDecoding& decoding, const NcKind& kind, const CalibratedThresholds& thresholds,
                             const StratumKey& key);

std::string thresholds_to_json(const CalibratedThresholds& thresholds, const LengthBins& bins);

// Intersection of two sets over the same decoding; exhaustive acts as the
// identity.
PredictionSet naive_combine(const PredictionSet& a, const PredictionSet& b);

}  // namespace nercp

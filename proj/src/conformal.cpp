#include "nercp/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "nercp/error.hpp"
#include "nercp/logging.hpp"

namespace nercp {

namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InputError("alpha must lie in [0, 1)");
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

NcKind NcKind::make_raps(Base base, double lambda, int tau_idx) {
  if (base == Base::NC3) throw UsageError("RAPS needs an NC1 or NC2 base score");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("RAPS lambda must be finite and nonnegative");
  if (tau_idx < 1) throw InputError("RAPS tau_idx must be at least 1");
  return {base, true, lambda, tau_idx};
}

std::string NcKind::name() const {
  const std::string b = base == Base::NC1 ? "nc1" : base == Base::NC2 ? "nc2" : "nc3";
  if (!raps) return b;
  return "raps(" + b + "," + format_double(lambda) + "," + std::to_string(tau_idx) + ")";
}

NcKind::Base parse_nc_base(const std::string& text) {
  if (text == "nc1") return NcKind::Base::NC1;
  if (text == "nc2") return NcKind::Base::NC2;
  if (text == "nc3") return NcKind::Base::NC3;
  throw InputError("unknown score kind '" + text + "'");
}

std::string to_string(const NcValue& v) { return v.is_miss() ? "MISS" : format_double(v.value()); }

Ecdf::Ecdf(const std::vector<NcValue>& values) : n_(values.size()) {
  for (const auto& v : values) {
    if (!v.is_miss()) finite_.push_back(v.value());
  }
  std::sort(finite_.begin(), finite_.end());
}

double Ecdf::at(double x) const {
  if (n_ == 0) throw CalibrationError("empirical CDF of an empty sample");
  const auto k = std::upper_bound(finite_.begin(), finite_.end(), x) - finite_.begin();
  return static_cast<double>(k) / static_cast<double>(n_);
}

double Ecdf::below(double x) const {
  if (n_ == 0) throw CalibrationError("empirical CDF of an empty sample");
  const auto k = std::lower_bound(finite_.begin(), finite_.end(), x) - finite_.begin();
  return static_cast<double>(k) / static_cast<double>(n_);
}

Threshold conformal_quantile(std::vector<NcValue> values, double alpha) {
  check_alpha(alpha);
  if (values.empty()) throw CalibrationError("no calibration records");
  const std::size_t n = values.size();
  const double pos = std::ceil((1.0 - alpha) * static_cast<double>(n + 1) - 1e-9);
  const auto k = static_cast<std::size_t>(std::max(1.0, pos));
  if (k > n) return Threshold::all();
  auto kth = values.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(values.begin(), kth, values.end(), [](const NcValue& a, const NcValue& b) { return a < b; });
  if (kth->is_miss()) return Threshold::all();
  return Threshold::at(kth->value());
}

Threshold conformal_quantile(const std::vector<CalibrationRecord>& records, double alpha) {
  std::vector<NcValue> values;
  values.reserve(records.size());
  for (const auto& r : records) values.push_back(r.nc);
  return conformal_quantile(std::move(values), alpha);
}

double raps_nc(double base_nc, int rank, double lambda, int tau_idx) {
  return base_nc + lambda * static_cast<double>(std::max(rank - tau_idx, 0));
}

std::vector<double> nc_profile(const NcKind& kind, const TopKDecoding& decoding) {
  std::vector<double> nc;
  nc.reserve(decoding.size());
  double cumulative = 0.0;
  for (const auto& s : decoding) {
    cumulative += s.prob;
    double v = 0.0;
    switch (kind.base) {
      case NcKind::Base::NC1: v = 1.0 - s.prob; break;
      case NcKind::Base::NC2: v = std::min(cumulative, 1.0); break;
      case NcKind::Base::NC3: v = static_cast<double>(s.rank); break;
    }
    if (kind.raps) v = raps_nc(v, s.rank, kind.lambda, kind.tau_idx);
    nc.push_back(v);
  }
  return nc;
}

double full_nc(const NcKind& kind, const TopKDecoding& decoding, int rank) {
  if (rank < 1 || rank > static_cast<int>(decoding.size())) throw InputError("rank outside the decoding");
  return nc_profile(kind, decoding)[static_cast<std::size_t>(rank - 1)];
}

NcValue full_nc(const NcKind& kind, const TopKDecoding& decoding, const LabelSequence& target) {
  const auto rank = decoding.find_rank(target);
  if (!rank) return NcValue::miss();
  return NcValue(full_nc(kind, decoding, *rank));
}

bool PredictionSet::contains(int rank) const { return std::binary_search(members.begin(), members.end(), rank); }

PredictionSet make_set(const TopKDecoding& decoding, std::vector<int> members, bool exhaustive) {
  PredictionSet set;
  set.decoding_fingerprint = decoding.fingerprint();
  set.decoding_size = static_cast<int>(decoding.size());
  set.exhaustive = exhaustive;
  if (exhaustive) {
    members.resize(decoding.size());
    std::iota(members.begin(), members.end(), 1);
  }
  std::sort(members.begin(), members.end());
  set.members = std::move(members);
  return set;
}

PredictionSet prediction_set(const TopKDecoding& decoding, const NcKind& kind, const Threshold& tau) {
  if (tau.exhaustive) return make_set(decoding, {}, true);
  const auto nc = nc_profile(kind, decoding);
  std::vector<int> members;
  for (std::size_t i = 0; i < nc.size(); ++i) {
    if (nc[i] <= tau.tau) members.push_back(static_cast<int>(i + 1));
  }
  return make_set(decoding, std::move(members));
}

OvershootKind parse_overshoot(const std::string& text) {
  if (text == "prob-gap") return OvershootKind::ProbGap;
  if (text == "cumulative-gap") return OvershootKind::CumulativeGap;
  if (text == "quantile-gap") return OvershootKind::QuantileGap;
  throw InputError("unknown overshoot function '" + text + "'");
}

std::string to_string(OvershootKind kind) {
  switch (kind) {
    case OvershootKind::ProbGap: return "prob-gap";
    case OvershootKind::CumulativeGap: return "cumulative-gap";
    case OvershootKind::QuantileGap: return "quantile-gap";
  }
  return "prob-gap";
}

namespace {

void check_spec(const NcKind& kind, const OvershootSpec& spec) {
  if (spec.linear() && kind.base == NcKind::Base::NC3) {
    throw UsageError(to_string(spec.kind) + " is defined for probability scores only; use quantile-gap with nc3");
  }
  if (!spec.linear() && !spec.ecdf) throw UsageError("quantile-gap needs the calibration ECDF");
}

}  // namespace

PredictionSet acp_randomize(const PredictionSet& base, const TopKDecoding& decoding, const NcKind& kind,
                            const Threshold& tau, const OvershootSpec& spec, double alpha, double u) {
  check_spec(kind, spec);
  check_alpha(alpha);
  if (!(u >= 0.0 && u < 1.0)) throw InputError("ACP draw must lie in [0, 1)");
  if (base.decoding_fingerprint != decoding.fingerprint()) throw UsageError("set and decoding do not match");
  if (base.exhaustive || tau.exhaustive) return base;

  const auto nc = nc_profile(kind, decoding);
  std::vector<int> members;
  int boundary = 0;
  for (std::size_t i = 0; i < nc.size(); ++i) {
    if (nc[i] < tau.tau) {
      members.push_back(static_cast<int>(i + 1));
    } else if (boundary == 0) {
      boundary = static_cast<int>(i + 1);
    }
  }
  AcpDraw draw{u, 0.0, boundary};
  if (boundary > 0) {
    const std::size_t v = static_cast<std::size_t>(boundary - 1);
    double num = 0.0;
    double den = 0.0;
    if (spec.linear()) {
      const double lo = v == 0 ? 0.0 : nc[v - 1];
      num = tau.tau - lo;
      den = nc[v] - lo;
    } else {
      const double lo = v == 0 ? 0.0 : spec.ecdf->at(nc[v - 1]);
      num = (1.0 - alpha) - lo;
      den = spec.ecdf->at(nc[v]) - lo;
    }
    draw.v = den > 0.0 ? std::clamp(num / den, 0.0, 1.0) : 0.0;
    if (u <= draw.v) members.push_back(boundary);
  }
  PredictionSet out = make_set(decoding, std::move(members));
  out.acp = draw;
  return out;
}

NcValue acp_calibration_score(const NcKind& kind, const OvershootSpec& spec, const TopKDecoding& decoding,
                              std::optional<int> gold_rank, double u) {
  check_spec(kind, spec);
  if (!gold_rank) return NcValue::miss();
  const auto nc = nc_profile(kind, decoding);
  const auto g = static_cast<std::size_t>(*gold_rank - 1);
  if (!spec.linear()) return NcValue(nc[g]);
  const double lo = g == 0 ? 0.0 : nc[g - 1];
  return NcValue(lo + u * (nc[g] - lo));
}

const StratumThreshold& CalibratedThresholds::at(const StratumKey& key) const {
  auto it = strata_.find(key);
  if (it == strata_.end()) {
    throw UncalibratedError("no threshold for stratum lang=" + key.language + " bin=" + std::to_string(key.length_bin));
  }
  return it->second;
}

CalibratedThresholds stratified_calibrate(const std::vector<CalibrationRecord>& records, double alpha, const NcKind& kind,
                                          std::size_t min_count) {
  if (records.empty()) throw CalibrationError("no calibration records");
  std::map<StratumKey, std::vector<NcValue>> groups;
  for (const auto& r : records) groups[r.stratum].push_back(r.nc);
  CalibratedThresholds out(kind, alpha);
  for (auto& [key, values] : groups) {
    StratumThreshold t;
    t.n = values.size();
    t.undersized = values.size() < min_count;
    if (t.undersized) {
      warn("stratum lang=" + key.language + " bin=" + std::to_string(key.length_bin) + " has only " +
           std::to_string(values.size()) + " calibration records (minimum " + std::to_string(min_count) + ")");
    }
    t.ecdf = std::make_shared<const Ecdf>(values);
    t.tau = conformal_quantile(std::move(values), alpha);
    out.set(key, std::move(t));
  }
  return out;
}

PredictionSet prediction_set(const TopKDecoding& decoding, const NcKind& kind, const CalibratedThresholds& thresholds,
                             const StratumKey& key) {
  if (!(thresholds.kind() == kind)) {
    throw UsageError("thresholds calibrated for " + thresholds.kind().name() + " used with " + kind.name());
  }
  return prediction_set(decoding, kind, thresholds.at(key).tau);
}

std::string thresholds_to_json(const CalibratedThresholds& thresholds, const LengthBins& bins) {
  nlohmann::ordered_json j;
  j["alpha"] = thresholds.alpha();
  j["kind"] = thresholds.kind().name();
  nlohmann::ordered_json strata = nlohmann::ordered_json::array();
  for (const auto& [key, t] : thresholds.strata()) {
    nlohmann::ordered_json s;
    s["key"] = describe(key, bins);
    if (t.tau.exhaustive) s["tau"] = "exhaustive";
    else s["tau"] = t.tau.tau;
    s["n_records"] = t.n;
    s["undersized"] = t.undersized;
    strata.push_back(std::move(s));
  }
  j["strata"] = std::move(strata);
  return j.dump(2);
}

PredictionSet naive_combine(const PredictionSet& a, const PredictionSet& b) {
  if (a.decoding_fingerprint != b.decoding_fingerprint || a.decoding_size != b.decoding_size) {
    throw UsageError("cannot combine sets from different decodings");
  }
  if (a.exhaustive) return b;
  if (b.exhaustive) return a;
  PredictionSet out;
  out.decoding_fingerprint = a.decoding_fingerprint;
  out.decoding_size = a.decoding_size;
  std::set_intersection(a.members.begin(), a.members.end(), b.members.begin(), b.members.end(),
                        std::back_inserter(out.members));
  return out;
}

}  // namespace nercp

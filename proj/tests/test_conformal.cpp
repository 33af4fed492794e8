#include <doctest.h>

#include <cmath>
#include <random>

#include "nercp/conformal.hpp"
#include "nercp/error.hpp"
#include "nercp/logging.hpp"
#include "nercp/rng.hpp"
#include "oracles.hpp"

using namespace nercp;

namespace {

// Four candidates with probabilities .48/.28/.14/.10.
TopKDecoding four_candidates() {
  LabelScheme s({"PER", "LOC", "ORG", "MISC"});
  auto seq = [&](std::initializer_list<const char*> names) {
    LabelSequence y;
    for (const char* n : names) y.push_back(*s.parse(n));
    return y;
  };
  return oracle::decoding_from({seq({"O", "O", "O", "B-LOC", "I-LOC", "I-LOC"}),
                                seq({"B-PER", "O", "O", "B-LOC", "I-LOC", "I-LOC"}),
                                seq({"O", "O", "O", "O", "O", "O"}),
                                seq({"B-PER", "O", "O", "B-ORG", "B-ORG", "I-ORG"})},
                               {0.48, 0.28, 0.14, 0.10});
}

// Random decoding over single-token stand-in labels 0..k-1 with Dirichlet-like
// probabilities sharpened by `power`.
TopKDecoding random_decoding(std::mt19937_64& rng, int k, double power) {
  std::exponential_distribution<double> e(1.0);
  std::vector<LabelSequence> labels;
  std::vector<double> w;
  for (int i = 0; i < k; ++i) {
    labels.push_back({i});
    w.push_back(std::pow(e(rng), power));
  }
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return oracle::decoding_from(labels, w);
}

// Gold rank drawn from the decoding's probabilities, or a miss with
// probability `miss`.
std::optional<int> draw_gold(std::mt19937_64& rng, const TopKDecoding& d, double miss) {
  if (uniform01(rng) < miss) return std::nullopt;
  double u = uniform01(rng);
  for (const auto& c : d) {
    u -= c.prob;
    if (u < 0.0) return c.rank;
  }
  return static_cast<int>(d.size());
}

std::vector<NcValue> values(std::initializer_list<double> xs) {
  std::vector<NcValue> out;
  for (double x : xs) out.emplace_back(x);
  return out;
}

}  // namespace

TEST_CASE("baseline scores") {
  const auto d = oracle::decoding_from({{0}, {1}, {2}}, {0.5, 0.3, 0.2});
  CHECK(full_nc(NcKind::nc1(), d, 2) == doctest::Approx(0.7));
  CHECK(full_nc(NcKind::nc2(), d, 2) == doctest::Approx(0.8));
  CHECK(full_nc(NcKind::nc3(), d, 2) == 2.0);
  CHECK(full_nc(NcKind::nc1(), d, LabelSequence{5}).is_miss());
  CHECK(full_nc(NcKind::nc3(), d, LabelSequence{2}) == NcValue(3.0));
  const auto ex = four_candidates();
  const auto p = nc_profile(NcKind::nc1(), ex);
  CHECK(p[0] == doctest::Approx(0.52));
  CHECK(p[1] == doctest::Approx(0.72));
}

TEST_CASE("raps penalty") {
  CHECK(raps_nc(0.4, 7, 0.1, 5) == doctest::Approx(0.6));
  CHECK(raps_nc(0.4, 3, 0.1, 5) == 0.4);
  CHECK(raps_nc(0.4, 9, 0.0, 5) == 0.4);
  CHECK_THROWS_AS(NcKind::make_raps(NcKind::Base::NC3, 0.1, 2), UsageError);
  CHECK(NcKind::make_raps(NcKind::Base::NC1, 0.01, 5).name() == "raps(nc1,0.01,5)");
}

TEST_CASE("quantile rule") {
  std::vector<NcValue> v;
  for (int i = 1; i <= 99; ++i) v.emplace_back(static_cast<double>(i));
  CHECK(conformal_quantile(v, 0.05) == Threshold::at(95.0));
  CHECK(conformal_quantile(values({1, 2, 3, 4, 5, 6, 7, 8, 9}), 0.05).exhaustive);
  CHECK(conformal_quantile(values({1, 2, 3, 4, 5, 6, 7, 8, 9}), 0.5) == Threshold::at(5.0));
  CHECK_THROWS_AS(conformal_quantile(std::vector<NcValue>{}, 0.1), CalibrationError);
  // a miss in the quantile position makes the threshold exhaustive
  auto with_miss = values({1, 2, 3});
  with_miss.push_back(NcValue::miss());
  CHECK(conformal_quantile(with_miss, 0.2).exhaustive);
  CHECK(conformal_quantile(with_miss, 0.45) == Threshold::at(3.0));
  CHECK(conformal_quantile(values({1, 2}), 0.0).exhaustive);
}

TEST_CASE("quantile is monotone in alpha") {
  std::mt19937_64 rng(1);
  std::vector<NcValue> v;
  for (int i = 0; i < 300; ++i) v.emplace_back(uniform01(rng));
  Threshold prev = conformal_quantile(v, 0.01);
  for (double a = 0.02; a < 0.9; a += 0.01) {
    const Threshold t = conformal_quantile(v, a);
    CHECK((prev.exhaustive || t.tau <= prev.tau));
    prev = t;
  }
}

TEST_CASE("prediction sets on the four-candidate fixture") {
  const auto d = four_candidates();
  const auto base = prediction_set(d, NcKind::nc1(), Threshold::at(0.6));
  CHECK(base.members == std::vector<int>{1});
  const auto spec = OvershootSpec::prob_gap();
  const auto keep = acp_randomize(base, d, NcKind::nc1(), Threshold::at(0.6), spec, 0.1, 0.3);
  CHECK(keep.members == std::vector<int>{1, 2});
  REQUIRE(keep.acp);
  CHECK(keep.acp->v == doctest::Approx(0.4));
  CHECK(keep.acp->boundary_rank == 2);
  const auto drop = acp_randomize(base, d, NcKind::nc1(), Threshold::at(0.6), spec, 0.1, 0.5);
  CHECK(drop.members == std::vector<int>{1});
  CHECK(prediction_set(d, NcKind::nc1(), Threshold::all()).exhaustive);
  CHECK(prediction_set(d, NcKind::nc1(), Threshold::all()).members.size() == 4);
}

TEST_CASE("overshoot rules") {
  // nc1 = .5, .7 straddling .6: V = 0.5 under both linear forms
  const auto d = oracle::decoding_from({{0}, {1}, {2}}, {0.5, 0.3, 0.2});
  const auto base = prediction_set(d, NcKind::nc1(), Threshold::at(0.6));
  for (auto spec : {OvershootSpec::prob_gap()}) {
    CHECK(acp_randomize(base, d, NcKind::nc1(), Threshold::at(0.6), spec, 0.1, 0.99).members == std::vector<int>{1});
    CHECK(acp_randomize(base, d, NcKind::nc1(), Threshold::at(0.6), spec, 0.1, 0.01).members == std::vector<int>{1, 2});
  }
  // cumulative gap: (sum_{k<v} p - (1 - tau)) / p_v with nc2 .5, .8 and tau = .65
  const auto b2 = prediction_set(d, NcKind::nc2(), Threshold::at(0.65));
  const auto c2 = acp_randomize(b2, d, NcKind::nc2(), Threshold::at(0.65), OvershootSpec::cumulative_gap(), 0.1, 0.2);
  CHECK(c2.acp->v == doctest::Approx(0.5));
  // quantile gap: ECDF .93 at rank 1 and .97 at rank 2 with alpha .05 -> V = .5
  std::vector<NcValue> cal(93, NcValue(1.0));
  cal.insert(cal.end(), 4, NcValue(2.0));
  cal.insert(cal.end(), 3, NcValue(5.0));
  auto ecdf = std::make_shared<const Ecdf>(cal);
  const auto b3 = prediction_set(d, NcKind::nc3(), Threshold::at(1.0));
  const auto q = acp_randomize(b3, d, NcKind::nc3(), Threshold::at(2.0), OvershootSpec::quantile_gap(ecdf), 0.05, 0.49);
  CHECK(q.acp->v == doctest::Approx(0.5));
  CHECK(q.members == std::vector<int>{1, 2});
  CHECK_THROWS_AS(acp_randomize(b3, d, NcKind::nc3(), Threshold::at(2.0), OvershootSpec::prob_gap(), 0.05, 0.2),
                  UsageError);
  CHECK_THROWS_AS(acp_randomize(b3, d, NcKind::nc3(), Threshold::at(2.0), OvershootSpec{OvershootKind::QuantileGap, {}},
                                0.05, 0.2),
                  UsageError);
}

TEST_CASE("nc3 sets have fixed size") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto d = random_decoding(rng, 1 + i, 1.0);
    for (int tau : {1, 3, 10}) {
      CHECK(prediction_set(d, NcKind::nc3(), Threshold::at(tau)).size() ==
            static_cast<std::size_t>(std::min<int>(tau, static_cast<int>(d.size()))));
    }
  }
}

TEST_CASE("sets are nested across alpha") {
  std::mt19937_64 rng(3);
  for (auto kind : {NcKind::nc1(), NcKind::nc2(), NcKind::nc3(), NcKind::make_raps(NcKind::Base::NC1, 0.05, 2)}) {
    std::vector<NcValue> cal;
    for (int i = 0; i < 200; ++i) {
      const auto d = random_decoding(rng, 20, 2.0);
      const auto g = draw_gold(rng, d, 0.02);
      cal.push_back(g ? NcValue(full_nc(kind, d, *g)) : NcValue::miss());
    }
    for (int i = 0; i < 20; ++i) {
      const auto d = random_decoding(rng, 20, 2.0);
      auto wide = prediction_set(d, kind, conformal_quantile(cal, 0.05));
      for (double a : {0.1, 0.2, 0.4}) {
        const auto narrow = prediction_set(d, kind, conformal_quantile(cal, a));
        for (int r : narrow.members) CHECK(wide.contains(r));
        wide = narrow;
      }
    }
  }
}

TEST_CASE("raps with zero penalty matches its base") {
  std::mt19937_64 rng(4);
  const auto raps = NcKind::make_raps(NcKind::Base::NC2, 0.0, 3);
  for (int i = 0; i < 30; ++i) {
    const auto d = random_decoding(rng, 15, 1.5);
    const double tau = uniform01(rng);
    CHECK(prediction_set(d, raps, Threshold::at(tau)).members ==
          prediction_set(d, NcKind::nc2(), Threshold::at(tau)).members);
  }
}

TEST_CASE("linear ACP calibration scores agree with randomized membership") {
  std::mt19937_64 rng(5);
  for (auto kind : {NcKind::nc1(), NcKind::nc2()}) {
    for (int i = 0; i < 200; ++i) {
      const auto d = random_decoding(rng, 10, 1.5);
      const double tau = uniform01(rng);
      const int g = 1 + static_cast<int>(rng() % d.size());
      const double u = uniform01(rng);
      const auto spec = OvershootSpec::prob_gap();
      const auto base = prediction_set(d, kind, Threshold::at(tau));
      const bool in = acp_randomize(base, d, kind, Threshold::at(tau), spec, 0.1, u).contains(g);
      CHECK(in == (acp_calibration_score(kind, spec, d, g, u).value() <= tau));
    }
  }
}

TEST_CASE("split conformal covers exchangeable data") {
  const double alpha = 0.1;
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<NcValue> cal;
    for (int i = 0; i < 500; ++i) {
      const auto d = random_decoding(rng, 20, 2.0);
      const auto g = draw_gold(rng, d, 0.03);
      cal.push_back(g ? NcValue(full_nc(NcKind::nc1(), d, *g)) : NcValue::miss());
    }
    const auto tau = conformal_quantile(cal, alpha);
    int covered = 0;
    for (int i = 0; i < 500; ++i) {
      const auto d = random_decoding(rng, 20, 2.0);
      covered += prediction_set(d, NcKind::nc1(), tau).covers(draw_gold(rng, d, 0.03));
    }
    total += covered / 500.0;
  }
  CHECK(total / 20.0 >= 1.0 - alpha - 0.005);
}

TEST_CASE("stratified calibration") {
  std::vector<std::string> warnings;
  auto prev = set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
  std::vector<CalibrationRecord> recs;
  for (int i = 1; i <= 200; ++i) recs.push_back({NcValue(i / 1000.0), {"a", -1}, {}});
  for (int i = 1; i <= 50; ++i) recs.push_back({NcValue(0.5 + i / 1000.0), {"b", -1}, {}});
  const auto t = stratified_calibrate(recs, 0.1, NcKind::nc1(), 100);
  set_warning_sink(prev);
  CHECK(t.at({"a", -1}).tau == Threshold::at(0.181));
  CHECK(t.at({"b", -1}).tau == Threshold::at(0.546));
  CHECK(t.at({"b", -1}).undersized);
  CHECK_FALSE(t.at({"a", -1}).undersized);
  CHECK(warnings.size() == 1);
  CHECK_THROWS_AS(t.at({"c", -1}), UncalibratedError);
  const auto d = oracle::decoding_from({{0}, {1}}, {0.9, 0.1});
  CHECK_THROWS_AS(prediction_set(d, NcKind::nc2(), t, {"a", -1}), UsageError);
  CHECK(thresholds_to_json(t, LengthBins{}).find("\"n_records\": 50") != std::string::npos);

  // one stratum equals plain calibration
  std::vector<CalibrationRecord> single(recs.begin(), recs.begin() + 200);
  std::vector<NcValue> plain;
  for (const auto& r : single) plain.push_back(r.nc);
  CHECK(stratified_calibrate(single, 0.1, NcKind::nc1()).at({"a", -1}).tau == conformal_quantile(plain, 0.1));
}

TEST_CASE("naive intersection") {
  const auto d = oracle::decoding_from({{0}, {1}, {2}, {3}, {4}}, {0.3, 0.25, 0.2, 0.15, 0.1});
  CHECK(naive_combine(make_set(d, {1, 2, 3}), make_set(d, {1, 2})).members == std::vector<int>{1, 2});
  CHECK(naive_combine(make_set(d, {}, true), make_set(d, {1, 2, 3, 4, 5})).members.size() == 5);
  CHECK_FALSE(naive_combine(make_set(d, {}, true), make_set(d, {1})).exhaustive);
  const auto other = oracle::decoding_from({{0}, {1}}, {0.6, 0.4});
  CHECK_THROWS_AS(naive_combine(make_set(d, {1}), make_set(other, {1})), UsageError);
}

TEST_CASE("ecdf") {
  Ecdf e(values({1, 2, 2, 3}));
  CHECK(e.at(2.0) == 0.75);
  CHECK(e.below(2.0) == 0.25);
  std::vector<NcValue> m = values({1});
  m.push_back(NcValue::miss());
  CHECK(Ecdf(m).at(100.0) == 0.5);
  CHECK(to_string(NcValue::miss()) == "MISS");
}

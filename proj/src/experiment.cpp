#include "nercp/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "nercp/batch.hpp"
#include "nercp/embedding.hpp"
#include "nercp/error.hpp"
#include "nercp/hybrid.hpp"
#include "nercp/integrated.hpp"
#include "nercp/ks_test.hpp"
#include "nercp/logging.hpp"
#include "nercp/rng.hpp"
#include "nercp/topk_io.hpp"

namespace nercp {

using nlohmann::json;

namespace {

const std::set<std::string> kMethods{"full", "subseq", "integrated", "integrated-idx", "naive", "conditional"};
const std::set<std::string> kScores{"nc1", "nc2", "nc3", "raps"};

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InputError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw InputError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t derive(std::uint64_t seed, const std::string& tag) { return splitmix64(seed ^ fnv1a(tag)); }

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  ExperimentConfig c;
  try {
    const json j = json::parse(json_text);
    check_keys(j, {"source", "seed", "n", "synthetic", "corpus", "embeddings", "topk", "classes", "fractions", "train", "k",
                   "alphas", "methods", "scores", "raps", "acp", "overshoot", "entity_acp", "stratify", "length_edges",
                   "min_stratum", "tuning_fraction", "grid_shares", "idx_share"},
               "config");
    read(j, "source", c.source);
    read(j, "seed", c.seed);
    read(j, "n", c.n);
    read(j, "corpus", c.corpus_path);
    read(j, "embeddings", c.embeddings_path);
    read(j, "topk", c.topk_path);
    read(j, "classes", c.classes);
    if (j.contains("fractions")) {
      const auto f = j.at("fractions").get<std::vector<double>>();
      if (f.size() != 3) throw InputError("fractions needs three entries (train, calibration, test)");
      c.fractions = {f[0], f[1], f[2]};
    }
    if (j.contains("synthetic")) {
      const json& s = j.at("synthetic");
      check_keys(s, {"classes", "languages", "shifts", "weights", "length_dist", "entity_rate", "adjacent_rate",
                     "continue_rate", "emission_noise", "embedding_noise", "vocab_per_group"},
                 "synthetic");
      read(s, "classes", c.synthetic.classes);
      if (s.contains("languages")) {
        const auto names = s.at("languages").get<std::vector<std::string>>();
        std::vector<double> shifts(names.size(), 0.0);
        std::vector<double> weights(names.size(), 1.0);
        read(s, "shifts", shifts);
        read(s, "weights", weights);
        if (shifts.size() != names.size() || weights.size() != names.size()) {
          throw InputError("synthetic shifts and weights need one entry per language");
        }
        c.synthetic.languages.clear();
        for (std::size_t i = 0; i < names.size(); ++i) c.synthetic.languages.push_back({names[i], shifts[i], weights[i]});
      }
      if (s.contains("length_dist")) {
        const json& l = s.at("length_dist");
        check_keys(l, {"min", "max"}, "length_dist");
        read(l, "min", c.synthetic.min_length);
        read(l, "max", c.synthetic.max_length);
      }
      read(s, "entity_rate", c.synthetic.entity_rate);
      read(s, "adjacent_rate", c.synthetic.adjacent_rate);
      read(s, "continue_rate", c.synthetic.continue_rate);
      read(s, "emission_noise", c.synthetic.emission_noise);
      read(s, "embedding_noise", c.synthetic.embedding_noise);
      read(s, "vocab_per_group", c.synthetic.vocab_per_group);
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      check_keys(t, {"learning_rate", "steps", "l2", "init_scale"}, "train");
      read(t, "learning_rate", c.train.learning_rate);
      read(t, "steps", c.train.steps);
      read(t, "l2", c.train.l2);
      read(t, "init_scale", c.train.init_scale);
    }
    read(j, "k", c.k);
    read(j, "alphas", c.alphas);
    read(j, "methods", c.methods);
    read(j, "scores", c.scores);
    if (j.contains("raps")) {
      const json& r = j.at("raps");
      check_keys(r, {"lambda", "tau_idx", "grid"}, "raps");
      read(r, "lambda", c.raps_lambda);
      read(r, "tau_idx", c.raps_tau_idx);
      if (r.contains("grid")) {
        for (const auto& p : r.at("grid")) {
          const auto v = p.get<std::vector<double>>();
          if (v.size() != 2) throw InputError("raps grid points are [lambda, tau_idx] pairs");
          c.raps_grid.push_back({v[0], v[1]});
        }
      }
    }
    read(j, "acp", c.acp);
    if (j.contains("overshoot")) c.overshoot = parse_overshoot(j.at("overshoot").get<std::string>());
    read(j, "entity_acp", c.entity_acp);
    if (j.contains("stratify")) c.stratify = parse_stratify_mode(j.at("stratify").get<std::string>());
    read(j, "length_edges", c.length_edges);
    read(j, "min_stratum", c.min_stratum);
    read(j, "tuning_fraction", c.tuning_fraction);
    read(j, "grid_shares", c.grid_shares);
    read(j, "idx_share", c.idx_share);
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed config: ") + e.what());
  }
  if (c.source != "synthetic" && c.source != "conll" && c.source != "topk") throw InputError("unknown source '" + c.source + "'");
  if (c.k < 1) throw InputError("k must be positive");
  if (c.alphas.empty()) throw InputError("no alpha values");
  for (double a : c.alphas) {
    if (!(a > 0.0 && a < 1.0)) throw InputError("alpha values must lie in (0, 1)");
  }
  for (const auto& m : c.methods) {
    if (!kMethods.count(m)) throw InputError("unknown method '" + m + "'");
  }
  for (const auto& s : c.scores) {
    if (!kScores.count(s)) throw InputError("unknown score '" + s + "'");
  }
  if (!(c.tuning_fraction > 0.0 && c.tuning_fraction < 1.0)) throw InputError("tuning_fraction must lie in (0, 1)");
  if (!(c.idx_share > 0.0 && c.idx_share < 1.0)) throw InputError("idx_share must lie in (0, 1)");
  for (double s : c.grid_shares) {
    if (!(s >= 0.0 && s <= 1.0)) throw InputError("grid shares must lie in [0, 1]");
  }
  (void)LengthBins(c.length_edges);
  return c;
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["source"] = c.source;
  j["seed"] = c.seed;
  j["n"] = c.n;
  j["corpus"] = c.corpus_path;
  j["embeddings"] = c.embeddings_path;
  j["topk"] = c.topk_path;
  j["classes"] = c.classes;
  j["fractions"] = c.fractions;
  json s;
  s["classes"] = c.synthetic.classes;
  std::vector<std::string> names;
  std::vector<double> shifts;
  std::vector<double> weights;
  for (const auto& l : c.synthetic.languages) {
    names.push_back(l.name);
    shifts.push_back(l.shift);
    weights.push_back(l.weight);
  }
  s["languages"] = names;
  s["shifts"] = shifts;
  s["weights"] = weights;
  s["length_dist"] = {{"min", c.synthetic.min_length}, {"max", c.synthetic.max_length}};
  s["entity_rate"] = c.synthetic.entity_rate;
  s["adjacent_rate"] = c.synthetic.adjacent_rate;
  s["continue_rate"] = c.synthetic.continue_rate;
  s["emission_noise"] = c.synthetic.emission_noise;
  s["embedding_noise"] = c.synthetic.embedding_noise;
  s["vocab_per_group"] = c.synthetic.vocab_per_group;
  j["synthetic"] = s;
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"steps", c.train.steps},
                {"l2", c.train.l2},
                {"init_scale", c.train.init_scale}};
  j["k"] = c.k;
  j["alphas"] = c.alphas;
  j["methods"] = c.methods;
  j["scores"] = c.scores;
  json grid = json::array();
  for (const auto& p : c.raps_grid) grid.push_back({p[0], p[1]});
  j["raps"] = {{"lambda", c.raps_lambda}, {"tau_idx", c.raps_tau_idx}, {"grid", grid}};
  j["acp"] = c.acp;
  j["overshoot"] = to_string(c.overshoot);
  j["entity_acp"] = c.entity_acp;
  j["stratify"] = to_string(c.stratify);
  j["length_edges"] = c.length_edges;
  j["min_stratum"] = c.min_stratum;
  j["tuning_fraction"] = c.tuning_fraction;
  j["grid_shares"] = c.grid_shares;
  j["idx_share"] = c.idx_share;
  return j.dump(2);
}

std::string config_digest(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config_to_json(config))));
  return buf;
}

namespace {

std::vector<DecodedSentence> decode_part(const CrfParams& params, const Corpus& corpus, const EmbeddingTable& table,
                                         const std::vector<std::size_t>& ids, int k) {
  std::vector<EmbeddedSentence> batch;
  batch.reserve(ids.size());
  for (std::size_t i : ids) batch.push_back(lookup_embed(corpus.sentences[i], table));
  auto decodings = decode_batch(params, batch, k);
  std::vector<DecodedSentence> out;
  out.reserve(ids.size());
  for (std::size_t m = 0; m < ids.size(); ++m) {
    DecodedSentence d{ids[m], corpus.sentences[ids[m]], std::move(decodings[m]), std::nullopt};
    if (d.sentence.gold) d.gold_rank = d.decoding.find_rank(*d.sentence.gold);
    out.push_back(std::move(d));
  }
  return out;
}

bool needs_tuning(const ExperimentConfig& c) {
  const bool hybrid = std::count(c.methods.begin(), c.methods.end(), "naive") > 0 ||
                      std::count(c.methods.begin(), c.methods.end(), "conditional") > 0;
  const bool raps_grid = !c.raps_grid.empty() && std::count(c.scores.begin(), c.scores.end(), "raps") > 0;
  return hybrid || raps_grid;
}

void carve_tuning(const ExperimentConfig& c, PreparedData& data) {
  if (!needs_tuning(c)) return;
  const auto n = static_cast<std::size_t>(static_cast<double>(data.calibration.size()) * c.tuning_fraction);
  if (n < 2 || n >= data.calibration.size()) throw InputError("calibration split too small to hold out a tuning part");
  data.tuning.assign(std::make_move_iterator(data.calibration.begin()),
                     std::make_move_iterator(data.calibration.begin() + static_cast<std::ptrdiff_t>(n)));
  data.calibration.erase(data.calibration.begin(), data.calibration.begin() + static_cast<std::ptrdiff_t>(n));
}

PreparedData prepare_trained(const ExperimentConfig& c, const Corpus& corpus, const EmbeddingTable& table, std::uint64_t seed) {
  const SplitIndices split = split_indices(corpus.size(), c.fractions, derive(seed, "split"));
  std::vector<TrainingExample> examples;
  examples.reserve(split.train.size());
  for (std::size_t i : split.train) {
    const Sentence& s = corpus.sentences[i];
    if (!s.gold) throw InputError("training sentence without gold labels");
    examples.push_back({lookup_embed(s, table), *s.gold});
  }
  const CrfParams params = train_crf(corpus.scheme, examples, c.train, derive(seed, "train"));
  PreparedData data{corpus.scheme, {}, decode_part(params, corpus, table, split.calibration, c.k),
                    decode_part(params, corpus, table, split.test, c.k)};
  carve_tuning(c, data);
  return data;
}

std::vector<std::string> scan_topk_classes(const std::vector<std::string>& paths) {
  std::set<std::string> seen;
  for (const auto& path : paths) {
    std::ifstream scan(path);
    if (!scan) throw InputError("cannot open " + path);
    for (std::string line; std::getline(scan, line);) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const json j = json::parse(line);
        for (const auto& cand : j.at("candidates")) {
          for (const auto& l : cand.at("labels")) {
            const auto name = l.get<std::string>();
            if (name.size() > 2 && name[1] == '-') seen.insert(name.substr(2));
          }
        }
      } catch (const json::exception&) {
        // Rejected with a reason during ingestion.
      }
    }
  }
  return {seen.begin(), seen.end()};
}

std::vector<DecodedSentence> read_decoded(const std::string& path, const LabelScheme& scheme, bool require_gold) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  IngestResult ingested = ingest_topk(in, scheme);
  for (const auto& r : ingested.rejected) warn(path + ":" + std::to_string(r.line) + " rejected: " + r.reason);
  std::vector<DecodedSentence> out;
  for (auto& s : ingested.sentences) {
    if (require_gold && !s.sentence.gold) {
      warn(path + ":" + std::to_string(s.line) + " has no gold labels; skipped");
      continue;
    }
    DecodedSentence d{s.line, std::move(s.sentence), std::move(s.decoding), std::nullopt};
    if (d.sentence.gold) d.gold_rank = d.decoding.find_rank(*d.sentence.gold);
    out.push_back(std::move(d));
  }
  return out;
}

PreparedData prepare_topk(const ExperimentConfig& c, std::uint64_t seed) {
  const std::vector<std::string> classes = c.classes.empty() ? scan_topk_classes({c.topk_path}) : c.classes;
  LabelScheme scheme(classes);
  std::vector<DecodedSentence> all = read_decoded(c.topk_path, scheme, true);
  if (all.size() < 4) throw InputError("too few top-K records with gold labels");
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive(seed, "split"));
  std::shuffle(order.begin(), order.end(), rng);
  const double share = c.fractions[1] / (c.fractions[1] + c.fractions[2]);
  const auto n_cal = static_cast<std::size_t>(static_cast<double>(all.size()) * share);
  PreparedData data{scheme, {}, {}, {}};
  for (std::size_t m = 0; m < order.size(); ++m) {
    (m < n_cal ? data.calibration : data.test).push_back(std::move(all[order[m]]));
  }
  carve_tuning(c, data);
  return data;
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& c, std::uint64_t seed) {
  try {
    if (c.source == "synthetic") {
      const SyntheticData synth = generate_synthetic(c.synthetic, c.n, derive(seed, "corpus"));
      return prepare_trained(c, synth.corpus, synth.table, seed);
    }
    if (c.source == "conll") {
      std::vector<std::string> classes = c.classes;
      if (classes.empty()) {
        std::ifstream scan(c.corpus_path);
        if (!scan) throw InputError("cannot open " + c.corpus_path);
        classes = scan_conll_classes(scan);
      }
      std::ifstream in(c.corpus_path);
      if (!in) throw InputError("cannot open " + c.corpus_path);
      const Corpus corpus = parse_conll(in, LabelScheme(classes));
      std::ifstream emb(c.embeddings_path);
      if (!emb) throw InputError("cannot open " + c.embeddings_path);
      return prepare_trained(c, corpus, read_embeddings(emb), seed);
    }
    return prepare_topk(c, seed);
  } catch (const Error& e) {
    throw Error(std::string("data stage: ") + e.what());
  }
}

PreparedData load_decoded(const std::string& calibration_path, const std::string& test_path,
                          std::vector<std::string> classes, const ExperimentConfig& config) {
  try {
    if (classes.empty()) classes = scan_topk_classes({calibration_path, test_path});
    LabelScheme scheme(classes);
    PreparedData data{scheme, {}, read_decoded(calibration_path, scheme, true), read_decoded(test_path, scheme, false)};
    carve_tuning(config, data);
    return data;
  } catch (const Error& e) {
    throw Error(std::string("data stage: ") + e.what());
  }
}

}  // namespace nercp

namespace nercp {

namespace {

std::string count_key(std::size_t n) { return n >= 5 ? "5+" : std::to_string(n); }

std::string alpha_tag(double a) { return format_number(a); }

// Accumulates report cells of one (method, score, alpha) run.
class CellSet {
 public:
  CellSet(std::string method, std::string score, double alpha)
      : method_(std::move(method)), score_(std::move(score)), alpha_(alpha) {}

  void add(const std::string& group, const std::string& key, bool covered, double size, bool exhaustive) {
    auto [it, inserted] = cells_.try_emplace({group_order(group), group, key});
    if (inserted) it->second = ReportCell{method_, score_, group, key, alpha_};
    it->second.add(covered, size, exhaustive);
  }

  void flush(EvalReport& report) {
    for (auto& [k, cell] : cells_) report.add(std::move(cell));
    cells_.clear();
  }

 private:
  static int group_order(const std::string& g) {
    static const std::vector<std::string> order{"overall", "language", "length", "entity_count", "class", "false_positive"};
    return static_cast<int>(std::find(order.begin(), order.end(), g) - order.begin());
  }

  std::string method_;
  std::string score_;
  double alpha_;
  std::map<std::tuple<int, std::string, std::string>, ReportCell> cells_;
};

class Runner {
 public:
  Runner(const ExperimentConfig& c, const PreparedData& d, std::uint64_t seed)
      : c_(c), d_(d), scheme_(d.scheme), seed_(seed), bins_(c.length_edges) {}

  ExperimentOutput run() {
    out_.report.seed = seed_;
    out_.report.config_digest = config_digest(c_);
    out_.calibration_csv = "method,score,alpha,language,length_bin,class,nc\n";
    out_.entity_csv = "method,score,alpha,sentence,a,b,gold_class,predicted,nc_values\n";
    json thresholds = json::array();
    thresholds_ = &thresholds;
    for (double alpha : c_.alphas) {
      for (const auto& method : c_.methods) {
        for (const auto& score : c_.scores) {
          try {
            dispatch(method, score, alpha);
          } catch (const Error& e) {
            throw Error("method " + method + "/" + score + " at alpha " + alpha_tag(alpha) + ": " + e.what());
          }
        }
      }
    }
    out_.thresholds_json = thresholds.dump(2) + "\n";
    ks_diagnostics();
    return std::move(out_);
  }

 private:
  void dispatch(const std::string& method, const std::string& score, double alpha) {
    if (method == "full") return run_full(score, alpha);
    if (method == "naive" || method == "conditional") return run_hybrid(method, score, alpha);
    if (score == "raps") {
      warn(method + " has no RAPS variant; skipped");
      return;
    }
    if (method == "subseq") return run_subseq(parse_entity_score(score), alpha);
    if (method == "integrated") return run_integrated(parse_entity_score(score), alpha);
    if (method == "integrated-idx") return run_index(parse_entity_score(score), alpha);
  }

  std::mt19937_64 stream(const std::string& tag, std::size_t id) const { return substream(seed_, fnv(tag), id); }
  static std::uint64_t fnv(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
    return h;
  }

  StratumKey key_of(const Sentence& s) const { return stratum_of(s.language, s.length(), c_.stratify, bins_); }

  std::size_t gold_count(const DecodedSentence& d) const {
    return d.sentence.gold ? extract_entities(scheme_, *d.sentence.gold).size() : 0;
  }

  void dump_set(const std::string& method, const std::string& score, double alpha, const DecodedSentence& d,
                const PredictionSet& set, const IntegratedResult* integrated = nullptr) {
    json line;
    line["sentence"] = d.id;
    line["method"] = method;
    line["score"] = score;
    line["alpha"] = alpha;
    if (integrated) {
      line["s_hat"] = integrated->s_hat;
      line["alpha_sidak"] = integrated->alpha_sidak;
    }
    line["members"] = set.members;
    line["exhaustive"] = set.exhaustive;
    if (set.acp) line["acp"] = {{"u", set.acp->u}, {"v", set.acp->v}, {"boundary_rank", set.acp->boundary_rank}};
    if (d.sentence.gold) line["covered"] = set.covers(d.gold_rank);
    else line["covered"] = nullptr;
    out_.sets_jsonl += line.dump() + "\n";
  }

  void add_sentence_cells(CellSet& cells, const DecodedSentence& d, bool covered, const PredictionSet& set) {
    if (!d.sentence.gold) return;
    const double size = set.exhaustive ? static_cast<double>(c_.k) : static_cast<double>(set.size());
    cells.add("overall", "all", covered, size, set.exhaustive);
    cells.add("language", d.sentence.language.empty() ? "-" : d.sentence.language, covered, size, set.exhaustive);
    cells.add("length", bins_.label(bins_.bin_of(d.sentence.length())), covered, size, set.exhaustive);
    cells.add("entity_count", count_key(gold_count(d)), covered, size, set.exhaustive);
  }

  // Pairwise KS comparisons of gold nc values between languages and between
  // length bins, on samples of at most kKsSample calibration sentences.
  void ks_diagnostics() {
    static constexpr std::size_t kKsSample = 100;
    out_.ks_csv = "score,group,a,b,n_a,n_b,statistic,p_value\n";
    for (const auto& score : c_.scores) {
      const NcKind kind = kind_for(score, c_.raps_lambda, c_.raps_tau_idx);
      for (const std::string group : {"language", "length"}) {
        std::map<std::string, std::vector<double>> values;
        for (const auto& d : d_.calibration) {
          const std::string key =
              group == "language" ? d.sentence.language : bins_.label(bins_.bin_of(d.sentence.length()));
          values[key].push_back(d.gold_rank ? full_nc(kind, d.decoding, *d.gold_rank)
                                            : std::numeric_limits<double>::infinity());
        }
        for (auto& [key, v] : values) {
          auto rng = stream("ks/" + score + "/" + group + "/" + key, 0);
          std::shuffle(v.begin(), v.end(), rng);
          if (v.size() > kKsSample) v.resize(kKsSample);
        }
        for (auto a = values.begin(); a != values.end(); ++a) {
          for (auto b = std::next(a); b != values.end(); ++b) {
            const KsResult r = ks_two_sample(a->second, b->second);
            out_.ks_csv += score + "," + group + "," + a->first + "," + b->first + "," +
                           std::to_string(a->second.size()) + "," + std::to_string(b->second.size()) + "," +
                           format_number(r.statistic) + "," + format_number(r.p_value) + "\n";
          }
        }
      }
    }
  }

  NcKind kind_for(const std::string& score, double lambda, int tau_idx) const {
    if (score == "raps") return NcKind::make_raps(NcKind::Base::NC1, lambda, tau_idx);
    return {parse_nc_base(score)};
  }

  // Full-sequence calibration and prediction for one kind; returns the sets.
  struct FullRun {
    CalibratedThresholds thresholds;
    std::vector<PredictionSet> sets;
  };

  FullRun full_sets(const NcKind& kind, double alpha, const std::vector<DecodedSentence>& cal,
                    const std::vector<DecodedSentence>& test, const std::string& tag) const {
    OvershootSpec spec{c_.overshoot, nullptr};
    if (c_.acp && spec.linear() && kind.base == NcKind::Base::NC3 && !kind.raps) spec.kind = OvershootKind::QuantileGap;
    std::vector<CalibrationRecord> records;
    records.reserve(cal.size());
    for (const auto& d : cal) {
      NcValue nc = NcValue::miss();
      if (c_.acp && spec.linear()) {
        auto rng = stream(tag + "/cal", d.id);
        nc = acp_calibration_score(kind, spec, d.decoding, d.gold_rank, uniform01(rng));
      } else if (d.gold_rank) {
        nc = NcValue(full_nc(kind, d.decoding, *d.gold_rank));
      }
      records.push_back({nc, key_of(d.sentence), std::nullopt});
    }
    FullRun run{stratified_calibrate(records, alpha, kind, c_.min_stratum), {}};
    run.sets.reserve(test.size());
    for (const auto& d : test) {
      const StratumThreshold& t = run.thresholds.at(key_of(d.sentence));
      PredictionSet set = prediction_set(d.decoding, kind, t.tau);
      if (c_.acp) {
        OvershootSpec s = spec;
        s.ecdf = t.ecdf;
        auto rng = stream(tag + "/test", d.id);
        set = acp_randomize(set, d.decoding, kind, t.tau, s, alpha, uniform01(rng));
      }
      run.sets.push_back(std::move(set));
    }
    return run;
  }

  GridEvaluation evaluate(const std::vector<PredictionSet>& sets, const std::vector<DecodedSentence>& test) const {
    std::size_t covered = 0;
    double size = 0.0;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      covered += sets[i].covers(test[i].gold_rank) ? 1 : 0;
      size += sets[i].exhaustive ? static_cast<double>(c_.k) : static_cast<double>(sets[i].size());
    }
    const auto n = static_cast<double>(std::max<std::size_t>(sets.size(), 1));
    return {static_cast<double>(covered) / n, size / n};
  }

  std::pair<std::vector<DecodedSentence>, std::vector<DecodedSentence>> tuning_halves() const {
    const auto half = d_.tuning.size() / 2;
    return {{d_.tuning.begin(), d_.tuning.begin() + static_cast<std::ptrdiff_t>(half)},
            {d_.tuning.begin() + static_cast<std::ptrdiff_t>(half), d_.tuning.end()}};
  }

  void record_grid(const std::string& method, const std::string& score, double alpha, const std::vector<GridPoint>& grid,
                   const std::vector<GridEvaluation>& evals, std::optional<std::size_t> chosen) {
    for (std::size_t i = 0; i < grid.size() && i < evals.size(); ++i) {
      out_.grid.push_back({method, score, alpha, grid[i], evals[i], chosen && *chosen == i});
    }
  }

  void run_full(const std::string& score, double alpha) {
    const std::string tag = "full/" + score + "/" + alpha_tag(alpha);
    double lambda = c_.raps_lambda;
    int tau_idx = c_.raps_tau_idx;
    if (score == "raps" && !c_.raps_grid.empty()) {
      const auto [a, b] = tuning_halves();
      std::vector<GridPoint> grid;
      for (const auto& p : c_.raps_grid) grid.push_back({p[0], p[1]});
      std::vector<GridEvaluation> evals;
      try {
        const GridChoice choice = hybrid_grid_search(grid, 1.0 - alpha, [&](const GridPoint& p) {
          const NcKind k = kind_for(score, p.first, static_cast<int>(p.second));
          auto e = evaluate(full_sets(k, alpha, a, b, tag + "/tune").sets, b);
          evals.push_back(e);
          return e;
        });
        lambda = choice.point.first;
        tau_idx = static_cast<int>(choice.point.second);
        record_grid("full", score, alpha, grid, evals, choice.index);
      } catch (const GridInfeasibleError& e) {
        record_grid("full", score, alpha, grid, evals, std::nullopt);
        warn(std::string("RAPS grid: ") + e.what() + "; using the configured lambda and tau_idx");
      }
    }
    const NcKind kind = kind_for(score, lambda, tau_idx);
    FullRun run = full_sets(kind, alpha, d_.calibration, d_.test, tag);
    CellSet cells("full", kind.name(), alpha);
    for (std::size_t i = 0; i < d_.test.size(); ++i) {
      add_sentence_cells(cells, d_.test[i], run.sets[i].covers(d_.test[i].gold_rank), run.sets[i]);
      dump_set("full", kind.name(), alpha, d_.test[i], run.sets[i]);
    }
    cells.flush(out_.report);
    json t = json::parse(thresholds_to_json(run.thresholds, bins_));
    t["method"] = "full";
    thresholds_->push_back(std::move(t));
    for (const auto& d : d_.calibration) {
      const std::string nc = d.gold_rank ? format_number(full_nc(kind, d.decoding, *d.gold_rank)) : "MISS";
      const StratumKey key = key_of(d.sentence);
      out_.calibration_csv += "full," + kind.name() + "," + alpha_tag(alpha) + "," + key.language + "," +
                              std::to_string(key.length_bin) + ",," + nc + "\n";
    }
  }

  void run_hybrid(const std::string& method, const std::string& score, double alpha) {
    if (score != "nc1" && score != "nc2") {
      warn(method + " combines the index score with nc1 or nc2; " + score + " skipped");
      return;
    }
    const NcKind prob{parse_nc_base(score)};
    const bool naive = method == "naive";
    auto records_of = [&](const std::vector<DecodedSentence>& part) {
      std::vector<PairedRecord> r;
      for (const auto& d : part) {
        if (d.gold_rank) r.push_back({NcValue(*d.gold_rank), NcValue(full_nc(prob, d.decoding, *d.gold_rank))});
        else r.push_back({NcValue::miss(), NcValue::miss()});
      }
      return r;
    };
    auto calibrate = [&](const std::vector<PairedRecord>& r, const GridPoint& p) {
      if (!naive) return conditional_calibrate(r, p.first, p.second);
      std::vector<NcValue> idx;
      std::vector<NcValue> pr;
      for (const auto& x : r) {
        idx.push_back(x.index);
        pr.push_back(x.prob);
      }
      return ConditionalThresholds{conformal_quantile(idx, p.first), conformal_quantile(pr, p.second), r.size()};
    };
    auto sets_of = [&](const ConditionalThresholds& t, const std::vector<DecodedSentence>& part) {
      std::vector<PredictionSet> sets;
      for (const auto& d : part) sets.push_back(conditional_set(d.decoding, t, prob));
      return sets;
    };

    std::vector<GridPoint> grid;
    for (double share : c_.grid_shares) {
      const double a = share * alpha;
      const double b = naive ? alpha - a : 1.0 - (1.0 - alpha) / (1.0 - a);
      grid.push_back({a, std::max(0.0, b)});
    }
    const auto [half_a, half_b] = tuning_halves();
    const auto tune_records = records_of(half_a);
    std::vector<GridEvaluation> evals;
    GridPoint chosen;
    try {
      const GridChoice choice = hybrid_grid_search(grid, 1.0 - alpha, [&](const GridPoint& p) {
        GridEvaluation e{0.0, 0.0};
        try {
          e = evaluate(sets_of(calibrate(tune_records, p), half_b), half_b);
        } catch (const CalibrationError&) {
          // Infeasible point: stays at zero coverage.
        }
        evals.push_back(e);
        return e;
      });
      chosen = choice.point;
      record_grid(method, score, alpha, grid, evals, choice.index);
    } catch (const GridInfeasibleError& e) {
      record_grid(method, score, alpha, grid, evals, std::nullopt);
      warn(method + "/" + score + " at alpha " + alpha_tag(alpha) + ": " + e.what() + "; skipped");
      return;
    }
    const ConditionalThresholds t = calibrate(records_of(d_.calibration), chosen);
    const auto sets = sets_of(t, d_.test);
    CellSet cells(method, score, alpha);
    for (std::size_t i = 0; i < d_.test.size(); ++i) {
      add_sentence_cells(cells, d_.test[i], sets[i].covers(d_.test[i].gold_rank), sets[i]);
      dump_set(method, score, alpha, d_.test[i], sets[i]);
    }
    cells.flush(out_.report);
  }

  std::vector<CalibrationRecord> entity_records(EntityScore score) const {
    std::vector<CalibrationRecord> records;
    for (const auto& d : d_.calibration) {
      if (!d.sentence.gold) continue;
      auto r = entity_calibration_records(score, scheme_, d.decoding, *d.sentence.gold, key_of(d.sentence));
      records.insert(records.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    }
    return records;
  }

  std::vector<double> class_draws(const std::string& tag, std::size_t id, std::size_t span_index) const {
    std::vector<double> u;
    if (!c_.entity_acp) return u;
    auto rng = stream(tag + "/" + std::to_string(span_index), id);
    for (int w = 0; w < scheme_.num_classes(); ++w) u.push_back(uniform01(rng));
    return u;
  }

  std::string class_list(const std::vector<int>& classes) const {
    std::string out;
    for (int w : classes) out += (out.empty() ? "" : "|") + scheme_.class_name(w);
    return out;
  }

  void run_subseq(EntityScore score, double alpha) {
    const std::string tag = "subseq/" + to_string(score) + "/" + alpha_tag(alpha);
    const auto records = entity_records(score);
    for (const auto& r : records) {
      out_.calibration_csv += "subseq," + to_string(score) + "," + alpha_tag(alpha) + "," + r.stratum.language + "," +
                              std::to_string(r.stratum.length_bin) + "," + *r.entity_class + "," + to_string(r.nc) + "\n";
    }
    const ClassCalibration calib(scheme_, score, records);
    for (int w : calib.uncalibrated_classes()) warn("entity class " + scheme_.class_name(w) + " has no calibration records");
    const ClassThresholds th = calib.thresholds(alpha);
    json t;
    t["method"] = "subseq";
    t["alpha"] = alpha;
    t["kind"] = to_string(score);
    for (const auto& [w, ct] : th.classes()) {
      json cj;
      if (ct.tau.exhaustive) cj["tau"] = "exhaustive";
      else cj["tau"] = ct.tau.tau;
      cj["n_records"] = ct.n;
      t["classes"][scheme_.class_name(w)] = cj;
    }
    thresholds_->push_back(std::move(t));

    CellSet cells("subseq", to_string(score), alpha);
    const double c = static_cast<double>(scheme_.num_classes());
    for (const auto& d : d_.test) {
      if (!d.sentence.gold) continue;
      const auto gold = extract_entities(scheme_, *d.sentence.gold);
      std::set<std::pair<int, int>> gold_spans;
      std::size_t span_index = 0;
      for (const auto& e : gold) {
        gold_spans.insert({e.a, e.b});
        const auto scores = span_scores(score, scheme_, d.decoding, e.a, e.b);
        const auto set = entity_prediction_set(scores, e.a, e.b, th, class_draws(tag, d.id, span_index++));
        const bool covered = set.contains(e.cls);
        const bool all = set.classes.size() == static_cast<std::size_t>(c);
        cells.add("overall", "all", covered, static_cast<double>(set.classes.size()), all);
        cells.add("class", scheme_.class_name(e.cls), covered, static_cast<double>(set.classes.size()), all);
        std::string ncs;
        for (const auto& v : scores) ncs += (ncs.empty() ? "" : "|") + to_string(v);
        out_.entity_csv += "subseq," + to_string(score) + "," + alpha_tag(alpha) + "," + std::to_string(d.id) + "," +
                           std::to_string(e.a) + "," + std::to_string(e.b) + "," + scheme_.class_name(e.cls) + "," +
                           class_list(set.classes) + "," + ncs + "\n";
      }
      // Entities of the top candidate that are not gold spans: an empty set is
      // the desired outcome.
      for (const auto& e : extract_entities(scheme_, d.decoding.at_rank(1).labels)) {
        if (gold_spans.count({e.a, e.b})) continue;
        const auto set = entity_prediction_set(scheme_, d.decoding, e.a, e.b, th, class_draws(tag, d.id, span_index++));
        cells.add("false_positive", "all", set.classes.empty(), static_cast<double>(set.classes.size()), false);
      }
    }
    cells.flush(out_.report);
  }

  void run_integrated(EntityScore score, double alpha) {
    const ClassCalibration calib(scheme_, score, entity_records(score));
    for (bool sidak : {true, false}) {
      const std::string method = sidak ? "integrated" : "integrated-nosidak";
      const std::string tag = method + "/" + to_string(score) + "/" + alpha_tag(alpha);
      CellSet cells(method, to_string(score), alpha);
      for (const auto& d : d_.test) {
        auto rng = stream(tag, d.id);
        const IntegratedResult r =
            integrated_predict(scheme_, d.decoding, calib, alpha, sidak, c_.entity_acp ? &rng : nullptr);
        add_sentence_cells(cells, d, r.set.covers(d.gold_rank), r.set);
        dump_set(method, to_string(score), alpha, d, r.set, &r);
      }
      cells.flush(out_.report);
    }
  }

  void run_index(EntityScore score, double alpha) {
    const ClassCalibration index_calib(scheme_, EntityScore::Index, entity_records(EntityScore::Index));
    // The index-only set does not depend on the score; emit it once per alpha.
    if (index_done_.insert(alpha_tag(alpha)).second) {
      const ClassThresholds idx_full = index_calib.thresholds(alpha);
      CellSet idx_cells("integrated-idx", "index", alpha);
      const std::string tag = "integrated-idx/index/" + alpha_tag(alpha);
      for (const auto& d : d_.test) {
        auto rng = stream(tag, d.id);
        const PredictionSet idx = integrated_index_set(scheme_, d.decoding, idx_full, c_.entity_acp ? &rng : nullptr);
        add_sentence_cells(idx_cells, d, idx.covers(d.gold_rank), idx);
        dump_set("integrated-idx", "index", alpha, d, idx);
      }
      idx_cells.flush(out_.report);
    }
    const ClassCalibration int_calib(scheme_, score, entity_records(score));
    const ClassThresholds idx_part = index_calib.thresholds(alpha * c_.idx_share);
    const double int_alpha = alpha * (1.0 - c_.idx_share);
    CellSet comb_cells("integrated-idx-int", to_string(score), alpha);
    const std::string tag = "integrated-idx-int/" + to_string(score) + "/" + alpha_tag(alpha);
    for (const auto& d : d_.test) {
      auto rng = stream(tag, d.id);
      std::mt19937_64* r = c_.entity_acp ? &rng : nullptr;
      const PredictionSet part = integrated_index_set(scheme_, d.decoding, idx_part, r);
      const IntegratedResult in = integrated_predict(scheme_, d.decoding, int_calib, int_alpha, true, r);
      const PredictionSet comb = combine_integrated(in.set, part);
      add_sentence_cells(comb_cells, d, comb.covers(d.gold_rank), comb);
      dump_set("integrated-idx-int", to_string(score), alpha, d, comb);
    }
    comb_cells.flush(out_.report);
  }

  const ExperimentConfig& c_;
  const PreparedData& d_;
  const LabelScheme& scheme_;
  std::uint64_t seed_;
  LengthBins bins_;
  ExperimentOutput out_;
  json* thresholds_ = nullptr;
  std::set<std::string> index_done_;
};

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string ExperimentOutput::grid_csv() const {
  std::string out = "method,score,alpha,first,second,coverage,mean_size,chosen\n";
  for (const auto& g : grid) {
    out += g.method + "," + g.score + "," + format_number(g.alpha) + "," + format_number(g.point.first) + "," +
           format_number(g.point.second) + "," + format_number(g.evaluation.coverage) + "," +
           format_number(g.evaluation.mean_size) + "," + (g.chosen ? "1" : "0") + "\n";
  }
  return out;
}

void ExperimentOutput::write(const std::string& dir) const {
  const std::filesystem::path root(dir);
  std::filesystem::create_directories(root);
  write_file(root / "report.csv", report.csv());
  write_file(root / "report.json", report.json());
  write_file(root / "curves.csv", report.curves_csv());
  write_file(root / "thresholds.json", thresholds_json);
  write_file(root / "calibration_records.csv", calibration_csv);
  write_file(root / "entity_sets.csv", entity_csv);
  write_file(root / "sets.jsonl", sets_jsonl);
  write_file(root / "grid.csv", grid_csv());
  write_file(root / "ks.csv", ks_csv);
}

ExperimentOutput run_experiment(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed) {
  if (data.calibration.empty() || data.test.empty()) throw InputError("calibration and test splits must be nonempty");
  return Runner(config, data, seed).run();
}

ExperimentOutput run_experiment(const ExperimentConfig& config, std::uint64_t seed) {
  return run_experiment(config, prepare_data(config, seed), seed);
}

}  // namespace nercp

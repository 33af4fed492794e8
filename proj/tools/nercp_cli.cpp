// Command-line front end: corpus synthesis, training, decoding, calibration,
// prediction and evaluation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nercp/batch.hpp"
#include "nercp/checkpoint.hpp"
#include "nercp/embedding.hpp"
#include "nercp/error.hpp"
#include "nercp/experiment.hpp"
#include "nercp/integrated.hpp"
#include "nercp/topk_io.hpp"

namespace fs = std::filesystem;
using namespace nercp;

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::vector<double> alphas;
  std::string score;
  std::string method;
  std::string stratify;
  std::string out = "out";
  std::string corpus;
  std::string embeddings;
  std::string checkpoint;
  std::string topk;
  std::string calibration;
  int k = 0;
  std::size_t n = 0;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::string resolve(const std::string& path, const std::string& config_path) {
  if (path.empty() || fs::path(path).is_absolute() || config_path.empty()) return path;
  return (fs::path(config_path).parent_path() / path).string();
}

ExperimentConfig load_config(const Options& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : parse_config(slurp(o.config));
  c.corpus_path = resolve(c.corpus_path, o.config);
  c.embeddings_path = resolve(c.embeddings_path, o.config);
  c.topk_path = resolve(c.topk_path, o.config);
  if (!o.alphas.empty()) c.alphas = o.alphas;
  if (!o.score.empty()) c.scores = {o.score};
  if (!o.method.empty()) c.methods = {o.method};
  if (!o.stratify.empty()) c.stratify = parse_stratify_mode(o.stratify);
  if (o.k > 0) c.k = o.k;
  if (o.n > 0) c.n = o.n;
  // Re-validate the overrides.
  return parse_config(config_to_json(c));
}

std::uint64_t seed_of(const Options& o, const ExperimentConfig& c) { return o.seed_given ? o.seed : c.seed; }

Corpus read_corpus(const std::string& path) {
  std::ifstream scan(path);
  if (!scan) throw InputError("cannot open " + path);
  const auto classes = scan_conll_classes(scan);
  std::ifstream in(path);
  return parse_conll(in, LabelScheme(classes));
}

EmbeddingTable read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return read_embeddings(in);
}

void cmd_synth(const Options& o) {
  const ExperimentConfig c = load_config(o);
  const SyntheticData data = generate_synthetic(c.synthetic, c.n, seed_of(o, c));
  spill(fs::path(o.out) / "corpus.conll", serialize_conll(data.corpus));
  std::ostringstream emb;
  write_embeddings(data.table, emb);
  spill(fs::path(o.out) / "embeddings.json", emb.str());
  std::cout << "wrote " << data.corpus.size() << " sentences to " << o.out << "\n";
}

void cmd_train(const Options& o) {
  const ExperimentConfig c = load_config(o);
  const Corpus corpus = read_corpus(o.corpus);
  const EmbeddingTable table = read_table(o.embeddings);
  std::vector<TrainingExample> data;
  for (const auto& s : corpus.sentences) data.push_back({lookup_embed(s, table), *s.gold});
  const CrfParams params = train_crf(corpus.scheme, data, c.train, seed_of(o, c), [](int step, double loss) {
    if (step % 25 == 0) std::cerr << "step " << step << " loss " << loss << "\n";
  });
  std::ostringstream ck;
  write_checkpoint(params, ck);
  spill(fs::path(o.out) / "checkpoint.json", ck.str());
  std::cout << "trained on " << data.size() << " sentences; checkpoint in " << o.out << "\n";
}

void cmd_decode(const Options& o) {
  const ExperimentConfig c = load_config(o);
  std::ifstream ck(o.checkpoint);
  if (!ck) throw InputError("cannot open " + o.checkpoint);
  const CrfParams params = read_checkpoint(ck);
  const EmbeddingTable table = read_table(o.embeddings);
  std::ifstream in(o.corpus);
  if (!in) throw InputError("cannot open " + o.corpus);
  const Corpus corpus = parse_conll(in, params.scheme());
  std::vector<EmbeddedSentence> batch;
  for (const auto& s : corpus.sentences) batch.push_back(lookup_embed(s, table));
  const auto decodings = decode_batch(params, batch, c.k);
  std::string text;
  for (std::size_t i = 0; i < decodings.size(); ++i) {
    text += topk_record(params.scheme(), corpus.sentences[i], decodings[i], c.k) + "\n";
  }
  spill(fs::path(o.out) / "topk.jsonl", text);
  std::cout << "decoded " << decodings.size() << " sentences with K=" << c.k << "\n";
}

void cmd_calibrate(const Options& o) {
  ExperimentConfig c = load_config(o);
  const std::string method = c.methods.front();
  if (method == "naive" || method == "conditional") throw UsageError("hybrid thresholds come from gridsearch");
  c.methods = {method};
  const PreparedData data = load_decoded(o.topk, o.topk, c.classes, c);
  const LengthBins bins(c.length_edges);
  std::string thresholds = "[\n";
  std::string records = "method,score,alpha,language,length_bin,class,nc\n";
  for (double alpha : c.alphas) {
    for (const auto& score : c.scores) {
      if (method == "full") {
        const NcKind kind = score == "raps" ? NcKind::make_raps(NcKind::Base::NC1, c.raps_lambda, c.raps_tau_idx)
                                            : NcKind{parse_nc_base(score)};
        std::vector<CalibrationRecord> recs;
        for (const auto& d : data.calibration) {
          const NcValue nc = d.gold_rank ? NcValue(full_nc(kind, d.decoding, *d.gold_rank)) : NcValue::miss();
          const StratumKey key = stratum_of(d.sentence.language, d.sentence.length(), c.stratify, bins);
          recs.push_back({nc, key, std::nullopt});
          records += "full," + kind.name() + "," + format_number(alpha) + "," + key.language + "," +
                     std::to_string(key.length_bin) + ",," + to_string(nc) + "\n";
        }
        if (thresholds.size() > 2) thresholds += ",\n";
        thresholds += thresholds_to_json(stratified_calibrate(recs, alpha, kind, c.min_stratum), bins);
      } else {
        if (score == "raps") throw UsageError(method + " has no RAPS variant");
        const EntityScore es = method == "integrated-idx" ? EntityScore::Index : parse_entity_score(score);
        std::vector<CalibrationRecord> recs;
        for (const auto& d : data.calibration) {
          const StratumKey key = stratum_of(d.sentence.language, d.sentence.length(), c.stratify, bins);
          for (auto& r : entity_calibration_records(es, data.scheme, d.decoding, *d.sentence.gold, key)) {
            records += method + "," + to_string(es) + "," + format_number(alpha) + "," + key.language + "," +
                       std::to_string(key.length_bin) + "," + *r.entity_class + "," + to_string(r.nc) + "\n";
            recs.push_back(std::move(r));
          }
        }
        const ClassThresholds th = class_calibrate(data.scheme, recs, alpha, es);
        std::ostringstream js;
        js << "{\"method\": \"" << method << "\", \"kind\": \"" << to_string(es) << "\", \"alpha\": " << format_number(alpha)
           << ", \"classes\": {";
        bool first = true;
        for (const auto& [w, t] : th.classes()) {
          js << (first ? "" : ", ") << "\"" << data.scheme.class_name(w) << "\": {\"tau\": "
             << (t.tau.exhaustive ? std::string("\"exhaustive\"") : format_number(t.tau.tau)) << ", \"n_records\": " << t.n
             << "}";
          first = false;
        }
        js << "}}";
        if (thresholds.size() > 2) thresholds += ",\n";
        thresholds += js.str();
      }
    }
  }
  thresholds += "\n]\n";
  spill(fs::path(o.out) / "thresholds.json", thresholds);
  spill(fs::path(o.out) / "calibration_records.csv", records);
  std::cout << "calibrated on " << data.calibration.size() << " sentences; results in " << o.out << "\n";
}

void report_summary(const ExperimentOutput& out, const std::string& dir) {
  out.write(dir);
  std::size_t under = 0;
  for (const auto& c : out.report.cells) under += c.undercover() ? 1 : 0;
  std::cout << out.report.cells.size() << " report cells (" << under << " below target) written to " << dir << "\n";
}

void cmd_predict(const Options& o) {
  const ExperimentConfig c = load_config(o);
  const PreparedData data = load_decoded(o.calibration, o.topk, c.classes, c);
  report_summary(run_experiment(c, data, seed_of(o, c)), o.out);
}

void cmd_evaluate(const Options& o) {
  const ExperimentConfig c = load_config(o);
  report_summary(run_experiment(c, seed_of(o, c)), o.out);
}

void cmd_gridsearch(const Options& o) {
  ExperimentConfig c = load_config(o);
  if (o.method.empty()) c.methods = {"naive", "conditional"};
  const ExperimentOutput out = run_experiment(c, seed_of(o, c));
  report_summary(out, o.out);
  for (const auto& g : out.grid) {
    if (!g.chosen) continue;
    std::cout << g.method << "/" << g.score << " alpha=" << format_number(g.alpha) << ": chose (" << format_number(g.point.first)
              << ", " << format_number(g.point.second) << ") tuning coverage " << format_number(g.evaluation.coverage)
              << " mean size " << format_number(g.evaluation.mean_size) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal prediction sets for CRF sequence labeling"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) {
      o.seed = s;
      o.seed_given = true;
    }, "Run seed (overrides the config)");
    sub->add_option("--out", o.out, "Output directory")->capture_default_str();
  };
  auto conformal = [&](CLI::App* sub) {
    sub->add_option("--alpha", o.alphas, "Miscoverage level (repeatable)");
    sub->add_option("--score", o.score, "Score kind")->check(CLI::IsMember({"nc1", "nc2", "nc3", "raps"}));
    sub->add_option("--method", o.method, "Prediction-set method")
        ->check(CLI::IsMember({"full", "subseq", "integrated", "integrated-idx", "naive", "conditional"}));
    sub->add_option("--stratify", o.stratify, "Calibration strata")
        ->check(CLI::IsMember({"none", "language", "length", "both"}));
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus and embedding table");
  common(synth);
  synth->add_option("--n", o.n, "Number of sentences");

  auto* train = app.add_subcommand("train", "Train a CRF on a CoNLL corpus");
  common(train);
  train->add_option("--corpus", o.corpus, "CoNLL corpus")->required()->check(CLI::ExistingFile);
  train->add_option("--embeddings", o.embeddings, "Embedding table")->required()->check(CLI::ExistingFile);

  auto* decode = app.add_subcommand("decode", "Write top-K decodings as JSON lines");
  common(decode);
  decode->add_option("--checkpoint", o.checkpoint, "CRF checkpoint")->required()->check(CLI::ExistingFile);
  decode->add_option("--embeddings", o.embeddings, "Embedding table")->required()->check(CLI::ExistingFile);
  decode->add_option("--corpus", o.corpus, "CoNLL corpus")->required()->check(CLI::ExistingFile);
  decode->add_option("--k", o.k, "Decoding depth");

  auto* calibrate = app.add_subcommand("calibrate", "Compute thresholds from decoded calibration data");
  common(calibrate);
  conformal(calibrate);
  calibrate->add_option("--topk", o.topk, "Decoded calibration records")->required()->check(CLI::ExistingFile);

  auto* predict = app.add_subcommand("predict", "Calibrate and build prediction sets for decoded test data");
  common(predict);
  conformal(predict);
  predict->add_option("--calibration", o.calibration, "Decoded calibration records")->required()->check(CLI::ExistingFile);
  predict->add_option("--topk", o.topk, "Decoded test records")->required()->check(CLI::ExistingFile);

  auto* evaluate = app.add_subcommand("evaluate", "Run the end-to-end experiment in the config");
  common(evaluate);
  conformal(evaluate);

  auto* grid = app.add_subcommand("gridsearch", "Tune the hybrid methods on a held-out split");
  common(grid);
  conformal(grid);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) cmd_synth(o);
    else if (*train) cmd_train(o);
    else if (*decode) cmd_decode(o);
    else if (*calibrate) cmd_calibrate(o);
    else if (*predict) cmd_predict(o);
    else if (*evaluate) cmd_evaluate(o);
    else if (*grid) cmd_gridsearch(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

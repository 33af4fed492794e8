#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nercp/hybrid.hpp"
#include "nercp/metrics.hpp"
#include "nercp/synthetic.hpp"
#include "nercp/training.hpp"

namespace nercp {

struct ExperimentConfig {
  // Data: "synthetic", "conll" (with embeddings) or "topk" (pre-decoded).
  std::string source = "synthetic";
  std::uint64_t seed = 1;  // used when the caller gives none
  SyntheticSpec synthetic;
  std::size_t n = 3000;
  std::string corpus_path;
  std::string embeddings_path;
  std::string topk_path;
  std::vector<std::string> classes;  // conll/topk label set; scanned from the corpus when empty

  std::array<double, 3> fractions{0.34, 0.33, 0.33};  // train, calibration, test
  TrainConfig train;
  int k = 100;

  std::vector<double> alphas{0.1};
  std::vector<std::string> methods{"full"};
  std::vector<std::string> scores{"nc1"};
  double raps_lambda = 0.01;
  int raps_tau_idx = 5;
  std::vector<std::array<double, 2>> raps_grid;  // (lambda, tau_idx) candidates

  bool acp = false;
  OvershootKind overshoot = OvershootKind::ProbGap;
  bool entity_acp = true;

  StratifyMode stratify = StratifyMode::None;
  std::vector<int> length_edges{10, 20, 30, 40};
  std::size_t min_stratum = 100;

  // Share of the calibration split held out for hybrid grid searches.
  double tuning_fraction = 0.5;
  // Share of alpha given to the index stage at each hybrid grid point.
  std::vector<double> grid_shares{0.0, 0.25, 0.5, 0.75, 1.0};
  // Share of alpha given to the index set in integrated-idx-int.
  double idx_share = 0.5;
};

ExperimentConfig parse_config(const std::string& json_text);
std::string config_to_json(const ExperimentConfig& config);
// FNV-1a of the canonical JSON form.
std::string config_digest(const ExperimentConfig& config);

struct DecodedSentence {
  std::size_t id = 0;
  Sentence sentence;
  TopKDecoding decoding;
  std::optional<int> gold_rank;
};

struct PreparedData {
  LabelScheme scheme;
  std::vector<DecodedSentence> tuning;
  std::vector<DecodedSentence> calibration;
  std::vector<DecodedSentence> test;
};

// Split, train (or ingest) and decode.
PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed);

struct GridRecord {
  std::string method;
  std::string score;
  double alpha = 0.0;
  GridPoint point;
  GridEvaluation evaluation;
  bool chosen = false;
};

struct ExperimentOutput {
  EvalReport report;
  std::string thresholds_json;
  std::string calibration_csv;
  std::string sets_jsonl;  // one line per (method, test sentence)
  std::string entity_csv;
  std::string ks_csv;  // pairwise language and length-bin KS diagnostics
  std::vector<GridRecord> grid;

  std::string grid_csv() const;
  // Writes report.csv, report.json, curves.csv and the dumps into `dir`.
  void write(const std::string& dir) const;
};

ExperimentOutput run_experiment(const ExperimentConfig& config, std::uint64_t seed);
// Pre-decoded calibration and test files (top-K JSON lines). Calibration
// records need gold labels; test records without gold get sets but no
// report cells.
PreparedData load_decoded(const std::string& calibration_path, const std::string& test_path,
                          std::vector<std::string> classes, const ExperimentConfig& config);
ExperimentOutput run_experiment(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed);

}  // namespace nercp

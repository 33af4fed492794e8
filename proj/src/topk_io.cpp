#include "nercp/topk_io.hpp"

#include <cmath>
#include <istream>

#include <json.hpp>

#include "nercp/error.hpp"
#include "nercp/logging.hpp"

namespace nercp {

namespace {

LabelSequence parse_labels(const LabelScheme& scheme, const nlohmann::json& arr) {
  if (!arr.is_array()) throw InputError("labels must be an array");
  LabelSequence out;
  for (const auto& l : arr) {
    const auto id = scheme.parse(l.get<std::string>());
    if (!id || !scheme.is_emitting(*id)) throw InputError("unknown label '" + l.get<std::string>() + "'");
    out.push_back(*id);
  }
  return out;
}

nlohmann::ordered_json label_names(const LabelScheme& scheme, const LabelSequence& labels) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (LabelId l : labels) arr.push_back(scheme.name(l));
  return arr;
}

IngestedSentence parse_record(const LabelScheme& scheme, const std::string& line, bool& reordered) {
  const auto j = nlohmann::json::parse(line);
  IngestedSentence out;
  out.sentence.tokens = j.at("tokens").get<std::vector<std::string>>();
  if (out.sentence.tokens.empty()) throw InputError("empty sentence");
  out.sentence.language = j.value("language", std::string());
  const int k = j.at("k").get<int>();
  if (k < 1) throw InputError("k must be positive");
  const auto& cands = j.at("candidates");
  if (!cands.is_array() || cands.empty()) throw InputError("no candidates");
  if (static_cast<int>(cands.size()) > k) throw InputError("more candidates than the declared k");
  std::vector<ScoredSequence> seqs;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    ScoredSequence s;
    s.labels = parse_labels(scheme, cands[i].at("labels"));
    s.raw_score = cands[i].at("score").get<double>();
    if (!std::isfinite(s.raw_score)) throw InputError("candidate " + std::to_string(i + 1) + " has a non-finite score");
    if (s.labels.size() != out.sentence.tokens.size()) {
      throw InputError("candidate " + std::to_string(i + 1) + " length differs from the token count");
    }
    if (!scheme.is_valid_sequence(s.labels)) {
      throw InputError("candidate " + std::to_string(i + 1) + " violates the IOB2 transition mask");
    }
    seqs.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    for (std::size_t m = i + 1; m < seqs.size(); ++m) {
      if (seqs[i].labels == seqs[m].labels) throw InputError("duplicate candidate labels");
    }
  }
  // Tie order depends on the reader's label ids, so only score order counts.
  reordered = !std::is_sorted(seqs.begin(), seqs.end(),
                              [](const ScoredSequence& a, const ScoredSequence& b) { return a.raw_score > b.raw_score; });
  if (j.contains("gold")) {
    auto gold = parse_labels(scheme, j.at("gold"));
    if (gold.size() != out.sentence.tokens.size() || !scheme.is_valid_sequence(gold)) throw InputError("invalid gold labels");
    out.sentence.gold = std::move(gold);
  }
  out.decoding = topk_normalize(std::move(seqs));
  return out;
}

}  // namespace

IngestResult ingest_topk(std::istream& in, const LabelScheme& scheme) {
  IngestResult result;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      bool reordered = false;
      IngestedSentence s = parse_record(scheme, line, reordered);
      s.line = line_no;
      if (reordered) {
        ++result.reordered;
        warn("top-K record on line " + std::to_string(line_no) + " was not in score order; re-sorted");
      }
      result.sentences.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      result.rejected.push_back({line_no, std::string("malformed record: ") + e.what()});
    } catch (const InputError& e) {
      result.rejected.push_back({line_no, e.what()});
    }
  }
  return result;
}

std::string topk_record(const LabelScheme& scheme, const Sentence& sentence, const TopKDecoding& decoding, int k) {
  nlohmann::ordered_json j;
  j["tokens"] = sentence.tokens;
  j["language"] = sentence.language;
  j["k"] = k;
  nlohmann::ordered_json cands = nlohmann::ordered_json::array();
  for (const auto& s : decoding) {
    nlohmann::ordered_json c;
    c["labels"] = label_names(scheme, s.labels);
    c["score"] = s.raw_score;
    cands.push_back(std::move(c));
  }
  j["candidates"] = std::move(cands);
  if (sentence.gold) j["gold"] = label_names(scheme, *sentence.gold);
  return j.dump();
}

}  // namespace nercp

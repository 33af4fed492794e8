#include "nercp/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <numeric>
#include <random>
#include <sstream>

#include "nercp/error.hpp"

namespace nercp {

namespace {

constexpr const char* kLangPrefix = "# lang = ";

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> cols;
  for (std::string c; ss >> c;) cols.push_back(c);
  return cols;
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

Corpus parse_conll(std::istream& in, const LabelScheme& scheme, const ConllOptions& options) {
  Corpus corpus(scheme);
  std::string language;
  Sentence current;
  LabelSequence labels;
  LabelId prev = scheme.start();

  auto flush = [&] {
    if (current.tokens.empty()) return;
    current.language = language;
    current.gold = labels;
    corpus.sentences.push_back(std::move(current));
    current = Sentence{};
    labels.clear();
    prev = scheme.start();
  };

  std::size_t line_no = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const std::string line = strip_cr(raw);
    if (is_blank(line)) {
      flush();
      continue;
    }
    if (line.rfind(kLangPrefix, 0) == 0) {
      if (!current.tokens.empty()) throw ParseError(line_no, "language line inside a sentence");
      language = line.substr(std::string(kLangPrefix).size());
      if (language.empty() || language.find_first_of(" \t") != std::string::npos) {
        throw ParseError(line_no, "malformed language tag");
      }
      continue;
    }
    const auto cols = split_ws(line);
    if (cols.front() == "-DOCSTART-") {
      flush();
      continue;
    }
    if (cols.size() < 2) throw ParseError(line_no, "expected a token and a label");
    auto label = scheme.parse(cols.back());
    if (!label || !scheme.is_emitting(*label)) throw ParseError(line_no, "unknown label '" + cols.back() + "'");
    if (!scheme.allowed(prev, *label)) {
      if (!options.repair || !scheme.is_inside(*label)) {
        throw ParseError(line_no, "'" + cols.back() + "' does not continue an entity of the same class");
      }
      label = scheme.begin_of(scheme.class_of(*label));
    }
    current.tokens.push_back(cols.front());
    labels.push_back(*label);
    prev = *label;
  }
  flush();
  return corpus;
}

Corpus parse_conll_string(const std::string& text, const LabelScheme& scheme, const ConllOptions& options) {
  std::istringstream in(text);
  return parse_conll(in, scheme, options);
}

std::string serialize_conll(const Corpus& corpus) {
  std::string out;
  std::string language;
  for (const auto& s : corpus.sentences) {
    if (!s.gold) throw InputError("cannot serialize a sentence without gold labels");
    if (s.gold->size() != s.tokens.size()) throw InputError("gold labels and tokens differ in length");
    if (s.language != language) {
      if (s.language.empty()) throw InputError("cannot serialize an untagged sentence after a tagged one");
      out += kLangPrefix + s.language + "\n";
      language = s.language;
    }
    for (std::size_t j = 0; j < s.tokens.size(); ++j) {
      out += s.tokens[j];
      out += ' ';
      out += corpus.scheme.name((*s.gold)[j]);
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

Corpus merge_entity_classes(const Corpus& corpus, const std::string& merged) {
  Corpus out{LabelScheme({merged})};
  out.metadata = corpus.metadata;
  out.metadata["merged_classes"] = merged;
  const LabelScheme& from = corpus.scheme;
  for (const auto& s : corpus.sentences) {
    Sentence m = s;
    if (m.gold) {
      for (LabelId& l : *m.gold) {
        if (from.is_begin(l)) l = out.scheme.begin_of(0);
        else if (from.is_inside(l)) l = out.scheme.inside_of(0);
      }
    }
    out.sentences.push_back(std::move(m));
  }
  return out;
}

std::vector<std::string> scan_conll_classes(std::istream& in) {
  std::vector<std::string> classes;
  for (std::string raw; std::getline(in, raw);) {
    const std::string line = strip_cr(raw);
    if (is_blank(line) || line.rfind(kLangPrefix, 0) == 0) continue;
    const auto cols = split_ws(line);
    if (cols.size() < 2 || cols.front() == "-DOCSTART-") continue;
    const std::string& label = cols.back();
    if (label.size() > 2 && (label[0] == 'B' || label[0] == 'I') && label[1] == '-') {
      const std::string cls = label.substr(2);
      if (std::find(classes.begin(), classes.end(), cls) == classes.end()) classes.push_back(cls);
    }
  }
  return classes;
}

SplitIndices split_indices(std::size_t n, const std::array<double, 3>& fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw InputError("split fractions must be positive");
    total += f;
  }
  if (total > 1.0 + 1e-9) throw InputError("split fractions sum to more than 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::array<std::size_t, 3> sizes{};
  for (int i = 0; i < 3; ++i) {
    sizes[static_cast<std::size_t>(i)] = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fractions[static_cast<std::size_t>(i)] + 1e-9));
    if (sizes[static_cast<std::size_t>(i)] == 0) throw InputError("a split part would be empty");
  }
  SplitIndices out;
  auto it = order.begin();
  out.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
  it += static_cast<std::ptrdiff_t>(sizes[0]);
  out.calibration.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
  it += static_cast<std::ptrdiff_t>(sizes[1]);
  out.test.assign(it, it + static_cast<std::ptrdiff_t>(sizes[2]));
  return out;
}

CorpusSplit split_dataset(const Corpus& corpus, const std::array<double, 3>& fractions, std::uint64_t seed) {
  const SplitIndices idx = split_indices(corpus.size(), fractions, seed);
  auto take = [&](const std::vector<std::size_t>& ids) {
    Corpus part(corpus.scheme);
    part.metadata = corpus.metadata;
    for (std::size_t i : ids) part.sentences.push_back(corpus.sentences[i]);
    return part;
  };
  return {take(idx.train), take(idx.calibration), take(idx.test)};
}

}  // namespace nercp

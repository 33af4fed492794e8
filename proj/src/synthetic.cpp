#include "nercp/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "nercp/error.hpp"
#include "nercp/rng.hpp"

namespace nercp {

namespace {

constexpr std::uint64_t kTableStream = 1;
constexpr std::uint64_t kSentenceStream = 2;

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

double standard_normal(std::mt19937_64& rng) {
  // Box-Muller; keeps the stream layout independent of the standard library.
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::string group_prefix(const SyntheticSpec& spec, int group) {
  if (group == 0) return "o";
  std::string p = spec.classes[static_cast<std::size_t>(group - 1)];
  std::transform(p.begin(), p.end(), p.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return p;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (classes.empty()) throw InputError("synthetic corpus needs at least one entity class");
  if (languages.empty()) throw InputError("synthetic corpus needs at least one language");
  for (const auto& l : languages) {
    if (l.name.empty() || l.name.find_first_of(" \t") != std::string::npos) throw InputError("bad language name");
    if (!(l.weight > 0.0)) throw InputError("language weights must be positive");
    if (!(emission_noise + l.shift >= 0.0 && emission_noise + l.shift < 1.0)) {
      throw InputError("emission noise plus shift must lie in [0, 1)");
    }
  }
  if (min_length < 1 || max_length < min_length) throw InputError("invalid length range");
  if (!(entity_rate >= 0.0 && entity_rate <= 1.0) || !(adjacent_rate >= 0.0 && adjacent_rate <= 1.0) ||
      !(continue_rate >= 0.0 && continue_rate < 1.0)) {
    throw InputError("rates must be probabilities");
  }
  if (!(embedding_noise >= 0.0)) throw InputError("embedding noise must be nonnegative");
  if (vocab_per_group < 1) throw InputError("vocabulary size must be positive");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  LabelScheme scheme(spec.classes);
  const int groups = scheme.num_classes() + 1;
  const int dim = groups + 1;

  EmbeddingTable table(dim);
  table.oov(dim - 1) = 1.0;
  std::vector<std::vector<std::string>> vocab(static_cast<std::size_t>(groups));
  auto trng = substream(seed, kTableStream, 0);
  for (int g = 0; g < groups; ++g) {
    for (int i = 0; i < spec.vocab_per_group; ++i) {
      const std::string token = group_prefix(spec, g) + "_" + std::to_string(i);
      Vector v(dim);
      for (int k = 0; k < dim - 1; ++k) v(k) = (k == g ? 1.0 : 0.0) + spec.embedding_noise * standard_normal(trng);
      v(dim - 1) = 1.0;
      table.add(token, std::move(v));
      vocab[static_cast<std::size_t>(g)].push_back(token);
    }
  }

  double total_weight = 0.0;
  for (const auto& l : spec.languages) total_weight += l.weight;

  Corpus corpus(scheme);
  corpus.metadata["source"] = "synthetic";
  corpus.metadata["seed"] = std::to_string(seed);
  corpus.sentences.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = substream(seed, kSentenceStream, i);
    const LanguageSpec* lang = &spec.languages.back();
    double pick = uniform01(rng) * total_weight;
    for (const auto& l : spec.languages) {
      if (pick < l.weight) {
        lang = &l;
        break;
      }
      pick -= l.weight;
    }
    const double noise = spec.emission_noise + lang->shift;
    const int t = spec.min_length + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(spec.max_length - spec.min_length + 1)));

    Sentence s;
    s.language = lang->name;
    LabelSequence labels;
    LabelId prev = scheme.outside();
    for (int j = 0; j < t; ++j) {
      LabelId cur = scheme.outside();
      const int prev_cls = scheme.class_of(prev);
      if (prev_cls >= 0 && uniform01(rng) < spec.continue_rate) {
        cur = scheme.inside_of(prev_cls);
      } else if (uniform01(rng) < (prev_cls >= 0 ? spec.adjacent_rate : spec.entity_rate)) {
        cur = scheme.begin_of(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(scheme.num_classes()))));
      }
      const int own = cur == scheme.outside() ? 0 : scheme.class_of(cur) + 1;
      int group = own;
      if (uniform01(rng) < noise) {
        group = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(groups - 1)));
        if (group >= own) ++group;
      }
      const auto& words = vocab[static_cast<std::size_t>(group)];
      s.tokens.push_back(words[uniform_index(rng, words.size())]);
      labels.push_back(cur);
      prev = cur;
    }
    s.gold = std::move(labels);
    corpus.sentences.push_back(std::move(s));
  }
  return {std::move(corpus), std::move(table)};
}

}  // namespace nercp

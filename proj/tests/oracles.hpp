#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "nercp/crf.hpp"
#include "nercp/decoding.hpp"
#include "nercp/label_scheme.hpp"

namespace oracle {

using nercp::LabelScheme;
using nercp::LabelSequence;
using nercp::Matrix;

inline Matrix normal_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

// Standard normal emission and allowed-transition weights.
inline nercp::CrfParams random_params(const LabelScheme& scheme, int dim, std::mt19937_64& rng, double scale = 1.0) {
  nercp::CrfParams p(scheme, dim);
  p.emission() = normal_matrix(scheme.size(), dim, rng, scale);
  std::normal_distribution<double> n(0.0, scale);
  for (int i = 0; i < scheme.size(); ++i)
    for (int j = 0; j < scheme.size(); ++j)
      if (p.allowed(i, j)) p.set_transition(i, j, n(rng));
  return p;
}

inline nercp::EmbeddedSentence random_sentence(int length, int dim, std::mt19937_64& rng) {
  return {normal_matrix(length, dim, rng)};
}

// Every emitting sequence of the given length that passes the mask, in
// lexicographic order.
inline std::vector<LabelSequence> all_paths(const LabelScheme& scheme, int length) {
  std::vector<LabelSequence> out;
  LabelSequence y(static_cast<std::size_t>(length), 0);
  const int m = scheme.num_emitting();
  while (true) {
    if (scheme.is_valid_sequence(y)) out.push_back(y);
    int j = length - 1;
    while (j >= 0 && y[static_cast<std::size_t>(j)] == m - 1) y[static_cast<std::size_t>(j--)] = 0;
    if (j < 0) break;
    ++y[static_cast<std::size_t>(j)];
  }
  return out;
}

// Path value summed term by term straight from the weights.
inline double path_score(const nercp::CrfParams& p, const Matrix& em, const LabelSequence& y) {
  const auto& s = p.scheme();
  double v = 0.0;
  int prev = s.start();
  for (std::size_t j = 0; j < y.size(); ++j) {
    v += p.transition_matrix()(prev, y[j]);
    v += em(static_cast<int>(j), y[j]);
    prev = y[j];
  }
  return v + p.transition_matrix()(prev, s.stop());
}

struct Scored {
  LabelSequence labels;
  double score;
};

// Exhaustive ranking: higher score first, then lexicographically smaller labels.
inline std::vector<Scored> brute_ranking(const nercp::CrfParams& p, const Matrix& em) {
  std::vector<Scored> out;
  for (auto& y : all_paths(p.scheme(), static_cast<int>(em.rows()))) {
    const double v = path_score(p, em, y);
    out.push_back({std::move(y), v});
  }
  std::stable_sort(out.begin(), out.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.labels < b.labels;
  });
  return out;
}

inline double brute_partition(const nercp::CrfParams& p, const Matrix& em) {
  double z = 0.0;
  for (const auto& y : all_paths(p.scheme(), static_cast<int>(em.rows()))) z += std::exp(path_score(p, em, y));
  return z;
}

// Central differences of f over every entry of m, written into a matrix of
// the same shape.
inline Matrix central_difference(Matrix& m, const std::function<double()>& f, double h,
                                 const std::function<bool(int, int)>& active = {}) {
  Matrix g = Matrix::Zero(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (active && !active(i, j)) continue;
      const double keep = m(i, j);
      m(i, j) = keep + h;
      const double up = f();
      m(i, j) = keep - h;
      const double down = f();
      m(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

// Builds a decoding from explicit probabilities (raw score = log p).
inline nercp::TopKDecoding decoding_from(const std::vector<LabelSequence>& labels, const std::vector<double>& probs) {
  std::vector<nercp::ScoredSequence> c;
  for (std::size_t i = 0; i < labels.size(); ++i) c.push_back({labels[i], std::log(probs[i]), 0.0, 0});
  return nercp::topk_normalize(std::move(c));
}

}  // namespace oracle

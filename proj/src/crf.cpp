#include "nercp/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nercp/error.hpp"

namespace nercp {

namespace {

std::vector<std::uint8_t> structural_mask(const LabelScheme& scheme) {
  const int n = scheme.size();
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n * n), 0);
  for (int from = 0; from < n; ++from) {
    for (int to = 0; to < n; ++to) mask[static_cast<std::size_t>(from * n + to)] = scheme.allowed(from, to) ? 1 : 0;
  }
  return mask;
}

void check_dims(const CrfParams& params, const Matrix& emissions) {
  if (emissions.rows() < 1) throw InputError("empty sentence");
  if (emissions.cols() != params.num_labels()) throw InputError("emission score width does not match the label set");
}

// Accumulates log-sum-exp terms incrementally; empty means no admissible path.
class LogAccumulator {
 public:
  void add(double v) {
    if (!any_) {
      max_ = v;
      sum_ = 1.0;
      any_ = true;
    } else if (v <= max_) {
      sum_ += std::exp(v - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - v) + 1.0;
      max_ = v;
    }
  }
  bool any() const { return any_; }
  double value() const { return max_ + std::log(sum_); }

 private:
  bool any_ = false;
  double max_ = 0.0;
  double sum_ = 0.0;
};

struct Lattice {
  Matrix score;
  std::vector<std::uint8_t> reachable;  // t x |L|
};

Lattice forward(const CrfParams& params, const Matrix& em) {
  const int t = static_cast<int>(em.rows());
  const int n = params.num_labels();
  const LabelId start = params.scheme().start();
  Lattice f{Matrix::Zero(t, n), std::vector<std::uint8_t>(static_cast<std::size_t>(t * n), 0)};
  for (int y = 0; y < n; ++y) {
    if (!params.scheme().is_emitting(y) || !params.allowed(start, y)) continue;
    f.score(0, y) = params.transition(start, y) + em(0, y);
    f.reachable[static_cast<std::size_t>(y)] = 1;
  }
  for (int j = 1; j < t; ++j) {
    for (int y = 0; y < n; ++y) {
      if (!params.scheme().is_emitting(y)) continue;
      LogAccumulator acc;
      for (int p = 0; p < n; ++p) {
        if (!f.reachable[static_cast<std::size_t>((j - 1) * n + p)] || !params.allowed(p, y)) continue;
        acc.add(f.score(j - 1, p) + params.transition(p, y));
      }
      if (!acc.any()) continue;
      f.score(j, y) = acc.value() + em(j, y);
      f.reachable[static_cast<std::size_t>(j * n + y)] = 1;
    }
  }
  return f;
}

Lattice backward(const CrfParams& params, const Matrix& em) {
  const int t = static_cast<int>(em.rows());
  const int n = params.num_labels();
  const LabelId stop = params.scheme().stop();
  Lattice b{Matrix::Zero(t, n), std::vector<std::uint8_t>(static_cast<std::size_t>(t * n), 0)};
  for (int y = 0; y < n; ++y) {
    if (!params.scheme().is_emitting(y) || !params.allowed(y, stop)) continue;
    b.score(t - 1, y) = params.transition(y, stop);
    b.reachable[static_cast<std::size_t>((t - 1) * n + y)] = 1;
  }
  for (int j = t - 2; j >= 0; --j) {
    for (int y = 0; y < n; ++y) {
      if (!params.scheme().is_emitting(y)) continue;
      LogAccumulator acc;
      for (int q = 0; q < n; ++q) {
        if (!b.reachable[static_cast<std::size_t>((j + 1) * n + q)] || !params.allowed(y, q)) continue;
        acc.add(params.transition(y, q) + em(j + 1, q) + b.score(j + 1, q));
      }
      if (!acc.any()) continue;
      b.score(j, y) = acc.value();
      b.reachable[static_cast<std::size_t>(j * n + y)] = 1;
    }
  }
  return b;
}

double finish(const CrfParams& params, const Lattice& f) {
  const int t = static_cast<int>(f.score.rows());
  const int n = params.num_labels();
  const LabelId stop = params.scheme().stop();
  LogAccumulator acc;
  for (int y = 0; y < n; ++y) {
    if (!f.reachable[static_cast<std::size_t>((t - 1) * n + y)] || !params.allowed(y, stop)) continue;
    acc.add(f.score(t - 1, y) + params.transition(y, stop));
  }
  if (!acc.any()) throw EmptyPathSpaceError("no admissible label path of length " + std::to_string(t));
  return acc.value();
}

}  // namespace

CrfParams::CrfParams(LabelScheme scheme, int dim)
    : scheme_(std::move(scheme)),
      emission_(Matrix::Zero(scheme_.size(), dim)),
      transition_(Matrix::Zero(scheme_.size(), scheme_.size())),
      mask_(structural_mask(scheme_)) {
  validate();
}

CrfParams::CrfParams(LabelScheme scheme, Matrix emission, Matrix transition, std::vector<std::uint8_t> mask)
    : scheme_(std::move(scheme)), emission_(std::move(emission)), transition_(std::move(transition)), mask_(std::move(mask)) {
  if (mask_.empty()) mask_ = structural_mask(scheme_);
  validate();
  clear_masked();
}

void CrfParams::validate() const {
  const int n = scheme_.size();
  if (emission_.cols() < 1) throw InputError("embedding dimension must be positive");
  if (emission_.rows() != n) throw InputError("emission matrix must have one row per label");
  if (transition_.rows() != n || transition_.cols() != n) throw InputError("transition matrix must be |L| x |L|");
  if (mask_.size() != static_cast<std::size_t>(n * n)) throw InputError("mask must have |L| x |L| entries");
  if (!emission_.allFinite()) throw InputError("emission weights must be finite");
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (allowed(i, j) && !std::isfinite(transition_(i, j))) throw InputError("transition weights must be finite");
    }
  }
}

void CrfParams::set_transition(LabelId from, LabelId to, double value) {
  if (!allowed(from, to)) throw ForbiddenPathError("cannot set a masked transition");
  if (!std::isfinite(value)) throw InputError("transition weights must be finite");
  transition_(from, to) = value;
}

void CrfParams::clear_masked() {
  const int n = num_labels();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (!allowed(i, j)) transition_(i, j) = 0.0;
    }
  }
}

Matrix emission_scores(const CrfParams& params, const EmbeddedSentence& x) {
  if (x.length() < 1) throw InputError("empty sentence");
  if (x.dim() != params.dim()) {
    throw InputError("embedding dimension " + std::to_string(x.dim()) + " does not match parameters (" +
                     std::to_string(params.dim()) + ")");
  }
  if (!x.vectors.allFinite()) throw InputError("embedding entries must be finite");
  return x.vectors * params.emission().transpose();
}

double sequence_score(const CrfParams& params, const Matrix& emissions, const LabelSequence& y) {
  check_dims(params, emissions);
  if (static_cast<Eigen::Index>(y.size()) != emissions.rows()) throw InputError("label sequence length differs from sentence length");
  const LabelScheme& scheme = params.scheme();
  double s = 0.0;
  LabelId prev = scheme.start();
  for (std::size_t j = 0; j < y.size(); ++j) {
    const LabelId cur = y[j];
    if (!scheme.is_emitting(cur)) throw InputError("label id " + std::to_string(cur) + " cannot appear in a sentence");
    if (!params.allowed(prev, cur)) {
      throw ForbiddenPathError("transition " + scheme.name(prev) + " -> " + scheme.name(cur) + " at position " + std::to_string(j + 1));
    }
    s += params.transition(prev, cur);
    s += emissions(static_cast<Eigen::Index>(j), cur);
    prev = cur;
  }
  if (!params.allowed(prev, scheme.stop())) throw ForbiddenPathError("transition " + scheme.name(prev) + " -> STOP");
  s += params.transition(prev, scheme.stop());
  return s;
}

double sequence_score(const CrfParams& params, const EmbeddedSentence& x, const LabelSequence& y) {
  return sequence_score(params, emission_scores(params, x), y);
}

double log_partition(const CrfParams& params, const Matrix& emissions) {
  check_dims(params, emissions);
  return finish(params, forward(params, emissions));
}

double log_partition(const CrfParams& params, const EmbeddedSentence& x) {
  return log_partition(params, emission_scores(params, x));
}

double sequence_probability(const CrfParams& params, const EmbeddedSentence& x, const LabelSequence& y) {
  const Matrix em = emission_scores(params, x);
  return std::exp(sequence_score(params, em, y) - log_partition(params, em));
}

ChainMarginals chain_marginals(const CrfParams& params, const Matrix& em) {
  check_dims(params, em);
  const int t = static_cast<int>(em.rows());
  const int n = params.num_labels();
  const LabelId start = params.scheme().start();
  const LabelId stop = params.scheme().stop();
  const Lattice f = forward(params, em);
  const Lattice b = backward(params, em);
  ChainMarginals out;
  out.log_z = finish(params, f);
  out.node = Matrix::Zero(t, n);
  out.edge = Matrix::Zero(n, n);
  auto fr = [&](int j, int y) { return f.reachable[static_cast<std::size_t>(j * n + y)] != 0; };
  auto br = [&](int j, int y) { return b.reachable[static_cast<std::size_t>(j * n + y)] != 0; };
  for (int j = 0; j < t; ++j) {
    for (int y = 0; y < n; ++y) {
      if (fr(j, y) && br(j, y)) out.node(j, y) = std::exp(f.score(j, y) + b.score(j, y) - out.log_z);
    }
  }
  for (int y = 0; y < n; ++y) {
    if (fr(0, y) && br(0, y)) out.edge(start, y) += out.node(0, y);
    if (fr(t - 1, y) && br(t - 1, y)) out.edge(y, stop) += out.node(t - 1, y);
  }
  for (int j = 1; j < t; ++j) {
    for (int p = 0; p < n; ++p) {
      if (!fr(j - 1, p)) continue;
      for (int q = 0; q < n; ++q) {
        if (!br(j, q) || !params.allowed(p, q)) continue;
        out.edge(p, q) += std::exp(f.score(j - 1, p) + params.transition(p, q) + em(j, q) + b.score(j, q) - out.log_z);
      }
    }
  }
  return out;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw InputError("log_sum_exp of an empty range");
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace nercp

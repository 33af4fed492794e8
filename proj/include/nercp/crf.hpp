#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "nercp/label_scheme.hpp"

namespace nercp {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Per-token input vectors, one row per token (t x d).
struct EmbeddedSentence {
  Matrix vectors;

  int length() const { return static_cast<int>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
};

// Linear-chain CRF parameters: emission weights W* (|L| x d) and transition
// weights W (|L| x |L|). Transitions rejected by the mask carry no value; they
// are skipped by every sum and maximization rather than stored as -inf.
class CrfParams {
 public:
  // Zero weights with the IOB2 structural mask.
  CrfParams(LabelScheme scheme, int dim);
  // Explicit weights. An empty mask means the structural mask; otherwise the
  // mask must hold |L|*|L| row-major entries (nonzero = allowed).
  CrfParams(LabelScheme scheme, Matrix emission, Matrix transition, std::vector<std::uint8_t> mask = {});

  const LabelScheme& scheme() const { return scheme_; }
  int dim() const { return static_cast<int>(emission_.cols()); }
  int num_labels() const { return scheme_.size(); }

  const Matrix& emission() const { return emission_; }
  Matrix& emission() { return emission_; }

  bool allowed(LabelId from, LabelId to) const {
    return mask_[static_cast<std::size_t>(from * num_labels() + to)] != 0;
  }
  // Value of an allowed transition. Masked entries read as 0 and must not be
  // used; callers test allowed() first.
  double transition(LabelId from, LabelId to) const { return transition_(from, to); }
  void set_transition(LabelId from, LabelId to, double value);
  const Matrix& transition_matrix() const { return transition_; }
  // Direct access for optimizers; masked entries are re-zeroed by
  // clear_masked().
  Matrix& mutable_transition_matrix() { return transition_; }
  void clear_masked();

  std::span<const std::uint8_t> mask() const { return mask_; }

 private:
  void validate() const;

  LabelScheme scheme_;
  Matrix emission_;
  Matrix transition_;
  std::vector<std::uint8_t> mask_;
};

// t x |L| matrix of W*(y,:) . x_j.
Matrix emission_scores(const CrfParams& params, const EmbeddedSentence& x);

// Log-domain path value, START and STOP transitions included.
double sequence_score(const CrfParams& params, const EmbeddedSentence& x, const LabelSequence& y);
double sequence_score(const CrfParams& params, const Matrix& emissions, const LabelSequence& y);

// log of the sum of exp(sequence_score) over all admissible paths (forward
// algorithm, log-sum-exp at every step).
double log_partition(const CrfParams& params, const EmbeddedSentence& x);
double log_partition(const CrfParams& params, const Matrix& emissions);

double sequence_probability(const CrfParams& params, const EmbeddedSentence& x, const LabelSequence& y);

// Forward-backward results used for training: node marginals (t x |L|) and
// summed edge marginals (|L| x |L|, START and STOP edges included).
struct ChainMarginals {
  double log_z = 0.0;
  Matrix node;
  Matrix edge;
};
ChainMarginals chain_marginals(const CrfParams& params, const Matrix& emissions);

// log(sum(exp(values))) over a nonempty range.
double log_sum_exp(std::span<const double> values);

}  // namespace nercp

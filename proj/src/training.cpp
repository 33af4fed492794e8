#include "nercp/training.hpp"

#include <cmath>
#include <random>

#include "nercp/error.hpp"

namespace nercp {

namespace {

void check_data(const CrfParams& params, const std::vector<TrainingExample>& data) {
  if (data.empty()) throw InputError("training set is empty");
  for (const auto& ex : data) {
    if (ex.x.length() < 1) throw InputError("training sentence is empty");
    if (static_cast<int>(ex.y.size()) != ex.x.length()) throw InputError("gold labels and sentence differ in length");
    if (ex.x.dim() != params.dim()) throw InputError("embedding dimension does not match parameters");
    if (!params.scheme().is_valid_sequence(ex.y)) throw ForbiddenPathError("gold sequence violates the label mask");
  }
}

double penalty(const CrfParams& params, double l2) {
  if (l2 == 0.0) return 0.0;
  double sq = params.emission().squaredNorm();
  const int n = params.num_labels();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (params.allowed(i, j)) sq += params.transition(i, j) * params.transition(i, j);
    }
  }
  return 0.5 * l2 * sq;
}

}  // namespace

Gradient nll_and_gradient(const CrfParams& params, const std::vector<TrainingExample>& data, double l2) {
  check_data(params, data);
  const int n = params.num_labels();
  const LabelScheme& scheme = params.scheme();
  Gradient g{0.0, Matrix::Zero(n, params.dim()), Matrix::Zero(n, n)};
  for (const auto& ex : data) {
    const Matrix em = emission_scores(params, ex.x);
    const ChainMarginals m = chain_marginals(params, em);
    g.loss += m.log_z - sequence_score(params, em, ex.y);
    // Expected minus observed feature counts.
    g.emission.noalias() += m.node.transpose() * ex.x.vectors;
    g.transition += m.edge;
    LabelId prev = scheme.start();
    for (std::size_t j = 0; j < ex.y.size(); ++j) {
      g.emission.row(ex.y[j]) -= ex.x.vectors.row(static_cast<Eigen::Index>(j));
      g.transition(prev, ex.y[j]) -= 1.0;
      prev = ex.y[j];
    }
    g.transition(prev, scheme.stop()) -= 1.0;
  }
  const double inv = 1.0 / static_cast<double>(data.size());
  g.loss *= inv;
  g.emission *= inv;
  g.transition *= inv;
  g.loss += penalty(params, l2);
  if (l2 != 0.0) {
    g.emission += l2 * params.emission();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (params.allowed(i, j)) g.transition(i, j) += l2 * params.transition(i, j);
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (!params.allowed(i, j)) g.transition(i, j) = 0.0;
    }
  }
  return g;
}

double nll(const CrfParams& params, const std::vector<TrainingExample>& data, double l2) {
  check_data(params, data);
  double loss = 0.0;
  for (const auto& ex : data) {
    const Matrix em = emission_scores(params, ex.x);
    loss += log_partition(params, em) - sequence_score(params, em, ex.y);
  }
  return loss / static_cast<double>(data.size()) + penalty(params, l2);
}

CrfParams train_crf(CrfParams params, const std::vector<TrainingExample>& data, const TrainConfig& config,
                    const TrainObserver& observer) {
  if (config.steps < 0) throw InputError("step count must be nonnegative");
  if (!(config.learning_rate >= 0.0) || !(config.l2 >= 0.0)) throw InputError("learning rate and l2 must be nonnegative");
  check_data(params, data);
  for (int step = 0; step < config.steps; ++step) {
    const Gradient g = nll_and_gradient(params, data, config.l2);
    if (!std::isfinite(g.loss) || !g.emission.allFinite() || !g.transition.allFinite()) {
      throw DivergenceError(step, "non-finite loss or gradient");
    }
    if (observer) observer(step, g.loss);
    if (config.gradient_tolerance > 0.0 &&
        std::sqrt(g.emission.squaredNorm() + g.transition.squaredNorm()) < config.gradient_tolerance) {
      break;
    }
    if (config.learning_rate == 0.0) continue;
    params.emission() -= config.learning_rate * g.emission;
    params.mutable_transition_matrix() -= config.learning_rate * g.transition;
    params.clear_masked();
  }
  return params;
}

CrfParams train_crf(const LabelScheme& scheme, const std::vector<TrainingExample>& data, const TrainConfig& config,
                    std::uint64_t seed, const TrainObserver& observer) {
  if (data.empty()) throw InputError("training set is empty");
  const int n = scheme.size();
  const int d = data.front().x.dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix emission = Matrix::Zero(n, d);
  Matrix transition = Matrix::Zero(n, n);
  for (int y = 0; y < scheme.num_emitting(); ++y) {
    for (int k = 0; k < d; ++k) emission(y, k) = config.init_scale * normal(rng);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (scheme.allowed(i, j)) transition(i, j) = config.init_scale * normal(rng);
    }
  }
  return train_crf(CrfParams(scheme, std::move(emission), std::move(transition)), data, config, observer);
}

}  // namespace nercp

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "nercp/crf.hpp"

namespace nercp {

struct TrainingExample {
  EmbeddedSentence x;
  LabelSequence y;
};

struct TrainConfig {
  double learning_rate = 0.5;
  int steps = 150;
  double l2 = 1e-4;
  double init_scale = 0.01;
  // Stop early once the gradient norm falls below this value (0 disables).
  double gradient_tolerance = 0.0;
};

struct Gradient {
  double loss = 0.0;
  Matrix emission;
  Matrix transition;  // zero on masked entries
};

// Average negative log-likelihood of the gold sequences plus
// 0.5 * l2 * (|W*|^2 + |W|^2 over allowed entries), with its gradient.
Gradient nll_and_gradient(const CrfParams& params, const std::vector<TrainingExample>& data, double l2);
double nll(const CrfParams& params, const std::vector<TrainingExample>& data, double l2);

// Called after every step with (step, loss).
using TrainObserver = std::function<void(int, double)>;

// Full-batch gradient descent from a seeded random initialization.
CrfParams train_crf(const LabelScheme& scheme, const std::vector<TrainingExample>& data, const TrainConfig& config,
                    std::uint64_t seed, const TrainObserver& observer = {});
// Same optimizer, starting from given parameters.
CrfParams train_crf(CrfParams init, const std::vector<TrainingExample>& data, const TrainConfig& config,
                    const TrainObserver& observer = {});

}  // namespace nercp

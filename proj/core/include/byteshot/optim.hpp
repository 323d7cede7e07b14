#pragma once

#include <span>
#include <vector>

namespace byteshot {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Plain Adam with bias correction over a flat list of tensors.
template <typename S>
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<std::span<S>> params, double learning_rate, AdamSettings settings = {});

  /// Applies one update using gradients laid out like the parameters.
  void step(const std::vector<std::span<const S>>& gradients);

  long steps_taken() const noexcept { return step_; }

 private:
  std::vector<std::span<S>> params_;
  std::vector<std::vector<S>> first_moment_;
  std::vector<std::vector<S>> second_moment_;
  double learning_rate_;
  AdamSettings settings_;
  long step_ = 0;
};

}  // namespace byteshot

#include "byteshot/optim.hpp"

#include <cmath>

#include "byteshot/error.hpp"

namespace byteshot {

template <typename S>
AdamOptimizer<S>::AdamOptimizer(std::vector<std::span<S>> params, double learning_rate,
                                AdamSettings settings)
    : params_(std::move(params)), learning_rate_(learning_rate), settings_(settings) {
  for (const auto& p : params_) {
    first_moment_.emplace_back(p.size(), S(0));
    second_moment_.emplace_back(p.size(), S(0));
  }
}

template <typename S>
void AdamOptimizer<S>::step(const std::vector<std::span<const S>>& gradients) {
  if (gradients.size() != params_.size())
    throw Error(ErrorCode::InvalidConfig, "gradient layout does not match parameters");
  ++step_;
  const S b1 = S(settings_.beta1), b2 = S(settings_.beta2);
  const S correction1 = S(1) - S(std::pow(settings_.beta1, static_cast<double>(step_)));
  const S correction2 = S(1) - S(std::pow(settings_.beta2, static_cast<double>(step_)));
  const S lr = S(learning_rate_), eps = S(settings_.epsilon);
  for (std::size_t t = 0; t < params_.size(); ++t) {
    std::span<S> p = params_[t];
    std::span<const S> g = gradients[t];
    S* m = first_moment_[t].data();
    S* v = second_moment_[t].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (S(1) - b1) * g[i];
      v[i] = b2 * v[i] + (S(1) - b2) * g[i] * g[i];
      const S mhat = m[i] / correction1;
      const S vhat = v[i] / correction2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template class AdamOptimizer<float>;
template class AdamOptimizer<double>;

}  // namespace byteshot

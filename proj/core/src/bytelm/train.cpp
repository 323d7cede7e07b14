#include "byteshot/bytelm/train.hpp"

#include <algorithm>
#include <cmath>

#include "byteshot/bytelm/model.hpp"
#include "byteshot/bytelm/tokenizer.hpp"
#include "byteshot/error.hpp"
#include "byteshot/rng.hpp"

namespace byteshot::bytelm {

namespace {

/// Tokenized corpus with window-start bookkeeping for uniform sampling.
class WindowSampler {
 public:
  WindowSampler(std::span<const std::vector<std::uint8_t>> corpus, int window) : window_(window) {
    std::size_t total = 0;
    for (const auto& file : corpus) {
      if (file.empty()) continue;
      auto seq = tokenize(file);
      if (seq.tokens.size() < 2) continue;
      const std::size_t starts =
          seq.tokens.size() > static_cast<std::size_t>(window) ? seq.tokens.size() - window + 1 : 1;
      total += starts;
      files_.push_back(std::move(seq.tokens));
      cumulative_starts_.push_back(total);
    }
    if (files_.empty())
      throw Error(ErrorCode::EmptyCorpus, "corpus contains no file with at least two tokens");
  }

  std::span<const Token> draw(Rng& rng) const {
    const std::size_t pick = uniform_index(rng, cumulative_starts_.back());
    const auto it = std::upper_bound(cumulative_starts_.begin(), cumulative_starts_.end(), pick);
    const auto file = static_cast<std::size_t>(it - cumulative_starts_.begin());
    const std::size_t before = file == 0 ? 0 : cumulative_starts_[file - 1];
    const std::size_t start = pick - before;
    const auto& tokens = files_[file];
    const std::size_t len = std::min<std::size_t>(window_, tokens.size() - start);
    return std::span<const Token>(tokens).subspan(start, len);
  }

 private:
  int window_;
  std::vector<std::vector<Token>> files_;
  std::vector<std::size_t> cumulative_starts_;
};

}  // namespace

TrainingResult lm_train(std::span<const std::vector<std::uint8_t>> corpus, const LMConfig& config,
                        const StepCallback& on_step) {
  config.validate();
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "no training files");
  const WindowSampler sampler(corpus, config.context_len);

  TrainingResult result;
  result.model.config = config;
  result.model.params = init_params(config, derive_seed(config.seed, "bytelm.init"));
  Rng window_rng(derive_seed(config.seed, "bytelm.windows"));

  byteshot::AdamOptimizer<float> adam(flat_views(result.model.params), config.learning_rate);
  result.loss_trace.reserve(config.train_iterations);
  for (int it = 0; it < config.train_iterations; ++it) {
    const auto window = sampler.draw(window_rng);
    auto [loss, grads] = lm_gradients(result.model.params, config, window);
    const auto& grads_const = grads;
    adam.step(flat_views(grads_const));
    if (!all_finite(result.model.params))
      throw Error(ErrorCode::NonFiniteParameters, "training step " + std::to_string(it));
    result.loss_trace.push_back(static_cast<double>(loss));
    if (on_step) on_step(it, static_cast<double>(loss));
  }
  return result;
}

}  // namespace byteshot::bytelm

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "byteshot/bytelm/params.hpp"
#include "byteshot/optim.hpp"

namespace byteshot::bytelm {

struct TrainingResult {
  LanguageModel model;
  /// Loss of the sampled window at each optimizer step, before the update.
  std::vector<double> loss_trace;
};

using StepCallback = std::function<void(int iteration, double loss)>;

/// Trains from a seeded initialization for config.train_iterations Adam
/// steps. Each step draws one window of up to context_len tokens, uniformly
/// over all window start positions in the tokenized corpus.
///
/// Throws EmptyCorpus when no element yields at least two tokens and
/// NonFiniteParameters if an update produces NaN/Inf.
TrainingResult lm_train(std::span<const std::vector<std::uint8_t>> corpus, const LMConfig& config,
                        const StepCallback& on_step = {});

}  // namespace byteshot::bytelm

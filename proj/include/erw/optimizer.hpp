#pragma once

#include "erw/types.hpp"

#include <vector>

namespace erw {

struct OptimizerConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
  double clip_norm = 1.0;     // global norm, applied before the moments
};

// Adam with decoupled weight decay. Gradients are clipped to the configured
// global norm before entering the moment estimates; updates use the usual
// bias correction.
class AdamW {
 public:
  AdamW(const std::vector<Matrix>& params_like, OptimizerConfig cfg = {});

  // Applies one update to params[i] for every i in `active`; other entries
  // (params and moments) are untouched. Throws on non-finite gradients.
  void step(std::vector<Matrix>& params, const std::vector<Matrix>& grads,
            const std::vector<int>& active);
  // All parameters active.
  void step(std::vector<Matrix>& params, const std::vector<Matrix>& grads);

  void reset();
  long step_count() const { return step_count_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Matrix> m_, v_;
  long step_count_ = 0;
};

}  // namespace erw

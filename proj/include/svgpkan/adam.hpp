#pragma once

#include <vector>

#include "svgpkan/tape.hpp"

namespace svgpkan {

struct AdamConfig {
    double lr = 2e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. States are keyed by position in the param list,
// which therefore must stay stable across steps.
class Adam {
  public:
    explicit Adam(std::vector<Param*> params, AdamConfig cfg = {});

    // grads[i] pairs with params[i]; shapes must match.
    void step(const std::vector<Tensor>& grads);
    i64 step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    std::vector<Param*>& params() { return params_; }

  private:
    std::vector<Param*> params_;
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    i64 t_ = 0;
};

}  // namespace svgpkan

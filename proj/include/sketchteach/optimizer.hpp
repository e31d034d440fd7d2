#pragma once

#include "sketchteach/autodiff.hpp"

#include <cstdint>
#include <utility>

namespace sketchteach {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected adaptive-moment state aligned with one ParamVector.
struct OptimizerState {
  AdamConfig config;
  std::int64_t step = 0;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;

  static OptimizerState for_params(const ParamVector& params, const AdamConfig& config = {});
};

/// One Adam update. Pure: inputs are not modified.
std::pair<OptimizerState, ParamVector> adam_step(const OptimizerState& state, const ParamVector& params,
                                                 const ParamVector& gradient);

/// In-place variant used by the training loops; `lr_scale` multiplies the configured learning rate.
void adam_update(OptimizerState& state, ParamVector& params, const ParamVector& gradient, double lr_scale = 1.0);

}  // namespace sketchteach

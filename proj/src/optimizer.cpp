#include "sketchteach/optimizer.hpp"

#include <cmath>

namespace sketchteach {

OptimizerState OptimizerState::for_params(const ParamVector& params, const AdamConfig& config) {
  OptimizerState s;
  s.config = config;
  s.first_moment = Eigen::VectorXd::Zero(params.size());
  s.second_moment = Eigen::VectorXd::Zero(params.size());
  return s;
}

void adam_update(OptimizerState& state, ParamVector& params, const ParamVector& gradient, double lr_scale) {
  if (!params.same_layout(gradient)) throw std::invalid_argument("adam_step: gradient layout differs from params");
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size())
    throw std::invalid_argument("adam_step: optimizer state length differs from params");
  if (state.step < 0) throw std::invalid_argument("adam_step: negative step count");

  const AdamConfig& c = state.config;
  const Eigen::VectorXd& g = gradient.values();
  state.step += 1;
  state.first_moment = c.beta1 * state.first_moment + (1.0 - c.beta1) * g;
  state.second_moment = c.beta2 * state.second_moment + (1.0 - c.beta2) * g.cwiseProduct(g);
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const double lr = c.learning_rate * lr_scale;
  params.values().array() -=
      lr * (state.first_moment.array() / bc1) / ((state.second_moment.array() / bc2).sqrt() + c.epsilon);
}

std::pair<OptimizerState, ParamVector> adam_step(const OptimizerState& state, const ParamVector& params,
                                                 const ParamVector& gradient) {
  OptimizerState next = state;
  ParamVector out = params;
  adam_update(next, out, gradient);
  return {std::move(next), std::move(out)};
}

}  // namespace sketchteach

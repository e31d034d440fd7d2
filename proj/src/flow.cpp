#include "sketchteach/flow.hpp"

#include "sketchteach/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace sketchteach {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)

std::string block_name(int layer, const char* net, const char* part) {
  return "layer" + std::to_string(layer) + "." + net + "." + part;
}

struct SubnetParams {
  Eigen::Map<const Matrix> w1, b1, w2, b2;
};

SubnetParams subnet(const FlowModel& m, int layer, const char* net) {
  return {m.params.block(block_name(layer, net, "w1")), m.params.block(block_name(layer, net, "b1")),
          m.params.block(block_name(layer, net, "w2")), m.params.block(block_name(layer, net, "b2"))};
}

Eigen::RowVector3d mask_row(const CouplingMask& m) { return {m[0], m[1], m[2]}; }

Matrix run_subnet(const SubnetParams& p, const Matrix& x) {
  Matrix h = x * p.w1;
  h.rowwise() += p.b1.row(0);
  h = h.array().tanh().matrix();
  Matrix out = h * p.w2;
  out.rowwise() += p.b2.row(0);
  return out;
}

// Scale and shift of one coupling layer, already restricted to the transformed dims.
void layer_terms(const FlowModel& model, int layer, const Matrix& passthrough, Matrix& log_scale, Matrix& shift) {
  const Eigen::RowVector3d free = Eigen::RowVector3d::Ones() - mask_row(model.masks[static_cast<std::size_t>(layer)]);
  const double bound = model.config.log_scale_bound;
  const Matrix raw = run_subnet(subnet(model, layer, "scale"), passthrough);
  log_scale = (bound * (raw.array() / bound).tanh()).matrix();
  log_scale.array().rowwise() *= free.array();
  shift = run_subnet(subnet(model, layer, "shift"), passthrough);
  shift.array().rowwise() *= free.array();
}

void require_finite(const Vec3& v, const char* op) {
  if (!v.allFinite()) throw std::invalid_argument(std::string(op) + ": non-finite input");
}

}  // namespace

std::vector<CouplingMask> default_masks(int layer_count) {
  std::vector<CouplingMask> masks;
  masks.reserve(static_cast<std::size_t>(layer_count));
  for (int i = 0; i < layer_count; ++i) {
    const int alone = (i / 2 + 1) % 3;
    CouplingMask m{1.0, 1.0, 1.0};
    m[static_cast<std::size_t>(alone)] = 0.0;
    if (i % 2 == 1)
      for (double& x : m) x = 1.0 - x;
    masks.push_back(m);
  }
  return masks;
}

FlowModel FlowModel::create(const FlowConfig& config) {
  if (config.layer_count < 2) throw std::invalid_argument("flow: layer_count must be >= 2");
  if (config.hidden_width < 1) throw std::invalid_argument("flow: hidden_width must be >= 1");
  if (!(config.log_scale_bound > 0.0)) throw std::invalid_argument("flow: log_scale_bound must be > 0");
  if (!(config.noise_sigma >= 0.0)) throw std::invalid_argument("flow: noise_sigma must be >= 0");

  FlowModel model;
  model.config = config;
  model.masks = default_masks(config.layer_count);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, config.init_weight_std);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int h = config.hidden_width;
  for (int layer = 0; layer < config.layer_count; ++layer) {
    for (const char* net : {"scale", "shift"}) {
      Matrix w1(3, h);
      for (Eigen::Index k = 0; k < w1.size(); ++k) w1.data()[k] = normal(rng);
      // Center every hidden unit's transition somewhere inside the unit cube.
      Eigen::RowVector3d center(unit(rng), unit(rng), unit(rng));
      const CouplingMask& m = model.masks[static_cast<std::size_t>(layer)];
      center = center.cwiseProduct(mask_row(m));
      Matrix b1 = -(center * w1);
      model.params.add_block(block_name(layer, net, "w1"), w1);
      model.params.add_block(block_name(layer, net, "b1"), b1);
      model.params.add_block(block_name(layer, net, "w2"), Matrix::Zero(h, 3));
      model.params.add_block(block_name(layer, net, "b2"), Matrix::Zero(1, 3));
    }
  }
  return model;
}

void FlowModel::validate() const {
  if (static_cast<int>(masks.size()) != config.layer_count)
    throw std::invalid_argument("flow: mask count differs from layer_count");
  for (std::size_t i = 0; i < masks.size(); ++i) {
    for (double x : masks[i])
      if (x != 0.0 && x != 1.0) throw std::invalid_argument("flow: masks must be binary");
    if (i % 2 == 1)
      for (std::size_t d = 0; d < 3; ++d)
        if (masks[i][d] + masks[i - 1][d] != 1.0)
          throw std::invalid_argument("flow: consecutive masks must be complementary");
  }
  for (int layer = 0; layer < config.layer_count; ++layer)
    for (const char* net : {"scale", "shift"}) {
      const auto w1 = params.block(block_name(layer, net, "w1"));
      const auto b1 = params.block(block_name(layer, net, "b1"));
      const auto w2 = params.block(block_name(layer, net, "w2"));
      const auto b2 = params.block(block_name(layer, net, "b2"));
      const Eigen::Index h = config.hidden_width;
      if (w1.rows() != 3 || w1.cols() != h || b1.rows() != 1 || b1.cols() != h || w2.rows() != h ||
          w2.cols() != 3 || b2.rows() != 1 || b2.cols() != 3)
        throw std::invalid_argument("flow: parameter shapes differ from config in layer " + std::to_string(layer));
    }
  params.check_finite();
}

void flow_forward_batch(const FlowModel& model, const Matrix& points, Matrix& latents, Eigen::VectorXd& log_dets) {
  if (points.cols() != 3) throw std::invalid_argument("flow_forward: points must be N x 3");
  latents = points;
  log_dets = Eigen::VectorXd::Zero(points.rows());
  Matrix log_scale, shift;
  for (int layer = 0; layer < model.config.layer_count; ++layer) {
    const Eigen::RowVector3d mask = mask_row(model.masks[static_cast<std::size_t>(layer)]);
    const Eigen::RowVector3d free = Eigen::RowVector3d::Ones() - mask;
    Matrix pass = latents.array().rowwise() * mask.array();
    layer_terms(model, layer, pass, log_scale, shift);
    Matrix moved = latents.cwiseProduct(log_scale.array().exp().matrix()) + shift;
    moved.array().rowwise() *= free.array();
    latents = pass + moved;
    log_dets += log_scale.rowwise().sum();
  }
}

Eigen::VectorXd log_density_batch(const FlowModel& model, const Matrix& points) {
  Matrix z;
  Eigen::VectorXd log_det;
  flow_forward_batch(model, points, z, log_det);
  return (-0.5 * z.rowwise().squaredNorm()).array() - 3.0 * kHalfLog2Pi + log_det.array();
}

FlowForward flow_forward(const FlowModel& model, const Vec3& y) {
  require_finite(y, "flow_forward");
  Matrix z;
  Eigen::VectorXd log_det;
  flow_forward_batch(model, y.transpose(), z, log_det);
  return {z.row(0).transpose(), log_det(0)};
}

Vec3 flow_inverse(const FlowModel& model, const Vec3& latent) {
  require_finite(latent, "flow_inverse");
  Matrix y = latent.transpose();
  Matrix log_scale, shift;
  for (int layer = model.config.layer_count - 1; layer >= 0; --layer) {
    const Eigen::RowVector3d mask = mask_row(model.masks[static_cast<std::size_t>(layer)]);
    const Eigen::RowVector3d free = Eigen::RowVector3d::Ones() - mask;
    Matrix pass = y.array().rowwise() * mask.array();
    layer_terms(model, layer, pass, log_scale, shift);
    Matrix moved = (y - shift).cwiseProduct((-log_scale).array().exp().matrix());
    moved.array().rowwise() *= free.array();
    y = pass + moved;
  }
  return y.row(0).transpose();
}

double log_density(const FlowModel& model, const Vec3& y) {
  const FlowForward f = flow_forward(model, y);
  return -0.5 * f.latent.squaredNorm() - 3.0 * kHalfLog2Pi + f.log_det;
}

double conditional_density(const FlowModel& model, double u, double v, double t) {
  const auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!unit(u) || !unit(v) || !unit(t)) throw std::out_of_range("conditional_density: (u, v, t) must lie in [0,1]");
  return std::exp(log_density(model, Vec3(t, u, v)));
}

// ---------------------------------------------------------------------------

namespace {

Var subnet_on_tape(Tape& tape, const BoundParams& p, int layer, const char* net, const Var& x) {
  tape.set_scope("layer" + std::to_string(layer) + "." + net);
  const Var h = tanh(affine(x, p[block_name(layer, net, "w1")], p[block_name(layer, net, "b1")]));
  return affine(h, p[block_name(layer, net, "w2")], p[block_name(layer, net, "b2")]);
}

}  // namespace

Var flow_nll(Tape& tape, const BoundParams& params, const FlowModel& model, const Matrix& points) {
  if (points.cols() != 3 || points.rows() == 0) throw std::invalid_argument("flow_nll: points must be N x 3, N > 0");
  const double n = static_cast<double>(points.rows());
  const double bound = model.config.log_scale_bound;
  Var y = tape.constant(points);
  Var log_det_total = tape.constant(0.0);
  for (int layer = 0; layer < model.config.layer_count; ++layer) {
    const Eigen::RowVector3d mask = mask_row(model.masks[static_cast<std::size_t>(layer)]);
    const Var mask_v = tape.constant(Matrix(mask));
    const Var free_v = tape.constant(Matrix(Eigen::RowVector3d::Ones() - mask));
    const Var pass = mul(y, mask_v);
    const Var raw = subnet_on_tape(tape, params, layer, "scale", pass);
    const Var log_scale = mul(scale(tanh(scale(raw, 1.0 / bound)), bound), free_v);
    const Var shift_v = mul(subnet_on_tape(tape, params, layer, "shift", pass), free_v);
    tape.set_scope("layer" + std::to_string(layer) + ".coupling");
    y = add(pass, mul(add(mul(y, exp(log_scale)), shift_v), free_v));
    log_det_total = add(log_det_total, sum(log_scale));
  }
  tape.set_scope("nll");
  // mean over points of 0.5|z|^2 + 1.5 log(2 pi) - log_det
  const Var quad = scale(sum(square(y)), 0.5 / n);
  return shift(sub(quad, scale(log_det_total, 1.0 / n)), 3.0 * kHalfLog2Pi);
}

Matrix stack_sketch_points(const std::vector<SketchTrajectory>& sketches) {
  std::size_t total = 0;
  for (const auto& s : sketches) total += s.points.size();
  Matrix out(static_cast<Eigen::Index>(total), 3);
  Eigen::Index row = 0;
  for (const auto& s : sketches)
    for (const auto& p : s.points) out.row(row++) << p.t, p.u, p.v;
  return out;
}

namespace {

double mean_nll(const FlowModel& model, const Matrix& data) { return -log_density_batch(model, data).mean(); }

}  // namespace

FlowTrainResult train_flow(const std::vector<SketchTrajectory>& sketches, const FlowConfig& config,
                           const EpochCallback& on_epoch) {
  if (sketches.empty()) throw std::invalid_argument("train_flow: no sketches");
  for (const auto& s : sketches) s.validate();
  const Matrix data = stack_sketch_points(sketches);
  if (data.rows() < 10) throw std::invalid_argument("train_flow: at least 10 points required");
  if (config.epochs < 0) throw std::invalid_argument("train_flow: epochs must be >= 0");

  FlowTrainResult result;
  result.model = FlowModel::create(config);
  FlowModel& model = result.model;
  result.initial_nll = mean_nll(model, data);

  OptimizerState opt = OptimizerState::for_params(model.params, AdamConfig{config.learning_rate});
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Eigen::Index n = data.rows();
  const Eigen::Index batch = (config.batch_size <= 0 || config.batch_size >= n) ? n : config.batch_size;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  result.loss_curve.reserve(static_cast<std::size_t>(config.epochs));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Matrix noisy = data;
    if (config.noise_sigma > 0.0)
      for (Eigen::Index k = 0; k < noisy.size(); ++k) noisy.data()[k] += config.noise_sigma * normal(rng);
    if (batch < n) std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    int batch_index = 0;
    for (Eigen::Index start = 0; start < n; start += batch, ++batch_index) {
      const Eigen::Index len = std::min(batch, n - start);
      Matrix chunk(len, 3);
      for (Eigen::Index r = 0; r < len; ++r) chunk.row(r) = noisy.row(order[static_cast<std::size_t>(start + r)]);
      try {
        const ValueAndGrad vg = value_and_grad(
            [&](Tape& tape, const BoundParams& p) { return flow_nll(tape, p, model, chunk); }, model.params);
        adam_update(opt, model.params, vg.gradient);
        model.params.check_finite();
        epoch_loss += vg.loss * static_cast<double>(len);
      } catch (const NonFiniteError& e) {
        throw TrainingDivergedError(epoch, batch_index, e.what());
      }
    }
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) throw TrainingDivergedError(epoch, batch_index - 1, "non-finite loss");
    result.loss_curve.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }

  result.final_nll = mean_nll(model, data);
  if (!std::isfinite(result.final_nll)) throw TrainingDivergedError(config.epochs, 0, "non-finite final loss");
  if (result.final_nll > result.initial_nll) {
    // Training made the clean-data fit worse; fall back to the identity start.
    FlowModel start = FlowModel::create(config);
    result.model = std::move(start);
    result.final_nll = result.initial_nll;
  }
  return result;
}

}  // namespace sketchteach

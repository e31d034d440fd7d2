#pragma once

// Affine-coupling normalizing flow over timestamped view-space points (t, u, v).

#include "sketchteach/autodiff.hpp"
#include "sketchteach/geometry.hpp"
#include "sketchteach/sketch.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

namespace sketchteach {

struct FlowConfig {
  int layer_count = 6;
  int hidden_width = 64;
  /// Log-scales are squashed to [-bound, bound] with bound * tanh(raw / bound).
  double log_scale_bound = 3.0;
  /// Std of the first-layer weights of every subnetwork at initialization.
  double init_weight_std = 1.0;
  double noise_sigma = 0.01;
  int epochs = 2000;
  /// 0 means full batch.
  int batch_size = 0;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

/// Mask value 1 marks a dimension that passes through a layer unchanged and
/// conditions the scale/shift of the others.
using CouplingMask = std::array<double, 3>;

struct FlowModel {
  FlowConfig config;
  std::vector<CouplingMask> masks;
  ParamVector params;

  /// Identity-initialized model: output layers of every subnetwork are zero.
  static FlowModel create(const FlowConfig& config);

  /// Throws std::invalid_argument if masks/params do not match the config.
  void validate() const;
};

/// Alternating complementary masks, cycling which dimension stands alone.
std::vector<CouplingMask> default_masks(int layer_count);

struct FlowForward {
  Vec3 latent;
  double log_det;
};

FlowForward flow_forward(const FlowModel& model, const Vec3& y);
Vec3 flow_inverse(const FlowModel& model, const Vec3& latent);
double log_density(const FlowModel& model, const Vec3& y);

/// p(u, v | t) = p(t, u, v) since t is uniform on [0,1].
double conditional_density(const FlowModel& model, double u, double v, double t);

/// Batched forward pass: rows of `points` are (t, u, v). Fills latents (N x 3) and log-dets (N).
void flow_forward_batch(const FlowModel& model, const Matrix& points, Matrix& latents, Eigen::VectorXd& log_dets);
Eigen::VectorXd log_density_batch(const FlowModel& model, const Matrix& points);

/// Mean negative log-likelihood of `points` (N x 3) expressed on a tape, for
/// the parameter blocks of `model` bound in `params`.
Var flow_nll(Tape& tape, const BoundParams& params, const FlowModel& model, const Matrix& points);

/// Training diverged: carries the epoch/batch where a non-finite value appeared.
class TrainingDivergedError : public std::runtime_error {
 public:
  TrainingDivergedError(int epoch, int batch, const std::string& detail)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch) + ": " + detail),
        epoch_(epoch),
        batch_(batch) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  int epoch_;
  int batch_;
};

struct FlowTrainResult {
  FlowModel model;
  /// Mean NLL per epoch on the noise-injected data.
  std::vector<double> loss_curve;
  /// Mean NLL on the clean data before and after training.
  double initial_nll = 0.0;
  double final_nll = 0.0;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Stacks sketch points into an N x 3 (t, u, v) matrix.
Matrix stack_sketch_points(const std::vector<SketchTrajectory>& sketches);

FlowTrainResult train_flow(const std::vector<SketchTrajectory>& sketches, const FlowConfig& config,
                           const EpochCallback& on_epoch = {});

}  // namespace sketchteach

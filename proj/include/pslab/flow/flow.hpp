#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "pslab/core/mlp.hpp"
#include "pslab/flow/timestep.hpp"

namespace pslab {

/// x_t = (1 - t) x0 + t eps.
Mat interpolate(const Mat& x0, const Mat& eps, double t);
/// Row-wise interpolation with per-row times (n x 1).
Mat interpolate(const Mat& x0, const Mat& eps, const Mat& t);
/// eps - x0, the conditional flow-matching velocity.
Mat velocity_target(const Mat& x0, const Mat& eps);

struct FlowModelConfig {
  int dim = 2;
  int width = 256;
  int depth = 4;  // linear layers, i.e. depth - 1 hidden layers
  bool wide_head = false;
  Activation activation = Activation::silu;
  double init_gain = 1.0;
};

/// Velocity networks train in single precision; inputs and outputs are double.
using FlowScalar = float;

/// Velocity MLP over [x_t, t]. With a wide head, x_t is also concatenated to
/// the last hidden layer in front of the output projection.
struct FlowModel {
  FlowModelConfig config;
  Mlp<FlowScalar> net;
};

FlowModel make_flow_model(const FlowModelConfig& config, std::uint64_t seed);

/// Predicted velocity for rows `x` at per-row times `t` (n x 1).
Mat predict_velocity(const FlowModel& model, const Mat& x, const Mat& t);
Var<FlowScalar> predict_velocity(Tape<FlowScalar>& tape, FlowModel& model, const Var<FlowScalar>& x,
                                 const Var<FlowScalar>& t);

using DataSampler = std::function<Mat(Eigen::Index n, Rng& rng)>;

struct FlowTrainConfig {
  int steps = 20000;
  int batch = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int trace_every = 100;
};

struct LossTrace {
  std::vector<double> step_losses;  // one per optimizer step
  std::vector<int> trace_steps;     // every trace_every steps
  std::vector<double> trace_losses; // mean loss over the preceding window
};

/// Trains on the flow-matching objective mean |v(x_t, t) - (eps - x0)|^2.
/// Throws RuntimeFailure if the loss or any parameter stops being finite.
LossTrace train_flow(FlowModel& model, const DataSampler& data, const TimestepSampler& sampler,
                     const FlowTrainConfig& config);

/// Flow-matching loss of `model` on a fresh evaluation batch (no training).
double flow_eval_loss(const FlowModel& model, const DataSampler& data, const TimestepSampler& sampler,
                      Eigen::Index n, std::uint64_t seed);

/// v(x, t) for a batch of rows at a shared time.
using VelocityField = std::function<Mat(const Mat& x, double t)>;

VelocityField model_field(const FlowModel& model);

struct EulerConfig {
  int steps = 50;
  double shift = 1.0;
  double t_min = 1e-3;
};

/// The integration times, from 1 down to t_min, uniform in unshifted time and
/// mapped through the shift.
std::vector<double> euler_grid(const EulerConfig& config);

/// Integrates dx/dt = v from the given state at t = 1 down to t_min, then
/// extrapolates linearly to t = 0 with the velocity at t_min.
Mat euler_integrate(const VelocityField& field, Mat x, const EulerConfig& config);

/// Draws n standard-normal starting points in R^dim and integrates them.
Mat euler_sample(const VelocityField& field, Eigen::Index n, int dim, const EulerConfig& config, std::uint64_t seed);

}  // namespace pslab

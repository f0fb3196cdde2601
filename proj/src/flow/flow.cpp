#include "pslab/flow/flow.hpp"

#include <cmath>
#include <sstream>

#include "pslab/core/adam.hpp"
#include "pslab/core/allocator.hpp"

namespace pslab {

Mat interpolate(const Mat& x0, const Mat& eps, double t) {
  require(x0.rows() == eps.rows() && x0.cols() == eps.cols(), "interpolate: shape mismatch");
  require(t >= 0.0 && t <= 1.0, "interpolate: t must lie in [0, 1]");
  return (1.0 - t) * x0 + t * eps;
}

Mat interpolate(const Mat& x0, const Mat& eps, const Mat& t) {
  require(x0.rows() == eps.rows() && x0.cols() == eps.cols(), "interpolate: shape mismatch");
  require(t.rows() == x0.rows() && t.cols() == 1, "interpolate: t must be an n x 1 column");
  require((t.array() >= 0.0).all() && (t.array() <= 1.0).all(), "interpolate: t must lie in [0, 1]");
  Mat out = x0.array().colwise() * (1.0 - t.col(0).array());
  out.array() += eps.array().colwise() * t.col(0).array();
  return out;
}

Mat velocity_target(const Mat& x0, const Mat& eps) {
  require(x0.rows() == eps.rows() && x0.cols() == eps.cols(), "velocity_target: shape mismatch");
  return eps - x0;
}

FlowModel make_flow_model(const FlowModelConfig& c, std::uint64_t seed) {
  require(c.dim >= 1, "flow model: dim must be >= 1");
  require(c.width >= 1 && c.depth >= 2, "flow model: width must be >= 1 and depth >= 2");
  Rng rng(seed);
  MlpSpec spec{.input = c.dim + 1,
               .width = c.width,
               .depth = c.depth - 1,
               .output = c.dim,
               .head_inputs = c.wide_head ? c.dim : 0,
               .activation = c.activation,
               .gain = c.init_gain};
  return FlowModel{c, make_mlp<FlowScalar>(spec, rng)};
}

Mat predict_velocity(const FlowModel& model, const Mat& x, const Mat& t) {
  require(x.cols() == model.config.dim, "flow model: input width " + std::to_string(x.cols()) +
                                            " does not match model width " + std::to_string(model.config.dim));
  require(t.rows() == x.rows() && t.cols() == 1, "flow model: t must be an n x 1 column");
  using M = Matrix<FlowScalar>;
  M input(x.rows(), x.cols() + 1);
  input << x.cast<FlowScalar>(), t.cast<FlowScalar>();
  const M head = model.config.wide_head ? M(x.cast<FlowScalar>()) : M();
  return apply(model.net, input, model.config.wide_head ? &head : nullptr).cast<double>();
}

Var<FlowScalar> predict_velocity(Tape<FlowScalar>& tape, FlowModel& model, const Var<FlowScalar>& x,
                                 const Var<FlowScalar>& t) {
  require(x.cols() == model.config.dim, "flow model: input width mismatch");
  const auto input = concat_cols(x, t);
  return forward(tape, model.net, input, model.config.wide_head ? std::optional(x) : std::nullopt);
}

LossTrace train_flow(FlowModel& model, const DataSampler& data, const TimestepSampler& sampler,
                     const FlowTrainConfig& config) {
  tune_allocator();
  validate(sampler);
  require(config.steps >= 0, "train_flow: steps must be >= 0");
  require(config.batch >= 1, "train_flow: batch must be >= 1");
  require(config.trace_every >= 1, "train_flow: trace_every must be >= 1");
  Adam<FlowScalar> adam(model.net.params, AdamConfig{.lr = config.lr});
  Rng rng(config.seed);
  LossTrace trace;
  trace.step_losses.reserve(static_cast<std::size_t>(config.steps));
  double window = 0.0;
  for (int step = 1; step <= config.steps; ++step) {
    const Mat x0 = data(config.batch, rng);
    require(x0.rows() == config.batch && x0.cols() == model.config.dim,
            "train_flow: data sampler returned " + shape_string(x0) + ", expected " +
                shape_string(config.batch, model.config.dim));
    const Mat eps = standard_normal(config.batch, model.config.dim, rng);
    const Mat t = sample_timesteps(sampler, config.batch, rng);

    Tape<FlowScalar> tape;
    const auto xt = tape.constant(interpolate(x0, eps, t).cast<FlowScalar>());
    const auto tv = tape.constant(t.cast<FlowScalar>());
    const auto target = tape.constant(velocity_target(x0, eps).cast<FlowScalar>());
    const auto loss = mse(predict_velocity(tape, model, xt, tv), target);
    model.net.params.zero_grad();
    tape.backward(loss);
    const double value = static_cast<double>(loss.value()(0, 0));
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "train_flow: loss became non-finite at step " << step;
      throw RuntimeFailure(msg.str());
    }
    adam.step(model.net.params);
    if (!model.net.params.all_finite())
      throw RuntimeFailure("train_flow: parameter '" + model.net.params.first_non_finite() +
                           "' became non-finite at step " + std::to_string(step));
    trace.step_losses.push_back(value);
    window += value;
    if (step % config.trace_every == 0) {
      trace.trace_steps.push_back(step);
      trace.trace_losses.push_back(window / config.trace_every);
      window = 0.0;
    }
  }
  return trace;
}

double flow_eval_loss(const FlowModel& model, const DataSampler& data, const TimestepSampler& sampler,
                      Eigen::Index n, std::uint64_t seed) {
  validate(sampler);
  Rng rng(seed);
  const Mat x0 = data(n, rng);
  const Mat eps = standard_normal(n, model.config.dim, rng);
  const Mat t = sample_timesteps(sampler, n, rng);
  const Mat pred = predict_velocity(model, interpolate(x0, eps, t), t);
  return (pred - velocity_target(x0, eps)).squaredNorm() / static_cast<double>(pred.size());
}

VelocityField model_field(const FlowModel& model) {
  return [&model](const Mat& x, double t) { return predict_velocity(model, x, Mat::Constant(x.rows(), 1, t)); };
}

std::vector<double> euler_grid(const EulerConfig& c) {
  require(c.steps >= 1, "euler_sample: steps must be >= 1");
  require(c.shift >= 1.0, "euler_sample: shift must be >= 1");
  require(c.t_min > 0.0 && c.t_min < 1.0, "euler_sample: t_min must lie in (0, 1)");
  const double u_min = unshift_timestep(c.t_min, c.shift);
  std::vector<double> grid(static_cast<std::size_t>(c.steps) + 1);
  for (int k = 0; k <= c.steps; ++k) {
    const double u = 1.0 - (1.0 - u_min) * static_cast<double>(k) / c.steps;
    grid[static_cast<std::size_t>(k)] = shift_timestep(u, c.shift);
  }
  grid.front() = 1.0;
  grid.back() = c.t_min;
  return grid;
}

Mat euler_integrate(const VelocityField& field, Mat x, const EulerConfig& config) {
  const auto grid = euler_grid(config);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    x += (grid[k + 1] - grid[k]) * field(x, grid[k]);
    if (!all_finite(x))
      throw RuntimeFailure("euler_sample: state became non-finite at t = " + std::to_string(grid[k + 1]));
  }
  x -= config.t_min * field(x, config.t_min);
  if (!all_finite(x)) throw RuntimeFailure("euler_sample: final extrapolation produced non-finite state");
  return x;
}

Mat euler_sample(const VelocityField& field, Eigen::Index n, int dim, const EulerConfig& config, std::uint64_t seed) {
  require(n >= 1 && dim >= 1, "euler_sample: n and dim must be >= 1");
  Rng rng(seed);
  return euler_integrate(field, standard_normal(n, dim, rng), config);
}

}  // namespace pslab

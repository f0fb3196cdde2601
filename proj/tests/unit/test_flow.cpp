#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pslab/flow/flow.hpp"
#include "pslab/flow/timestep.hpp"
#include "pslab/oracle/oracle.hpp"
#include "pslab/synth/glyph.hpp"

using namespace pslab;

namespace {

Mat row(std::initializer_list<double> v) {
  Mat m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

DataSampler constant_point(const Mat& p) {
  return [p](Eigen::Index n, Rng&) { return Mat(p.replicate(n, 1)); };
}

}  // namespace

TEST_CASE("interpolation endpoints, midpoint and bounds") {
  const Mat x0 = row({2, 0}), eps = row({0, 2});
  CHECK(interpolate(x0, eps, 0.0) == x0);
  CHECK(interpolate(x0, eps, 1.0) == eps);
  CHECK(interpolate(x0, eps, 0.5) == row({1, 1}));
  CHECK_THROWS_AS(interpolate(x0, eps, 1.5), ConfigError);
  CHECK_THROWS_AS(interpolate(x0, eps, -0.1), ConfigError);
}

TEST_CASE("velocity target and its consistency with interpolation") {
  CHECK(velocity_target(row({1, 1}), row({3, 0})) == row({2, -1}));
  CHECK(velocity_target(row({1, 1}), row({1, 1})).isZero(0.0));
  CHECK_THROWS_AS(velocity_target(row({1}), row({1, 2})), ConfigError);

  Rng rng(1);
  const Mat x0 = standard_normal(5, 3, rng), eps = standard_normal(5, 3, rng);
  const Mat v = velocity_target(x0, eps);
  for (int r = 0; r < 5; ++r) CHECK((velocity_target(x0.row(r), eps.row(r)) - v.row(r)).isZero(0.0));
  for (double t : {0.0, 0.2, 0.7, 1.0})
    CHECK((interpolate(x0, eps, t) + (1.0 - t) * v - eps).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("shift factor anchors") {
  CHECK(shift_factor(16, 2) == 2.0);
  CHECK(std::abs(shift_factor(768, 1) - 6.9282) <= 0.005);
  CHECK(shift_factor(16, 1) == 1.0);
  CHECK_THROWS_AS(shift_factor(0, 1), ConfigError);
  CHECK_THROWS_AS(shift_factor(16, -1), ConfigError);
  CHECK(toy_shift_factor(2) == 1.0);
  CHECK(toy_shift_factor(8) == 1.0);
  CHECK(toy_shift_factor(64) == 2.0);
}

TEST_CASE("shifted timestep: endpoints, identity, substitution, monotonicity, inverse") {
  for (double s : {1.0, 2.0, 6.93}) {
    CHECK(shift_timestep(0.0, s) == 0.0);
    CHECK(shift_timestep(1.0, s) == 1.0);
    double prev = -1.0;
    for (int i = 1; i < 10000; ++i) {
      const double t = i * 1e-4;
      const double ts = shift_timestep(t, s);
      CHECK_MESSAGE(ts > prev, "t=" << t << " s=" << s);
      prev = ts;
      if (s == 1.0) CHECK(ts == t);
      CHECK(std::abs(unshift_timestep(ts, s) - t) <= 1e-12);
    }
  }
  CHECK(std::abs(shift_timestep(0.5, 2.0) - 2.0 / 3.0) <= 1e-15);
}

TEST_CASE("logit-normal sampler: degenerate scale, clamp, and Kolmogorov distance") {
  Rng rng(2);
  const TimestepSampler narrow{.scale = 1e-9};
  CHECK(std::abs(sample_timestep(narrow, rng) - 0.5) <= 1e-6);

  const TimestepSampler wide{.scale = 4.0, .shift = 3.0};
  const Mat w = sample_timesteps(wide, 100000, rng);
  CHECK(w.minCoeff() >= wide.t_min);
  CHECK(w.maxCoeff() <= wide.t_max);

  const TimestepSampler plain{};
  Mat t = sample_timesteps(plain, 1000000, rng);
  std::vector<double> v(t.data(), t.data() + t.size());
  std::sort(v.begin(), v.end());
  double ks = 0.0;
  const double n = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = logit_normal_cdf(v[i], 0.0, 1.0);
    ks = std::max({ks, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  CHECK(ks < 0.005);
  CHECK_THROWS_AS(validate(TimestepSampler{.shift = 0.5}), ConfigError);
}

TEST_CASE("flow model shape and wide head") {
  const auto m = make_flow_model({.dim = 3, .width = 16, .depth = 4, .wide_head = true}, 1);
  CHECK(m.net.spec.input == 4);
  CHECK(m.net.spec.output == 3);
  CHECK(m.net.spec.head_inputs == 3);
  CHECK(m.net.spec.output_layer_inputs() == 16 + 3);
  Rng rng(3);
  const Mat x = standard_normal(5, 3, rng);
  CHECK(predict_velocity(m, x, Mat::Constant(5, 1, 0.5)).cols() == 3);
}

TEST_CASE("zero steps leave the model unchanged; identical seeds give identical traces") {
  auto m = make_flow_model({.dim = 2, .width = 16, .depth = 3}, 4);
  const auto before = m.net.params;
  const DataSampler data = [](Eigen::Index n, Rng& rng) { return sample_glyph_points(n, rng()); };
  train_flow(m, data, {}, {.steps = 0});
  CHECK(m.net.params == before);

  auto run = [&] {
    auto a = make_flow_model({.dim = 2, .width = 16, .depth = 3}, 4);
    return train_flow(a, data, {}, {.steps = 200, .batch = 64, .seed = 9}).step_losses;
  };
  CHECK(run() == run());
}

TEST_CASE("a single-point dataset is fit to loss <= 1e-3") {
  auto m = make_flow_model({.dim = 2, .width = 64, .depth = 4}, 5);
  const auto trace = train_flow(m, constant_point(row({0.7, -0.3})), {}, {.steps = 5000, .batch = 256, .seed = 1});
  REQUIRE(trace.trace_losses.size() == 50);
  CHECK(trace.trace_losses.back() <= 1e-3);
}

TEST_CASE("glyph training loss trends down") {
  auto m = make_flow_model({.dim = 2, .width = 256, .depth = 4}, 6);
  const DataSampler data = [](Eigen::Index n, Rng& rng) { return sample_glyph_points(n, rng()); };
  const auto trace = train_flow(m, data, {}, {.steps = 3000, .batch = 256, .seed = 2});
  const auto& l = trace.step_losses;
  const double lead = std::accumulate(l.begin(), l.begin() + 1000, 0.0) / 1000.0;
  const double trail = std::accumulate(l.end() - 1000, l.end(), 0.0) / 1000.0;
  CHECK(trail < lead);
}

TEST_CASE("divergence aborts training") {
  auto m = make_flow_model({.dim = 2, .width = 8, .depth = 2}, 7);
  const DataSampler bad = [](Eigen::Index n, Rng&) { return Mat(Mat::Constant(n, 2, std::nan(""))); };
  CHECK_THROWS_AS(train_flow(m, bad, {}, {.steps = 5, .batch = 4}), RuntimeFailure);
}

TEST_CASE("Euler grid is uniform in unshifted time and ends at t_min") {
  const EulerConfig cfg{.steps = 10, .shift = 3.0};
  const auto g = euler_grid(cfg);
  REQUIRE(g.size() == 11);
  CHECK(g.front() == 1.0);
  CHECK(std::abs(g.back() - cfg.t_min) <= 1e-15);
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] < g[i - 1]);
  CHECK_THROWS_AS(euler_grid({.steps = 0}), ConfigError);
}

TEST_CASE("Euler with the single-atom oracle recovers the atom for any step count") {
  const Mat atom = row({0.4, -1.2, 2.0});
  const DatasetOracle oracle(atom);
  Rng rng(8);
  const Mat noise = standard_normal(100, 3, rng);
  for (int steps : {1, 10, 50})
    for (double shift : {1.0, 2.0}) {
      const Mat out = euler_integrate(oracle.field(), noise, {.steps = steps, .shift = shift});
      CHECK((out.rowwise() - atom.row(0)).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("symmetric two-point oracle keeps a zero start at zero") {
  const Mat atoms = (Mat(2, 2) << -1.0, 0.5, 1.0, -0.5).finished();
  const DatasetOracle oracle(atoms);
  const Mat out = euler_integrate(oracle.field(), Mat::Zero(1, 2), {});
  CHECK(out.cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("non-finite state aborts sampling") {
  const VelocityField bad = [](const Mat& x, double) { return Mat(Mat::Constant(x.rows(), x.cols(), INFINITY)); };
  CHECK_THROWS_AS(euler_sample(bad, 4, 2, {}, 1), RuntimeFailure);
}

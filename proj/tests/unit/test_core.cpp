#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "pslab/core/adam.hpp"
#include "pslab/core/checkpoint.hpp"
#include "pslab/core/gradcheck.hpp"
#include "pslab/core/mlp.hpp"
#include "pslab/core/tape.hpp"

using namespace pslab;

namespace {

Mat naive_product(const Mat& a, const Mat& b) {
  Mat c = Mat::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

Mat silu_ref(const Mat& x) {
  Mat y = x;
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = x.data()[i] / (1.0 + std::exp(-x.data()[i]));
  return y;
}

}  // namespace

TEST_CASE("matmul identity, dot product and triple-loop agreement") {
  Tape<double> t;
  Mat b(2, 1);
  b << 3, 4;
  CHECK(matmul(t.constant(Mat::Identity(2, 2)), t.constant(b)).value() == b);

  Mat r(1, 2);
  r << 1, 2;
  CHECK(matmul(t.constant(r), t.constant(b)).value()(0, 0) == 11.0);

  Rng rng(1);
  const Mat x = standard_normal(4, 5, rng), y = standard_normal(5, 3, rng);
  const Mat got = matmul(t.constant(x), t.constant(y)).value();
  CHECK((got - naive_product(x, y)).cwiseAbs().maxCoeff() <= 1e-12);

  CHECK_THROWS_AS(matmul(t.constant(x), t.constant(x)), ConfigError);
}

TEST_CASE("forward: zero layer, single affine layer, manual two-layer composition") {
  Rng rng(2);
  auto lin = make_mlp<double>({.input = 3, .width = 0, .depth = 0, .output = 2}, rng);
  const Mat x = standard_normal(4, 3, rng);
  lin.params.value("l0.w").setZero();
  CHECK(apply(lin, x).isZero(0.0));

  lin.params.value("l0.w") = standard_normal(3, 2, rng);
  lin.params.value("l0.b") = standard_normal(1, 2, rng);
  Mat expect = x * lin.params.value("l0.w");
  expect.rowwise() += lin.params.value("l0.b").row(0);
  CHECK((apply(lin, x) - expect).cwiseAbs().maxCoeff() <= 1e-14);

  auto net = make_mlp<double>({.input = 3, .width = 5, .depth = 1, .output = 2}, rng);
  net.params.value("l0.b") = standard_normal(1, 5, rng);
  Mat h = x * net.params.value("l0.w");
  h.rowwise() += net.params.value("l0.b").row(0);
  Mat out = silu_ref(h) * net.params.value("l1.w");
  out.rowwise() += net.params.value("l1.b").row(0);
  Tape<double> t;
  CHECK((forward(t, net, t.constant(x)).value() - out).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((apply(net, x) - out).cwiseAbs().maxCoeff() <= 1e-13);

  CHECK_THROWS_AS(apply(net, Mat(Mat::Zero(4, 2))), ConfigError);
}

TEST_CASE("wide head adds exactly d inputs to the output layer") {
  Rng rng(3);
  auto net = make_mlp<double>({.input = 4, .width = 8, .depth = 2, .output = 3, .head_inputs = 3}, rng);
  CHECK(net.params.value("l2.w").rows() == 8 + 3);
  const Mat x = standard_normal(2, 4, rng), head = standard_normal(2, 3, rng);
  CHECK(apply(net, x, &head).cols() == 3);
  CHECK_THROWS_AS(apply(net, x), ConfigError);
}

TEST_CASE("backward: linear gradient, relu identity region, non-scalar loss") {
  ParamSet<double> p;
  p.add("w", Mat::Constant(1, 1, 0.7));
  {
    Tape<double> t;
    const auto loss = matmul(t.parameter(p, "w"), t.constant(Mat::Constant(1, 1, 3.0)));
    t.backward(loss);
    CHECK(p.grad("w")(0, 0) == 3.0);
  }

  Rng rng(4);
  ParamSet<double> q;
  q.add("W", uniform<double>(3, 4, 0.1, 1.0, rng));
  const Mat x = uniform<double>(5, 3, 0.1, 1.0, rng);
  Mat g_relu, g_lin;
  {
    Tape<double> t;
    t.backward(sum(relu(matmul(t.constant(x), t.parameter(q, "W")))));
    g_relu = q.grad("W");
  }
  q.zero_grad();
  {
    Tape<double> t;
    t.backward(sum(matmul(t.constant(x), t.parameter(q, "W"))));
    g_lin = q.grad("W");
  }
  CHECK(g_relu == g_lin);

  Tape<double> t;
  CHECK_THROWS_AS(t.backward(t.variable(Mat::Ones(2, 1))), ConfigError);
}

TEST_CASE("backward matches second-order central differences (step 1e-5) on a 2-layer MLP") {
  Rng rng(5);
  auto net = make_mlp<double>({.input = 3, .width = 6, .depth = 1, .output = 2}, rng);
  const Mat x = standard_normal(7, 3, rng), y = standard_normal(7, 2, rng);
  Tape<double> t;
  t.backward(mse(forward(t, net, t.constant(x)), t.constant(y)));
  auto loss = [&] {
    const Mat d = apply(net, x) - y;
    return d.squaredNorm() / static_cast<double>(d.size());
  };
  double worst = 0.0;
  for (auto& e : net.params.entries()) {
    for (Eigen::Index i = 0; i < e.value.size(); ++i) {
      double& w = e.value.data()[i];
      const double saved = w;
      w = saved + 1e-5;
      const double up = loss();
      w = saved - 1e-5;
      const double down = loss();
      w = saved;
      worst = std::max(worst, relative_error(e.grad.data()[i], (up - down) / 2e-5));
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("gradcheck helper flags a wrong gradient") {
  ParamSet<double> p;
  p.add("w", Mat::Constant(1, 1, 2.0));
  p.grad("w")(0, 0) = 4.0;  // d/dw w^2 at 2
  auto loss = [&] { return std::pow(p.value("w")(0, 0), 2); };
  CHECK(check_gradients(p, loss).max_rel_error <= 1e-9);
  p.grad("w")(0, 0) = 4.1;
  CHECK(check_gradients(p, loss).max_rel_error > 1e-3);
}

TEST_CASE("adam: first step is -lr*sign(g), zero gradient is a no-op, quadratic descent") {
  ParamSet<double> p;
  Mat w0(1, 3);
  w0 << 0.5, -1.0, 2.0;
  p.add("w", w0);
  Adam<double> opt(p, {.lr = 0.01});
  Mat g(1, 3);
  g << 0.3, -2.0, 1e-3;
  p.grad("w") = g;
  p.entry("w").has_grad = true;
  opt.step(p);
  const Mat delta = p.value("w") - w0;
  CHECK(std::abs(delta(0) + 0.01) <= 1e-6);
  CHECK(std::abs(delta(1) - 0.01) <= 1e-6);
  CHECK(std::abs(delta(2) + 0.01) <= 1e-6);
  CHECK(opt.steps() == 1);

  ParamSet<double> z;
  z.add("w", w0);
  z.entry("w").has_grad = true;
  Adam<double> fresh(z, {.lr = 0.01});
  fresh.step(z);
  CHECK(z.value("w") == w0);

  ParamSet<double> q;
  q.add("w", Mat::Zero(1, 1));
  Adam<double> quad(q, {.lr = 0.1});
  for (int i = 0; i < 100; ++i) {
    Tape<double> t;
    const auto w = t.parameter(q, "w");
    q.zero_grad();
    t.backward(sum(square(add_scalar(w, -3.0))));
    quad.step(q);
  }
  CHECK(std::abs(q.value("w")(0, 0) - 3.0) < 0.1);
  CHECK(quad.steps() == 100);

  ParamSet<double> missing;
  missing.add("w", Mat::Zero(1, 1));
  Adam<double> m(missing, {});
  CHECK_THROWS_AS(m.step(missing), ConfigError);
}

TEST_CASE("detach blocks gradients; clamp passes them only inside the bounds") {
  Tape<double> t;
  Mat v(1, 3);
  v << -2.0, 0.0, 2.0;
  const auto x = t.variable(v);
  t.backward(sum(clamp(x, -1.0, 1.0)) + sum(detach(x)));
  CHECK(x.grad()(0, 0) == 0.0);
  CHECK(x.grad()(0, 1) == 1.0);
  CHECK(x.grad()(0, 2) == 0.0);
}

TEST_CASE("identical seeds give bit-identical forward, backward and updates") {
  auto run = [] {
    Rng rng(9);
    auto net = make_mlp<double>({.input = 2, .width = 16, .depth = 2, .output = 2}, rng);
    Adam<double> opt(net.params, {});
    for (int i = 0; i < 10; ++i) {
      const Mat x = standard_normal(32, 2, rng);
      Tape<double> t;
      net.params.zero_grad();
      t.backward(mse(forward(t, net, t.constant(x)), t.constant(x)));
      opt.step(net.params);
    }
    return net.params;
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint round trip and manifest layout") {
  Rng rng(11);
  auto net = make_mlp<double>({.input = 3, .width = 4, .depth = 2, .output = 2}, rng);
  const auto stem = std::filesystem::temp_directory_path() / "pslab_ckpt_test";
  save_checkpoint(net.params, stem);
  CHECK(std::filesystem::file_size(stem.string() + ".bin") == net.params.scalar_count() * sizeof(double));
  const auto back = load_checkpoint(stem);
  CHECK(back == net.params);

  ParamSet<double> merged;
  append_prefixed(merged, net.params, "enc.");
  CHECK(merged.contains("enc.l0.w"));
  CHECK(extract_prefixed(merged, "enc.") == net.params);
}

TEST_CASE("parameter sets reject duplicate and unknown names") {
  ParamSet<double> p;
  p.add("a", Mat::Zero(1, 1));
  CHECK_THROWS_AS(p.add("a", Mat::Zero(1, 1)), ConfigError);
  CHECK_THROWS_AS(p.value("b"), ConfigError);
}

#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "pslab/core/dense.hpp"
#include "pslab/core/param_set.hpp"
#include "pslab/core/tape.hpp"

namespace pslab {

enum class Activation { silu, relu };

inline std::string to_string(Activation a) { return a == Activation::silu ? "silu" : "relu"; }

inline Activation parse_activation(const std::string& name) {
  if (name == "silu") return Activation::silu;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + name + "' (expected silu or relu)");
}

/// Fully connected network: `depth` hidden layers of `width` units, then a
/// linear output layer. `head_inputs` extra columns may be concatenated to the
/// last hidden layer right before the output projection.
struct MlpSpec {
  int input = 0;
  int width = 0;
  int depth = 0;
  int output = 0;
  int head_inputs = 0;
  Activation activation = Activation::silu;
  double gain = 1.0;

  int output_layer_inputs() const { return (depth > 0 ? width : input) + head_inputs; }
};

inline void validate(const MlpSpec& s) {
  require(s.input > 0 && s.output > 0, "mlp: input and output widths must be positive");
  require(s.depth >= 0, "mlp: depth must be non-negative");
  require(s.depth == 0 || s.width > 0, "mlp: hidden width must be positive");
  require(s.head_inputs >= 0, "mlp: head_inputs must be non-negative");
  require(s.gain > 0.0, "mlp: init gain must be positive");
}

inline std::string layer_name(int layer, const char* what) {
  return "l" + std::to_string(layer) + "." + what;
}

template <typename Scalar>
struct Mlp {
  MlpSpec spec;
  ParamSet<Scalar> params;

  std::string weight(int layer) const { return layer_name(layer, "w"); }
  std::string bias(int layer) const { return layer_name(layer, "b"); }
  int layers() const { return spec.depth + 1; }
};

/// Uniform fan-in initialization: weights ~ U(-a, a), a = gain * sqrt(3 / fan_in)
/// (variance gain^2 / fan_in); biases start at zero.
template <typename Scalar = double>
Mlp<Scalar> make_mlp(const MlpSpec& spec, Rng& rng) {
  validate(spec);
  Mlp<Scalar> net{spec, {}};
  int fan_in = spec.input;
  for (int layer = 0; layer < net.layers(); ++layer) {
    const bool last = layer == spec.depth;
    const int in = last ? spec.output_layer_inputs() : fan_in;
    const int out = last ? spec.output : spec.width;
    const Scalar bound = static_cast<Scalar>(spec.gain * std::sqrt(3.0 / in));
    net.params.add(net.weight(layer), uniform<Scalar>(in, out, -bound, bound, rng));
    net.params.add(net.bias(layer), Matrix<Scalar>::Zero(1, out));
    fan_in = out;
  }
  return net;
}

namespace detail {

template <typename Scalar>
Var<Scalar> activate(const Var<Scalar>& x, Activation a) {
  return a == Activation::silu ? silu(x) : relu(x);
}

template <typename Derived>
auto activate_value(const Eigen::MatrixBase<Derived>& x, Activation a) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> out(x.rows(), x.cols());
  if (a == Activation::silu)
    out = (x.array() / (Scalar(1) + (-x.array()).exp())).matrix();
  else
    out = x.cwiseMax(Scalar(0));
  return out;
}

inline void check_inputs(const MlpSpec& s, Eigen::Index in_cols, Eigen::Index rows, bool has_head,
                         Eigen::Index head_cols, Eigen::Index head_rows) {
  require(in_cols == s.input, "mlp: input width " + std::to_string(in_cols) + " does not match architecture width " +
                                  std::to_string(s.input));
  require(has_head == (s.head_inputs > 0), "mlp: head inputs supplied/omitted inconsistently with architecture");
  if (has_head) {
    require(head_cols == s.head_inputs, "mlp: head input width " + std::to_string(head_cols) + " expected " +
                                            std::to_string(s.head_inputs));
    require(head_rows == rows, "mlp: head input batch size differs from input batch size");
  }
}

}  // namespace detail

/// Records the network on `tape`. When `trainable` is false the weights enter
/// as constants and receive no gradient.
template <typename Scalar>
Var<Scalar> forward(Tape<Scalar>& tape, Mlp<Scalar>& net, const Var<Scalar>& x,
                    const std::optional<Var<Scalar>>& head = std::nullopt, bool trainable = true) {
  detail::check_inputs(net.spec, x.cols(), x.rows(), head.has_value(), head ? head->cols() : 0,
                       head ? head->rows() : 0);
  auto param = [&](const std::string& name) {
    return trainable ? tape.parameter(net.params, name) : tape.constant(net.params.value(name));
  };
  Var<Scalar> h = x;
  for (int layer = 0; layer < net.spec.depth; ++layer)
    h = detail::activate(affine(h, param(net.weight(layer)), param(net.bias(layer))), net.spec.activation);
  if (head) h = concat_cols(h, *head);
  return affine(h, param(net.weight(net.spec.depth)), param(net.bias(net.spec.depth)));
}

/// Tape-free evaluation; identical arithmetic to forward().
template <typename Scalar>
Matrix<Scalar> apply(const Mlp<Scalar>& net, const Matrix<Scalar>& x, const Matrix<Scalar>* head = nullptr) {
  detail::check_inputs(net.spec, x.cols(), x.rows(), head != nullptr, head ? head->cols() : 0,
                       head ? head->rows() : 0);
  Matrix<Scalar> h = x;
  for (int layer = 0; layer < net.spec.depth; ++layer) {
    Matrix<Scalar> z = h * net.params.value(net.weight(layer));
    z.rowwise() += net.params.value(net.bias(layer)).row(0);
    h = detail::activate_value(z, net.spec.activation);
  }
  if (head) {
    Matrix<Scalar> cat(h.rows(), h.cols() + head->cols());
    cat << h, *head;
    h = std::move(cat);
  }
  Matrix<Scalar> out = h * net.params.value(net.weight(net.spec.depth));
  out.rowwise() += net.params.value(net.bias(net.spec.depth)).row(0);
  return out;
}

}  // namespace pslab

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pslab/core/dense.hpp"
#include "pslab/core/param_set.hpp"

namespace pslab {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected adaptive-moment optimizer bound to the layout of one ParamSet.
template <typename Scalar>
class Adam {
 public:
  using Mat = Matrix<Scalar>;

  Adam(const ParamSet<Scalar>& params, AdamConfig config) : config_(config) {
    require(config.lr > 0 && config.beta1 > 0 && config.beta1 < 1 && config.beta2 > 0 && config.beta2 < 1 &&
                config.epsilon > 0,
            "adam: hyperparameters must be positive with betas in (0, 1)");
    for (const auto& e : params.entries()) {
      names_.push_back(e.name);
      m_.push_back(Mat::Zero(e.value.rows(), e.value.cols()));
      v_.push_back(Mat::Zero(e.value.rows(), e.value.cols()));
    }
  }

  /// Applies one update using the gradients currently held in `params`.
  void step(ParamSet<Scalar>& params) {
    require(params.size() == names_.size(), "adam: parameter set does not match optimizer state");
    for (std::size_t i = 0; i < names_.size(); ++i) {
      const auto& e = params.entries()[i];
      require(e.name == names_[i] && e.value.rows() == m_[i].rows() && e.value.cols() == m_[i].cols(),
              "adam: parameter layout changed for '" + names_[i] + "'");
      require(e.has_grad, "adam: missing gradient for parameter '" + e.name + "'");
    }
    ++steps_;
    const Scalar b1 = static_cast<Scalar>(config_.beta1);
    const Scalar b2 = static_cast<Scalar>(config_.beta2);
    const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(steps_));
    const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(steps_));
    const Scalar lr = static_cast<Scalar>(config_.lr);
    const Scalar eps = static_cast<Scalar>(config_.epsilon);
    for (std::size_t i = 0; i < names_.size(); ++i) {
      auto& e = params.entries()[i];
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * e.grad;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * e.grad.cwiseAbs2();
      e.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
  }

  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const Mat& first_moment(std::size_t i) const { return m_[i]; }
  const Mat& second_moment(std::size_t i) const { return v_[i]; }

 private:
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::vector<std::string> names_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
};

}  // namespace pslab

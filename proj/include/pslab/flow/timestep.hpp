#pragma once

#include "pslab/core/dense.hpp"

namespace pslab {

/// Logit-normal timestep distribution with an SNR shift and clamping.
struct TimestepSampler {
  double loc = 0.0;
  double scale = 1.0;
  double shift = 1.0;
  double t_min = 1e-3;
  double t_max = 1.0 - 1e-3;
};

void validate(const TimestepSampler& sampler);

/// sqrt(C_vae * P_vae^2 / (C_base * P_base^2)).
double shift_factor(int channels, int patch, int base_channels = 16, int base_patch = 1);

/// Shift used for a toy space of width d: sqrt(d / 16), never below 1.
double toy_shift_factor(int dim);

/// t' = s t / (1 + (s - 1) t).
double shift_timestep(double t, double s);
/// Inverse of shift_timestep in t.
double unshift_timestep(double t_shifted, double s);

double sample_timestep(const TimestepSampler& sampler, Rng& rng);
/// n x 1 column of independent draws.
Mat sample_timesteps(const TimestepSampler& sampler, Eigen::Index n, Rng& rng);

/// CDF of sigmoid(Normal(loc, scale)) at t in (0, 1), unshifted and unclamped.
double logit_normal_cdf(double t, double loc, double scale);

}  // namespace pslab

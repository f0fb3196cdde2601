#include "pslab/flow/timestep.hpp"

#include <algorithm>
#include <cmath>

namespace pslab {

void validate(const TimestepSampler& s) {
  require(std::isfinite(s.loc), "sampler.loc must be finite");
  require(s.scale > 0.0 && std::isfinite(s.scale), "sampler.scale must be positive");
  require(s.shift >= 1.0 && std::isfinite(s.shift), "sampler.shift must be >= 1");
  require(s.t_min > 0.0 && s.t_min < s.t_max && s.t_max < 1.0, "sampler clamp must satisfy 0 < t_min < t_max < 1");
}

double shift_factor(int channels, int patch, int base_channels, int base_patch) {
  require(channels > 0 && patch > 0 && base_channels > 0 && base_patch > 0,
          "shift_factor: channel and patch sizes must be positive");
  const double num = static_cast<double>(channels) * patch * patch;
  const double den = static_cast<double>(base_channels) * base_patch * base_patch;
  return std::sqrt(num / den);
}

double toy_shift_factor(int dim) {
  require(dim > 0, "toy_shift_factor: dimension must be positive");
  return std::max(1.0, shift_factor(dim, 1));
}

double shift_timestep(double t, double s) {
  require(t >= 0.0 && t <= 1.0, "shift_timestep: t must lie in [0, 1]");
  require(s >= 1.0, "shift_timestep: shift must be >= 1");
  return s * t / (1.0 + (s - 1.0) * t);
}

double unshift_timestep(double t_shifted, double s) {
  require(t_shifted >= 0.0 && t_shifted <= 1.0, "unshift_timestep: t must lie in [0, 1]");
  require(s >= 1.0, "unshift_timestep: shift must be >= 1");
  return t_shifted / (s - (s - 1.0) * t_shifted);
}

double sample_timestep(const TimestepSampler& s, Rng& rng) {
  std::normal_distribution<double> normal(s.loc, s.scale);
  const double u = normal(rng);
  const double t = 1.0 / (1.0 + std::exp(-u));
  const double shifted = s.shift * t / (1.0 + (s.shift - 1.0) * t);
  return std::clamp(shifted, s.t_min, s.t_max);
}

Mat sample_timesteps(const TimestepSampler& s, Eigen::Index n, Rng& rng) {
  Mat t(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) t(i, 0) = sample_timestep(s, rng);
  return t;
}

double logit_normal_cdf(double t, double loc, double scale) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double logit = std::log(t / (1.0 - t));
  return 0.5 * std::erfc(-(logit - loc) / (scale * std::sqrt(2.0)));
}

}  // namespace pslab

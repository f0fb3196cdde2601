#pragma once

#include <cstdint>

#include "pslab/core/mlp.hpp"

namespace pslab {

struct RepresentationConfig {
  int feature_dim = 64;   // d_h
  int width = 128;
  int depth = 3;
  bool lossy = false;
  int lost_rank = -1;     // k; -1 means feature_dim / 8
  Activation activation = Activation::silu;
  int calibration_samples = 4096;

  int resolved_lost_rank() const { return lossy ? (lost_rank < 0 ? feature_dim / 8 : lost_rank) : 0; }
};

/// Frozen stand-in for a pretrained encoder: an MLP R^2 -> R^{d_h} with random
/// seeded weights whose output is rescaled to unit RMS over glyph samples.
/// In lossy mode the final layer is projected off k random output directions.
class RepresentationMap {
 public:
  const RepresentationConfig& config() const { return config_; }
  const Mlp<double>& network() const { return net_; }
  int feature_dim() const { return config_.feature_dim; }
  /// d_h x k orthonormal directions removed from the output (empty unless lossy).
  const Mat& lost_directions() const { return lost_; }
  double calibration_scale() const { return calibration_scale_; }

 private:
  friend RepresentationMap make_representation_map(const RepresentationConfig&, std::uint64_t);
  RepresentationConfig config_;
  Mlp<double> net_;
  Mat lost_;
  double calibration_scale_ = 1.0;
};

RepresentationMap make_representation_map(const RepresentationConfig& config, std::uint64_t seed);

/// Features for a batch of pixels (n x 2 -> n x d_h).
Mat rep_encode(const RepresentationMap& map, const Mat& pixels);

}  // namespace pslab

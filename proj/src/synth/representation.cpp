#include "pslab/synth/representation.hpp"

#include <cmath>

#include "pslab/synth/embedding.hpp"
#include "pslab/synth/glyph.hpp"

namespace pslab {

RepresentationMap make_representation_map(const RepresentationConfig& config, std::uint64_t seed) {
  require(config.feature_dim >= 2, "representation map: feature_dim must be >= 2");
  require(config.calibration_samples >= 1, "representation map: calibration_samples must be >= 1");
  const int k = config.resolved_lost_rank();
  require(k >= 0 && k < config.feature_dim, "representation map: lost_rank must be in [0, feature_dim)");

  RepresentationMap map;
  map.config_ = config;
  Rng rng(derive_seed(seed, 0));
  map.net_ = make_mlp<double>({.input = 2,
                               .width = config.width,
                               .depth = config.depth,
                               .output = config.feature_dim,
                               .activation = config.activation},
                              rng);
  auto& w = map.net_.params.value(map.net_.weight(config.depth));
  auto& b = map.net_.params.value(map.net_.bias(config.depth));
  if (k > 0) {
    map.lost_ = OrthonormalEmbedding::random(config.feature_dim, k, derive_seed(seed, 1)).matrix();
    const Mat keep = Mat::Identity(config.feature_dim, config.feature_dim) - map.lost_ * map.lost_.transpose();
    w = w * keep;
    b = b * keep;
  } else {
    map.lost_ = Mat(config.feature_dim, 0);
  }
  const Mat calib = sample_glyph_points(config.calibration_samples, derive_seed(seed, 2));
  const Mat features = apply(map.net_, calib);
  const double rms = std::sqrt(features.squaredNorm() / static_cast<double>(features.size()));
  require(rms > 0.0, "representation map: degenerate calibration features");
  map.calibration_scale_ = 1.0 / rms;
  w *= map.calibration_scale_;
  b *= map.calibration_scale_;
  return map;
}

Mat rep_encode(const RepresentationMap& map, const Mat& pixels) {
  require(pixels.cols() == 2, "rep_encode: pixels must be n x 2");
  return apply(map.network(), pixels);
}

}  // namespace pslab

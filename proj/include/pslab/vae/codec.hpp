#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pslab/core/mlp.hpp"
#include "pslab/synth/glyph.hpp"
#include "pslab/synth/representation.hpp"

namespace pslab {

struct CodecConfig {
  RepresentationConfig representation;
  int latent_dim = 2;  // d_l
  int width = 128;     // semantic encoder/decoder hidden width
  int depth = 3;       // semantic encoder/decoder hidden layers
  int pixel_width = 128;
  int pixel_depth = 3;
  Activation activation = Activation::silu;
  double logvar_min = -12.0;
  double logvar_max = 6.0;
};

/// Loss weights. The semantic term combines MSE and (1 - cosine) with equal weight.
struct LossBundle {
  double semantic = 1.0;  // lambda_s
  double pixel = 0.1;     // lambda_p
  double kl = 1e-4;       // lambda_kl
};

void validate(const LossBundle& weights);

/// Toy semantic VAE on top of a representation map.
///
/// The frozen map is fixed at construction. The working map starts as a copy
/// and is only trained in stage 2.
class LatentCodec {
 public:
  LatentCodec(const CodecConfig& config, std::uint64_t seed);

  const CodecConfig& config() const { return config_; }
  int feature_dim() const { return config_.representation.feature_dim; }
  int latent_dim() const { return config_.latent_dim; }

  const RepresentationMap& frozen() const { return frozen_; }

  Mlp<double> working;           // f'_h, trainable copy of the representation network
  Mlp<double> semantic_encoder;  // E_s: d_h -> (mu, logvar)
  Mlp<double> semantic_decoder;  // D_s: d_l -> d_h
  Mlp<double> pixel_decoder;     // D_p: d_l -> 2

 private:
  CodecConfig config_;
  const RepresentationMap frozen_;
};

struct Encoded {
  Mat latent;
  Mat mu;
  Mat logvar;  // clamped
};

enum class EncodeMode { sample, mean };

/// Features -> posterior parameters and a latent (reparameterized sample, or mu).
Encoded encode(const LatentCodec& codec, const Mat& features, EncodeMode mode, std::uint64_t seed = 0);

/// Working-map features for pixels.
Mat working_features(const LatentCodec& codec, const Mat& pixels);
/// Frozen-map features for pixels.
Mat frozen_features(const LatentCodec& codec, const Mat& pixels);

/// D_p applied row-wise.
Mat decode_pipeline(const LatentCodec& codec, const Mat& latent);

/// Batch mean of sum_j 0.5 (mu^2 + exp(logvar) - 1 - logvar).
double kl_loss(const Mat& mu, const Mat& logvar);
Var<double> kl_loss(const Var<double>& mu, const Var<double>& logvar);

struct SemanticLossValue {
  double total = 0.0;
  double mse = 0.0;
  double cosine = 0.0;      // mean (1 - cos) over rows with non-zero target
  int skipped_rows = 0;     // rows whose target has zero norm
};

SemanticLossValue semantic_loss(const Mat& reconstructed, const Mat& target);
Var<double> semantic_loss(const Var<double>& reconstructed, const Var<double>& target);

double pixel_loss(const Mat& decoded, const Mat& target);

enum class Stage { one = 1, two = 2 };

/// Builds the stage objective on `tape` for a pixel batch; samples the
/// reparameterization noise from `rng`. Gradients land in the codec networks
/// that the stage trains.
Var<double> stage_objective(Tape<double>& tape, LatentCodec& codec, const Mat& pixels, const LossBundle& weights,
                            Stage stage, Rng& rng);

using PixelSampler = std::function<Mat(Eigen::Index n, Rng& rng)>;

/// Uniform glyph pixels.
PixelSampler glyph_pixels();

struct CodecTrainConfig {
  int steps = 4000;
  int batch = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int trace_every = 100;
};

struct CodecTrace {
  std::vector<int> trace_steps;
  std::vector<double> trace_losses;
};

/// Stage 1: E_s and D_s on the semantic + KL objective with the representation
/// map frozen; D_p learns from the detached latent.
CodecTrace train_stage1(LatentCodec& codec, const PixelSampler& data, const LossBundle& weights,
                        const CodecTrainConfig& config);

/// Stage 2: everything trainable, pixel loss flows back into E_s and the
/// working map, semantic terms anchor f'_h and D_s output to the frozen map.
CodecTrace train_stage2(LatentCodec& codec, const PixelSampler& data, const LossBundle& weights,
                        const CodecTrainConfig& config);

struct CodecEval {
  double pixel_mse = 0.0;      // D_p(mu) vs pixels
  double semantic_loss = 0.0;  // D_s(mu) vs frozen features
  double kl = 0.0;
  double drift = 0.0;          // semantic_loss(working features, frozen features)
};

CodecEval evaluate(const LatentCodec& codec, const Mat& pixels);

/// Pixel decoder trained directly on fixed features (RAE analog and shortcut retraining).
struct FeatureDecoder {
  Mlp<double> net;
};

FeatureDecoder train_feature_decoder(const std::function<Mat(const Mat& pixels)>& features, int feature_dim,
                                     const PixelSampler& data, const CodecConfig& arch,
                                     const CodecTrainConfig& config);
Mat decode_features(const FeatureDecoder& decoder, const Mat& features);

struct ProbeResult {
  double accuracy = 0.0;
  int train_count = 0;
  int test_count = 0;
};

/// Logistic P-vs-S classifier on an 80/20 split; reports held-out accuracy.
/// The split is decided per point from a hash of its coordinates and label,
/// so duplicated points always land on the same side.
ProbeResult semantic_probe(const Mat& latents, const std::vector<Letter>& labels);

struct ShortcutConfig {
  int top_k = 3;
  CodecTrainConfig hd_training{};     // working map + full-width decoder run
  CodecTrainConfig decoder_training{};  // both retrained decoders
  int eval_samples = 8192;
};

struct ShortcutReport {
  int feature_dim = 0;
  int top_k = 0;
  std::vector<int> channels;           // selected, ascending
  std::vector<double> channel_deviation;
  double hd_pixel_mse = 0.0;           // decoder trained jointly with the working map
  double drift = 0.0;                  // semantic loss of working vs frozen after the run
  double topk_mse = 0.0;
  double full_mse = 0.0;
  double ratio = 0.0;                  // topk_mse / full_mse
};

/// High-dimensional detail-enrichment run, then retrains decoders on the
/// top-k deviating channels and on all channels.
ShortcutReport shortcut_diagnostic(LatentCodec& codec, const PixelSampler& data, const LossBundle& weights,
                                   const ShortcutConfig& config);

/// Ranks channels by mean |working - frozen| and returns the top k indices in ascending order.
std::vector<int> top_deviating_channels(const Mat& working, const Mat& frozen, int k,
                                        std::vector<double>* deviation = nullptr);

}  // namespace pslab

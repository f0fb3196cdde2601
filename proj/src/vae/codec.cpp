#include "pslab/vae/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "pslab/core/adam.hpp"
#include "pslab/core/allocator.hpp"

namespace pslab {

void validate(const LossBundle& w) {
  require(std::isfinite(w.semantic) && w.semantic >= 0.0, "loss weights: semantic weight must be >= 0");
  require(std::isfinite(w.pixel) && w.pixel >= 0.0, "loss weights: pixel weight must be >= 0");
  require(std::isfinite(w.kl) && w.kl >= 0.0, "loss weights: kl weight must be >= 0");
}

namespace {

void validate(const CodecConfig& c) {
  require(c.latent_dim >= 1, "codec: latent_dim must be >= 1");
  require(c.latent_dim < c.representation.feature_dim, "codec: latent_dim must be below feature_dim");
  require(c.width >= 1 && c.depth >= 1, "codec: semantic width and depth must be >= 1");
  require(c.pixel_width >= 1 && c.pixel_depth >= 1, "codec: pixel width and depth must be >= 1");
  require(c.logvar_min < c.logvar_max, "codec: logvar_min must be below logvar_max");
}

void validate(const CodecTrainConfig& c) {
  require(c.steps >= 0, "codec training: steps must be >= 0");
  require(c.batch >= 1, "codec training: batch must be >= 1");
  require(c.lr > 0.0, "codec training: lr must be positive");
  require(c.trace_every >= 1, "codec training: trace_every must be >= 1");
}

Mlp<double> make_net(int in, int width, int depth, int out, Activation a, Rng& rng) {
  return make_mlp<double>({.input = in, .width = width, .depth = depth, .output = out, .activation = a}, rng);
}

struct Posterior {
  Var<double> mu;
  Var<double> logvar;
  Var<double> latent;
};

Posterior posterior(Tape<double>& tape, LatentCodec& codec, const Var<double>& features, Rng& rng) {
  const int d = codec.latent_dim();
  const auto& c = codec.config();
  const auto stats = forward(tape, codec.semantic_encoder, features);
  const auto mu = slice_cols(stats, 0, d);
  const auto logvar = clamp(slice_cols(stats, d, d), c.logvar_min, c.logvar_max);
  const auto eps = tape.constant(standard_normal(features.rows(), d, rng));
  return {mu, logvar, mu + hadamard(exp(scale(logvar, 0.5)), eps)};
}

void check_pixels(const Mat& pixels, const char* who) {
  require(pixels.cols() == 2, std::string(who) + ": pixels must be n x 2");
  require(pixels.rows() >= 1, std::string(who) + ": empty pixel batch");
}

Mat sample_batch(const PixelSampler& data, int batch, Rng& rng, const char* who) {
  Mat pixels = data(batch, rng);
  require(pixels.rows() == batch && pixels.cols() == 2,
          std::string(who) + ": data sampler returned " + shape_string(pixels) + ", expected " +
              shape_string(batch, 2));
  return pixels;
}

CodecTrace run_stage(LatentCodec& codec, const PixelSampler& data, const LossBundle& weights, Stage stage,
                     const CodecTrainConfig& config) {
  tune_allocator();
  validate(weights);
  validate(config);
  std::vector<ParamSet<double>*> sets{&codec.semantic_encoder.params, &codec.semantic_decoder.params,
                                      &codec.pixel_decoder.params};
  if (stage == Stage::two) sets.push_back(&codec.working.params);
  std::vector<Adam<double>> opts;
  for (auto* p : sets) opts.emplace_back(*p, AdamConfig{.lr = config.lr});

  const char* who = stage == Stage::one ? "train_stage1" : "train_stage2";
  Rng rng(config.seed);
  CodecTrace trace;
  double window = 0.0;
  for (int step = 1; step <= config.steps; ++step) {
    const Mat pixels = sample_batch(data, config.batch, rng, who);
    Tape<double> tape;
    const auto loss = stage_objective(tape, codec, pixels, weights, stage, rng);
    for (auto* p : sets) p->zero_grad();
    tape.backward(loss);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value))
      throw RuntimeFailure(std::string(who) + ": loss became non-finite at step " + std::to_string(step));
    for (std::size_t i = 0; i < sets.size(); ++i) {
      opts[i].step(*sets[i]);
      if (!sets[i]->all_finite())
        throw RuntimeFailure(std::string(who) + ": parameter '" + sets[i]->first_non_finite() +
                             "' became non-finite at step " + std::to_string(step));
    }
    window += value;
    if (step % config.trace_every == 0) {
      trace.trace_steps.push_back(step);
      trace.trace_losses.push_back(window / config.trace_every);
      window = 0.0;
    }
  }
  return trace;
}

Mat select_columns(const Mat& m, const std::vector<int>& cols) {
  Mat out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

}  // namespace

LatentCodec::LatentCodec(const CodecConfig& config, std::uint64_t seed)
    : config_((validate(config), config)),
      frozen_(make_representation_map(config.representation, derive_seed(seed, 0))) {
  working = frozen_.network();
  Rng rng(derive_seed(seed, 1));
  const int dh = config.representation.feature_dim;
  semantic_encoder = make_net(dh, config.width, config.depth, 2 * config.latent_dim, config.activation, rng);
  semantic_decoder = make_net(config.latent_dim, config.width, config.depth, dh, config.activation, rng);
  pixel_decoder = make_net(config.latent_dim, config.pixel_width, config.pixel_depth, 2, config.activation, rng);
}

Encoded encode(const LatentCodec& codec, const Mat& features, EncodeMode mode, std::uint64_t seed) {
  require(features.cols() == codec.feature_dim(), "encode: feature width " + std::to_string(features.cols()) +
                                                      " expected " + std::to_string(codec.feature_dim()));
  const int d = codec.latent_dim();
  const Mat stats = apply(codec.semantic_encoder, features);
  Encoded out;
  out.mu = stats.leftCols(d);
  out.logvar = stats.rightCols(d).cwiseMax(codec.config().logvar_min).cwiseMin(codec.config().logvar_max);
  if (mode == EncodeMode::mean) {
    out.latent = out.mu;
  } else {
    Rng rng(seed);
    const Mat eps = standard_normal(features.rows(), d, rng);
    out.latent = out.mu + ((0.5 * out.logvar).array().exp() * eps.array()).matrix();
  }
  return out;
}

Mat working_features(const LatentCodec& codec, const Mat& pixels) {
  check_pixels(pixels, "working_features");
  return apply(codec.working, pixels);
}

Mat frozen_features(const LatentCodec& codec, const Mat& pixels) {
  check_pixels(pixels, "frozen_features");
  return rep_encode(codec.frozen(), pixels);
}

Mat decode_pipeline(const LatentCodec& codec, const Mat& latent) {
  require(latent.cols() == codec.latent_dim(), "decode_pipeline: latent width " + std::to_string(latent.cols()) +
                                                   " expected " + std::to_string(codec.latent_dim()));
  return apply(codec.pixel_decoder, latent);
}

double kl_loss(const Mat& mu, const Mat& logvar) {
  require(mu.rows() == logvar.rows() && mu.cols() == logvar.cols(), "kl_loss: shape mismatch");
  require(mu.rows() >= 1, "kl_loss: empty batch");
  const double total = 0.5 * (mu.array().square() + logvar.array().exp() - 1.0 - logvar.array()).sum();
  return total / static_cast<double>(mu.rows());
}

Var<double> kl_loss(const Var<double>& mu, const Var<double>& logvar) {
  require(mu.rows() == logvar.rows() && mu.cols() == logvar.cols(), "kl_loss: shape mismatch");
  const double n = static_cast<double>(mu.rows());
  const auto inner = sum(square(mu) + exp(logvar) - logvar);
  return add_scalar(scale(inner, 0.5 / n), -0.5 * static_cast<double>(mu.cols()));
}

SemanticLossValue semantic_loss(const Mat& reconstructed, const Mat& target) {
  require(reconstructed.rows() == target.rows() && reconstructed.cols() == target.cols(),
          "semantic_loss: shape mismatch");
  require(target.size() > 0, "semantic_loss: empty batch");
  SemanticLossValue out;
  out.mse = (reconstructed - target).squaredNorm() / static_cast<double>(target.size());
  double cos_sum = 0.0;
  int valid = 0;
  for (Eigen::Index i = 0; i < target.rows(); ++i) {
    const double nt = target.row(i).norm();
    if (nt == 0.0) {
      ++out.skipped_rows;
      continue;
    }
    ++valid;
    const double nr = reconstructed.row(i).norm();
    cos_sum += nr > 0.0 ? reconstructed.row(i).dot(target.row(i)) / (nr * nt) : 0.0;
  }
  out.cosine = valid > 0 ? 1.0 - cos_sum / valid : 0.0;
  out.total = out.mse + out.cosine;
  return out;
}

Var<double> semantic_loss(const Var<double>& reconstructed, const Var<double>& target) {
  const auto err = mse(reconstructed, target);
  const auto valid = (target.value().rowwise().norm().array() > 0.0).count();
  if (valid == 0) return err;
  const auto cos = row_cosine(reconstructed, target);
  return err + add_scalar(scale(sum(cos), -1.0 / static_cast<double>(valid)), 1.0);
}

double pixel_loss(const Mat& decoded, const Mat& target) {
  require(decoded.rows() == target.rows() && decoded.cols() == target.cols(), "pixel_loss: shape mismatch");
  require(target.size() > 0, "pixel_loss: empty batch");
  return (decoded - target).squaredNorm() / static_cast<double>(target.size());
}

Var<double> stage_objective(Tape<double>& tape, LatentCodec& codec, const Mat& pixels, const LossBundle& weights,
                            Stage stage, Rng& rng) {
  check_pixels(pixels, "stage_objective");
  validate(weights);
  const auto px = tape.constant(pixels);
  const auto f0 = tape.constant(frozen_features(codec, pixels));
  if (stage == Stage::one) {
    const auto post = posterior(tape, codec, f0, rng);
    const auto sem = semantic_loss(forward(tape, codec.semantic_decoder, post.latent), f0);
    const auto pix = mse(forward(tape, codec.pixel_decoder, detach(post.latent)), px);
    return weights.semantic * sem + weights.kl * kl_loss(post.mu, post.logvar) + weights.pixel * pix;
  }
  const auto fw = forward(tape, codec.working, px);
  const auto post = posterior(tape, codec, fw, rng);
  const auto pix = mse(forward(tape, codec.pixel_decoder, post.latent), px);
  const auto sem = semantic_loss(fw, f0) + semantic_loss(forward(tape, codec.semantic_decoder, post.latent), f0);
  return weights.pixel * pix + weights.semantic * sem + weights.kl * kl_loss(post.mu, post.logvar);
}

PixelSampler glyph_pixels() {
  return [](Eigen::Index n, Rng& rng) { return sample_glyph_points(n, rng()); };
}

CodecTrace train_stage1(LatentCodec& codec, const PixelSampler& data, const LossBundle& weights,
                        const CodecTrainConfig& config) {
  return run_stage(codec, data, weights, Stage::one, config);
}

CodecTrace train_stage2(LatentCodec& codec, const PixelSampler& data, const LossBundle& weights,
                        const CodecTrainConfig& config) {
  return run_stage(codec, data, weights, Stage::two, config);
}

CodecEval evaluate(const LatentCodec& codec, const Mat& pixels) {
  check_pixels(pixels, "evaluate");
  const Mat f0 = frozen_features(codec, pixels);
  const Mat fw = working_features(codec, pixels);
  const Encoded enc = encode(codec, fw, EncodeMode::mean);
  CodecEval out;
  out.pixel_mse = pixel_loss(decode_pipeline(codec, enc.mu), pixels);
  out.semantic_loss = semantic_loss(apply(codec.semantic_decoder, enc.mu), f0).total;
  out.kl = kl_loss(enc.mu, enc.logvar);
  out.drift = semantic_loss(fw, f0).total;
  return out;
}

FeatureDecoder train_feature_decoder(const std::function<Mat(const Mat& pixels)>& features, int feature_dim,
                                     const PixelSampler& data, const CodecConfig& arch,
                                     const CodecTrainConfig& config) {
  tune_allocator();
  validate(config);
  require(feature_dim >= 1, "feature decoder: feature_dim must be >= 1");
  Rng init(derive_seed(config.seed, 1));
  FeatureDecoder dec{make_net(feature_dim, arch.pixel_width, arch.pixel_depth, 2, arch.activation, init)};
  Adam<double> adam(dec.net.params, AdamConfig{.lr = config.lr});
  Rng rng(config.seed);
  for (int step = 1; step <= config.steps; ++step) {
    const Mat pixels = sample_batch(data, config.batch, rng, "feature decoder");
    const Mat f = features(pixels);
    require(f.rows() == pixels.rows() && f.cols() == feature_dim, "feature decoder: feature map returned " +
                                                                      shape_string(f) + ", expected " +
                                                                      shape_string(pixels.rows(), feature_dim));
    Tape<double> tape;
    const auto loss = mse(forward(tape, dec.net, tape.constant(f)), tape.constant(pixels));
    dec.net.params.zero_grad();
    tape.backward(loss);
    if (!std::isfinite(loss.value()(0, 0)))
      throw RuntimeFailure("feature decoder: loss became non-finite at step " + std::to_string(step));
    adam.step(dec.net.params);
  }
  return dec;
}

Mat decode_features(const FeatureDecoder& decoder, const Mat& features) { return apply(decoder.net, features); }

ProbeResult semantic_probe(const Mat& latents, const std::vector<Letter>& labels) {
  require(static_cast<std::size_t>(latents.rows()) == labels.size(), "semantic_probe: label count mismatch");
  require(latents.cols() >= 1, "semantic_probe: latents must have at least one column");
  const auto s_count = std::count(labels.begin(), labels.end(), Letter::S);
  require(s_count > 0 && s_count < static_cast<long>(labels.size()),
          "semantic_probe: labels must contain both P and S");

  std::vector<Eigen::Index> train, test;
  for (Eigen::Index i = 0; i < latents.rows(); ++i) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* p, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t k = 0; k < n; ++k) h = (h ^ b[k]) * 1099511628211ULL;
    };
    for (Eigen::Index j = 0; j < latents.cols(); ++j) {
      const double v = latents(i, j) == 0.0 ? 0.0 : latents(i, j);
      mix(&v, sizeof v);
    }
    const auto label = static_cast<std::uint8_t>(labels[static_cast<std::size_t>(i)]);
    mix(&label, 1);
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    (h % 5 == 0 ? test : train).push_back(i);
  }
  require(!test.empty() && !train.empty(), "semantic_probe: split left an empty side");

  const Eigen::Index d = latents.cols();
  Mat x(static_cast<Eigen::Index>(train.size()), d);
  Vec y(static_cast<Eigen::Index>(train.size()));
  for (std::size_t r = 0; r < train.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = latents.row(train[r]);
    y(static_cast<Eigen::Index>(r)) = labels[static_cast<std::size_t>(train[r])] == Letter::S ? 1.0 : 0.0;
  }
  require(y.sum() > 0.0 && y.sum() < static_cast<double>(y.size()),
          "semantic_probe: training split contains a single class");
  const RowVec mean = x.colwise().mean();
  RowVec sd = ((x.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
  for (Eigen::Index j = 0; j < d; ++j)
    if (!(sd(j) > 0.0)) sd(j) = 1.0;
  auto design = [&](const Mat& m) {
    Mat out(m.rows(), d + 1);
    out.leftCols(d) = ((m.rowwise() - mean).array().rowwise() / sd.array()).matrix();
    out.col(d).setOnes();
    return out;
  };
  const Mat a = design(x);
  const double ridge = 1e-3 * static_cast<double>(a.rows());
  Vec w = Vec::Zero(d + 1);
  for (int iter = 0; iter < 100; ++iter) {
    const Vec p = (1.0 + (-(a * w).array()).exp()).inverse().matrix();
    Vec grad = a.transpose() * (p - y);
    grad.head(d) += ridge * w.head(d);
    const Vec curv = (p.array() * (1.0 - p.array())).matrix();
    Mat hess = a.transpose() * curv.asDiagonal() * a;
    hess.topLeftCorner(d, d).diagonal().array() += ridge;
    hess.diagonal().array() += 1e-12;
    const Vec delta = hess.ldlt().solve(grad);
    w -= delta;
    if (delta.norm() < 1e-10 * (1.0 + w.norm())) break;
  }

  Mat xt(static_cast<Eigen::Index>(test.size()), d);
  for (std::size_t r = 0; r < test.size(); ++r) xt.row(static_cast<Eigen::Index>(r)) = latents.row(test[r]);
  const Vec score = design(xt) * w;
  int correct = 0;
  for (std::size_t r = 0; r < test.size(); ++r) {
    const bool predict_s = score(static_cast<Eigen::Index>(r)) > 0.0;
    correct += predict_s == (labels[static_cast<std::size_t>(test[r])] == Letter::S);
  }
  return {static_cast<double>(correct) / static_cast<double>(test.size()), static_cast<int>(train.size()),
          static_cast<int>(test.size())};
}

std::vector<int> top_deviating_channels(const Mat& working, const Mat& frozen, int k, std::vector<double>* deviation) {
  require(working.rows() == frozen.rows() && working.cols() == frozen.cols(), "top channels: shape mismatch");
  require(k >= 1 && k <= working.cols(), "top channels: k must lie in [1, feature_dim]");
  const RowVec dev = (working - frozen).cwiseAbs().colwise().mean();
  std::vector<int> order(static_cast<std::size_t>(working.cols()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&dev](int a, int b) { return dev(a) > dev(b); });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  if (deviation) deviation->assign(dev.data(), dev.data() + dev.size());
  return order;
}

ShortcutReport shortcut_diagnostic(LatentCodec& codec, const PixelSampler& data, const LossBundle& weights,
                                   const ShortcutConfig& config) {
  tune_allocator();
  validate(weights);
  validate(config.hd_training);
  const int dh = codec.feature_dim();
  require(config.top_k >= 1 && config.top_k <= dh, "shortcut: top_k must lie in [1, feature_dim]");
  require(config.eval_samples >= 1, "shortcut: eval_samples must be >= 1");

  // Working map trained jointly with a decoder that reads every channel.
  Rng init(derive_seed(config.hd_training.seed, 1));
  auto hd = make_net(dh, codec.config().pixel_width, codec.config().pixel_depth, 2, codec.config().activation, init);
  Adam<double> opt_map(codec.working.params, AdamConfig{.lr = config.hd_training.lr});
  Adam<double> opt_dec(hd.params, AdamConfig{.lr = config.hd_training.lr});
  Rng rng(config.hd_training.seed);
  for (int step = 1; step <= config.hd_training.steps; ++step) {
    const Mat pixels = sample_batch(data, config.hd_training.batch, rng, "shortcut");
    Tape<double> tape;
    const auto px = tape.constant(pixels);
    const auto f0 = tape.constant(frozen_features(codec, pixels));
    const auto fw = forward(tape, codec.working, px);
    const auto loss = weights.pixel * mse(forward(tape, hd, fw), px) + weights.semantic * semantic_loss(fw, f0);
    codec.working.params.zero_grad();
    hd.params.zero_grad();
    tape.backward(loss);
    if (!std::isfinite(loss.value()(0, 0)))
      throw RuntimeFailure("shortcut: loss became non-finite at step " + std::to_string(step));
    opt_map.step(codec.working.params);
    opt_dec.step(hd.params);
  }

  ShortcutReport report;
  report.feature_dim = dh;
  report.top_k = config.top_k;
  const Mat eval = sample_glyph_points(config.eval_samples, derive_seed(config.hd_training.seed, 2));
  const Mat fw = working_features(codec, eval);
  const Mat f0 = frozen_features(codec, eval);
  report.hd_pixel_mse = pixel_loss(apply(hd, fw), eval);
  report.drift = semantic_loss(fw, f0).total;
  report.channels = top_deviating_channels(fw, f0, config.top_k, &report.channel_deviation);

  const auto& working = codec.working;
  const auto channels = report.channels;
  const auto full = train_feature_decoder([&working](const Mat& p) { return apply(working, p); }, dh, data,
                                          codec.config(), config.decoder_training);
  const auto topk = train_feature_decoder(
      [&working, &channels](const Mat& p) { return select_columns(apply(working, p), channels); }, config.top_k,
      data, codec.config(), config.decoder_training);
  report.full_mse = pixel_loss(decode_features(full, fw), eval);
  report.topk_mse = pixel_loss(decode_features(topk, select_columns(fw, channels)), eval);
  require(report.full_mse > 0.0, "shortcut: full-width decoder reached zero error");
  report.ratio = report.topk_mse / report.full_mse;
  return report;
}

}  // namespace pslab

#include "pslab/lab/recipes.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <thread>

#include "pslab/core/allocator.hpp"
#include "pslab/flow/flow.hpp"
#include "pslab/lab/checks.hpp"
#include "pslab/lab/io.hpp"
#include "pslab/metrics/metrics.hpp"
#include "pslab/oracle/oracle.hpp"
#include "pslab/synth/embedding.hpp"
#include "pslab/synth/glyph.hpp"
#include "pslab/vae/codec.hpp"

namespace pslab::lab {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  require(jobs >= 1, "jobs must be >= 1");
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(std::max(n, 0)));
  if (jobs == 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex m;
  int next = 0;
  auto worker = [&] {
    for (;;) {
      int i;
      {
        std::lock_guard lock(m);
        if (next >= n) return;
        i = next++;
      }
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (int t = 0; t < std::min(jobs, n); ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct Context {
  const ExperimentSpec& spec;
  const RunOptions& options;
  fs::path dir;
  std::string hash;
  std::mutex log_mutex;

  void log(const std::string& msg) {
    if (options.log == nullptr) return;
    std::lock_guard lock(log_mutex);
    *options.log << "[" << spec.recipe << "] " << msg << std::endl;
  }
};

struct Reference {
  Mat points;
  std::string hash;
};

Reference make_reference(const EvalSpec& e) {
  Reference r{GlyphDistribution::builtin().sample(e.reference_samples, e.reference_seed).points, {}};
  r.hash = matrix_hash(r.points);
  return r;
}

Mat plot_subset(const Mat& reference, int count) {
  return reference.topRows(std::min<Eigen::Index>(count, reference.rows()));
}

/// Exact NN distances; outside deterministic mode rows are split across threads.
Vec evaluate_nn(const Mat& samples, const Mat& reference, const Context& ctx) {
  const int threads = ctx.options.deterministic ? 1 : ctx.options.jobs;
  if (threads <= 1 || samples.rows() < 2 * threads) return nn_distances(samples, reference);
  Vec out(samples.rows());
  const Eigen::Index chunk = (samples.rows() + threads - 1) / threads;
  parallel_for(threads, threads, [&](int t) {
    const Eigen::Index begin = t * chunk;
    const Eigen::Index count = std::min(chunk, samples.rows() - begin);
    if (count > 0) out.segment(begin, count) = nn_distances(samples.middleRows(begin, count), reference);
  });
  return out;
}

double space_shift(const ExperimentSpec& s, int dim) { return s.sampler.shift.value_or(toy_shift_factor(dim)); }

struct FlowRun {
  Mat samples;
  LossTrace trace;
  double shift = 1.0;
};

/// Trains a velocity model on `data` in R^dim and integrates fresh samples.
FlowRun train_and_sample(const ExperimentSpec& s, int dim, const DataSampler& data, std::uint64_t seed) {
  FlowRun run;
  run.shift = space_shift(s, dim);
  FlowModel model = make_flow_model(
      {.dim = dim, .width = s.model.width, .depth = s.model.depth, .wide_head = s.model.wide_head},
      derive_seed(seed, 2));
  const TimestepSampler ts{.loc = s.sampler.loc, .scale = s.sampler.scale, .shift = run.shift};
  run.trace = train_flow(model, data, ts,
                         {.steps = s.training.steps,
                          .batch = s.training.batch,
                          .lr = s.training.lr,
                          .seed = derive_seed(seed, 3)});
  run.samples = euler_sample(model_field(model), s.eval.samples, dim,
                             {.steps = s.eval.euler_steps, .shift = run.shift}, derive_seed(seed, 4));
  return run;
}

nlohmann::json training_json(const FlowRun& run, int dim) {
  return {{"dim", dim},
          {"shift", run.shift},
          {"steps", run.trace.step_losses.size()},
          {"final_loss", run.trace.step_losses.empty() ? nlohmann::json(nullptr)
                                                       : nlohmann::json(run.trace.step_losses.back())},
          {"trace_steps", run.trace.trace_steps},
          {"trace_losses", run.trace.trace_losses}};
}

/// metrics.json, samples.csv, plot.svg and training.json under `rel`.
std::vector<std::string> write_flow_artifacts(const Context& ctx, const fs::path& rel, const MetricsReport& report,
                                              const Mat& points, const Mat& plot_reference,
                                              const nlohmann::json& training) {
  const fs::path dir = ctx.dir / rel;
  write_json(dir / "metrics.json", to_json(report));
  write_csv(dir / "samples.csv", points, {"x", "y"});
  write_text(dir / "plot.svg", render_scatter_svg(points, plot_reference, report.space));
  write_json(dir / "training.json", training);
  return {(rel / "metrics.json").generic_string(), (rel / "samples.csv").generic_string(),
          (rel / "plot.svg").generic_string(), (rel / "training.json").generic_string()};
}

fs::path seed_dir(std::uint64_t seed) { return "seed-" + std::to_string(seed); }

// ---------------------------------------------------------------------------

nlohmann::json recipe_toy(Context& ctx, RunManifest& manifest) {
  const auto& s = ctx.spec;
  const auto& glyph = GlyphDistribution::builtin();
  const auto ref = make_reference(s.eval);
  const Mat plot_ref = plot_subset(ref.points, s.eval.plot_reference);
  write_csv(ctx.dir / "reference.csv", plot_ref, {"x", "y"});
  manifest.outputs.push_back("reference.csv");

  const int h = s.space.dim;
  const std::string labels[2] = {"intrinsic-2d", "ambient-" + std::to_string(h) + "d"};
  const auto n = static_cast<int>(s.seeds.size());
  std::vector<std::vector<RunRecord>> records(static_cast<std::size_t>(n));
  std::vector<MetricsReport> reports[2];
  reports[0].resize(static_cast<std::size_t>(n));
  reports[1].resize(static_cast<std::size_t>(n));

  parallel_for(n, ctx.options.jobs, [&](int i) {
    const auto seed = s.seeds[static_cast<std::size_t>(i)];
    const auto q = make_embedding(h, 2, derive_seed(seed, 1));
    for (int which = 0; which < 2; ++which) {
      const auto t0 = Clock::now();
      const int dim = which == 0 ? 2 : h;
      ctx.log("seed " + std::to_string(seed) + ": training " + labels[which]);
      DataSampler data = [&glyph, &q, dim](Eigen::Index rows, Rng& rng) {
        Mat z = glyph.sample(rows, rng()).points;
        return dim == 2 ? z : embed(q, z);
      };
      const FlowRun run = train_and_sample(s, dim, data, seed);
      const Mat points = dim == 2 ? run.samples : project(q, run.samples);
      auto report = make_report(evaluate_nn(points, ref.points, ctx), s.eval.tail_fraction, labels[which], seed,
                                ctx.hash, ref.hash);
      if (dim > 2) {
        const Vec r = off_manifold_residual(q, run.samples);
        report.residual = ResidualStats{r.mean(), r.maxCoeff()};
      }
      const auto rel = seed_dir(seed) / labels[which];
      auto paths = write_flow_artifacts(ctx, rel, report, points, plot_ref, training_json(run, dim));
      ctx.log("seed " + std::to_string(seed) + ": " + labels[which] + " tail mean " + std::to_string(report.tail_mean));
      reports[which][static_cast<std::size_t>(i)] = std::move(report);
      records[static_cast<std::size_t>(i)].push_back({seed, labels[which], std::move(paths), seconds_since(t0)});
    }
  });
  for (auto& r : records) manifest.runs.insert(manifest.runs.end(), r.begin(), r.end());

  const auto comparison = compare_spaces(reports[0], reports[1]);
  write_json(ctx.dir / "comparison.json", to_json(comparison));
  manifest.outputs.push_back("comparison.json");
  std::vector<double> tails[2];
  for (int w = 0; w < 2; ++w)
    for (const auto& r : reports[w]) tails[w].push_back(r.tail_mean);
  return {{"spaces", {labels[0], labels[1]}},
          {"mean_tail", {mean_of(tails[0]), mean_of(tails[1])}},
          {"tail_ratio", comparison.tail_ratio},
          {"comparison", to_json(comparison)}};
}

nlohmann::json recipe_decomposition(Context& ctx, RunManifest& manifest) {
  const auto& s = ctx.spec;
  double worst = 0.0;
  bool passed = true;
  for (auto seed : s.seeds) {
    const auto t0 = Clock::now();
    const auto report = check_decomposition(seed);
    for (const auto& d : report.details) worst = std::max(worst, d.at("max_rel_err").get<double>());
    passed = passed && report.passed;
    const auto rel = seed_dir(seed) / "decomposition.json";
    write_json(ctx.dir / rel, to_json(report));
    manifest.runs.push_back({seed, "decomposition", {rel.generic_string()}, seconds_since(t0)});
  }
  return {{"max_rel_err", worst}, {"tolerance", 1e-8}, {"passed", passed}};
}

nlohmann::json capacity_json(const CapacityProbeReport& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries)
    entries.push_back({{"width", e.width},
                       {"wide_head", e.wide_head},
                       {"initial_loss", e.initial_loss},
                       {"final_loss", e.final_loss}});
  return {{"ambient_dim", r.ambient_dim},
          {"seed", r.seed},
          {"shift", r.shift},
          {"zero_predictor_loss", r.zero_predictor_loss},
          {"entries", entries}};
}

nlohmann::json recipe_capacity(Context& ctx, RunManifest& manifest) {
  const auto& s = ctx.spec;
  const auto n = static_cast<int>(s.seeds.size());
  std::vector<nlohmann::json> per_seed(static_cast<std::size_t>(n));
  std::vector<RunRecord> records(static_cast<std::size_t>(n));
  parallel_for(n, ctx.options.jobs, [&](int i) {
    const auto seed = s.seeds[static_cast<std::size_t>(i)];
    const auto t0 = Clock::now();
    CapacityProbeConfig cfg{.ambient_dim = s.space.dim,
                            .widths = {s.model.width},
                            .wide_heads = {false, true},
                            .depth = s.model.depth,
                            .steps = s.training.steps,
                            .batch = s.training.batch,
                            .lr = s.training.lr,
                            .eval_samples = s.eval.samples,
                            .shift = s.sampler.shift.value_or(-1.0)};
    ctx.log("seed " + std::to_string(seed) + ": probing h=" + std::to_string(cfg.ambient_dim));
    const auto main = capacity_probe(cfg, seed);
    CapacityProbeConfig control = cfg;
    control.ambient_dim = 2;
    control.widths = {64};
    control.wide_heads = {false};
    ctx.log("seed " + std::to_string(seed) + ": overcapacity control");
    const auto ctrl = capacity_probe(control, seed);
    const double plain = main.find(s.model.width, false).final_loss;
    const double wide = main.find(s.model.width, true).final_loss;
    nlohmann::json j = {{"seed", seed},
                        {"probe", capacity_json(main)},
                        {"control", capacity_json(ctrl)},
                        {"plain_final_loss", plain},
                        {"wide_final_loss", wide},
                        {"wide_over_plain", wide / plain},
                        {"plain_over_zero_predictor", plain / main.zero_predictor_loss},
                        {"control_final_loss", ctrl.find(64, false).final_loss}};
    const auto rel = seed_dir(seed) / "capacity.json";
    write_json(ctx.dir / rel, j);
    per_seed[static_cast<std::size_t>(i)] = std::move(j);
    records[static_cast<std::size_t>(i)] = {seed, "capacity", {rel.generic_string()}, seconds_since(t0)};
  });
  manifest.runs = records;
  std::vector<double> plain, wide, zero, ctrl;
  for (const auto& j : per_seed) {
    plain.push_back(j.at("plain_final_loss").get<double>());
    wide.push_back(j.at("wide_final_loss").get<double>());
    zero.push_back(j.at("probe").at("zero_predictor_loss").get<double>());
    ctrl.push_back(j.at("control_final_loss").get<double>());
  }
  return {{"ambient_dim", s.space.dim},
          {"width", s.model.width},
          {"mean_plain_final_loss", mean_of(plain)},
          {"mean_wide_final_loss", mean_of(wide)},
          {"mean_zero_predictor_loss", mean_of(zero)},
          {"wide_over_plain", mean_of(wide) / mean_of(plain)},
          {"plain_over_zero_predictor", mean_of(plain) / mean_of(zero)},
          {"max_control_final_loss", *std::max_element(ctrl.begin(), ctrl.end())},
          {"per_seed", per_seed}};
}

nlohmann::json recipe_shift_table(Context& ctx, RunManifest& manifest) {
  const auto t0 = Clock::now();
  nlohmann::json latent = nlohmann::json::array();
  for (int c : {16, 32, 64, 96, 768})
    for (int p : {1, 2}) latent.push_back({{"channels", c}, {"patch", p}, {"shift", shift_factor(c, p)}});
  nlohmann::json toy = nlohmann::json::array();
  for (int d : {2, 8, 16, 64, 256, 768}) toy.push_back({{"dim", d}, {"shift", toy_shift_factor(d)}});
  const auto anchors = check_shift();
  const nlohmann::json table = {{"latent", latent}, {"toy", toy}, {"anchors", to_json(anchors)}};
  write_json(ctx.dir / "shift-table.json", table);
  manifest.runs.push_back({ctx.spec.seeds.front(), "shift-table", {"shift-table.json"}, seconds_since(t0)});
  return {{"shift_16_2", shift_factor(16, 2)}, {"shift_768_1", shift_factor(768, 1)}, {"passed", anchors.passed}};
}

// --- codec recipes -----------------------------------------------------------

CodecConfig codec_config(const CodecSpec& c) {
  CodecConfig cc;
  cc.representation.feature_dim = c.feature_dim;
  cc.representation.lossy = c.lossy;
  cc.representation.lost_rank = c.lost_rank;
  cc.latent_dim = c.latent_dim;
  cc.depth = c.semantic_depth;
  return cc;
}

LossBundle loss_weights(const CodecSpec& c) { return {.semantic = c.lambda_s, .pixel = c.lambda_p, .kl = c.lambda_kl}; }

CodecTrainConfig train_config(const CodecSpec& c, int steps, double lr, std::uint64_t seed) {
  return {.steps = steps, .batch = c.batch, .lr = lr, .seed = seed};
}

bool wants(const CodecSpec& c, const char* variant) {
  return std::find(c.variants.begin(), c.variants.end(), variant) != c.variants.end();
}

nlohmann::json variant_json(const std::string& name, const CodecEval& e, double probe) {
  return {{"variant", name},
          {"pixel_mse", e.pixel_mse},
          {"semantic_loss", e.semantic_loss},
          {"kl", e.kl},
          {"probe_accuracy", probe},
          {"drift", e.drift}};
}

double latent_probe(const LatentCodec& codec, const GlyphSample& eval) {
  return semantic_probe(encode(codec, working_features(codec, eval.points), EncodeMode::mean).mu, eval.labels)
      .accuracy;
}

nlohmann::json recipe_ladder(Context& ctx, RunManifest& manifest) {
  const auto& s = ctx.spec;
  const auto& c = s.codec;
  const auto& glyph = GlyphDistribution::builtin();
  const auto cc = codec_config(c);
  const auto weights = loss_weights(c);
  const auto eval = glyph.sample(s.eval.probe_samples, s.eval.eval_seed);
  const bool generation = c.generation && wants(c, "rae") && wants(c, "svae");
  std::optional<Reference> ref;
  Mat plot_ref;
  if (generation) {
    ref = make_reference(s.eval);
    plot_ref = plot_subset(ref->points, s.eval.plot_reference);
    write_csv(ctx.dir / "reference.csv", plot_ref, {"x", "y"});
    manifest.outputs.push_back("reference.csv");
  }
  const std::string gen_labels[2] = {"rae-" + std::to_string(c.feature_dim) + "d",
                                     "svae-" + std::to_string(c.latent_dim) + "d"};

  const auto n = static_cast<int>(s.seeds.size());
  std::vector<nlohmann::json> per_seed(static_cast<std::size_t>(n));
  std::vector<std::vector<RunRecord>> records(static_cast<std::size_t>(n));
  std::vector<MetricsReport> gen[2];
  gen[0].resize(static_cast<std::size_t>(n));
  gen[1].resize(static_cast<std::size_t>(n));
  const PixelSampler data = glyph_pixels();

  parallel_for(n, ctx.options.jobs, [&](int i) {
    const auto seed = s.seeds[static_cast<std::size_t>(i)];
    const auto tag = "seed " + std::to_string(seed) + ": ";
    auto& recs = records[static_cast<std::size_t>(i)];
    nlohmann::json variants = nlohmann::json::object();
    auto save_variant = [&](const std::string& name, const nlohmann::json& j, Clock::time_point t0) {
      const auto rel = seed_dir(seed) / (name + ".json");
      write_json(ctx.dir / rel, j);
      variants[name] = j;
      recs.push_back({seed, name, {rel.generic_string()}, seconds_since(t0)});
      ctx.log(tag + name + " pixel mse " + std::to_string(j.at("pixel_mse").get<double>()) + ", probe " +
              std::to_string(j.at("probe_accuracy").get<double>()));
    };

    const LatentCodec base(cc, seed);
    std::optional<FeatureDecoder> rae;
    if (wants(c, "rae")) {
      const auto t0 = Clock::now();
      ctx.log(tag + "rae decoder");
      rae = train_feature_decoder([&base](const Mat& p) { return frozen_features(base, p); }, c.feature_dim, data,
                                  cc, train_config(c, c.stage1_steps, c.lr, derive_seed(seed, 20)));
      const Mat f = frozen_features(base, eval.points);
      save_variant("rae",
                   {{"variant", "rae"},
                    {"pixel_mse", pixel_loss(decode_features(*rae, f), eval.points)},
                    {"semantic_loss", 0.0},
                    {"kl", nullptr},
                    {"probe_accuracy", semantic_probe(f, eval.labels).accuracy},
                    {"drift", 0.0}},
                   t0);
    }

    std::optional<LatentCodec> svae;
    if (wants(c, "svae") || wants(c, "psvae")) {
      const auto t0 = Clock::now();
      ctx.log(tag + "stage 1");
      svae.emplace(base);
      train_stage1(*svae, data, weights, train_config(c, c.stage1_steps, c.lr, derive_seed(seed, 21)));
      if (wants(c, "svae")) save_variant("svae", variant_json("svae", evaluate(*svae, eval.points), latent_probe(*svae, eval)), t0);
    }

    if (wants(c, "pvae")) {
      const auto t0 = Clock::now();
      ctx.log(tag + "pvae");
      LatentCodec pvae(base);
      LossBundle w = weights;
      w.semantic = 0.0;
      train_stage1(pvae, data, w, train_config(c, c.stage1_steps, c.lr, derive_seed(seed, 21)));
      train_stage2(pvae, data, w, train_config(c, c.stage2_steps, c.stage2_lr, derive_seed(seed, 22)));
      save_variant("pvae", variant_json("pvae", evaluate(pvae, eval.points), latent_probe(pvae, eval)), t0);
    }

    if (wants(c, "psvae")) {
      const auto t0 = Clock::now();
      ctx.log(tag + "psvae stage 2");
      LatentCodec ps(*svae);
      const auto stage1 = evaluate(ps, eval.points);
      const double stage1_probe = latent_probe(ps, eval);
      train_stage2(ps, data, weights, train_config(c, c.stage2_steps, c.stage2_lr, derive_seed(seed, 22)));
      auto j = variant_json("psvae", evaluate(ps, eval.points), latent_probe(ps, eval));
      j["stage1"] = variant_json("psvae-stage1", stage1, stage1_probe);
      save_variant("psvae", j, t0);
    }

    if (generation) {
      const LatentCodec& sv = *svae;
      const FeatureDecoder& dec = *rae;
      for (int which = 0; which < 2; ++which) {
        const auto t0 = Clock::now();
        ctx.log(tag + "flow in " + gen_labels[which]);
        const int dim = which == 0 ? c.feature_dim : c.latent_dim;
        DataSampler sampler;
        if (which == 0)
          sampler = [&](Eigen::Index rows, Rng& rng) { return frozen_features(base, glyph.sample(rows, rng()).points); };
        else
          sampler = [&](Eigen::Index rows, Rng& rng) {
            const Mat px = glyph.sample(rows, rng()).points;
            return encode(sv, working_features(sv, px), EncodeMode::sample, rng()).latent;
          };
        const FlowRun run = train_and_sample(s, dim, sampler, seed);
        const Mat pixels = which == 0 ? decode_features(dec, run.samples) : decode_pipeline(sv, run.samples);
        auto report = make_report(evaluate_nn(pixels, ref->points, ctx), s.eval.tail_fraction, gen_labels[which],
                                  seed, ctx.hash, ref->hash);
        const auto rel = seed_dir(seed) / "generation" / gen_labels[which];
        auto paths = write_flow_artifacts(ctx, rel, report, pixels, plot_ref, training_json(run, dim));
        ctx.log(tag + gen_labels[which] + " tail mean " + std::to_string(report.tail_mean));
        gen[which][static_cast<std::size_t>(i)] = std::move(report);
        recs.push_back({seed, "generation/" + gen_labels[which], std::move(paths), seconds_since(t0)});
      }
    }
    per_seed[static_cast<std::size_t>(i)] = {{"seed", seed}, {"variants", variants}};
  });
  for (auto& r : records) manifest.runs.insert(manifest.runs.end(), r.begin(), r.end());

  nlohmann::json means = nlohmann::json::object();
  for (const auto& name : c.variants) {
    std::vector<double> pix, sem, probe, kl;
    for (const auto& j : per_seed) {
      const auto& v = j.at("variants").at(name);
      pix.push_back(v.at("pixel_mse").get<double>());
      sem.push_back(v.at("semantic_loss").get<double>());
      probe.push_back(v.at("probe_accuracy").get<double>());
      if (!v.at("kl").is_null()) kl.push_back(v.at("kl").get<double>());
    }
    means[name] = {{"pixel_mse", mean_of(pix)},
                   {"semantic_loss", mean_of(sem)},
                   {"probe_accuracy", mean_of(probe)},
                   {"kl", kl.empty() ? nlohmann::json(nullptr) : nlohmann::json(mean_of(kl))}};
  }
  nlohmann::json summary = {{"variants", c.variants}, {"means", means}, {"per_seed", per_seed}};
  if (wants(c, "psvae")) {
    std::vector<double> s1;
    for (const auto& j : per_seed) s1.push_back(j.at("variants").at("psvae").at("stage1").at("pixel_mse").get<double>());
    summary["psvae_stage1_pixel_mse"] = mean_of(s1);
    summary["psvae_stage2_over_stage1"] = means["psvae"]["pixel_mse"].get<double>() / mean_of(s1);
  }
  if (wants(c, "psvae") && wants(c, "pvae"))
    summary["psvae_probe_minus_pvae"] =
        means["psvae"]["probe_accuracy"].get<double>() - means["pvae"]["probe_accuracy"].get<double>();
  if (generation) {
    const auto cmp = compare_spaces(gen[0], gen[1]);
    write_json(ctx.dir / "comparison.json", to_json(cmp));
    manifest.outputs.push_back("comparison.json");
    summary["generation"] = to_json(cmp);
    summary["svae_over_rae_tail"] = cmp.tail_ratio;
  }
  return summary;
}

nlohmann::json recipe_shortcut(Context& ctx, RunManifest& manifest) {
  const auto& s = ctx.spec;
  const auto& c = s.codec;
  const auto cc = codec_config(c);
  const int k = c.top_k > 0 ? c.top_k : static_cast<int>(std::ceil(c.feature_dim / 24.0));
  const auto n = static_cast<int>(s.seeds.size());
  std::vector<nlohmann::json> per_seed(static_cast<std::size_t>(n));
  std::vector<RunRecord> records(static_cast<std::size_t>(n));
  parallel_for(n, ctx.options.jobs, [&](int i) {
    const auto seed = s.seeds[static_cast<std::size_t>(i)];
    const auto t0 = Clock::now();
    ctx.log("seed " + std::to_string(seed) + ": high-dimensional run, top " + std::to_string(k));
    LatentCodec codec(cc, seed);
    const ShortcutConfig cfg{.top_k = k,
                             .hd_training = train_config(c, c.hd_steps, c.lr, derive_seed(seed, 30)),
                             .decoder_training = train_config(c, c.decoder_steps, c.lr, derive_seed(seed, 31)),
                             .eval_samples = s.eval.probe_samples};
    const auto r = shortcut_diagnostic(codec, glyph_pixels(), loss_weights(c), cfg);
    nlohmann::json j = {{"seed", seed},
                        {"feature_dim", r.feature_dim},
                        {"top_k", r.top_k},
                        {"channels", r.channels},
                        {"channel_deviation", r.channel_deviation},
                        {"hd_pixel_mse", r.hd_pixel_mse},
                        {"drift", r.drift},
                        {"topk_mse", r.topk_mse},
                        {"full_mse", r.full_mse},
                        {"ratio", r.ratio},
                        {"ratio_vs_hd_decoder", r.topk_mse / r.hd_pixel_mse}};
    ctx.log("seed " + std::to_string(seed) + ": top-k/full mse ratio " + std::to_string(r.ratio));
    const auto rel = seed_dir(seed) / "shortcut.json";
    write_json(ctx.dir / rel, j);
    per_seed[static_cast<std::size_t>(i)] = std::move(j);
    records[static_cast<std::size_t>(i)] = {seed, "shortcut", {rel.generic_string()}, seconds_since(t0)};
  });
  manifest.runs = records;
  std::vector<double> topk, full, hd;
  for (const auto& j : per_seed) {
    topk.push_back(j.at("topk_mse").get<double>());
    full.push_back(j.at("full_mse").get<double>());
    hd.push_back(j.at("hd_pixel_mse").get<double>());
  }
  return {{"top_k", k},
          {"feature_dim", c.feature_dim},
          {"mean_topk_mse", mean_of(topk)},
          {"mean_full_mse", mean_of(full)},
          {"mean_hd_pixel_mse", mean_of(hd)},
          {"ratio", mean_of(topk) / mean_of(full)},
          {"ratio_vs_hd_decoder", mean_of(topk) / mean_of(hd)},
          {"per_seed", per_seed}};
}

}  // namespace

nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : m.runs)
    runs.push_back({{"seed", r.seed}, {"label", r.label}, {"paths", r.paths}, {"wall_clock_s", r.wall_clock_s}});
  return {{"recipe", m.recipe},
          {"config_hash", m.config_hash},
          {"tool_version", m.tool_version},
          {"deterministic", m.deterministic},
          {"jobs", m.jobs},
          {"runs", runs},
          {"outputs", m.outputs},
          {"wall_clock_s", m.wall_clock_s}};
}

fs::path resolve_output(const ExperimentSpec& spec, const RunOptions& options) {
  if (!options.out.empty()) return options.out;
  if (spec.output) return *spec.output;
  if (const char* env = std::getenv(kOutputEnv); env != nullptr && *env != '\0') return fs::path(env) / spec.recipe;
  return fs::path("pslab-out") / spec.recipe;
}

RunManifest run_experiment(ExperimentSpec spec, const RunOptions& options) {
  tune_allocator();
  require(options.jobs >= 1, "--jobs must be >= 1");
  for (auto& seed : spec.seeds) seed += options.seed_offset;

  RunManifest manifest;
  manifest.recipe = spec.recipe;
  manifest.config_hash = config_hash(spec);
  manifest.deterministic = options.deterministic;
  manifest.jobs = options.jobs;
  manifest.directory = resolve_output(spec, options);
  fs::create_directories(manifest.directory);

  Context ctx{spec, options, manifest.directory, manifest.config_hash, {}};
  const auto t0 = Clock::now();
  nlohmann::json body;
  if (spec.recipe == "toy-ps-2d-vs-8d")
    body = recipe_toy(ctx, manifest);
  else if (spec.recipe == "verify-decomposition")
    body = recipe_decomposition(ctx, manifest);
  else if (spec.recipe == "capacity-bottleneck")
    body = recipe_capacity(ctx, manifest);
  else if (spec.recipe == "ladder-rae-svae-pvae-psvae")
    body = recipe_ladder(ctx, manifest);
  else if (spec.recipe == "shortcut-hd")
    body = recipe_shortcut(ctx, manifest);
  else if (spec.recipe == "shift-table")
    body = recipe_shift_table(ctx, manifest);
  else
    throw ConfigError("field 'recipe': unknown recipe '" + spec.recipe + "'");
  manifest.wall_clock_s = seconds_since(t0);

  manifest.summary = {{"recipe", spec.recipe},
                      {"config_hash", manifest.config_hash},
                      {"spec", to_json(spec, false)},
                      {"results", body}};
  write_json(manifest.directory / "summary.json", manifest.summary);
  manifest.outputs.push_back("summary.json");
  manifest.outputs.push_back("manifest.json");
  write_json(manifest.directory / "manifest.json", to_json(manifest));
  return manifest;
}

}  // namespace pslab::lab

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace pslab::lab {

enum class SpaceKind { intrinsic, ambient, rae, svae, psvae, pvae };

std::string to_string(SpaceKind kind);
SpaceKind parse_space_kind(const std::string& name);

struct SpaceSpec {
  SpaceKind kind = SpaceKind::ambient;
  int dim = 8;
};

struct ModelSpec {
  int width = 256;
  int depth = 4;
  bool wide_head = false;
};

struct SamplerSpec {
  double loc = 0.0;
  double scale = 1.0;
  std::optional<double> shift;  // unset: per-space toy shift
};

struct TrainingSpec {
  int steps = 20000;
  int batch = 256;
  double lr = 1e-3;
};

struct EvalSpec {
  int samples = 10000;
  int reference_samples = 100000;
  std::uint64_t reference_seed = 12345;
  double tail_fraction = 0.05;
  int euler_steps = 50;
  int probe_samples = 8192;
  std::uint64_t eval_seed = 777;
  int plot_reference = 4000;  // reference points drawn in plots
};

struct CodecSpec {
  int feature_dim = 64;
  int latent_dim = 2;
  bool lossy = true;
  int lost_rank = -1;
  int semantic_depth = 3;
  int batch = 256;
  double lr = 1e-3;
  int stage1_steps = 3000;
  int stage2_steps = 3000;
  double stage2_lr = 1e-4;
  double lambda_s = 1.0;
  double lambda_p = 0.1;
  double lambda_kl = 1e-4;
  std::vector<std::string> variants{"rae", "svae", "pvae", "psvae"};
  bool generation = false;
  int top_k = 0;  // 0: ceil(feature_dim / 24)
  int hd_steps = 3000;
  int decoder_steps = 3000;
};

struct ExperimentSpec {
  std::string recipe;
  SpaceSpec space;
  ModelSpec model;
  SamplerSpec sampler;
  TrainingSpec training;
  EvalSpec eval;
  CodecSpec codec;
  std::vector<std::uint64_t> seeds{0};
  std::optional<std::string> output;
};

const std::vector<std::string>& recipe_names();

/// Defaults for a registered recipe; throws ConfigError for unknown names.
ExperimentSpec default_spec(const std::string& recipe);

/// Parses a spec object. Omitted fields take the recipe defaults; unknown or
/// ill-typed fields raise ConfigError naming the field path.
ExperimentSpec parse_spec(const nlohmann::json& j);
ExperimentSpec load_spec(const std::filesystem::path& path);

/// Fully expanded spec. The output directory is kept out of the canonical
/// form so relocating a run does not change its identity.
nlohmann::json to_json(const ExperimentSpec& spec, bool include_output = true);

/// 16 hex digits of FNV-1a over the canonical (key-sorted, compact) JSON.
std::string config_hash(const ExperimentSpec& spec);

}  // namespace pslab::lab

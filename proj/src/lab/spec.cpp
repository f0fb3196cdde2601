#include "pslab/lab/spec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "pslab/core/error.hpp"
#include "pslab/metrics/metrics.hpp"

namespace pslab::lab {

namespace {

const std::vector<std::string> kRecipes{"toy-ps-2d-vs-8d",           "verify-decomposition", "capacity-bottleneck",
                                        "ladder-rae-svae-pvae-psvae", "shortcut-hd",          "shift-table"};
const std::vector<std::string> kVariants{"rae", "svae", "pvae", "psvae"};

[[noreturn]] void field_error(const std::string& path, const std::string& msg) {
  throw ConfigError("field '" + path + "': " + msg);
}

/// Reads one JSON object, rejecting keys it was not asked about.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) field_error(path_.empty() ? "<root>" : path_, "must be an object");
  }

  ~ObjectReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items())
      if (!seen_.contains(key)) field_error(child(key), "unknown field");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  const nlohmann::json& at(const std::string& key) { return j_.at(key); }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void integer(const std::string& key, int& out, long lo, long hi) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) field_error(child(key), "must be an integer");
    const auto x = v.get<long long>();
    if (x < lo || x > hi)
      field_error(child(key), "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " +
                                  std::to_string(x));
    out = static_cast<int>(x);
  }

  void seed(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    out = parse_seed(j_.at(key), child(key));
  }

  void number(const std::string& key, double& out, double lo, double hi, bool open_lo = false) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) field_error(child(key), "must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x < lo || x > hi || (open_lo && x == lo))
      field_error(child(key), "must lie in " + std::string(open_lo ? "(" : "[") + nlohmann::json(lo).dump() +
                                  ", " + nlohmann::json(hi).dump() + "], got " + v.dump());
    out = x;
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    if (!j_.at(key).is_boolean()) field_error(child(key), "must be true or false");
    out = j_.at(key).get<bool>();
  }

  void string(const std::string& key, std::string& out) {
    if (!has(key)) return;
    if (!j_.at(key).is_string()) field_error(child(key), "must be a string");
    out = j_.at(key).get<std::string>();
  }

  static std::uint64_t parse_seed(const nlohmann::json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
      if (v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
      field_error(path, "seeds must be non-negative");
    }
    field_error(path, "must be a non-negative integer");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

constexpr long kMaxInt = 1L << 30;

}  // namespace

std::string to_string(SpaceKind kind) {
  switch (kind) {
    case SpaceKind::intrinsic: return "intrinsic";
    case SpaceKind::ambient: return "ambient";
    case SpaceKind::rae: return "rae";
    case SpaceKind::svae: return "svae";
    case SpaceKind::psvae: return "psvae";
    case SpaceKind::pvae: return "pvae";
  }
  return "ambient";
}

SpaceKind parse_space_kind(const std::string& name) {
  for (auto k : {SpaceKind::intrinsic, SpaceKind::ambient, SpaceKind::rae, SpaceKind::svae, SpaceKind::psvae,
                 SpaceKind::pvae})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown space kind '" + name + "' (expected intrinsic, ambient, rae, svae, psvae or pvae)");
}

const std::vector<std::string>& recipe_names() { return kRecipes; }

ExperimentSpec default_spec(const std::string& recipe) {
  if (std::find(kRecipes.begin(), kRecipes.end(), recipe) == kRecipes.end()) {
    std::string known;
    for (const auto& r : kRecipes) known += (known.empty() ? "" : ", ") + r;
    throw ConfigError("field 'recipe': unknown recipe '" + recipe + "' (known: " + known + ")");
  }
  ExperimentSpec s;
  s.recipe = recipe;
  if (recipe == "toy-ps-2d-vs-8d") {
    s.seeds = {0, 1, 2, 3, 4};
  } else if (recipe == "verify-decomposition") {
    s.space = {SpaceKind::ambient, 64};
  } else if (recipe == "capacity-bottleneck") {
    s.space = {SpaceKind::ambient, 64};
    s.model = {.width = 16, .depth = 4, .wide_head = false};
    s.training = {.steps = 10000, .batch = 128, .lr = 1e-3};
    s.eval.samples = 4096;
  } else if (recipe == "ladder-rae-svae-pvae-psvae") {
    s.space = {SpaceKind::rae, 64};
    s.training = {.steps = 6000, .batch = 256, .lr = 1e-3};
    s.seeds = {0, 1, 2, 3, 4};
    s.codec.generation = true;
  } else if (recipe == "shortcut-hd") {
    s.space = {SpaceKind::rae, 64};
    s.codec.lossy = false;
    s.seeds = {0, 1, 2};
  } else if (recipe == "shift-table") {
    s.space = {SpaceKind::ambient, 64};
  }
  return s;
}

ExperimentSpec parse_spec(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("field '<root>': spec must be a JSON object");
  if (!j.contains("recipe")) throw ConfigError("field 'recipe': required");
  if (!j.at("recipe").is_string()) throw ConfigError("field 'recipe': must be a string");
  ExperimentSpec s = default_spec(j.at("recipe").get<std::string>());

  ObjectReader root(j, "");
  root.has("recipe");
  if (root.has("space")) {
    ObjectReader r(root.at("space"), "space");
    if (r.has("kind")) {
      std::string kind;
      r.string("kind", kind);
      try {
        s.space.kind = parse_space_kind(kind);
      } catch (const ConfigError& e) {
        field_error("space.kind", e.what());
      }
    }
    r.integer("dim", s.space.dim, 1, 4096);
  }
  if (root.has("model")) {
    ObjectReader r(root.at("model"), "model");
    r.integer("width", s.model.width, 1, 65536);
    r.integer("depth", s.model.depth, 2, 64);
    r.boolean("wide_head", s.model.wide_head);
  }
  if (root.has("sampler")) {
    ObjectReader r(root.at("sampler"), "sampler");
    r.number("loc", s.sampler.loc, -1e3, 1e3);
    r.number("scale", s.sampler.scale, 0.0, 1e3, true);
    if (r.has("shift")) {
      double shift = 1.0;
      r.number("shift", shift, 1.0, 1e3);
      s.sampler.shift = shift;
    }
  }
  if (root.has("training")) {
    ObjectReader r(root.at("training"), "training");
    r.integer("steps", s.training.steps, 0, kMaxInt);
    r.integer("batch", s.training.batch, 1, 1 << 20);
    r.number("lr", s.training.lr, 0.0, 10.0, true);
  }
  if (root.has("eval")) {
    ObjectReader r(root.at("eval"), "eval");
    r.integer("samples", s.eval.samples, 1, kMaxInt);
    r.integer("reference_samples", s.eval.reference_samples, 1, kMaxInt);
    r.seed("reference_seed", s.eval.reference_seed);
    r.number("tail_fraction", s.eval.tail_fraction, 0.0, 1.0, true);
    r.integer("euler_steps", s.eval.euler_steps, 1, 1 << 20);
    r.integer("probe_samples", s.eval.probe_samples, 10, kMaxInt);
    r.seed("eval_seed", s.eval.eval_seed);
    r.integer("plot_reference", s.eval.plot_reference, 0, kMaxInt);
  }
  if (root.has("codec")) {
    ObjectReader r(root.at("codec"), "codec");
    r.integer("feature_dim", s.codec.feature_dim, 2, 768);
    r.integer("latent_dim", s.codec.latent_dim, 1, 768);
    r.boolean("lossy", s.codec.lossy);
    r.integer("lost_rank", s.codec.lost_rank, -1, 767);
    r.integer("semantic_depth", s.codec.semantic_depth, 1, 16);
    r.integer("batch", s.codec.batch, 1, 1 << 20);
    r.number("lr", s.codec.lr, 0.0, 10.0, true);
    r.integer("stage1_steps", s.codec.stage1_steps, 0, kMaxInt);
    r.integer("stage2_steps", s.codec.stage2_steps, 0, kMaxInt);
    r.number("stage2_lr", s.codec.stage2_lr, 0.0, 10.0, true);
    r.number("lambda_s", s.codec.lambda_s, 0.0, 1e6);
    r.number("lambda_p", s.codec.lambda_p, 0.0, 1e6);
    r.number("lambda_kl", s.codec.lambda_kl, 0.0, 1e6);
    if (r.has("variants")) {
      const auto& v = r.at("variants");
      if (!v.is_array() || v.empty()) field_error("codec.variants", "must be a non-empty array");
      s.codec.variants.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string path = "codec.variants[" + std::to_string(i) + "]";
        if (!v[i].is_string()) field_error(path, "must be a string");
        const auto name = v[i].get<std::string>();
        if (std::find(kVariants.begin(), kVariants.end(), name) == kVariants.end())
          field_error(path, "unknown variant '" + name + "' (expected rae, svae, pvae or psvae)");
        if (std::find(s.codec.variants.begin(), s.codec.variants.end(), name) != s.codec.variants.end())
          field_error(path, "duplicate variant '" + name + "'");
        s.codec.variants.push_back(name);
      }
    }
    r.boolean("generation", s.codec.generation);
    r.integer("top_k", s.codec.top_k, 0, 768);
    r.integer("hd_steps", s.codec.hd_steps, 0, kMaxInt);
    r.integer("decoder_steps", s.codec.decoder_steps, 0, kMaxInt);
  }
  if (root.has("seeds")) {
    const auto& v = root.at("seeds");
    if (!v.is_array() || v.empty()) field_error("seeds", "must be a non-empty array");
    s.seeds.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto seed = ObjectReader::parse_seed(v[i], "seeds[" + std::to_string(i) + "]");
      if (std::find(s.seeds.begin(), s.seeds.end(), seed) != s.seeds.end())
        field_error("seeds[" + std::to_string(i) + "]", "duplicate seed " + std::to_string(seed));
      s.seeds.push_back(seed);
    }
  }
  if (root.has("output")) {
    std::string out;
    root.string("output", out);
    if (out.empty()) field_error("output", "must not be empty");
    s.output = out;
  }

  // Cross-field checks.
  const auto& c = s.codec;
  if (c.latent_dim >= c.feature_dim) field_error("codec.latent_dim", "must be smaller than codec.feature_dim");
  if (c.lost_rank >= c.feature_dim) field_error("codec.lost_rank", "must be smaller than codec.feature_dim");
  if (c.top_k > c.feature_dim) field_error("codec.top_k", "must not exceed codec.feature_dim");
  if (s.eval.samples < 1.0 / s.eval.tail_fraction)
    field_error("eval.tail_fraction", "samples * tail_fraction must be >= 1");
  if (s.recipe == "toy-ps-2d-vs-8d" && s.space.kind != SpaceKind::ambient)
    field_error("space.kind", "toy-ps-2d-vs-8d compares the intrinsic plane with an ambient space");
  if ((s.recipe == "toy-ps-2d-vs-8d" || s.recipe == "capacity-bottleneck") && s.space.dim < 3)
    field_error("space.dim", "ambient dimension must be >= 3");
  if (s.recipe == "ladder-rae-svae-pvae-psvae" || s.recipe == "shortcut-hd") {
    if (s.space.kind == SpaceKind::rae)
      s.codec.feature_dim = s.space.dim;
    else if (s.space.kind == SpaceKind::svae || s.space.kind == SpaceKind::psvae || s.space.kind == SpaceKind::pvae)
      s.codec.latent_dim = s.space.dim;
    else
      field_error("space.kind", "codec recipes take rae, svae, psvae or pvae spaces");
    if (s.codec.latent_dim >= s.codec.feature_dim)
      field_error("space.dim", "latent width must be smaller than the representation width");
    if (s.codec.top_k > s.codec.feature_dim) field_error("codec.top_k", "must not exceed the representation width");
  }
  return s;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read spec file '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("spec file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_spec(j);
}

nlohmann::json to_json(const ExperimentSpec& s, bool include_output) {
  nlohmann::json j;
  j["recipe"] = s.recipe;
  j["space"] = {{"kind", to_string(s.space.kind)}, {"dim", s.space.dim}};
  j["model"] = {{"width", s.model.width}, {"depth", s.model.depth}, {"wide_head", s.model.wide_head}};
  j["sampler"] = {{"loc", s.sampler.loc}, {"scale", s.sampler.scale}};
  j["sampler"]["shift"] = s.sampler.shift ? nlohmann::json(*s.sampler.shift) : nlohmann::json(nullptr);
  j["training"] = {{"steps", s.training.steps}, {"batch", s.training.batch}, {"lr", s.training.lr}};
  const auto& e = s.eval;
  j["eval"] = {{"samples", e.samples},
               {"reference_samples", e.reference_samples},
               {"reference_seed", e.reference_seed},
               {"tail_fraction", e.tail_fraction},
               {"euler_steps", e.euler_steps},
               {"probe_samples", e.probe_samples},
               {"eval_seed", e.eval_seed},
               {"plot_reference", e.plot_reference}};
  const auto& c = s.codec;
  j["codec"] = {{"feature_dim", c.feature_dim},   {"latent_dim", c.latent_dim},
                {"lossy", c.lossy},               {"lost_rank", c.lost_rank},
                {"semantic_depth", c.semantic_depth}, {"batch", c.batch},
                {"lr", c.lr},                     {"stage1_steps", c.stage1_steps},
                {"stage2_steps", c.stage2_steps}, {"stage2_lr", c.stage2_lr},
                {"lambda_s", c.lambda_s},         {"lambda_p", c.lambda_p},
                {"lambda_kl", c.lambda_kl},       {"variants", c.variants},
                {"generation", c.generation},     {"top_k", c.top_k},
                {"hd_steps", c.hd_steps},         {"decoder_steps", c.decoder_steps}};
  j["seeds"] = s.seeds;
  if (include_output && s.output) j["output"] = *s.output;
  return j;
}

std::string config_hash(const ExperimentSpec& spec) { return fnv1a_hex(to_json(spec, false).dump()); }

}  // namespace pslab::lab

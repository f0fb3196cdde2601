#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pslab/core/allocator.hpp"
#include "pslab/core/error.hpp"
#include "pslab/lab/checks.hpp"
#include "pslab/lab/io.hpp"
#include "pslab/lab/recipes.hpp"
#include "pslab/lab/spec.hpp"

namespace {

enum Exit : int { kOk = 0, kCheckFailed = 1, kConfigError = 2, kRuntimeFailure = 3 };

int run_command(const std::string& spec_path, const pslab::lab::RunOptions& options) {
  const auto spec = pslab::lab::load_spec(spec_path);
  const auto manifest = pslab::lab::run_experiment(spec, options);
  std::cout << pslab::lab::json_text(pslab::lab::to_json(manifest));
  std::cerr << "wrote " << manifest.directory.string() << "\n";
  const auto& results = manifest.summary["results"];
  if (results.contains("passed") && results["passed"] == false) {
    std::cerr << "run " << spec.recipe << ": tolerance violated\n";
    return kCheckFailed;
  }
  return kOk;
}

int verify_command(const std::string& check, std::uint64_t seed) {
  pslab::lab::CheckReport report;
  if (check == "decomposition")
    report = pslab::lab::check_decomposition(seed);
  else if (check == "gradients")
    report = pslab::lab::check_gradient_suite(seed);
  else
    report = pslab::lab::check_shift();
  std::cout << pslab::lab::json_text(pslab::lab::to_json(report));
  if (!report.passed) std::cerr << "verify " << check << ": tolerance violated\n";
  return report.passed ? kOk : kCheckFailed;
}

int plot_command(const std::string& samples, const std::string& reference, const std::string& out) {
  const auto s = pslab::lab::read_csv(samples);
  const auto r = pslab::lab::read_csv(reference);
  pslab::lab::write_text(out, pslab::lab::render_scatter_svg(s, r, ""));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  pslab::tune_allocator();
  CLI::App app{"pslab: flow matching on embedded manifolds and semantic latent codecs"};
  app.require_subcommand(1);

  pslab::lab::RunOptions options;
  options.log = &std::cerr;
  std::string out;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Run the experiment described by a spec file");
  std::string spec_path;
  run->add_option("spec", spec_path, "Experiment spec (JSON)")->required();
  run->add_option("--out", out, "Output directory (default: spec output, $PSLAB_OUT/<recipe>, ./pslab-out/<recipe>)");
  run->add_option("--jobs", options.jobs, "Concurrent seeds")->check(CLI::PositiveNumber);
  run->add_option("--seed-offset", options.seed_offset, "Added to every seed in the spec");
  run->add_flag("--deterministic,!--no-deterministic", options.deterministic,
                "Single-threaded evaluation within a run (default on)");
  run->add_flag("--quiet", quiet, "Suppress progress messages");

  auto* verify = app.add_subcommand("verify", "Run a built-in numerical check");
  std::string check;
  std::uint64_t verify_seed = 0;
  verify->add_option("check", check, "decomposition | gradients | shift")
      ->required()
      ->check(CLI::IsMember({"decomposition", "gradients", "shift"}));
  verify->add_option("--seed", verify_seed, "Seed for randomized checks");

  auto* plot = app.add_subcommand("plot", "Render a 2-D scatter overlay as SVG");
  std::string samples, reference, svg;
  plot->add_option("samples", samples, "Samples CSV")->required();
  plot->add_option("reference", reference, "Reference CSV")->required();
  plot->add_option("out", svg, "Output SVG")->required();

  auto* init = app.add_subcommand("init", "Print the default spec of a recipe");
  std::string recipe;
  init->add_option("recipe", recipe, "Recipe name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) {
      options.out = out;
      if (quiet) options.log = nullptr;
      return run_command(spec_path, options);
    }
    if (*verify) return verify_command(check, verify_seed);
    if (*plot) return plot_command(samples, reference, svg);
    if (*init) {
      std::cout << pslab::lab::json_text(pslab::lab::to_json(pslab::lab::default_spec(recipe)));
      return kOk;
    }
  } catch (const pslab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const pslab::CheckFailure& e) {
    std::cerr << "check failed: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kOk;
}

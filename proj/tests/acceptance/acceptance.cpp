// Acceptance suite: one PASS/FAIL line per criterion, exit 1 if any fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pslab/core/allocator.hpp"
#include "pslab/flow/flow.hpp"
#include "pslab/lab/checks.hpp"
#include "pslab/lab/io.hpp"
#include "pslab/lab/recipes.hpp"
#include "pslab/lab/spec.hpp"
#include "pslab/oracle/oracle.hpp"
#include "pslab/vae/codec.hpp"

#ifndef PSLAB_SOURCE_DIR
#define PSLAB_SOURCE_DIR "."
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pslab;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Settings {
  fs::path out;
  fs::path source = PSLAB_SOURCE_DIR;
  int jobs = 1;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

lab::RunManifest run_default(const Settings& s, const std::string& recipe) {
  const auto spec = lab::load_spec(s.source / "specs" / (recipe + ".json"));
  return lab::run_experiment(spec, {.out = s.out / recipe, .jobs = s.jobs, .log = &std::cerr});
}

double wall_clock(const lab::RunManifest& m, const std::function<bool(const std::string&)>& which) {
  double total = 0.0;
  for (const auto& r : m.runs)
    if (which(r.label)) total += r.wall_clock_s;
  return total;
}

Outcome shift_anchors(const Settings&) {
  const auto r = lab::check_shift();
  return {r.passed, "s(16,2)=" + fmt(r.details[0]["shift"].get<double>(), 17) +
                        " s(768,1)=" + fmt(r.details[1]["shift"].get<double>(), 6)};
}

Outcome decomposition(const Settings&) {
  const auto t0 = Clock::now();
  const auto r = lab::check_decomposition(0, 1000, 1e-8);
  const double t = seconds_since(t0);
  std::string d;
  for (const auto& e : r.details)
    d += "(" + std::to_string(e["ambient_dim"].get<int>()) + "," + std::to_string(e["intrinsic_dim"].get<int>()) +
         ") " + fmt(e["max_rel_err"].get<double>(), 3) + "; ";
  return {r.passed && t < 10.0, d + fmt(t, 3) + " s (bound 10 s)"};
}

Outcome gradients(const Settings&) {
  const auto t0 = Clock::now();
  const auto r = lab::check_gradient_suite(0, 20, 1e-4);
  const double t = seconds_since(t0);
  double worst = 0.0;
  for (const auto& e : r.details) worst = std::max(worst, e["max_rel_err"].get<double>());
  return {r.passed && t < 30.0, "20 cases, worst rel err " + fmt(worst, 3) + "; " + fmt(t, 3) + " s (bound 30 s)"};
}

Outcome toy_tail(const Settings& s) {
  const auto m = run_default(s, "toy-ps-2d-vs-8d");
  const auto& r = m.summary["results"];
  const double ratio = r["tail_ratio"].get<double>();
  double slowest = 0.0;
  for (const auto& run : m.runs) slowest = std::max(slowest, run.wall_clock_s);
  const bool ok = ratio >= 1.3 && slowest <= 180.0;
  return {ok, "tail 2d=" + fmt(r["mean_tail"][0].get<double>()) + " 8d=" + fmt(r["mean_tail"][1].get<double>()) +
                  " ratio " + fmt(ratio) + " (need >= 1.3); slowest run " + fmt(slowest, 3) + " s (bound 180 s)"};
}

Outcome capacity(const Settings& s) {
  const auto m = run_default(s, "capacity-bottleneck");
  const auto& r = m.summary["results"];
  const double ratio = r["wide_over_plain"].get<double>();
  const double control = r["max_control_final_loss"].get<double>();
  const bool ok = ratio <= 0.1 && control <= 1e-3 && m.wall_clock_s < 300.0;
  return {ok, "wide/plain " + fmt(ratio) + " (need <= 0.1); control loss " + fmt(control, 3) +
                  " (need <= 1e-3); " + fmt(m.wall_clock_s, 3) + " s (bound 300 s)"};
}

// The ladder recipe serves two criteria; run it once.
const lab::RunManifest& ladder(const Settings& s) {
  static const lab::RunManifest m = run_default(s, "ladder-rae-svae-pvae-psvae");
  return m;
}

Outcome latent_generation(const Settings& s) {
  const auto& m = ladder(s);
  const auto& r = m.summary["results"];
  const double ratio = r["svae_over_rae_tail"].get<double>();
  const double t = wall_clock(m, [](const std::string& l) { return l == "rae" || l == "svae" || l.rfind("generation/", 0) == 0; });
  std::string per_seed;
  for (const auto& v : r["generation"]["per_seed_tail_ratio"]) per_seed += fmt(v.get<double>(), 3) + " ";
  return {ratio <= 0.8 && t <= 900.0, "svae/rae tail ratio " + fmt(ratio) + " (need <= 0.8; per seed " + per_seed +
                                          "); " + fmt(t, 4) + " s (bound 900 s)"};
}

Outcome stage_two(const Settings& s) {
  const auto& m = ladder(s);
  const auto& r = m.summary["results"];
  const double recovery = r["psvae_stage2_over_stage1"].get<double>();
  const double gain = r["psvae_probe_minus_pvae"].get<double>();
  const double t = wall_clock(m, [](const std::string& l) { return l == "svae" || l == "pvae" || l == "psvae"; });
  const bool ok = recovery <= 0.5 && gain >= 0.05 && t <= 900.0;
  return {ok, "stage2/stage1 pixel mse " + fmt(recovery) + " (need <= 0.5); probe ps=" +
                  fmt(r["means"]["psvae"]["probe_accuracy"].get<double>()) +
                  " p=" + fmt(r["means"]["pvae"]["probe_accuracy"].get<double>()) + " gain " + fmt(gain) +
                  " (need >= 0.05); " + fmt(t, 4) + " s (bound 900 s)"};
}

Outcome kl_monte_carlo(const Settings&) {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst = 0.0;
  for (int p = 0; p < 100; ++p) {
    const Mat mu = standard_normal(1, 2, rng), lv = uniform<double>(1, 2, -1.5, 1.0, rng);
    const double exact = kl_loss(mu, lv);
    const Mat eps = standard_normal(1000000, 2, rng);
    double acc = 0.0;
    for (int j = 0; j < 2; ++j) {
      const double sd = std::exp(0.5 * lv(0, j));
      for (Eigen::Index i = 0; i < eps.rows(); ++i) {
        const double z = mu(0, j) + sd * eps(i, j);
        acc += -0.5 * eps(i, j) * eps(i, j) - std::log(sd) + 0.5 * z * z;
      }
    }
    worst = std::max(worst, std::abs(acc / 1e6 - exact) / exact);
  }
  const double t = seconds_since(t0);
  return {worst <= 0.01 && t < 30.0,
          "100 posteriors, worst rel err " + fmt(worst, 3) + " (need <= 0.01); " + fmt(t, 3) + " s (bound 30 s)"};
}

Outcome euler_exact(const Settings&) {
  const auto t0 = Clock::now();
  Rng rng(99);
  const Mat atom = standard_normal(1, 3, rng);
  const DatasetOracle oracle(atom);
  const Mat noise = standard_normal(100, 3, rng);
  double worst = 0.0;
  for (int steps : {1, 10, 50}) {
    const Mat x = euler_integrate(oracle.field(), noise, {.steps = steps});
    worst = std::max(worst, (x.rowwise() - atom.row(0)).cwiseAbs().maxCoeff());
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-9 && t < 5.0, "worst abs err " + fmt(worst, 3) + " over steps {1,10,50}; " + fmt(t, 3) + " s"};
}

Outcome shortcut(const Settings& s) {
  const auto m = run_default(s, "shortcut-hd");
  const auto& r = m.summary["results"];
  const double ratio = r["ratio"].get<double>();
  const bool ok = ratio <= 4.0 && m.wall_clock_s <= 600.0;
  return {ok, "k=" + std::to_string(r["top_k"].get<int>()) + " top-k/full mse " + fmt(ratio) +
                  " (need <= 4); top-k/hd-decoder " + fmt(r["ratio_vs_hd_decoder"].get<double>()) + "; " +
                  fmt(m.wall_clock_s, 4) + " s (bound 600 s)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism(const Settings& s) {
  int compared = 0, svgs = 0, metrics = 0;
  std::vector<std::string> differing;
  for (const auto& entry : fs::directory_iterator(s.source / "tests" / "smoke")) {
    const auto spec = lab::load_spec(entry.path());
    const auto base = s.out / "determinism" / entry.path().stem();
    lab::run_experiment(spec, {.out = base / "a", .jobs = s.jobs});
    lab::run_experiment(spec, {.out = base / "b", .jobs = s.jobs});
    for (const auto& f : fs::recursive_directory_iterator(base / "a")) {
      if (!f.is_regular_file() || f.path().filename() == "manifest.json") continue;
      const auto rel = fs::relative(f.path(), base / "a");
      ++compared;
      svgs += f.path().extension() == ".svg";
      metrics += f.path().filename() == "metrics.json";
      if (slurp(f.path()) != slurp(base / "b" / rel)) differing.push_back(entry.path().stem().string() + "/" + rel.string());
    }
  }
  std::string d = std::to_string(compared) + " files (" + std::to_string(metrics) + " metrics, " +
                  std::to_string(svgs) + " svg) byte-identical";
  if (!differing.empty()) d = std::to_string(differing.size()) + " differ, first " + differing.front();
  return {differing.empty() && svgs > 0 && metrics > 0, d};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"pslab acceptance suite"};
  Settings settings;
  std::vector<int> only;
  settings.out = fs::temp_directory_path() / "pslab-acceptance";
  app.add_option("--out", settings.out, "Directory for recipe outputs");
  app.add_option("--source", settings.source, "Repository root (specs/ and tests/smoke/)");
  app.add_option("--jobs", settings.jobs, "Concurrent seeds")->check(CLI::PositiveNumber);
  app.add_option("--only", only, "Criterion numbers to run")->delimiter(',')->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome(const Settings&)>>> criteria = {
      {"shift-factor anchors", shift_anchors},
      {"decomposition identity", decomposition},
      {"gradient suite", gradients},
      {"toy off-manifold tail, 8d vs 2d", toy_tail},
      {"capacity bottleneck and wide head", capacity},
      {"semantic latent vs raw feature generation", latent_generation},
      {"stage-two pixel recovery and probe gain", stage_two},
      {"KL closed form vs Monte-Carlo", kl_monte_carlo},
      {"Euler exactness with the single-atom oracle", euler_exact},
      {"shortcut channels", shortcut},
      {"determinism", determinism},
  };
  const std::set<int> selected(only.begin(), only.end());

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second(settings);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.passed;
    std::cout << (o.passed ? "PASS" : "FAIL") << " " << std::setw(2) << id << " " << criteria[i].first << ": "
              << o.detail << " [" << fmt(seconds_since(t0), 4) << " s]" << std::endl;
  }
  return failures ? 1 : 0;
}

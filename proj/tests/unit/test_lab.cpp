#include <doctest.h>

#include <filesystem>
#include <string>

#include "pslab/core/error.hpp"
#include "pslab/lab/checks.hpp"
#include "pslab/lab/io.hpp"
#include "pslab/lab/recipes.hpp"
#include "pslab/lab/spec.hpp"

using namespace pslab;
using namespace pslab::lab;
using nlohmann::json;

namespace {

std::string config_error(const json& j) {
  try {
    parse_spec(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("every registered recipe has a default spec that round-trips") {
  CHECK(recipe_names().size() == 6);
  for (const auto& name : recipe_names()) {
    const auto spec = default_spec(name);
    CHECK(spec.recipe == name);
    CHECK(!spec.seeds.empty());
    const auto again = parse_spec(to_json(spec));
    CHECK(to_json(again) == to_json(spec));
    CHECK(config_hash(again) == config_hash(spec));
  }
  CHECK_THROWS_AS(default_spec("nope"), ConfigError);
}

TEST_CASE("config hash ignores key order and the output directory, tracks every value") {
  const json a = json::parse(R"({"recipe":"toy-ps-2d-vs-8d","seeds":[0,1],"training":{"steps":10,"lr":0.01}})");
  const json b = json::parse(R"({"training":{"lr":0.01,"steps":10},"seeds":[0,1],"recipe":"toy-ps-2d-vs-8d"})");
  const auto ha = config_hash(parse_spec(a));
  CHECK(ha.size() == 16);
  CHECK(ha == config_hash(parse_spec(b)));

  json relocated = a;
  relocated["output"] = "/tmp/elsewhere";
  CHECK(ha == config_hash(parse_spec(relocated)));

  json changed = a;
  changed["training"]["steps"] = 11;
  CHECK(ha != config_hash(parse_spec(changed)));
  changed = a;
  changed["seeds"] = json::array({0, 2});
  CHECK(ha != config_hash(parse_spec(changed)));
}

TEST_CASE("spec errors name the offending field") {
  CHECK(config_error(json::parse(R"({"recipe":"unknown"})")).find("recipe") != std::string::npos);
  CHECK(config_error(json::parse(R"({"seeds":[0]})")).find("recipe") != std::string::npos);
  CHECK(config_error(json::parse(R"({"recipe":"shift-table","training":{"stepz":3}})")).find("training.stepz") !=
        std::string::npos);
  CHECK(config_error(json::parse(R"({"recipe":"shift-table","training":{"lr":"fast"}})")).find("training.lr") !=
        std::string::npos);
  CHECK(config_error(json::parse(R"({"recipe":"shift-table","seeds":[]})")).find("seeds") != std::string::npos);
  CHECK(config_error(json::parse(R"({"recipe":"shift-table","model":{"width":0}})")).find("model.width") !=
        std::string::npos);
  CHECK(config_error(json::parse(R"({"recipe":"toy-ps-2d-vs-8d","space":{"kind":"rae"}})")).find("space") !=
        std::string::npos);
  CHECK(config_error(json::parse(R"({"recipe":"shift-table","seeds":[-1]})")).find("seeds[0]") != std::string::npos);
  CHECK(!config_error(json::parse(R"({"recipe":"shift-table"})")).size());
  CHECK_THROWS_AS(load_spec("/nonexistent/spec.json"), ConfigError);
}

TEST_CASE("csv dialect: header row, LF, round-trip exact") {
  Rng rng(1);
  const Mat m = standard_normal(5, 2, rng);
  const auto text = to_csv(m, {"x", "y"});
  CHECK(text.rfind("x,y\n", 0) == 0);
  CHECK(text.find('\r') == std::string::npos);
  CHECK(parse_csv(text, "mem") == m);
  CHECK(parse_csv("x,y\r\n1,2\r\n", "mem") == (Mat(1, 2) << 1, 2).finished());
  CHECK_THROWS_AS(parse_csv("x,y\n1\n", "mem"), ConfigError);
  CHECK_THROWS_AS(parse_csv("x,y\n1,abc\n", "mem"), ConfigError);
  CHECK_THROWS_AS(parse_csv("", "mem"), ConfigError);
}

TEST_CASE("scatter svg: deterministic, two layers, empty samples, 2-D only") {
  Rng rng(2);
  const Mat ref = standard_normal(30, 2, rng), s = standard_normal(10, 2, rng);
  const auto svg = render_scatter_svg(s, ref, "t");
  CHECK(svg == render_scatter_svg(s, ref, "t"));
  CHECK(svg.find("id=\"reference\"") != std::string::npos);
  CHECK(svg.find("id=\"samples\"") != std::string::npos);

  const auto empty = render_scatter_svg(Mat(0, 2), ref, "");
  const auto start = empty.find("id=\"samples\"");
  REQUIRE(start != std::string::npos);
  CHECK(empty.find("<circle", start) == std::string::npos);

  const auto same = render_scatter_svg(ref, ref, "");
  const auto r0 = same.find("id=\"reference\""), s0 = same.find("id=\"samples\"");
  const auto ref_body = same.substr(same.find('\n', r0), same.find("</g>", r0) - same.find('\n', r0));
  const auto smp_body = same.substr(same.find('\n', s0), same.find("</g>", s0) - same.find('\n', s0));
  CHECK(ref_body == smp_body);

  CHECK_THROWS_AS(render_scatter_svg(Mat(Mat::Zero(3, 3)), ref, ""), ConfigError);
  CHECK_THROWS_AS(render_scatter_svg(s, Mat(Mat::Zero(3, 8)), ""), ConfigError);
}

TEST_CASE("built-in checks pass and report their tolerances") {
  const auto shift = check_shift();
  CHECK(shift.passed);
  CHECK(to_json(shift)["details"].size() == 2);
  const auto dec = check_decomposition(0, 100);
  CHECK(dec.passed);
  CHECK(dec.details.size() == 3);
  const auto grads = check_gradient_suite(0, 4);
  CHECK(grads.passed);
}

TEST_CASE("output resolution order") {
  auto spec = default_spec("shift-table");
  RunOptions opts;
  CHECK(resolve_output(spec, opts) == std::filesystem::path("pslab-out") / "shift-table");
  setenv(kOutputEnv, "/tmp/root", 1);
  CHECK(resolve_output(spec, opts) == std::filesystem::path("/tmp/root") / "shift-table");
  spec.output = "/tmp/from-spec";
  CHECK(resolve_output(spec, opts) == "/tmp/from-spec");
  opts.out = "/tmp/explicit";
  CHECK(resolve_output(spec, opts) == "/tmp/explicit");
  unsetenv(kOutputEnv);
}

TEST_CASE("shift-table recipe writes its artifacts and a manifest listing existing files") {
  auto spec = default_spec("shift-table");
  const auto dir = std::filesystem::temp_directory_path() / "pslab_lab_test";
  std::filesystem::remove_all(dir);
  const auto m = run_experiment(spec, {.out = dir});
  CHECK(m.config_hash == config_hash(spec));
  for (const auto& r : m.runs)
    for (const auto& p : r.paths) CHECK(std::filesystem::exists(dir / p));
  for (const auto& p : m.outputs) CHECK(std::filesystem::exists(dir / p));
  CHECK(m.summary["results"]["passed"] == true);
}

TEST_CASE("parallel_for visits every index once and rethrows failures") {
  std::vector<int> hits(10, 0);
  parallel_for(10, 3, [&](int i) { ++hits[static_cast<std::size_t>(i)]; });
  CHECK(std::count(hits.begin(), hits.end(), 1) == 10);
  CHECK_THROWS_AS(parallel_for(4, 2, [](int i) { if (i == 2) throw RuntimeFailure("x"); }), RuntimeFailure);
}

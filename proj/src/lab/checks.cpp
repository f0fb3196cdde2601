#include "pslab/lab/checks.hpp"

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "pslab/core/gradcheck.hpp"
#include "pslab/core/mlp.hpp"
#include "pslab/flow/timestep.hpp"
#include "pslab/oracle/oracle.hpp"
#include "pslab/synth/glyph.hpp"
#include "pslab/vae/codec.hpp"

namespace pslab::lab {

nlohmann::json to_json(const CheckReport& r) {
  return {{"check", r.name}, {"passed", r.passed}, {"details", r.details}};
}

CheckReport check_shift() {
  const double a = shift_factor(16, 2);
  const double b = shift_factor(768, 1);
  CheckReport r{"shift", a == 2.0 && std::abs(b - 6.9282) <= 0.005, {}};
  r.details = nlohmann::json::array({
      {{"channels", 16}, {"patch", 2}, {"shift", a}, {"expected", 2.0}, {"tolerance", 0.0}, {"ok", a == 2.0}},
      {{"channels", 768},
       {"patch", 1},
       {"shift", b},
       {"expected", 6.9282},
       {"tolerance", 0.005},
       {"ok", std::abs(b - 6.9282) <= 0.005}},
  });
  return r;
}

CheckReport check_decomposition(std::uint64_t seed, int trials, double tolerance) {
  CheckReport r{"decomposition", true, nlohmann::json::array()};
  const std::pair<int, int> dims[] = {{8, 2}, {16, 2}, {64, 8}};
  int index = 0;
  for (const auto& [h, l] : dims) {
    const auto s = derive_seed(seed, static_cast<std::uint64_t>(index++));
    Mat atoms;
    if (l == 2) {
      atoms = sample_glyph_points(64, derive_seed(s, 0));
    } else {
      Rng rng(derive_seed(s, 0));
      atoms = standard_normal(64, l, rng);
    }
    const auto q = make_embedding(h, l, derive_seed(s, 1));
    const auto rep = verify_decomposition(q, atoms, trials, derive_seed(s, 2));
    const bool ok = rep.max_rel_err <= tolerance;
    r.passed = r.passed && ok;
    r.details.push_back({{"ambient_dim", h},
                         {"intrinsic_dim", l},
                         {"atoms", rep.atoms},
                         {"trials", rep.trials},
                         {"max_rel_err", rep.max_rel_err},
                         {"mean_err", rep.mean_err},
                         {"tolerance", tolerance},
                         {"ok", ok}});
  }
  return r;
}

namespace {

struct Problem {
  std::string kind;
  std::vector<Mlp<double>> nets;
  std::function<Var<double>(Tape<double>&, std::vector<Mlp<double>>&)> loss;
};

MlpSpec random_spec(Rng& rng, int input, int output, int head) {
  std::uniform_int_distribution<int> width(2, 6), depth(1, 3);
  return {.input = input, .width = width(rng), .depth = depth(rng), .output = output, .head_inputs = head};
}

Problem make_problem(int index, Rng& rng) {
  std::uniform_int_distribution<int> small(1, 4), batch(2, 5);
  const int n = batch(rng);
  switch (index % 4) {
    case 0: {  // regression
      const int in = small(rng), out = small(rng);
      Problem p{"mlp-mse", {}, {}};
      p.nets.push_back(make_mlp<double>(random_spec(rng, in, out, 0), rng));
      const Mat x = standard_normal(n, in, rng), y = standard_normal(n, out, rng);
      p.loss = [x, y](Tape<double>& t, std::vector<Mlp<double>>& nets) {
        return mse(forward(t, nets[0], t.constant(x)), t.constant(y));
      };
      return p;
    }
    case 1: {  // velocity network with a wide head
      const int d = small(rng) + 1;
      Problem p{"flow-wide-head", {}, {}};
      p.nets.push_back(make_mlp<double>(random_spec(rng, d + 1, d, d), rng));
      const Mat x = standard_normal(n, d, rng), target = standard_normal(n, d, rng);
      const Mat tt = uniform<double>(n, 1, 0.05, 0.95, rng);
      p.loss = [x, target, tt](Tape<double>& t, std::vector<Mlp<double>>& nets) {
        const auto xv = t.constant(x);
        return mse(forward(t, nets[0], concat_cols(xv, t.constant(tt)), std::optional(xv)), t.constant(target));
      };
      return p;
    }
    case 2: {  // encoder, reparameterized latent, decoder, semantic + KL
      const int dh = small(rng) + 2, dl = small(rng) % 2 + 1;
      Problem p{"vae-semantic-kl", {}, {}};
      p.nets.push_back(make_mlp<double>(random_spec(rng, dh, 2 * dl, 0), rng));
      p.nets.push_back(make_mlp<double>(random_spec(rng, dl, dh, 0), rng));
      const Mat f = standard_normal(n, dh, rng), eps = standard_normal(n, dl, rng);
      p.loss = [f, eps, dl](Tape<double>& t, std::vector<Mlp<double>>& nets) {
        const auto fv = t.constant(f);
        const auto stats = forward(t, nets[0], fv);
        const auto mu = slice_cols(stats, 0, dl);
        const auto logvar = clamp(slice_cols(stats, dl, dl), -12.0, 6.0);
        const auto z = mu + hadamard(exp(scale(logvar, 0.5)), t.constant(eps));
        return semantic_loss(forward(t, nets[1], z), fv) + 0.5 * kl_loss(mu, logvar);
      };
      return p;
    }
    default: {  // elementwise and reduction ops
      const int in = small(rng), out = small(rng);
      Problem p{"mixed-ops", {}, {}};
      p.nets.push_back(make_mlp<double>(random_spec(rng, in, out, 0), rng));
      const Mat x = standard_normal(n, in, rng), w = standard_normal(n, out, rng);
      p.loss = [x, w](Tape<double>& t, std::vector<Mlp<double>>& nets) {
        const auto y = forward(t, nets[0], t.constant(x));
        const auto a = mean(square(hadamard(y, t.constant(w))));
        const auto b = sum(exp(scale(y, 0.1)));
        const auto c = mean(mul_col(y, row_sum(y)));
        return a + 0.1 * b - 0.5 * c;
      };
      return p;
    }
  }
}

}  // namespace

CheckReport check_gradient_suite(std::uint64_t seed, int count, double tolerance) {
  CheckReport r{"gradients", true, nlohmann::json::array()};
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    Problem p = make_problem(i, rng);
    {
      Tape<double> tape;
      const auto loss = p.loss(tape, p.nets);
      for (auto& net : p.nets) net.params.zero_grad();
      tape.backward(loss);
    }
    auto value = [&p]() {
      Tape<double> tape;
      return p.loss(tape, p.nets).value()(0, 0);
    };
    double worst = 0.0;
    std::size_t coords = 0;
    std::string where;
    for (std::size_t k = 0; k < p.nets.size(); ++k) {
      const auto res = check_gradients(p.nets[k].params, value);
      coords += res.coordinates;
      if (res.max_rel_error >= worst) {
        worst = res.max_rel_error;
        where = "net" + std::to_string(k) + "." + res.worst_parameter + "[" + std::to_string(res.worst_index) + "]";
      }
    }
    const bool ok = worst <= tolerance;
    r.passed = r.passed && ok;
    r.details.push_back({{"case", i},
                         {"kind", p.kind},
                         {"coordinates", coords},
                         {"max_rel_err", worst},
                         {"worst", where},
                         {"tolerance", tolerance},
                         {"ok", ok}});
  }
  return r;
}

}  // namespace pslab::lab

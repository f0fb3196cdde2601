#include "pslab/oracle/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "pslab/synth/glyph.hpp"

namespace pslab {

DatasetOracle::DatasetOracle(Mat atoms, double t_min) : atoms_(std::move(atoms)), t_min_(t_min) {
  require(atoms_.rows() >= 1 && atoms_.cols() >= 1, "oracle: needs at least one atom");
  require(all_finite(atoms_), "oracle: atoms must be finite");
  require(t_min_ > 0.0 && t_min_ < 1.0, "oracle: t_min must lie in (0, 1)");
  atom_sq_norms_ = atoms_.rowwise().squaredNorm();
}

Vec DatasetOracle::posterior_weights(const RowVec& xt, double t) const {
  require(xt.size() == dim(), "oracle: state width mismatch");
  require(t >= t_min_ && t <= 1.0, "oracle: t must lie in [t_min, 1]");
  const double a = 1.0 - t;
  Vec logw(atoms_.rows());
  for (Eigen::Index i = 0; i < atoms_.rows(); ++i)
    logw(i) = -(xt - a * atoms_.row(i)).squaredNorm() / (2.0 * t * t);
  logw.array() -= logw.maxCoeff();
  Vec w = logw.array().exp();
  return w / w.sum();
}

Mat DatasetOracle::velocity(const Mat& xt, double t) const {
  require(xt.cols() == dim(), "oracle: state width " + std::to_string(xt.cols()) + " does not match atom width " +
                                  std::to_string(dim()));
  require(t >= t_min_ && t <= 1.0, "oracle: t must lie in [t_min, 1]");
  Mat out(xt.rows(), xt.cols());
  for (Eigen::Index r = 0; r < xt.rows(); ++r) {
    const Vec w = posterior_weights(xt.row(r), t);
    // sum_i w_i [ (x_t - (1-t) p_i)/t - p_i ] = (x_t - (1-t) pbar)/t - pbar
    const RowVec pbar = w.transpose() * atoms_;
    out.row(r) = (xt.row(r) - (1.0 - t) * pbar) / t - pbar;
  }
  return out;
}

VelocityField DatasetOracle::field() const {
  return [this](const Mat& x, double t) { return velocity(x, std::max(t, t_min_)); };
}

Mat decomposition_rhs(const OrthonormalEmbedding& q, const DatasetOracle& intrinsic, const Mat& xt, double t) {
  require(intrinsic.dim() == q.intrinsic_dim(), "decomposition_rhs: oracle width does not match embedding");
  require(xt.cols() == q.ambient_dim(), "decomposition_rhs: state width does not match ambient dimension");
  const Mat z = project(q, xt);
  const Mat along = embed(q, intrinsic.velocity(z, t));
  const Mat residual = xt - embed(q, z);
  return along + residual / t;
}

DecompositionReport verify_decomposition(const OrthonormalEmbedding& q, const Mat& intrinsic_atoms, int trials,
                                         std::uint64_t seed) {
  require(trials >= 1, "verify_decomposition: trials must be >= 1");
  const DatasetOracle intrinsic(intrinsic_atoms);
  const DatasetOracle ambient(embed(q, intrinsic_atoms));
  Rng rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, intrinsic_atoms.rows() - 1);
  std::uniform_real_distribution<double> time(0.05, 0.95);

  DecompositionReport report;
  report.ambient_dim = q.ambient_dim();
  report.intrinsic_dim = q.intrinsic_dim();
  report.atoms = static_cast<int>(intrinsic_atoms.rows());
  report.trials = trials;
  report.seed = seed;
  double total = 0.0;
  for (int k = 0; k < trials; ++k) {
    const double t = time(rng);
    const RowVec x0 = ambient.atoms().row(pick(rng));
    const RowVec eps = standard_normal(1, q.ambient_dim(), rng);
    const Mat xt = (1.0 - t) * x0 + t * eps;
    const Mat lhs = ambient.velocity(xt, t);
    const Mat rhs = decomposition_rhs(q, intrinsic, xt, t);
    const double rel = (lhs - rhs).norm() / std::max(lhs.norm(), 1e-300);
    report.max_rel_err = std::max(report.max_rel_err, rel);
    total += rel;
  }
  report.mean_err = total / trials;
  return report;
}

const CapacityProbeEntry& CapacityProbeReport::find(int width, bool wide_head) const {
  for (const auto& e : entries)
    if (e.width == width && e.wide_head == wide_head) return e;
  throw ConfigError("capacity probe: no entry for width " + std::to_string(width));
}

CapacityProbeReport capacity_probe(const CapacityProbeConfig& c, std::uint64_t seed) {
  require(c.ambient_dim >= 1, "capacity_probe: ambient_dim must be >= 1");
  require(!c.widths.empty() && !c.wide_heads.empty(), "capacity_probe: need at least one configuration");
  // One glyph point, embedded isometrically when h > 2.
  Mat z = sample_glyph_points(1, derive_seed(seed, 10));
  RowVec atom;
  if (c.ambient_dim > 2) {
    atom = embed(OrthonormalEmbedding::random(c.ambient_dim, 2, derive_seed(seed, 11)), z).row(0);
  } else if (c.ambient_dim == 2) {
    atom = z.row(0);
  } else {
    atom = z.block(0, 0, 1, 1);
  }
  const DataSampler data = [atom](Eigen::Index n, Rng&) { return Mat(atom.replicate(n, 1)); };

  TimestepSampler sampler;
  sampler.shift = c.shift >= 1.0 ? c.shift : toy_shift_factor(c.ambient_dim);

  CapacityProbeReport report;
  report.ambient_dim = c.ambient_dim;
  report.seed = seed;
  report.shift = sampler.shift;
  {
    Rng rng(derive_seed(seed, 12));
    const Mat x0 = data(c.eval_samples, rng);
    const Mat eps = standard_normal(c.eval_samples, c.ambient_dim, rng);
    report.zero_predictor_loss = velocity_target(x0, eps).squaredNorm() / static_cast<double>(x0.size());
  }
  for (int width : c.widths) {
    for (bool wide : c.wide_heads) {
      FlowModel model = make_flow_model(
          {.dim = c.ambient_dim, .width = width, .depth = c.depth, .wide_head = wide}, derive_seed(seed, 13));
      CapacityProbeEntry entry{width, wide, 0.0, 0.0};
      entry.initial_loss = flow_eval_loss(model, data, sampler, c.eval_samples, derive_seed(seed, 12));
      train_flow(model, data, sampler, {.steps = c.steps, .batch = c.batch, .lr = c.lr, .seed = derive_seed(seed, 14)});
      entry.final_loss = flow_eval_loss(model, data, sampler, c.eval_samples, derive_seed(seed, 12));
      report.entries.push_back(entry);
    }
  }
  return report;
}

}  // namespace pslab

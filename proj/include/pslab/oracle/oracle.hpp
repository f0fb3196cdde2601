#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pslab/core/dense.hpp"
#include "pslab/flow/flow.hpp"
#include "pslab/synth/embedding.hpp"

namespace pslab {

/// Exact E[eps - x0 | x_t] for the empirical distribution over a finite set of atoms.
class DatasetOracle {
 public:
  explicit DatasetOracle(Mat atoms, double t_min = 1e-3);

  const Mat& atoms() const { return atoms_; }
  int dim() const { return static_cast<int>(atoms_.cols()); }
  double t_min() const { return t_min_; }

  /// Posterior weights over atoms for one state x_t (1 x d), via max-subtracted log-sum-exp.
  Vec posterior_weights(const RowVec& xt, double t) const;

  /// Exact velocity for every row of `xt` at time t.
  Mat velocity(const Mat& xt, double t) const;

  VelocityField field() const;

 private:
  Mat atoms_;
  Vec atom_sq_norms_;
  double t_min_;
};

inline Mat exact_velocity(const DatasetOracle& oracle, const Mat& xt, double t) { return oracle.velocity(xt, t); }

/// Q v_z(Q^T x_t) + (1/t)(I - QQ^T) x_t, computed from the intrinsic oracle only.
Mat decomposition_rhs(const OrthonormalEmbedding& q, const DatasetOracle& intrinsic, const Mat& xt, double t);

struct DecompositionReport {
  int ambient_dim = 0;
  int intrinsic_dim = 0;
  int atoms = 0;
  int trials = 0;
  std::uint64_t seed = 0;
  double max_rel_err = 0.0;
  double mean_err = 0.0;  // mean relative error
};

/// Compares the ambient oracle over {Q z_i} with decomposition_rhs on random
/// states x_t = (1-t) Q z_i + t eps, t ~ U[0.05, 0.95].
DecompositionReport verify_decomposition(const OrthonormalEmbedding& q, const Mat& intrinsic_atoms, int trials,
                                         std::uint64_t seed);

struct CapacityProbeConfig {
  int ambient_dim = 64;
  std::vector<int> widths{16};
  std::vector<bool> wide_heads{false, true};
  int depth = 4;
  int steps = 10000;
  int batch = 128;
  double lr = 1e-3;
  int eval_samples = 4096;
  double shift = -1.0;  // < 1 means toy_shift_factor(ambient_dim)
};

struct CapacityProbeEntry {
  int width = 0;
  bool wide_head = false;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct CapacityProbeReport {
  int ambient_dim = 0;
  std::uint64_t seed = 0;
  double shift = 1.0;
  double zero_predictor_loss = 0.0;  // loss of v == 0 on the evaluation batch
  std::vector<CapacityProbeEntry> entries;

  const CapacityProbeEntry& find(int width, bool wide_head) const;
};

/// Fits flow models to a single glyph atom embedded in R^h for every
/// (width, wide head) pair, with shared seeds and budget.
CapacityProbeReport capacity_probe(const CapacityProbeConfig& config, std::uint64_t seed);

}  // namespace pslab

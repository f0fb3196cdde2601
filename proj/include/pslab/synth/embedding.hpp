#pragma once

#include <cstdint>

#include "pslab/core/dense.hpp"

namespace pslab {

/// Column-orthonormal Q (h x l) placing an l-dimensional space isometrically in R^h.
class OrthonormalEmbedding {
 public:
  /// Q from the thin QR factor of an h x l standard-normal matrix. Requires 1 <= l < h.
  static OrthonormalEmbedding random(int h, int l, std::uint64_t seed);
  /// Q = I_h; the degenerate l == h case used as a control.
  static OrthonormalEmbedding identity(int h);
  /// Wraps an explicit matrix after checking orthonormality to `tolerance`.
  static OrthonormalEmbedding from_matrix(Mat q, double tolerance = 1e-10);

  int ambient_dim() const { return static_cast<int>(q_.rows()); }
  int intrinsic_dim() const { return static_cast<int>(q_.cols()); }
  const Mat& matrix() const { return q_; }

  /// max |Q^T Q - I|
  double orthonormality_error() const;

 private:
  explicit OrthonormalEmbedding(Mat q) : q_(std::move(q)) {}
  Mat q_;
};

inline OrthonormalEmbedding make_embedding(int h, int l, std::uint64_t seed) {
  return OrthonormalEmbedding::random(h, l, seed);
}

/// Rows z (n x l) -> rows Qz (n x h).
Mat embed(const OrthonormalEmbedding& q, const Mat& z);
/// Rows x (n x h) -> rows Q^T x (n x l).
Mat project(const OrthonormalEmbedding& q, const Mat& x);
/// Rows x -> rows (I - QQ^T) x.
Mat orthogonal_residual(const OrthonormalEmbedding& q, const Mat& x);

}  // namespace pslab

#include "pslab/synth/embedding.hpp"

namespace pslab {

OrthonormalEmbedding OrthonormalEmbedding::random(int h, int l, std::uint64_t seed) {
  require(l >= 1, "make_embedding: intrinsic dimension must be >= 1");
  require(l < h, "make_embedding: intrinsic dimension " + std::to_string(l) +
                     " must be smaller than ambient dimension " + std::to_string(h));
  Rng rng(seed);
  const Eigen::MatrixXd gaussian = standard_normal(h, l, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  Eigen::MatrixXd thin = qr.householderQ() * Eigen::MatrixXd::Identity(h, l);
  // Fix column signs so Q does not depend on the QR convention.
  for (int j = 0; j < l; ++j)
    if (qr.matrixQR()(j, j) < 0) thin.col(j) *= -1.0;
  return OrthonormalEmbedding(Mat(thin));
}

OrthonormalEmbedding OrthonormalEmbedding::identity(int h) {
  require(h >= 1, "identity embedding: dimension must be >= 1");
  return OrthonormalEmbedding(Mat::Identity(h, h));
}

OrthonormalEmbedding OrthonormalEmbedding::from_matrix(Mat q, double tolerance) {
  require(q.rows() >= q.cols() && q.cols() >= 1, "embedding matrix must be h x l with h >= l >= 1");
  OrthonormalEmbedding e(std::move(q));
  require(e.orthonormality_error() <= tolerance, "embedding matrix columns are not orthonormal");
  return e;
}

double OrthonormalEmbedding::orthonormality_error() const {
  const Mat gram = q_.transpose() * q_;
  return (gram - Mat::Identity(q_.cols(), q_.cols())).cwiseAbs().maxCoeff();
}

Mat embed(const OrthonormalEmbedding& q, const Mat& z) {
  require(z.cols() == q.intrinsic_dim(), "embed: expected " + std::to_string(q.intrinsic_dim()) +
                                             "-dimensional rows, got " + std::to_string(z.cols()));
  return z * q.matrix().transpose();
}

Mat project(const OrthonormalEmbedding& q, const Mat& x) {
  require(x.cols() == q.ambient_dim(), "project: expected " + std::to_string(q.ambient_dim()) +
                                           "-dimensional rows, got " + std::to_string(x.cols()));
  return x * q.matrix();
}

Mat orthogonal_residual(const OrthonormalEmbedding& q, const Mat& x) {
  return x - project(q, x) * q.matrix().transpose();
}

}  // namespace pslab

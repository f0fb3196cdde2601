#include <doctest.h>

#include <cmath>

#include "pslab/synth/embedding.hpp"
#include "pslab/synth/glyph.hpp"
#include "pslab/synth/representation.hpp"
#include "pslab/vae/codec.hpp"

using namespace pslab;

TEST_CASE("glyph mask has both letters and samples stay inside the dilated mask") {
  const auto& g = GlyphDistribution::builtin();
  CHECK(g.width() == 256);
  CHECK(g.height() == 128);
  CHECK(g.cell_count(Letter::P) >= 1);
  CHECK(g.cell_count(Letter::S) >= 1);

  const auto s = g.sample(10000, 1);
  REQUIRE(s.points.rows() == 10000);
  REQUIRE(s.labels.size() == 10000);
  int outside = 0;
  for (Eigen::Index i = 0; i < s.points.rows(); ++i) {
    const Eigen::Vector2d grid = g.to_grid(s.points.row(i).transpose());
    if (!g.occupied_dilated(static_cast<int>(std::floor(grid.x())), static_cast<int>(std::floor(grid.y()))))
      ++outside;
  }
  CHECK(outside == 0);
}

TEST_CASE("glyph normalization: zero mean and unit per-coordinate RMS") {
  const Mat p = GlyphDistribution::builtin().sample(10000, 2).points;
  const RowVec mean = p.colwise().mean();
  CHECK(std::abs(mean(0)) <= 0.05);
  CHECK(std::abs(mean(1)) <= 0.05);
  const double rms = std::sqrt(p.squaredNorm() / static_cast<double>(p.size()));
  CHECK(std::abs(rms - 1.0) <= 0.05);
}

TEST_CASE("letter fraction matches the mask area within 3 sigma and is stable across seeds") {
  const auto& g = GlyphDistribution::builtin();
  const double expected = static_cast<double>(g.cell_count(Letter::P)) /
                          static_cast<double>(g.cell_count(Letter::P) + g.cell_count(Letter::S));
  CHECK(std::abs(expected - g.area_fraction(Letter::P)) <= 1e-12);

  const int n = 10000;
  const auto s = g.sample(n, 3);
  double p_count = 0;
  for (auto l : s.labels) p_count += l == Letter::P;
  const double sigma = std::sqrt(expected * (1.0 - expected) / n);
  CHECK(std::abs(p_count / n - expected) <= 3.0 * sigma);

  double lo = 1.0, hi = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto big = g.sample(100000, seed);
    double c = 0;
    for (auto l : big.labels) c += l == Letter::P;
    lo = std::min(lo, c / 1e5);
    hi = std::max(hi, c / 1e5);
  }
  CHECK(hi - lo <= 0.02);
}

TEST_CASE("portable bitmap parsing and empty masks") {
  const auto g = GlyphDistribution::from_pbm("P1\n4 2\n1 0 0 1\n1 0 0 1\n");
  CHECK(g.cell_count(Letter::P) == 2);
  CHECK(g.cell_count(Letter::S) == 2);
  CHECK_THROWS_AS(GlyphDistribution::from_pbm("P1\n2 1\n0 0\n"), ConfigError);
  CHECK_THROWS_AS(GlyphDistribution::from_pbm("P7\n1 1\n1\n"), ConfigError);
}

TEST_CASE("embedding has orthonormal columns and is an isometry") {
  for (auto [h, l] : {std::pair{8, 2}, {16, 2}, {64, 8}, {3, 1}}) {
    const auto q = make_embedding(h, l, 7);
    CHECK(q.orthonormality_error() <= 1e-10);
    Rng rng(h);
    const Mat z = standard_normal(20, l, rng);
    const Mat x = embed(q, z);
    CHECK((project(q, x) - z).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((x.rowwise().norm() - z.rowwise().norm()).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(orthogonal_residual(q, x).cwiseAbs().maxCoeff() <= 1e-10);
  }
  const auto q = make_embedding(8, 2, 1);
  CHECK(embed(q, Mat(Mat::Zero(1, 2))).isZero(0.0));
  CHECK_THROWS_AS(make_embedding(2, 2, 0), ConfigError);
  CHECK_THROWS_AS(make_embedding(2, 3, 0), ConfigError);
  CHECK_THROWS_AS(embed(q, Mat(Mat::Zero(1, 3))), ConfigError);
  CHECK_THROWS_AS(project(q, Mat(Mat::Zero(1, 7))), ConfigError);
}

TEST_CASE("projection kills orthogonal vectors and solves least squares") {
  const auto q = make_embedding(8, 2, 5);
  Rng rng(6);
  const Mat x = standard_normal(10, 8, rng);
  const Mat perp = orthogonal_residual(q, x);
  CHECK(project(q, perp).cwiseAbs().maxCoeff() <= 1e-10);

  const Mat z = project(q, x);
  const Mat qm = q.matrix();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd ls = qm.colPivHouseholderQr().solve(x.row(i).transpose());
    CHECK((ls.transpose() - z.row(i)).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("representation map is deterministic and unit-RMS calibrated") {
  const auto map = make_representation_map({}, 3);
  const Mat px = sample_glyph_points(4096, 99);
  const Mat f = rep_encode(map, px);
  CHECK(f == rep_encode(map, px));
  CHECK(f.cols() == 64);
  const double rms = std::sqrt(f.squaredNorm() / static_cast<double>(f.size()));
  CHECK(std::abs(rms - 1.0) <= 0.05);
}

TEST_CASE("lossy representation features span a (d_h - k)-dimensional subspace") {
  RepresentationConfig cfg;
  cfg.lossy = true;
  const auto map = make_representation_map(cfg, 4);
  CHECK(map.lost_directions().cols() == 8);
  const Mat f = rep_encode(map, sample_glyph_points(4096, 5));
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(f);
  const Eigen::VectorXd s = svd.singularValues();
  for (Eigen::Index i = s.size() - 8; i < s.size(); ++i) CHECK(s(i) <= 1e-8);
  CHECK(s(s.size() - 9) > 1e-6);

  const Mat w = map.network().params.value(map.network().weight(cfg.depth));
  const Eigen::JacobiSVD<Eigen::MatrixXd> ws(w);
  CHECK(ws.singularValues().tail(8).maxCoeff() <= 1e-10);
}

TEST_CASE("non-lossy features are invertible by a small decoder") {
  const auto map = make_representation_map({}, 6);
  const auto dec = train_feature_decoder([&](const Mat& px) { return rep_encode(map, px); }, 64, glyph_pixels(), {},
                                         {.steps = 2000, .batch = 256, .lr = 1e-3, .seed = 1});
  const Mat held = sample_glyph_points(4096, 1234);
  CHECK(pixel_loss(decode_features(dec, rep_encode(map, held)), held) <= 1e-3);
}

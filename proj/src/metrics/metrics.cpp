#include "pslab/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>

namespace pslab {

Vec nn_distances(const Mat& samples, const Mat& reference) {
  require(reference.rows() >= 1, "nn_distances: reference set is empty");
  require(samples.cols() == reference.cols(), "nn_distances: dimension mismatch");
  const Eigen::Index d = reference.cols();
  // Column-major copy so the inner loop streams each coordinate contiguously.
  const Eigen::MatrixXd ref = reference;
  Vec out(samples.rows());
  Eigen::ArrayXd acc(reference.rows());
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    acc.setZero();
    for (Eigen::Index k = 0; k < d; ++k) acc += (ref.col(k).array() - samples(i, k)).square();
    out(i) = std::sqrt(acc.minCoeff());
  }
  return out;
}

double tail_mean(const Vec& distances, double q) {
  require(distances.size() > 0, "tail_mean: empty input");
  require(q > 0.0 && q <= 1.0, "tail_mean: q must lie in (0, 1]");
  const auto n = static_cast<std::size_t>(distances.size());
  // Guard against n*q landing a hair above an integer through rounding.
  require(static_cast<double>(n) * q >= 1.0 - 1e-9, "tail_mean: n * q must be >= 1");
  const auto count = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * q - 1e-9));
  std::vector<double> v(distances.data(), distances.data() + distances.size());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(count - 1), v.end(), std::greater<>());
  std::sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(count), std::greater<>());
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) total += v[i];
  return total / static_cast<double>(count);
}

Vec off_manifold_residual(const OrthonormalEmbedding& q, const Mat& samples) {
  return orthogonal_residual(q, samples).rowwise().norm();
}

double psnr(double mse, double range) {
  require(mse >= 0.0 && range > 0.0, "psnr: needs mse >= 0 and range > 0");
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(range * range / mse);
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

std::string matrix_hash(const Mat& m) {
  std::string bytes(sizeof(double) * static_cast<std::size_t>(m.size()) + 2 * sizeof(Eigen::Index), '\0');
  const Eigen::Index dims[2] = {m.rows(), m.cols()};
  std::memcpy(bytes.data(), dims, sizeof dims);
  std::memcpy(bytes.data() + sizeof dims, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  return fnv1a_hex(bytes);
}

MetricsReport make_report(const Vec& distances, double q, std::string space, std::uint64_t seed,
                          std::string config_hash, std::string reference_hash) {
  require(distances.size() > 0, "metrics report: no distances");
  require((distances.array() >= 0.0).all(), "metrics report: distances must be non-negative");
  MetricsReport r;
  r.space = std::move(space);
  r.seed = seed;
  r.config_hash = std::move(config_hash);
  r.reference_hash = std::move(reference_hash);
  r.tail_fraction = q;
  r.tail_mean = tail_mean(distances, q);
  r.mean_nn = distances.mean();
  r.max_nn = distances.maxCoeff();
  r.sample_count = static_cast<std::size_t>(distances.size());
  r.distances = distances;
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j{{"space", r.space},
                   {"seed", r.seed},
                   {"config_hash", r.config_hash},
                   {"reference_hash", r.reference_hash},
                   {"tail_fraction", r.tail_fraction},
                   {"tail_mean", r.tail_mean},
                   {"mean_nn", r.mean_nn},
                   {"max_nn", r.max_nn},
                   {"sample_count", r.sample_count}};
  if (r.residual) j["residual"] = {{"mean", r.residual->mean}, {"max", r.residual->max}};
  if (r.pixel_mse) j["pixel_mse"] = *r.pixel_mse;
  if (r.psnr) j["psnr"] = *r.psnr;
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.space = j.at("space").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.reference_hash = j.at("reference_hash").get<std::string>();
    r.tail_fraction = j.at("tail_fraction").get<double>();
    r.tail_mean = j.at("tail_mean").get<double>();
    r.mean_nn = j.at("mean_nn").get<double>();
    r.max_nn = j.at("max_nn").get<double>();
    r.sample_count = j.at("sample_count").get<std::size_t>();
    if (j.contains("residual"))
      r.residual = ResidualStats{j["residual"].at("mean").get<double>(), j["residual"].at("max").get<double>()};
    if (j.contains("pixel_mse")) r.pixel_mse = j["pixel_mse"].get<double>();
    if (j.contains("psnr")) r.psnr = j["psnr"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("metrics report: ") + e.what());
  }
  return r;
}

SpaceComparison compare_spaces(const std::vector<MetricsReport>& a, const std::vector<MetricsReport>& b) {
  require(!a.empty() && a.size() == b.size(), "compare_spaces: need equally many reports per side");
  SpaceComparison c;
  c.space_a = a.front().space;
  c.space_b = b.front().space;
  c.reference_hash = a.front().reference_hash;
  double tail_a = 0, tail_b = 0, mean_a = 0, mean_b = 0, res_a = 0, res_b = 0;
  bool residuals = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    require(a[i].reference_hash == c.reference_hash && b[i].reference_hash == c.reference_hash,
            "compare_spaces: reports were computed against different reference sets");
    c.seeds.push_back(a[i].seed);
    c.per_seed_tail_ratio.push_back(b[i].tail_mean / a[i].tail_mean);
    tail_a += a[i].tail_mean;
    tail_b += b[i].tail_mean;
    mean_a += a[i].mean_nn;
    mean_b += b[i].mean_nn;
    residuals = residuals && a[i].residual && b[i].residual;
    if (residuals) {
      res_a += a[i].residual->mean;
      res_b += b[i].residual->mean;
    }
  }
  c.tail_ratio = tail_b / tail_a;
  c.mean_nn_ratio = mean_b / mean_a;
  if (residuals && res_a > 0.0) c.residual_ratio = res_b / res_a;
  return c;
}

nlohmann::json to_json(const SpaceComparison& c) {
  nlohmann::json j{{"space_a", c.space_a},
                   {"space_b", c.space_b},
                   {"reference_hash", c.reference_hash},
                   {"tail_ratio", c.tail_ratio},
                   {"mean_nn_ratio", c.mean_nn_ratio},
                   {"seeds", c.seeds},
                   {"per_seed_tail_ratio", c.per_seed_tail_ratio}};
  j["residual_ratio"] = c.residual_ratio ? nlohmann::json(*c.residual_ratio) : nlohmann::json(nullptr);
  return j;
}

}  // namespace pslab

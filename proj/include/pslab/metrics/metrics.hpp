#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pslab/core/dense.hpp"
#include "pslab/synth/embedding.hpp"

namespace pslab {

/// Euclidean distance from each sample row to its nearest reference row (exact, brute force).
Vec nn_distances(const Mat& samples, const Mat& reference);

/// Mean of the ceil(n q) largest distances.
double tail_mean(const Vec& distances, double q = 0.05);

/// |(I - QQ^T) x| for each row.
Vec off_manifold_residual(const OrthonormalEmbedding& q, const Mat& samples);

/// 10 log10(range^2 / mse) with range the peak-to-peak span of the reference.
double psnr(double mse, double range);

/// 64-bit FNV-1a over the raw bytes of a matrix; identifies reference sets.
std::string matrix_hash(const Mat& m);
/// 64-bit FNV-1a over a byte string, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

struct ResidualStats {
  double mean = 0.0;
  double max = 0.0;
};

struct MetricsReport {
  std::string space;            // e.g. "intrinsic-2d", "ambient-8d"
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string reference_hash;
  double tail_fraction = 0.05;
  double tail_mean = 0.0;
  double mean_nn = 0.0;
  double max_nn = 0.0;
  std::size_t sample_count = 0;
  std::optional<ResidualStats> residual;
  std::optional<double> pixel_mse;
  std::optional<double> psnr;
  Vec distances;  // not serialized; dump separately as CSV if needed
};

MetricsReport make_report(const Vec& distances, double q, std::string space, std::uint64_t seed,
                          std::string config_hash, std::string reference_hash);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

struct SpaceComparison {
  std::string space_a;
  std::string space_b;
  std::string reference_hash;
  double tail_ratio = 1.0;      // mean tail(B) / mean tail(A)
  double mean_nn_ratio = 1.0;
  std::optional<double> residual_ratio;
  std::vector<std::uint64_t> seeds;
  std::vector<double> per_seed_tail_ratio;
};

/// Ratios B / A over seed-paired report lists. All reports must share one reference hash.
SpaceComparison compare_spaces(const std::vector<MetricsReport>& a, const std::vector<MetricsReport>& b);
inline SpaceComparison compare_spaces(const MetricsReport& a, const MetricsReport& b) {
  return compare_spaces(std::vector{a}, std::vector{b});
}

nlohmann::json to_json(const SpaceComparison& c);

}  // namespace pslab

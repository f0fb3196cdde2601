#include "pslab/core/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

namespace pslab {
namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

std::uint64_t to_little_endian(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(bits);
  return bits;
}

}  // namespace

void save_checkpoint(const ParamSet<double>& params, const std::filesystem::path& stem) {
  nlohmann::json manifest;
  manifest["format"] = "pslab-params";
  manifest["dtype"] = "float64-le";
  auto& list = manifest["params"] = nlohmann::json::array();

  std::ofstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw RuntimeFailure("cannot write checkpoint " + with_suffix(stem, ".bin").string());
  std::uint64_t offset = 0;
  for (const auto& e : params.entries()) {
    const auto count = static_cast<std::uint64_t>(e.value.size());
    list.push_back({{"name", e.name},
                    {"shape", {e.value.rows(), e.value.cols()}},
                    {"offset", offset},
                    {"count", count}});
    for (Eigen::Index i = 0; i < e.value.size(); ++i) {
      const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(e.value.data()[i]));
      bin.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    offset += count * sizeof(double);
  }
  manifest["total_bytes"] = offset;
  std::ofstream json(with_suffix(stem, ".json"));
  json << manifest.dump(2) << '\n';
  if (!bin || !json) throw RuntimeFailure("failed writing checkpoint " + stem.string());
}

ParamSet<double> load_checkpoint(const std::filesystem::path& stem) {
  std::ifstream json(with_suffix(stem, ".json"));
  if (!json) throw ConfigError("missing checkpoint manifest " + with_suffix(stem, ".json").string());
  nlohmann::json manifest;
  try {
    json >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  require(manifest.value("dtype", "") == "float64-le", "checkpoint dtype must be float64-le");

  std::ifstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw ConfigError("missing checkpoint blob " + with_suffix(stem, ".bin").string());
  std::vector<char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  require(blob.size() == manifest.at("total_bytes").get<std::uint64_t>(), "checkpoint blob size does not match manifest");

  ParamSet<double> params;
  for (const auto& p : manifest.at("params")) {
    const auto rows = p.at("shape").at(0).get<Eigen::Index>();
    const auto cols = p.at("shape").at(1).get<Eigen::Index>();
    const auto offset = p.at("offset").get<std::uint64_t>();
    require(rows >= 0 && cols >= 0, "checkpoint shape must be non-negative");
    const auto bytes = static_cast<std::uint64_t>(rows * cols) * sizeof(double);
    require(offset + bytes <= blob.size(), "checkpoint entry '" + p.at("name").get<std::string>() + "' out of range");
    Mat value(rows, cols);
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, blob.data() + offset + static_cast<std::uint64_t>(i) * sizeof(double), sizeof bits);
      value.data()[i] = std::bit_cast<double>(to_little_endian(bits));
    }
    params.add(p.at("name").get<std::string>(), std::move(value));
  }
  return params;
}

void append_prefixed(ParamSet<double>& dst, const ParamSet<double>& src, const std::string& prefix) {
  for (const auto& e : src.entries()) dst.add(prefix + e.name, e.value);
}

ParamSet<double> extract_prefixed(const ParamSet<double>& src, const std::string& prefix) {
  ParamSet<double> out;
  for (const auto& e : src.entries())
    if (e.name.rfind(prefix, 0) == 0) out.add(e.name.substr(prefix.size()), e.value);
  return out;
}

}  // namespace pslab

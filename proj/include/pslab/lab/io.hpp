#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pslab/core/dense.hpp"

namespace pslab::lab {

/// Comma-separated, header row, '.' decimal, LF line endings, 17 significant digits.
std::string to_csv(const Mat& points, const std::vector<std::string>& header);
Mat parse_csv(const std::string& text, const std::string& source = "csv");

void write_csv(const std::filesystem::path& path, const Mat& points, const std::vector<std::string>& header);
Mat read_csv(const std::filesystem::path& path);

/// Two-layer scatter plot: reference points underneath, samples on top. The
/// viewport is the reference bounding box padded by 10% on each side.
std::string render_scatter_svg(const Mat& samples, const Mat& reference, const std::string& title = "");

/// Pretty-printed JSON with a trailing newline.
std::string json_text(const nlohmann::json& j);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace pslab::lab

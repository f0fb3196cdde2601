#include "pslab/lab/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pslab/core/error.hpp"

namespace pslab::lab {

namespace {

std::string format_number(double v, int precision) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, precision);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string to_csv(const Mat& points, const std::vector<std::string>& header) {
  require(static_cast<Eigen::Index>(header.size()) == points.cols(), "csv: header width does not match columns");
  std::string out;
  for (std::size_t j = 0; j < header.size(); ++j) out += (j ? "," : "") + header[j];
  out += '\n';
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
      if (j) out += ',';
      out += format_number(points(i, j), 17);
    }
    out += '\n';
  }
  return out;
}

Mat parse_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(source + ": empty file (expected a header row)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto cols = static_cast<Eigen::Index>(split(line, ',').size());
  std::vector<double> values;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (static_cast<Eigen::Index>(fields.size()) != cols)
      throw ConfigError(source + ": line " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                        " fields, expected " + std::to_string(cols));
    for (const auto& f : fields) {
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size())
        throw ConfigError(source + ": line " + std::to_string(row) + ": '" + f + "' is not a number");
      values.push_back(v);
    }
  }
  const auto rows = static_cast<Eigen::Index>(values.size()) / std::max<Eigen::Index>(cols, 1);
  Mat out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = values[static_cast<std::size_t>(i * cols + j)];
  return out;
}

void write_csv(const std::filesystem::path& path, const Mat& points, const std::vector<std::string>& header) {
  write_text(path, to_csv(points, header));
}

Mat read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path), path.string()); }

std::string render_scatter_svg(const Mat& samples, const Mat& reference, const std::string& title) {
  require(reference.cols() == 2, "plot: reference points must be 2-D, got " + std::to_string(reference.cols()) +
                                     " columns");
  require(samples.rows() == 0 || samples.cols() == 2,
          "plot: sample points must be 2-D, got " + std::to_string(samples.cols()) + " columns");
  require(reference.rows() >= 1, "plot: reference set is empty");
  require(all_finite(reference) && all_finite(samples), "plot: non-finite coordinates");

  constexpr double kSize = 640.0;
  const double x0 = reference.col(0).minCoeff(), x1 = reference.col(0).maxCoeff();
  const double y0 = reference.col(1).minCoeff(), y1 = reference.col(1).maxCoeff();
  const double wx = std::max(x1 - x0, 1e-12), wy = std::max(y1 - y0, 1e-12);
  const double left = x0 - 0.1 * wx, right = x1 + 0.1 * wx;
  const double bottom = y0 - 0.1 * wy, top = y1 + 0.1 * wy;
  const double scale = kSize / std::max(right - left, top - bottom);
  const double width = (right - left) * scale, height = (top - bottom) * scale;

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_number(width, 6) + "\" height=\"" +
         format_number(height, 6) + "\" viewBox=\"0 0 " + format_number(width, 6) + " " +
         format_number(height, 6) + "\">\n";
  if (!title.empty()) out += "<title>" + title + "</title>\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  auto layer = [&](const Mat& pts, const char* id, const char* color, double radius) {
    out += std::string("<g id=\"") + id + "\" fill=\"" + color + "\" fill-opacity=\"0.6\">\n";
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      const double px = (pts(i, 0) - left) * scale;
      const double py = (top - pts(i, 1)) * scale;
      out += "<circle cx=\"" + format_number(px, 6) + "\" cy=\"" + format_number(py, 6) + "\" r=\"" +
             format_number(radius, 3) + "\"/>\n";
    }
    out += "</g>\n";
  };
  layer(reference, "reference", "#9aa5b1", 1.2);
  layer(samples, "samples", "#d1495b", 1.2);
  out += "</svg>\n";
  return out;
}

std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, json_text(j)); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw RuntimeFailure("failed writing '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace pslab::lab

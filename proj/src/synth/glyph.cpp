#include "pslab/synth/glyph.hpp"

#include <cctype>
#include <cmath>
#include <string>

namespace pslab {

extern const char* const kBuiltinGlyphPbm;

namespace {

class PbmReader {
 public:
  explicit PbmReader(std::string_view text) : text_(text) {}

  // Next whitespace-delimited token, skipping '#' comments.
  std::string_view token() {
    skip_space();
    const auto start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  int integer() {
    const auto t = token();
    require(!t.empty(), "pbm: unexpected end of header");
    int value = 0;
    for (char c : t) {
      require(std::isdigit(static_cast<unsigned char>(c)) != 0, "pbm: malformed integer '" + std::string(t) + "'");
      value = value * 10 + (c - '0');
    }
    return value;
  }

  // Next '0'/'1' digit of a plain bitmap; digits may be unseparated.
  int bit() {
    skip_space();
    require(pos_ < text_.size(), "pbm: truncated pixel data");
    const char c = text_[pos_++];
    require(c == '0' || c == '1', "pbm: invalid pixel value");
    return c - '0';
  }

  std::string_view rest_after_single_space() {
    require(pos_ < text_.size(), "pbm: truncated raw data");
    return text_.substr(pos_ + 1);
  }

 private:
  void skip_space() {
    while (pos_ < text_.size()) {
      if (text_[pos_] == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

GlyphDistribution GlyphDistribution::from_pbm(std::string_view pbm, int split_column) {
  PbmReader reader(pbm);
  const auto magic = reader.token();
  require(magic == "P1" || magic == "P4", "pbm: expected P1 or P4 magic");
  const int width = reader.integer();
  const int height = reader.integer();
  require(width > 0 && height > 0, "pbm: dimensions must be positive");
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * height, 0);
  if (magic == "P1") {
    for (auto& m : mask) m = static_cast<std::uint8_t>(reader.bit());
  } else {
    const auto raw = reader.rest_after_single_space();
    const std::size_t stride = (static_cast<std::size_t>(width) + 7) / 8;
    require(raw.size() >= stride * height, "pbm: truncated raw data");
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c)
        mask[static_cast<std::size_t>(r) * width + c] =
            (static_cast<unsigned char>(raw[r * stride + c / 8]) >> (7 - c % 8)) & 1u;
  }
  return GlyphDistribution(width, height, std::move(mask), split_column < 0 ? width / 2 : split_column);
}

GlyphDistribution::GlyphDistribution(int width, int height, std::vector<std::uint8_t> mask, int split_column)
    : width_(width), height_(height), mask_(std::move(mask)) {
  for (int r = 0; r < height_; ++r)
    for (int c = 0; c < width_; ++c)
      if (mask_[static_cast<std::size_t>(r) * width_ + c])
        cells_.push_back({c, r, c < split_column ? Letter::P : Letter::S});
  require(!cells_.empty(), "glyph mask has no occupied cells");
  require(cell_count(Letter::P) > 0 && cell_count(Letter::S) > 0, "glyph mask needs at least one cell per letter");

  // Exact moments of the uniform density over occupied unit cells.
  double mc = 0.0, mr = 0.0;
  for (const auto& cell : cells_) {
    mc += cell.col + 0.5;
    mr += cell.row + 0.5;
  }
  const double n = static_cast<double>(cells_.size());
  center_col_ = mc / n;
  center_row_ = mr / n;
  double second = 0.0;
  for (const auto& cell : cells_) {
    const double dc = cell.col + 0.5 - center_col_;
    const double dr = cell.row + 0.5 - center_row_;
    second += dc * dc + dr * dr;
  }
  const double per_coordinate = (second / n + 2.0 / 12.0) / 2.0;
  scale_ = 1.0 / std::sqrt(per_coordinate);
}

const GlyphDistribution& GlyphDistribution::builtin() {
  static const GlyphDistribution glyph = from_pbm(kBuiltinGlyphPbm);
  return glyph;
}

bool GlyphDistribution::occupied(int col, int row) const {
  if (col < 0 || row < 0 || col >= width_ || row >= height_) return false;
  return mask_[static_cast<std::size_t>(row) * width_ + col] != 0;
}

bool GlyphDistribution::occupied_dilated(int col, int row) const {
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc)
      if (occupied(col + dc, row + dr)) return true;
  return false;
}

std::size_t GlyphDistribution::cell_count(Letter letter) const {
  std::size_t n = 0;
  for (const auto& c : cells_) n += c.letter == letter;
  return n;
}

double GlyphDistribution::area_fraction(Letter letter) const {
  return static_cast<double>(cell_count(letter)) / static_cast<double>(cells_.size());
}

Eigen::Vector2d GlyphDistribution::normalize(double col, double row) const {
  // Image rows grow downwards; flip so the glyph reads upright.
  return {(col - center_col_) * scale_, -(row - center_row_) * scale_};
}

Eigen::Vector2d GlyphDistribution::to_grid(const Eigen::Vector2d& p) const {
  return {p.x() / scale_ + center_col_, -p.y() / scale_ + center_row_};
}

GlyphSample GlyphDistribution::sample(Eigen::Index n, std::uint64_t seed) const {
  require(n >= 1, "sample_glyph: n must be >= 1");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, cells_.size() - 1);
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  GlyphSample out{Mat(n, 2), std::vector<Letter>(static_cast<std::size_t>(n))};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& cell = cells_[pick(rng)];
    const double u = jitter(rng);
    const double v = jitter(rng);
    out.points.row(i) = normalize(cell.col + u, cell.row + v).transpose();
    out.labels[static_cast<std::size_t>(i)] = cell.letter;
  }
  return out;
}

Mat sample_glyph_points(Eigen::Index n, std::uint64_t seed) {
  return GlyphDistribution::builtin().sample(n, seed).points;
}

}  // namespace pslab

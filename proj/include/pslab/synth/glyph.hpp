#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "pslab/core/dense.hpp"

namespace pslab {

enum class Letter : std::uint8_t { P = 0, S = 1 };

inline const char* to_string(Letter l) { return l == Letter::P ? "P" : "S"; }

struct GlyphSample {
  Mat points;                   // n x 2, normalized coordinates
  std::vector<Letter> labels;   // letter region of each point
};

/// The "PS" ground-truth distribution: uniform over the occupied cells of a
/// bitmap mask, jittered uniformly within each cell, then mapped by a fixed
/// isotropic affine transform to zero mean and unit per-coordinate RMS.
/// Columns left of `split_column` belong to P, the rest to S.
class GlyphDistribution {
 public:
  struct Cell {
    int col;
    int row;
    Letter letter;
  };

  /// Parses a plain (P1) or raw (P4) portable bitmap.
  static GlyphDistribution from_pbm(std::string_view pbm, int split_column = -1);
  /// The 256x128 mask shipped in data/ps_glyph.pbm.
  static const GlyphDistribution& builtin();

  GlyphSample sample(Eigen::Index n, std::uint64_t seed) const;

  int width() const { return width_; }
  int height() const { return height_; }
  bool occupied(int col, int row) const;
  /// True when (col,row) is within one cell (8-neighbourhood) of an occupied cell.
  bool occupied_dilated(int col, int row) const;
  const std::vector<Cell>& cells() const { return cells_; }
  std::size_t cell_count(Letter letter) const;
  /// Fraction of the occupied area that belongs to `letter`.
  double area_fraction(Letter letter) const;

  /// Grid position (column, row, continuous) -> normalized point.
  Eigen::Vector2d normalize(double col, double row) const;
  /// Normalized point -> continuous grid position (column, row).
  Eigen::Vector2d to_grid(const Eigen::Vector2d& point) const;

  double scale() const { return scale_; }

 private:
  GlyphDistribution(int width, int height, std::vector<std::uint8_t> mask, int split_column);

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> mask_;
  std::vector<Cell> cells_;
  double center_col_ = 0.0;
  double center_row_ = 0.0;
  double scale_ = 1.0;
};

/// Convenience: `n` normalized glyph points, labels dropped.
Mat sample_glyph_points(Eigen::Index n, std::uint64_t seed);

}  // namespace pslab

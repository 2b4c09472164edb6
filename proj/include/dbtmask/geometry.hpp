#pragma once

#include <cstdint>
#include <vector>

#include "dbtmask/volume.hpp"

namespace dbtmask {

// Continuous pixel coordinates: x is the column, y the row; pixel (i, j) has
// its center at (x = j, y = i).
struct Point {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point&) const = default;
};

struct PolygonRoi {
  std::vector<Point> vertices;
  int annotated_slice = 0;

  bool operator==(const PolygonRoi&) const = default;
};

// Throws ValidationError naming the violated rule: fewer than 3 vertices,
// non-finite coordinates, consecutive duplicates (including last-to-first),
// or a vertex outside [-0.5, cols - 0.5] x [-0.5, rows - 0.5].
void validate_polygon(const PolygonRoi& roi, int rows, int cols);

class BinaryMask2D {
 public:
  BinaryMask2D() = default;
  BinaryMask2D(int rows, int cols);
  BinaryMask2D(int rows, int cols, std::vector<std::uint8_t> bits);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return bits_.size(); }

  bool at(int row, int col) const { return bits_[index(row, col)] != 0; }
  void set(int row, int col, bool value = true) { bits_[index(row, col)] = value ? 1 : 0; }

  // One byte per pixel, 0 or 1, row-major.
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  std::vector<std::uint8_t>& bits() { return bits_; }

  std::size_t popcount() const;
  bool same_shape(const BinaryMask2D& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool operator==(const BinaryMask2D&) const = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * cols_ + col;
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Even-odd fill sampled at pixel centers. A center lying exactly on an edge
// is inside iff that edge is a left edge; centers on a horizontal top edge
// are inside, on a bottom edge outside.
BinaryMask2D rasterize_polygon(const PolygonRoi& roi, int rows, int cols);

struct MaskArea {
  std::size_t pixels = 0;
  double area_mm2 = 0.0;
};

MaskArea mask_area(const BinaryMask2D& mask, const PixelSpacing& spacing);

}  // namespace dbtmask

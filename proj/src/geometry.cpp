#include "dbtmask/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dbtmask/errors.hpp"

namespace dbtmask {

void validate_polygon(const PolygonRoi& roi, int rows, int cols) {
  const auto& v = roi.vertices;
  if (v.size() < 3) {
    throw ValidationError("polygon needs at least 3 vertices, got " + std::to_string(v.size()));
  }
  const double x_max = cols - 0.5;
  const double y_max = rows - 0.5;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const Point& p = v[k];
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw ValidationError("vertex " + std::to_string(k) + " is not finite");
    }
    if (p.x < -0.5 || p.x > x_max || p.y < -0.5 || p.y > y_max) {
      std::ostringstream msg;
      msg << "vertex " << k << " (" << p.x << ", " << p.y << ") outside bounds [-0.5, " << x_max
          << "] x [-0.5, " << y_max << "]";
      throw ValidationError(msg.str());
    }
    const Point& next = v[(k + 1) % v.size()];
    if (p == next) {
      throw ValidationError("duplicate consecutive vertex at index " + std::to_string(k));
    }
  }
}

BinaryMask2D::BinaryMask2D(int rows, int cols)
    : rows_(rows), cols_(cols), bits_(static_cast<std::size_t>(rows) * cols, 0) {
  if (rows < 1 || cols < 1) throw ValidationError("mask dimensions must be positive");
}

BinaryMask2D::BinaryMask2D(int rows, int cols, std::vector<std::uint8_t> bits)
    : rows_(rows), cols_(cols), bits_(std::move(bits)) {
  if (rows < 1 || cols < 1) throw ValidationError("mask dimensions must be positive");
  if (bits_.size() != static_cast<std::size_t>(rows) * cols) {
    throw ValidationError("mask bit count does not match rows*cols");
  }
  for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BinaryMask2D::popcount() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask2D rasterize_polygon(const PolygonRoi& roi, int rows, int cols) {
  validate_polygon(roi, rows, cols);
  BinaryMask2D mask(rows, cols);
  const auto& v = roi.vertices;
  const std::size_t n = v.size();

  std::vector<double> crossings;
  crossings.reserve(n);
  for (int i = 0; i < rows; ++i) {
    const double y = i;
    crossings.clear();
    for (std::size_t k = 0; k < n; ++k) {
      const Point& a = v[k];
      const Point& b = v[(k + 1) % n];
      // Half-open in y: an edge spans [min_y, max_y). Horizontal edges never
      // cross.
      const bool spans = (a.y <= y && y < b.y) || (b.y <= y && y < a.y);
      if (!spans) continue;
      crossings.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
    }
    std::sort(crossings.begin(), crossings.end());
    // Center x = j is inside iff an odd number of crossings satisfy
    // crossing <= j, i.e. j lies in [c[2k], c[2k+1]).
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      const int first = std::max(0, static_cast<int>(std::ceil(crossings[k])));
      const int last = std::min(cols - 1, static_cast<int>(std::ceil(crossings[k + 1])) - 1);
      for (int j = first; j <= last; ++j) mask.set(i, j);
    }
  }
  return mask;
}

MaskArea mask_area(const BinaryMask2D& mask, const PixelSpacing& spacing) {
  const std::size_t pixels = mask.popcount();
  return {pixels, static_cast<double>(pixels) * spacing.row_mm * spacing.col_mm};
}

}  // namespace dbtmask

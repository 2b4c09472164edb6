#pragma once

#include <cstddef>
#include <vector>

#include "dbtmask/geometry.hpp"
#include "dbtmask/volume.hpp"

namespace dbtmask {

// The reader's entire input: ROI on the central slice plus the threshold
// chosen there. reference_area_px is derived and cached by make_annotation.
struct Annotation {
  PolygonRoi polygon;
  double central_threshold = 0.0;
  std::size_t reference_area_px = 0;

  bool operator==(const Annotation&) const = default;
};

struct DenseMask {
  int n_slices = 0;
  int rows = 0;
  int cols = 0;
  std::vector<BinaryMask2D> slices;
  std::vector<double> slice_thresholds;
  std::vector<std::size_t> slice_areas_px;

  bool operator==(const DenseMask&) const = default;
};

// Checks the length and popcount invariants; throws ValidationError.
void validate_dense_mask(const DenseMask& mask);

// Pixels inside the ROI whose normalized value is >= t.
BinaryMask2D segment_slice(const NormalizedSlice& norm, const BinaryMask2D& roi_mask, double t);

// Sorted unique ROI values, with 0.0 prepended when absent. The segmented
// area only changes at these values.
std::vector<double> candidate_thresholds(const NormalizedSlice& norm, const BinaryMask2D& roi_mask);

struct ThresholdMatch {
  double threshold = 0.0;
  std::size_t area_px = 0;

  bool operator==(const ThresholdMatch&) const = default;
};

// Candidate threshold minimizing |area(t) - reference_area_px|; ties go to
// the largest threshold. O(n log n) in the ROI size.
ThresholdMatch find_matching_threshold(const NormalizedSlice& norm, const BinaryMask2D& roi_mask,
                                       std::size_t reference_area_px);

// Rasterizes the polygon on the volume grid and caches the central-slice
// dense area. Throws ValidationError if the polygon is invalid, the
// threshold lies outside [0, 1] or the ROI rasterizes to no pixels.
Annotation make_annotation(const DbtVolume& volume, PolygonRoi polygon, double central_threshold);

// Applies the central ROI to every slice. The central slice keeps the
// reader's threshold; every other slice is searched independently. Work is
// split over `threads` workers; the result does not depend on the count.
DenseMask propagate(const DbtVolume& volume, const Annotation& annotation, unsigned threads = 1);

struct Measurements {
  std::vector<std::size_t> slice_area_px;
  std::vector<double> slice_area_mm2;
  std::size_t total_dense_voxels = 0;
  std::size_t total_roi_voxels = 0;
  // total_dense_voxels / total_roi_voxels, in [0, 1].
  double percent_density = 0.0;
};

Measurements measure(const DenseMask& mask, const BinaryMask2D& roi_mask, const PixelSpacing& spacing);

}  // namespace dbtmask

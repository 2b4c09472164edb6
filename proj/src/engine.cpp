#include "dbtmask/engine.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "dbtmask/errors.hpp"

namespace dbtmask {

namespace {

void require_same_shape(const NormalizedSlice& norm, const BinaryMask2D& roi_mask) {
  if (norm.rows != roi_mask.rows() || norm.cols != roi_mask.cols()) {
    throw ValidationError("slice is " + std::to_string(norm.rows) + "x" + std::to_string(norm.cols) +
                          " but ROI mask is " + std::to_string(roi_mask.rows()) + "x" +
                          std::to_string(roi_mask.cols()));
  }
}

std::vector<double> sorted_roi_values(const NormalizedSlice& norm, const BinaryMask2D& roi_mask) {
  require_same_shape(norm, roi_mask);
  std::vector<double> values;
  const auto& bits = roi_mask.bits();
  for (std::size_t k = 0; k < bits.size(); ++k) {
    if (bits[k]) values.push_back(norm.values[k]);
  }
  if (values.empty()) throw ValidationError("ROI mask is empty");
  std::sort(values.begin(), values.end());
  return values;
}

}  // namespace

void validate_dense_mask(const DenseMask& mask) {
  const auto n = static_cast<std::size_t>(mask.n_slices);
  if (mask.n_slices < 1 || mask.rows < 1 || mask.cols < 1) {
    throw ValidationError("dense mask dimensions must be positive");
  }
  if (mask.slices.size() != n || mask.slice_thresholds.size() != n || mask.slice_areas_px.size() != n) {
    throw ValidationError("dense mask per-slice lists must all have n_slices entries");
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (mask.slices[s].rows() != mask.rows || mask.slices[s].cols() != mask.cols) {
      throw ValidationError("slice " + std::to_string(s) + " has wrong dimensions");
    }
    if (mask.slices[s].popcount() != mask.slice_areas_px[s]) {
      throw ValidationError("slice " + std::to_string(s) + " area does not match its popcount");
    }
  }
}

BinaryMask2D segment_slice(const NormalizedSlice& norm, const BinaryMask2D& roi_mask, double t) {
  require_same_shape(norm, roi_mask);
  if (!(t >= 0.0 && t <= 1.0)) {
    throw ValidationError("threshold must be in [0, 1]");
  }
  BinaryMask2D out(roi_mask.rows(), roi_mask.cols());
  auto& dst = out.bits();
  const auto& roi = roi_mask.bits();
  for (std::size_t k = 0; k < roi.size(); ++k) {
    dst[k] = (roi[k] && norm.values[k] >= t) ? 1 : 0;
  }
  return out;
}

std::vector<double> candidate_thresholds(const NormalizedSlice& norm, const BinaryMask2D& roi_mask) {
  std::vector<double> values = sorted_roi_values(norm, roi_mask);
  values.erase(std::unique(values.begin(), values.end()), values.end());
  if (values.front() != 0.0) values.insert(values.begin(), 0.0);
  return values;
}

ThresholdMatch find_matching_threshold(const NormalizedSlice& norm, const BinaryMask2D& roi_mask,
                                       std::size_t reference_area_px) {
  const std::vector<double> values = sorted_roi_values(norm, roi_mask);
  std::vector<double> candidates = values;
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  if (candidates.front() != 0.0) candidates.insert(candidates.begin(), 0.0);

  // area(t) = #{v >= t}, non-increasing over the ascending candidates.
  const auto area = [&](std::size_t k) {
    return static_cast<std::size_t>(values.end() -
                                    std::lower_bound(values.begin(), values.end(), candidates[k]));
  };
  const auto distance = [&](std::size_t a) {
    return a > reference_area_px ? a - reference_area_px : reference_area_px - a;
  };

  // First candidate whose area no longer exceeds the reference; the optimum
  // is it or its predecessor.
  std::size_t lo = 0;
  std::size_t hi = candidates.size();
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (area(mid) <= reference_area_px) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  std::size_t best = lo;
  if (best == candidates.size()) {
    best = candidates.size() - 1;
  } else if (best > 0 && distance(area(best - 1)) < distance(area(best))) {
    best = best - 1;
  }
  // Equal areas form a plateau only where 0.0 was prepended; prefer the
  // larger threshold.
  const std::size_t best_area = area(best);
  while (best + 1 < candidates.size() && area(best + 1) == best_area) ++best;
  return {candidates[best], best_area};
}

Annotation make_annotation(const DbtVolume& volume, PolygonRoi polygon, double central_threshold) {
  if (!(central_threshold >= 0.0 && central_threshold <= 1.0)) {
    throw ValidationError("central_threshold must be in [0, 1]");
  }
  const int central = central_slice_index(volume);
  if (polygon.annotated_slice != central) {
    throw ValidationError("polygon annotated on slice " + std::to_string(polygon.annotated_slice) +
                          " but the central slice is " + std::to_string(central));
  }
  const BinaryMask2D roi = rasterize_polygon(polygon, volume.rows(), volume.cols());
  if (roi.popcount() == 0) throw ValidationError("polygon covers no pixel centers");
  const BinaryMask2D central_mask = segment_slice(normalize_slice(volume, central), roi, central_threshold);
  return {std::move(polygon), central_threshold, central_mask.popcount()};
}

DenseMask propagate(const DbtVolume& volume, const Annotation& annotation, unsigned threads) {
  const int central = central_slice_index(volume);
  if (annotation.polygon.annotated_slice != central) {
    throw ValidationError("annotation is on slice " + std::to_string(annotation.polygon.annotated_slice) +
                          " but the central slice is " + std::to_string(central));
  }
  const BinaryMask2D roi = rasterize_polygon(annotation.polygon, volume.rows(), volume.cols());
  if (roi.popcount() == 0) throw ValidationError("polygon covers no pixel centers");

  const int n = volume.n_slices();
  DenseMask out;
  out.n_slices = n;
  out.rows = volume.rows();
  out.cols = volume.cols();
  out.slices.resize(n);
  out.slice_thresholds.resize(n);
  out.slice_areas_px.resize(n);

  const auto process = [&](int s) {
    const NormalizedSlice norm = normalize_slice(volume, s);
    const double t = s == central
                         ? annotation.central_threshold
                         : find_matching_threshold(norm, roi, annotation.reference_area_px).threshold;
    out.slices[s] = segment_slice(norm, roi, t);
    out.slice_thresholds[s] = t;
    out.slice_areas_px[s] = out.slices[s].popcount();
  };

  const unsigned workers = std::clamp(threads, 1u, static_cast<unsigned>(n));
  if (workers == 1) {
    for (int s = 0; s < n; ++s) process(s);
  } else {
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int s = static_cast<int>(w); s < n; s += static_cast<int>(workers)) process(s);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    pool.clear();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return out;
}

Measurements measure(const DenseMask& mask, const BinaryMask2D& roi_mask, const PixelSpacing& spacing) {
  if (roi_mask.rows() != mask.rows || roi_mask.cols() != mask.cols) {
    throw ValidationError("ROI mask dimensions do not match the dense mask");
  }
  Measurements m;
  const double pixel_mm2 = spacing.row_mm * spacing.col_mm;
  for (const auto& slice : mask.slices) {
    const std::size_t px = slice.popcount();
    m.slice_area_px.push_back(px);
    m.slice_area_mm2.push_back(static_cast<double>(px) * pixel_mm2);
    m.total_dense_voxels += px;
  }
  m.total_roi_voxels = roi_mask.popcount() * static_cast<std::size_t>(mask.n_slices);
  m.percent_density = m.total_roi_voxels == 0
                          ? 0.0
                          : static_cast<double>(m.total_dense_voxels) / static_cast<double>(m.total_roi_voxels);
  return m;
}

}  // namespace dbtmask

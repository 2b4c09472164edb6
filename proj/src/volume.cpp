#include "dbtmask/volume.hpp"

#include <algorithm>
#include <cmath>

#include "dbtmask/errors.hpp"

namespace dbtmask {

std::string_view to_string(View view) {
  switch (view) {
    case View::RCC: return "RCC";
    case View::LCC: return "LCC";
    case View::RMLO: return "RMLO";
    case View::LMLO: return "LMLO";
  }
  return "?";
}

View parse_view(std::string_view text) {
  for (View v : {View::RCC, View::LCC, View::RMLO, View::LMLO}) {
    if (to_string(v) == text) return v;
  }
  throw ValidationError("unknown view '" + std::string(text) + "' (expected RCC, LCC, RMLO or LMLO)");
}

std::string_view to_string(VadCategory vad) {
  switch (vad) {
    case VadCategory::B0_25: return "0-25";
    case VadCategory::B26_50: return "26-50";
    case VadCategory::B51_75: return "51-75";
    case VadCategory::B76_100: return "76-100";
  }
  return "?";
}

VadCategory parse_vad(std::string_view text) {
  for (VadCategory v : kAllVadCategories) {
    if (to_string(v) == text) return v;
  }
  throw ValidationError("unknown VAD category '" + std::string(text) + "'");
}

VadCategory vad_from_percent(int percent) {
  if (percent < 0 || percent > 100) {
    throw DomainError("VAD percent must be in [0, 100], got " + std::to_string(percent));
  }
  if (percent <= 25) return VadCategory::B0_25;
  if (percent <= 50) return VadCategory::B26_50;
  if (percent <= 75) return VadCategory::B51_75;
  return VadCategory::B76_100;
}

DbtVolume::DbtVolume(std::string patient_id, View view, int rows, int cols, int n_slices,
                     PixelSpacing spacing, std::vector<std::uint16_t> voxels)
    : patient_id_(std::move(patient_id)),
      view_(view),
      rows_(rows),
      cols_(cols),
      n_slices_(n_slices),
      spacing_(spacing),
      voxels_(std::move(voxels)) {
  if (rows_ < 1 || cols_ < 1 || n_slices_ < 1) {
    throw ValidationError("volume dimensions must be positive");
  }
  if (!(spacing_.row_mm > 0.0) || !(spacing_.col_mm > 0.0) || !std::isfinite(spacing_.row_mm) ||
      !std::isfinite(spacing_.col_mm)) {
    throw ValidationError("pixel spacing must be positive and finite");
  }
  const auto expected = slice_size() * static_cast<std::size_t>(n_slices_);
  if (voxels_.size() != expected) {
    throw ValidationError("voxel count " + std::to_string(voxels_.size()) + " does not match " +
                          std::to_string(expected) + " = n_slices*rows*cols");
  }
}

std::span<const std::uint16_t> DbtVolume::slice(int s) const {
  if (s < 0 || s >= n_slices_) {
    throw DomainError("slice index " + std::to_string(s) + " out of range [0, " +
                      std::to_string(n_slices_) + ")");
  }
  return std::span<const std::uint16_t>(voxels_).subspan(static_cast<std::size_t>(s) * slice_size(),
                                                         slice_size());
}

int central_slice_index(int n_slices) { return (n_slices - 1) / 2; }

int central_slice_index(const DbtVolume& volume) { return central_slice_index(volume.n_slices()); }

int percentile_slice_index(int n_slices, double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw DomainError("percentile must be in [0, 1]");
  }
  const int index = static_cast<int>(std::floor(p * (n_slices - 1) + 0.5));
  return std::clamp(index, 0, n_slices - 1);
}

int percentile_slice_index(const DbtVolume& volume, double p) {
  return percentile_slice_index(volume.n_slices(), p);
}

NormalizedSlice normalize_slice(std::span<const std::uint16_t> raw, int rows, int cols) {
  NormalizedSlice out{rows, cols, std::vector<double>(raw.size(), 0.0)};
  if (raw.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const int lo = *lo_it;
  const int hi = *hi_it;
  if (hi == lo) return out;
  // Numerator and denominator are exact integers, so the quotient is the
  // correctly rounded ratio and any positive affine map of the raw values
  // yields identical bits.
  const double range = static_cast<double>(hi - lo);
  for (std::size_t k = 0; k < raw.size(); ++k) {
    out.values[k] = static_cast<double>(raw[k] - lo) / range;
  }
  return out;
}

NormalizedSlice normalize_slice(const DbtVolume& volume, int s) {
  return normalize_slice(volume.slice(s), volume.rows(), volume.cols());
}

}  // namespace dbtmask

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dbtmask {

enum class View { RCC, LCC, RMLO, LMLO };

std::string_view to_string(View view);
View parse_view(std::string_view text);

// Visual assessment of density bins, in percent.
enum class VadCategory { B0_25, B26_50, B51_75, B76_100 };

inline constexpr VadCategory kAllVadCategories[] = {
    VadCategory::B0_25, VadCategory::B26_50, VadCategory::B51_75, VadCategory::B76_100};

// Rendered as "0-25", "26-50", "51-75", "76-100".
std::string_view to_string(VadCategory vad);
VadCategory parse_vad(std::string_view text);
// Bins an integer percentage in [0, 100].
VadCategory vad_from_percent(int percent);

struct PixelSpacing {
  double row_mm = 1.0;
  double col_mm = 1.0;

  bool operator==(const PixelSpacing&) const = default;
};

// A stack of reconstructed DBT slices. Voxels are stored slice-major, then
// row-major. Immutable after construction.
class DbtVolume {
 public:
  DbtVolume(std::string patient_id, View view, int rows, int cols, int n_slices,
            PixelSpacing spacing, std::vector<std::uint16_t> voxels);

  const std::string& patient_id() const { return patient_id_; }
  View view() const { return view_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int n_slices() const { return n_slices_; }
  std::size_t slice_size() const { return static_cast<std::size_t>(rows_) * cols_; }
  const PixelSpacing& spacing() const { return spacing_; }
  const std::vector<std::uint16_t>& voxels() const { return voxels_; }

  // Throws DomainError when s is out of range.
  std::span<const std::uint16_t> slice(int s) const;
  std::uint16_t at(int s, int row, int col) const {
    return voxels_[static_cast<std::size_t>(s) * slice_size() +
                   static_cast<std::size_t>(row) * cols_ + col];
  }

  bool operator==(const DbtVolume&) const = default;

 private:
  std::string patient_id_;
  View view_;
  int rows_;
  int cols_;
  int n_slices_;
  PixelSpacing spacing_;
  std::vector<std::uint16_t> voxels_;
};

// Per-slice min-max normalized intensities in [0, 1].
struct NormalizedSlice {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  double at(int row, int col) const {
    return values[static_cast<std::size_t>(row) * cols + col];
  }
  bool operator==(const NormalizedSlice&) const = default;
};

// Lower of the two middle slices for even counts.
int central_slice_index(const DbtVolume& volume);
int central_slice_index(int n_slices);

// round(p * (n_slices - 1)), halves rounded up. Throws DomainError for p
// outside [0, 1].
int percentile_slice_index(const DbtVolume& volume, double p);
int percentile_slice_index(int n_slices, double p);

// (raw - min) / (max - min) over the whole slice; a constant slice maps to
// all zeros.
NormalizedSlice normalize_slice(const DbtVolume& volume, int s);
NormalizedSlice normalize_slice(std::span<const std::uint16_t> raw, int rows, int cols);

}  // namespace dbtmask

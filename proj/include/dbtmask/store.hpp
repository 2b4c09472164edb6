#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dbtmask/engine.hpp"
#include "dbtmask/geometry.hpp"
#include "dbtmask/volume.hpp"

namespace dbtmask {

inline constexpr int kFormatVersion = 1;

// Volume file layout:
//
//   format_version: 1
//   patient_id: <text>
//   view: RCC|LCC|RMLO|LMLO
//   rows: <int>
//   cols: <int>
//   n_slices: <int>
//   pixel_spacing_mm: <row_mm> <col_mm>
//   vad_category: 0-25|26-50|51-75|76-100      (optional)
//   <blank line>
//   <2 * rows * cols * n_slices bytes: little-endian uint16, slice-major>
struct VolumeContainer {
  DbtVolume volume;
  std::optional<VadCategory> vad;

  bool operator==(const VolumeContainer&) const = default;
};

std::string serialize_volume(const VolumeContainer& container);
// Throws CorruptFileError (with expected vs actual byte counts) on a bad
// payload, VersionError on an unknown format_version and ValidationError on
// header schema violations.
VolumeContainer parse_volume(std::string_view bytes);
void write_volume(const std::filesystem::path& path, const VolumeContainer& container);
VolumeContainer read_volume(const std::filesystem::path& path);

// Alternating zero/one run lengths over the row-major pixels, starting with
// a (possibly zero-length) zero run. Every run after the first is non-zero.
std::vector<std::uint32_t> encode_rle(const BinaryMask2D& mask);
// Throws CorruptFileError when the runs overflow or underfill the slice.
BinaryMask2D decode_rle(int rows, int cols, std::span<const std::uint32_t> runs);

// Mask file layout:
//
//   format_version: 1
//   kind: dense|label
//   n_slices: <int>
//   rows: <int>
//   cols: <int>
//   thresholds: <t_0> ... <t_n-1>      (dense only)
//   areas: <a_0> ... <a_n-1>
//   <blank line>
//   one line of RLE runs per slice
//
// "label" masks carry no thresholds: ground truth and manual annotations.
std::string serialize_mask(const DenseMask& mask);
// Throws ConsistencyError when a decoded popcount disagrees with the header
// area and ValidationError when the file is a label mask.
DenseMask parse_mask(std::string_view text);
void write_mask(const std::filesystem::path& path, const DenseMask& mask);
DenseMask read_mask(const std::filesystem::path& path);

std::string serialize_label_mask(std::span<const BinaryMask2D> slices);
// Accepts both kinds; thresholds of a dense mask are dropped.
std::vector<BinaryMask2D> parse_label_mask(std::string_view text);
void write_label_mask(const std::filesystem::path& path, std::span<const BinaryMask2D> slices);
std::vector<BinaryMask2D> read_label_mask(const std::filesystem::path& path);

// One reader's annotation of one volume plus the propagation outcome.
struct SessionRecord {
  std::string reader_id;
  std::string volume_ref;
  std::string timestamp;  // ISO-8601, UTC
  PolygonRoi polygon;
  double central_threshold = 0.0;
  // Empty until propagated.
  std::vector<double> slice_thresholds;
  std::vector<std::size_t> slice_areas_px;

  bool operator==(const SessionRecord&) const = default;
};

// Session file layout:
//
//   format_version: 1
//   reader_id: <text>
//   volume: <text>
//   timestamp: <text>
//   annotated_slice: <int>
//   central_threshold: <real>
//   vertices: <count>
//   <x> <y>                 (count lines)
//   slices: <count>
//   <s> <t_s> <area_s>      (count lines)
//
// Reals are written with 17 significant digits.
std::string serialize_session(const SessionRecord& record);
// Throws ValidationError naming the offending field.
SessionRecord parse_session(std::string_view text);
void write_session(const std::filesystem::path& path, const SessionRecord& record);
SessionRecord read_session(const std::filesystem::path& path);

SessionRecord make_session_record(std::string reader_id, std::string volume_ref, std::string timestamp,
                                  const Annotation& annotation, const DenseMask* propagated);

// Re-runs the engine for the recorded annotation. When the record holds
// propagation results they must be reproduced exactly, otherwise
// ConsistencyError is thrown.
DenseMask replay_session(const DbtVolume& volume, const SessionRecord& record, unsigned threads = 1);

// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

// Formats a real with 17 significant digits.
std::string format_real(double value);

}  // namespace dbtmask

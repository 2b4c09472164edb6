#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dbtmask/engine.hpp"
#include "dbtmask/geometry.hpp"
#include "dbtmask/volume.hpp"

namespace dbtmask {

enum class DiceScope { VOLUME, SLICE_P20, SLICE_P80 };

std::string_view to_string(DiceScope scope);
DiceScope parse_scope(std::string_view text);
// 0.2 for SLICE_P20, 0.8 for SLICE_P80. Throws DomainError for VOLUME.
double scope_percentile(DiceScope scope);

struct DiceRecord {
  std::string patient_id;
  View view = View::RCC;
  DiceScope scope = DiceScope::VOLUME;
  double dice = 0.0;

  bool operator==(const DiceRecord&) const = default;
};

// 2|A n B| / (|A| + |B|) over 0/1 bytes; 1.0 when both are empty.
double dice(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);
double dice(const BinaryMask2D& a, const BinaryMask2D& b);
// 3D Dice over whole stacks of slices.
double dice(std::span<const BinaryMask2D> a, std::span<const BinaryMask2D> b);
double dice(const DenseMask& a, const DenseMask& b);

// Mean of a patient's per-view VOLUME Dice values.
double patient_dice(std::span<const DiceRecord> records);

struct BoxplotStats {
  std::size_t n = 0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  std::vector<double> outliers;  // ascending
  double mean = 0.0;
  double sd = 0.0;  // sample SD, 0 for a single value
};

// Linear interpolation between order statistics (h = (n - 1) p) on sorted
// data.
double quantile_sorted(std::span<const double> sorted, double p);

// Tukey boxplot with 1.5 IQR whiskers. Throws ValidationError on empty
// input.
BoxplotStats boxplot(std::vector<double> values);

struct PatientDice {
  std::string patient_id;
  double dice = 0.0;
};

// Groups records by patient (ascending id) and averages each group.
std::vector<PatientDice> patient_averages(std::span<const DiceRecord> records);

struct StratifiedSummary {
  std::map<VadCategory, BoxplotStats> by_vad;  // only non-empty bins
  BoxplotStats all;
};

// Patient-level Dice (mean over the given records per patient) binned by
// VAD. Throws ValidationError naming the first patient without a label.
StratifiedSummary stratify(std::span<const DiceRecord> records,
                           const std::map<std::string, VadCategory>& vad_labels);

// Dice between a manual slice annotation and the generated mask at the
// scope's percentile slice.
DiceRecord slice_eval(const BinaryMask2D& manual, const DenseMask& generated, DiceScope scope,
                      std::string patient_id, View view);
DiceRecord slice_eval(const BinaryMask2D& manual, std::span<const BinaryMask2D> generated, DiceScope scope,
                      std::string patient_id, View view);

}  // namespace dbtmask

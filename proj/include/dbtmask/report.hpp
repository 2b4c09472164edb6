#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dbtmask/metrics.hpp"

namespace dbtmask {

// One line of an evaluation manifest:
//
//   <patient_id> <view> <scope> <vad> <mask_a> <mask_b>
//   <patient_id> <view> <scope> <vad> dice=<value>
//
// VOLUME pairs compare two full 3D masks. SLICE_P20/SLICE_P80 pairs compare
// a one-slice manual mask (mask_a) with the generated mask's percentile
// slice (mask_b). Relative paths resolve against the manifest directory.
// '#' starts a comment.
struct ManifestEntry {
  int line = 0;
  std::string patient_id;
  View view = View::RCC;
  DiceScope scope = DiceScope::VOLUME;
  VadCategory vad = VadCategory::B0_25;
  std::optional<double> dice_value;
  std::filesystem::path mask_a;
  std::filesystem::path mask_b;
};

struct ManifestParse {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> errors;
};

ManifestParse parse_manifest(std::string_view text, const std::filesystem::path& base_dir);

struct Evaluation {
  std::vector<DiceRecord> records;  // sorted by patient, view, scope
  std::map<std::string, VadCategory> vad;
  std::vector<std::string> errors;  // one per failed entry
};

// Evaluates every entry that can be evaluated; failures are collected, not
// thrown. Conflicting VAD labels for one patient are reported as errors.
Evaluation evaluate_entries(const std::vector<ManifestEntry>& entries, unsigned threads = 1);

void sort_records(std::vector<DiceRecord>& records);

// CSV with header patient_id,view,scope,dice,vad_category.
std::string report_csv(const Evaluation& evaluation);

// Per scope group ("volume", "slice" = P20 and P80 pooled, "slice_p20",
// "slice_p80"): patient-wise averages, per-VAD boxplots and the overall
// boxplot. Also CC vs MLO boxplots over per-record values.
nlohmann::ordered_json report_summary(const Evaluation& evaluation);

nlohmann::ordered_json to_json(const BoxplotStats& stats);

}  // namespace dbtmask

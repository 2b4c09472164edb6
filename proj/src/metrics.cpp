#include "dbtmask/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dbtmask/errors.hpp"

namespace dbtmask {

std::string_view to_string(DiceScope scope) {
  switch (scope) {
    case DiceScope::VOLUME: return "VOLUME";
    case DiceScope::SLICE_P20: return "SLICE_P20";
    case DiceScope::SLICE_P80: return "SLICE_P80";
  }
  return "?";
}

DiceScope parse_scope(std::string_view text) {
  for (DiceScope s : {DiceScope::VOLUME, DiceScope::SLICE_P20, DiceScope::SLICE_P80}) {
    if (to_string(s) == text) return s;
  }
  throw ValidationError("unknown scope '" + std::string(text) + "'");
}

double scope_percentile(DiceScope scope) {
  switch (scope) {
    case DiceScope::SLICE_P20: return 0.2;
    case DiceScope::SLICE_P80: return 0.8;
    case DiceScope::VOLUME: break;
  }
  throw DomainError("VOLUME scope has no percentile slice");
}

double dice(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) {
    throw ValidationError("dice: mask sizes differ (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  std::size_t na = 0;
  std::size_t nb = 0;
  std::size_t both = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const bool x = a[k] != 0;
    const bool y = b[k] != 0;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double dice(const BinaryMask2D& a, const BinaryMask2D& b) {
  if (!a.same_shape(b)) throw ValidationError("dice: mask dimensions differ");
  return dice(std::span<const std::uint8_t>(a.bits()), std::span<const std::uint8_t>(b.bits()));
}

double dice(std::span<const BinaryMask2D> a, std::span<const BinaryMask2D> b) {
  if (a.size() != b.size()) {
    throw ValidationError("dice: slice counts differ (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  std::size_t total = 0;
  std::size_t both = 0;
  for (std::size_t s = 0; s < a.size(); ++s) {
    if (!a[s].same_shape(b[s])) throw ValidationError("dice: mask dimensions differ at slice " + std::to_string(s));
    const auto& x = a[s].bits();
    const auto& y = b[s].bits();
    for (std::size_t k = 0; k < x.size(); ++k) {
      total += x[k] + y[k];
      both += x[k] & y[k];
    }
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(total);
}

double dice(const DenseMask& a, const DenseMask& b) { return dice(a.slices, b.slices); }

double patient_dice(std::span<const DiceRecord> records) {
  if (records.empty()) throw ValidationError("patient_dice needs at least one record");
  double sum = 0.0;
  for (const auto& r : records) sum += r.dice;
  return sum / static_cast<double>(records.size());
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ValidationError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BoxplotStats boxplot(std::vector<double> values) {
  if (values.empty()) throw ValidationError("boxplot of empty sample");
  std::sort(values.begin(), values.end());
  BoxplotStats st;
  st.n = values.size();
  st.q1 = quantile_sorted(values, 0.25);
  st.median = quantile_sorted(values, 0.5);
  st.q3 = quantile_sorted(values, 0.75);
  const double iqr = st.q3 - st.q1;
  const double fence_low = st.q1 - 1.5 * iqr;
  const double fence_high = st.q3 + 1.5 * iqr;

  // Fences bracket [q1, q3], which always contains at least one sample, so
  // both whiskers exist. An interpolated quartile can fall outside the
  // extreme inlier; the whisker is then drawn at the box edge.
  st.whisker_low = std::min(st.q1, *std::find_if(values.begin(), values.end(), [&](double v) { return v >= fence_low; }));
  st.whisker_high =
      std::max(st.q3, *std::find_if(values.rbegin(), values.rend(), [&](double v) { return v <= fence_high; }));
  for (double v : values) {
    if (v < fence_low || v > fence_high) st.outliers.push_back(v);
  }

  st.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(st.n);
  if (st.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - st.mean) * (v - st.mean);
    st.sd = std::sqrt(ss / static_cast<double>(st.n - 1));
  }
  return st;
}

std::vector<PatientDice> patient_averages(std::span<const DiceRecord> records) {
  std::map<std::string, std::vector<DiceRecord>> groups;
  for (const auto& r : records) groups[r.patient_id].push_back(r);
  std::vector<PatientDice> out;
  out.reserve(groups.size());
  for (const auto& [id, group] : groups) out.push_back({id, patient_dice(group)});
  return out;
}

StratifiedSummary stratify(std::span<const DiceRecord> records,
                           const std::map<std::string, VadCategory>& vad_labels) {
  const std::vector<PatientDice> patients = patient_averages(records);
  if (patients.empty()) throw ValidationError("stratify needs at least one record");
  std::map<VadCategory, std::vector<double>> bins;
  std::vector<double> all;
  for (const auto& p : patients) {
    const auto it = vad_labels.find(p.patient_id);
    if (it == vad_labels.end()) {
      throw ValidationError("patient '" + p.patient_id + "' has no VAD label");
    }
    bins[it->second].push_back(p.dice);
    all.push_back(p.dice);
  }
  StratifiedSummary out;
  for (auto& [vad, values] : bins) out.by_vad.emplace(vad, boxplot(std::move(values)));
  out.all = boxplot(std::move(all));
  return out;
}

DiceRecord slice_eval(const BinaryMask2D& manual, const DenseMask& generated, DiceScope scope,
                      std::string patient_id, View view) {
  if (generated.slices.size() != static_cast<std::size_t>(generated.n_slices)) {
    throw ValidationError("generated mask slice count does not match n_slices");
  }
  return slice_eval(manual, std::span<const BinaryMask2D>(generated.slices), scope, std::move(patient_id), view);
}

DiceRecord slice_eval(const BinaryMask2D& manual, std::span<const BinaryMask2D> generated, DiceScope scope,
                      std::string patient_id, View view) {
  if (generated.empty()) throw ValidationError("generated mask has no slices");
  const int s = percentile_slice_index(static_cast<int>(generated.size()), scope_percentile(scope));
  const BinaryMask2D& slice = generated[s];
  if (!manual.same_shape(slice)) {
    throw ValidationError("manual mask is " + std::to_string(manual.rows()) + "x" +
                          std::to_string(manual.cols()) + " but generated slice " + std::to_string(s) +
                          " is " + std::to_string(slice.rows()) + "x" + std::to_string(slice.cols()));
  }
  return {std::move(patient_id), view, scope, dice(manual, slice)};
}

}  // namespace dbtmask

#include "dbtmask/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <thread>

#include "dbtmask/errors.hpp"
#include "dbtmask/store.hpp"

namespace dbtmask {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

DiceRecord evaluate_entry(const ManifestEntry& e) {
  if (e.dice_value) return {e.patient_id, e.view, e.scope, *e.dice_value};
  const auto a = read_label_mask(e.mask_a);
  const auto b = read_label_mask(e.mask_b);
  if (e.scope == DiceScope::VOLUME) {
    return {e.patient_id, e.view, e.scope, dice(std::span<const BinaryMask2D>(a), std::span<const BinaryMask2D>(b))};
  }
  if (a.size() != 1) {
    throw ValidationError("manual mask '" + e.mask_a.string() + "' must have exactly one slice, has " +
                          std::to_string(a.size()));
  }
  return slice_eval(a.front(), std::span<const BinaryMask2D>(b), e.scope, e.patient_id, e.view);
}

nlohmann::ordered_json group_summary(const std::vector<DiceRecord>& records,
                                     const std::map<std::string, VadCategory>& vad) {
  nlohmann::ordered_json g;
  g["n_records"] = records.size();
  auto patients = nlohmann::ordered_json::array();
  for (const auto& p : patient_averages(records)) {
    patients.push_back({{"patient_id", p.patient_id},
                        {"dice", p.dice},
                        {"vad_category", std::string(to_string(vad.at(p.patient_id)))}});
  }
  g["patients"] = std::move(patients);
  const StratifiedSummary st = stratify(records, vad);
  nlohmann::ordered_json by_vad = nlohmann::ordered_json::object();
  for (const auto& [bin, stats] : st.by_vad) by_vad[std::string(to_string(bin))] = to_json(stats);
  g["by_vad"] = std::move(by_vad);
  g["all"] = to_json(st.all);
  return g;
}

}  // namespace

ManifestParse parse_manifest(std::string_view text, const fs::path& base_dir) {
  ManifestParse out;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const auto tok = tokenize(raw);
    if (tok.empty()) continue;
    const std::string where = "manifest line " + std::to_string(line_no) + ": ";
    try {
      ManifestEntry e;
      e.line = line_no;
      if (tok.size() != 5 && tok.size() != 6) {
        throw ValidationError("expected 'patient view scope vad mask_a mask_b' or '... dice=<value>'");
      }
      e.patient_id = tok[0];
      e.view = parse_view(tok[1]);
      e.scope = parse_scope(tok[2]);
      e.vad = parse_vad(tok[3]);
      if (tok.size() == 5) {
        if (tok[4].rfind("dice=", 0) != 0) throw ValidationError("expected dice=<value> or two mask paths");
        const std::string_view value = std::string_view(tok[4]).substr(5);
        double d = 0.0;
        const auto res = std::from_chars(value.data(), value.data() + value.size(), d);
        if (res.ec != std::errc() || res.ptr != value.data() + value.size() || !(d >= 0.0 && d <= 1.0)) {
          throw ValidationError("dice value must be a real in [0, 1]");
        }
        e.dice_value = d;
      } else {
        e.mask_a = fs::path(tok[4]).is_absolute() ? fs::path(tok[4]) : base_dir / tok[4];
        e.mask_b = fs::path(tok[5]).is_absolute() ? fs::path(tok[5]) : base_dir / tok[5];
      }
      out.entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      out.errors.push_back(where + ex.what());
    }
  }
  return out;
}

void sort_records(std::vector<DiceRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const DiceRecord& a, const DiceRecord& b) {
    if (a.patient_id != b.patient_id) return a.patient_id < b.patient_id;
    if (a.view != b.view) return a.view < b.view;
    return a.scope < b.scope;
  });
}

Evaluation evaluate_entries(const std::vector<ManifestEntry>& entries, unsigned threads) {
  std::vector<std::optional<DiceRecord>> results(entries.size());
  std::vector<std::string> failures(entries.size());
  const auto run = [&](std::size_t k) {
    try {
      results[k] = evaluate_entry(entries[k]);
    } catch (const std::exception& ex) {
      failures[k] = "manifest line " + std::to_string(entries[k].line) + " (" + entries[k].patient_id + " " +
                    std::string(to_string(entries[k].view)) + "): " + ex.what();
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(entries.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < entries.size(); k += workers) run(k);
      });
    }
  }

  Evaluation ev;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& e = entries[k];
    if (!failures[k].empty()) {
      ev.errors.push_back(failures[k]);
      continue;
    }
    const auto [it, inserted] = ev.vad.emplace(e.patient_id, e.vad);
    if (!inserted && it->second != e.vad) {
      ev.errors.push_back("manifest line " + std::to_string(e.line) + ": patient '" + e.patient_id +
                          "' has conflicting VAD labels");
      continue;
    }
    ev.records.push_back(*results[k]);
  }
  sort_records(ev.records);
  return ev;
}

std::string report_csv(const Evaluation& evaluation) {
  std::string out = "patient_id,view,scope,dice,vad_category\n";
  for (const auto& r : evaluation.records) {
    out += r.patient_id + "," + std::string(to_string(r.view)) + "," + std::string(to_string(r.scope)) + "," +
           format_real(r.dice) + "," + std::string(to_string(evaluation.vad.at(r.patient_id))) + "\n";
  }
  return out;
}

nlohmann::ordered_json to_json(const BoxplotStats& s) {
  return {{"n", s.n},
          {"median", s.median},
          {"q1", s.q1},
          {"q3", s.q3},
          {"whisker_low", s.whisker_low},
          {"whisker_high", s.whisker_high},
          {"outliers", s.outliers},
          {"mean", s.mean},
          {"sd", s.sd}};
}

nlohmann::ordered_json report_summary(const Evaluation& evaluation) {
  nlohmann::ordered_json out;
  out["n_records"] = evaluation.records.size();
  out["n_errors"] = evaluation.errors.size();

  const auto select = [&](auto pred) {
    std::vector<DiceRecord> sel;
    for (const auto& r : evaluation.records) {
      if (pred(r)) sel.push_back(r);
    }
    return sel;
  };
  const std::pair<const char*, std::vector<DiceRecord>> groups[] = {
      {"volume", select([](const DiceRecord& r) { return r.scope == DiceScope::VOLUME; })},
      {"slice", select([](const DiceRecord& r) { return r.scope != DiceScope::VOLUME; })},
      {"slice_p20", select([](const DiceRecord& r) { return r.scope == DiceScope::SLICE_P20; })},
      {"slice_p80", select([](const DiceRecord& r) { return r.scope == DiceScope::SLICE_P80; })},
  };
  for (const auto& [name, records] : groups) {
    if (records.empty()) continue;
    nlohmann::ordered_json g = group_summary(records, evaluation.vad);
    std::vector<double> cc;
    std::vector<double> mlo;
    for (const auto& r : records) {
      (r.view == View::RCC || r.view == View::LCC ? cc : mlo).push_back(r.dice);
    }
    if (!cc.empty()) g["cc_views"] = to_json(boxplot(cc));
    if (!mlo.empty()) g["mlo_views"] = to_json(boxplot(mlo));
    out[name] = std::move(g);
  }
  return out;
}

}  // namespace dbtmask

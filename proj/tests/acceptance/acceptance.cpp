// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Tolerances are fixed here.

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "dbtmask/engine.hpp"
#include "dbtmask/metrics.hpp"
#include "dbtmask/phantom.hpp"
#include "dbtmask/service.hpp"
#include "dbtmask/store.hpp"
#include "test_support.hpp"

using namespace dbtmask;
using namespace dbtmask::testing;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects the first failure message; later checks still run.
class Check {
 public:
  void operator()(bool ok, const std::string& what) {
    if (!ok && outcome_.pass) {
      outcome_.pass = false;
      outcome_.detail = what;
    }
  }
  Outcome finish(std::string detail) {
    if (outcome_.pass) outcome_.detail = std::move(detail);
    return outcome_;
  }

 private:
  Outcome outcome_;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

constexpr double kRuntimeLimitSeconds = 10.0;

Outcome dice_oracle_equivalence() {
  Check check;
  Rng rng(1001);
  const auto start = std::chrono::steady_clock::now();
  int both_empty = 0;
  constexpr int kPairs = 1000;
  for (int trial = 0; trial < kPairs; ++trial) {
    const int rows = uniform_int(rng, 1, 64);
    const int cols = uniform_int(rng, 1, 64);
    const int n = uniform_int(rng, 1, 16);
    // Every 25th pair is empty on both sides.
    const bool empty = trial % 25 == 0;
    const double da = empty ? 0.0 : uniform_real(rng, 0.0, 1.0);
    const double db = empty ? 0.0 : uniform_real(rng, 0.0, 1.0);
    std::vector<BinaryMask2D> a;
    std::vector<BinaryMask2D> b;
    std::vector<std::uint8_t> fa;
    std::vector<std::uint8_t> fb;
    for (int s = 0; s < n; ++s) {
      a.push_back(random_mask(rng, rows, cols, da));
      b.push_back(random_mask(rng, rows, cols, db));
      fa.insert(fa.end(), a.back().bits().begin(), a.back().bits().end());
      fb.insert(fb.end(), b.back().bits().begin(), b.back().bits().end());
    }
    const double got = dice(std::span<const BinaryMask2D>(a), std::span<const BinaryMask2D>(b));
    check(got == oracle_dice(fa, fb), "dice differs from oracle on pair " + std::to_string(trial));
    if (empty) {
      ++both_empty;
      check(got == 1.0, "both-empty pair did not return 1.0");
    }
  }
  const double elapsed = seconds_since(start);
  check(elapsed < kRuntimeLimitSeconds, "runtime " + std::to_string(elapsed) + " s");
  std::ostringstream d;
  d << kPairs << " pairs (" << both_empty << " both-empty) exact, " << elapsed << " s";
  return check.finish(d.str());
}

Outcome threshold_search_optimality() {
  Check check;
  Rng rng(1002);
  const auto start = std::chrono::steady_clock::now();
  constexpr int kSlices = 500;
  int ties = 0;
  for (int trial = 0; trial < kSlices; ++trial) {
    const int rows = uniform_int(rng, 1, 32);
    const int cols = uniform_int(rng, 1, 32);
    const NormalizedSlice norm = random_normalized_slice(rng, rows, cols);
    const BinaryMask2D roi = random_nonempty_mask(rng, rows, cols);
    const auto reference = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(roi.popcount())));
    const ThresholdMatch got = find_matching_threshold(norm, roi, reference);

    // Exhaustive scan: minimal gap and the largest minimizer.
    long long best_gap = -1;
    double largest = -1.0;
    int minimizers = 0;
    for (double t : oracle_candidates(norm, roi)) {
      const long long gap = std::llabs(static_cast<long long>(oracle_area(norm, roi, t)) - static_cast<long long>(reference));
      if (best_gap < 0 || gap < best_gap) {
        best_gap = gap;
        largest = t;
        minimizers = 1;
      } else if (gap == best_gap) {
        largest = t;
        ++minimizers;
      }
    }
    ties += minimizers > 1;
    const long long got_gap = std::llabs(static_cast<long long>(got.area_px) - static_cast<long long>(reference));
    check(got_gap == best_gap, "gap not minimal on slice " + std::to_string(trial));
    check(got.threshold == largest, "not the largest minimizer on slice " + std::to_string(trial));
    check(got.area_px == oracle_area(norm, roi, got.threshold), "reported area wrong on slice " + std::to_string(trial));
  }
  const double elapsed = seconds_since(start);
  check(elapsed < kRuntimeLimitSeconds, "runtime " + std::to_string(elapsed) + " s");
  std::ostringstream d;
  d << kSlices << " slices exact (" << ties << " with tied minimizers), " << elapsed << " s";
  return check.finish(d.str());
}

Outcome monotonicity() {
  Check check;
  Rng rng(1003);
  std::size_t evaluated = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int rows = uniform_int(rng, 1, 48);
    const int cols = uniform_int(rng, 1, 48);
    const NormalizedSlice norm = random_normalized_slice(rng, rows, cols);
    const BinaryMask2D roi = random_nonempty_mask(rng, rows, cols);
    std::size_t previous = roi.popcount();
    for (double t : candidate_thresholds(norm, roi)) {
      const std::size_t a = segment_slice(norm, roi, t).popcount();
      check(a <= previous, "area increased at t = " + std::to_string(t));
      previous = a;
      ++evaluated;
    }
  }
  return check.finish("300 slices, " + std::to_string(evaluated) + " candidate thresholds, non-increasing");
}

Outcome uniform_volume_propagation() {
  Check check;
  Rng rng(1004);
  for (int trial = 0; trial < 20; ++trial) {
    const int rows = uniform_int(rng, 8, 40);
    const int cols = uniform_int(rng, 8, 40);
    const int n = uniform_int(rng, 1, 30);
    const auto slice = random_raw_slice(rng, rows, cols, uniform_int(rng, 2, 200));
    std::vector<std::uint16_t> voxels;
    for (int s = 0; s < n; ++s) voxels.insert(voxels.end(), slice.begin(), slice.end());
    const DbtVolume v = make_volume(rows, cols, n, voxels);
    PolygonRoi roi = rectangle(0.5, 0.5, cols - 1.5, rows - 1.5, central_slice_index(v));
    const Annotation ann = make_annotation(v, roi, uniform_real(rng, 0, 1));
    const DenseMask m = propagate(v, ann);
    for (int s = 0; s < n; ++s) {
      check(m.slice_areas_px[s] == ann.reference_area_px, "slice area differs from reference");
      check(m.slices[s] == m.slices[central_slice_index(v)], "slice mask differs from central mask");
    }
  }
  return check.finish("20 volumes: every slice area equals the reference and every mask equals the central mask");
}

PolygonRoi phantom_roi(const DbtVolume& v) { return rectangle(15, 25, 80, 105, central_slice_index(v)); }

Outcome phantom_noise_free() {
  Check check;
  PhantomSpec spec;  // CYLINDER spanning all slices, no noise, no blur
  const Phantom ph = generate_phantom(spec);
  const Annotation ann = make_annotation(ph.volume, phantom_roi(ph.volume), 0.5);
  const DenseMask m = propagate(ph.volume, ann);
  const double d = dice(std::span<const BinaryMask2D>(m.slices), std::span<const BinaryMask2D>(ph.truth));
  check(d == 1.0, "3D Dice " + std::to_string(d));
  return check.finish("3D Dice vs ground truth = " + format_real(d));
}

Outcome phantom_degraded() {
  Check check;
  PhantomSpec spec;
  spec.noise_sigma = 0.05;  // 5% of the full [0, 1] range
  spec.edge_blur_slices = spec.n_slices / 5;
  const Phantom ph = generate_phantom(spec);
  const Annotation ann = make_annotation(ph.volume, phantom_roi(ph.volume), 0.5);
  const DenseMask m = propagate(ph.volume, ann);
  const double d = dice(std::span<const BinaryMask2D>(m.slices), std::span<const BinaryMask2D>(ph.truth));
  check(d >= 0.90, "3D Dice " + std::to_string(d) + " < 0.90");
  double worst = 0.0;
  for (int s = spec.edge_blur_slices; s < spec.n_slices - spec.edge_blur_slices; ++s) {
    const double rel = std::abs(static_cast<double>(m.slice_areas_px[s]) - static_cast<double>(ann.reference_area_px)) /
                       static_cast<double>(ann.reference_area_px);
    worst = std::max(worst, rel);
  }
  check(worst <= 0.05, "unblurred slice area off by " + std::to_string(worst * 100) + "%");
  std::ostringstream out;
  out << "3D Dice = " << d << " (>= 0.90), worst unblurred |area - ref| / ref = " << worst << " (<= 0.05)";
  return check.finish(out.str());
}

DbtVolume affine_per_slice(const DbtVolume& v, Rng& rng) {
  std::vector<std::uint16_t> voxels = v.voxels();
  for (int s = 0; s < v.n_slices(); ++s) {
    const auto slice = v.slice(s);
    const int hi = *std::max_element(slice.begin(), slice.end());
    const int a = uniform_int(rng, 1, std::max(1, 65535 / std::max(1, hi)));
    const int b = uniform_int(rng, 0, 65535 - a * hi);
    for (std::size_t k = 0; k < v.slice_size(); ++k) {
      auto& x = voxels[static_cast<std::size_t>(s) * v.slice_size() + k];
      x = static_cast<std::uint16_t>(a * x + b);
    }
  }
  return DbtVolume(v.patient_id(), v.view(), v.rows(), v.cols(), v.n_slices(), v.spacing(), std::move(voxels));
}

Outcome affine_robustness() {
  Check check;
  Rng rng(1007);
  int cases = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const DbtVolume base = random_volume(rng, uniform_int(rng, 4, 32), uniform_int(rng, 4, 32), uniform_int(rng, 1, 15));
    std::vector<std::uint16_t> small = base.voxels();
    for (auto& x : small) x = static_cast<std::uint16_t>(x / 64);
    const DbtVolume v(base.patient_id(), base.view(), base.rows(), base.cols(), base.n_slices(), base.spacing(), small);
    PolygonRoi roi = random_polygon(rng, v.rows(), v.cols());
    roi.annotated_slice = central_slice_index(v);
    if (rasterize_polygon(roi, v.rows(), v.cols()).popcount() == 0) continue;
    const double t = uniform_real(rng, 0, 1);
    const DenseMask original = propagate(v, make_annotation(v, roi, t));
    const DbtVolume mapped = affine_per_slice(v, rng);
    check(propagate(mapped, make_annotation(mapped, roi, t)) == original, "mask changed under affine map");
    ++cases;
  }
  // Degraded phantom, requantized to leave headroom for the map.
  PhantomSpec spec;
  spec.noise_sigma = 0.05;
  spec.edge_blur_slices = 8;
  const DbtVolume ph = generate_phantom(spec).volume;
  std::vector<std::uint16_t> small = ph.voxels();
  for (auto& x : small) x = static_cast<std::uint16_t>(x / 16);
  const DbtVolume v(ph.patient_id(), ph.view(), ph.rows(), ph.cols(), ph.n_slices(), ph.spacing(), small);
  const DenseMask original = propagate(v, make_annotation(v, phantom_roi(v), 0.5));
  const DbtVolume mapped = affine_per_slice(v, rng);
  check(propagate(mapped, make_annotation(mapped, phantom_roi(mapped), 0.5)) == original,
        "phantom mask changed under affine map");
  return check.finish(std::to_string(cases + 1) + " volumes bitwise unchanged under per-slice a*raw+b");
}

Outcome patient_dice_fixture() {
  Check check;
  const std::vector<DiceRecord> views{{"P", View::LMLO, DiceScope::VOLUME, 0.14},
                                      {"P", View::LCC, DiceScope::VOLUME, 0.46},
                                      {"P", View::RMLO, DiceScope::VOLUME, 0.76},
                                      {"P", View::RCC, DiceScope::VOLUME, 0.73}};
  const double got = patient_dice(views);
  check(std::abs(got - 0.5225) <= 1e-12, "patient_dice = " + format_real(got));
  return check.finish("patient_dice({0.14, 0.46, 0.76, 0.73}) = " + format_real(got));
}

Outcome statistics_oracle() {
  Check check;
  Rng rng(1009);
  int with_outliers = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> v(uniform_int(rng, 1, 60));
    for (auto& x : v) {
      x = uniform_int(rng, 0, 5) == 0 ? uniform_real(rng, 0.0, 1.0) : uniform_real(rng, 0.75, 0.92);
    }
    if (trial % 7 == 0) {
      for (auto& x : v) x = std::round(x * 10) / 10;  // heavy ties
    }
    const BoxplotStats s = boxplot(v);
    const OracleBoxplot o = oracle_boxplot(v);
    check(std::abs(s.q1 - o.q1) <= 1e-12 && std::abs(s.median - o.median) <= 1e-12 && std::abs(s.q3 - o.q3) <= 1e-12,
          "quartiles differ on sample " + std::to_string(trial));
    check(s.whisker_low == o.whisker_low && s.whisker_high == o.whisker_high,
          "whiskers differ on sample " + std::to_string(trial));
    check(s.outliers == o.outliers, "outlier partition differs on sample " + std::to_string(trial));
    check(s.outliers.size() + o.inside.size() == v.size(), "partition does not cover the sample");
    with_outliers += !s.outliers.empty();
  }
  return check.finish("1000 samples (" + std::to_string(with_outliers) + " with outliers) match the sorted-order oracle");
}

Outcome store_round_trips() {
  Check check;
  Rng rng(1010);
  for (int trial = 0; trial < 50; ++trial) {
    const DbtVolume v = random_volume(rng, uniform_int(rng, 1, 24), uniform_int(rng, 1, 24), uniform_int(rng, 1, 8));
    const VolumeContainer vc{v, trial % 3 ? std::optional(kAllVadCategories[trial % 4]) : std::nullopt};
    const std::string bytes = serialize_volume(vc);
    check(parse_volume(bytes) == vc && serialize_volume(parse_volume(bytes)) == bytes, "volume round-trip");

    DenseMask m{v.n_slices(), v.rows(), v.cols(), {}, {}, {}};
    for (int s = 0; s < v.n_slices(); ++s) {
      m.slices.push_back(random_mask(rng, v.rows(), v.cols(), uniform_real(rng, 0, 1)));
      m.slice_thresholds.push_back(uniform_real(rng, 0, 1));
      m.slice_areas_px.push_back(m.slices.back().popcount());
    }
    const std::string text = serialize_mask(m);
    check(parse_mask(text) == m && serialize_mask(parse_mask(text)) == text, "mask round-trip");

    SessionRecord r{"reader-" + std::to_string(trial), "v.vol", "2026-10-15T00:00:00Z", random_polygon(rng, 40, 40),
                    uniform_real(rng, 0, 1), {}, {}};
    for (auto& p : r.polygon.vertices) p = {uniform_real(rng, -0.5, 39.5), uniform_real(rng, -0.5, 39.5)};
    for (int s = 0; s < uniform_int(rng, 0, 6); ++s) {
      r.slice_thresholds.push_back(uniform_real(rng, 0, 1));
      r.slice_areas_px.push_back(static_cast<std::size_t>(uniform_int(rng, 0, 5000)));
    }
    const std::string session = serialize_session(r);
    check(parse_session(session) == r && serialize_session(parse_session(session)) == session, "session round-trip");
  }

  PhantomSpec spec;
  spec.noise_sigma = 0.05;
  spec.edge_blur_slices = 8;
  const DbtVolume v = generate_phantom(spec).volume;
  const Annotation ann = make_annotation(v, phantom_roi(v), 0.45);
  const DenseMask m = propagate(v, ann);
  const SessionRecord record = parse_session(serialize_session(make_session_record("R1", "p.vol", utc_timestamp(), ann, &m)));
  const VolumeContainer reloaded = parse_volume(serialize_volume({v, std::nullopt}));
  check(replay_session(reloaded.volume, record) == m, "session replay differs");
  return check.finish("50 random volumes, masks and sessions bitwise; phantom session replay identical");
}

Outcome service_engine_parity() {
  Check check;
  AnnotationService service;
  httplib::Server server;
  service.mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  PhantomSpec spec;
  spec.noise_sigma = 0.05;
  spec.edge_blur_slices = 8;
  const DbtVolume v = generate_phantom(spec).volume;
  const auto up = client.Post("/volumes", serialize_volume({v, std::nullopt}), "application/octet-stream");
  const std::string vid = json::parse(up->body)["volume_id"];
  const auto sess = client.Post("/sessions", json{{"volume_id", vid}, {"reader_id", "R1"}}.dump(), "application/json");
  const std::string sid = json::parse(sess->body)["session_id"];
  const std::string base = "/sessions/" + sid;
  client.Post(base + "/roi", json{{"vertices", {{15, 25}, {80, 25}, {80, 105}, {15, 105}}}}.dump(), "application/json");
  client.Post(base + "/threshold", json{{"t", 0.5}}.dump(), "application/json");
  const auto prop = client.Post(base + "/propagate", "{}", "application/json");
  check(prop && prop->status == 200, "propagate request failed");
  const json result = json::parse(prop->body);

  const Annotation ann = make_annotation(v, phantom_roi(v), 0.5);
  const DenseMask direct = propagate(v, ann);
  const Measurements meas = measure(direct, rasterize_polygon(ann.polygon, v.rows(), v.cols()), v.spacing());
  check(result["percent_density"].get<double>() == meas.percent_density, "percent_density differs");
  check(result["reference_area_px"] == ann.reference_area_px, "reference area differs");
  for (int s = 0; s < v.n_slices(); ++s) {
    const json& row = result["per_slice"][s];
    check(row["t_s"].get<double>() == direct.slice_thresholds[s] && row["area_px"] == direct.slice_areas_px[s],
          "per-slice result differs at slice " + std::to_string(s));
    const json mask = json::parse(client.Get(base + "/mask/" + std::to_string(s))->body);
    check(decode_rle(mask["rows"], mask["cols"], mask["runs"].get<std::vector<std::uint32_t>>()) == direct.slices[s],
          "mask differs at slice " + std::to_string(s));
  }
  check(parse_mask(client.Get(base + "/export/mask")->body) == direct, "exported mask differs");

  const std::string before = service.state_digest(sid);
  const std::string info_before = client.Get(base)->body;
  Rng rng(1011);
  for (int k = 0; k < 100; ++k) {
    const double t = uniform_real(rng, 0, 1);
    const auto preview = client.Get(base + "/preview?t=" + format_real(t));
    const BinaryMask2D expected =
        segment_slice(normalize_slice(v, central_slice_index(v)), rasterize_polygon(ann.polygon, v.rows(), v.cols()), t);
    check(preview && json::parse(preview->body)["area_px"] == expected.popcount(), "preview area differs");
  }
  check(service.state_digest(sid) == before, "state hash changed after previews");
  check(client.Get(base)->body == info_before, "session info changed after previews");

  server.stop();
  thread.join();
  return check.finish("40 slices field-for-field equal; state hash " + before + " unchanged after 100 previews");
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"dice oracle equivalence", dice_oracle_equivalence},
      {"threshold search optimality", threshold_search_optimality},
      {"monotonicity", monotonicity},
      {"uniform-volume propagation", uniform_volume_propagation},
      {"phantom recovery (noise-free)", phantom_noise_free},
      {"phantom recovery (degraded)", phantom_degraded},
      {"affine robustness", affine_robustness},
      {"patient-level dice fixture", patient_dice_fixture},
      {"statistics oracle", statistics_oracle},
      {"store round-trips", store_round_trips},
      {"service/engine parity", service_engine_parity},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("[%s] %-32s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures, std::size(criteria));
  return failures == 0 ? 0 : 1;
}

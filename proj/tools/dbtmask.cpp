// dbtmask: batch entry point for the dense-tissue mask workflow.
//
//   dbtmask phantom   --out PREFIX [--spec FILE] [--seed N]
//   dbtmask annotate  --volume FILE --reader ID --polygon "x,y;x,y;..." --threshold T --out FILE
//   dbtmask propagate --volume FILE --session FILE --out FILE [--session-out FILE] [--threads N]
//   dbtmask evaluate  --manifest FILE [--csv FILE] [--summary FILE] [--threads N]
//   dbtmask serve     [--bind ADDR] [--port N] [--max-volume-bytes N] [--threads N]
//
// Exit codes: 0 success, 1 input error, 2 internal error.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>

#include "dbtmask/engine.hpp"
#include "dbtmask/errors.hpp"
#include "dbtmask/phantom.hpp"
#include "dbtmask/report.hpp"
#include "dbtmask/service.hpp"
#include "dbtmask/store.hpp"

namespace fs = std::filesystem;
using namespace dbtmask;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitInternal = 2;

// Errors caused by the caller's inputs rather than by this program.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

PolygonRoi parse_polygon_arg(const std::string& text) {
  PolygonRoi roi;
  std::istringstream in(text);
  std::string pair;
  while (std::getline(in, pair, ';')) {
    if (pair.empty()) continue;
    const auto comma = pair.find(',');
    if (comma == std::string::npos) throw InputError("polygon vertex '" + pair + "' must be x,y");
    try {
      roi.vertices.push_back({std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1))});
    } catch (const std::logic_error&) {
      throw InputError("polygon vertex '" + pair + "' is not numeric");
    }
  }
  return roi;
}

// --- phantom ---------------------------------------------------------------

struct PhantomArgs {
  std::string spec_path;
  std::string out_prefix;
  std::optional<std::uint64_t> seed;
  bool print_spec = false;
};

int run_phantom(const PhantomArgs& a) {
  PhantomSpec spec = a.spec_path.empty() ? PhantomSpec{} : phantom_spec_from_json(slurp(a.spec_path));
  if (a.seed) spec.seed = *a.seed;
  if (a.print_spec) {
    std::cout << phantom_spec_to_json(spec);
    if (a.out_prefix.empty()) return kExitOk;
  }
  if (a.out_prefix.empty()) throw InputError("--out is required");
  const Phantom ph = generate_phantom(spec);
  const std::string vol_path = a.out_prefix + ".vol";
  const std::string truth_path = a.out_prefix + ".truth.mask";
  write_volume(vol_path, {ph.volume, std::nullopt});
  write_label_mask(truth_path, ph.truth);
  std::size_t dense = 0;
  for (const auto& s : ph.truth) dense += s.popcount();
  std::cout << "wrote " << vol_path << " (" << spec.n_slices << " x " << spec.rows << " x " << spec.cols << ")\n"
            << "wrote " << truth_path << " (" << dense << " dense voxels)\n";
  return kExitOk;
}

// --- annotate --------------------------------------------------------------

struct AnnotateArgs {
  std::string volume_path;
  std::string reader_id;
  std::string polygon;
  double threshold = 0.5;
  std::string out_path;
};

int run_annotate(const AnnotateArgs& a) {
  const VolumeContainer vc = read_volume(a.volume_path);
  PolygonRoi roi = parse_polygon_arg(a.polygon);
  roi.annotated_slice = central_slice_index(vc.volume);
  const Annotation ann = make_annotation(vc.volume, std::move(roi), a.threshold);
  write_session(a.out_path, make_session_record(a.reader_id, a.volume_path, utc_timestamp(), ann, nullptr));
  std::cout << "central slice " << ann.polygon.annotated_slice << ", reference area " << ann.reference_area_px
            << " px\n";
  return kExitOk;
}

// --- propagate -------------------------------------------------------------

struct PropagateArgs {
  std::string volume_path;
  std::string session_path;
  std::string out_path;
  std::string session_out;
  unsigned threads = 1;
};

int run_propagate(const PropagateArgs& a) {
  const VolumeContainer vc = read_volume(a.volume_path);
  SessionRecord record = read_session(a.session_path);
  const DbtVolume& v = vc.volume;
  const Annotation ann = make_annotation(v, record.polygon, record.central_threshold);
  const DenseMask mask = propagate(v, ann, a.threads);
  if (!record.slice_thresholds.empty() &&
      (record.slice_thresholds != mask.slice_thresholds || record.slice_areas_px != mask.slice_areas_px)) {
    std::cerr << "warning: recorded per-slice results differ from this run; the session's volume may differ\n";
  }
  write_mask(a.out_path, mask);
  if (!a.session_out.empty()) {
    record.slice_thresholds = mask.slice_thresholds;
    record.slice_areas_px = mask.slice_areas_px;
    write_session(a.session_out, record);
  }
  const BinaryMask2D roi = rasterize_polygon(ann.polygon, v.rows(), v.cols());
  const Measurements m = measure(mask, roi, v.spacing());
  std::printf("reference_area_px %zu\n", ann.reference_area_px);
  std::printf("total_dense_voxels %zu\n", m.total_dense_voxels);
  std::printf("percent_density %s\n", format_real(m.percent_density).c_str());
  std::printf("slice threshold area_px area_mm2\n");
  for (int s = 0; s < mask.n_slices; ++s) {
    std::printf("%d %.6f %zu %.4f\n", s, mask.slice_thresholds[s], mask.slice_areas_px[s], m.slice_area_mm2[s]);
  }
  return kExitOk;
}

// --- evaluate --------------------------------------------------------------

struct EvaluateArgs {
  std::string manifest_path;
  std::string csv_path = "-";
  std::string summary_path = "-";
  unsigned threads = 1;
};

int run_evaluate(const EvaluateArgs& a) {
  const fs::path manifest(a.manifest_path);
  const ManifestParse parsed = parse_manifest(slurp(manifest), manifest.parent_path());
  Evaluation ev = evaluate_entries(parsed.entries, a.threads);
  ev.errors.insert(ev.errors.begin(), parsed.errors.begin(), parsed.errors.end());
  for (const auto& e : ev.errors) std::cerr << "error: " << e << "\n";

  write_text(a.csv_path, report_csv(ev));
  if (!ev.records.empty()) {
    if (a.csv_path == "-" && a.summary_path == "-") std::cout << "\n";
    write_text(a.summary_path, report_summary(ev).dump(2) + "\n");
  }
  return ev.errors.empty() ? kExitOk : kExitInput;
}

// --- serve -----------------------------------------------------------------

struct ServeArgs {
  std::string bind = "127.0.0.1";
  int port = 8080;
  std::size_t max_volume_bytes = std::size_t{1} << 30;
  unsigned threads = 1;
};

// Environment supplies defaults; flags override them.
void apply_env(ServeArgs& a) {
  a.bind = env_or("DBTMASK_BIND", a.bind);
  a.port = std::stoi(env_or("DBTMASK_PORT", std::to_string(a.port)));
  a.max_volume_bytes = std::stoull(env_or("DBTMASK_MAX_VOLUME_BYTES", std::to_string(a.max_volume_bytes)));
}

httplib::Server* g_server = nullptr;

void handle_signal(int) {
  if (g_server) g_server->stop();
}

int run_serve(const ServeArgs& a) {
  AnnotationService service({a.max_volume_bytes, a.threads});
  httplib::Server server;
  service.mount(server);
  g_server = &server;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  std::cerr << "listening on http://" << a.bind << ":" << a.port << "\n";
  if (!server.listen(a.bind, a.port)) {
    std::cerr << "error: cannot listen on " << a.bind << ":" << a.port << "\n";
    return kExitInput;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense-tissue ground-truth masks for DBT volumes"};
  app.require_subcommand(1);

  PhantomArgs phantom_args;
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic volume and its ground-truth mask");
  phantom->add_option("--spec", phantom_args.spec_path, "Phantom spec (JSON); defaults are used when omitted")
      ->check(CLI::ExistingFile);
  phantom->add_option("--out", phantom_args.out_prefix, "Output prefix: writes PREFIX.vol and PREFIX.truth.mask");
  phantom->add_option("--seed", phantom_args.seed, "Override the spec's noise seed");
  phantom->add_flag("--print-spec", phantom_args.print_spec, "Print the effective spec as JSON");

  AnnotateArgs annotate_args;
  auto* annotate = app.add_subcommand("annotate", "Write a session from a central-slice polygon and threshold");
  annotate->add_option("--volume", annotate_args.volume_path)->required()->check(CLI::ExistingFile);
  annotate->add_option("--reader", annotate_args.reader_id)->required();
  annotate->add_option("--polygon", annotate_args.polygon, "Vertices as \"x,y;x,y;...\" in pixel units")->required();
  annotate->add_option("--threshold", annotate_args.threshold, "Central-slice threshold in [0, 1]")->required();
  annotate->add_option("--out", annotate_args.out_path)->required();

  PropagateArgs propagate_args;
  auto* prop = app.add_subcommand("propagate", "Propagate a session's annotation to every slice");
  prop->add_option("--volume", propagate_args.volume_path)->required()->check(CLI::ExistingFile);
  prop->add_option("--session", propagate_args.session_path)->required()->check(CLI::ExistingFile);
  prop->add_option("--out", propagate_args.out_path, "Output mask file")->required();
  prop->add_option("--session-out", propagate_args.session_out, "Also write the session with per-slice results");
  prop->add_option("--threads", propagate_args.threads)->check(CLI::PositiveNumber);

  EvaluateArgs evaluate_args;
  auto* evaluate = app.add_subcommand("evaluate", "Dice report for a manifest of mask pairs");
  evaluate->add_option("--manifest", evaluate_args.manifest_path)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--csv", evaluate_args.csv_path, "Per-record CSV ('-' for stdout)");
  evaluate->add_option("--summary", evaluate_args.summary_path, "Summary JSON ('-' for stdout)");
  evaluate->add_option("--threads", evaluate_args.threads)->check(CLI::PositiveNumber);

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Run the HTTP annotation service");
  try {
    apply_env(serve_args);
  } catch (const std::exception&) {
    std::cerr << "error: DBTMASK_PORT / DBTMASK_MAX_VOLUME_BYTES must be integers\n";
    return kExitInput;
  }
  serve->add_option("--bind", serve_args.bind, "Bind address (env DBTMASK_BIND)");
  serve->add_option("--port", serve_args.port, "Port (env DBTMASK_PORT)");
  serve->add_option("--max-volume-bytes", serve_args.max_volume_bytes, "Upload cap (env DBTMASK_MAX_VOLUME_BYTES)");
  serve->add_option("--threads", serve_args.threads, "Workers per propagation")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*phantom) return run_phantom(phantom_args);
    if (*annotate) return run_annotate(annotate_args);
    if (*prop) return run_propagate(propagate_args);
    if (*evaluate) return run_evaluate(evaluate_args);
    if (*serve) return run_serve(serve_args);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const CorruptFileError& e) {
    std::cerr << "error: corrupt file: " << e.what() << "\n";
    return kExitInput;
  } catch (const VersionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ConsistencyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

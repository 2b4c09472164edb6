#include "dbtmask/store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include "dbtmask/errors.hpp"

namespace dbtmask {

namespace fs = std::filesystem;

std::string format_real(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t k = 0;
  while (k < s.size()) {
    while (k < s.size() && (s[k] == ' ' || s[k] == '\t' || s[k] == '\r')) ++k;
    const std::size_t start = k;
    while (k < s.size() && s[k] != ' ' && s[k] != '\t' && s[k] != '\r') ++k;
    if (k > start) out.push_back(s.substr(start, k - start));
  }
  return out;
}

template <class T>
T parse_number(std::string_view field, std::string_view text) {
  text = trim(text);
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ValidationError("field '" + std::string(field) + "': cannot parse '" + std::string(text) + "'");
  }
  return value;
}

double parse_real(std::string_view field, std::string_view text) {
  const auto v = parse_number<double>(field, text);
  if (!std::isfinite(v)) throw ValidationError("field '" + std::string(field) + "' is not finite");
  return v;
}

int parse_positive_int(std::string_view field, std::string_view text) {
  const int v = parse_number<int>(field, text);
  if (v < 1) throw ValidationError("field '" + std::string(field) + "' must be positive");
  return v;
}

void check_text_value(std::string_view field, std::string_view value) {
  if (value.find('\n') != std::string_view::npos || value != trim(value)) {
    throw ValidationError("field '" + std::string(field) + "' must be a single trimmed line");
  }
}

// Reads "key: value" lines one at a time.
class LineCursor {
 public:
  explicit LineCursor(std::string_view text) : text_(text) {}

  bool done() const { return pos_ >= text_.size(); }
  std::size_t position() const { return pos_; }

  std::optional<std::string_view> next_line() {
    if (done()) return std::nullopt;
    const std::size_t end = text_.find('\n', pos_);
    std::string_view line;
    if (end == std::string_view::npos) {
      line = text_.substr(pos_);
      pos_ = text_.size();
    } else {
      line = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
    }
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
  }

  std::string_view expect(std::string_view key) {
    const auto line = next_line();
    if (!line) throw ValidationError("field '" + std::string(key) + "' is missing");
    const auto [k, v] = split_key(*line);
    if (k != key) {
      throw ValidationError("field '" + std::string(key) + "' is missing (found '" + std::string(k) + "')");
    }
    return v;
  }

  static std::pair<std::string_view, std::string_view> split_key(std::string_view line) {
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) return {trim(line), {}};
    return {trim(line.substr(0, colon)), trim(line.substr(colon + 1))};
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

// Key/value header up to the first blank line.
struct Header {
  std::map<std::string, std::string, std::less<>> fields;
  std::size_t body_offset = 0;

  const std::string* find(std::string_view key) const {
    const auto it = fields.find(key);
    return it == fields.end() ? nullptr : &it->second;
  }
  const std::string& require(std::string_view key) const {
    if (const auto* v = find(key)) return *v;
    throw ValidationError("field '" + std::string(key) + "' is missing");
  }
};

Header parse_header(std::string_view bytes, std::string_view what,
                    std::initializer_list<std::string_view> allowed) {
  const std::size_t end = bytes.find("\n\n");
  if (end == std::string_view::npos) {
    throw CorruptFileError(std::string(what) + ": header is not terminated by a blank line");
  }
  Header h;
  h.body_offset = end + 2;
  LineCursor cur(bytes.substr(0, end + 1));
  while (const auto line = cur.next_line()) {
    if (line->empty()) continue;
    const auto [k, v] = LineCursor::split_key(*line);
    if (line->find(':') == std::string_view::npos) {
      throw ValidationError(std::string(what) + ": malformed header line '" + std::string(*line) + "'");
    }
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw ValidationError(std::string(what) + ": unknown field '" + std::string(k) + "'");
    }
    if (!h.fields.emplace(std::string(k), std::string(v)).second) {
      throw ValidationError(std::string(what) + ": duplicate field '" + std::string(k) + "'");
    }
  }
  const int version = parse_number<int>("format_version", h.require("format_version"));
  if (version != kFormatVersion) {
    throw VersionError(std::string(what) + ": unsupported format_version " + std::to_string(version));
  }
  return h;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write-then-rename so readers never observe a partial file.
void write_file_atomic(const fs::path& path, std::string_view bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path);
}

}  // namespace

// ---------------------------------------------------------------------------
// Volumes

std::string serialize_volume(const VolumeContainer& container) {
  const DbtVolume& v = container.volume;
  check_text_value("patient_id", v.patient_id());
  std::string out;
  out += "format_version: " + std::to_string(kFormatVersion) + "\n";
  out += "patient_id: " + v.patient_id() + "\n";
  out += "view: " + std::string(to_string(v.view())) + "\n";
  out += "rows: " + std::to_string(v.rows()) + "\n";
  out += "cols: " + std::to_string(v.cols()) + "\n";
  out += "n_slices: " + std::to_string(v.n_slices()) + "\n";
  out += "pixel_spacing_mm: " + format_real(v.spacing().row_mm) + " " + format_real(v.spacing().col_mm) + "\n";
  if (container.vad) out += "vad_category: " + std::string(to_string(*container.vad)) + "\n";
  out += "\n";
  const std::size_t header_size = out.size();
  out.resize(header_size + 2 * v.voxels().size());
  char* p = out.data() + header_size;
  for (std::uint16_t x : v.voxels()) {
    *p++ = static_cast<char>(x & 0xFF);
    *p++ = static_cast<char>(x >> 8);
  }
  return out;
}

VolumeContainer parse_volume(std::string_view bytes) {
  const Header h = parse_header(bytes, "volume",
                                {"format_version", "patient_id", "view", "rows", "cols", "n_slices",
                                 "pixel_spacing_mm", "vad_category"});
  const int rows = parse_positive_int("rows", h.require("rows"));
  const int cols = parse_positive_int("cols", h.require("cols"));
  const int n_slices = parse_positive_int("n_slices", h.require("n_slices"));
  const auto spacing_tokens = split_ws(h.require("pixel_spacing_mm"));
  if (spacing_tokens.size() != 2) throw ValidationError("field 'pixel_spacing_mm' needs two reals");
  const PixelSpacing spacing{parse_real("pixel_spacing_mm", spacing_tokens[0]),
                             parse_real("pixel_spacing_mm", spacing_tokens[1])};
  std::optional<VadCategory> vad;
  if (const auto* text = h.find("vad_category")) vad = parse_vad(*text);
  const View view = parse_view(h.require("view"));

  const std::size_t count = static_cast<std::size_t>(rows) * cols * n_slices;
  const std::size_t expected = 2 * count;
  const std::size_t actual = bytes.size() - h.body_offset;
  if (actual != expected) {
    throw CorruptFileError("volume payload is " + std::to_string(actual) + " bytes, expected " +
                           std::to_string(expected));
  }
  std::vector<std::uint16_t> voxels(count);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + h.body_offset);
  for (std::size_t k = 0; k < count; ++k) {
    voxels[k] = static_cast<std::uint16_t>(p[2 * k] | (p[2 * k + 1] << 8));
  }
  return {DbtVolume(h.require("patient_id"), view, rows, cols, n_slices, spacing, std::move(voxels)), vad};
}

void write_volume(const fs::path& path, const VolumeContainer& container) {
  write_file_atomic(path, serialize_volume(container));
}

VolumeContainer read_volume(const fs::path& path) { return parse_volume(read_file(path)); }

// ---------------------------------------------------------------------------
// Masks

std::vector<std::uint32_t> encode_rle(const BinaryMask2D& mask) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t length = 0;
  for (std::uint8_t b : mask.bits()) {
    if (b != current) {
      runs.push_back(length);
      current = b;
      length = 0;
    }
    ++length;
  }
  runs.push_back(length);
  return runs;
}

BinaryMask2D decode_rle(int rows, int cols, std::span<const std::uint32_t> runs) {
  BinaryMask2D mask(rows, cols);
  auto& bits = mask.bits();
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    if (k > 0 && runs[k] == 0) throw CorruptFileError("RLE run " + std::to_string(k) + " has zero length");
    if (runs[k] > bits.size() - pos) {
      throw CorruptFileError("RLE runs overflow the slice of " + std::to_string(bits.size()) + " pixels");
    }
    std::fill_n(bits.begin() + static_cast<std::ptrdiff_t>(pos), runs[k], value);
    pos += runs[k];
    value ^= 1;
  }
  if (pos != bits.size()) {
    throw CorruptFileError("RLE runs cover " + std::to_string(pos) + " of " + std::to_string(bits.size()) +
                           " pixels");
  }
  return mask;
}

namespace {

std::string serialize_mask_impl(std::span<const BinaryMask2D> slices, const std::vector<double>* thresholds) {
  if (slices.empty()) throw ValidationError("mask has no slices");
  const int rows = slices.front().rows();
  const int cols = slices.front().cols();
  std::string out;
  out += "format_version: " + std::to_string(kFormatVersion) + "\n";
  out += thresholds ? "kind: dense\n" : "kind: label\n";
  out += "n_slices: " + std::to_string(slices.size()) + "\n";
  out += "rows: " + std::to_string(rows) + "\n";
  out += "cols: " + std::to_string(cols) + "\n";
  if (thresholds) {
    out += "thresholds:";
    for (double t : *thresholds) out += " " + format_real(t);
    out += "\n";
  }
  out += "areas:";
  for (const auto& s : slices) out += " " + std::to_string(s.popcount());
  out += "\n\n";
  for (const auto& s : slices) {
    if (s.rows() != rows || s.cols() != cols) throw ValidationError("mask slices differ in size");
    const auto runs = encode_rle(s);
    for (std::size_t k = 0; k < runs.size(); ++k) {
      if (k) out += ' ';
      out += std::to_string(runs[k]);
    }
    out += '\n';
  }
  return out;
}

struct ParsedMask {
  bool dense = false;
  int rows = 0;
  int cols = 0;
  std::vector<double> thresholds;
  std::vector<std::size_t> areas;
  std::vector<BinaryMask2D> slices;
};

ParsedMask parse_mask_impl(std::string_view text) {
  const Header h = parse_header(text, "mask",
                                {"format_version", "kind", "n_slices", "rows", "cols", "thresholds", "areas"});
  ParsedMask m;
  const std::string& kind = h.require("kind");
  if (kind == "dense") {
    m.dense = true;
  } else if (kind != "label") {
    throw ValidationError("field 'kind' must be 'dense' or 'label'");
  }
  const int n = parse_positive_int("n_slices", h.require("n_slices"));
  m.rows = parse_positive_int("rows", h.require("rows"));
  m.cols = parse_positive_int("cols", h.require("cols"));

  for (auto tok : split_ws(h.require("areas"))) m.areas.push_back(parse_number<std::size_t>("areas", tok));
  if (m.areas.size() != static_cast<std::size_t>(n)) throw ValidationError("field 'areas' needs n_slices values");
  if (m.dense) {
    for (auto tok : split_ws(h.require("thresholds"))) {
      const double t = parse_real("thresholds", tok);
      if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("field 'thresholds' has a value outside [0, 1]");
      m.thresholds.push_back(t);
    }
    if (m.thresholds.size() != static_cast<std::size_t>(n)) {
      throw ValidationError("field 'thresholds' needs n_slices values");
    }
  } else if (h.find("thresholds")) {
    throw ValidationError("field 'thresholds' is not allowed in a label mask");
  }

  LineCursor cur(text.substr(h.body_offset));
  std::vector<std::uint32_t> runs;
  for (int s = 0; s < n; ++s) {
    const auto line = cur.next_line();
    if (!line) throw CorruptFileError("mask file ends before slice " + std::to_string(s));
    runs.clear();
    for (auto tok : split_ws(*line)) {
      std::uint32_t r = 0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), r);
      if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
        throw CorruptFileError("slice " + std::to_string(s) + ": bad run length '" + std::string(tok) + "'");
      }
      runs.push_back(r);
    }
    if (runs.empty()) throw CorruptFileError("slice " + std::to_string(s) + " has no runs");
    try {
      m.slices.push_back(decode_rle(m.rows, m.cols, runs));
    } catch (const CorruptFileError& e) {
      throw CorruptFileError("slice " + std::to_string(s) + ": " + e.what());
    }
    if (m.slices.back().popcount() != m.areas[s]) {
      throw ConsistencyError("slice " + std::to_string(s) + ": header area " + std::to_string(m.areas[s]) +
                             " but decoded " + std::to_string(m.slices.back().popcount()) + " pixels");
    }
  }
  while (const auto line = cur.next_line()) {
    if (!trim(*line).empty()) throw CorruptFileError("trailing data after the last slice");
  }
  return m;
}

}  // namespace

std::string serialize_mask(const DenseMask& mask) {
  validate_dense_mask(mask);
  return serialize_mask_impl(mask.slices, &mask.slice_thresholds);
}

DenseMask parse_mask(std::string_view text) {
  ParsedMask m = parse_mask_impl(text);
  if (!m.dense) throw ValidationError("expected a dense mask, found a label mask");
  DenseMask out;
  out.n_slices = static_cast<int>(m.slices.size());
  out.rows = m.rows;
  out.cols = m.cols;
  out.slices = std::move(m.slices);
  out.slice_thresholds = std::move(m.thresholds);
  out.slice_areas_px = std::move(m.areas);
  return out;
}

void write_mask(const fs::path& path, const DenseMask& mask) { write_file_atomic(path, serialize_mask(mask)); }

DenseMask read_mask(const fs::path& path) { return parse_mask(read_file(path)); }

std::string serialize_label_mask(std::span<const BinaryMask2D> slices) {
  return serialize_mask_impl(slices, nullptr);
}

std::vector<BinaryMask2D> parse_label_mask(std::string_view text) { return parse_mask_impl(text).slices; }

void write_label_mask(const fs::path& path, std::span<const BinaryMask2D> slices) {
  write_file_atomic(path, serialize_label_mask(slices));
}

std::vector<BinaryMask2D> read_label_mask(const fs::path& path) { return parse_label_mask(read_file(path)); }

// ---------------------------------------------------------------------------
// Sessions

std::string serialize_session(const SessionRecord& r) {
  if (r.reader_id.empty()) throw ValidationError("field 'reader_id' is empty");
  check_text_value("reader_id", r.reader_id);
  check_text_value("volume", r.volume_ref);
  check_text_value("timestamp", r.timestamp);
  if (r.slice_thresholds.size() != r.slice_areas_px.size()) {
    throw ValidationError("field 'slices': thresholds and areas differ in length");
  }
  std::string out;
  out += "format_version: " + std::to_string(kFormatVersion) + "\n";
  out += "reader_id: " + r.reader_id + "\n";
  out += "volume: " + r.volume_ref + "\n";
  out += "timestamp: " + r.timestamp + "\n";
  out += "annotated_slice: " + std::to_string(r.polygon.annotated_slice) + "\n";
  out += "central_threshold: " + format_real(r.central_threshold) + "\n";
  out += "vertices: " + std::to_string(r.polygon.vertices.size()) + "\n";
  for (const Point& p : r.polygon.vertices) out += format_real(p.x) + " " + format_real(p.y) + "\n";
  out += "slices: " + std::to_string(r.slice_thresholds.size()) + "\n";
  for (std::size_t s = 0; s < r.slice_thresholds.size(); ++s) {
    out += std::to_string(s) + " " + format_real(r.slice_thresholds[s]) + " " + std::to_string(r.slice_areas_px[s]) +
           "\n";
  }
  return out;
}

SessionRecord parse_session(std::string_view text) {
  LineCursor cur(text);
  const int version = parse_number<int>("format_version", cur.expect("format_version"));
  if (version != kFormatVersion) {
    throw VersionError("session: unsupported format_version " + std::to_string(version));
  }
  SessionRecord r;
  r.reader_id = std::string(cur.expect("reader_id"));
  if (r.reader_id.empty()) throw ValidationError("field 'reader_id' is empty");
  r.volume_ref = std::string(cur.expect("volume"));
  r.timestamp = std::string(cur.expect("timestamp"));
  r.polygon.annotated_slice = parse_number<int>("annotated_slice", cur.expect("annotated_slice"));
  r.central_threshold = parse_real("central_threshold", cur.expect("central_threshold"));
  if (!(r.central_threshold >= 0.0 && r.central_threshold <= 1.0)) {
    throw ValidationError("field 'central_threshold' must be in [0, 1]");
  }
  const auto n_vertices = parse_number<std::size_t>("vertices", cur.expect("vertices"));
  for (std::size_t k = 0; k < n_vertices; ++k) {
    const auto line = cur.next_line();
    if (!line) throw ValidationError("field 'vertices': expected " + std::to_string(n_vertices) + " lines");
    const auto tok = split_ws(*line);
    if (tok.size() != 2) throw ValidationError("field 'vertices': line " + std::to_string(k) + " needs x and y");
    r.polygon.vertices.push_back({parse_real("vertices", tok[0]), parse_real("vertices", tok[1])});
  }
  const auto n_slices = parse_number<std::size_t>("slices", cur.expect("slices"));
  for (std::size_t s = 0; s < n_slices; ++s) {
    const auto line = cur.next_line();
    if (!line) throw ValidationError("field 'slices': expected " + std::to_string(n_slices) + " lines");
    const auto tok = split_ws(*line);
    if (tok.size() != 3 || parse_number<std::size_t>("slices", tok[0]) != s) {
      throw ValidationError("field 'slices': line " + std::to_string(s) + " must be '<s> <t> <area>'");
    }
    const double t = parse_real("slices", tok[1]);
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("field 'slices': threshold outside [0, 1]");
    r.slice_thresholds.push_back(t);
    r.slice_areas_px.push_back(parse_number<std::size_t>("slices", tok[2]));
  }
  while (const auto line = cur.next_line()) {
    if (!trim(*line).empty()) throw ValidationError("unexpected trailing line '" + std::string(*line) + "'");
  }
  return r;
}

void write_session(const fs::path& path, const SessionRecord& record) {
  write_file_atomic(path, serialize_session(record));
}

SessionRecord read_session(const fs::path& path) { return parse_session(read_file(path)); }

SessionRecord make_session_record(std::string reader_id, std::string volume_ref, std::string timestamp,
                                  const Annotation& annotation, const DenseMask* propagated) {
  SessionRecord r{std::move(reader_id), std::move(volume_ref), std::move(timestamp),
                  annotation.polygon, annotation.central_threshold, {}, {}};
  if (propagated) {
    r.slice_thresholds = propagated->slice_thresholds;
    r.slice_areas_px = propagated->slice_areas_px;
  }
  return r;
}

DenseMask replay_session(const DbtVolume& volume, const SessionRecord& record, unsigned threads) {
  const Annotation annotation = make_annotation(volume, record.polygon, record.central_threshold);
  DenseMask mask = propagate(volume, annotation, threads);
  if (!record.slice_thresholds.empty()) {
    if (record.slice_thresholds != mask.slice_thresholds || record.slice_areas_px != mask.slice_areas_px) {
      throw ConsistencyError("replaying the session does not reproduce its recorded per-slice results");
    }
  }
  return mask;
}

}  // namespace dbtmask

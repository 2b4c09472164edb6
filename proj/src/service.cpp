#include "dbtmask/service.hpp"

#include <png.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <random>

#include <httplib.h>

#include "dbtmask/errors.hpp"

namespace dbtmask {

using nlohmann::json;

std::string_view to_string(SessionState state) {
  switch (state) {
    case SessionState::LOADED: return "LOADED";
    case SessionState::ROI_SET: return "ROI_SET";
    case SessionState::THRESHOLD_SET: return "THRESHOLD_SET";
    case SessionState::PROPAGATED: return "PROPAGATED";
  }
  return "?";
}

namespace {

void png_append(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

void png_flush_noop(png_structp) {}

std::string encode_gray8_png(const std::vector<std::uint8_t>& pixels, int rows, int cols) {
  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG encoding failed");
  }
  png_set_write_fn(png, &out, png_append, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(cols), static_cast<png_uint_32>(rows), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int i = 0; i < rows; ++i) {
    png_write_row(png, const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(i) * cols));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

json rle_json(const BinaryMask2D& mask) {
  return {{"rows", mask.rows()}, {"cols", mask.cols()}, {"runs", encode_rle(mask)}};
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

std::string render_slice_png(const DbtVolume& volume, int s) {
  const NormalizedSlice norm = normalize_slice(volume, s);
  std::vector<std::uint8_t> gray(norm.values.size());
  for (std::size_t k = 0; k < gray.size(); ++k) {
    gray[k] = static_cast<std::uint8_t>(std::lround(norm.values[k] * 255.0));
  }
  return encode_gray8_png(gray, volume.rows(), volume.cols());
}

AnnotationService::AnnotationService(ServiceConfig config) : config_(config) {
  std::random_device rd;
  id_state_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::string AnnotationService::new_id(char prefix) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%c%016llx", prefix, static_cast<unsigned long long>(splitmix64(id_state_)));
  return buf;
}

std::shared_ptr<const AnnotationService::VolumeEntry> AnnotationService::find_volume(
    const std::string& volume_id) const {
  std::lock_guard lock(registry_mu_);
  const auto it = volumes_.find(volume_id);
  if (it == volumes_.end()) throw ServiceError(404, "unknown volume '" + volume_id + "'");
  return it->second;
}

std::shared_ptr<AnnotationService::Session> AnnotationService::find_session(const std::string& session_id) const {
  std::lock_guard lock(registry_mu_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown session '" + session_id + "'");
  return it->second;
}

json AnnotationService::upload_volume(std::string_view body) {
  if (body.size() > config_.max_volume_bytes) {
    throw ServiceError(413, "volume of " + std::to_string(body.size()) + " bytes exceeds the cap of " +
                                std::to_string(config_.max_volume_bytes));
  }
  VolumeContainer container = [&] {
    try {
      return parse_volume(body);
    } catch (const std::exception& e) {
      throw ServiceError(400, std::string("malformed volume container: ") + e.what());
    }
  }();
  const int central = central_slice_index(container.volume);
  auto entry = std::make_shared<VolumeEntry>(
      VolumeEntry{container.volume, normalize_slice(container.volume, central)});
  std::string id;
  {
    std::lock_guard lock(registry_mu_);
    id = new_id('v');
    volumes_.emplace(id, entry);
  }
  const DbtVolume& v = entry->volume;
  return {{"volume_id", id},
          {"n_slices", v.n_slices()},
          {"central_index", central},
          {"rows", v.rows()},
          {"cols", v.cols()},
          {"patient_id", v.patient_id()},
          {"view", std::string(to_string(v.view()))},
          {"pixel_spacing_mm", {v.spacing().row_mm, v.spacing().col_mm}}};
}

std::string AnnotationService::slice_png(const std::string& volume_id, int s) const {
  const auto entry = find_volume(volume_id);
  if (s < 0 || s >= entry->volume.n_slices()) {
    throw ServiceError(416, "slice " + std::to_string(s) + " out of range [0, " +
                                std::to_string(entry->volume.n_slices()) + ")");
  }
  return render_slice_png(entry->volume, s);
}

json AnnotationService::create_session(const std::string& volume_id, const std::string& reader_id) {
  auto volume = find_volume(volume_id);
  if (reader_id.empty() || reader_id.find('\n') != std::string::npos) {
    throw ServiceError(422, "reader_id must be a non-empty single line");
  }
  auto session = std::make_shared<Session>();
  session->volume_id = volume_id;
  session->reader_id = reader_id;
  session->volume = std::move(volume);
  {
    std::lock_guard lock(registry_mu_);
    session->id = new_id('s');
    sessions_.emplace(session->id, session);
  }
  return session_info(session->id);
}

json AnnotationService::session_info(const std::string& session_id) const {
  const auto session = find_session(session_id);
  std::shared_lock lock(session->mu);
  json out{{"session_id", session->id},
           {"volume_id", session->volume_id},
           {"reader_id", session->reader_id},
           {"state", std::string(to_string(session->state))},
           {"central_index", central_slice_index(session->volume->volume)}};
  if (session->polygon) {
    json vertices = json::array();
    for (const Point& p : session->polygon->vertices) vertices.push_back({p.x, p.y});
    out["vertices"] = std::move(vertices);
  }
  if (session->annotation) {
    out["threshold"] = session->annotation->central_threshold;
    out["reference_area_px"] = session->annotation->reference_area_px;
  }
  lock.unlock();
  out["state_digest"] = state_digest(session_id);
  return out;
}

json AnnotationService::set_roi(const std::string& session_id, const std::vector<Point>& vertices) {
  const auto session = find_session(session_id);
  std::unique_lock lock(session->mu, std::try_to_lock);
  if (!lock) throw ServiceError(409, "session is busy with another update");
  const DbtVolume& v = session->volume->volume;
  PolygonRoi roi{vertices, central_slice_index(v)};
  BinaryMask2D mask;
  try {
    mask = rasterize_polygon(roi, v.rows(), v.cols());
  } catch (const ValidationError& e) {
    throw ServiceError(422, std::string("invalid polygon: ") + e.what());
  }
  if (mask.popcount() == 0) throw ServiceError(422, "invalid polygon: covers no pixel centers");
  const MaskArea area = mask_area(mask, v.spacing());
  session->polygon = std::move(roi);
  session->roi_mask = std::move(mask);
  session->annotation.reset();
  session->result.reset();
  session->state = SessionState::ROI_SET;
  return {{"roi_area_px", area.pixels}, {"roi_area_mm2", area.area_mm2}, {"state", "ROI_SET"}};
}

json AnnotationService::preview(const std::string& session_id, double t) const {
  const auto session = find_session(session_id);
  std::shared_lock lock(session->mu);
  if (!session->roi_mask) throw ServiceError(409, "no ROI has been set for this session");
  if (!(t >= 0.0 && t <= 1.0)) throw ServiceError(422, "threshold must be in [0, 1]");
  const BinaryMask2D mask = segment_slice(session->volume->central, *session->roi_mask, t);
  const MaskArea area = mask_area(mask, session->volume->volume.spacing());
  return {{"t", t}, {"area_px", area.pixels}, {"area_mm2", area.area_mm2}, {"mask_rle_central", rle_json(mask)}};
}

json AnnotationService::commit_threshold(const std::string& session_id, double t) {
  const auto session = find_session(session_id);
  std::unique_lock lock(session->mu, std::try_to_lock);
  if (!lock) throw ServiceError(409, "session is busy with another update");
  if (!session->polygon) throw ServiceError(409, "no ROI has been set for this session");
  if (!(t >= 0.0 && t <= 1.0)) throw ServiceError(422, "threshold must be in [0, 1]");
  const BinaryMask2D mask = segment_slice(session->volume->central, *session->roi_mask, t);
  session->annotation = Annotation{*session->polygon, t, mask.popcount()};
  session->result.reset();
  session->state = SessionState::THRESHOLD_SET;
  return {{"t", t}, {"reference_area_px", mask.popcount()}, {"state", "THRESHOLD_SET"}};
}

json AnnotationService::propagate(const std::string& session_id) {
  const auto session = find_session(session_id);
  std::unique_lock lock(session->mu, std::try_to_lock);
  if (!lock) throw ServiceError(409, "session is busy with another update");
  if (!session->annotation) throw ServiceError(409, "commit a threshold before propagating");
  const DbtVolume& v = session->volume->volume;
  DenseMask result;
  Measurements m;
  try {
    result = dbtmask::propagate(v, *session->annotation, config_.propagate_threads);
    m = measure(result, *session->roi_mask, v.spacing());
  } catch (const std::exception& e) {
    throw ServiceError(500, std::string("propagation failed: ") + e.what());
  }
  json per_slice = json::array();
  for (int s = 0; s < result.n_slices; ++s) {
    per_slice.push_back({{"s", s}, {"t_s", result.slice_thresholds[s]}, {"area_px", result.slice_areas_px[s]}});
  }
  session->result = std::move(result);
  session->propagated_at = utc_timestamp();
  session->state = SessionState::PROPAGATED;
  return {{"per_slice", std::move(per_slice)},
          {"percent_density", m.percent_density},
          {"reference_area_px", session->annotation->reference_area_px},
          {"total_dense_voxels", m.total_dense_voxels}};
}

json AnnotationService::mask_slice(const std::string& session_id, int s) const {
  const auto session = find_session(session_id);
  std::shared_lock lock(session->mu);
  if (!session->result) throw ServiceError(409, "session has not been propagated");
  if (s < 0 || s >= session->result->n_slices) {
    throw ServiceError(416, "slice " + std::to_string(s) + " out of range");
  }
  json out = rle_json(session->result->slices[s]);
  out["s"] = s;
  out["t_s"] = session->result->slice_thresholds[s];
  out["area_px"] = session->result->slice_areas_px[s];
  return out;
}

std::string AnnotationService::export_session(const std::string& session_id) const {
  const auto session = find_session(session_id);
  std::shared_lock lock(session->mu);
  if (!session->annotation) throw ServiceError(409, "commit a threshold before exporting");
  const DbtVolume& v = session->volume->volume;
  const std::string ref = v.patient_id() + "_" + std::string(to_string(v.view()));
  const std::string when = session->result ? session->propagated_at : utc_timestamp();
  return serialize_session(make_session_record(session->reader_id, ref, when, *session->annotation,
                                               session->result ? &*session->result : nullptr));
}

std::string AnnotationService::export_mask(const std::string& session_id) const {
  const auto session = find_session(session_id);
  std::shared_lock lock(session->mu);
  if (!session->result) throw ServiceError(409, "session has not been propagated");
  return serialize_mask(*session->result);
}

std::string AnnotationService::state_digest(const std::string& session_id) const {
  const auto session = find_session(session_id);
  std::shared_lock lock(session->mu);
  std::string blob = std::string(to_string(session->state)) + "\n";
  if (session->polygon) {
    for (const Point& p : session->polygon->vertices) blob += format_real(p.x) + " " + format_real(p.y) + "\n";
  }
  if (session->annotation) {
    blob += format_real(session->annotation->central_threshold) + " " +
            std::to_string(session->annotation->reference_area_px) + "\n";
  }
  if (session->result) blob += serialize_mask(*session->result);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(blob)));
  return buf;
}

// ---------------------------------------------------------------------------
// HTTP transport

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const ServiceError& e) {
      send_json(res, {{"error", e.what()}}, e.status());
    } catch (const json::exception& e) {
      send_json(res, {{"error", std::string("malformed JSON body: ") + e.what()}}, 400);
    } catch (const std::exception& e) {
      send_json(res, {{"error", e.what()}}, 500);
    }
  };
}

int parse_index(const std::string& text, int out_of_range_status) {
  int value = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ServiceError(out_of_range_status, "slice index '" + text + "' is not an integer");
  }
  return value;
}

double parse_threshold(const json& value) {
  if (!value.is_number()) throw ServiceError(422, "threshold must be a number");
  return value.get<double>();
}

}  // namespace

void AnnotationService::mount(httplib::Server& server) {
  server.set_payload_max_length(config_.max_volume_bytes);
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});

  server.Post("/volumes", guarded([this](const httplib::Request& req, httplib::Response& res) {
                send_json(res, upload_volume(req.body));
              }));
  server.Get(R"(/volumes/([^/]+)/slices/([^/]+))",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               if (req.has_param("window") && req.get_param_value("window") != "minmax") {
                 throw ServiceError(400, "only window=minmax is supported");
               }
               res.set_content(slice_png(req.matches[1], parse_index(req.matches[2], 416)), "image/png");
             }));
  server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const json body = json::parse(req.body);
                if (!body.contains("volume_id") || !body.at("volume_id").is_string()) {
                  throw ServiceError(422, "volume_id is required");
                }
                send_json(res, create_session(body.at("volume_id").get<std::string>(),
                                              body.value("reader_id", std::string("anonymous"))));
              }));
  server.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
               send_json(res, session_info(req.matches[1]));
             }));
  server.Post(R"(/sessions/([^/]+)/roi)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const json body = json::parse(req.body);
                if (!body.contains("vertices") || !body.at("vertices").is_array()) {
                  throw ServiceError(422, "vertices must be an array of [x, y] pairs");
                }
                std::vector<Point> vertices;
                for (const auto& v : body.at("vertices")) {
                  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
                    throw ServiceError(422, "vertices must be an array of [x, y] pairs");
                  }
                  vertices.push_back({v[0].get<double>(), v[1].get<double>()});
                }
                send_json(res, set_roi(req.matches[1], vertices));
              }));
  server.Get(R"(/sessions/([^/]+)/preview)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const std::string text = req.get_param_value("t");
               double t = 0.0;
               const auto r = std::from_chars(text.data(), text.data() + text.size(), t);
               if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size()) {
                 // Still report a missing ROI first.
                 (void)preview(req.matches[1], 0.0);
                 throw ServiceError(422, "query parameter t must be a number in [0, 1]");
               }
               send_json(res, preview(req.matches[1], t));
             }));
  server.Post(R"(/sessions/([^/]+)/threshold)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                const json body = json::parse(req.body);
                if (!body.contains("t")) throw ServiceError(422, "t is required");
                send_json(res, commit_threshold(req.matches[1], parse_threshold(body.at("t"))));
              }));
  server.Post(R"(/sessions/([^/]+)/propagate)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                send_json(res, propagate(req.matches[1]));
              }));
  server.Get(R"(/sessions/([^/]+)/mask/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
               send_json(res, mask_slice(req.matches[1], parse_index(req.matches[2], 416)));
             }));
  server.Get(R"(/sessions/([^/]+)/export/session)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               res.set_content(export_session(req.matches[1]), "text/plain");
             }));
  server.Get(R"(/sessions/([^/]+)/export/mask)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               res.set_content(export_mask(req.matches[1]), "text/plain");
             }));
}

}  // namespace dbtmask

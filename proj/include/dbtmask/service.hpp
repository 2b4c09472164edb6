#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "dbtmask/engine.hpp"
#include "dbtmask/geometry.hpp"
#include "dbtmask/store.hpp"
#include "dbtmask/volume.hpp"

namespace httplib {
class Server;
}

namespace dbtmask {

// Carries the HTTP status the transport layer should answer with.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& message) : std::runtime_error(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

enum class SessionState { LOADED, ROI_SET, THRESHOLD_SET, PROPAGATED };
std::string_view to_string(SessionState state);

struct ServiceConfig {
  std::size_t max_volume_bytes = std::size_t{1} << 30;
  unsigned propagate_threads = 1;
};

// Min-max windowed 8-bit grayscale PNG of one slice.
std::string render_slice_png(const DbtVolume& volume, int s);

// The interactive annotation workflow behind the HTTP API. Every method is
// safe to call concurrently. Mutating calls on one session are serialized:
// a mutation that finds the session busy fails with 409 instead of waiting.
class AnnotationService {
 public:
  explicit AnnotationService(ServiceConfig config = {});

  // POST /volumes
  nlohmann::json upload_volume(std::string_view body);
  // GET /volumes/{id}/slices/{s}
  std::string slice_png(const std::string& volume_id, int s) const;

  // POST /sessions {"volume_id", "reader_id"?}
  nlohmann::json create_session(const std::string& volume_id, const std::string& reader_id);
  // GET /sessions/{id}
  nlohmann::json session_info(const std::string& session_id) const;
  // POST /sessions/{id}/roi {"vertices": [[x, y], ...]}
  nlohmann::json set_roi(const std::string& session_id, const std::vector<Point>& vertices);
  // GET /sessions/{id}/preview?t=
  nlohmann::json preview(const std::string& session_id, double t) const;
  // POST /sessions/{id}/threshold {"t"}
  nlohmann::json commit_threshold(const std::string& session_id, double t);
  // POST /sessions/{id}/propagate
  nlohmann::json propagate(const std::string& session_id);
  // GET /sessions/{id}/mask/{s}
  nlohmann::json mask_slice(const std::string& session_id, int s) const;
  // GET /sessions/{id}/export/session and /export/mask
  std::string export_session(const std::string& session_id) const;
  std::string export_mask(const std::string& session_id) const;

  // Hash over everything a mutation could change.
  std::string state_digest(const std::string& session_id) const;

  // Registers every route on `server`; the service must outlive it.
  void mount(httplib::Server& server);

  const ServiceConfig& config() const { return config_; }

 private:
  struct VolumeEntry {
    DbtVolume volume;
    NormalizedSlice central;
  };

  struct Session {
    std::string id;
    std::string volume_id;
    std::string reader_id;
    std::shared_ptr<const VolumeEntry> volume;
    SessionState state = SessionState::LOADED;
    std::optional<PolygonRoi> polygon;
    std::optional<BinaryMask2D> roi_mask;
    std::optional<Annotation> annotation;
    std::optional<DenseMask> result;
    std::string propagated_at;
    mutable std::shared_mutex mu;
  };

  std::shared_ptr<const VolumeEntry> find_volume(const std::string& volume_id) const;
  std::shared_ptr<Session> find_session(const std::string& session_id) const;
  std::string new_id(char prefix);

  ServiceConfig config_;
  mutable std::mutex registry_mu_;
  std::map<std::string, std::shared_ptr<const VolumeEntry>> volumes_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t id_state_;
};

}  // namespace dbtmask

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "roadlayout/camera_geometry.hpp"
#include "roadlayout/dataset_io.hpp"
#include "roadlayout/grid.hpp"

namespace httplib {
class Server;
}

namespace roadlayout {

struct ServiceConfig {
  std::filesystem::path manifest_path;
  std::filesystem::path images_dir;
  // Directory of <calib_id>.txt KITTI files; without it only the default
  // camera is available for previews.
  std::optional<std::filesystem::path> calib_dir;
  CalibOptions calib_options;
  GridSpec grid;
};

// Preview camera used when a render request names no calibration: 90 degree
// horizontal field of view, principal point at the image center.
CameraModel default_camera(const CalibOptions& options);

std::string base64_encode(std::span<const std::uint8_t> bytes);

// Annotation session over one manifest. All writes are serialized and
// persisted before they are acknowledged.
class AnnotationService {
 public:
  // Loads the manifest; throws DataError / ParseError if it does not parse.
  explicit AnnotationService(ServiceConfig config);

  void mount(httplib::Server& server);

  std::vector<FrameRecord> snapshot() const;

  // Pure: identical inputs give identical bytes. Throws ValidationError,
  // ParseError, or std::out_of_range for an unknown calib_id.
  nlohmann::json render_preview(const nlohmann::json& body) const;

 private:
  struct HttpResult {
    int status = 200;
    nlohmann::json body;
  };

  HttpResult list_frames() const;
  HttpResult get_frame(const std::string& id) const;
  HttpResult put_attributes(const std::string& id, std::string_view body);
  HttpResult copy_from(const std::string& id, const std::string& prev);
  std::optional<std::filesystem::path> image_path(const std::string& id) const;

  CameraModel camera_for(const std::string& calib_id) const;
  void persist_locked();

  ServiceConfig config_;
  mutable std::mutex mutex_;
  std::vector<FrameRecord> records_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Frames without a stored status count as "done" when annotated.
AnnotationStatus effective_status(const FrameRecord& record);

}  // namespace roadlayout

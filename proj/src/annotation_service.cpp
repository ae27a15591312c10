#include "roadlayout/annotation_service.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "httplib.h"
#include "roadlayout/bev_renderer.hpp"
#include "roadlayout/scene_json.hpp"

namespace roadlayout {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kMaxBodyBytes = 1 << 20;

json error_body(std::string_view message) { return {{"error", message}}; }

json violations_body(const ValidationReport& report) {
  json list = json::array();
  for (const auto& v : report.violations) list.push_back({{"field", v.field}, {"message", v.message}});
  return {{"error", "annotation failed validation"}, {"violations", std::move(list)}};
}

json frame_json(const FrameRecord& r) {
  json j = record_to_json(r);
  j["status"] = std::string(name_of(effective_status(r)));
  j["revision"] = r.revision.value_or(0);
  return j;
}

// Only bare file names may reach the filesystem.
bool is_safe_name(std::string_view s) {
  if (s.empty() || s == "." || s == "..") return false;
  return std::none_of(s.begin(), s.end(), [](char c) {
    return c == '/' || c == '\\' || c == '\0';
  });
}

std::string content_type_for(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".bmp") return "image/bmp";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

SceneAttributes parse_valid_attributes(const json& j) {
  SceneAttributes theta = attributes_from_json(j, "attributes");
  require_valid(theta);
  return canonicalized(theta);
}

}  // namespace

AnnotationStatus effective_status(const FrameRecord& record) {
  if (record.status) return *record.status;
  return record.attributes ? AnnotationStatus::kDone : AnnotationStatus::kEmpty;
}

CameraModel default_camera(const CalibOptions& options) {
  CameraModel cam;
  cam.fx = cam.fy = options.image_width / 2.0;
  cam.cx = (options.image_width - 1) / 2.0;
  cam.cy = (options.image_height - 1) / 2.0;
  cam.image_width = options.image_width;
  cam.image_height = options.image_height;
  cam.height = options.height;
  cam.pitch = options.pitch;
  cam.check();
  return cam;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  if (const std::size_t rest = bytes.size() - i; rest > 0) {
    std::uint32_t n = bytes[i] << 16;
    if (rest == 2) n |= bytes[i + 1] << 8;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += rest == 2 ? kAlphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

AnnotationService::AnnotationService(ServiceConfig config) : config_(std::move(config)) {
  config_.grid.check();
  if (fs::exists(config_.manifest_path)) {
    records_ = load_manifest(config_.manifest_path);
  } else {
    spdlog::warn("manifest {} does not exist yet; starting empty", config_.manifest_path.string());
  }
  for (std::size_t i = 0; i < records_.size(); ++i) index_.emplace(records_[i].frame_id, i);
}

std::vector<FrameRecord> AnnotationService::snapshot() const {
  std::lock_guard lock(mutex_);
  return records_;
}

CameraModel AnnotationService::camera_for(const std::string& calib_id) const {
  if (calib_id.empty()) return default_camera(config_.calib_options);
  if (!config_.calib_dir || !is_safe_name(calib_id)) {
    throw std::out_of_range("unknown calib_id '" + calib_id + "'");
  }
  const fs::path file = *config_.calib_dir / (calib_id + ".txt");
  if (!fs::is_regular_file(file)) throw std::out_of_range("unknown calib_id '" + calib_id + "'");
  return load_kitti_calib(file, config_.calib_options);
}

json AnnotationService::render_preview(const json& body) const {
  if (!body.is_object()) throw ParseError("request body must be a JSON object");
  for (const auto& item : body.items()) {
    if (item.key() != "attributes" && item.key() != "calib_id") {
      throw ParseError("unknown field '" + item.key() + "'");
    }
  }
  auto attrs = body.find("attributes");
  if (attrs == body.end()) throw ParseError("missing field 'attributes'");
  std::string calib_id;
  if (auto it = body.find("calib_id"); it != body.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError("field 'calib_id' must be a string");
    calib_id = it->get<std::string>();
  }
  const SceneAttributes theta = parse_valid_attributes(*attrs);
  const CameraModel cam = camera_for(calib_id);
  const SemanticGrid bev = render(theta, config_.grid);
  const SemanticGrid overlay = bev_to_perspective(bev, config_.grid, cam);
  return {{"bev", base64_encode(encode_grid(bev, GridFormat::kPng))},
          {"overlay", base64_encode(encode_grid(overlay, GridFormat::kPng))}};
}

AnnotationService::HttpResult AnnotationService::list_frames() const {
  std::lock_guard lock(mutex_);
  json frames = json::array();
  for (const auto& r : records_) {
    frames.push_back({{"frame_id", r.frame_id},
                      {"image_path", r.image_path},
                      {"calib_id", r.calib_id},
                      {"status", std::string(name_of(effective_status(r)))},
                      {"revision", r.revision.value_or(0)}});
  }
  return {200, {{"frames", std::move(frames)}}};
}

AnnotationService::HttpResult AnnotationService::get_frame(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = index_.find(id);
  if (it == index_.end()) return {404, error_body("unknown frame '" + id + "'")};
  return {200, frame_json(records_[it->second])};
}

void AnnotationService::persist_locked() { save_manifest(records_, config_.manifest_path); }

AnnotationService::HttpResult AnnotationService::put_attributes(const std::string& id,
                                                                std::string_view text) {
  json body;
  try {
    body = json::parse(text);
  } catch (const json::exception& e) {
    return {400, error_body(std::string("malformed JSON: ") + e.what())};
  }
  if (!body.is_object()) return {400, error_body("request body must be a JSON object")};
  for (const auto& item : body.items()) {
    static const std::array<std::string_view, 4> kKnown = {"attributes", "expected_revision",
                                                          "edit_seconds", "status"};
    if (std::find(kKnown.begin(), kKnown.end(), item.key()) == kKnown.end()) {
      return {400, error_body("unknown field '" + item.key() + "'")};
    }
  }
  auto rev = body.find("expected_revision");
  if (rev == body.end() || !rev->is_number_integer()) {
    return {400, error_body("field 'expected_revision' must be an integer")};
  }
  double edit_seconds = 0.0;
  if (auto it = body.find("edit_seconds"); it != body.end() && !it->is_null()) {
    if (!it->is_number() || !(it->get<double>() >= 0.0) || !std::isfinite(it->get<double>())) {
      return {400, error_body("field 'edit_seconds' must be a non-negative number")};
    }
    edit_seconds = it->get<double>();
  }
  AnnotationStatus status = AnnotationStatus::kDone;
  if (auto it = body.find("status"); it != body.end() && !it->is_null()) {
    std::optional<AnnotationStatus> s;
    if (it->is_string()) s = annotation_status_from_string(it->get_ref<const std::string&>());
    if (!s || *s == AnnotationStatus::kEmpty) {
      return {400, error_body("field 'status' must be 'draft' or 'done'")};
    }
    status = *s;
  }
  auto attrs = body.find("attributes");
  if (attrs == body.end()) return {400, error_body("missing field 'attributes'")};

  SceneAttributes theta;
  try {
    theta = parse_valid_attributes(*attrs);
  } catch (const ValidationError& e) {
    return {400, violations_body(e.report())};
  } catch (const DataError& e) {
    return {400, error_body(e.what())};
  }

  std::lock_guard lock(mutex_);
  auto it = index_.find(id);
  if (it == index_.end()) return {404, error_body("unknown frame '" + id + "'")};
  FrameRecord& record = records_[it->second];
  const std::int64_t current = record.revision.value_or(0);
  if (rev->get<std::int64_t>() != current) {
    return {409, {{"error", "revision conflict"}, {"revision", current}}};
  }
  const FrameRecord before = record;
  record.attributes = theta;
  record.status = status;
  record.revision = current + 1;
  if (edit_seconds > 0.0 || record.annotation_seconds) {
    record.annotation_seconds = record.annotation_seconds.value_or(0.0) + edit_seconds;
  }
  try {
    persist_locked();
  } catch (const std::exception& e) {
    record = before;
    spdlog::error("could not persist manifest: {}", e.what());
    return {500, error_body("could not persist manifest")};
  }
  return {200, frame_json(record)};
}

AnnotationService::HttpResult AnnotationService::copy_from(const std::string& id,
                                                           const std::string& prev) {
  std::lock_guard lock(mutex_);
  auto target = index_.find(id);
  if (target == index_.end()) return {404, error_body("unknown frame '" + id + "'")};
  auto source = index_.find(prev);
  if (source == index_.end()) return {404, error_body("unknown frame '" + prev + "'")};
  const FrameRecord& from = records_[source->second];
  if (!from.attributes) return {409, error_body("frame '" + prev + "' has no annotation")};

  FrameRecord& record = records_[target->second];
  const FrameRecord before = record;
  record.attributes = from.attributes;
  record.status = AnnotationStatus::kDraft;
  record.revision = record.revision.value_or(0) + 1;
  try {
    persist_locked();
  } catch (const std::exception& e) {
    record = before;
    spdlog::error("could not persist manifest: {}", e.what());
    return {500, error_body("could not persist manifest")};
  }
  return {200, frame_json(record)};
}

std::optional<fs::path> AnnotationService::image_path(const std::string& id) const {
  std::string rel;
  {
    std::lock_guard lock(mutex_);
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    rel = records_[it->second].image_path;
  }
  if (rel.empty()) return std::nullopt;
  std::error_code ec;
  const fs::path root = fs::weakly_canonical(config_.images_dir, ec);
  if (ec) return std::nullopt;
  const fs::path full = fs::weakly_canonical(root / rel, ec);
  if (ec) return std::nullopt;
  // Refuse anything that resolves outside the image directory.
  auto [r, f] = std::mismatch(root.begin(), root.end(), full.begin(), full.end());
  if (r != root.end()) return std::nullopt;
  if (!fs::is_regular_file(full)) return std::nullopt;
  return full;
}

void AnnotationService::mount(httplib::Server& server) {
  server.set_payload_max_length(kMaxBodyBytes);
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, PUT, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});

  auto reply = [](httplib::Response& res, const HttpResult& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };

  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });

  server.Get("/api/schema", [reply](const httplib::Request&, httplib::Response& res) {
    reply(res, {200, schema_json()});
  });

  server.Get("/api/frames", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, list_frames());
  });

  server.Get(R"(/api/frames/([^/]+))", [this, reply](const httplib::Request& req,
                                                     httplib::Response& res) {
    reply(res, get_frame(req.matches[1]));
  });

  server.Get(R"(/api/frames/([^/]+)/image)", [this, reply](const httplib::Request& req,
                                                           httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto path = image_path(id);
    if (!path) {
      reply(res, {404, error_body("no image for frame '" + id + "'")});
      return;
    }
    try {
      const auto bytes = read_file_bytes(*path);
      res.set_content(std::string(bytes.begin(), bytes.end()), content_type_for(*path));
    } catch (const DataError& e) {
      reply(res, {404, error_body(e.what())});
    }
  });

  server.Put(R"(/api/frames/([^/]+)/attributes)", [this, reply](const httplib::Request& req,
                                                                httplib::Response& res) {
    reply(res, put_attributes(req.matches[1], req.body));
  });

  server.Post(R"(/api/frames/([^/]+)/copy-from/([^/]+))",
              [this, reply](const httplib::Request& req, httplib::Response& res) {
                reply(res, copy_from(req.matches[1], req.matches[2]));
              });

  server.Post("/api/render", [this, reply](const httplib::Request& req, httplib::Response& res) {
    try {
      reply(res, {200, render_preview(json::parse(req.body))});
    } catch (const json::exception& e) {
      reply(res, {400, error_body(std::string("malformed JSON: ") + e.what())});
    } catch (const ValidationError& e) {
      reply(res, {400, violations_body(e.report())});
    } catch (const std::out_of_range& e) {
      reply(res, {404, error_body(e.what())});
    } catch (const DataError& e) {
      reply(res, {400, error_body(e.what())});
    }
  });

  server.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                                  std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    spdlog::error("request failed: {}", what);
    res.status = 500;
    res.set_content(error_body("internal error").dump(), "application/json");
  });
}

}  // namespace roadlayout

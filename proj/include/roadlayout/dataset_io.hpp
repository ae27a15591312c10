#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "roadlayout/camera_geometry.hpp"
#include "roadlayout/grid.hpp"
#include "roadlayout/scene_model.hpp"
#include "roadlayout/supervision.hpp"

namespace roadlayout {

// ---------------------------------------------------------------------------
// Calibration

// KITTI calibration files only carry intrinsics; the ground-plane extrinsics
// and the image size come from configuration.
struct CalibOptions {
  double height = 1.65;
  double pitch = 0.0;
  int image_width = 1242;
  int image_height = 375;
};

// Reads the 3x4 "P2:" projection matrix (row-major, 12 reals).
// Throws ParseError with line/column context.
CameraModel parse_kitti_calib(std::string_view text, const CalibOptions& options);
CameraModel load_kitti_calib(const std::filesystem::path& path, const CalibOptions& options);

// ---------------------------------------------------------------------------
// Frame manifests (JSONL, one record per line)

enum class AnnotationStatus { kEmpty, kDraft, kDone };

std::string_view name_of(AnnotationStatus s);
std::optional<AnnotationStatus> annotation_status_from_string(std::string_view s);

struct FrameRecord {
  std::string frame_id;
  std::string image_path;
  std::string calib_id;
  std::optional<SceneAttributes> attributes;
  std::optional<int> object_count;
  std::optional<double> annotation_seconds;
  // Annotation-session bookkeeping, persisted alongside the record.
  std::optional<AnnotationStatus> status;
  std::optional<std::int64_t> revision;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

nlohmann::json record_to_json(const FrameRecord& record);
FrameRecord record_from_json(const nlohmann::json& j, std::string_view context = {});

// `source` names the input in error messages. Blank lines are skipped;
// duplicate frame ids are rejected.
std::vector<FrameRecord> parse_manifest(std::string_view text, std::string_view source = {});
std::string format_manifest(std::span<const FrameRecord> records);

std::vector<FrameRecord> load_manifest(const std::filesystem::path& path);
// Whole-file atomic: written to a sibling temp file, then renamed.
void save_manifest(std::span<const FrameRecord> records, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Label grids

struct Rgb {
  std::uint8_t r, g, b;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Indexed by SemanticClass.
inline constexpr std::array<Rgb, kNumClassesWithUnknown> kPalette = {{
    {64, 64, 64},     // Background
    {128, 64, 128},   // Road
    {244, 35, 232},   // Sidewalk
    {255, 255, 255},  // LaneBoundary
    {220, 220, 0},    // Crosswalk
    {0, 0, 0},        // Unknown
}};

enum class GridFormat { kPng, kRaw };

std::optional<GridFormat> grid_format_from_string(std::string_view s);
std::string_view extension_of(GridFormat f);  // ".png" / ".raw"

// PNG: 8-bit RGB with the fixed palette. Raw: little-endian uint32 rows, uint32
// cols, then one class byte per cell, row-major.
std::vector<std::uint8_t> encode_grid(const SemanticGrid& grid, GridFormat format);
SemanticGrid decode_grid(std::span<const std::uint8_t> bytes, GridFormat format);

void export_grid(const SemanticGrid& grid, GridFormat format, const std::filesystem::path& path);
SemanticGrid import_grid(const std::filesystem::path& path, GridFormat format);

// ---------------------------------------------------------------------------
// Supervision targets (JSONL)

nlohmann::json targets_to_json(const AttributeTargets& targets, std::string_view frame_id);

// ---------------------------------------------------------------------------
// Files

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace roadlayout

#include "roadlayout/dataset_io.hpp"

#include <png.h>

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "roadlayout/scene_json.hpp"

namespace roadlayout {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Calibration

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

struct Token {
  std::string_view text;
  std::size_t column;  // 1-based
};

std::vector<Token> split_tokens(std::string_view line, std::size_t start) {
  std::vector<Token> tokens;
  std::size_t i = start;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    if (i >= line.size()) break;
    const std::size_t begin = i;
    while (i < line.size() && !is_space(line[i])) ++i;
    tokens.push_back({line.substr(begin, i - begin), begin + 1});
  }
  return tokens;
}

std::string printable(std::string_view s) {
  std::string out;
  for (char c : s.substr(0, 32)) {
    const auto u = static_cast<unsigned char>(c);
    if (u >= 0x20 && u < 0x7f) {
      out += c;
    } else {
      char buf[8];
      std::snprintf(buf, sizeof buf, "\\x%02x", u);
      out += buf;
    }
  }
  if (s.size() > 32) out += "...";
  return out;
}

}  // namespace

CameraModel parse_kitti_calib(std::string_view text, const CalibOptions& options) {
  constexpr std::string_view kKey = "P2:";
  std::optional<std::array<double, 12>> projection;
  std::size_t key_line = 0;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;

    std::size_t lead = 0;
    while (lead < line.size() && is_space(line[lead])) ++lead;
    if (line.substr(lead, kKey.size()) != kKey) {
      if (end == text.size()) break;
      continue;
    }
    if (projection) throw ParseError("duplicate 'P2:' entry", line_no, lead + 1);

    const auto tokens = split_tokens(line, lead + kKey.size());
    if (tokens.size() != 12) {
      throw ParseError("'P2:' needs 12 numbers, found " + std::to_string(tokens.size()), line_no,
                       lead + 1);
    }
    std::array<double, 12> values{};
    for (std::size_t k = 0; k < 12; ++k) {
      const auto& tok = tokens[k];
      double v = 0.0;
      const char* first = tok.text.data();
      const char* last = first + tok.text.size();
      if (*first == '+') ++first;  // from_chars rejects a leading plus
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw ParseError("non-numeric token '" + printable(tok.text) + "'", line_no, tok.column);
      }
      values[k] = v;
    }
    projection = values;
    key_line = line_no;
    if (end == text.size()) break;
  }
  if (!projection) throw ParseError("missing key 'P2:'");

  const auto& p = *projection;
  CameraModel cam;
  cam.fx = p[0];
  cam.cx = p[2];
  cam.fy = p[5];
  cam.cy = p[6];
  cam.image_width = options.image_width;
  cam.image_height = options.image_height;
  cam.height = options.height;
  cam.pitch = options.pitch;
  try {
    cam.check();
  } catch (const DataError& e) {
    throw ParseError(e.what(), key_line);
  }
  return cam;
}

CameraModel load_kitti_calib(const fs::path& path, const CalibOptions& options) {
  const std::string text = read_file_text(path);
  try {
    return parse_kitti_calib(text, options);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.line(), e.column());
  }
}

// ---------------------------------------------------------------------------
// Manifests

std::string_view name_of(AnnotationStatus s) {
  switch (s) {
    case AnnotationStatus::kEmpty: return "empty";
    case AnnotationStatus::kDraft: return "draft";
    case AnnotationStatus::kDone: return "done";
  }
  return "empty";
}

std::optional<AnnotationStatus> annotation_status_from_string(std::string_view s) {
  if (s == "empty") return AnnotationStatus::kEmpty;
  if (s == "draft") return AnnotationStatus::kDraft;
  if (s == "done") return AnnotationStatus::kDone;
  return std::nullopt;
}

nlohmann::json record_to_json(const FrameRecord& record) {
  nlohmann::json j = {{"frame_id", record.frame_id},
                      {"image_path", record.image_path},
                      {"calib_id", record.calib_id}};
  if (record.attributes) j["attributes"] = attributes_to_json(*record.attributes);
  if (record.object_count) j["object_count"] = *record.object_count;
  if (record.annotation_seconds) j["annotation_seconds"] = *record.annotation_seconds;
  if (record.status) j["status"] = std::string(name_of(*record.status));
  if (record.revision) j["revision"] = *record.revision;
  return j;
}

FrameRecord record_from_json(const nlohmann::json& j, std::string_view context) {
  auto fail = [&](const std::string& msg) -> void {
    throw ParseError(context.empty() ? msg : std::string(context) + ": " + msg);
  };
  if (!j.is_object()) fail("record must be a JSON object");
  static const std::set<std::string> kKnown = {"frame_id",     "image_path",         "calib_id",
                                               "attributes",   "object_count",       "status",
                                               "revision",     "annotation_seconds"};
  for (const auto& item : j.items()) {
    if (!kKnown.contains(item.key())) fail("unknown field '" + item.key() + "'");
  }

  FrameRecord r;
  auto id = j.find("frame_id");
  if (id == j.end()) fail("missing field 'frame_id'");
  if (!id->is_string() || id->get_ref<const std::string&>().empty()) {
    fail("field 'frame_id' must be a non-empty string");
  }
  r.frame_id = id->get<std::string>();
  const std::string ctx = (context.empty() ? "" : std::string(context) + ": ") + "frame '" +
                          r.frame_id + "'";
  auto string_field = [&](const char* key, std::string& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_string()) fail(std::string("field '") + key + "' must be a string");
    out = it->get<std::string>();
  };
  string_field("image_path", r.image_path);
  string_field("calib_id", r.calib_id);

  if (auto it = j.find("attributes"); it != j.end() && !it->is_null()) {
    r.attributes = attributes_from_json(*it, ctx);
  }
  if (auto it = j.find("object_count"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<long long>() < 0 ||
        it->get<long long>() > 1'000'000) {
      fail("field 'object_count' must be a non-negative integer");
    }
    r.object_count = static_cast<int>(it->get<long long>());
  }
  if (auto it = j.find("annotation_seconds"); it != j.end() && !it->is_null()) {
    if (!it->is_number() || !(it->get<double>() >= 0.0)) {
      fail("field 'annotation_seconds' must be a non-negative number");
    }
    r.annotation_seconds = it->get<double>();
  }
  if (auto it = j.find("status"); it != j.end() && !it->is_null()) {
    std::optional<AnnotationStatus> s;
    if (it->is_string()) s = annotation_status_from_string(it->get_ref<const std::string&>());
    if (!s) fail("field 'status' must be one of empty, draft, done");
    r.status = s;
  }
  if (auto it = j.find("revision"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<long long>() < 0) {
      fail("field 'revision' must be a non-negative integer");
    }
    r.revision = it->get<std::int64_t>();
  }
  return r;
}

std::vector<FrameRecord> parse_manifest(std::string_view text, std::string_view source) {
  std::vector<FrameRecord> records;
  std::set<std::string> seen;
  const std::string prefix = source.empty() ? "" : std::string(source) + ": ";
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    FrameRecord record;
    try {
      record = record_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(prefix + "malformed record: " + e.what(), line_no);
    } catch (const ParseError& e) {
      throw ParseError(prefix + e.detail(), line_no);
    }
    if (!seen.insert(record.frame_id).second) {
      throw ParseError(prefix + "duplicate frame_id '" + record.frame_id + "'", line_no);
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::string format_manifest(std::span<const FrameRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<FrameRecord> load_manifest(const fs::path& path) {
  return parse_manifest(read_file_text(path), path.string());
}

void save_manifest(std::span<const FrameRecord> records, const fs::path& path) {
  std::set<std::string_view> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.frame_id).second) {
      throw DataError("refusing to save manifest with duplicate frame_id '" + r.frame_id + "'");
    }
  }
  write_file_atomic(path, format_manifest(records));
}

// ---------------------------------------------------------------------------
// Grids

std::optional<GridFormat> grid_format_from_string(std::string_view s) {
  if (s == "png" || s == ".png") return GridFormat::kPng;
  if (s == "raw" || s == ".raw") return GridFormat::kRaw;
  return std::nullopt;
}

std::string_view extension_of(GridFormat f) { return f == GridFormat::kPng ? ".png" : ".raw"; }

namespace {

constexpr std::size_t kRawHeaderBytes = 8;
constexpr std::uint32_t kMaxGridSide = 1u << 15;
constexpr std::size_t kMaxGridCells = std::size_t{1} << 26;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> encode_png(const SemanticGrid& grid) {
  if (grid.rows() == 0 || grid.cols() == 0) throw DataError("cannot write an empty grid as PNG");
  std::vector<std::uint8_t> rgb;
  rgb.reserve(grid.size() * 3);
  for (SemanticClass c : grid.labels()) {
    const Rgb& color = kPalette[static_cast<std::size_t>(c)];
    rgb.insert(rgb.end(), {color.r, color.g, color.b});
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(grid.cols());
  image.height = static_cast<png_uint_32>(grid.rows());
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DataError("PNG encoding failed: " + msg);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DataError("PNG encoding failed: " + msg);
  }
  out.resize(size);
  return out;
}

SemanticGrid decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ParseError("not a readable PNG: " + msg);
  }
  if (image.width == 0 || image.height == 0 || image.width > kMaxGridSide ||
      image.height > kMaxGridSide ||
      static_cast<std::size_t>(image.width) * image.height > kMaxGridCells) {
    png_image_free(&image);
    throw ParseError("PNG dimensions out of range");
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ParseError("corrupt PNG: " + msg);
  }
  const int rows = static_cast<int>(image.height);
  const int cols = static_cast<int>(image.width);
  png_image_free(&image);

  SemanticGrid grid(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t at = (static_cast<std::size_t>(r) * cols + c) * 3;
      const Rgb px{rgb[at], rgb[at + 1], rgb[at + 2]};
      std::size_t k = 0;
      while (k < kPalette.size() && !(kPalette[k] == px)) ++k;
      if (k == kPalette.size()) {
        throw ParseError("off-palette color (" + std::to_string(px.r) + "," +
                         std::to_string(px.g) + "," + std::to_string(px.b) + ") at x=" +
                         std::to_string(c) + ", y=" + std::to_string(r));
      }
      grid.at(r, c) = static_cast<SemanticClass>(k);
    }
  }
  return grid;
}

std::vector<std::uint8_t> encode_raw(const SemanticGrid& grid) {
  std::vector<std::uint8_t> out;
  out.reserve(kRawHeaderBytes + grid.size());
  put_u32(out, static_cast<std::uint32_t>(grid.rows()));
  put_u32(out, static_cast<std::uint32_t>(grid.cols()));
  for (SemanticClass c : grid.labels()) out.push_back(static_cast<std::uint8_t>(c));
  return out;
}

SemanticGrid decode_raw(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kRawHeaderBytes) {
    throw ParseError("raw grid shorter than its 8-byte header (" + std::to_string(bytes.size()) +
                     " bytes)");
  }
  const std::uint32_t rows = get_u32(bytes, 0);
  const std::uint32_t cols = get_u32(bytes, 4);
  if (rows > kMaxGridSide || cols > kMaxGridSide) {
    throw ParseError("raw grid dimensions " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " out of range");
  }
  const std::size_t cells = static_cast<std::size_t>(rows) * cols;
  if (bytes.size() - kRawHeaderBytes != cells) {
    throw ParseError("raw grid size mismatch: header says " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " = " + std::to_string(cells) + " cells, payload has " +
                     std::to_string(bytes.size() - kRawHeaderBytes) + " bytes");
  }
  SemanticGrid grid(static_cast<int>(rows), static_cast<int>(cols));
  auto labels = grid.labels();
  for (std::size_t i = 0; i < cells; ++i) {
    const auto cls = class_from_byte(bytes[kRawHeaderBytes + i]);
    if (!cls) {
      throw ParseError("invalid class byte " + std::to_string(bytes[kRawHeaderBytes + i]) +
                       " at x=" + std::to_string(i % cols) + ", y=" + std::to_string(i / cols));
    }
    labels[i] = *cls;
  }
  return grid;
}

}  // namespace

std::vector<std::uint8_t> encode_grid(const SemanticGrid& grid, GridFormat format) {
  return format == GridFormat::kPng ? encode_png(grid) : encode_raw(grid);
}

SemanticGrid decode_grid(std::span<const std::uint8_t> bytes, GridFormat format) {
  return format == GridFormat::kPng ? decode_png(bytes) : decode_raw(bytes);
}

void export_grid(const SemanticGrid& grid, GridFormat format, const fs::path& path) {
  write_file_atomic(path, encode_grid(grid, format));
}

SemanticGrid import_grid(const fs::path& path, GridFormat format) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_grid(bytes, format);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.line(), e.column());
  }
}

// ---------------------------------------------------------------------------
// Targets

nlohmann::json targets_to_json(const AttributeTargets& targets, std::string_view frame_id) {
  nlohmann::json binary = nlohmann::json::object();
  nlohmann::json multiclass = nlohmann::json::object();
  nlohmann::json regression = nlohmann::json::object();
  nlohmann::json active = nlohmann::json::object();
  for (auto a : all_binary()) {
    binary[std::string(name_of(a))] = targets.binary[static_cast<std::size_t>(a)];
    active[std::string(name_of(a))] = targets.mask[a];
  }
  for (auto a : all_multiclass()) {
    multiclass[std::string(name_of(a))] = targets.multiclass[static_cast<std::size_t>(a)];
    active[std::string(name_of(a))] = targets.mask[a];
  }
  for (auto a : all_continuous()) {
    const auto& d = targets.regression[static_cast<std::size_t>(a)];
    regression[std::string(name_of(a))] = {{"lo", d.lo}, {"hi", d.hi}, {"probs", d.probs}};
    active[std::string(name_of(a))] = targets.mask[a];
  }
  return {{"frame_id", frame_id},  {"binary", std::move(binary)},
          {"multiclass", std::move(multiclass)}, {"regression", std::move(regression)},
          {"active", std::move(active)}};
}

// ---------------------------------------------------------------------------
// Files

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw DataError("error reading " + path.string());
  return bytes;
}

std::string read_file_text(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  static std::atomic<unsigned> counter{0};
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw DataError("error writing " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw DataError("cannot replace " + path.string() + ": " + ec.message());
  }
}

void write_file_atomic(const fs::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace roadlayout

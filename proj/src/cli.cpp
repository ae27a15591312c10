#include "roadlayout/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "httplib.h"
#include "roadlayout/annotation_service.hpp"
#include "roadlayout/bev_renderer.hpp"
#include "roadlayout/camera_geometry.hpp"
#include "roadlayout/dataset_io.hpp"
#include "roadlayout/metrics.hpp"
#include "roadlayout/scene_model.hpp"
#include "roadlayout/supervision.hpp"

namespace roadlayout {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void setup_logging() {
  auto logger = spdlog::get("roadlayout");
  if (!logger) logger = spdlog::stderr_color_mt("roadlayout");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("ROADLAYOUT_LOG_LEVEL")) {
    spdlog::set_level(spdlog::level::from_str(env));
  }
}

// Counts for the end-of-run summary. Any skipped record turns the exit code
// into a data error.
struct BatchSummary {
  std::size_t written = 0;
  std::size_t unannotated = 0;
  std::size_t skipped = 0;

  void report(std::string_view command) const {
    spdlog::info("{}: {} written, {} unannotated, {} skipped", command, written, unannotated,
                 skipped);
  }
  int exit_code() const { return skipped > 0 ? kExitDataError : kExitOk; }
};

// Reads a JSONL manifest line by line so one broken line does not sink the
// whole batch.
std::vector<FrameRecord> load_records(const fs::path& path, BatchSummary& summary) {
  const std::string text = read_file_text(path);
  std::vector<FrameRecord> records;
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = std::string_view(text).substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      FrameRecord r = record_from_json(nlohmann::json::parse(line));
      if (auto [it, fresh] = seen.emplace(r.frame_id, line_no); !fresh) {
        throw ParseError("duplicate frame_id '" + r.frame_id + "' (first on line " +
                         std::to_string(it->second) + ")");
      }
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      spdlog::error("{}:{}: malformed record: {}", path.string(), line_no, e.what());
      ++summary.skipped;
    } catch (const DataError& e) {
      spdlog::error("{}:{}: {}", path.string(), line_no, e.what());
      ++summary.skipped;
    }
  }
  return records;
}

bool is_safe_file_stem(std::string_view s) {
  if (s.empty() || s == "." || s == "..") return false;
  return std::none_of(s.begin(), s.end(),
                      [](char c) { return c == '/' || c == '\\' || c == '\0'; });
}

fs::path output_path(const fs::path& dir, const FrameRecord& r, GridFormat format) {
  if (!is_safe_file_stem(r.frame_id)) {
    throw DataError("frame_id '" + r.frame_id + "' cannot be used as a file name");
  }
  return dir / (r.frame_id + std::string(extension_of(format)));
}

// A calibration argument is either one KITTI file or a directory of
// <calib_id>.txt files.
class CameraSource {
 public:
  CameraSource(fs::path calib, CalibOptions options)
      : calib_(std::move(calib)), options_(options) {
    if (!fs::exists(calib_)) throw DataError("calibration path " + calib_.string() + " does not exist");
  }

  const CameraModel& camera(const std::string& calib_id) {
    const bool per_id = fs::is_directory(calib_);
    const std::string key = per_id ? calib_id : std::string();
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    fs::path file = calib_;
    if (per_id) {
      if (!is_safe_file_stem(calib_id)) {
        throw DataError("record needs a calib_id to pick a file from " + calib_.string());
      }
      file = calib_ / (calib_id + ".txt");
    }
    return cache_.emplace(key, load_kitti_calib(file, options_)).first->second;
  }

 private:
  fs::path calib_;
  CalibOptions options_;
  std::map<std::string, CameraModel> cache_;
};

GridFormat format_of_path(const fs::path& p) {
  const auto f = grid_format_from_string(p.extension().string());
  if (!f) throw DataError(p.string() + ": unknown grid format (expected .png or .raw)");
  return *f;
}

// Runs fn on every annotated record, isolating failures.
template <typename Fn>
void for_each_annotated(const std::vector<FrameRecord>& records, std::string_view source,
                        BatchSummary& summary, Fn&& fn) {
  for (const auto& r : records) {
    if (!r.attributes) {
      ++summary.unannotated;
      continue;
    }
    try {
      fn(r);
      ++summary.written;
    } catch (const DataError& e) {
      spdlog::error("{}: frame '{}': {}", source, r.frame_id, e.what());
      ++summary.skipped;
    }
  }
}

void add_camera_flags(CLI::App* cmd, CalibOptions& calib) {
  cmd->add_option("--height", calib.height, "Camera height above the ground plane (m)")
      ->capture_default_str();
  cmd->add_option("--pitch", calib.pitch, "Camera pitch toward the ground (rad)")
      ->capture_default_str();
}

void add_image_size_flags(CLI::App* cmd, CalibOptions& calib) {
  cmd->add_option("--image-width", calib.image_width, "Image width in pixels")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--image-height", calib.image_height, "Image height in pixels")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

struct Options {
  std::uint64_t seed = 0;
  std::size_t count = 0;
  std::string calib_id;
  fs::path out;
  fs::path annotations;
  fs::path out_dir;
  std::string format = "png";
  fs::path calib;
  fs::path input;
  CalibOptions camera;
  double sigma_bins = kDefaultSigmaBins;
  fs::path pred;
  fs::path gt;
  fs::path objects;
  fs::path report;
  fs::path manifest;
  fs::path images;
  std::string host = "127.0.0.1";
  int port = 8080;
};

int cmd_sample(const Options& o) {
  std::vector<FrameRecord> records;
  records.reserve(o.count);
  for (std::size_t i = 0; i < o.count; ++i) {
    FrameRecord r;
    r.frame_id = fmt::format("{:06d}", i);
    r.calib_id = o.calib_id;
    r.attributes = sample(record_seed(o.seed, i));
    records.push_back(std::move(r));
  }
  save_manifest(records, o.out);
  spdlog::info("sample: wrote {} records to {}", records.size(), o.out.string());
  return kExitOk;
}

int cmd_render(const Options& o) {
  BatchSummary summary;
  const auto records = load_records(o.annotations, summary);
  const GridFormat format = *grid_format_from_string(o.format);
  fs::create_directories(o.out_dir);
  const GridSpec spec;
  for_each_annotated(records, o.annotations.string(), summary, [&](const FrameRecord& r) {
    export_grid(render(*r.attributes, spec), format, output_path(o.out_dir, r, format));
  });
  summary.report("render");
  return summary.exit_code();
}

int cmd_project(const Options& o) {
  BatchSummary summary;
  const auto records = load_records(o.annotations, summary);
  const GridFormat format = *grid_format_from_string(o.format);
  CameraSource cameras(o.calib, o.camera);
  fs::create_directories(o.out_dir);
  const GridSpec spec;
  for_each_annotated(records, o.annotations.string(), summary, [&](const FrameRecord& r) {
    const CameraModel& cam = cameras.camera(r.calib_id);
    const SemanticGrid persp = bev_to_perspective(render(*r.attributes, spec), spec, cam);
    export_grid(persp, format, output_path(o.out_dir, r, format));
  });
  summary.report("project");
  return summary.exit_code();
}

int cmd_ipm(const Options& o, bool width_given, bool height_given) {
  const SemanticGrid persp = import_grid(o.input, format_of_path(o.input));
  CalibOptions options = o.camera;
  if (!width_given) options.image_width = persp.cols();
  if (!height_given) options.image_height = persp.rows();
  const CameraModel cam = load_kitti_calib(o.calib, options);
  const SemanticGrid bev = perspective_to_bev(persp, cam, GridSpec{});
  export_grid(bev, format_of_path(o.out), o.out);
  spdlog::info("ipm: wrote {}", o.out.string());
  return kExitOk;
}

int cmd_targets(const Options& o) {
  BatchSummary summary;
  const auto records = load_records(o.annotations, summary);
  std::string out;
  for_each_annotated(records, o.annotations.string(), summary, [&](const FrameRecord& r) {
    out += targets_to_json(encode_targets(*r.attributes, o.sigma_bins), r.frame_id).dump();
    out += '\n';
  });
  write_file_atomic(o.out, out);
  summary.report("targets");
  return summary.exit_code();
}

int cmd_evaluate(const Options& o) {
  BatchSummary summary;
  const auto gts = load_records(o.gt, summary);
  const auto preds = load_records(o.pred, summary);
  std::map<std::string_view, const FrameRecord*> pred_by_id;
  for (const auto& p : preds) pred_by_id.emplace(p.frame_id, &p);

  std::optional<std::map<std::string, int>> object_counts;
  if (!o.objects.empty()) {
    object_counts.emplace();
    for (const auto& r : load_records(o.objects, summary)) {
      if (r.object_count) object_counts->emplace(r.frame_id, *r.object_count);
    }
  }

  const GridSpec spec;
  std::vector<SceneAttributes> pred_attrs, gt_attrs;
  std::vector<AttributeMask> masks;
  ConfusionMatrix confusion;
  std::vector<double> image_ious;
  std::vector<int> image_objects;

  for_each_annotated(gts, o.gt.string(), summary, [&](const FrameRecord& g) {
    auto it = pred_by_id.find(g.frame_id);
    if (it == pred_by_id.end()) throw DataError("no prediction for this frame in " + o.pred.string());
    const FrameRecord& p = *it->second;
    if (!p.attributes) throw DataError("prediction in " + o.pred.string() + " has no attributes");
    const SemanticGrid gt_grid = render(*g.attributes, spec);
    const SemanticGrid pred_grid = render(*p.attributes, spec);
    ConfusionMatrix frame_cm;
    frame_cm.add(pred_grid, gt_grid);

    confusion.merge(frame_cm);
    pred_attrs.push_back(*p.attributes);
    gt_attrs.push_back(*g.attributes);
    masks.push_back(active_mask(*g.attributes));
    if (object_counts) {
      auto count = object_counts->find(g.frame_id);
      const auto iou = per_image_iou(pred_grid, gt_grid);
      if (count == object_counts->end()) {
        spdlog::warn("frame '{}': no object count, left out of the occlusion table", g.frame_id);
      } else if (iou) {
        image_ious.push_back(*iou);
        image_objects.push_back(count->second);
      }
    }
  });

  if (gt_attrs.empty()) {
    spdlog::error("evaluate: no frame could be evaluated");
    return kExitDataError;
  }
  EvalReport report;
  report.frames = gt_attrs.size();
  report.attributes = attribute_metrics(pred_attrs, gt_attrs, masks);
  report.per_class = segmentation_scores(confusion);
  if (object_counts) report.occlusion = occlusion_binned_iou(image_ious, image_objects);
  write_file_atomic(o.report, report_to_json(report).dump(2) + "\n");
  summary.report("evaluate");
  return summary.exit_code();
}

int cmd_serve(const Options& o) {
  ServiceConfig config;
  config.manifest_path = o.manifest;
  config.images_dir = o.images;
  if (!o.calib.empty()) config.calib_dir = o.calib;
  config.calib_options = o.camera;
  AnnotationService service(config);
  httplib::Server server;
  service.mount(server);
  spdlog::info("serving {} on http://{}:{}", o.manifest.string(), o.host, o.port);
  if (!server.listen(o.host, o.port)) {
    spdlog::error("could not listen on {}:{}", o.host, o.port);
    return kExitDataError;
  }
  return kExitOk;
}

}  // namespace

std::uint64_t record_seed(std::uint64_t seed, std::size_t index) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
}

int run(int argc, const char* const argv[]) {
  setup_logging();
  Options o;

  CLI::App app{"Parametric road-layout labels: sampling, rendering, projection, evaluation",
               "roadlayout"};
  app.require_subcommand(1);
  app.fallthrough(false);

  auto* sample_cmd = app.add_subcommand("sample", "Sample random scene annotations (JSONL)");
  sample_cmd->add_option("--seed", o.seed, "Random seed")->required();
  sample_cmd->add_option("--count", o.count, "Number of records")->required();
  sample_cmd->add_option("--out", o.out, "Output manifest")->required();
  sample_cmd->add_option("--calib-id", o.calib_id, "calib_id stored in every record");

  const std::vector<std::string> formats = {"png", "raw"};

  auto* render_cmd = app.add_subcommand("render", "Render top-view label grids");
  render_cmd->add_option("--annotations", o.annotations, "Input manifest")
      ->required()
      ->check(CLI::ExistingFile);
  render_cmd->add_option("--out-dir", o.out_dir, "Output directory")->required();
  render_cmd->add_option("--format", o.format, "Grid format")
      ->capture_default_str()
      ->check(CLI::IsMember(formats));

  auto* project_cmd = app.add_subcommand("project", "Render and project labels to perspective view");
  project_cmd->add_option("--annotations", o.annotations, "Input manifest")
      ->required()
      ->check(CLI::ExistingFile);
  project_cmd->add_option("--calib", o.calib, "KITTI calibration file or directory of <calib_id>.txt")
      ->required()
      ->check(CLI::ExistingPath);
  project_cmd->add_option("--out-dir", o.out_dir, "Output directory")->required();
  project_cmd->add_option("--format", o.format, "Grid format")
      ->capture_default_str()
      ->check(CLI::IsMember(formats));
  add_camera_flags(project_cmd, o.camera);
  add_image_size_flags(project_cmd, o.camera);

  auto* ipm_cmd = app.add_subcommand("ipm", "Map a perspective label image to top view");
  ipm_cmd->add_option("--input", o.input, "Perspective grid (.png or .raw)")
      ->required()
      ->check(CLI::ExistingFile);
  ipm_cmd->add_option("--calib", o.calib, "KITTI calibration file")
      ->required()
      ->check(CLI::ExistingFile);
  ipm_cmd->add_option("--out", o.out, "Output grid (.png or .raw)")->required();
  add_camera_flags(ipm_cmd, o.camera);
  auto* ipm_width = ipm_cmd->add_option("--image-width", o.camera.image_width,
                                        "Image width (default: input width)")
                        ->check(CLI::PositiveNumber);
  auto* ipm_height = ipm_cmd->add_option("--image-height", o.camera.image_height,
                                         "Image height (default: input height)")
                         ->check(CLI::PositiveNumber);

  auto* targets_cmd = app.add_subcommand("targets", "Write supervision targets (JSONL)");
  targets_cmd->add_option("--annotations", o.annotations, "Input manifest")
      ->required()
      ->check(CLI::ExistingFile);
  targets_cmd->add_option("--out", o.out, "Output JSONL")->required();
  targets_cmd->add_option("--sigma-bins", o.sigma_bins, "Soft-bin kernel width in bins")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score predicted against ground-truth annotations");
  evaluate_cmd->add_option("--pred", o.pred, "Predicted manifest")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--gt", o.gt, "Ground-truth manifest")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--objects", o.objects, "JSONL of {frame_id, object_count}")
      ->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--report", o.report, "Output report (JSON)")->required();

  auto* serve_cmd = app.add_subcommand("serve", "Run the annotation HTTP service");
  serve_cmd->add_option("--manifest", o.manifest, "Manifest to annotate")->required();
  serve_cmd->add_option("--images", o.images, "Image directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--port", o.port, "TCP port")->capture_default_str()->check(
      CLI::Range(0, 65535));
  serve_cmd->add_option("--host", o.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--calib", o.calib, "Directory of <calib_id>.txt calibration files")
      ->check(CLI::ExistingDirectory);
  add_camera_flags(serve_cmd, o.camera);
  add_image_size_flags(serve_cmd, o.camera);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return kExitOk;
    if (e.get_name() != "CallForHelp" && e.get_name() != "CallForAllHelp") {
      std::fputs(app.help().c_str(), stderr);
    }
    return kExitUsage;
  }

  try {
    if (*sample_cmd) return cmd_sample(o);
    if (*render_cmd) return cmd_render(o);
    if (*project_cmd) return cmd_project(o);
    if (*ipm_cmd) return cmd_ipm(o, ipm_width->count() > 0, ipm_height->count() > 0);
    if (*targets_cmd) return cmd_targets(o);
    if (*evaluate_cmd) return cmd_evaluate(o);
    if (*serve_cmd) return cmd_serve(o);
  } catch (const DataError& e) {
    spdlog::error("{}", e.what());
    return kExitDataError;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kExitDataError;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace roadlayout

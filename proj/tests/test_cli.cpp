#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "roadlayout/bev_renderer.hpp"
#include "roadlayout/camera_geometry.hpp"
#include "roadlayout/cli.hpp"
#include "roadlayout/dataset_io.hpp"
#include "test_support.hpp"

using namespace roadlayout;
using roadlayout::testing::fixture;
using roadlayout::testing::TempDir;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "roadlayout");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  argv.push_back(nullptr);
  return run(static_cast<int>(args.size()), argv.data());
}

// Runs the installed binary so exit codes are observed through the process
// boundary.
int binary(const std::string& args) {
  const std::string cmd = std::string(ROADLAYOUT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

nlohmann::json read_json(const fs::path& path) { return nlohmann::json::parse(read_file_text(path)); }

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  out << line << '\n';
}

}  // namespace

TEST_CASE("sample is deterministic") {
  TempDir dir;
  REQUIRE(cli({"sample", "--seed", "7", "--count", "15", "--out", (dir / "a.jsonl").string()}) == kExitOk);
  REQUIRE(cli({"sample", "--seed", "7", "--count", "15", "--out", (dir / "b.jsonl").string()}) == kExitOk);
  REQUIRE(cli({"sample", "--seed", "8", "--count", "15", "--out", (dir / "c.jsonl").string()}) == kExitOk);
  CHECK(read_file_text(dir / "a.jsonl") == read_file_text(dir / "b.jsonl"));
  CHECK(read_file_text(dir / "a.jsonl") != read_file_text(dir / "c.jsonl"));

  const auto records = load_manifest(dir / "a.jsonl");
  REQUIRE(records.size() == 15);
  CHECK(records[0].frame_id == "000000");
  CHECK(records[14].frame_id == "000014");
  for (std::size_t i = 0; i < records.size(); ++i) {
    REQUIRE(records[i].attributes);
    CHECK(validate(*records[i].attributes).ok());
    CHECK(*records[i].attributes == sample(record_seed(7, i)));
  }
  CHECK(record_seed(7, 0) != record_seed(7, 1));
  CHECK(record_seed(7, 0) != record_seed(8, 0));
}

TEST_CASE("render writes one grid per annotated frame") {
  TempDir dir;
  const auto manifest = dir / "m.jsonl";
  REQUIRE(cli({"sample", "--seed", "1", "--count", "4", "--out", manifest.string()}) == kExitOk);
  append_line(manifest, R"({"frame_id":"blank","image_path":"x.png","calib_id":"c"})");

  for (std::string fmt : {"png", "raw"}) {
    const auto out = dir / fmt;
    CHECK(cli({"render", "--annotations", manifest.string(), "--out-dir", out.string(), "--format", fmt}) ==
          kExitOk);
    const auto records = load_manifest(manifest);
    for (const auto& r : records) {
      const auto path = out / (r.frame_id + "." + fmt);
      if (!r.attributes) {
        CHECK_FALSE(fs::exists(path));
        continue;
      }
      const auto grid = import_grid(path, *grid_format_from_string(fmt));
      const auto expected = render(*r.attributes);
      CHECK(std::ranges::equal(grid.labels(), expected.labels()));
    }
  }
}

TEST_CASE("a malformed record is skipped with a data-error exit") {
  TempDir dir;
  const auto manifest = dir / "m.jsonl";
  REQUIRE(cli({"sample", "--seed", "2", "--count", "3", "--out", manifest.string()}) == kExitOk);
  append_line(manifest, R"({"frame_id":"bad","attributes":{"lane_width":"wide"}})");
  append_line(manifest, "not json");
  const auto out = dir / "out";
  CHECK(cli({"render", "--annotations", manifest.string(), "--out-dir", out.string()}) == kExitDataError);
  // The good records are still written.
  CHECK(fs::exists(out / "000000.png"));
  CHECK(fs::exists(out / "000002.png"));
  CHECK_FALSE(fs::exists(out / "bad.png"));
}

TEST_CASE("missing input paths are rejected as usage errors") {
  TempDir dir;
  CHECK(cli({"render", "--annotations", (dir / "absent.jsonl").string(), "--out-dir",
             (dir / "o").string()}) == kExitUsage);
  CHECK(cli({"ipm", "--input", (dir / "absent.png").string(), "--calib",
             fixture("kitti_calib.txt").string(), "--out", (dir / "x.png").string()}) == kExitUsage);
}

TEST_CASE("unreadable inputs exit with a data error") {
  TempDir dir;
  std::ofstream(dir / "garbage.png") << "not a png";
  CHECK(cli({"ipm", "--input", (dir / "garbage.png").string(), "--calib",
             fixture("kitti_calib.txt").string(), "--out", (dir / "x.png").string()}) == kExitDataError);
  std::ofstream(dir / "bad_calib.txt") << "P2: 1 2 3\n";
  const auto grid = encode_grid(SemanticGrid(4, 4), GridFormat::kPng);
  write_file_atomic(dir / "ok.png", grid);
  CHECK(cli({"ipm", "--input", (dir / "ok.png").string(), "--calib", (dir / "bad_calib.txt").string(),
             "--out", (dir / "x.png").string()}) == kExitDataError);
}

TEST_CASE("usage errors and help") {
  for (const std::string sub : {"", "sample", "render", "project", "ipm", "targets", "evaluate", "serve"}) {
    CAPTURE(sub);
    CHECK(binary(sub + " --help") == kExitOk);
  }
  CHECK(binary("") == kExitUsage);
  CHECK(binary("frobnicate") == kExitUsage);
  CHECK(binary("sample --seed 1 --count 2 --out /tmp/x --bogus") == kExitUsage);
  CHECK(binary("sample --count 2 --out /tmp/x") == kExitUsage);
  CHECK(binary("render --annotations /nonexistent --out-dir /tmp/x --format tiff") == kExitUsage);
}

TEST_CASE("evaluate against itself is perfect") {
  TempDir dir;
  const auto manifest = dir / "m.jsonl";
  REQUIRE(cli({"sample", "--seed", "3", "--count", "12", "--out", manifest.string()}) == kExitOk);
  const auto report = dir / "report.json";
  REQUIRE(cli({"evaluate", "--pred", manifest.string(), "--gt", manifest.string(), "--report",
               report.string()}) == kExitOk);
  const auto j = read_json(report);
  CHECK(j["frames"] == 12);
  CHECK(j["accu_bi"] == 1.0);
  CHECK(j["accu_mc"] == 1.0);
  CHECK(j["mse"] == 0.0);
  REQUIRE(j["per_class"].contains("road"));
  for (const auto& [name, score] : j["per_class"].items()) CHECK(score["iou"] == 1.0);
  CHECK_FALSE(j.contains("occlusion_table"));
}

TEST_CASE("evaluate with object counts adds the occlusion table") {
  TempDir dir;
  const auto gt = dir / "gt.jsonl";
  const auto pred = dir / "pred.jsonl";
  REQUIRE(cli({"sample", "--seed", "4", "--count", "10", "--out", gt.string()}) == kExitOk);
  REQUIRE(cli({"sample", "--seed", "5", "--count", "10", "--out", pred.string()}) == kExitOk);
  std::vector<FrameRecord> objects;
  for (int i = 0; i < 10; ++i) {
    FrameRecord r;
    r.frame_id = std::string(5, '0') + std::to_string(i);
    r.object_count = i;
    objects.push_back(r);
  }
  save_manifest(objects, dir / "objects.jsonl");
  const auto report = dir / "report.json";
  REQUIRE(cli({"evaluate", "--pred", pred.string(), "--gt", gt.string(), "--objects",
               (dir / "objects.jsonl").string(), "--report", report.string()}) == kExitOk);
  const auto j = read_json(report);
  REQUIRE(j.contains("occlusion_table"));
  const auto& bins = j["occlusion_table"]["bins"];
  CHECK(bins.size() == 9);
  CHECK(bins["8"]["images"] == 2);
  CHECK(j["occlusion_table"].contains("average"));
  CHECK(j["accu_bi"].get<double>() < 1.0);
}

TEST_CASE("evaluate needs a prediction for every ground-truth frame") {
  TempDir dir;
  const auto gt = dir / "gt.jsonl";
  const auto pred = dir / "pred.jsonl";
  REQUIRE(cli({"sample", "--seed", "4", "--count", "5", "--out", gt.string()}) == kExitOk);
  REQUIRE(cli({"sample", "--seed", "4", "--count", "3", "--out", pred.string()}) == kExitOk);
  const auto report = dir / "report.json";
  CHECK(cli({"evaluate", "--pred", pred.string(), "--gt", gt.string(), "--report", report.string()}) ==
        kExitDataError);
  // The frames that do pair up are still scored.
  CHECK(read_json(report)["frames"] == 3);
}

TEST_CASE("targets") {
  TempDir dir;
  const auto manifest = dir / "m.jsonl";
  REQUIRE(cli({"sample", "--seed", "6", "--count", "5", "--out", manifest.string()}) == kExitOk);
  const auto out = dir / "targets.jsonl";
  REQUIRE(cli({"targets", "--annotations", manifest.string(), "--out", out.string(), "--sigma-bins", "2"}) ==
          kExitOk);
  const auto text = read_file_text(out);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  const auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
  const auto expected = targets_to_json(encode_targets(sample(record_seed(6, 0)), 2.0), "000000");
  CHECK(first == expected);
}

TEST_CASE("project then ipm recovers the top view") {
  TempDir dir;
  const auto manifest = dir / "m.jsonl";
  REQUIRE(cli({"sample", "--seed", "9", "--count", "10", "--out", manifest.string()}) == kExitOk);
  const auto calib = fixture("kitti_calib.txt").string();
  const auto persp_dir = dir / "persp";
  REQUIRE(cli({"project", "--annotations", manifest.string(), "--calib", calib, "--out-dir",
               persp_dir.string()}) == kExitOk);

  const auto cam = load_kitti_calib(calib, CalibOptions{});
  const GridSpec spec;
  const auto visible = visibility_mask(cam, spec);
  std::size_t same = 0, total = 0;
  for (const auto& r : load_manifest(manifest)) {
    const auto persp_path = persp_dir / (r.frame_id + ".png");
    const auto persp = import_grid(persp_path, GridFormat::kPng);
    CHECK(persp.rows() == 375);
    CHECK(persp.cols() == 1242);
    const auto bev_path = dir / (r.frame_id + "_bev.raw");
    REQUIRE(cli({"ipm", "--input", persp_path.string(), "--calib", calib, "--out", bev_path.string()}) ==
            kExitOk);
    const auto recovered = import_grid(bev_path, GridFormat::kRaw);
    const auto original = render(*r.attributes, spec);
    for (std::size_t i = 0; i < original.size(); ++i) {
      CHECK((recovered.labels()[i] == SemanticClass::kUnknown) == !visible[i]);
      const int r = static_cast<int>(i) / spec.cols, c = static_cast<int>(i) % spec.cols;
      if (!visible[i] || !roadlayout::testing::uniform_neighborhood(original, r, c)) continue;
      ++total;
      same += recovered.labels()[i] == original.labels()[i];
    }
  }
  const double agreement = static_cast<double>(same) / static_cast<double>(total);
  MESSAGE("project/ipm agreement over visible uniform cells: " << agreement);
  CHECK(agreement >= 0.995);
}

TEST_CASE("calibration directories resolve calib_id") {
  TempDir dir;
  fs::create_directories(dir / "calib");
  fs::copy_file(fixture("kitti_calib.txt"), dir / "calib" / "seq0.txt");
  const auto manifest = dir / "m.jsonl";
  REQUIRE(cli({"sample", "--seed", "1", "--count", "2", "--calib-id", "seq0", "--out", manifest.string()}) ==
          kExitOk);
  CHECK(cli({"project", "--annotations", manifest.string(), "--calib", (dir / "calib").string(), "--out-dir",
             (dir / "p").string(), "--format", "raw"}) == kExitOk);
  CHECK(fs::exists(dir / "p" / "000001.raw"));

  const auto other = dir / "other.jsonl";
  REQUIRE(cli({"sample", "--seed", "1", "--count", "2", "--calib-id", "missing", "--out", other.string()}) ==
          kExitOk);
  CHECK(cli({"project", "--annotations", other.string(), "--calib", (dir / "calib").string(), "--out-dir",
             (dir / "q").string()}) == kExitDataError);
}

// End-to-end exercises of the command-line tool; every subcommand is driven
// through the real binary.
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctfs/sonar_synth.hpp"

using namespace ctfs;
namespace fsys = std::filesystem;

namespace {

const std::string kTool = CTFS_TOOL_PATH;

int run(const std::string& args) {
  const std::string cmd = kTool + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string sandbox() {
  static std::string dir = [] {
    const auto d = fsys::temp_directory_path() / "ctfs_cli_test";
    fsys::remove_all(d);
    fsys::create_directories(d);
    return d.string();
  }();
  return dir;
}

std::string file_text(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// generate + split + train once; Catch2 re-enters the test case per section
struct CliSetup {
  std::string root = sandbox();
  std::string data = root + "/data";
  std::string cfg_path = root + "/run.cfg";
  int generate_rc, split_rc, split_again_rc, train_rc;

  CliSetup() {
    generate_rc = run("generate --out " + data + " --n 16 --seed 3 --size 32");
    split_rc = run("split --data " + data + " --ratio 0.25 --seed 1");
    split_again_rc = run("split --data " + data + " --ratio 0.25 --seed 1");
    std::ofstream cfg(cfg_path);
    cfg << "[dataset]\npath = " << data << "\nratio = 0.25\nsplit_seed = 1\n"
        << "[model]\nwidths = 4,6,8,10\n"
        << "[teachers]\nwarmup_epochs = 1\nema_decay = 0.9\n"
        << "[mvra]\ngrid_size = 8\nviews = 1\n"
        << "[trainer]\nepochs = 3\nbatch_labeled = 2\nbatch_unlabeled = 2\nseed = 5\n"
        << "run_dir = " << root << "/run\n";
    cfg.close();
    train_rc = run("train --config " + cfg_path);
  }
};

const CliSetup& setup() {
  static CliSetup s;
  return s;
}

}  // namespace

TEST_CASE("cli end-to-end workflow") {
  const std::string root = setup().root;
  const std::string data = setup().data;
  const std::string cfg_path = setup().cfg_path;

  SECTION("unknown flags exit with the config error code") {
    CHECK(run("definitely-not-a-subcommand") == 2);
    CHECK(run("train") == 2);  // missing required --config
  }

  // generate
  REQUIRE(setup().generate_rc == 0);
  CHECK(fsys::exists(data + "/meta.json"));
  CHECK(list_scene_ids(data).size() == 16);
  CHECK(fsys::exists(data + "/masks/scene_0007.png"));

  // split: created once, immutable afterwards
  REQUIRE(setup().split_rc == 0);
  CHECK(fsys::exists(split_file_path(data, 0.25, 1)));
  CHECK(setup().split_again_rc == 3);
  const DatasetSplit split = read_split_file(data, 0.25, 1);
  CHECK(split.labeled_ids.size() + split.unlabeled_ids.size() == 10);  // 60% of 16, rounded

  // train
  REQUIRE(setup().train_rc == 0);
  CHECK(fsys::exists(root + "/run/train_log.tsv"));
  CHECK(fsys::exists(root + "/run/epochs.csv"));
  CHECK(fsys::exists(root + "/run/resolved.cfg"));
  CHECK(fsys::exists(root + "/run/checkpoints/best.ckpt"));

  SECTION("training failures map to the advertised exit codes") {
    CHECK(run("train --config " + root + "/missing.cfg") == 2);
    CHECK(run("train --config " + cfg_path + " bogus_key=1") == 2);
    CHECK(run("train --config " + cfg_path + " dataset.path=/nonexistent run_dir=" + root +
              "/bad_run") == 3);
  }

  SECTION("eval reports mIoU and writes the CSV") {
    REQUIRE(run("eval --checkpoint " + root + "/run/checkpoints/best.ckpt --data " + data +
                " --split-seed 1 --section val --out " + root + "/eval.csv --per-image") == 0);
    const std::string text = file_text(root + "/eval.csv");
    CHECK(text.find("miou") != std::string::npos);
    CHECK(text.find("image,miou") != std::string::npos);
  }

  SECTION("augment-preview writes before/after pairs and the shadow mask") {
    REQUIRE(run("augment-preview --data " + data + " --id scene_0002 --out " + root +
                "/preview --seed 4") == 0);
    for (const char* suffix :
         {"original", "general_weak", "shadow", "shadow_mask", "attenuation", "strong"})
      CHECK(fsys::exists(root + "/preview/scene_0002_" + std::string(suffix) + ".png"));
  }

  SECTION("reliability-dump writes heatmaps plus the text matrix") {
    REQUIRE(run("reliability-dump --checkpoint " + root +
                "/run/checkpoints/best.ckpt --data " + data + " --id scene_0001 --out " + root +
                "/rel --grid-size 8 --views 1") == 0);
    CHECK(fsys::exists(root + "/rel/scene_0001_grid_scores.png"));
    CHECK(fsys::exists(root + "/rel/scene_0001_pixel_scores.png"));
    const std::string matrix = file_text(root + "/rel/scene_0001_grid_scores.txt");
    int rows = 0;
    for (char c : matrix)
      if (c == '\n') ++rows;
    CHECK(rows == 4);  // 32px / 8px grid
  }

  SECTION("compare tabulates baseline and ctfs on the same split") {
    REQUIRE(run("compare --config " + cfg_path + " run_dir=" + root + "/cmp epochs=2") == 0);
    const std::string table = file_text(root + "/cmp/compare/table.csv");
    CHECK(table.find("supervised_only,") != std::string::npos);
    CHECK(table.find("ctfs,") != std::string::npos);
    CHECK(fsys::exists(root + "/cmp/compare/curves.csv"));

    // the tabulated ctfs test mIoU must match the run's own eval report
    std::istringstream lines(table);
    std::string line, ctfs_test;
    while (std::getline(lines, line))
      if (line.rfind("ctfs,", 0) == 0) ctfs_test = line.substr(line.rfind(',') + 1);
    REQUIRE_FALSE(ctfs_test.empty());
    const std::string report = file_text(root + "/cmp/ctfs/eval_report.csv");
    std::istringstream rlines(report);
    std::string rline, report_miou;
    while (std::getline(rlines, rline))
      if (rline.rfind("miou,", 0) == 0) report_miou = rline.substr(rline.rfind(',') + 1);
    CHECK(ctfs_test == report_miou);
  }
}

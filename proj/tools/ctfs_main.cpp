// Command-line entry point: dataset generation, splits, training, evaluation,
// augmentation previews, reliability dumps and baseline comparisons.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "ctfs/checkpoint.hpp"
#include "ctfs/config.hpp"
#include "ctfs/mvra.hpp"
#include "ctfs/png_io.hpp"
#include "ctfs/sonar_synth.hpp"
#include "ctfs/trainer.hpp"

namespace {

using namespace ctfs;

std::vector<std::string> default_class_names(int num_classes) {
  std::vector<std::string> names = {"background", "ellipse", "bar", "ring"};
  while (static_cast<int>(names.size()) < num_classes)
    names.push_back("class_" + std::to_string(names.size()));
  names.resize(num_classes);
  return names;
}

std::string scene_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%04d", index);
  return buf;
}

int cmd_generate(const std::string& out_dir, int count, uint64_t seed, int size,
                 int num_classes, int min_targets, int max_targets) {
  SceneSpec spec;
  spec.rows = size;
  spec.cols = size;
  spec.num_classes = num_classes;
  DatasetMeta meta{num_classes, default_class_names(num_classes)};
  save_meta(out_dir, meta);
  Rng rng(hash_mix(seed, 0x9e4ULL));
  for (int i = 0; i < count; ++i) {
    spec.target_count = rng.uniform_int(min_targets, max_targets);
    const SonarScene scene = generate_scene(hash_mix(seed, 0x5cULL, i), spec);
    save_scene(out_dir, scene_id(i), scene);
  }
  std::cout << "wrote " << count << " scenes (" << size << "x" << size << ", " << num_classes
            << " classes) to " << out_dir << "\n";
  return 0;
}

int cmd_split(const std::string& data_dir, double ratio, uint64_t seed) {
  const auto ids = list_scene_ids(data_dir);
  HoldoutSplit holdout;
  if (fs::exists(holdout_file_path(data_dir, seed))) {
    holdout = read_holdout_file(data_dir, seed);
  } else {
    holdout = build_holdout(ids, seed);
    write_holdout_file(data_dir, seed, holdout);
  }
  const DatasetSplit split = build_splits(holdout.train_ids, ratio, seed);
  write_split_file(data_dir, ratio, seed, split);
  std::cout << "split " << format_ratio(ratio) << "_" << seed << ": " << split.labeled_ids.size()
            << " labeled / " << split.unlabeled_ids.size() << " unlabeled (train "
            << holdout.train_ids.size() << ", val " << holdout.val_ids.size() << ", test "
            << holdout.test_ids.size() << ")\n";
  return 0;
}

void write_eval_report(const std::string& path, const IouReport& rep, const DatasetMeta& meta,
                       const std::vector<std::pair<std::string, double>>* per_image) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  out << "class,name,iou\n";
  for (int c = 0; c < meta.num_classes; ++c) {
    out << c << ',' << (c < static_cast<int>(meta.class_names.size()) ? meta.class_names[c] : "")
        << ',';
    if (rep.present[c]) out << detail::format_double(rep.per_class[c]);
    else out << "absent";
    out << "\n";
  }
  out << "miou,," << detail::format_double(rep.miou) << "\n";
  if (per_image) {
    out << "\nimage,miou\n";
    for (const auto& [id, v] : *per_image) out << id << ',' << detail::format_double(v) << "\n";
  }
}

IouReport evaluate_checkpoint(const Checkpoint& ck, const std::string& data_dir,
                              const std::vector<std::string>& ids, bool include_background,
                              const DatasetMeta& meta,
                              std::vector<std::pair<std::string, double>>* per_image) {
  const SegNet net(ck.net);
  const auto weights = SegNet::cast_params<float>(ck.student);
  ConfusionMatrix cm(meta.num_classes);
  for (const auto& id : ids) {
    const SonarScene scene = load_scene(data_dir, id, meta.num_classes, true);
    const MaskImage pred = make_pseudo_label(net.predict_cast(weights, scene.intensity));
    if (per_image) {
      ConfusionMatrix single(meta.num_classes);
      single.accumulate(scene.mask, pred);
      per_image->emplace_back(id, miou(single, include_background).miou);
    }
    cm.accumulate(scene.mask, pred);
  }
  return miou(cm, include_background);
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, uint64_t split_seed,
             const std::string& section, const std::string& out_csv, bool exclude_background,
             bool per_image_dump) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  const DatasetMeta meta = load_meta(data_dir);
  if (meta.num_classes != ck.net.num_classes)
    throw DataError("checkpoint class count does not match dataset metadata");
  const HoldoutSplit holdout = read_holdout_file(data_dir, split_seed);
  const std::vector<std::string>& ids = section == "val"    ? holdout.val_ids
                                        : section == "test" ? holdout.test_ids
                                                            : holdout.train_ids;
  if (ids.empty()) throw DataError("eval: empty id list for section " + section);
  std::vector<std::pair<std::string, double>> per_image;
  const IouReport rep = evaluate_checkpoint(ck, data_dir, ids, !exclude_background, meta,
                                            per_image_dump ? &per_image : nullptr);
  if (!out_csv.empty())
    write_eval_report(out_csv, rep, meta, per_image_dump ? &per_image : nullptr);
  std::cout << "mIoU(" << section << ") = " << detail::format_double(rep.miou) << "\n";
  return 0;
}

Grid<uint8_t> to_gray8(const Intensity& img) {
  Grid<uint8_t> out(img.rows(), img.cols());
  for (size_t i = 0; i < img.size(); ++i)
    out.data()[i] = static_cast<uint8_t>(std::lround(clamp01(img.data()[i]) * 255.0f));
  return out;
}

int cmd_augment_preview(const std::string& data_dir, std::string id, const std::string& out_dir,
                        uint64_t seed) {
  const DatasetMeta meta = load_meta(data_dir);
  if (id.empty()) id = list_scene_ids(data_dir).at(0);
  const SonarScene scene = load_scene(data_dir, id, meta.num_classes, false);
  const Intensity& img = scene.intensity;
  AugmentOptions aug;
  Rng rng(hash_mix(seed, 0x9147ULL));

  write_png_gray8((fs::path(out_dir) / (id + "_original.png")).string(), to_gray8(img));

  const WeakAugResult weak = apply_general_weak(img, scene.mask, seed, aug.weak);
  write_png_gray8((fs::path(out_dir) / (id + "_general_weak.png")).string(),
                  to_gray8(weak.image));

  const ShadowParams sp = sample_shadow_params(img.rows(), img.cols(), rng, aug.shadow);
  write_png_gray8((fs::path(out_dir) / (id + "_shadow.png")).string(),
                  to_gray8(apply_shadow(img, sp)));
  const BoolMask region = shadow_region(sp, img.rows(), img.cols());
  Grid<uint8_t> region_png(region.rows(), region.cols());
  for (size_t i = 0; i < region.size(); ++i) region_png.data()[i] = region.data()[i] ? 255 : 0;
  write_png_gray8((fs::path(out_dir) / (id + "_shadow_mask.png")).string(), region_png);

  write_png_gray8((fs::path(out_dir) / (id + "_attenuation.png")).string(),
                  to_gray8(apply_attenuation(img, sample_attenuation_params(rng, aug.atten))));
  write_png_gray8((fs::path(out_dir) / (id + "_strong.png")).string(),
                  to_gray8(apply_strong(img, seed, aug.strong)));
  std::cout << "previews for " << id << " written to " << out_dir << "\n";
  return 0;
}

int cmd_reliability_dump(const std::string& ckpt_path, const std::string& data_dir,
                         std::string id, const std::string& out_dir, int grid_size, int views,
                         double delta, uint64_t seed) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  const DatasetMeta meta = load_meta(data_dir);
  if (id.empty()) id = list_scene_ids(data_dir).at(0);
  const SonarScene scene = load_scene(data_dir, id, meta.num_classes, false);

  TeacherBank bank = ck.has_bank ? ck.bank : TeacherBank::from_student(ck.student, 0.999, 0);
  if (!ck.has_bank)
    std::cout << "note: checkpoint predates teacher rotation; using three student copies\n";

  const SegNet net(ck.net);
  MvraConfig mcfg;
  mcfg.grid_size = grid_size;
  mcfg.views = views;
  mcfg.delta = static_cast<float>(delta);
  const ReliabilityMap rel = assess(net, bank, scene.intensity, mcfg, seed);

  auto score_png = [](const Grid<float>& g) {
    Grid<uint8_t> out(g.rows(), g.cols());
    for (size_t i = 0; i < g.size(); ++i)
      out.data()[i] = static_cast<uint8_t>(std::lround(std::clamp(g.data()[i], 0.0f, 1.0f) * 255));
    return out;
  };
  fs::create_directories(out_dir);
  write_png_gray8((fs::path(out_dir) / (id + "_grid_scores.png")).string(),
                  score_png(rel.grid_scores));
  write_png_gray8((fs::path(out_dir) / (id + "_pixel_scores.png")).string(),
                  score_png(rel.pixel_scores));
  std::ofstream txt((fs::path(out_dir) / (id + "_grid_scores.txt")).string());
  for (int i = 0; i < rel.grid_scores.rows(); ++i) {
    for (int j = 0; j < rel.grid_scores.cols(); ++j)
      txt << (j ? " " : "") << detail::format_double(rel.grid_scores.at(i, j));
    txt << "\n";
  }
  std::cout << "reliability maps for " << id << " written to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              bool resume) {
  const ExperimentConfig cfg = load_config(config_path, overrides);
  const RunSummary summary = run_experiment(cfg, resume);
  std::cout << "run " << summary.run_dir << ": best val mIoU "
            << detail::format_double(summary.best_val_miou) << " at epoch "
            << summary.best_epoch << "\n";
  return 0;
}

int cmd_compare(const std::string& config_path, const std::vector<std::string>& overrides) {
  ExperimentConfig ctfs_cfg = load_config(config_path, overrides);
  ExperimentConfig base_cfg = ctfs_cfg;
  base_cfg.loss.lambda_u = 0.0f;  // supervised-only control on the same split
  const std::string root = ctfs_cfg.resolved_run_dir();
  ctfs_cfg.run_dir = root + "/ctfs";
  base_cfg.run_dir = root + "/baseline";

  const RunSummary base = run_experiment(base_cfg);
  const RunSummary full = run_experiment(ctfs_cfg);

  const DatasetMeta meta = load_meta(ctfs_cfg.dataset_path);
  const HoldoutSplit holdout = read_holdout_file(ctfs_cfg.dataset_path, ctfs_cfg.split_seed);

  auto test_eval = [&](const RunSummary& run) {
    const Checkpoint ck =
        load_checkpoint((fs::path(run.run_dir) / "checkpoints" / "best.ckpt").string());
    const IouReport rep = evaluate_checkpoint(ck, ctfs_cfg.dataset_path, holdout.test_ids,
                                              ctfs_cfg.include_background_miou, meta, nullptr);
    write_eval_report((fs::path(run.run_dir) / "eval_report.csv").string(), rep, meta, nullptr);
    return rep.miou;
  };
  const double base_test = test_eval(base);
  const double full_test = test_eval(full);

  fs::create_directories(fs::path(root) / "compare");
  {
    std::ofstream table((fs::path(root) / "compare" / "table.csv").string());
    table << "method,ratio,best_val_miou,test_miou\n";
    table << "supervised_only," << format_ratio(ctfs_cfg.ratio) << ','
          << detail::format_double(base.best_val_miou) << ',' << detail::format_double(base_test)
          << "\n";
    table << "ctfs," << format_ratio(ctfs_cfg.ratio) << ','
          << detail::format_double(full.best_val_miou) << ',' << detail::format_double(full_test)
          << "\n";
  }
  {
    std::ofstream curves((fs::path(root) / "compare" / "curves.csv").string());
    curves << "epoch,supervised_only_val_miou,ctfs_val_miou\n";
    const size_t n = std::min(base.epochs.size(), full.epochs.size());
    for (size_t e = 0; e < n; ++e)
      curves << base.epochs[e].epoch << ',' << detail::format_double(base.epochs[e].val_miou)
             << ',' << detail::format_double(full.epochs[e].val_miou) << "\n";
  }
  std::cout << "supervised_only: val " << detail::format_double(base.best_val_miou) << ", test "
            << detail::format_double(base_test) << "\n";
  std::cout << "ctfs:            val " << detail::format_double(full.best_val_miou) << ", test "
            << detail::format_double(full_test) << "\n";
  std::cout << "table: " << (fs::path(root) / "compare" / "table.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CTFS: collaborative-teacher semi-supervised sonar segmentation"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "generate a synthetic sonar dataset");
  std::string gen_out = "data";
  int gen_n = 200, gen_size = 128, gen_classes = 4, gen_min_targets = 1, gen_max_targets = 4;
  uint64_t gen_seed = 1;
  gen->add_option("--out", gen_out, "output dataset directory");
  gen->add_option("--n", gen_n, "number of scenes");
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--size", gen_size, "image edge length in pixels");
  gen->add_option("--classes", gen_classes, "class count including background");
  gen->add_option("--min-targets", gen_min_targets, "min targets per scene");
  gen->add_option("--max-targets", gen_max_targets, "max targets per scene");

  // split
  auto* split = app.add_subcommand("split", "create a labeled/unlabeled split");
  std::string split_data;
  double split_ratio = 0.05;
  uint64_t split_seed = 1;
  split->add_option("--data", split_data, "dataset directory")->required();
  split->add_option("--ratio", split_ratio, "labeled fraction of the training ids");
  split->add_option("--seed", split_seed, "split seed");

  // train
  auto* train = app.add_subcommand("train", "run one training experiment");
  std::string train_config;
  bool train_resume = false;
  std::vector<std::string> train_overrides;
  train->add_option("--config", train_config, "config file")->required();
  train->add_flag("--resume", train_resume, "resume from the run's last checkpoint");
  train->add_option("overrides", train_overrides, "key=value config overrides");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_section = "test", eval_out;
  uint64_t eval_seed = 1;
  bool eval_nobg = false, eval_per_image = false;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--split-seed", eval_seed, "holdout split seed");
  eval->add_option("--section", eval_section, "holdout section: train/val/test");
  eval->add_option("--out", eval_out, "CSV report path");
  eval->add_flag("--exclude-background", eval_nobg, "drop class 0 from the mean");
  eval->add_flag("--per-image", eval_per_image, "append a per-image IoU dump");

  // augment-preview
  auto* prev = app.add_subcommand("augment-preview", "write before/after augmentation PNGs");
  std::string prev_data, prev_id, prev_out = "preview";
  uint64_t prev_seed = 1;
  prev->add_option("--data", prev_data, "dataset directory")->required();
  prev->add_option("--id", prev_id, "scene id (default: first)");
  prev->add_option("--out", prev_out, "output directory");
  prev->add_option("--seed", prev_seed, "sampling seed");

  // reliability-dump
  auto* rel = app.add_subcommand("reliability-dump", "write reliability heatmaps for one scene");
  std::string rel_ckpt, rel_data, rel_id, rel_out = "reliability";
  int rel_grid = 32, rel_views = 2;
  double rel_delta = 0.5;
  uint64_t rel_seed = 1;
  rel->add_option("--checkpoint", rel_ckpt, "checkpoint file")->required();
  rel->add_option("--data", rel_data, "dataset directory")->required();
  rel->add_option("--id", rel_id, "scene id (default: first)");
  rel->add_option("--out", rel_out, "output directory");
  rel->add_option("--grid-size", rel_grid, "grid cell edge in pixels");
  rel->add_option("--views", rel_views, "perturbed views per teacher");
  rel->add_option("--delta", rel_delta, "consistency smoothing");
  rel->add_option("--seed", rel_seed, "view sampling seed");

  // compare
  auto* cmp = app.add_subcommand("compare",
                                 "train supervised baseline + CTFS on one split and tabulate");
  std::string cmp_config;
  std::vector<std::string> cmp_overrides;
  cmp->add_option("--config", cmp_config, "config file")->required();
  cmp->add_option("overrides", cmp_overrides, "key=value config overrides");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed())
      return cmd_generate(gen_out, gen_n, gen_seed, gen_size, gen_classes, gen_min_targets,
                          gen_max_targets);
    if (split->parsed()) return cmd_split(split_data, split_ratio, split_seed);
    if (train->parsed()) return cmd_train(train_config, train_overrides, train_resume);
    if (eval->parsed())
      return cmd_eval(eval_ckpt, eval_data, eval_seed, eval_section, eval_out, eval_nobg,
                      eval_per_image);
    if (prev->parsed()) return cmd_augment_preview(prev_data, prev_id, prev_out, prev_seed);
    if (rel->parsed())
      return cmd_reliability_dump(rel_ckpt, rel_data, rel_id, rel_out, rel_grid, rel_views,
                                  rel_delta, rel_seed);
    if (cmp->parsed()) return cmd_compare(cmp_config, cmp_overrides);
  } catch (const ctfs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ctfs::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const ctfs::TrainError& e) {
    std::cerr << "training failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

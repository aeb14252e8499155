// Acceptance suite: runs every top-level criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit code is the number of
// failed criteria.
//
//   acceptance [--only fast|end_to_end|all] [--data-root DIR]
//
// "fast" covers the formula/geometry/schedule/bound/gradient/determinism/
// metric criteria (about two minutes); "end_to_end" trains the full set of
// comparison arms on a synthetic dataset and checks the improvement trend
// and the ablation ordering (expect tens of minutes on one CPU core).

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "ctfs/trainer.hpp"
#include "../oracles.hpp"

using namespace ctfs;
namespace fsys = std::filesystem;

namespace {

struct Criterion {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& msg) {
    if (!ok) {
      pass = false;
      if (detail.tellp() > 0) detail << "; ";
      detail << msg;
    }
  }
};

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-6);
}

// --- criterion 1: formula oracles ------------------------------------------

Criterion check_formula_oracles() {
  Criterion c;
  Rng rng(2024);
  double worst = 0.0;

  for (int trial = 0; trial < 100; ++trial) {
    const int H = 32, W = 48;
    const Intensity img = oracle::random_intensity(H, W, rng);

    const ShadowParams sp = sample_shadow_params(H, W, rng);
    const Intensity shadowed = apply_shadow(img, sp);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        worst = std::max(worst, rel_err(shadowed.at(y, x),
                                        oracle::shadow_pixel(img.at(y, x), x, y, sp)));

    const AttenuationParams ap = sample_attenuation_params(rng);
    const Intensity attenuated = apply_attenuation(img, ap);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        worst = std::max(worst, rel_err(attenuated.at(y, x),
                                        oracle::attenuation_pixel(img.at(y, x), y, H, ap.gamma)));
  }
  c.require(worst < 1e-5, "shadow/attenuation worst rel err " + std::to_string(worst));

  double worst_pool = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int m = (trial % 2 == 0) ? 8 : 16;
    const ProbMap p = oracle::random_probmap(4, 32, 32, rng);
    const GridFeatureMap g = grid_pool(p, m);
    for (int i = 0; i < g.grid_rows; ++i)
      for (int j = 0; j < g.grid_cols; ++j) {
        const auto want = oracle::grid_cell_mean(p, i, j, m);
        for (int cl = 0; cl < 4; ++cl)
          worst_pool = std::max(worst_pool, rel_err(g.cell(i, j)[cl], want[cl]));
      }
  }
  c.require(worst_pool < 1e-5, "grid_pool worst rel err " + std::to_string(worst_pool));

  double worst_mvra = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int K = 1 + trial % 4;
    const GridFeatureMap orig = oracle::random_features(4, 4, 4, rng);
    std::vector<GridFeatureMap> views;
    for (int k = 0; k < K; ++k) views.push_back(oracle::random_features(4, 4, 4, rng));
    const Grid<float> r = teacher_stability(orig, views);

    const std::array<GridFeatureMap, 3> f = {oracle::random_features(4, 4, 4, rng),
                                             oracle::random_features(4, 4, 4, rng),
                                             oracle::random_features(4, 4, 4, rng)};
    const Grid<float> cons = cross_teacher_consistency(f);
    const Grid<float> r0 = oracle::random_scores(4, 4, rng);
    const Grid<float> r1 = oracle::random_scores(4, 4, rng);
    const Grid<float> r2 = oracle::random_scores(4, 4, rng);
    const float delta = static_cast<float>(rng.uniform(0.0, 1.0));
    const ReliabilityMap rel = fuse_reliability({r0, r1, r2}, cons, delta, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        worst_mvra = std::max(worst_mvra,
                              rel_err(r.at(i, j), oracle::stability_cell(orig, views, i, j)));
        worst_mvra =
            std::max(worst_mvra, rel_err(cons.at(i, j), oracle::consistency_cell(f, i, j)));
        worst_mvra = std::max(
            worst_mvra, rel_err(rel.grid_scores.at(i, j),
                                oracle::fuse_cell(r0.at(i, j), r1.at(i, j), r2.at(i, j),
                                                  cons.at(i, j), delta)));
      }
  }
  c.require(worst_mvra < 1e-5,
            "stability/consistency/fusion worst rel err " + std::to_string(worst_mvra));

  double worst_loss = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ProbMap> preds;
    std::vector<MaskImage> gts;
    std::vector<Grid<float>> rels;
    const int n = 1 + trial % 3;
    for (int i = 0; i < n; ++i) {
      preds.push_back(oracle::random_probmap(4, 16, 16, rng));
      gts.push_back(oracle::random_mask(4, 16, 16, rng));
      rels.push_back(oracle::random_scores(16, 16, rng));
    }
    std::vector<const ProbMap*> pp;
    std::vector<const MaskImage*> gg;
    std::vector<const Grid<float>*> rr;
    for (int i = 0; i < n; ++i) {
      pp.push_back(&preds[i]);
      gg.push_back(&gts[i]);
      rr.push_back(&rels[i]);
    }
    worst_loss =
        std::max(worst_loss, rel_err(supervised_loss(pp, gg), oracle::supervised_loss(pp, gg)));
    LossConfig lcfg;
    lcfg.psi = static_cast<float>(rng.uniform(0.0, 1.0));
    const UnsupResult got = unsupervised_loss(pp, gg, rr, lcfg);
    const oracle::UnsupOracle want = oracle::unsupervised_loss(pp, gg, rr, lcfg.psi);
    worst_loss = std::max(worst_loss, rel_err(got.loss, want.loss));
    worst_loss = std::max(worst_loss, std::abs(got.gated_fraction - want.gated_fraction));
  }
  c.require(worst_loss < 1e-5, "loss worst rel err " + std::to_string(worst_loss));

  if (c.pass)
    c.detail << "8 operations, 100+ random instances each, all within 1e-5 of the scalar "
                "oracles";
  return c;
}

// --- criterion 2: shadow geometry ------------------------------------------

Criterion check_geometry() {
  Criterion c;
  Rng rng(9);
  int seam_crossers = 0;
  for (int trial = 0; trial < 50; ++trial) {
    ShadowAugConfig wide;
    wide.span_min_deg = 15.0f;
    wide.span_max_deg = 355.0f;
    ShadowParams p = sample_shadow_params(128, 128, rng, wide);
    if (trial % 2 == 1) {
      // force the sector across the atan2 branch cut at +-pi
      p.theta = static_cast<float>(kPi - rng.uniform(0.0, 0.5) * p.delta_theta);
    }
    const double end = p.theta + p.delta_theta;
    if (end > kPi || p.theta > kPi) ++seam_crossers;
    const BoolMask got = shadow_region(p, 128, 128);
    const BoolMask want = oracle::shadow_region(p, 128, 128);
    c.require(got == want, "mismatch on draw " + std::to_string(trial));
    if (!c.pass) break;
  }
  c.require(seam_crossers >= 10, "not enough seam-crossing draws");
  if (c.pass)
    c.detail << "50 draws on 128x128 bit-equal to the brute-force region (" << seam_crossers
             << " cross the angular seam)";
  return c;
}

// --- criterion 3: schedule and EMA -----------------------------------------

Criterion check_schedule_ema() {
  Criterion c;
  for (long E : {0L, 5L, 10L}) {
    for (long e = 0; e < 300; ++e) {
      ActivePhase want;
      if (e < E) want = ActivePhase::supervised;
      else if ((e - E) % 3 == 0) want = ActivePhase::general;
      else if ((e - E) % 3 == 1) want = ActivePhase::sonar_a;
      else want = ActivePhase::sonar_b;
      c.require(schedule(e, E) == want,
                "schedule mismatch at e=" + std::to_string(e) + " E=" + std::to_string(E));
      if (!c.pass) return c;
    }
  }

  SegNetConfig small;
  small.widths = {2, 2, 2, 2};
  small.num_classes = 2;
  const SegNet net(small);
  const ModelParams t0 = net.init_params(1);
  const ModelParams student = net.init_params(2);
  const double m = 0.999;
  TeacherBank bank = TeacherBank::from_student(t0, m, 0);
  double worst = 0.0;
  for (int k = 1; k <= 1000; ++k) {
    ema_update(bank, TeacherTag::general, student);
    const double mk = std::pow(m, k);
    for (size_t a = 0; a < t0.arrays.size(); ++a)
      for (size_t i = 0; i < t0.arrays[a].values.size(); ++i) {
        const double want =
            mk * t0.arrays[a].values[i] + (1.0 - mk) * student.arrays[a].values[i];
        worst = std::max(worst,
                         std::abs(bank[TeacherTag::general].arrays[a].values[i] - want));
      }
  }
  c.require(worst < 1e-10, "EMA closed-form deviation " + std::to_string(worst));

  // across thirty simulated epochs only the scheduled teacher may move
  TeacherBank rotating = TeacherBank::from_student(t0, 0.9, 0);
  Rng rng(3);
  for (long epoch = 0; epoch < 30; ++epoch) {
    const TeacherTag active = phase_tag(schedule(epoch, 0));
    const std::array<ModelParams, 3> before = rotating.teachers;
    for (int it = 0; it < 3; ++it)
      ema_update(rotating, active, net.init_params(rng.raw()));
    for (int t = 0; t < 3; ++t) {
      const bool same = [&] {
        for (size_t a = 0; a < before[t].arrays.size(); ++a)
          if (before[t].arrays[a].values != rotating.teachers[t].arrays[a].values) return false;
        return true;
      }();
      if (static_cast<TeacherTag>(t) == active)
        c.require(!same, "active teacher did not move at epoch " + std::to_string(epoch));
      else
        c.require(same, "inactive teacher moved at epoch " + std::to_string(epoch));
    }
  }
  if (c.pass)
    c.detail << "rotation exact on e in [0,300) for E in {0,5,10}; EMA closed form within "
             << worst << "; inactive teachers bit-frozen";
  return c;
}

// --- criterion 4: bounds and gates ------------------------------------------

Criterion check_bounds_gates() {
  Criterion c;
  Rng rng(44);
  for (int trial = 0; trial < 1000 && c.pass; ++trial) {
    const GridFeatureMap orig = oracle::random_features(4, 4, 4, rng);
    std::vector<GridFeatureMap> views;
    const int K = 1 + trial % 3;
    for (int k = 0; k < K; ++k) views.push_back(oracle::random_features(4, 4, 4, rng));
    const std::array<GridFeatureMap, 3> f = {orig, oracle::random_features(4, 4, 4, rng),
                                             oracle::random_features(4, 4, 4, rng)};
    const Grid<float> r = teacher_stability(orig, views);
    const Grid<float> cons = cross_teacher_consistency(f);
    const float delta = static_cast<float>(rng.uniform(0.0, 1.0));
    const ReliabilityMap rel = fuse_reliability({r, r, r}, cons, delta, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        c.require(r.at(i, j) >= 0.0f && r.at(i, j) <= 1.0f, "stability out of [0,1]");
        c.require(cons.at(i, j) >= 0.0f && cons.at(i, j) <= 1.0f, "consistency out of [0,1]");
        c.require(rel.penalty.at(i, j) >= delta - 1e-7f && rel.penalty.at(i, j) <= 1.0f + 1e-7f,
                  "penalty out of [delta,1]");
        c.require(rel.grid_scores.at(i, j) >= 0.0f && rel.grid_scores.at(i, j) <= 1.0f,
                  "reliability out of [0,1]");
      }
  }

  Rng rng2(45);
  const ProbMap p = oracle::random_probmap(4, 16, 16, rng2);
  const MaskImage pseudo = oracle::random_mask(4, 16, 16, rng2);
  const Grid<float> rel = oracle::random_scores(16, 16, rng2);
  LossConfig closed;
  closed.psi = 1.0f;
  c.require(unsupervised_loss({&p}, {&pseudo}, {&rel}, closed).loss == 0.0,
            "psi=1 does not zero the unsupervised loss");

  LossConfig off;
  off.lambda_u = 0.0f;
  const LossReport rep = total_loss(0.731, {0.4, 0.6}, off);
  c.require(rep.total == 0.731, "lambda_u=0 does not make total equal sup");

  double prev = 1.1;
  for (int step = 0; step <= 10; ++step) {
    LossConfig cfg;
    cfg.psi = static_cast<float>(step / 10.0);
    const double frac = unsupervised_loss({&p}, {&pseudo}, {&rel}, cfg).gated_fraction;
    c.require(frac <= prev + 1e-12, "gated fraction rose as psi grew");
    prev = frac;
  }
  if (c.pass)
    c.detail << "1000 random instances in range; psi=1 closes the gate; lambda_u=0 drops the "
                "unsupervised term; gate monotone in psi";
  return c;
}

// --- criterion 5: gradient check --------------------------------------------

Criterion check_gradients() {
  Criterion c;
  SegNetConfig cfg;
  cfg.num_classes = 3;
  cfg.widths = {4, 6, 8, 10};
  const SegNet net(cfg);

  Rng rng(77);
  const Intensity img = oracle::random_intensity(16, 16, rng);
  const MaskImage labels = oracle::random_mask(3, 16, 16, rng);
  const Grid<float> rel = oracle::random_scores(16, 16, rng);
  const float psi = 0.4f;
  Tensor3T<double> x(1, 16, 16);
  for (size_t i = 0; i < img.size(); ++i) x.data()[i] = img.data()[i];

  for (const bool unsup : {false, true}) {
    ModelParams params = net.init_params(unsup ? 21 : 11);
    auto loss_fn = [&](const ModelParams& pp) {
      const auto w = SegNet::cast_params<double>(pp);
      const auto cache = net.forward(w, x);
      double loss = 0.0;
      const size_t plane = cache.probs.plane();
      for (size_t i = 0; i < plane; ++i) {
        const double weight = unsup ? (rel.data()[i] > psi ? rel.data()[i] : 0.0) : 1.0;
        if (weight == 0.0) continue;
        loss -= weight * oracle::clamped_log(cache.probs.data()[labels.data()[i] * plane + i]);
      }
      return loss / static_cast<double>(plane);
    };

    const auto w = SegNet::cast_params<double>(params);
    const auto cache = net.forward(w, x);
    ModelParams analytic = params.zeros_like();
    Tensor3T<double> dlogits(3, 16, 16, 0.0);
    const size_t plane = cache.probs.plane();
    for (size_t i = 0; i < plane; ++i) {
      const double weight = unsup ? (rel.data()[i] > psi ? rel.data()[i] : 0.0) : 1.0;
      if (weight == 0.0) continue;
      const double scale = weight / static_cast<double>(plane);
      for (int cl = 0; cl < 3; ++cl)
        dlogits.data()[cl * plane + i] = cache.probs.data()[cl * plane + i] * scale;
      dlogits.data()[labels.data()[i] * plane + i] -= scale;
    }
    net.backward(w, cache, dlogits, analytic);

    double max_g = 0.0;
    for (const auto& a : analytic.arrays)
      for (double g : a.values) max_g = std::max(max_g, std::abs(g));
    std::vector<std::pair<size_t, size_t>> candidates;
    for (size_t a = 0; a < analytic.arrays.size(); ++a)
      for (size_t i = 0; i < analytic.arrays[a].values.size(); ++i)
        if (std::abs(analytic.arrays[a].values[i]) > 1e-3 * max_g) candidates.emplace_back(a, i);
    Rng shuffler(unsup ? 31 : 37);
    shuffler.shuffle(candidates.begin(), candidates.end());

    const double h = 1e-6;
    int checked = 0;
    double worst = 0.0;
    for (size_t s = 0; s < candidates.size() && checked < 12; ++s, ++checked) {
      const auto [a, i] = candidates[s];
      const double orig = params.arrays[a].values[i];
      params.arrays[a].values[i] = orig + h;
      const double up = loss_fn(params);
      params.arrays[a].values[i] = orig - h;
      const double down = loss_fn(params);
      params.arrays[a].values[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = analytic.arrays[a].values[i];
      worst = std::max(worst, std::abs(fd - an) / std::max(1e-8, std::abs(an)));
    }
    c.require(checked >= 10, "not enough parameters sampled");
    c.require(worst <= 1e-3, std::string(unsup ? "unsupervised" : "supervised") +
                                 " path worst rel err " + std::to_string(worst));
    if (c.pass && !unsup) c.detail << "supervised worst rel err " << worst;
    if (c.pass && unsup) c.detail << "; unsupervised worst rel err " << worst << " (12 params each)";
  }
  return c;
}

// --- criterion 6: determinism -----------------------------------------------

std::vector<std::string> log_without_walltime(const std::string& run_dir) {
  std::ifstream in(fsys::path(run_dir) / "train_log.tsv");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line.substr(0, line.rfind('\t')));
  return lines;
}

void build_tiny_dataset(const std::string& dir, int n, int size) {
  if (fsys::exists(fsys::path(dir) / "meta.json")) return;
  SceneSpec spec;
  spec.rows = size;
  spec.cols = size;
  spec.target_count = 2;
  DatasetMeta meta{4, {"background", "ellipse", "bar", "ring"}};
  std::vector<std::pair<std::string, SonarScene>> scenes;
  Rng rng(500);
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "s%03d", i);
    spec.target_count = rng.uniform_int(1, 3);
    scenes.emplace_back(id, generate_scene(300 + i, spec));
  }
  save_dataset(dir, scenes, meta);
}

ExperimentConfig tiny_config(const std::string& data, const std::string& run_dir) {
  ExperimentConfig cfg;
  cfg.dataset_path = data;
  cfg.ratio = 0.2;
  cfg.split_seed = 1;
  cfg.widths = "4,6,8,10";
  cfg.ema_decay = 0.9;
  cfg.warmup_epochs = 2;
  cfg.mvra.grid_size = 8;
  cfg.mvra.views = 1;
  cfg.epochs = 6;
  cfg.batch_labeled = 2;
  cfg.batch_unlabeled = 2;
  cfg.seed = 17;
  cfg.run_dir = run_dir;
  fsys::remove_all(run_dir);
  return cfg;
}

Criterion check_determinism(const std::string& root) {
  Criterion c;
  const std::string data = root + "/tiny_data";
  build_tiny_dataset(data, 24, 32);

  const RunSummary a = run_experiment(tiny_config(data, root + "/det_a"));
  const RunSummary b = run_experiment(tiny_config(data, root + "/det_b"));
  c.require(log_without_walltime(a.run_dir) == log_without_walltime(b.run_dir),
            "two identical runs diverged");

  ExperimentConfig part = tiny_config(data, root + "/det_resume");
  part.epochs = 3;
  run_experiment(part);
  part.epochs = 6;
  const RunSummary resumed = run_experiment(part, true);
  c.require(log_without_walltime(a.run_dir) == log_without_walltime(resumed.run_dir),
            "resumed run diverged from the uninterrupted one");
  if (c.pass)
    c.detail << "identical per-iteration logs across reruns and across checkpoint resume";
  return c;
}

// --- criterion 9: mIoU oracle -----------------------------------------------

Criterion check_miou_oracle() {
  Criterion c;
  {
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 50;
    cm.at(0, 1) = 50;
    cm.at(1, 1) = 100;
    const IouReport rep = miou(cm);
    c.require(rep.per_class[0] == 0.5, "IoU_0 != 0.5");
    c.require(std::abs(rep.per_class[1] - 100.0 / 150.0) < 1e-15, "IoU_1 != 100/150");
    c.require(std::abs(rep.miou - 7.0 / 12.0) < 1e-15, "mIoU != 7/12 (0.5833...)");
  }
  {
    ConfusionMatrix cm(3);
    cm.at(0, 0) = 10;
    cm.at(1, 1) = 20;
    cm.at(2, 2) = 30;
    c.require(miou(cm).miou == 1.0, "perfect diagonal mIoU != 1");
  }
  {
    ConfusionMatrix cm(4);
    cm.at(0, 0) = 8;
    cm.at(0, 1) = 8;
    cm.at(1, 1) = 8;
    const IouReport rep = miou(cm);
    c.require(!rep.present[2] && !rep.present[3], "absent classes not excluded");
    c.require(std::abs(rep.miou - (0.5 + 0.5) / 2.0) < 1e-15, "exclusion mean wrong");
  }
  {
    // sharded accumulation equals one-shot accumulation
    Rng rng(5);
    const MaskImage gt = oracle::random_mask(3, 10, 10, rng);
    const MaskImage pr = oracle::random_mask(3, 10, 10, rng);
    ConfusionMatrix one(3), two(3), half(3);
    one.accumulate(gt, pr);
    one.accumulate(pr, gt);
    half.accumulate(gt, pr);
    two.accumulate(pr, gt);
    two += half;
    c.require(miou(one).miou == miou(two).miou, "sharded accumulation differs");
  }
  if (c.pass) c.detail << "hand-computed matrices match exactly, including mIoU 7/12";
  return c;
}

// --- criteria 7 and 8: end-to-end trend and ablation ordering ---------------

enum class Arm { baseline, single_general, no_mvra, full };

const char* arm_name(Arm a) {
  switch (a) {
    case Arm::baseline: return "supervised_only";
    case Arm::single_general: return "single_general_teacher";
    case Arm::no_mvra: return "ctfs_without_mvra";
    case Arm::full: return "full_ctfs";
  }
  return "?";
}

ExperimentConfig arm_config(const std::string& data, const std::string& run_root, Arm arm,
                            uint64_t seed) {
  ExperimentConfig cfg;
  cfg.dataset_path = data;
  cfg.ratio = 0.05;
  cfg.split_seed = seed;
  cfg.epochs = 45;          // 5 warm-up + 40 rotation epochs
  cfg.warmup_epochs = 5;
  cfg.batch_labeled = 4;
  cfg.batch_unlabeled = 4;
  cfg.seed = seed;
  cfg.ema_decay = 0.99;
  cfg.mvra.grid_size = 16;  // 4x4 reliability grid on 64x64 scenes
  cfg.mvra.views = 2;
  cfg.mvra.delta = 0.5f;
  cfg.loss.psi = 0.4f;
  cfg.loss.lambda_u = 1.0f;
  cfg.run_dir = run_root + "/" + arm_name(arm) + "_seed" + std::to_string(seed);
  switch (arm) {
    case Arm::baseline:
      cfg.loss.lambda_u = 0.0f;
      break;
    case Arm::single_general:
      cfg.rotation = RotationMode::general_only;
      cfg.mvra_enabled = false;
      break;
    case Arm::no_mvra:
      cfg.loss.psi = 0.0f;
      cfg.mvra.delta = 1.0f;
      break;
    case Arm::full:
      break;
  }
  return cfg;
}

struct EndToEndResults {
  // mean best-validation mIoU per arm over the seeds
  std::map<Arm, double> mean_miou;
  double minutes = 0.0;
};

EndToEndResults run_end_to_end(const std::string& root) {
  const std::string data = root + "/trend_data";
  if (!fsys::exists(fsys::path(data) / "meta.json")) {
    SceneSpec spec;
    spec.rows = 64;
    spec.cols = 64;
    spec.num_classes = 4;
    Rng rng(4242);
    std::vector<std::pair<std::string, SonarScene>> scenes;
    for (int i = 0; i < 200; ++i) {
      char id[16];
      std::snprintf(id, sizeof(id), "scene_%04d", i);
      spec.target_count = rng.uniform_int(1, 4);
      scenes.emplace_back(id, generate_scene(hash_mix(4242, i), spec));
    }
    save_dataset(data, scenes, DatasetMeta{4, {"background", "ellipse", "bar", "ring"}});
  }

  const auto t0 = std::chrono::steady_clock::now();
  EndToEndResults results;
  const std::vector<uint64_t> seeds = {1, 2, 3};
  for (const Arm arm : {Arm::baseline, Arm::single_general, Arm::no_mvra, Arm::full}) {
    double sum = 0.0;
    for (const uint64_t seed : seeds) {
      ExperimentConfig cfg = arm_config(data, root + "/trend_runs", arm, seed);
      RunSummary summary;
      const std::string marker = cfg.resolved_run_dir() + "/summary.txt";
      fsys::remove_all(cfg.resolved_run_dir());
      summary = run_experiment(cfg);
      std::ofstream(marker) << summary.best_val_miou << "\n";
      sum += summary.best_val_miou;
      std::cout << "  [arm " << arm_name(arm) << " seed " << seed << "] best val mIoU "
                << summary.best_val_miou << std::endl;
    }
    results.mean_miou[arm] = sum / static_cast<double>(seeds.size());
  }
  results.minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  return results;
}

Criterion check_trend(const EndToEndResults& r) {
  Criterion c;
  const double base = r.mean_miou.at(Arm::baseline);
  const double full = r.mean_miou.at(Arm::full);
  c.require(full - base >= 0.02,
            "improvement " + std::to_string((full - base) * 100.0) + " points < 2 points");
  c.detail << "mean best-val mIoU over 3 seeds: supervised-only " << base * 100.0
           << ", full framework " << full * 100.0 << " (+" << (full - base) * 100.0
           << " points) in " << r.minutes << " min";
  return c;
}

Criterion check_ablation(const EndToEndResults& r) {
  Criterion c;
  const double tie = 0.005;  // half a point
  const std::array<Arm, 4> order = {Arm::baseline, Arm::single_general, Arm::no_mvra, Arm::full};
  int ties = 0;
  for (size_t i = 0; i + 1 < order.size(); ++i) {
    const double lo = r.mean_miou.at(order[i]);
    const double hi = r.mean_miou.at(order[i + 1]);
    if (hi < lo) {
      if (lo - hi <= tie) ++ties;
      else
        c.require(false, std::string(arm_name(order[i])) + " (" + std::to_string(lo * 100) +
                             ") exceeds " + arm_name(order[i + 1]) + " (" +
                             std::to_string(hi * 100) + ") by more than 0.5 points");
    }
  }
  c.require(ties <= 1, "more than one adjacent tie");
  c.detail << "means: ";
  for (const Arm arm : order) c.detail << arm_name(arm) << " " << r.mean_miou.at(arm) * 100.0 << "  ";
  c.detail << "(" << ties << " adjacent tie(s))";
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  std::string only = "all";
  std::string root = (fsys::temp_directory_path() / "ctfs_acceptance").string();
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = argv[++i];
    else if (std::strcmp(argv[i], "--data-root") == 0 && i + 1 < argc) root = argv[++i];
  }
  fsys::create_directories(root);

  std::vector<std::pair<std::string, Criterion>> results;
  const bool fast = only == "fast" || only == "all";
  const bool long_running = only == "end_to_end" || only == "all";

  if (fast) {
    results.emplace_back("formula_oracle_suite", check_formula_oracles());
    results.emplace_back("geometry_suite", check_geometry());
    results.emplace_back("schedule_ema_suite", check_schedule_ema());
    results.emplace_back("bound_gate_suite", check_bounds_gates());
    results.emplace_back("gradient_check", check_gradients());
    results.emplace_back("determinism", check_determinism(root));
    results.emplace_back("miou_oracle", check_miou_oracle());
  }
  if (long_running) {
    std::cout << "running end-to-end arms (4 arms x 3 seeds)..." << std::endl;
    const EndToEndResults r = run_end_to_end(root);
    results.emplace_back("end_to_end_trend", check_trend(r));
    results.emplace_back("ablation_echo", check_ablation(r));
  }

  int failures = 0;
  for (const auto& [name, criterion] : results) {
    std::cout << (criterion.pass ? "PASS" : "FAIL") << "  " << name;
    const std::string detail = criterion.detail.str();
    if (!detail.empty()) std::cout << " — " << detail;
    std::cout << "\n";
    if (!criterion.pass) ++failures;
  }
  return failures;
}

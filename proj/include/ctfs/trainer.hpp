#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <unordered_map>

#include "ctfs/checkpoint.hpp"
#include "ctfs/config.hpp"
#include "ctfs/evaluator.hpp"
#include "ctfs/losses.hpp"
#include "ctfs/mvra.hpp"
#include "ctfs/sonar_synth.hpp"

namespace ctfs {

// ---------------------------------------------------------------------------
// Batch sampling
// ---------------------------------------------------------------------------

struct BatchIds {
  std::vector<std::string> labeled;
  std::vector<std::string> unlabeled;
};

/// Random batch draw. Pools at least as large as the batch are sampled
/// without replacement; smaller pools are sampled with replacement.
inline BatchIds sample_batch(const DatasetSplit& split, int n_labeled, int n_unlabeled,
                             Rng& rng) {
  if (n_labeled > 0 && split.labeled_ids.empty())
    throw TrainError("sample_batch: labeled pool is empty");
  if (n_unlabeled > 0 && split.unlabeled_ids.empty())
    throw TrainError("sample_batch: unlabeled pool is empty");
  auto draw = [&rng](const std::vector<std::string>& pool, int n) {
    std::vector<std::string> out;
    out.reserve(n);
    if (static_cast<size_t>(n) <= pool.size()) {
      std::sample(pool.begin(), pool.end(), std::back_inserter(out), n, rng.engine());
    } else {
      for (int i = 0; i < n; ++i)
        out.push_back(pool[rng.uniform_int(0, static_cast<int>(pool.size()) - 1)]);
    }
    return out;
  };
  BatchIds ids;
  if (n_labeled > 0) ids.labeled = draw(split.labeled_ids, n_labeled);
  if (n_unlabeled > 0) ids.unlabeled = draw(split.unlabeled_ids, n_unlabeled);
  return ids;
}

// ---------------------------------------------------------------------------
// One optimizer step
// ---------------------------------------------------------------------------

struct LabeledItem {
  Intensity image;
  MaskImage mask;
};

struct UnlabeledItem {
  Intensity strong_image;
  MaskImage pseudo;
  ProbMap teacher_probs;  // used by the soft-target mode
  Grid<float> reliability;
};

struct TrainBatch {
  std::vector<LabeledItem> labeled;
  std::vector<UnlabeledItem> unlabeled;
};

/// Forward/backward over one mixed batch followed by an AdamW update.
/// Gradients flow only through the student; throws on a non-finite loss.
inline LossReport train_step(const SegNet& net, ModelParams& student, const TrainBatch& batch,
                             const LossConfig& loss_cfg, AdamWState& opt_state,
                             const AdamWConfig& opt_cfg) {
  if (batch.labeled.empty()) throw TrainError("train_step: batch has no labeled items");
  const auto weights = SegNet::cast_params<float>(student);
  ModelParams grads = student.zeros_like();

  std::vector<ProbMap> sup_probs, unsup_probs;
  const size_t n_lab = batch.labeled.size();
  for (const auto& item : batch.labeled) {
    Tensor3 x(1, item.image.rows(), item.image.cols());
    std::memcpy(x.data(), item.image.data(), item.image.size() * sizeof(float));
    auto cache = net.forward(weights, x);
    const double scale = 1.0 / (static_cast<double>(n_lab) * cache.probs.plane());
    const Tensor3 dlogits = ce_logit_grad(cache.probs, item.mask, nullptr, scale);
    net.backward(weights, cache, dlogits, grads);
    sup_probs.push_back(std::move(cache.probs));
  }

  const size_t n_unl = batch.unlabeled.size();
  const bool unsup_active = loss_cfg.lambda_u > 0.0f && n_unl > 0;
  std::vector<Grid<float>> gate_weights;
  if (unsup_active) {
    for (const auto& item : batch.unlabeled) {
      Tensor3 x(1, item.strong_image.rows(), item.strong_image.cols());
      std::memcpy(x.data(), item.strong_image.data(), item.strong_image.size() * sizeof(float));
      auto cache = net.forward(weights, x);
      const double scale = static_cast<double>(loss_cfg.lambda_u) /
                           (static_cast<double>(n_unl) * cache.probs.plane());
      gate_weights.push_back(gated_weights(item.reliability, loss_cfg.psi));
      const Tensor3 dlogits =
          loss_cfg.soft_targets
              ? ce_logit_grad_soft(cache.probs, item.teacher_probs, &gate_weights.back(), scale)
              : ce_logit_grad(cache.probs, item.pseudo, &gate_weights.back(), scale);
      net.backward(weights, cache, dlogits, grads);
      unsup_probs.push_back(std::move(cache.probs));
    }
  }

  std::vector<const ProbMap*> sp;
  std::vector<const MaskImage*> sm;
  for (size_t i = 0; i < n_lab; ++i) {
    sp.push_back(&sup_probs[i]);
    sm.push_back(&batch.labeled[i].mask);
  }
  const double sup = supervised_loss(sp, sm);

  UnsupResult unsup;
  if (unsup_active) {
    std::vector<const ProbMap*> up, tp;
    std::vector<const MaskImage*> pl;
    std::vector<const Grid<float>*> rel;
    for (size_t i = 0; i < n_unl; ++i) {
      up.push_back(&unsup_probs[i]);
      tp.push_back(&batch.unlabeled[i].teacher_probs);
      pl.push_back(&batch.unlabeled[i].pseudo);
      rel.push_back(&batch.unlabeled[i].reliability);
    }
    unsup = loss_cfg.soft_targets ? unsupervised_loss_soft(up, tp, rel, loss_cfg)
                                  : unsupervised_loss(up, pl, rel, loss_cfg);
  }

  const LossReport report = total_loss(sup, unsup, loss_cfg);  // throws on non-finite
  adamw_step(student, grads, opt_state, opt_cfg);
  return report;
}

// ---------------------------------------------------------------------------
// Teacher weak views
// ---------------------------------------------------------------------------

struct WeakView {
  Intensity image;
  GeometryRecord geometry;
};

/// Weak perturbation pipeline of one teacher family. The sonar teachers stack
/// their specialty operator on the general geometric transform unless
/// configured otherwise.
inline WeakView make_teacher_weak_view(const Intensity& img, TeacherTag tag, Rng& rng,
                                       const AugmentOptions& aug) {
  WeakView view;
  const bool geometric = tag == TeacherTag::general || aug.sonar_weak_geometric;
  if (geometric) {
    view.geometry = sample_weak_geometry(img.rows(), img.cols(), rng, aug.weak);
    view.image = replay_geometry(img, view.geometry);
  } else {
    view.geometry = GeometryRecord::identity(img.rows(), img.cols());
    view.image = img;
  }
  switch (tag) {
    case TeacherTag::general:
      break;
    case TeacherTag::sonar_a:
      view.image = apply_shadow(
          view.image, sample_shadow_params(img.rows(), img.cols(), rng, aug.shadow));
      break;
    case TeacherTag::sonar_b:
      view.image = apply_attenuation(view.image, sample_attenuation_params(rng, aug.atten));
      break;
  }
  return view;
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

struct TrainLogRecord {
  long epoch = 0;
  long iter = 0;
  std::string active;
  LossReport loss;
  double mean_reliability = 0.0;
  double wall_ms = 0.0;
};

struct EpochRecord {
  long epoch = 0;
  std::string active;
  double val_miou = 0.0;
  double mean_reliability = 0.0;
  double gated_fraction = 0.0;
};

struct RunSummary {
  std::string run_dir;
  double best_val_miou = -1.0;
  long best_epoch = -1;
  double final_val_miou = 0.0;
  std::vector<EpochRecord> epochs;
};

namespace detail {

struct TrainerData {
  DatasetMeta meta;
  std::map<std::string, Intensity> images;
  std::map<std::string, MaskImage> masks;  // labeled train + val ids only
  DatasetSplit split;
  std::vector<std::string> val_ids;
};

inline TrainerData load_trainer_data(const ExperimentConfig& cfg) {
  TrainerData data;
  const std::string& dir = cfg.dataset_path;
  if (dir.empty()) throw ConfigError("dataset.path is not set");
  data.meta = load_meta(dir);

  // splits are persisted artifacts: load when present, create + write once
  // when missing, never recompute silently
  HoldoutSplit holdout;
  if (fs::exists(holdout_file_path(dir, cfg.split_seed))) {
    holdout = read_holdout_file(dir, cfg.split_seed);
  } else {
    holdout = build_holdout(list_scene_ids(dir), cfg.split_seed);
    write_holdout_file(dir, cfg.split_seed, holdout);
  }
  if (fs::exists(split_file_path(dir, cfg.ratio, cfg.split_seed))) {
    data.split = read_split_file(dir, cfg.ratio, cfg.split_seed);
  } else {
    data.split = build_splits(holdout.train_ids, cfg.ratio, cfg.split_seed);
    write_split_file(dir, cfg.ratio, cfg.split_seed, data.split);
  }
  data.val_ids = holdout.val_ids;

  for (const auto& id : data.split.labeled_ids) {
    SonarScene s = load_scene(dir, id, data.meta.num_classes, true);
    data.images[id] = std::move(s.intensity);
    data.masks[id] = std::move(s.mask);
  }
  for (const auto& id : data.split.unlabeled_ids) {
    SonarScene s = load_scene(dir, id, data.meta.num_classes, false);
    data.images[id] = std::move(s.intensity);  // unlabeled items carry no masks
  }
  for (const auto& id : data.val_ids) {
    SonarScene s = load_scene(dir, id, data.meta.num_classes, true);
    data.images[id] = std::move(s.intensity);
    data.masks[id] = std::move(s.mask);
  }
  return data;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace detail

inline double evaluate_miou(const SegNet& net, const ModelParams& params,
                            const detail::TrainerData& data,
                            const std::vector<std::string>& ids, bool include_background) {
  ConfusionMatrix cm(data.meta.num_classes);
  const auto weights = SegNet::cast_params<float>(params);
  for (const auto& id : ids) {
    const ProbMap probs = net.predict_cast(weights, data.images.at(id));
    cm.accumulate(data.masks.at(id), make_pseudo_label(probs));
  }
  return miou(cm, include_background).miou;
}

/// Runs (or resumes) one full experiment: warm-up supervised epochs followed
/// by teacher-rotation epochs with EMA updates, reliability assessment and
/// the gated consistency loss. Fully deterministic for a fixed config/seed;
/// per-iteration records land in train_log.tsv, per-epoch metrics in
/// epochs.csv, checkpoints in checkpoints/.
inline RunSummary run_experiment(const ExperimentConfig& cfg, bool resume = false) {
  const std::string run_dir = cfg.resolved_run_dir();
  fs::create_directories(run_dir);
  save_config(cfg, (fs::path(run_dir) / "resolved.cfg").string());

  detail::TrainerData data = detail::load_trainer_data(cfg);
  const SegNet net(cfg.net_config(data.meta.num_classes));
  const long E = cfg.warmup_epochs;

  const std::string last_path = (fs::path(run_dir) / "checkpoints" / "last.ckpt").string();
  const std::string best_path = (fs::path(run_dir) / "checkpoints" / "best.ckpt").string();

  Checkpoint state;
  if (resume && fs::exists(last_path)) {
    state = load_checkpoint(last_path);
    if (!(state.net == net.config()))
      throw DataError("resume: checkpoint architecture does not match the configured one");
  } else {
    state.net = net.config();
    state.student = net.init_params(cfg.seed);
    state.opt = AdamWState::zeros_like(state.student);
  }
  const bool fresh = state.epoch_next == 0;

  std::ofstream log((fs::path(run_dir) / "train_log.tsv").string(),
                    fresh ? std::ios::trunc : std::ios::app);
  std::ofstream epochs_csv((fs::path(run_dir) / "epochs.csv").string(),
                           fresh ? std::ios::trunc : std::ios::app);
  if (fresh) {
    log << "epoch\titer\tactive\ttotal\tsup\tunsup\tgated_fraction\tmean_reliability\t"
           "wall_ms\n";
    epochs_csv << "epoch,active_teacher,val_miou,mean_reliability,gated_fraction\n";
  }

  const int Nl = static_cast<int>(data.split.labeled_ids.size());
  const int Nu = static_cast<int>(data.split.unlabeled_ids.size());
  if (Nl == 0) throw TrainError("run_experiment: labeled pool is empty");

  // reliability cache, valid for one (image, epoch) pair
  std::unordered_map<std::string, std::pair<long, Grid<float>>> mvra_cache;

  RunSummary summary;
  summary.run_dir = run_dir;
  summary.best_val_miou = state.best_val_miou;
  summary.best_epoch = state.best_epoch;

  for (long epoch = state.epoch_next; epoch < cfg.epochs; ++epoch) {
    ActivePhase phase = schedule(epoch, E);
    if (phase != ActivePhase::supervised && cfg.rotation == RotationMode::general_only)
      phase = ActivePhase::general;
    const bool warmup = phase == ActivePhase::supervised;

    if (!warmup && !state.has_bank) {
      state.bank = TeacherBank::from_student(state.student, cfg.ema_decay, E);
      state.has_bank = true;
    }

    const bool unsup_active = !warmup && cfg.loss.lambda_u > 0.0f && Nu > 0 &&
                              cfg.batch_unlabeled > 0;
    const int iters =
        warmup || Nu == 0
            ? (Nl + cfg.batch_labeled - 1) / cfg.batch_labeled
            : (Nu + cfg.batch_unlabeled - 1) / cfg.batch_unlabeled;

    Rng rng(hash_mix(cfg.seed, 0xe90c4ULL, static_cast<uint64_t>(epoch)));
    double sum_rel = 0.0, sum_gate = 0.0;

    for (long iter = 0; iter < iters; ++iter) {
      const auto t0 = std::chrono::steady_clock::now();
      const BatchIds ids =
          sample_batch(data.split, cfg.batch_labeled, unsup_active ? cfg.batch_unlabeled : 0,
                       rng);

      TrainBatch batch;
      for (const auto& id : ids.labeled) {
        const Intensity& img = data.images.at(id);
        const MaskImage& mask = data.masks.at(id);
        if (cfg.labeled_weak) {
          WeakAugResult aug = apply_general_weak(img, mask, rng.raw(), cfg.augment.weak);
          batch.labeled.push_back({std::move(aug.image), std::move(aug.mask)});
        } else {
          batch.labeled.push_back({img, mask});
        }
      }

      double iter_rel = 0.0;
      if (unsup_active) {
        const TeacherTag tag = phase_tag(phase);
        for (const auto& id : ids.unlabeled) {
          const Intensity& original = data.images.at(id);
          WeakView weak = make_teacher_weak_view(original, tag, rng, cfg.augment);
          const uint64_t strong_seed = rng.raw();

          UnlabeledItem item;
          item.strong_image = apply_strong(weak.image, strong_seed, cfg.augment.strong);
          item.teacher_probs = teacher_predict(net, state.bank, tag, weak.image);
          item.pseudo = make_pseudo_label(item.teacher_probs);

          if (cfg.mvra_enabled) {
            auto it = mvra_cache.find(id);
            if (it == mvra_cache.end() || it->second.first != epoch) {
              const uint64_t seed =
                  hash_mix(cfg.seed, 0xa55e55ULL, static_cast<uint64_t>(epoch), hash_str(id));
              ReliabilityMap rel =
                  assess(net, state.bank, original, cfg.mvra, seed, cfg.augment);
              mvra_cache[id] = {epoch, std::move(rel.pixel_scores)};
              it = mvra_cache.find(id);
            }
            item.reliability = replay_geometry_nearest(it->second.second, weak.geometry);
          } else {
            item.reliability =
                Grid<float>(weak.image.rows(), weak.image.cols(), 1.0f);
          }
          double img_rel = 0.0;
          for (size_t i = 0; i < item.reliability.size(); ++i)
            img_rel += item.reliability.data()[i];
          iter_rel += img_rel / static_cast<double>(item.reliability.size());
          batch.unlabeled.push_back(std::move(item));
        }
        if (!ids.unlabeled.empty()) iter_rel /= static_cast<double>(ids.unlabeled.size());
      }

      LossReport report;
      try {
        report = train_step(net, state.student, batch, cfg.loss, state.opt, cfg.optimizer);
      } catch (const TrainError& e) {
        throw TrainError("epoch " + std::to_string(epoch) + " iter " + std::to_string(iter) +
                         ": " + e.what());
      }

      if (!warmup) ema_update(state.bank, phase_tag(phase), state.student);

      const double wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
              .count();
      sum_rel += iter_rel;
      sum_gate += report.gated_fraction;
      log << epoch << '\t' << iter << '\t' << to_string(phase) << '\t'
          << detail::format_double(report.total) << '\t' << detail::format_double(report.sup)
          << '\t' << detail::format_double(report.unsup) << '\t'
          << detail::format_double(report.gated_fraction) << '\t'
          << detail::format_double(iter_rel) << '\t' << detail::format_double(wall_ms)
          << '\n';
    }
    log.flush();

    EpochRecord er;
    er.epoch = epoch;
    er.active = to_string(phase);
    er.val_miou = data.val_ids.empty()
                      ? 0.0
                      : evaluate_miou(net, state.student, data, data.val_ids,
                                      cfg.include_background_miou);
    er.mean_reliability = iters > 0 ? sum_rel / iters : 0.0;
    er.gated_fraction = iters > 0 ? sum_gate / iters : 0.0;
    epochs_csv << er.epoch << ',' << er.active << ',' << detail::format_double(er.val_miou)
               << ',' << detail::format_double(er.mean_reliability) << ','
               << detail::format_double(er.gated_fraction) << '\n';
    epochs_csv.flush();
    summary.epochs.push_back(er);
    summary.final_val_miou = er.val_miou;

    state.epoch_next = epoch + 1;
    if (er.val_miou > state.best_val_miou) {
      state.best_val_miou = er.val_miou;
      state.best_epoch = epoch;
      save_checkpoint(best_path, state);
    }
    save_checkpoint(last_path, state);
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(
          (fs::path(run_dir) / "checkpoints" / ("epoch_" + std::to_string(epoch) + ".ckpt"))
              .string(),
          state);
    summary.best_val_miou = state.best_val_miou;
    summary.best_epoch = state.best_epoch;
  }
  return summary;
}

}  // namespace ctfs

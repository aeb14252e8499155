#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctfs/common.hpp"
#include "ctfs/png_io.hpp"

namespace ctfs {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Scene generation
// ---------------------------------------------------------------------------

struct SceneSpec {
  int rows = 128;
  int cols = 128;
  int num_classes = 4;      // class 0 = background
  int target_count = 3;
  std::vector<int> target_classes;  // empty: sample uniformly from 1..C-1

  // phenomenology knobs
  float fan_half_angle_deg = 38.0f;
  float background_level = 0.30f;
  float range_falloff = 0.35f;      // vertical intensity falloff toward far range
  float speckle_shape = 3.0f;       // gamma shape of the unit-mean multiplicative noise
  float shadow_gain = 0.30f;        // multiplicative darkening inside cast shadows
};

struct TargetInfo {
  int cls = 0;
  float cx = 0.0f, cy = 0.0f;  // center (col, row)
  float size = 0.0f;           // characteristic radius, pixels
  float angle = 0.0f;          // in-plane orientation
};

struct SceneMeta {
  uint64_t seed = 0;
  std::vector<TargetInfo> targets;
  float speckle_shape = 0.0f;
  float shadow_gain = 0.0f;
};

struct SonarScene {
  Intensity intensity;  // [0,1]
  MaskImage mask;       // class index per pixel, 0 = background
  BoolMask shadow;      // cast-shadow bookkeeping (not part of the on-disk format)
  SceneMeta meta;
};

namespace detail {

// Apex of the virtual sensor: slightly above the top edge, centered.
inline void fan_origin(const SceneSpec& spec, double& ox, double& oy) {
  ox = 0.5 * (spec.cols - 1);
  oy = -0.06 * spec.rows;
}

inline bool inside_fan(const SceneSpec& spec, double ox, double oy, int x, int y) {
  const double dx = x - ox, dy = y - oy;
  const double ang = std::atan2(dx, dy);  // 0 points straight down-range
  const double half = spec.fan_half_angle_deg * kPi / 180.0;
  return std::abs(ang) <= half;
}

// Target footprint membership in local coordinates. Shape depends on class:
// class 1 = solid ellipse, class 2 = elongated bar, class 3 = annulus.
inline bool target_member(const TargetInfo& t, int x, int y) {
  const double ca = std::cos(t.angle), sa = std::sin(t.angle);
  const double dx = x - t.cx, dy = y - t.cy;
  const double u = ca * dx + sa * dy;
  const double v = -sa * dx + ca * dy;
  switch (t.cls % 3) {
    case 1: {  // ellipse, mild eccentricity
      const double a = t.size, b = 0.7 * t.size;
      return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
    }
    case 2: {  // bar
      const double a = 1.8 * t.size, b = 0.45 * t.size;
      return std::abs(u) <= a && std::abs(v) <= b;
    }
    default: {  // annulus, wall thick enough to survive speckle at small sizes
      const double r2 = u * u + v * v;
      const double outer = 1.25 * t.size, inner = 0.4 * t.size;
      return r2 <= outer * outer && r2 >= inner * inner;
    }
  }
}

}  // namespace detail

/// Generates one synthetic forward-looking sonar scene: a fan-shaped
/// insonified footprint with range falloff, bright targets that cast dark
/// shadow sectors away from the sensor, and multiplicative speckle.
/// Deterministic in (seed, spec).
inline SonarScene generate_scene(uint64_t seed, const SceneSpec& spec) {
  if (spec.rows <= 0 || spec.cols <= 0)
    throw std::invalid_argument("generate_scene: image dimensions must be positive");
  if (spec.target_count < 0)
    throw std::invalid_argument("generate_scene: target count must be >= 0");
  for (int c : spec.target_classes)
    if (c <= 0 || c >= spec.num_classes)
      throw std::invalid_argument("generate_scene: target class out of range");

  Rng rng(hash_mix(seed, 0x5ce2eULL));
  const int rows = spec.rows, cols = spec.cols;
  double ox, oy;
  detail::fan_origin(spec, ox, oy);

  SonarScene scene;
  scene.intensity = Intensity(rows, cols, 0.0f);
  scene.mask = MaskImage(rows, cols, 0);
  scene.shadow = BoolMask(rows, cols, 0);
  scene.meta.seed = seed;
  scene.meta.speckle_shape = spec.speckle_shape;
  scene.meta.shadow_gain = spec.shadow_gain;

  // base reverberation with range falloff inside the fan
  for (int y = 0; y < rows; ++y) {
    const float level =
        spec.background_level * (1.0f - spec.range_falloff * static_cast<float>(y) / rows);
    for (int x = 0; x < cols; ++x)
      if (detail::inside_fan(spec, ox, oy, x, y)) scene.intensity.at(y, x) = level;
  }

  // place targets inside the fan, rejecting heavy overlap; target sizes
  // shrink sublinearly with resolution so small rasters keep usable blobs
  const float unit = std::sqrt(std::min(rows, cols) / 128.0f);
  std::vector<TargetInfo> targets;
  for (int i = 0; i < spec.target_count; ++i) {
    TargetInfo t;
    t.cls = spec.target_classes.empty()
                ? rng.uniform_int(1, spec.num_classes - 1)
                : spec.target_classes[i % spec.target_classes.size()];
    // per-class size ranges keep every class visible at small rasters
    t.size = t.cls == 1   ? static_cast<float>(rng.uniform(6.0, 10.0)) * unit
             : t.cls == 2 ? static_cast<float>(rng.uniform(8.0, 13.0)) * unit
                          : static_cast<float>(rng.uniform(9.0, 14.0)) * unit;
    t.angle = static_cast<float>(rng.uniform(0.0, kPi));
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      t.cy = static_cast<float>(rng.uniform(0.18 * rows, 0.86 * rows));
      const double half = spec.fan_half_angle_deg * kPi / 180.0;
      const double max_dx = std::tan(half * 0.85) * (t.cy - oy);
      t.cx = static_cast<float>(ox + rng.uniform(-max_dx, max_dx));
      if (t.cx < 2.2 * t.size || t.cx > cols - 1 - 2.2 * t.size) continue;
      bool overlaps = false;
      for (const auto& other : targets) {
        const double dx = t.cx - other.cx, dy = t.cy - other.cy;
        if (std::sqrt(dx * dx + dy * dy) < 2.4 * (t.size + other.size)) overlaps = true;
      }
      if (!overlaps) placed = true;
    }
    if (placed) targets.push_back(t);
  }
  scene.meta.targets = targets;

  // paint targets (bright return) and record the mask
  for (const auto& t : targets) {
    const float base = t.cls == 1   ? static_cast<float>(rng.uniform(0.75, 0.95))
                       : t.cls == 2 ? static_cast<float>(rng.uniform(0.55, 0.75))
                                    : static_cast<float>(rng.uniform(0.70, 0.90));
    const int x_lo = std::max(0, static_cast<int>(t.cx - 2.5 * t.size));
    const int x_hi = std::min(cols - 1, static_cast<int>(t.cx + 2.5 * t.size));
    const int y_lo = std::max(0, static_cast<int>(t.cy - 2.5 * t.size));
    const int y_hi = std::min(rows - 1, static_cast<int>(t.cy + 2.5 * t.size));
    for (int y = y_lo; y <= y_hi; ++y)
      for (int x = x_lo; x <= x_hi; ++x)
        if (detail::target_member(t, x, y) && detail::inside_fan(spec, ox, oy, x, y)) {
          scene.intensity.at(y, x) = base;
          scene.mask.at(y, x) = static_cast<uint8_t>(t.cls);
        }
  }

  // cast shadows: the occluded sector behind each target, away from the apex
  for (const auto& t : targets) {
    const double dx = t.cx - ox, dy = t.cy - oy;
    const double dist = std::sqrt(dx * dx + dy * dy);
    const double ang = std::atan2(dy, dx);
    const double half_w = std::atan2(1.15 * t.size, dist);
    const double len = rng.uniform(3.0, 5.5) * t.size;
    const double r_near = dist + 1.05 * t.size;
    const double r_far = std::min(r_near + len, 1.6 * static_cast<double>(rows));
    for (int y = 0; y < rows; ++y) {
      for (int x = 0; x < cols; ++x) {
        if (scene.mask.at(y, x) != 0) continue;  // never darken another target
        const double px = x - ox, py = y - oy;
        const double pr = std::sqrt(px * px + py * py);
        if (pr < r_near || pr > r_far) continue;
        double da = std::remainder(std::atan2(py, px) - ang, kTwoPi);
        if (std::abs(da) > half_w) continue;
        scene.intensity.at(y, x) *= spec.shadow_gain;
        scene.shadow.at(y, x) = 1;
      }
    }
  }

  // multiplicative speckle, unit-mean gamma draws, then clamp
  const double shape = spec.speckle_shape;
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      if (scene.intensity.at(y, x) <= 0.0f) continue;  // outside the fan
      const double s = rng.gamma(shape, 1.0 / shape);
      scene.intensity.at(y, x) = clamp01(static_cast<float>(scene.intensity.at(y, x) * s));
    }
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Label-ratio splits
// ---------------------------------------------------------------------------

struct DatasetSplit {
  std::vector<std::string> labeled_ids;
  std::vector<std::string> unlabeled_ids;
  double ratio = 0.0;
};

/// Randomly partitions ids into labeled/unlabeled at the given ratio.
/// |labeled| = round(ratio * N); deterministic per seed.
inline DatasetSplit build_splits(const std::vector<std::string>& ids, double ratio,
                                 uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0))
    throw std::invalid_argument("build_splits: ratio must be in (0, 1]");
  if (ids.empty()) throw std::invalid_argument("build_splits: ids must be non-empty");
  std::vector<std::string> shuffled = ids;
  Rng rng(hash_mix(seed, 0x511fULL));
  rng.shuffle(shuffled.begin(), shuffled.end());
  const size_t n_lab = static_cast<size_t>(
      std::min<long long>(std::llround(ratio * static_cast<double>(ids.size())),
                          static_cast<long long>(ids.size())));
  DatasetSplit split;
  split.ratio = ratio;
  split.labeled_ids.assign(shuffled.begin(), shuffled.begin() + n_lab);
  split.unlabeled_ids.assign(shuffled.begin() + n_lab, shuffled.end());
  std::sort(split.labeled_ids.begin(), split.labeled_ids.end());
  std::sort(split.unlabeled_ids.begin(), split.unlabeled_ids.end());
  return split;
}

/// Train/val/test holdout in a 6:2:2 ratio, deterministic per seed.
struct HoldoutSplit {
  std::vector<std::string> train_ids, val_ids, test_ids;
};

inline HoldoutSplit build_holdout(const std::vector<std::string>& ids, uint64_t seed) {
  if (ids.empty()) throw std::invalid_argument("build_holdout: ids must be non-empty");
  std::vector<std::string> shuffled = ids;
  Rng rng(hash_mix(seed, 0x603dULL));
  rng.shuffle(shuffled.begin(), shuffled.end());
  const size_t n = ids.size();
  const size_t n_train = static_cast<size_t>(std::llround(0.6 * n));
  const size_t n_val = static_cast<size_t>(std::llround(0.2 * n));
  HoldoutSplit h;
  h.train_ids.assign(shuffled.begin(), shuffled.begin() + n_train);
  h.val_ids.assign(shuffled.begin() + n_train,
                   shuffled.begin() + std::min(n, n_train + n_val));
  h.test_ids.assign(shuffled.begin() + std::min(n, n_train + n_val), shuffled.end());
  std::sort(h.train_ids.begin(), h.train_ids.end());
  std::sort(h.val_ids.begin(), h.val_ids.end());
  std::sort(h.test_ids.begin(), h.test_ids.end());
  return h;
}

// ---------------------------------------------------------------------------
// On-disk dataset format
//   images/<id>.png   16-bit grayscale intensity
//   masks/<id>.png    8-bit, pixel value = class index
//   splits/<ratio>_<seed>.txt   sections "#labeled" / "#unlabeled"
//   meta.json         num_classes and class names
// ---------------------------------------------------------------------------

struct DatasetMeta {
  int num_classes = 0;
  std::vector<std::string> class_names;
};

inline void save_meta(const std::string& dir, const DatasetMeta& meta) {
  fs::create_directories(dir);
  nlohmann::json j;
  j["num_classes"] = meta.num_classes;
  j["class_names"] = meta.class_names;
  std::ofstream out(fs::path(dir) / "meta.json");
  out << j.dump(2) << "\n";
}

inline DatasetMeta load_meta(const std::string& dir) {
  const fs::path path = fs::path(dir) / "meta.json";
  std::ifstream in(path);
  if (!in) throw DataError("missing dataset metadata: " + path.string());
  nlohmann::json j;
  in >> j;
  DatasetMeta meta;
  meta.num_classes = j.at("num_classes").get<int>();
  if (j.contains("class_names"))
    meta.class_names = j.at("class_names").get<std::vector<std::string>>();
  if (meta.num_classes <= 0) throw DataError("meta.json: num_classes must be positive");
  return meta;
}

inline void save_scene(const std::string& dir, const std::string& id, const SonarScene& scene) {
  Grid<uint16_t> img16(scene.intensity.rows(), scene.intensity.cols());
  for (size_t i = 0; i < img16.size(); ++i)
    img16.data()[i] =
        static_cast<uint16_t>(std::lround(clamp01(scene.intensity.data()[i]) * 65535.0f));
  write_png_gray16((fs::path(dir) / "images" / (id + ".png")).string(), img16);
  if (!scene.mask.empty())
    write_png_gray8((fs::path(dir) / "masks" / (id + ".png")).string(), scene.mask);
}

inline void save_dataset(const std::string& dir,
                         const std::vector<std::pair<std::string, SonarScene>>& scenes,
                         const DatasetMeta& meta) {
  save_meta(dir, meta);
  for (const auto& [id, scene] : scenes) save_scene(dir, id, scene);
}

/// Loads one scene. When require_mask is set a missing mask file is an error;
/// otherwise the mask is returned empty.
inline SonarScene load_scene(const std::string& dir, const std::string& id, int num_classes,
                             bool require_mask) {
  SonarScene scene;
  const fs::path img_path = fs::path(dir) / "images" / (id + ".png");
  if (!fs::exists(img_path)) throw DataError("missing image file: " + img_path.string());
  int bit_depth = 0;
  Grid<uint16_t> raw = read_png_gray(img_path.string(), &bit_depth);
  const float denom = bit_depth == 16 ? 65535.0f : 255.0f;
  scene.intensity = Intensity(raw.rows(), raw.cols());
  for (size_t i = 0; i < raw.size(); ++i)
    scene.intensity.data()[i] = static_cast<float>(raw.data()[i]) / denom;

  const fs::path mask_path = fs::path(dir) / "masks" / (id + ".png");
  if (fs::exists(mask_path)) {
    Grid<uint16_t> m = read_png_gray(mask_path.string());
    if (m.rows() != raw.rows() || m.cols() != raw.cols())
      throw DataError("image/mask shape mismatch for id " + id);
    scene.mask = MaskImage(m.rows(), m.cols());
    for (size_t i = 0; i < m.size(); ++i) {
      if (m.data()[i] >= static_cast<uint16_t>(num_classes))
        throw DataError("mask class index out of range for id " + id);
      scene.mask.data()[i] = static_cast<uint8_t>(m.data()[i]);
    }
  } else if (require_mask) {
    throw DataError("labeled scene " + id + " has no mask file");
  }
  return scene;
}

inline std::vector<std::string> list_scene_ids(const std::string& dir) {
  const fs::path images = fs::path(dir) / "images";
  if (!fs::exists(images)) throw DataError("dataset has no images/ directory: " + dir);
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(images))
    if (entry.path().extension() == ".png") ids.push_back(entry.path().stem().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline std::vector<std::pair<std::string, SonarScene>> load_dataset(const std::string& dir) {
  const DatasetMeta meta = load_meta(dir);
  std::vector<std::pair<std::string, SonarScene>> scenes;
  for (const auto& id : list_scene_ids(dir))
    scenes.emplace_back(id, load_scene(dir, id, meta.num_classes, false));
  return scenes;
}

// ---------------------------------------------------------------------------
// Split files (immutable once written)
// ---------------------------------------------------------------------------

inline void write_section_file(const std::string& path,
                               const std::vector<std::pair<std::string, std::vector<std::string>>>&
                                   sections,
                               bool allow_overwrite = false) {
  if (!allow_overwrite && fs::exists(path))
    throw DataError("split file already exists (splits are immutable): " + path);
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write split file: " + path);
  for (const auto& [name, ids] : sections) {
    out << "#" << name << "\n";
    for (const auto& id : ids) out << id << "\n";
  }
}

inline std::map<std::string, std::vector<std::string>> read_section_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read split file: " + path);
  std::map<std::string, std::vector<std::string>> sections;
  std::string line, current;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      current = line.substr(1);
      sections[current];
    } else if (!current.empty()) {
      sections[current].push_back(line);
    }
  }
  return sections;
}

inline std::string format_ratio(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", ratio);
  return buf;
}

inline std::string split_file_path(const std::string& dir, double ratio, uint64_t seed) {
  return (fs::path(dir) / "splits" /
          (format_ratio(ratio) + "_" + std::to_string(seed) + ".txt"))
      .string();
}

inline std::string holdout_file_path(const std::string& dir, uint64_t seed) {
  return (fs::path(dir) / "splits" / ("holdout_" + std::to_string(seed) + ".txt")).string();
}

inline void write_split_file(const std::string& dir, double ratio, uint64_t seed,
                             const DatasetSplit& split) {
  write_section_file(split_file_path(dir, ratio, seed),
                     {{"labeled", split.labeled_ids}, {"unlabeled", split.unlabeled_ids}});
}

inline DatasetSplit read_split_file(const std::string& dir, double ratio, uint64_t seed) {
  auto sections = read_section_file(split_file_path(dir, ratio, seed));
  DatasetSplit split;
  split.ratio = ratio;
  split.labeled_ids = sections["labeled"];
  split.unlabeled_ids = sections["unlabeled"];
  return split;
}

inline void write_holdout_file(const std::string& dir, uint64_t seed, const HoldoutSplit& h) {
  write_section_file(holdout_file_path(dir, seed),
                     {{"train", h.train_ids}, {"val", h.val_ids}, {"test", h.test_ids}});
}

inline HoldoutSplit read_holdout_file(const std::string& dir, uint64_t seed) {
  auto sections = read_section_file(holdout_file_path(dir, seed));
  HoldoutSplit h;
  h.train_ids = sections["train"];
  h.val_ids = sections["val"];
  h.test_ids = sections["test"];
  return h;
}

}  // namespace ctfs

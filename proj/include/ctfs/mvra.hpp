#pragma once

#include <array>
#include <vector>

#include "ctfs/augment.hpp"
#include "ctfs/teacher_bank.hpp"

namespace ctfs {

// ---------------------------------------------------------------------------
// Grid-pooled class-probability features
// ---------------------------------------------------------------------------

/// Mean class-probability vector per m x m grid cell. Cell (i,j) covers pixel
/// rows [i*m, (i+1)*m) and columns [j*m, (j+1)*m).
struct GridFeatureMap {
  int grid_rows = 0, grid_cols = 0, classes = 0, cell_size = 0;
  std::vector<float> features;  // [i][j][c]

  float* cell(int i, int j) {
    return features.data() + (static_cast<size_t>(i) * grid_cols + j) * classes;
  }
  const float* cell(int i, int j) const {
    return features.data() + (static_cast<size_t>(i) * grid_cols + j) * classes;
  }
};

inline GridFeatureMap grid_pool(const ProbMap& prob, int m) {
  if (m <= 0) throw std::invalid_argument("grid_pool: grid size must be positive");
  if (prob.rows() % m != 0 || prob.cols() % m != 0)
    throw std::invalid_argument("grid_pool: image dimensions must be multiples of the grid size");
  GridFeatureMap g;
  g.grid_rows = prob.rows() / m;
  g.grid_cols = prob.cols() / m;
  g.classes = prob.channels();
  g.cell_size = m;
  g.features.assign(static_cast<size_t>(g.grid_rows) * g.grid_cols * g.classes, 0.0f);
  const double inv = 1.0 / (static_cast<double>(m) * m);
  for (int c = 0; c < g.classes; ++c) {
    for (int i = 0; i < g.grid_rows; ++i) {
      for (int j = 0; j < g.grid_cols; ++j) {
        double acc = 0.0;
        for (int y = i * m; y < (i + 1) * m; ++y)
          for (int x = j * m; x < (j + 1) * m; ++x) acc += prob.at(c, y, x);
        g.cell(i, j)[c] = static_cast<float>(acc * inv);
      }
    }
  }
  return g;
}

namespace detail {

// Cosine similarity with an epsilon-guarded denominator. Probability-vector
// inputs are non-negative, so the result stays in [0,1].
inline double cosine(const float* a, const float* b, int n) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int i = 0; i < n; ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb) + 1e-12);
}

inline void check_same_grid(const GridFeatureMap& a, const GridFeatureMap& b,
                            const char* where) {
  if (a.grid_rows != b.grid_rows || a.grid_cols != b.grid_cols || a.classes != b.classes)
    throw std::invalid_argument(std::string(where) + ": grid shapes differ");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stability, consistency, fusion
// ---------------------------------------------------------------------------

/// Intra-teacher stability: per cell, the mean cosine similarity between the
/// original-image feature and each perturbed-view feature.
inline Grid<float> teacher_stability(const GridFeatureMap& original,
                                     const std::vector<GridFeatureMap>& views) {
  if (views.empty())
    throw std::invalid_argument("teacher_stability: need at least one view");
  for (const auto& v : views) detail::check_same_grid(original, v, "teacher_stability");
  Grid<float> r(original.grid_rows, original.grid_cols, 0.0f);
  for (int i = 0; i < original.grid_rows; ++i) {
    for (int j = 0; j < original.grid_cols; ++j) {
      const float* fo = original.cell(i, j);
      double no = 0.0;
      for (int c = 0; c < original.classes; ++c) no += static_cast<double>(fo[c]) * fo[c];
      if (no < 1e-18)
        throw std::invalid_argument("teacher_stability: zero feature vector");
      double acc = 0.0;
      for (const auto& v : views) acc += detail::cosine(fo, v.cell(i, j), original.classes);
      r.at(i, j) = static_cast<float>(acc / static_cast<double>(views.size()));
    }
  }
  return r;
}

/// Cross-teacher consistency: per cell, the mean cosine similarity over the
/// three unordered teacher pairs, all on the original image.
inline Grid<float> cross_teacher_consistency(const std::array<GridFeatureMap, 3>& f) {
  detail::check_same_grid(f[0], f[1], "cross_teacher_consistency");
  detail::check_same_grid(f[0], f[2], "cross_teacher_consistency");
  Grid<float> out(f[0].grid_rows, f[0].grid_cols, 0.0f);
  for (int i = 0; i < f[0].grid_rows; ++i) {
    for (int j = 0; j < f[0].grid_cols; ++j) {
      const int n = f[0].classes;
      const double c01 = detail::cosine(f[0].cell(i, j), f[1].cell(i, j), n);
      const double c02 = detail::cosine(f[0].cell(i, j), f[2].cell(i, j), n);
      const double c12 = detail::cosine(f[1].cell(i, j), f[2].cell(i, j), n);
      out.at(i, j) = static_cast<float>((c01 + c02 + c12) / 3.0);
    }
  }
  return out;
}

/// Per-grid and per-pixel reliability with the component scores kept for
/// inspection and logging.
struct ReliabilityMap {
  Grid<float> grid_scores;
  Grid<float> pixel_scores;  // m x m block replication of grid_scores
  std::array<Grid<float>, 3> stability;
  Grid<float> consistency;
  Grid<float> penalty;  // delta + (1 - delta) * C
};

inline Grid<float> replicate_blocks(const Grid<float>& grid, int m) {
  Grid<float> out(grid.rows() * m, grid.cols() * m);
  for (int y = 0; y < out.rows(); ++y)
    for (int x = 0; x < out.cols(); ++x) out.at(y, x) = grid.at(y / m, x / m);
  return out;
}

/// Fuses stability and consistency: R = (delta + (1-delta) C) * mean_t r_t.
inline ReliabilityMap fuse_reliability(const std::array<Grid<float>, 3>& stabilities,
                                       const Grid<float>& consistency, float delta,
                                       int cell_size) {
  if (!(delta >= 0.0f && delta <= 1.0f))
    throw std::invalid_argument("fuse_reliability: delta must be in [0,1]");
  for (const auto& s : stabilities)
    if (!s.same_shape(consistency))
      throw std::invalid_argument("fuse_reliability: grid shapes differ");
  ReliabilityMap rel;
  rel.stability = stabilities;
  rel.consistency = consistency;
  rel.penalty = Grid<float>(consistency.rows(), consistency.cols());
  rel.grid_scores = Grid<float>(consistency.rows(), consistency.cols());
  for (int i = 0; i < consistency.rows(); ++i) {
    for (int j = 0; j < consistency.cols(); ++j) {
      const double pi = delta + (1.0 - delta) * consistency.at(i, j);
      const double mean_r =
          (static_cast<double>(stabilities[0].at(i, j)) + stabilities[1].at(i, j) +
           stabilities[2].at(i, j)) /
          3.0;
      rel.penalty.at(i, j) = static_cast<float>(pi);
      rel.grid_scores.at(i, j) = static_cast<float>(pi * mean_r);
    }
  }
  rel.pixel_scores = replicate_blocks(rel.grid_scores, cell_size);
  return rel;
}

// ---------------------------------------------------------------------------
// Full assessment pipeline
// ---------------------------------------------------------------------------

struct MvraConfig {
  int grid_size = 32;  // cell edge in pixels
  int views = 2;       // perturbed views per teacher
  float delta = 0.5f;
};

/// Geometry-preserving perturbed view drawn from one teacher's family.
inline Intensity sample_stability_view(const Intensity& img, TeacherTag tag, uint64_t seed,
                                       const AugmentOptions& aug) {
  switch (tag) {
    case TeacherTag::general:
      return apply_strong(img, seed, aug.view_photometric);
    case TeacherTag::sonar_a: {
      Rng rng(hash_mix(seed, 0xadULL));
      return apply_shadow(img, sample_shadow_params(img.rows(), img.cols(), rng, aug.shadow));
    }
    case TeacherTag::sonar_b: {
      Rng rng(hash_mix(seed, 0xaeULL));
      return apply_attenuation(img, sample_attenuation_params(rng, aug.atten));
    }
  }
  throw std::invalid_argument("sample_stability_view: bad tag");
}

/// Multi-view reliability assessment for one unlabeled image. Always uses all
/// three teachers, regardless of which one is active in the rotation:
/// per teacher one original-image prediction plus `views` geometry-preserving
/// perturbed views, pooled to grids, then stability + consistency + fusion.
/// Deterministic for a fixed seed.
inline ReliabilityMap assess(const SegNet& net, const TeacherBank& bank, const Intensity& img,
                             const MvraConfig& cfg, uint64_t seed,
                             const AugmentOptions& aug = {}) {
  if (img.rows() % cfg.grid_size != 0 || img.cols() % cfg.grid_size != 0)
    throw std::invalid_argument("assess: image dimensions must be multiples of the grid size");
  std::array<GridFeatureMap, 3> originals;
  std::array<Grid<float>, 3> stabilities;
  for (int t = 0; t < 3; ++t) {
    const auto tag = static_cast<TeacherTag>(t);
    const auto weights = SegNet::cast_params<float>(bank[tag]);
    originals[t] = grid_pool(net.predict_cast(weights, img), cfg.grid_size);
    std::vector<GridFeatureMap> view_features;
    view_features.reserve(cfg.views);
    for (int k = 0; k < cfg.views; ++k) {
      const Intensity view =
          sample_stability_view(img, tag, hash_mix(seed, 0x71e3ULL, t, k), aug);
      view_features.push_back(grid_pool(net.predict_cast(weights, view), cfg.grid_size));
    }
    stabilities[t] = teacher_stability(originals[t], view_features);
  }
  const Grid<float> consistency = cross_teacher_consistency(originals);
  return fuse_reliability(stabilities, consistency, cfg.delta, cfg.grid_size);
}

}  // namespace ctfs

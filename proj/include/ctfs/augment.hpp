#pragma once

#include <cmath>
#include <utility>

#include "ctfs/common.hpp"

namespace ctfs {

// ---------------------------------------------------------------------------
// Acoustic shadow perturbation
// ---------------------------------------------------------------------------

/// Sector-shaped shadow cast from an origin pixel. The sector spans angles
/// [theta, theta + delta_theta] (wrapped) out to a maximum radius.
struct ShadowParams {
  float x0 = 0.0f;          // origin column
  float y0 = 0.0f;          // origin row
  float theta = 0.0f;       // start angle, radians
  float delta_theta = 0.0f; // angular span, radians, (0, 2*pi]
  float alpha = 0.0f;       // shadow intensity, [0,1]
  float radius = 0.0f;      // maximum shadow radius, pixels

  static float default_radius(int rows, int cols) {
    return 0.2f * static_cast<float>(std::min(rows, cols));
  }
};

/// Angular membership with wrap-around: is angle phi inside
/// [theta, theta + span] on the circle? Inclusive at both ends.
inline bool angle_in_sector(double phi, double theta, double span) {
  double a = std::fmod(phi - theta, kTwoPi);
  if (a < 0) a += kTwoPi;
  return a <= span;
}

/// Boolean membership mask of the shadow sector: a pixel (x, y) belongs iff
/// its angle from the origin falls inside the wrapped span and its distance
/// does not exceed the radius.
inline BoolMask shadow_region(const ShadowParams& p, int rows, int cols) {
  if (p.x0 < 0 || p.x0 > cols - 1 || p.y0 < 0 || p.y0 > rows - 1)
    throw std::invalid_argument("shadow_region: origin outside image bounds");
  BoolMask mask(rows, cols, 0);
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      const double dx = x - static_cast<double>(p.x0);
      const double dy = y - static_cast<double>(p.y0);
      const double d = std::sqrt(dx * dx + dy * dy);
      if (d > p.radius) continue;
      const double phi = std::atan2(dy, dx);
      if (angle_in_sector(phi, p.theta, p.delta_theta)) mask.at(y, x) = 1;
    }
  }
  return mask;
}

/// Darkens the shadow sector multiplicatively. The factor rises linearly from
/// (1 - alpha) at the origin to 1 at the maximum radius; pixels outside the
/// sector pass through untouched.
inline Intensity apply_shadow(const Intensity& img, const ShadowParams& p) {
  Intensity out = img;
  const int rows = img.rows(), cols = img.cols();
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      const double dx = x - static_cast<double>(p.x0);
      const double dy = y - static_cast<double>(p.y0);
      const double d = std::sqrt(dx * dx + dy * dy);
      if (d > p.radius) continue;
      const double phi = std::atan2(dy, dx);
      if (!angle_in_sector(phi, p.theta, p.delta_theta)) continue;
      const double factor = 1.0 - p.alpha * (1.0 - d / p.radius);
      out.at(y, x) = clamp01(static_cast<float>(img.at(y, x) * factor));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Energy attenuation perturbation
// ---------------------------------------------------------------------------

struct AttenuationParams {
  float gamma = 0.0f;  // attenuation intensity, [0,1]
};

/// Scales row y by (1 - gamma * y / H); row 0 is unchanged and the factor is
/// non-increasing with depth.
inline Intensity apply_attenuation(const Intensity& img, const AttenuationParams& p) {
  Intensity out = img;
  const int rows = img.rows(), cols = img.cols();
  for (int y = 0; y < rows; ++y) {
    const float factor = 1.0f - p.gamma * static_cast<float>(y) / static_cast<float>(rows);
    const float* src = img.row(y);
    float* dst = out.row(y);
    for (int x = 0; x < cols; ++x) dst[x] = clamp01(src[x] * factor);
  }
  return out;
}

// ---------------------------------------------------------------------------
// General weak augmentation: random resize + crop + horizontal flip
// ---------------------------------------------------------------------------

/// Captures one sampled geometric transform so it can be replayed bit-exactly
/// on any aligned array (mask, reliability map, ...).
struct GeometryRecord {
  int src_rows = 0, src_cols = 0;
  float scale = 1.0f;              // resize factor, >= 1 keeps the crop valid
  int resized_rows = 0, resized_cols = 0;
  int crop_row = 0, crop_col = 0;  // top-left of the crop in the resized image
  int out_rows = 0, out_cols = 0;
  bool hflip = false;

  static GeometryRecord identity(int rows, int cols) {
    GeometryRecord g;
    g.src_rows = rows;
    g.src_cols = cols;
    g.resized_rows = rows;
    g.resized_cols = cols;
    g.out_rows = rows;
    g.out_cols = cols;
    return g;
  }
  bool is_identity() const {
    return scale == 1.0f && crop_row == 0 && crop_col == 0 && !hflip &&
           out_rows == src_rows && out_cols == src_cols;
  }
};

struct GeneralWeakConfig {
  float scale_min = 1.0f;
  float scale_max = 1.5f;
  float hflip_prob = 0.5f;
};

inline GeometryRecord sample_weak_geometry(int rows, int cols, Rng& rng,
                                           const GeneralWeakConfig& cfg = {}) {
  GeometryRecord g;
  g.src_rows = rows;
  g.src_cols = cols;
  g.scale = static_cast<float>(rng.uniform(cfg.scale_min, cfg.scale_max));
  g.resized_rows = std::max(1, static_cast<int>(std::lround(rows * g.scale)));
  g.resized_cols = std::max(1, static_cast<int>(std::lround(cols * g.scale)));
  g.out_rows = rows;
  g.out_cols = cols;
  if (g.resized_rows < g.out_rows || g.resized_cols < g.out_cols)
    throw std::invalid_argument("sample_weak_geometry: crop larger than resized image");
  g.crop_row = rng.uniform_int(0, g.resized_rows - g.out_rows);
  g.crop_col = rng.uniform_int(0, g.resized_cols - g.out_cols);
  g.hflip = rng.bernoulli(cfg.hflip_prob);
  return g;
}

namespace detail {

// Source coordinate (continuous) for resized pixel i with half-pixel centers.
inline double resize_src_coord(int i, double scale) { return (i + 0.5) / scale - 0.5; }

}  // namespace detail

/// Replays a geometry record with bilinear interpolation (intensity images).
inline Intensity replay_geometry(const Intensity& img, const GeometryRecord& g) {
  if (img.rows() != g.src_rows || img.cols() != g.src_cols)
    throw std::invalid_argument("replay_geometry: image shape does not match record");
  if (g.crop_row + g.out_rows > g.resized_rows || g.crop_col + g.out_cols > g.resized_cols)
    throw std::invalid_argument("replay_geometry: crop larger than resized image");
  Intensity out(g.out_rows, g.out_cols);
  const double sy = static_cast<double>(g.resized_rows) / g.src_rows;
  const double sx = static_cast<double>(g.resized_cols) / g.src_cols;
  for (int r = 0; r < g.out_rows; ++r) {
    const double fy = std::clamp(detail::resize_src_coord(r + g.crop_row, sy), 0.0,
                                 static_cast<double>(g.src_rows - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, g.src_rows - 1);
    const double wy = fy - y0;
    for (int c = 0; c < g.out_cols; ++c) {
      const int cc = g.hflip ? g.out_cols - 1 - c : c;
      const double fx = std::clamp(detail::resize_src_coord(cc + g.crop_col, sx), 0.0,
                                   static_cast<double>(g.src_cols - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, g.src_cols - 1);
      const double wx = fx - x0;
      const double v = (1 - wy) * ((1 - wx) * img.at(y0, x0) + wx * img.at(y0, x1)) +
                       wy * ((1 - wx) * img.at(y1, x0) + wx * img.at(y1, x1));
      out.at(r, c) = static_cast<float>(v);
    }
  }
  return out;
}

/// Replays a geometry record with nearest-neighbor sampling (masks, score maps).
template <typename T>
inline Grid<T> replay_geometry_nearest(const Grid<T>& img, const GeometryRecord& g) {
  if (img.rows() != g.src_rows || img.cols() != g.src_cols)
    throw std::invalid_argument("replay_geometry_nearest: shape does not match record");
  if (g.crop_row + g.out_rows > g.resized_rows || g.crop_col + g.out_cols > g.resized_cols)
    throw std::invalid_argument("replay_geometry_nearest: crop larger than resized image");
  Grid<T> out(g.out_rows, g.out_cols);
  const double sy = static_cast<double>(g.resized_rows) / g.src_rows;
  const double sx = static_cast<double>(g.resized_cols) / g.src_cols;
  for (int r = 0; r < g.out_rows; ++r) {
    const int y = std::clamp(
        static_cast<int>(std::lround(detail::resize_src_coord(r + g.crop_row, sy))), 0,
        g.src_rows - 1);
    for (int c = 0; c < g.out_cols; ++c) {
      const int cc = g.hflip ? g.out_cols - 1 - c : c;
      const int x = std::clamp(
          static_cast<int>(std::lround(detail::resize_src_coord(cc + g.crop_col, sx))), 0,
          g.src_cols - 1);
      out.at(r, c) = img.at(y, x);
    }
  }
  return out;
}

struct WeakAugResult {
  Intensity image;
  MaskImage mask;  // empty when the input had no mask
  GeometryRecord geometry;
};

/// Weak geometric augmentation applied identically to image and mask.
inline WeakAugResult apply_general_weak(const Intensity& img, const MaskImage& mask,
                                        uint64_t seed, const GeneralWeakConfig& cfg = {}) {
  Rng rng(hash_mix(seed, 0x6e7a1ULL));
  GeometryRecord g = sample_weak_geometry(img.rows(), img.cols(), rng, cfg);
  WeakAugResult res;
  res.geometry = g;
  res.image = replay_geometry(img, g);
  if (!mask.empty()) {
    if (!mask.same_shape(img))
      throw std::invalid_argument("apply_general_weak: image/mask shape mismatch");
    res.mask = replay_geometry_nearest(mask, g);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Strong augmentation: photometric only, pixel grid unchanged
// ---------------------------------------------------------------------------

struct StrongAugConfig {
  float brightness = 0.2f;      // additive jitter, +- range
  float contrast = 0.3f;        // multiplicative jitter around the mean, +- range
  float blur_prob = 0.5f;
  float blur_sigma_min = 0.3f;
  float blur_sigma_max = 1.2f;

  static StrongAugConfig disabled() { return {0.0f, 0.0f, 0.0f, 0.0f, 0.0f}; }
};

/// Separable Gaussian blur with clamped borders. sigma <= 0 is the identity.
inline Intensity gaussian_blur(const Intensity& img, double sigma) {
  const int radius = static_cast<int>(std::ceil(2.0 * sigma));
  if (radius < 1) return img;
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (double& k : kernel) k /= norm;

  const int rows = img.rows(), cols = img.cols();
  Intensity tmp(rows, cols), out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * img.at(r, std::clamp(c + i, 0, cols - 1));
      tmp.at(r, c) = static_cast<float>(acc);
    }
  }
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * tmp.at(std::clamp(r + i, 0, rows - 1), c);
      out.at(r, c) = static_cast<float>(acc);
    }
  }
  return out;
}

/// Photometric strong perturbation: brightness/contrast jitter plus an
/// optional Gaussian blur. Single-channel input makes grayscaling a no-op.
/// Never moves pixels, so per-pixel correspondence with the weak view holds.
inline Intensity apply_strong(const Intensity& img, uint64_t seed,
                              const StrongAugConfig& cfg = {}) {
  Rng rng(hash_mix(seed, 0x57a0ULL));
  const double b = cfg.brightness > 0 ? rng.uniform(-cfg.brightness, cfg.brightness) : 0.0;
  const double c = cfg.contrast > 0 ? rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast) : 1.0;
  const bool do_blur = cfg.blur_prob > 0 && rng.bernoulli(cfg.blur_prob);
  const double sigma = do_blur ? rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max) : 0.0;

  double mean = 0.0;
  for (size_t i = 0; i < img.size(); ++i) mean += img.data()[i];
  mean /= static_cast<double>(img.size());

  Intensity out(img.rows(), img.cols());
  for (size_t i = 0; i < img.size(); ++i) {
    const double v = mean + (img.data()[i] - mean) * c + b;
    out.data()[i] = clamp01(static_cast<float>(v));
  }
  if (do_blur) out = gaussian_blur(out, sigma);
  return out;
}

// ---------------------------------------------------------------------------
// Sampling of sonar perturbation parameters
// ---------------------------------------------------------------------------

struct ShadowAugConfig {
  float alpha_min = 0.3f;
  float alpha_max = 0.7f;
  float span_min_deg = 15.0f;
  float span_max_deg = 60.0f;
};

struct AttenAugConfig {
  float gamma_min = 0.2f;
  float gamma_max = 0.5f;
};

inline ShadowParams sample_shadow_params(int rows, int cols, Rng& rng,
                                         const ShadowAugConfig& cfg = {}) {
  ShadowParams p;
  p.x0 = static_cast<float>(rng.uniform(0.0, cols - 1));
  p.y0 = static_cast<float>(rng.uniform(0.0, rows - 1));
  p.theta = static_cast<float>(rng.uniform(0.0, kTwoPi));
  p.delta_theta = static_cast<float>(rng.uniform(cfg.span_min_deg, cfg.span_max_deg) * kPi / 180.0);
  p.alpha = static_cast<float>(rng.uniform(cfg.alpha_min, cfg.alpha_max));
  p.radius = ShadowParams::default_radius(rows, cols);
  return p;
}

inline AttenuationParams sample_attenuation_params(Rng& rng, const AttenAugConfig& cfg = {}) {
  return {static_cast<float>(rng.uniform(cfg.gamma_min, cfg.gamma_max))};
}

/// All augmentation knobs in one place; every field is configurable from the
/// experiment config file.
struct AugmentOptions {
  GeneralWeakConfig weak;
  StrongAugConfig strong;
  ShadowAugConfig shadow;
  AttenAugConfig atten;
  // photometric strength for reliability-view perturbations of the general
  // teacher (milder than the student's strong set)
  StrongAugConfig view_photometric{0.1f, 0.15f, 1.0f, 0.2f, 0.8f};
  // whether sonar teachers stack their specialty operator on top of the
  // general geometric transform
  bool sonar_weak_geometric = true;
};

}  // namespace ctfs

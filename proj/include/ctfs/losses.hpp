#pragma once

#include <cmath>
#include <vector>

#include "ctfs/common.hpp"

namespace ctfs {

struct LossConfig {
  float lambda_u = 1.0f;  // unsupervised weight
  float psi = 0.4f;       // reliability gate threshold
  bool soft_targets = false;
};

struct LossReport {
  double total = 0.0;
  double sup = 0.0;
  double unsup = 0.0;
  double gated_fraction = 0.0;  // share of unlabeled pixels with an open gate
};

namespace detail {

// cross-entropy floor: probabilities are clamped before the log
inline double clamped_log(double p) { return std::log(std::clamp(p, 1e-8, 1.0)); }

}  // namespace detail

/// Supervised loss: mean over images of the per-pixel cross-entropy against
/// ground truth, each image normalized by its pixel count.
inline double supervised_loss(const std::vector<const ProbMap*>& preds,
                              const std::vector<const MaskImage*>& gts) {
  if (preds.size() != gts.size() || preds.empty())
    throw std::invalid_argument("supervised_loss: prediction/label lists misaligned");
  double total = 0.0;
  for (size_t n = 0; n < preds.size(); ++n) {
    const ProbMap& p = *preds[n];
    const MaskImage& y = *gts[n];
    if (p.rows() != y.rows() || p.cols() != y.cols())
      throw std::invalid_argument("supervised_loss: shape mismatch");
    const size_t plane = p.plane();
    double img_loss = 0.0;
    for (size_t i = 0; i < plane; ++i) {
      const int cls = y.data()[i];
      if (cls >= p.channels())
        throw std::invalid_argument("supervised_loss: label index out of range");
      img_loss -= detail::clamped_log(p.data()[cls * plane + i]);
    }
    total += img_loss / static_cast<double>(plane);
  }
  return total / static_cast<double>(preds.size());
}

struct UnsupResult {
  double loss = 0.0;
  double gated_fraction = 0.0;
};

/// Unsupervised loss: per-pixel cross-entropy against the pseudo-label,
/// weighted by the pixel reliability score and masked by the strict gate
/// R > psi. The denominator is the full pixel count, not the gated count.
inline UnsupResult unsupervised_loss(const std::vector<const ProbMap*>& student_preds,
                                     const std::vector<const MaskImage*>& pseudo_labels,
                                     const std::vector<const Grid<float>*>& reliability,
                                     const LossConfig& cfg) {
  if (student_preds.size() != pseudo_labels.size() ||
      student_preds.size() != reliability.size())
    throw std::invalid_argument("unsupervised_loss: list sizes misaligned");
  UnsupResult res;
  if (student_preds.empty()) return res;
  size_t gated = 0, total_px = 0;
  for (size_t n = 0; n < student_preds.size(); ++n) {
    const ProbMap& p = *student_preds[n];
    const MaskImage& y = *pseudo_labels[n];
    const Grid<float>& r = *reliability[n];
    if (p.rows() != y.rows() || p.cols() != y.cols() || !r.same_shape(y))
      throw std::invalid_argument("unsupervised_loss: shape mismatch");
    const size_t plane = p.plane();
    double img_loss = 0.0;
    for (size_t i = 0; i < plane; ++i) {
      const float rel = r.data()[i];
      if (!(rel > cfg.psi)) continue;
      ++gated;
      const int cls = y.data()[i];
      img_loss -= rel * detail::clamped_log(p.data()[cls * plane + i]);
    }
    total_px += plane;
    res.loss += img_loss / static_cast<double>(plane);
  }
  res.loss /= static_cast<double>(student_preds.size());
  res.gated_fraction =
      total_px == 0 ? 0.0 : static_cast<double>(gated) / static_cast<double>(total_px);
  return res;
}

/// Soft-target variant: reliability-weighted cross-entropy of the student's
/// probabilities against the teacher's full distribution.
inline UnsupResult unsupervised_loss_soft(const std::vector<const ProbMap*>& student_preds,
                                          const std::vector<const ProbMap*>& teacher_preds,
                                          const std::vector<const Grid<float>*>& reliability,
                                          const LossConfig& cfg) {
  if (student_preds.size() != teacher_preds.size() ||
      student_preds.size() != reliability.size())
    throw std::invalid_argument("unsupervised_loss_soft: list sizes misaligned");
  UnsupResult res;
  if (student_preds.empty()) return res;
  size_t gated = 0, total_px = 0;
  for (size_t n = 0; n < student_preds.size(); ++n) {
    const ProbMap& p = *student_preds[n];
    const ProbMap& q = *teacher_preds[n];
    const Grid<float>& r = *reliability[n];
    const size_t plane = p.plane();
    double img_loss = 0.0;
    for (size_t i = 0; i < plane; ++i) {
      const float rel = r.data()[i];
      if (!(rel > cfg.psi)) continue;
      ++gated;
      double ce = 0.0;
      for (int c = 0; c < p.channels(); ++c)
        ce -= q.data()[c * plane + i] * detail::clamped_log(p.data()[c * plane + i]);
      img_loss += rel * ce;
    }
    total_px += plane;
    res.loss += img_loss / static_cast<double>(plane);
  }
  res.loss /= static_cast<double>(student_preds.size());
  res.gated_fraction =
      total_px == 0 ? 0.0 : static_cast<double>(gated) / static_cast<double>(total_px);
  return res;
}

/// Combined objective: total = sup + lambda_u * unsup.
inline LossReport total_loss(double sup, const UnsupResult& unsup, const LossConfig& cfg) {
  if (!std::isfinite(sup) || !std::isfinite(unsup.loss))
    throw TrainError("total_loss: non-finite loss component");
  LossReport rep;
  rep.sup = sup;
  rep.unsup = unsup.loss;
  rep.gated_fraction = unsup.gated_fraction;
  rep.total = sup + static_cast<double>(cfg.lambda_u) * unsup.loss;
  return rep;
}

// ---------------------------------------------------------------------------
// Loss gradients w.r.t. logits (softmax + cross-entropy fused)
// ---------------------------------------------------------------------------

/// dL/dlogits for hard-label cross-entropy scaled by `scale` and an optional
/// per-pixel weight map: (p - onehot(y)) * w * scale.
inline Tensor3 ce_logit_grad(const ProbMap& probs, const MaskImage& labels,
                             const Grid<float>* pixel_weights, double scale) {
  Tensor3 dl(probs.channels(), probs.rows(), probs.cols(), 0.0f);
  const size_t plane = probs.plane();
  for (size_t i = 0; i < plane; ++i) {
    const float w = pixel_weights ? pixel_weights->data()[i] : 1.0f;
    if (w == 0.0f) continue;
    const float s = static_cast<float>(w * scale);
    const int cls = labels.data()[i];
    for (int c = 0; c < probs.channels(); ++c)
      dl.data()[c * plane + i] = probs.data()[c * plane + i] * s;
    dl.data()[cls * plane + i] -= s;
  }
  return dl;
}

/// Soft-target counterpart: (p - q) * w * scale.
inline Tensor3 ce_logit_grad_soft(const ProbMap& probs, const ProbMap& target,
                                  const Grid<float>* pixel_weights, double scale) {
  Tensor3 dl(probs.channels(), probs.rows(), probs.cols(), 0.0f);
  const size_t plane = probs.plane();
  for (size_t i = 0; i < plane; ++i) {
    const float w = pixel_weights ? pixel_weights->data()[i] : 1.0f;
    if (w == 0.0f) continue;
    const float s = static_cast<float>(w * scale);
    for (int c = 0; c < probs.channels(); ++c)
      dl.data()[c * plane + i] =
          (probs.data()[c * plane + i] - target.data()[c * plane + i]) * s;
  }
  return dl;
}

/// Reliability weights with the gate applied: w = R * [R > psi].
inline Grid<float> gated_weights(const Grid<float>& reliability, float psi) {
  Grid<float> w(reliability.rows(), reliability.cols());
  for (size_t i = 0; i < w.size(); ++i) {
    const float r = reliability.data()[i];
    w.data()[i] = r > psi ? r : 0.0f;
  }
  return w;
}

}  // namespace ctfs

#pragma once

#include <cstdint>
#include <vector>

#include "ctfs/common.hpp"

namespace ctfs {

/// Pixel confusion counts, rows = ground truth, cols = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes)
      : classes_(num_classes),
        counts_(static_cast<size_t>(num_classes) * num_classes, 0) {
    if (num_classes <= 0)
      throw std::invalid_argument("ConfusionMatrix: need a positive class count");
  }

  int num_classes() const { return classes_; }
  int64_t at(int gt, int pred) const { return counts_[static_cast<size_t>(gt) * classes_ + pred]; }
  int64_t& at(int gt, int pred) { return counts_[static_cast<size_t>(gt) * classes_ + pred]; }

  int64_t total() const {
    int64_t t = 0;
    for (int64_t c : counts_) t += c;
    return t;
  }

  void accumulate(const MaskImage& gt, const MaskImage& pred) {
    if (!gt.same_shape(pred))
      throw std::invalid_argument("ConfusionMatrix::accumulate: shape mismatch");
    for (size_t i = 0; i < gt.size(); ++i) {
      const int g = gt.data()[i], p = pred.data()[i];
      if (g >= classes_ || p >= classes_)
        throw std::invalid_argument("ConfusionMatrix::accumulate: class index out of range");
      ++at(g, p);
    }
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    if (o.classes_ != classes_)
      throw std::invalid_argument("ConfusionMatrix: class count mismatch");
    for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    return *this;
  }

 private:
  int classes_;
  std::vector<int64_t> counts_;
};

struct IouReport {
  std::vector<double> per_class;  // NaN for classes absent from both gt and pred
  std::vector<bool> present;
  double miou = 0.0;
};

/// Per-class IoU = diag / (row + col - diag); classes absent from both ground
/// truth and prediction are excluded from the mean. `include_background`
/// drops class 0 from the mean when false.
inline IouReport miou(const ConfusionMatrix& cm, bool include_background = true) {
  const int C = cm.num_classes();
  if (cm.total() == 0) throw std::invalid_argument("miou: empty confusion matrix");
  IouReport rep;
  rep.per_class.assign(C, std::nan(""));
  rep.present.assign(C, false);
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < C; ++c) {
    int64_t row = 0, col = 0;
    for (int k = 0; k < C; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    const int64_t diag = cm.at(c, c);
    const int64_t uni = row + col - diag;
    if (uni == 0) continue;  // absent everywhere
    rep.present[c] = true;
    rep.per_class[c] = static_cast<double>(diag) / static_cast<double>(uni);
    if (c == 0 && !include_background) continue;
    sum += rep.per_class[c];
    ++counted;
  }
  rep.miou = counted == 0 ? 0.0 : sum / counted;
  return rep;
}

}  // namespace ctfs

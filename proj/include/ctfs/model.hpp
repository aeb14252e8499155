#pragma once

#include <array>
#include <cstring>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ctfs/common.hpp"

namespace ctfs {

// ---------------------------------------------------------------------------
// Flat named parameter collection (substrate for EMA averaging and AdamW)
// ---------------------------------------------------------------------------

struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;

  size_t size() const { return values.size(); }
};

struct ModelParams {
  std::vector<NamedArray> arrays;

  size_t total_size() const {
    size_t n = 0;
    for (const auto& a : arrays) n += a.size();
    return n;
  }
  bool same_structure(const ModelParams& o) const {
    if (arrays.size() != o.arrays.size()) return false;
    for (size_t i = 0; i < arrays.size(); ++i)
      if (arrays[i].name != o.arrays[i].name || arrays[i].shape != o.arrays[i].shape)
        return false;
    return true;
  }
  ModelParams zeros_like() const {
    ModelParams z = *this;
    for (auto& a : z.arrays) std::fill(a.values.begin(), a.values.end(), 0.0);
    return z;
  }
  const NamedArray& by_name(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return a;
    throw std::invalid_argument("ModelParams: no array named " + name);
  }
};

// ---------------------------------------------------------------------------
// Low-level kernels, templated on the compute scalar
// ---------------------------------------------------------------------------

namespace nn {

// Dot product with eight independent partial sums so the loop vectorizes.
template <typename T>
inline T dot_row(const T* a, const T* b, int len) {
  T s0{}, s1{}, s2{}, s3{}, s4{}, s5{}, s6{}, s7{};
  int i = 0;
  for (; i + 8 <= len; i += 8) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
    s4 += a[i + 4] * b[i + 4];
    s5 += a[i + 5] * b[i + 5];
    s6 += a[i + 6] * b[i + 6];
    s7 += a[i + 7] * b[i + 7];
  }
  T s = ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7));
  for (; i < len; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
inline T sum_row(const T* a, int len) {
  T s0{}, s1{}, s2{}, s3{};
  int i = 0;
  for (; i + 4 <= len; i += 4) {
    s0 += a[i];
    s1 += a[i + 1];
    s2 += a[i + 2];
    s3 += a[i + 3];
  }
  T s = (s0 + s1) + (s2 + s3);
  for (; i < len; ++i) s += a[i];
  return s;
}

template <typename T>
void conv3x3_forward(const Tensor3T<T>& in, const T* w, const T* b, Tensor3T<T>& out) {
  const int H = in.rows(), W = in.cols(), CI = in.channels(), CO = out.channels();
  for (int co = 0; co < CO; ++co) {
    T* oc = out.channel(co);
    std::fill(oc, oc + in.plane(), b ? b[co] : T(0));
    for (int ci = 0; ci < CI; ++ci) {
      const T* icp = in.channel(ci);
      const T* wk = w + (co * CI + ci) * 9;
      for (int ky = -1; ky <= 1; ++ky) {
        const int y_lo = std::max(0, -ky), y_hi = H - 1 - std::max(0, ky);
        for (int kx = -1; kx <= 1; ++kx) {
          const T wv = wk[(ky + 1) * 3 + (kx + 1)];
          const int x_lo = std::max(0, -kx);
          const int len = W - std::abs(kx);
          for (int y = y_lo; y <= y_hi; ++y) {
            T* orow = oc + static_cast<size_t>(y) * W + x_lo;
            const T* irow = icp + static_cast<size_t>(y + ky) * W + (x_lo + kx);
            for (int i = 0; i < len; ++i) orow[i] += wv * irow[i];
          }
        }
      }
    }
  }
}

template <typename T>
void conv3x3_backward_input(const Tensor3T<T>& dout, const T* w, Tensor3T<T>& din) {
  const int H = din.rows(), W = din.cols(), CI = din.channels(), CO = dout.channels();
  din.fill(T(0));
  for (int co = 0; co < CO; ++co) {
    const T* doc = dout.channel(co);
    for (int ci = 0; ci < CI; ++ci) {
      T* dic = din.channel(ci);
      const T* wk = w + (co * CI + ci) * 9;
      for (int ky = -1; ky <= 1; ++ky) {
        const int y_lo = std::max(0, -ky), y_hi = H - 1 - std::max(0, ky);
        for (int kx = -1; kx <= 1; ++kx) {
          const T wv = wk[(ky + 1) * 3 + (kx + 1)];
          const int x_lo = std::max(0, -kx);
          const int len = W - std::abs(kx);
          for (int y = y_lo; y <= y_hi; ++y) {
            const T* dorow = doc + static_cast<size_t>(y) * W + x_lo;
            T* dirow = dic + static_cast<size_t>(y + ky) * W + (x_lo + kx);
            for (int i = 0; i < len; ++i) dirow[i] += wv * dorow[i];
          }
        }
      }
    }
  }
}

template <typename T>
void conv3x3_backward_params(const Tensor3T<T>& in, const Tensor3T<T>& dout, double* dw,
                             double* db) {
  const int H = in.rows(), W = in.cols(), CI = in.channels(), CO = dout.channels();
  for (int co = 0; co < CO; ++co) {
    const T* doc = dout.channel(co);
    if (db) {
      double acc = 0.0;
      for (int y = 0; y < dout.rows(); ++y)
        acc += static_cast<double>(sum_row(doc + static_cast<size_t>(y) * W, W));
      db[co] += acc;
    }
    for (int ci = 0; ci < CI; ++ci) {
      const T* icp = in.channel(ci);
      double* dwk = dw + (co * CI + ci) * 9;
      for (int ky = -1; ky <= 1; ++ky) {
        const int y_lo = std::max(0, -ky), y_hi = H - 1 - std::max(0, ky);
        for (int kx = -1; kx <= 1; ++kx) {
          const int x_lo = std::max(0, -kx);
          const int len = W - std::abs(kx);
          double acc = 0.0;
          for (int y = y_lo; y <= y_hi; ++y) {
            const T* dorow = doc + static_cast<size_t>(y) * W + x_lo;
            const T* irow = icp + static_cast<size_t>(y + ky) * W + (x_lo + kx);
            acc += static_cast<double>(dot_row(dorow, irow, len));
          }
          dwk[(ky + 1) * 3 + (kx + 1)] += acc;
        }
      }
    }
  }
}

template <typename T>
void conv1x1_forward(const Tensor3T<T>& in, const T* w, const T* b, Tensor3T<T>& out,
                     bool accumulate) {
  const int CI = in.channels(), CO = out.channels();
  const size_t plane = in.plane();
  for (int co = 0; co < CO; ++co) {
    T* oc = out.channel(co);
    if (!accumulate) std::fill(oc, oc + plane, b ? b[co] : T(0));
    for (int ci = 0; ci < CI; ++ci) {
      const T wv = w[co * CI + ci];
      const T* icp = in.channel(ci);
      for (size_t i = 0; i < plane; ++i) oc[i] += wv * icp[i];
    }
  }
}

template <typename T>
void conv1x1_backward_input(const Tensor3T<T>& dout, const T* w, Tensor3T<T>& din) {
  const int CI = din.channels(), CO = dout.channels();
  const size_t plane = din.plane();
  din.fill(T(0));
  for (int co = 0; co < CO; ++co) {
    const T* doc = dout.channel(co);
    for (int ci = 0; ci < CI; ++ci) {
      const T wv = w[co * CI + ci];
      T* dic = din.channel(ci);
      for (size_t i = 0; i < plane; ++i) dic[i] += wv * doc[i];
    }
  }
}

template <typename T>
void conv1x1_backward_params(const Tensor3T<T>& in, const Tensor3T<T>& dout, double* dw,
                             double* db) {
  const int CI = in.channels(), CO = dout.channels();
  const size_t plane = in.plane();
  for (int co = 0; co < CO; ++co) {
    const T* doc = dout.channel(co);
    if (db) db[co] += static_cast<double>(sum_row(doc, static_cast<int>(plane)));
    for (int ci = 0; ci < CI; ++ci) {
      const T* icp = in.channel(ci);
      dw[co * CI + ci] += static_cast<double>(dot_row(doc, icp, static_cast<int>(plane)));
    }
  }
}

template <typename T>
void relu_inplace(Tensor3T<T>& t) {
  T* p = t.data();
  for (size_t i = 0; i < t.size(); ++i) p[i] = p[i] > T(0) ? p[i] : T(0);
}

// Gradient through ReLU using the post-activation values.
template <typename T>
void relu_backward_inplace(Tensor3T<T>& grad, const Tensor3T<T>& activated) {
  T* g = grad.data();
  const T* a = activated.data();
  for (size_t i = 0; i < grad.size(); ++i)
    if (a[i] <= T(0)) g[i] = T(0);
}

template <typename T>
Tensor3T<T> avgpool2_forward(const Tensor3T<T>& in) {
  Tensor3T<T> out(in.channels(), in.rows() / 2, in.cols() / 2);
  for (int c = 0; c < in.channels(); ++c) {
    const T* ic = in.channel(c);
    T* oc = out.channel(c);
    const int W = in.cols(), OW = out.cols();
    for (int y = 0; y < out.rows(); ++y)
      for (int x = 0; x < OW; ++x) {
        const T* r0 = ic + static_cast<size_t>(2 * y) * W + 2 * x;
        const T* r1 = r0 + W;
        oc[static_cast<size_t>(y) * OW + x] = T(0.25) * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  }
  return out;
}

template <typename T>
Tensor3T<T> avgpool2_backward(const Tensor3T<T>& dout, int in_rows, int in_cols) {
  Tensor3T<T> din(dout.channels(), in_rows, in_cols, T(0));
  for (int c = 0; c < dout.channels(); ++c) {
    const T* doc = dout.channel(c);
    T* dic = din.channel(c);
    const int W = in_cols, OW = dout.cols();
    for (int y = 0; y < dout.rows(); ++y)
      for (int x = 0; x < OW; ++x) {
        const T g = T(0.25) * doc[static_cast<size_t>(y) * OW + x];
        T* r0 = dic + static_cast<size_t>(2 * y) * W + 2 * x;
        T* r1 = r0 + W;
        r0[0] += g;
        r0[1] += g;
        r1[0] += g;
        r1[1] += g;
      }
  }
  return din;
}

template <typename T>
Tensor3T<T> upsample2_forward(const Tensor3T<T>& in) {
  Tensor3T<T> out(in.channels(), in.rows() * 2, in.cols() * 2);
  for (int c = 0; c < in.channels(); ++c) {
    const T* ic = in.channel(c);
    T* oc = out.channel(c);
    const int IW = in.cols(), OW = out.cols();
    for (int y = 0; y < out.rows(); ++y) {
      const T* irow = ic + static_cast<size_t>(y / 2) * IW;
      T* orow = oc + static_cast<size_t>(y) * OW;
      for (int x = 0; x < OW; ++x) orow[x] = irow[x / 2];
    }
  }
  return out;
}

template <typename T>
Tensor3T<T> upsample2_backward(const Tensor3T<T>& dout) {
  Tensor3T<T> din(dout.channels(), dout.rows() / 2, dout.cols() / 2, T(0));
  for (int c = 0; c < dout.channels(); ++c) {
    const T* doc = dout.channel(c);
    T* dic = din.channel(c);
    const int IW = din.cols(), OW = dout.cols();
    for (int y = 0; y < dout.rows(); ++y) {
      T* drow = dic + static_cast<size_t>(y / 2) * IW;
      const T* dorow = doc + static_cast<size_t>(y) * OW;
      for (int x = 0; x < OW; ++x) drow[x / 2] += dorow[x];
    }
  }
  return din;
}

template <typename T>
void softmax_channels(Tensor3T<T>& t) {
  const int C = t.channels();
  const size_t plane = t.plane();
  for (size_t i = 0; i < plane; ++i) {
    T mx = t.data()[i];
    for (int c = 1; c < C; ++c) mx = std::max(mx, t.data()[c * plane + i]);
    T sum = T(0);
    for (int c = 0; c < C; ++c) {
      T& v = t.data()[c * plane + i];
      v = std::exp(v - mx);
      sum += v;
    }
    const T inv = T(1) / sum;
    for (int c = 0; c < C; ++c) t.data()[c * plane + i] *= inv;
  }
}

}  // namespace nn

// ---------------------------------------------------------------------------
// Encoder-decoder segmentation network
// ---------------------------------------------------------------------------

struct SegNetConfig {
  int in_channels = 1;
  int num_classes = 4;
  std::array<int, 4> widths = {8, 16, 32, 48};

  bool operator==(const SegNetConfig&) const = default;
};

/// Four-level convolutional encoder-decoder producing per-pixel class
/// probabilities. Skips are 1x1 projections added before each decoder ReLU.
/// Input dimensions must be divisible by 8 (three pooling stages).
class SegNet {
 public:
  explicit SegNet(SegNetConfig cfg = {}) : cfg_(cfg) {}

  const SegNetConfig& config() const { return cfg_; }

  ModelParams init_params(uint64_t seed) const {
    Rng rng(hash_mix(seed, 0x1417ULL));
    ModelParams p;
    const auto& w = cfg_.widths;
    auto conv = [&](const std::string& name, int co, int ci, int k) {
      NamedArray a;
      a.name = name;
      a.shape = {co, ci, k, k};
      a.values.resize(static_cast<size_t>(co) * ci * k * k);
      const double stddev = std::sqrt(2.0 / (static_cast<double>(ci) * k * k));
      for (auto& v : a.values) v = rng.normal(0.0, stddev);
      p.arrays.push_back(std::move(a));
    };
    auto bias = [&](const std::string& name, int n) {
      p.arrays.push_back({name, {n}, std::vector<double>(n, 0.0)});
    };
    conv("enc0.w", w[0], cfg_.in_channels, 3);
    bias("enc0.b", w[0]);
    conv("enc1.w", w[1], w[0], 3);
    bias("enc1.b", w[1]);
    conv("enc2.w", w[2], w[1], 3);
    bias("enc2.b", w[2]);
    conv("enc3.w", w[3], w[2], 3);
    bias("enc3.b", w[3]);
    conv("dec2.w", w[2], w[3], 3);
    bias("dec2.b", w[2]);
    conv("skip2.w", w[2], w[2], 1);
    conv("dec1.w", w[1], w[2], 3);
    bias("dec1.b", w[1]);
    conv("skip1.w", w[1], w[1], 1);
    conv("dec0.w", w[0], w[1], 3);
    bias("dec0.b", w[0]);
    conv("skip0.w", w[0], w[0], 1);
    conv("head.w", cfg_.num_classes, w[0], 1);
    bias("head.b", cfg_.num_classes);
    return p;
  }

  template <typename T>
  struct Cache {
    Tensor3T<T> x, e0, p0, e1, p1, e2, p2, e3;
    Tensor3T<T> u2, d2, u1, d1, u0, d0, logits, probs;
  };

  template <typename T>
  using Weights = std::vector<std::vector<T>>;

  template <typename T>
  static Weights<T> cast_params(const ModelParams& params) {
    Weights<T> w(params.arrays.size());
    for (size_t i = 0; i < params.arrays.size(); ++i)
      w[i].assign(params.arrays[i].values.begin(), params.arrays[i].values.end());
    return w;
  }

  void check_input(int rows, int cols) const {
    if (rows <= 0 || cols <= 0 || rows % 8 != 0 || cols % 8 != 0)
      throw std::invalid_argument("SegNet: input dimensions must be positive multiples of 8");
  }

  template <typename T>
  Cache<T> forward(const Weights<T>& w, const Tensor3T<T>& x) const {
    check_input(x.rows(), x.cols());
    if (x.channels() != cfg_.in_channels)
      throw std::invalid_argument("SegNet: wrong input channel count");
    const auto& cw = cfg_.widths;
    const int H = x.rows(), W = x.cols();
    Cache<T> c;
    c.x = x;
    c.e0 = Tensor3T<T>(cw[0], H, W);
    nn::conv3x3_forward(c.x, w[kEnc0W].data(), w[kEnc0B].data(), c.e0);
    nn::relu_inplace(c.e0);
    c.p0 = nn::avgpool2_forward(c.e0);
    c.e1 = Tensor3T<T>(cw[1], H / 2, W / 2);
    nn::conv3x3_forward(c.p0, w[kEnc1W].data(), w[kEnc1B].data(), c.e1);
    nn::relu_inplace(c.e1);
    c.p1 = nn::avgpool2_forward(c.e1);
    c.e2 = Tensor3T<T>(cw[2], H / 4, W / 4);
    nn::conv3x3_forward(c.p1, w[kEnc2W].data(), w[kEnc2B].data(), c.e2);
    nn::relu_inplace(c.e2);
    c.p2 = nn::avgpool2_forward(c.e2);
    c.e3 = Tensor3T<T>(cw[3], H / 8, W / 8);
    nn::conv3x3_forward(c.p2, w[kEnc3W].data(), w[kEnc3B].data(), c.e3);
    nn::relu_inplace(c.e3);

    c.u2 = nn::upsample2_forward(c.e3);
    c.d2 = Tensor3T<T>(cw[2], H / 4, W / 4);
    nn::conv3x3_forward(c.u2, w[kDec2W].data(), w[kDec2B].data(), c.d2);
    nn::conv1x1_forward(c.e2, w[kSkip2W].data(), static_cast<const T*>(nullptr), c.d2, true);
    nn::relu_inplace(c.d2);
    c.u1 = nn::upsample2_forward(c.d2);
    c.d1 = Tensor3T<T>(cw[1], H / 2, W / 2);
    nn::conv3x3_forward(c.u1, w[kDec1W].data(), w[kDec1B].data(), c.d1);
    nn::conv1x1_forward(c.e1, w[kSkip1W].data(), static_cast<const T*>(nullptr), c.d1, true);
    nn::relu_inplace(c.d1);
    c.u0 = nn::upsample2_forward(c.d1);
    c.d0 = Tensor3T<T>(cw[0], H, W);
    nn::conv3x3_forward(c.u0, w[kDec0W].data(), w[kDec0B].data(), c.d0);
    nn::conv1x1_forward(c.e0, w[kSkip0W].data(), static_cast<const T*>(nullptr), c.d0, true);
    nn::relu_inplace(c.d0);

    c.logits = Tensor3T<T>(cfg_.num_classes, H, W);
    nn::conv1x1_forward(c.d0, w[kHeadW].data(), w[kHeadB].data(), c.logits, false);
    c.probs = c.logits;
    nn::softmax_channels(c.probs);
    return c;
  }

  /// Backward pass: gradient of the loss w.r.t. all parameters given
  /// dL/dlogits. Gradients are accumulated into `grads` (double precision).
  template <typename T>
  void backward(const Weights<T>& w, const Cache<T>& c, const Tensor3T<T>& dlogits,
                ModelParams& grads) const {
    auto dw = [&](int idx) { return grads.arrays[idx].values.data(); };

    Tensor3T<T> dd0(c.d0.channels(), c.d0.rows(), c.d0.cols());
    nn::conv1x1_backward_input(dlogits, w[kHeadW].data(), dd0);
    nn::conv1x1_backward_params(c.d0, dlogits, dw(kHeadW), dw(kHeadB));
    nn::relu_backward_inplace(dd0, c.d0);

    Tensor3T<T> du0(c.u0.channels(), c.u0.rows(), c.u0.cols());
    nn::conv3x3_backward_input(dd0, w[kDec0W].data(), du0);
    nn::conv3x3_backward_params(c.u0, dd0, dw(kDec0W), dw(kDec0B));
    Tensor3T<T> de0(c.e0.channels(), c.e0.rows(), c.e0.cols());
    nn::conv1x1_backward_input(dd0, w[kSkip0W].data(), de0);
    nn::conv1x1_backward_params(c.e0, dd0, dw(kSkip0W), nullptr);

    Tensor3T<T> dd1 = nn::upsample2_backward(du0);
    nn::relu_backward_inplace(dd1, c.d1);
    Tensor3T<T> du1(c.u1.channels(), c.u1.rows(), c.u1.cols());
    nn::conv3x3_backward_input(dd1, w[kDec1W].data(), du1);
    nn::conv3x3_backward_params(c.u1, dd1, dw(kDec1W), dw(kDec1B));
    Tensor3T<T> de1(c.e1.channels(), c.e1.rows(), c.e1.cols());
    nn::conv1x1_backward_input(dd1, w[kSkip1W].data(), de1);
    nn::conv1x1_backward_params(c.e1, dd1, dw(kSkip1W), nullptr);

    Tensor3T<T> dd2 = nn::upsample2_backward(du1);
    nn::relu_backward_inplace(dd2, c.d2);
    Tensor3T<T> du2(c.u2.channels(), c.u2.rows(), c.u2.cols());
    nn::conv3x3_backward_input(dd2, w[kDec2W].data(), du2);
    nn::conv3x3_backward_params(c.u2, dd2, dw(kDec2W), dw(kDec2B));
    Tensor3T<T> de2(c.e2.channels(), c.e2.rows(), c.e2.cols());
    nn::conv1x1_backward_input(dd2, w[kSkip2W].data(), de2);
    nn::conv1x1_backward_params(c.e2, dd2, dw(kSkip2W), nullptr);

    Tensor3T<T> de3 = nn::upsample2_backward(du2);
    nn::relu_backward_inplace(de3, c.e3);
    Tensor3T<T> dp2(c.p2.channels(), c.p2.rows(), c.p2.cols());
    nn::conv3x3_backward_input(de3, w[kEnc3W].data(), dp2);
    nn::conv3x3_backward_params(c.p2, de3, dw(kEnc3W), dw(kEnc3B));

    {
      Tensor3T<T> pool_grad = nn::avgpool2_backward(dp2, c.e2.rows(), c.e2.cols());
      for (size_t i = 0; i < de2.size(); ++i) de2.data()[i] += pool_grad.data()[i];
    }
    nn::relu_backward_inplace(de2, c.e2);
    Tensor3T<T> dp1(c.p1.channels(), c.p1.rows(), c.p1.cols());
    nn::conv3x3_backward_input(de2, w[kEnc2W].data(), dp1);
    nn::conv3x3_backward_params(c.p1, de2, dw(kEnc2W), dw(kEnc2B));

    {
      Tensor3T<T> pool_grad = nn::avgpool2_backward(dp1, c.e1.rows(), c.e1.cols());
      for (size_t i = 0; i < de1.size(); ++i) de1.data()[i] += pool_grad.data()[i];
    }
    nn::relu_backward_inplace(de1, c.e1);
    Tensor3T<T> dp0(c.p0.channels(), c.p0.rows(), c.p0.cols());
    nn::conv3x3_backward_input(de1, w[kEnc1W].data(), dp0);
    nn::conv3x3_backward_params(c.p0, de1, dw(kEnc1W), dw(kEnc1B));

    {
      Tensor3T<T> pool_grad = nn::avgpool2_backward(dp0, c.e0.rows(), c.e0.cols());
      for (size_t i = 0; i < de0.size(); ++i) de0.data()[i] += pool_grad.data()[i];
    }
    nn::relu_backward_inplace(de0, c.e0);
    nn::conv3x3_backward_params(c.x, de0, dw(kEnc0W), dw(kEnc0B));
  }

  /// Per-pixel class probabilities for one intensity image (float path).
  ProbMap predict(const ModelParams& params, const Intensity& img) const {
    const auto w = cast_params<float>(params);
    return predict_cast(w, img);
  }

  ProbMap predict_cast(const Weights<float>& w, const Intensity& img) const {
    Tensor3 x(1, img.rows(), img.cols());
    std::memcpy(x.data(), img.data(), img.size() * sizeof(float));
    return forward(w, x).probs;
  }

  // parameter array indices, fixed by init_params order
  enum Index {
    kEnc0W, kEnc0B, kEnc1W, kEnc1B, kEnc2W, kEnc2B, kEnc3W, kEnc3B,
    kDec2W, kDec2B, kSkip2W, kDec1W, kDec1B, kSkip1W, kDec0W, kDec0B, kSkip0W,
    kHeadW, kHeadB, kArrayCount
  };

 private:
  SegNetConfig cfg_;
};

// ---------------------------------------------------------------------------
// AdamW optimizer (decoupled weight decay; per-group learning rates)
// ---------------------------------------------------------------------------

struct AdamWConfig {
  double lr_encoder = 5e-4;
  double lr_decoder = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  int64_t step = 0;
  ModelParams m, v;

  static AdamWState zeros_like(const ModelParams& params) {
    AdamWState s;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    return s;
  }
};

inline void adamw_step(ModelParams& params, const ModelParams& grads, AdamWState& state,
                       const AdamWConfig& cfg) {
  if (!params.same_structure(grads) || !params.same_structure(state.m))
    throw std::invalid_argument("adamw_step: parameter/gradient structure mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t a = 0; a < params.arrays.size(); ++a) {
    auto& p = params.arrays[a];
    const auto& g = grads.arrays[a];
    auto& m = state.m.arrays[a];
    auto& v = state.v.arrays[a];
    const bool encoder = p.name.rfind("enc", 0) == 0;
    const double lr = encoder ? cfg.lr_encoder : cfg.lr_decoder;
    // decay applies to weights only
    const double wd = p.name.size() > 2 && p.name.substr(p.name.size() - 2) == ".w"
                          ? cfg.weight_decay
                          : 0.0;
    for (size_t i = 0; i < p.values.size(); ++i) {
      const double gi = g.values[i];
      m.values[i] = cfg.beta1 * m.values[i] + (1.0 - cfg.beta1) * gi;
      v.values[i] = cfg.beta2 * v.values[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m.values[i] / bc1;
      const double vhat = v.values[i] / bc2;
      p.values[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + wd * p.values[i]);
    }
  }
}

// ---------------------------------------------------------------------------
// Parameter blob serialization (shared by checkpoints)
// ---------------------------------------------------------------------------

namespace io {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("checkpoint: unexpected end of file");
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  const uint32_t n = read_pod<uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw DataError("checkpoint: unexpected end of file");
  return s;
}

inline void write_params(std::ostream& out, const ModelParams& p) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(p.arrays.size()));
  for (const auto& a : p.arrays) {
    write_string(out, a.name);
    write_pod<uint32_t>(out, static_cast<uint32_t>(a.shape.size()));
    for (int d : a.shape) write_pod<int32_t>(out, d);
    write_pod<uint64_t>(out, a.values.size());
    out.write(reinterpret_cast<const char*>(a.values.data()),
              static_cast<std::streamsize>(a.values.size() * sizeof(double)));
  }
}

inline ModelParams read_params(std::istream& in) {
  ModelParams p;
  const uint32_t count = read_pod<uint32_t>(in);
  p.arrays.resize(count);
  for (auto& a : p.arrays) {
    a.name = read_string(in);
    const uint32_t nd = read_pod<uint32_t>(in);
    a.shape.resize(nd);
    for (auto& d : a.shape) d = read_pod<int32_t>(in);
    const uint64_t n = read_pod<uint64_t>(in);
    a.values.resize(n);
    in.read(reinterpret_cast<char*>(a.values.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw DataError("checkpoint: truncated parameter array");
  }
  return p;
}

}  // namespace io

}  // namespace ctfs

#include "roadflood/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <Eigen/Core>

#include "roadflood/error.hpp"
#include "roadflood/metrics.hpp"
#include "roadflood/rng.hpp"

namespace roadflood::segnet {

using nlohmann::json;

void ModelConfig::validate() const {
  if (levels < 1) throw InvalidArgument("model levels must be >= 1");
  if (base_filters < 1) throw InvalidArgument("base_filters must be >= 1");
  if (in_channels < 1) throw InvalidArgument("in_channels must be >= 1");
  if (levels > 12) throw InvalidArgument("model levels too large");
}

json to_json(const ModelConfig& cfg) {
  return json{{"levels", cfg.levels}, {"base_filters", cfg.base_filters}, {"in_channels", cfg.in_channels}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.levels = j.value("levels", cfg.levels);
  cfg.base_filters = j.value("base_filters", cfg.base_filters);
  cfg.in_channels = j.value("in_channels", cfg.in_channels);
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Parameter containers

template <typename T>
const NamedTensor<T>* BasicParams<T>::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

template <typename T>
NamedTensor<T>* BasicParams<T>::find(std::string_view name) {
  for (auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

template <typename T>
std::size_t BasicParams<T>::value_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.values.size();
  return n;
}

template <typename T>
void BasicParams<T>::fill(T value) {
  for (auto& t : tensors) std::fill(t.values.begin(), t.values.end(), value);
}

template <typename T>
void BasicParams<T>::add(const BasicParams& other) {
  if (other.tensors.size() != tensors.size()) throw InvalidArgument("parameter sets differ in tensor count");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& a = tensors[i].values;
    const auto& b = other.tensors[i].values;
    if (a.size() != b.size()) throw InvalidArgument("tensor " + tensors[i].name + " differs in size");
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
  }
}

template <typename T>
void BasicParams<T>::scale(T factor) {
  for (auto& t : tensors) {
    for (auto& v : t.values) v *= factor;
  }
}

namespace {

/// Tensor indices of one residual block inside BasicParams::tensors.
struct ResIdx {
  int w1, b1, w2, b2;
  int pw = -1;  // 1x1 projection shortcut, -1 for identity
  int pb = -1;
  int in_c, out_c;
};

struct Layout {
  std::vector<TensorSpec> specs;
  std::vector<ResIdx> enc;
  ResIdx bott{};
  std::vector<ResIdx> dec;  // indexed by level
  std::vector<int> up_w, up_b;
  int head_w = -1, head_b = -1;
};

Layout build_layout(const ModelConfig& cfg) {
  cfg.validate();
  Layout L;
  auto add = [&](std::string name, std::vector<int> shape) {
    L.specs.push_back({std::move(name), std::move(shape)});
    return static_cast<int>(L.specs.size() - 1);
  };
  auto res = [&](const std::string& prefix, int in_c, int out_c) {
    ResIdx r{};
    r.in_c = in_c;
    r.out_c = out_c;
    r.w1 = add(prefix + ".conv1.w", {3, 3, in_c, out_c});
    r.b1 = add(prefix + ".conv1.b", {out_c});
    r.w2 = add(prefix + ".conv2.w", {3, 3, out_c, out_c});
    r.b2 = add(prefix + ".conv2.b", {out_c});
    if (in_c != out_c) {
      r.pw = add(prefix + ".proj.w", {1, 1, in_c, out_c});
      r.pb = add(prefix + ".proj.b", {out_c});
    }
    return r;
  };
  int c = cfg.in_channels;
  for (int l = 0; l < cfg.levels; ++l) {
    L.enc.push_back(res("enc" + std::to_string(l), c, cfg.filters(l)));
    c = cfg.filters(l);
  }
  L.bott = res("bottleneck", c, cfg.filters(cfg.levels));
  c = cfg.filters(cfg.levels);
  L.dec.resize(cfg.levels);
  L.up_w.resize(cfg.levels);
  L.up_b.resize(cfg.levels);
  for (int l = cfg.levels - 1; l >= 0; --l) {
    const int f = cfg.filters(l);
    const std::string prefix = "dec" + std::to_string(l);
    L.up_w[l] = add(prefix + ".up.w", {3, 3, c, f});
    L.up_b[l] = add(prefix + ".up.b", {f});
    L.dec[l] = res(prefix, 2 * f, f);
    c = f;
  }
  L.head_w = add("head.w", {1, 1, c, 1});
  L.head_b = add("head.b", {1});
  return L;
}

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace

std::vector<TensorSpec> param_layout(const ModelConfig& cfg) { return build_layout(cfg).specs; }

template <typename T>
BasicParams<T> zero_params(const ModelConfig& cfg) {
  BasicParams<T> p;
  for (auto& s : param_layout(cfg)) {
    const auto n = shape_size(s.shape);
    p.tensors.push_back({std::move(s.name), std::move(s.shape), std::vector<T>(n, T(0))});
  }
  return p;
}

template <typename T>
BasicParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  auto p = zero_params<T>(cfg);
  Rng rng(seed);
  for (auto& t : p.tensors) {
    if (!t.is_kernel()) continue;
    const double receptive = static_cast<double>(t.shape[0]) * t.shape[1];
    const double fan_in = receptive * t.shape[2];
    const double fan_out = receptive * t.shape[3];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : t.values) v = static_cast<T>(rng.uniform(-limit, limit));
  }
  return p;
}

template <typename T>
void check_params(const BasicParams<T>& params, const ModelConfig& cfg) {
  const auto specs = param_layout(cfg);
  if (specs.size() != params.tensors.size()) {
    throw InvalidArgument("model has " + std::to_string(params.tensors.size()) + " tensors, config implies " +
                          std::to_string(specs.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& t = params.tensors[i];
    if (t.name != specs[i].name || t.shape != specs[i].shape || t.values.size() != shape_size(t.shape)) {
      throw InvalidArgument("tensor " + t.name + " does not match config layout (expected " + specs[i].name + ")");
    }
    for (T v : t.values) {
      if (!std::isfinite(static_cast<double>(v))) throw InvalidArgument("tensor " + t.name + " has non-finite values");
    }
  }
}

// ---------------------------------------------------------------------------
// Layer primitives on single-sample HWC feature maps

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

// Eigen picks its vector peel from the runtime address, so unaligned heap
// blocks would make reductions vary between otherwise identical calls.
template <typename T>
using AlignedVec = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct Fmap {
  int h = 0, w = 0, c = 0;
  AlignedVec<T> v;

  Fmap() = default;
  Fmap(int h_, int w_, int c_) : h(h_), w(w_), c(c_), v(static_cast<std::size_t>(h_) * w_ * c_, T(0)) {}
  std::size_t pixels() const { return static_cast<std::size_t>(h) * w; }
  MapMat<T> mat() { return MapMat<T>(v.data(), static_cast<Eigen::Index>(pixels()), c); }
  MapConstMat<T> mat() const { return MapConstMat<T>(v.data(), static_cast<Eigen::Index>(pixels()), c); }
};

// 3x3 'same' patches with zero padding; column order (ky, kx, ci) matches
// the [kh, kw, in, out] kernel layout.
template <typename T>
void im2col3(const Fmap<T>& x, AlignedVec<T>& col) {
  const int c = x.c;
  const std::size_t row_len = 9 * static_cast<std::size_t>(c);
  col.resize(x.pixels() * row_len);
  for (int y = 0; y < x.h; ++y) {
    for (int xx = 0; xx < x.w; ++xx) {
      T* dst = col.data() + (static_cast<std::size_t>(y) * x.w + xx) * row_len;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + ky - 1;
        for (int kx = 0; kx < 3; ++kx, dst += c) {
          const int sx = xx + kx - 1;
          if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) {
            std::fill(dst, dst + c, T(0));
          } else {
            const T* src = x.v.data() + (static_cast<std::size_t>(sy) * x.w + sx) * c;
            std::copy(src, src + c, dst);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3_add(const AlignedVec<T>& col, Fmap<T>& dx) {
  const int c = dx.c;
  const std::size_t row_len = 9 * static_cast<std::size_t>(c);
  for (int y = 0; y < dx.h; ++y) {
    for (int xx = 0; xx < dx.w; ++xx) {
      const T* src = col.data() + (static_cast<std::size_t>(y) * dx.w + xx) * row_len;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + ky - 1;
        for (int kx = 0; kx < 3; ++kx, src += c) {
          const int sx = xx + kx - 1;
          if (sy < 0 || sy >= dx.h || sx < 0 || sx >= dx.w) continue;
          T* dst = dx.v.data() + (static_cast<std::size_t>(sy) * dx.w + sx) * c;
          for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
        }
      }
    }
  }
}

template <typename T>
AlignedVec<T>& scratch() {
  thread_local AlignedVec<T> buf;
  return buf;
}

template <typename T>
AlignedVec<T>& scratch2() {
  thread_local AlignedVec<T> buf;
  return buf;
}

template <typename T>
Fmap<T> conv(const Fmap<T>& x, const NamedTensor<T>& w, const NamedTensor<T>& b) {
  const int k = w.shape[0];
  const int cout = w.shape[3];
  Fmap<T> y(x.h, x.w, cout);
  const auto P = static_cast<Eigen::Index>(x.pixels());
  MapConstMat<T> W(w.values.data(), static_cast<Eigen::Index>(k) * k * x.c, cout);
  auto Y = y.mat();
  if (k == 1) {
    Y.noalias() = x.mat() * W;
  } else {
    auto& col = scratch<T>();
    im2col3(x, col);
    MapConstMat<T> C(col.data(), P, 9 * x.c);
    Y.noalias() = C * W;
  }
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(b.values.data(), cout);
  Y.rowwise() += bias;
  return y;
}

// Accumulates dW, db and (when dx is non-null) dx.
template <typename T>
void conv_backward(const Fmap<T>& x, const NamedTensor<T>& w, const Fmap<T>& dy, NamedTensor<T>& dw,
                   NamedTensor<T>& db, Fmap<T>* dx) {
  const int k = w.shape[0];
  const int cout = w.shape[3];
  const auto P = static_cast<Eigen::Index>(x.pixels());
  const Eigen::Index K = static_cast<Eigen::Index>(k) * k * x.c;
  MapConstMat<T> W(w.values.data(), K, cout);
  MapMat<T> dW(dw.values.data(), K, cout);
  const auto dY = dy.mat();
  // Plain loop: a fixed summation order regardless of where dY lives.
  for (int co = 0; co < cout; ++co) {
    T acc = T(0);
    for (std::size_t i = 0; i < static_cast<std::size_t>(P); ++i) acc += dy.v[i * cout + co];
    db.values[co] += acc;
  }
  if (k == 1) {
    dW.noalias() += x.mat().transpose() * dY;
    if (dx) dx->mat().noalias() += dY * W.transpose();
    return;
  }
  auto& col = scratch<T>();
  im2col3(x, col);
  MapConstMat<T> C(col.data(), P, K);
  dW.noalias() += C.transpose() * dY;
  if (dx) {
    auto& dcol = scratch2<T>();
    dcol.resize(static_cast<std::size_t>(P * K));
    MapMat<T> dC(dcol.data(), P, K);
    dC.noalias() = dY * W.transpose();
    col2im3_add(dcol, *dx);
  }
}

template <typename T>
void relu_inplace(Fmap<T>& x) {
  for (auto& v : x.v) v = v > T(0) ? v : T(0);
}

// dy <- dy * (activated > 0)
template <typename T>
void relu_grad_inplace(Fmap<T>& dy, const Fmap<T>& activated) {
  for (std::size_t i = 0; i < dy.v.size(); ++i) {
    if (!(activated.v[i] > T(0))) dy.v[i] = T(0);
  }
}

template <typename T>
Fmap<T> maxpool2(const Fmap<T>& x, std::vector<std::uint8_t>& argmax) {
  Fmap<T> y(x.h / 2, x.w / 2, x.c);
  argmax.assign(y.v.size(), 0);
  for (int oy = 0; oy < y.h; ++oy) {
    for (int ox = 0; ox < y.w; ++ox) {
      for (int ci = 0; ci < x.c; ++ci) {
        T best = T(0);
        std::uint8_t arg = 0;
        for (std::uint8_t q = 0; q < 4; ++q) {
          const int sy = 2 * oy + (q >> 1);
          const int sx = 2 * ox + (q & 1);
          const T v = x.v[(static_cast<std::size_t>(sy) * x.w + sx) * x.c + ci];
          if (q == 0 || v > best) {
            best = v;
            arg = q;
          }
        }
        const std::size_t o = (static_cast<std::size_t>(oy) * y.w + ox) * x.c + ci;
        y.v[o] = best;
        argmax[o] = arg;
      }
    }
  }
  return y;
}

template <typename T>
void maxpool2_backward(const Fmap<T>& dy, const std::vector<std::uint8_t>& argmax, Fmap<T>& dx) {
  for (int oy = 0; oy < dy.h; ++oy) {
    for (int ox = 0; ox < dy.w; ++ox) {
      for (int ci = 0; ci < dy.c; ++ci) {
        const std::size_t o = (static_cast<std::size_t>(oy) * dy.w + ox) * dy.c + ci;
        const std::uint8_t q = argmax[o];
        const int sy = 2 * oy + (q >> 1);
        const int sx = 2 * ox + (q & 1);
        dx.v[(static_cast<std::size_t>(sy) * dx.w + sx) * dx.c + ci] += dy.v[o];
      }
    }
  }
}

template <typename T>
Fmap<T> upsample2(const Fmap<T>& x) {
  Fmap<T> y(x.h * 2, x.w * 2, x.c);
  for (int oy = 0; oy < y.h; ++oy) {
    for (int ox = 0; ox < y.w; ++ox) {
      const T* src = x.v.data() + (static_cast<std::size_t>(oy / 2) * x.w + ox / 2) * x.c;
      std::copy(src, src + x.c, y.v.data() + (static_cast<std::size_t>(oy) * y.w + ox) * y.c);
    }
  }
  return y;
}

template <typename T>
Fmap<T> upsample2_backward(const Fmap<T>& dy) {
  Fmap<T> dx(dy.h / 2, dy.w / 2, dy.c);
  for (int oy = 0; oy < dy.h; ++oy) {
    for (int ox = 0; ox < dy.w; ++ox) {
      const T* src = dy.v.data() + (static_cast<std::size_t>(oy) * dy.w + ox) * dy.c;
      T* dst = dx.v.data() + (static_cast<std::size_t>(oy / 2) * dx.w + ox / 2) * dx.c;
      for (int ci = 0; ci < dy.c; ++ci) dst[ci] += src[ci];
    }
  }
  return dx;
}

template <typename T>
Fmap<T> concat(const Fmap<T>& a, const Fmap<T>& b) {
  Fmap<T> y(a.h, a.w, a.c + b.c);
  for (std::size_t p = 0; p < a.pixels(); ++p) {
    std::copy_n(a.v.data() + p * a.c, a.c, y.v.data() + p * y.c);
    std::copy_n(b.v.data() + p * b.c, b.c, y.v.data() + p * y.c + a.c);
  }
  return y;
}

template <typename T>
void split_add(const Fmap<T>& dy, Fmap<T>& da, Fmap<T>& db) {
  for (std::size_t p = 0; p < dy.pixels(); ++p) {
    const T* src = dy.v.data() + p * dy.c;
    T* a = da.v.data() + p * da.c;
    T* b = db.v.data() + p * db.c;
    for (int i = 0; i < da.c; ++i) a[i] += src[i];
    for (int i = 0; i < db.c; ++i) b[i] += src[da.c + i];
  }
}

// ---------------------------------------------------------------------------
// Residual block

template <typename T>
struct ResCache {
  Fmap<T> h1;  // relu(conv1(x))
  Fmap<T> y;   // relu(conv2(h1) + shortcut(x))
};

template <typename T>
ResCache<T> res_forward(const BasicParams<T>& p, const ResIdx& r, const Fmap<T>& x) {
  ResCache<T> c;
  c.h1 = conv(x, p.tensors[r.w1], p.tensors[r.b1]);
  relu_inplace(c.h1);
  c.y = conv(c.h1, p.tensors[r.w2], p.tensors[r.b2]);
  if (r.pw >= 0) {
    const auto s = conv(x, p.tensors[r.pw], p.tensors[r.pb]);
    c.y.mat() += s.mat();
  } else {
    c.y.mat() += x.mat();
  }
  relu_inplace(c.y);
  return c;
}

// `dy` is consumed. Returns dx.
template <typename T>
Fmap<T> res_backward(const BasicParams<T>& p, BasicParams<T>& g, const ResIdx& r, const Fmap<T>& x,
                     const ResCache<T>& c, Fmap<T> dy) {
  relu_grad_inplace(dy, c.y);
  Fmap<T> dx(x.h, x.w, x.c);
  if (r.pw >= 0) {
    conv_backward(x, p.tensors[r.pw], dy, g.tensors[r.pw], g.tensors[r.pb], &dx);
  } else {
    dx.mat() += dy.mat();
  }
  Fmap<T> dh1(c.h1.h, c.h1.w, c.h1.c);
  conv_backward(c.h1, p.tensors[r.w2], dy, g.tensors[r.w2], g.tensors[r.b2], &dh1);
  relu_grad_inplace(dh1, c.h1);
  conv_backward(x, p.tensors[r.w1], dh1, g.tensors[r.w1], g.tensors[r.b1], &dx);
  return dx;
}

// ---------------------------------------------------------------------------
// Whole network, one sample

template <typename T>
struct SampleCache {
  Fmap<T> input;
  std::vector<ResCache<T>> enc;
  std::vector<Fmap<T>> pooled;
  std::vector<std::vector<std::uint8_t>> argmax;
  ResCache<T> bott;
  std::vector<Fmap<T>> up_act;  // relu(conv(upsample(prev))), per level
  std::vector<Fmap<T>> cat;     // concat(up_act, skip), per level
  std::vector<ResCache<T>> dec;
  Fmap<T> probs;
};

template <typename T>
T sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

template <typename T>
void forward_sample(const Layout& L, const BasicParams<T>& p, SampleCache<T>& c) {
  const int levels = static_cast<int>(L.enc.size());
  c.enc.resize(levels);
  c.pooled.resize(levels);
  c.argmax.resize(levels);
  c.up_act.resize(levels);
  c.cat.resize(levels);
  c.dec.resize(levels);

  const Fmap<T>* x = &c.input;
  for (int l = 0; l < levels; ++l) {
    c.enc[l] = res_forward(p, L.enc[l], *x);
    c.pooled[l] = maxpool2(c.enc[l].y, c.argmax[l]);
    x = &c.pooled[l];
  }
  c.bott = res_forward(p, L.bott, *x);
  const Fmap<T>* prev = &c.bott.y;
  for (int l = levels - 1; l >= 0; --l) {
    c.up_act[l] = conv(upsample2(*prev), p.tensors[L.up_w[l]], p.tensors[L.up_b[l]]);
    relu_inplace(c.up_act[l]);
    c.cat[l] = concat(c.up_act[l], c.enc[l].y);
    c.dec[l] = res_forward(p, L.dec[l], c.cat[l]);
    prev = &c.dec[l].y;
  }
  c.probs = conv(*prev, p.tensors[L.head_w], p.tensors[L.head_b]);
  for (auto& v : c.probs.v) v = sigmoid(v);
}

template <typename T>
void backward_sample(const Layout& L, const BasicParams<T>& p, const SampleCache<T>& c, Fmap<T> dlogits,
                     BasicParams<T>& g) {
  const int levels = static_cast<int>(L.enc.size());
  const Fmap<T>& top = c.dec[0].y;
  Fmap<T> dprev(top.h, top.w, top.c);
  conv_backward(top, p.tensors[L.head_w], dlogits, g.tensors[L.head_w], g.tensors[L.head_b], &dprev);

  std::vector<Fmap<T>> dskip(levels);
  for (int l = 0; l < levels; ++l) dskip[l] = Fmap<T>(c.enc[l].y.h, c.enc[l].y.w, c.enc[l].y.c);

  for (int l = 0; l < levels; ++l) {
    Fmap<T> dcat = res_backward(p, g, L.dec[l], c.cat[l], c.dec[l], std::move(dprev));
    Fmap<T> dup_act(c.up_act[l].h, c.up_act[l].w, c.up_act[l].c);
    split_add(dcat, dup_act, dskip[l]);
    relu_grad_inplace(dup_act, c.up_act[l]);
    const Fmap<T>& below = (l == levels - 1) ? c.bott.y : c.dec[l + 1].y;
    const Fmap<T> up = upsample2(below);
    Fmap<T> dup(up.h, up.w, up.c);
    conv_backward(up, p.tensors[L.up_w[l]], dup_act, g.tensors[L.up_w[l]], g.tensors[L.up_b[l]], &dup);
    dprev = upsample2_backward(dup);
  }

  Fmap<T> dpooled = res_backward(p, g, L.bott, c.pooled[levels - 1], c.bott, std::move(dprev));
  for (int l = levels - 1; l >= 0; --l) {
    maxpool2_backward(dpooled, c.argmax[l], dskip[l]);
    const Fmap<T>& x = (l == 0) ? c.input : c.pooled[l - 1];
    Fmap<T> dx = res_backward(p, g, L.enc[l], x, c.enc[l], std::move(dskip[l]));
    if (l > 0) dpooled = std::move(dx);
  }
}

template <typename T>
void check_input(const ModelConfig& cfg, const Batch<T>& input) {
  if (input.n <= 0) throw InvalidArgument("empty batch");
  if (input.channels != cfg.in_channels) {
    throw InvalidArgument("batch has " + std::to_string(input.channels) + " channels, model expects " +
                          std::to_string(cfg.in_channels));
  }
  if (input.height <= 0 || input.width <= 0 || input.height % cfg.divisor() != 0 ||
      input.width % cfg.divisor() != 0) {
    throw InvalidArgument("input spatial dims must be positive multiples of " + std::to_string(cfg.divisor()));
  }
  if (input.data.size() != input.sample_size() * static_cast<std::size_t>(input.n)) {
    throw InvalidArgument("batch payload size does not match its shape");
  }
  for (T v : input.data) {
    if (!std::isfinite(static_cast<double>(v))) throw InvalidArgument("non-finite value in model input");
  }
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
// handled by exactly one worker; callers write to per-index slots only.
template <typename Fn>
void parallel_for(int n, int threads, Fn fn) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (int i = t; i < n; i += threads) fn(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

template <typename T>
Fmap<T> sample_fmap(const Batch<T>& b, int i) {
  Fmap<T> f(b.height, b.width, b.channels);
  const auto s = b.sample(i);
  std::copy(s.begin(), s.end(), f.v.begin());
  return f;
}

}  // namespace

template <typename T>
Batch<T> forward(const BasicParams<T>& params, const ModelConfig& cfg, const Batch<T>& input, int threads) {
  check_input(cfg, input);
  const Layout L = build_layout(cfg);
  check_params(params, cfg);
  Batch<T> out(input.n, input.height, input.width, 1);
  parallel_for(input.n, threads, [&](int i) {
    SampleCache<T> c;
    c.input = sample_fmap(input, i);
    forward_sample(L, params, c);
    std::copy(c.probs.v.begin(), c.probs.v.end(), out.sample(i).begin());
  });
  return out;
}

template <typename T>
LossAndGrads<T> backward(const BasicParams<T>& params, const ModelConfig& cfg, const Batch<T>& input,
                         std::span<const T> targets, double smooth, int threads, double loss_scale) {
  check_input(cfg, input);
  const Layout L = build_layout(cfg);
  check_params(params, cfg);
  const std::size_t plane = static_cast<std::size_t>(input.height) * input.width;
  if (targets.size() != plane * static_cast<std::size_t>(input.n)) {
    throw InvalidArgument("targets size does not match batch");
  }

  std::vector<SampleCache<T>> caches(input.n);
  LossAndGrads<T> result;
  result.probs = Batch<T>(input.n, input.height, input.width, 1);
  parallel_for(input.n, threads, [&](int i) {
    caches[i].input = sample_fmap(input, i);
    forward_sample(L, params, caches[i]);
    std::copy(caches[i].probs.v.begin(), caches[i].probs.v.end(), result.probs.sample(i).begin());
  });

  const std::span<const T> probs(result.probs.data);
  const auto s = overlap_sums(probs, targets);
  const double num = 2.0 * s.intersection + smooth;
  const double den = s.sum_pred + s.sum_target + smooth;
  result.loss = loss_scale * (1.0 - (den == 0.0 ? 1.0 : num / den));

  // dL/dp_i = -(2 g_i den - num) / den^2, then through the sigmoid.
  std::vector<BasicParams<T>> per_sample(input.n);
  parallel_for(input.n, threads, [&](int i) {
    auto& cache = caches[i];
    Fmap<T> dlogits(input.height, input.width, 1);
    for (std::size_t k = 0; k < plane; ++k) {
      const double p = cache.probs.v[k];
      const double g = targets[static_cast<std::size_t>(i) * plane + k];
      const double dp = den == 0.0 ? 0.0 : -(2.0 * g * den - num) / (den * den);
      dlogits.v[k] = static_cast<T>(loss_scale * dp * p * (1.0 - p));
    }
    per_sample[i] = zero_params<T>(cfg);
    backward_sample(L, params, cache, std::move(dlogits), per_sample[i]);
    cache = SampleCache<T>{};
  });

  result.grads = std::move(per_sample[0]);
  for (int i = 1; i < input.n; ++i) result.grads.add(per_sample[i]);
  for (const auto& t : result.grads.tensors) {
    for (T v : t.values) {
      if (!std::isfinite(static_cast<double>(v))) throw Error("non-finite gradient in tensor " + t.name);
    }
  }
  return result;
}

#define ROADFLOOD_INSTANTIATE_SEGNET(T)                                                                  \
  template struct BasicParams<T>;                                                                       \
  template BasicParams<T> zero_params<T>(const ModelConfig&);                                           \
  template BasicParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                            \
  template void check_params<T>(const BasicParams<T>&, const ModelConfig&);                            \
  template Batch<T> forward<T>(const BasicParams<T>&, const ModelConfig&, const Batch<T>&, int);        \
  template LossAndGrads<T> backward<T>(const BasicParams<T>&, const ModelConfig&, const Batch<T>&,      \
                                       std::span<const T>, double, int, double);

ROADFLOOD_INSTANTIATE_SEGNET(float)
ROADFLOOD_INSTANTIATE_SEGNET(double)

#undef ROADFLOOD_INSTANTIATE_SEGNET

}  // namespace roadflood::segnet

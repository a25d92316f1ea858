// SPDX-License-Identifier: Apache-2.0

#include "memdecode/neuralcore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

#include "memdecode/kernels/kernels.hpp"
#include "memdecode/rng.hpp"

namespace memdecode::nn {

std::string_view kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::global_maxpool: return "global_maxpool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::l2norm: return "l2norm";
  }
  return "?";
}

std::size_t LayerSpec::weight_count() const {
  switch (kind) {
    case LayerKind::conv1d: return in * kernel * out;
    case LayerKind::dense: return in * out;
    default: return 0;
  }
}

std::size_t LayerSpec::param_count() const {
  switch (kind) {
    case LayerKind::conv1d:
    case LayerKind::dense: return weight_count() + out;
    default: return 0;
  }
}

std::string LayerSpec::describe() const {
  std::string s(kind_name(kind));
  switch (kind) {
    case LayerKind::conv1d:
      s += " " + std::to_string(in) + " " + std::to_string(out) + " " + std::to_string(kernel);
      break;
    case LayerKind::dense: s += " " + std::to_string(in) + " " + std::to_string(out); break;
    case LayerKind::maxpool: s += " " + std::to_string(kernel); break;
    default: break;
  }
  return s;
}

LayerSpec LayerSpec::parse(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string name;
  is >> name;
  LayerSpec s;
  if (name == "conv1d") {
    s.kind = LayerKind::conv1d;
    is >> s.in >> s.out >> s.kernel;
  } else if (name == "dense") {
    s.kind = LayerKind::dense;
    is >> s.in >> s.out;
  } else if (name == "maxpool") {
    s.kind = LayerKind::maxpool;
    is >> s.kernel;
  } else if (name == "global_maxpool") {
    s.kind = LayerKind::global_maxpool;
  } else if (name == "flatten") {
    s.kind = LayerKind::flatten;
  } else if (name == "relu") {
    s.kind = LayerKind::relu;
  } else if (name == "l2norm") {
    s.kind = LayerKind::l2norm;
  } else {
    throw Error("unknown layer kind: " + name);
  }
  if (is.fail()) throw Error("malformed layer line: " + std::string(text));
  return s;
}

Shape output_shape(const LayerSpec& spec, Shape in) {
  switch (spec.kind) {
    case LayerKind::conv1d:
      if (in.channels != spec.in) throw Error("conv1d: expected " + std::to_string(spec.in) + " input channels");
      return {in.length, spec.out};
    case LayerKind::maxpool:
      if (spec.kernel == 0 || in.length < spec.kernel) throw Error("maxpool: input shorter than pool size");
      return {in.length / spec.kernel, in.channels};
    case LayerKind::global_maxpool:
      if (in.length == 0) throw Error("global_maxpool: empty input");
      return {1, in.channels};
    case LayerKind::flatten: return {1, in.size()};
    case LayerKind::dense:
      if (in.size() != spec.in) throw Error("dense: expected input width " + std::to_string(spec.in));
      return {1, spec.out};
    case LayerKind::relu:
    case LayerKind::l2norm: return in;
  }
  return in;
}

// ---------------------------------------------------------------------------
// Layer kernels

// Convolutions run as one GEMM over the whole batch. Each sample is stored
// zero-padded in a block of P = L + kernel - 1 rows; window rows that straddle
// two blocks produce values that are computed and discarded.

template <typename T>
void conv1d_forward(const Batch<T>& in, std::span<const T> weights, std::span<const T> bias,
                    std::size_t kernel, Batch<T>& out) {
  const std::size_t L = in.shape.length, cin = in.shape.channels, cout = bias.size();
  if (kernel % 2 == 0) throw Error("conv1d: same padding needs an odd kernel");
  if (weights.size() != kernel * cin * cout) throw Error("conv1d: weight shape mismatch");
  out.resize(in.batch, {L, cout});
  if (in.batch == 0) return;
  const std::size_t pad = kernel / 2, P = L + kernel - 1, B = in.batch;
  std::vector<T> padded(B * P * cin, T(0));
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(in.sample(b), L * cin, padded.data() + (b * P + pad) * cin);
  }
  const std::size_t rows = B * P - (kernel - 1);
  std::vector<T> ext(rows * cout);
  for (std::size_t r = 0; r < rows; ++r) std::copy(bias.begin(), bias.end(), ext.data() + r * cout);
  kernels::GemmArgs<T> g;
  g.m = rows;
  g.n = cout;
  g.k = kernel * cin;
  g.a = padded.data();
  g.a_row_stride = cin;
  g.a_col_stride = 1;
  g.b = weights.data();
  g.ldb = cout;
  g.c = ext.data();
  g.ldc = cout;
  g.accumulate = true;
  kernels::gemm(g);
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(ext.data() + b * P * cout, L * cout, out.sample(b));
  }
}

template <typename T>
void conv1d_backward(const Batch<T>& in, const Batch<T>& dout, std::span<const T> weights,
                     std::size_t kernel, std::span<T> dweights, std::span<T> dbias, Batch<T>* din) {
  const std::size_t L = in.shape.length, cin = in.shape.channels, cout = dout.shape.channels;
  if (din) din->resize(in.batch, in.shape);
  if (in.batch == 0) return;
  const std::size_t pad = kernel / 2, P = L + kernel - 1, B = in.batch;
  const std::size_t rows = B * P - (kernel - 1);

  std::vector<T> padded(B * P * cin, T(0)), dpadded(B * P * cout, T(0));
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(in.sample(b), L * cin, padded.data() + (b * P + pad) * cin);
    std::copy_n(dout.sample(b), L * cout, dpadded.data() + (b * P + pad) * cout);
  }

  // dW[(j, c), o] = sum_q padded[q + j, c] * dy_ext[q, o], dy_ext = dpadded shifted by pad rows.
  kernels::GemmArgs<T> gw;
  gw.m = kernel * cin;
  gw.n = cout;
  gw.k = rows;
  gw.a = padded.data();
  gw.a_row_stride = 1;
  gw.a_col_stride = cin;
  gw.b = dpadded.data() + pad * cout;
  gw.ldb = cout;
  gw.c = dweights.data();
  gw.ldc = cout;
  gw.accumulate = true;
  kernels::gemm(gw);

  for (std::size_t b = 0; b < B; ++b) {
    const T* dy = dout.sample(b);
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t o = 0; o < cout; ++o) dbias[o] += dy[t * cout + o];
    }
  }

  if (din) {
    // wflip[(i * cout + o) * cin + c] = w[((kernel - 1 - i) * cin + c) * cout + o]
    std::vector<T> wflip(kernel * cout * cin);
    for (std::size_t i = 0; i < kernel; ++i) {
      for (std::size_t c = 0; c < cin; ++c) {
        const T* src = weights.data() + ((kernel - 1 - i) * cin + c) * cout;
        for (std::size_t o = 0; o < cout; ++o) wflip[(i * cout + o) * cin + c] = src[o];
      }
    }
    std::vector<T> ext(rows * cin);
    kernels::GemmArgs<T> gx;
    gx.m = rows;
    gx.n = cin;
    gx.k = kernel * cout;
    gx.a = dpadded.data();
    gx.a_row_stride = cout;
    gx.a_col_stride = 1;
    gx.b = wflip.data();
    gx.ldb = cin;
    gx.c = ext.data();
    gx.ldc = cin;
    gx.accumulate = false;
    kernels::gemm(gx);
    for (std::size_t b = 0; b < B; ++b) {
      std::copy_n(ext.data() + b * P * cin, L * cin, din->sample(b));
    }
  }
}

template <typename T>
void maxpool_forward(const Batch<T>& in, std::size_t size, Batch<T>& out) {
  const Shape os = output_shape(LayerSpec::maxpool(size), in.shape);
  const std::size_t C = in.shape.channels;
  out.resize(in.batch, os);
  for (std::size_t b = 0; b < in.batch; ++b) {
    const T* x = in.sample(b);
    T* y = out.sample(b);
    for (std::size_t t = 0; t < os.length; ++t) {
      for (std::size_t c = 0; c < C; ++c) {
        T m = x[(t * size) * C + c];
        for (std::size_t j = 1; j < size; ++j) m = std::max(m, x[(t * size + j) * C + c]);
        y[t * C + c] = m;
      }
    }
  }
}

template <typename T>
void maxpool_backward(const Batch<T>& in, const Batch<T>& dout, std::size_t size, Batch<T>& din) {
  const std::size_t C = in.shape.channels, Lout = dout.shape.length;
  din.resize(in.batch, in.shape);
  for (std::size_t b = 0; b < in.batch; ++b) {
    const T* x = in.sample(b);
    const T* dy = dout.sample(b);
    T* dx = din.sample(b);
    for (std::size_t t = 0; t < Lout; ++t) {
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t arg = t * size;
        for (std::size_t j = 1; j < size; ++j) {
          if (x[(t * size + j) * C + c] > x[arg * C + c]) arg = t * size + j;
        }
        dx[arg * C + c] += dy[t * C + c];
      }
    }
  }
}

template <typename T>
void global_maxpool_forward(const Batch<T>& in, Batch<T>& out) {
  const std::size_t L = in.shape.length, C = in.shape.channels;
  if (L == 0) throw Error("global_maxpool: empty input");
  out.resize(in.batch, {1, C});
  for (std::size_t b = 0; b < in.batch; ++b) {
    const T* x = in.sample(b);
    T* y = out.sample(b);
    std::copy_n(x, C, y);
    for (std::size_t t = 1; t < L; ++t) {
      for (std::size_t c = 0; c < C; ++c) y[c] = std::max(y[c], x[t * C + c]);
    }
  }
}

template <typename T>
void global_maxpool_backward(const Batch<T>& in, const Batch<T>& dout, Batch<T>& din) {
  const std::size_t L = in.shape.length, C = in.shape.channels;
  din.resize(in.batch, in.shape);
  for (std::size_t b = 0; b < in.batch; ++b) {
    const T* x = in.sample(b);
    const T* dy = dout.sample(b);
    T* dx = din.sample(b);
    for (std::size_t c = 0; c < C; ++c) {
      std::size_t arg = 0;
      for (std::size_t t = 1; t < L; ++t) {
        if (x[t * C + c] > x[arg * C + c]) arg = t;
      }
      dx[arg * C + c] += dy[c];
    }
  }
}

template <typename T>
void dense_forward(const Batch<T>& in, std::span<const T> weights, std::span<const T> bias,
                   Batch<T>& out) {
  const std::size_t n = in.sample_size(), m = bias.size();
  if (weights.size() != n * m) throw Error("dense: weight shape mismatch");
  out.resize(in.batch, {1, m});
  for (std::size_t b = 0; b < in.batch; ++b) std::copy(bias.begin(), bias.end(), out.sample(b));
  kernels::GemmArgs<T> g;
  g.m = in.batch;
  g.n = m;
  g.k = n;
  g.a = in.data.data();
  g.a_row_stride = n;
  g.a_col_stride = 1;
  g.b = weights.data();
  g.ldb = m;
  g.c = out.data.data();
  g.ldc = m;
  g.accumulate = true;
  kernels::gemm(g);
}

template <typename T>
void dense_backward(const Batch<T>& in, const Batch<T>& dout, std::span<const T> weights,
                    std::span<T> dweights, std::span<T> dbias, Batch<T>* din) {
  const std::size_t n = in.sample_size(), m = dout.sample_size();
  kernels::GemmArgs<T> gw;
  gw.m = n;
  gw.n = m;
  gw.k = in.batch;
  gw.a = in.data.data();
  gw.a_row_stride = 1;
  gw.a_col_stride = n;
  gw.b = dout.data.data();
  gw.ldb = m;
  gw.c = dweights.data();
  gw.ldc = m;
  gw.accumulate = true;
  kernels::gemm(gw);
  for (std::size_t b = 0; b < in.batch; ++b) {
    const T* dy = dout.sample(b);
    for (std::size_t o = 0; o < m; ++o) dbias[o] += dy[o];
  }
  if (din) {
    din->resize(in.batch, in.shape);
    std::vector<T> wt(m * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < m; ++o) wt[o * n + i] = weights[i * m + o];
    }
    kernels::GemmArgs<T> gx;
    gx.m = in.batch;
    gx.n = n;
    gx.k = m;
    gx.a = dout.data.data();
    gx.a_row_stride = m;
    gx.a_col_stride = 1;
    gx.b = wt.data();
    gx.ldb = n;
    gx.c = din->data.data();
    gx.ldc = n;
    gx.accumulate = false;
    kernels::gemm(gx);
  }
}

template <typename T>
void relu_forward(const Batch<T>& in, Batch<T>& out) {
  out.resize(in.batch, in.shape);
  for (std::size_t i = 0; i < in.data.size(); ++i) out.data[i] = std::max(in.data[i], T(0));
}

template <typename T>
void relu_backward(const Batch<T>& in, const Batch<T>& dout, Batch<T>& din) {
  din.resize(in.batch, in.shape);
  for (std::size_t i = 0; i < in.data.size(); ++i) {
    din.data[i] = in.data[i] > T(0) ? dout.data[i] : T(0);
  }
}

template <typename T>
void l2norm_forward(const Batch<T>& in, Batch<T>& out) {
  out.resize(in.batch, in.shape);
  const std::size_t n = in.sample_size();
  for (std::size_t b = 0; b < in.batch; ++b) {
    const T* x = in.sample(b);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += static_cast<double>(x[i]) * x[i];
    const double scale = 1.0 / (std::sqrt(ss) + kL2Epsilon);
    T* y = out.sample(b);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<T>(x[i] * scale);
  }
}

template <typename T>
void l2norm_backward(const Batch<T>& in, const Batch<T>& dout, Batch<T>& din) {
  din.resize(in.batch, in.shape);
  const std::size_t n = in.sample_size();
  for (std::size_t b = 0; b < in.batch; ++b) {
    const T* x = in.sample(b);
    const T* dy = dout.sample(b);
    double ss = 0.0, dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ss += static_cast<double>(x[i]) * x[i];
      dot += static_cast<double>(x[i]) * dy[i];
    }
    const double norm = std::sqrt(ss);
    const double s = norm + kL2Epsilon;
    // d(v/s)/dv = I/s - v v^T / (s^2 |v|)
    const double k = norm > 0.0 ? dot / (s * s * norm) : 0.0;
    T* dx = din.sample(b);
    for (std::size_t i = 0; i < n; ++i) dx[i] = static_cast<T>(dy[i] / s - x[i] * k);
  }
}

#define MEMDECODE_INSTANTIATE_LAYERS(T)                                                          \
  template void conv1d_forward<T>(const Batch<T>&, std::span<const T>, std::span<const T>,       \
                                  std::size_t, Batch<T>&);                                       \
  template void conv1d_backward<T>(const Batch<T>&, const Batch<T>&, std::span<const T>,         \
                                   std::size_t, std::span<T>, std::span<T>, Batch<T>*);          \
  template void maxpool_forward<T>(const Batch<T>&, std::size_t, Batch<T>&);                     \
  template void maxpool_backward<T>(const Batch<T>&, const Batch<T>&, std::size_t, Batch<T>&);   \
  template void global_maxpool_forward<T>(const Batch<T>&, Batch<T>&);                           \
  template void global_maxpool_backward<T>(const Batch<T>&, const Batch<T>&, Batch<T>&);         \
  template void dense_forward<T>(const Batch<T>&, std::span<const T>, std::span<const T>,        \
                                 Batch<T>&);                                                     \
  template void dense_backward<T>(const Batch<T>&, const Batch<T>&, std::span<const T>,          \
                                  std::span<T>, std::span<T>, Batch<T>*);                        \
  template void relu_forward<T>(const Batch<T>&, Batch<T>&);                                     \
  template void relu_backward<T>(const Batch<T>&, const Batch<T>&, Batch<T>&);                   \
  template void l2norm_forward<T>(const Batch<T>&, Batch<T>&);                                   \
  template void l2norm_backward<T>(const Batch<T>&, const Batch<T>&, Batch<T>&);

MEMDECODE_INSTANTIATE_LAYERS(float)
MEMDECODE_INSTANTIATE_LAYERS(double)
#undef MEMDECODE_INSTANTIATE_LAYERS

// ---------------------------------------------------------------------------
// Network

template <typename T>
Network<T>::Network(std::vector<LayerSpec> specs, Shape input)
    : specs_(std::move(specs)), input_(input) {
  if (specs_.empty()) throw Error("network needs at least one layer");
  shapes_.push_back(input_);
  std::size_t total = 0;
  for (const auto& s : specs_) {
    shapes_.push_back(nn::output_shape(s, shapes_.back()));
    offsets_.push_back(total);
    total += s.param_count();
  }
  params_.assign(total, T(0));
  acts_.resize(specs_.size());
  grad_buf_.resize(specs_.size() + 1);
}

template <typename T>
std::size_t Network<T>::layer_of_param(std::size_t i) const {
  std::size_t layer = 0;
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    if (specs_[l].param_count() > 0 && offsets_[l] <= i) layer = l;
  }
  return layer;
}

template <typename T>
void Network<T>::init(std::uint64_t seed) {
  Rng rng(seed);
  std::fill(params_.begin(), params_.end(), T(0));
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    const auto& s = specs_[l];
    if (s.param_count() == 0) continue;
    const std::size_t rf = s.kind == LayerKind::conv1d ? s.kernel : 1;
    const double limit = std::sqrt(6.0 / static_cast<double>(s.in * rf + s.out * rf));
    T* w = params_.data() + offsets_[l];
    for (std::size_t i = 0; i < s.weight_count(); ++i) w[i] = static_cast<T>(rng.uniform(-limit, limit));
  }
}

template <typename T>
void Network<T>::run_layer(std::size_t l, const Batch<T>& x, Batch<T>& y) const {
  const auto& s = specs_[l];
  const std::span<const T> p(params_.data() + offsets_[l], s.param_count());
  switch (s.kind) {
    case LayerKind::conv1d:
      conv1d_forward<T>(x, p.first(s.weight_count()), p.subspan(s.weight_count()), s.kernel, y);
      break;
    case LayerKind::dense:
      dense_forward<T>(x, p.first(s.weight_count()), p.subspan(s.weight_count()), y);
      break;
    case LayerKind::maxpool: maxpool_forward(x, s.kernel, y); break;
    case LayerKind::global_maxpool: global_maxpool_forward(x, y); break;
    case LayerKind::flatten:
      y.batch = x.batch;
      y.shape = shapes_[l + 1];
      y.data = x.data;
      break;
    case LayerKind::relu: relu_forward(x, y); break;
    case LayerKind::l2norm: l2norm_forward(x, y); break;
  }
}

template <typename T>
std::vector<std::uint32_t> Network<T>::branch_signature() const {
  std::vector<std::uint32_t> sig;
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    const Batch<T>& x = l == 0 ? input_copy_ : acts_[l - 1];
    const std::size_t C = x.shape.channels;
    switch (specs_[l].kind) {
      case LayerKind::relu:
        for (T v : x.data) sig.push_back(v > T(0));
        break;
      case LayerKind::maxpool:
      case LayerKind::global_maxpool: {
        const std::size_t size = specs_[l].kind == LayerKind::maxpool ? specs_[l].kernel : x.shape.length;
        const std::size_t windows = x.shape.length / size;
        for (std::size_t b = 0; b < x.batch; ++b) {
          const T* p = x.sample(b);
          for (std::size_t t = 0; t < windows; ++t) {
            for (std::size_t c = 0; c < C; ++c) {
              std::uint32_t best = 0;
              for (std::size_t j = 1; j < size; ++j) {
                if (p[(t * size + j) * C + c] > p[(t * size + best) * C + c]) best = static_cast<std::uint32_t>(j);
              }
              sig.push_back(best);
            }
          }
        }
        break;
      }
      default: break;
    }
  }
  return sig;
}

template <typename T>
const Batch<T>& Network<T>::forward(const Batch<T>& input) {
  if (input.shape != input_) throw Error("network input shape mismatch");
  input_copy_ = input;
  const Batch<T>* x = &input_copy_;
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    run_layer(l, *x, acts_[l]);
    x = &acts_[l];
  }
  return acts_.back();
}

template <typename T>
Batch<T> Network<T>::infer(const Batch<T>& input) const {
  if (input.shape != input_) throw Error("network input shape mismatch");
  Batch<T> a, b;
  const Batch<T>* x = &input;
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    run_layer(l, *x, a);
    std::swap(a, b);
    x = &b;
  }
  return b;
}

template <typename T>
void Network<T>::backward(const Batch<T>& dout, std::span<T> grads, Batch<T>* dinput) {
  if (grads.size() != params_.size()) throw Error("gradient buffer size mismatch");
  std::fill(grads.begin(), grads.end(), T(0));
  Batch<T> current = dout;
  for (std::size_t li = specs_.size(); li-- > 0;) {
    const auto& s = specs_[li];
    const Batch<T>& x = li == 0 ? input_copy_ : acts_[li - 1];
    const bool need_din = li > 0 || dinput != nullptr;
    Batch<T>& din = grad_buf_[li];
    const std::span<const T> p(params_.data() + offsets_[li], s.param_count());
    const std::span<T> g(grads.data() + offsets_[li], s.param_count());
    switch (s.kind) {
      case LayerKind::conv1d:
        conv1d_backward<T>(x, current, p.first(s.weight_count()), s.kernel, g.first(s.weight_count()),
                           g.subspan(s.weight_count()), need_din ? &din : nullptr);
        break;
      case LayerKind::dense:
        dense_backward<T>(x, current, p.first(s.weight_count()), g.first(s.weight_count()),
                          g.subspan(s.weight_count()), need_din ? &din : nullptr);
        break;
      case LayerKind::maxpool: maxpool_backward(x, current, s.kernel, din); break;
      case LayerKind::global_maxpool: global_maxpool_backward(x, current, din); break;
      case LayerKind::flatten:
        din.batch = x.batch;
        din.shape = x.shape;
        din.data = current.data;
        break;
      case LayerKind::relu: relu_backward(x, current, din); break;
      case LayerKind::l2norm: l2norm_backward(x, current, din); break;
    }
    if (!need_din) break;
    std::swap(current, din);
  }
  if (dinput) *dinput = std::move(current);
}

template class Network<float>;
template class Network<double>;

// ---------------------------------------------------------------------------
// rmsprop

template <typename T>
void rmsprop_step(std::span<T> params, std::span<const T> grads, OptState<T>& state) {
  if (grads.size() != params.size()) throw Error("rmsprop: gradient size mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw Error("rmsprop: non-finite gradient at parameter " + std::to_string(i));
    }
  }
  if (state.mean_square.size() != params.size()) state.mean_square.assign(params.size(), T(0));
  kernels::rmsprop(params.data(), grads.data(), state.mean_square.data(), params.size(),
                   static_cast<T>(state.learning_rate), static_cast<T>(state.decay),
                   static_cast<T>(state.epsilon));
}

template <typename T>
void rmsprop_step(Network<T>& net, std::span<const T> grads, OptState<T>& state) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      const std::size_t layer = net.layer_of_param(i);
      throw Error("rmsprop: non-finite gradient in layer " + std::to_string(layer) + " (" +
                  net.specs()[layer].describe() + ")");
    }
  }
  rmsprop_step(net.params(), grads, state);
}

template void rmsprop_step<float>(std::span<float>, std::span<const float>, OptState<float>&);
template void rmsprop_step<double>(std::span<double>, std::span<const double>, OptState<double>&);
template void rmsprop_step<float>(Network<float>&, std::span<const float>, OptState<float>&);
template void rmsprop_step<double>(Network<double>&, std::span<const double>, OptState<double>&);

// ---------------------------------------------------------------------------
// Gradient checking

double relative_error(double a, double b) {
  const double diff = std::abs(a - b);
  if (diff == 0.0) return 0.0;
  return diff / std::max({std::abs(a), std::abs(b), 1e-8});
}

GradCheckResult grad_check(Network<double>& net, const Batch<double>& input, const LossFn& loss,
                           const GradCheckOptions& options) {
  Batch<double> dout;
  loss(net.forward(input), dout);
  std::vector<double> analytic(net.param_count());
  net.backward(dout, analytic);

  // Even split across parameterized layers, topped up proportionally to layer
  // size so the total reaches min_params whenever the network has that many.
  std::vector<std::size_t> layers;
  for (std::size_t l = 0; l < net.specs().size(); ++l) {
    if (net.specs()[l].param_count() > 0) layers.push_back(l);
  }
  GradCheckResult result;
  if (layers.empty()) return result;
  const std::size_t total = net.param_count();
  const std::size_t even = (options.min_params + layers.size() - 1) / layers.size();
  Rng rng(options.seed);
  std::vector<std::size_t> chosen;
  for (std::size_t l : layers) {
    const std::size_t count = net.specs()[l].param_count();
    const std::size_t offset = net.param_offset(l);
    const std::size_t proportional = (options.min_params * count + total - 1) / total;
    const std::size_t quota = std::min(count, std::max(even, proportional));
    if (quota == count) {
      for (std::size_t i = 0; i < count; ++i) chosen.push_back(offset + i);
    } else {
      std::vector<std::size_t> pick;
      while (pick.size() < quota) {
        const std::size_t i = offset + rng.below(count);
        if (std::find(pick.begin(), pick.end(), i) == pick.end()) pick.push_back(i);
      }
      chosen.insert(chosen.end(), pick.begin(), pick.end());
    }
  }

  Batch<double> scratch;
  auto params = net.params();
  const auto base = net.branch_signature();
  for (std::size_t idx : chosen) {
    const double saved = params[idx];
    double step = options.step;
    std::optional<double> numeric;
    while (true) {
      params[idx] = saved + step;
      const double up = loss(net.forward(input), scratch);
      const bool same_up = net.branch_signature() == base;
      params[idx] = saved - step;
      const double down = loss(net.forward(input), scratch);
      const bool same_down = net.branch_signature() == base;
      params[idx] = saved;
      if (same_up && same_down) {
        numeric = (up - down) / (2.0 * step);
        break;
      }
      if (step / 10.0 < options.min_step) break;
      step /= 10.0;
      ++result.retried;
    }
    if (!numeric) {
      ++result.skipped;
      continue;
    }
    const double err = relative_error(analytic[idx], *numeric);
    if (result.checked == 0 || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_param = idx;
      result.worst_layer = net.layer_of_param(idx);
    }
    ++result.checked;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Model files

void write_f32_le(std::ostream& out, std::span<const float> values) {
  std::vector<unsigned char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(values[i]);
    bytes[4 * i + 0] = static_cast<unsigned char>(u & 0xff);
    bytes[4 * i + 1] = static_cast<unsigned char>((u >> 8) & 0xff);
    bytes[4 * i + 2] = static_cast<unsigned char>((u >> 16) & 0xff);
    bytes[4 * i + 3] = static_cast<unsigned char>((u >> 24) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing float32 data");
}

std::vector<float> read_f32_le(std::istream& in, std::size_t count) {
  std::vector<unsigned char> bytes(count * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw Error("truncated float32 data: expected " + std::to_string(count) + " values");
  }
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t u = std::uint32_t(bytes[4 * i]) | (std::uint32_t(bytes[4 * i + 1]) << 8) |
                            (std::uint32_t(bytes[4 * i + 2]) << 16) |
                            (std::uint32_t(bytes[4 * i + 3]) << 24);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

void save_model_file(const std::string& path, const ModelFile& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file " + path);
  out << "memdecode-model 1\n";
  out << "input " << model.input.length << " " << model.input.channels << "\n";
  for (const auto& s : model.specs) out << "layer " << s.describe() << "\n";
  for (const auto& [k, v] : model.metadata) out << "meta " << k << "=" << v << "\n";
  out << "params " << model.params.size() << "\n";
  out << "end_header\n";
  write_f32_le(out, model.params);
}

ModelFile load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file " + path);
  std::string line;
  if (!std::getline(in, line) || line != "memdecode-model 1") {
    throw Error(path + ": not a memdecode model file");
  }
  ModelFile m;
  std::size_t n_params = 0;
  bool have_params = false;
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    const auto sp = line.find(' ');
    const std::string key = line.substr(0, sp);
    const std::string rest = sp == std::string::npos ? "" : line.substr(sp + 1);
    if (key == "input") {
      std::istringstream is(rest);
      is >> m.input.length >> m.input.channels;
    } else if (key == "layer") {
      m.specs.push_back(LayerSpec::parse(rest));
    } else if (key == "meta") {
      const auto eq = rest.find('=');
      m.metadata.emplace_back(rest.substr(0, eq), eq == std::string::npos ? "" : rest.substr(eq + 1));
    } else if (key == "params") {
      n_params = std::stoul(rest);
      have_params = true;
    } else {
      throw Error(path + ": unknown header line '" + line + "'");
    }
  }
  if (!have_params) throw Error(path + ": header lacks a params line");
  std::size_t expected = 0;
  for (const auto& s : m.specs) expected += s.param_count();
  if (expected != n_params) throw Error(path + ": parameter count does not match layer specs");
  m.params = read_f32_le(in, n_params);
  return m;
}

}  // namespace memdecode::nn

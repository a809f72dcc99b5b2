// SPDX-License-Identifier: Apache-2.0
#include "ptsc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>

PTSC_BEGIN_NAMESPACE
namespace ops {

namespace {

using Impl = std::shared_ptr<detail::TensorImpl>;

inline Real dot(const Real* a, const Real* b, std::size_t n) {
  Real s = 0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline void axpy(Real alpha, const Real* x, Real* y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Weight view w(r, c, k) = base[r * rs + c * cs + k * ks].
struct KernelView {
  const Real* base;
  std::ptrdiff_t rs, cs, ks;
  Real at(std::size_t r, std::size_t c, std::size_t k) const {
    return base[static_cast<std::ptrdiff_t>(r) * rs + static_cast<std::ptrdiff_t>(c) * cs +
                static_cast<std::ptrdiff_t>(k) * ks];
  }
};

// out[r][t] += sum_c sum_k w(r, c, k) * in[c][t + k - P] over in-range frames,
// four output rows at a time.
template <std::size_t KF>
void correlate_rows(const Real* in, std::size_t C, std::size_t Tin, KernelView w, std::size_t Kdyn,
                    std::ptrdiff_t P, Real* out, std::size_t R, std::size_t To) {
  const std::size_t K = KF ? KF : Kdyn;
  const auto tin = static_cast<std::ptrdiff_t>(Tin);
  const auto to = static_cast<std::ptrdiff_t>(To);
  const std::ptrdiff_t lo = std::min(to, std::max<std::ptrdiff_t>(0, P));
  const std::ptrdiff_t hi = std::max(lo, std::min(to, tin - static_cast<std::ptrdiff_t>(K) + 1 + P));
  constexpr std::size_t RB = 4;
  std::vector<Real> wbuf(RB * K);
  for (std::size_t r0 = 0; r0 < R; r0 += RB) {
    const std::size_t rn = std::min(RB, R - r0);
    for (std::size_t c = 0; c < C; ++c) {
      const Real* xr = in + c * Tin;
      std::fill(wbuf.begin(), wbuf.end(), Real(0));
      for (std::size_t j = 0; j < rn; ++j)
        for (std::size_t k = 0; k < K; ++k) wbuf[j * K + k] = w.at(r0 + j, c, k);
      const Real* w0 = wbuf.data();
      const Real* w1 = w0 + K;
      const Real* w2 = w1 + K;
      const Real* w3 = w2 + K;
      Real* o0 = out + r0 * To;
      Real* o1 = rn > 1 ? o0 + To : nullptr;
      Real* o2 = rn > 2 ? o0 + 2 * To : nullptr;
      Real* o3 = rn > 3 ? o0 + 3 * To : nullptr;
      auto edge = [&](std::ptrdiff_t t) {
        Real s[RB] = {0, 0, 0, 0};
        for (std::size_t k = 0; k < K; ++k) {
          const std::ptrdiff_t i = t + static_cast<std::ptrdiff_t>(k) - P;
          if (i < 0 || i >= tin) continue;
          for (std::size_t j = 0; j < rn; ++j) s[j] += wbuf[j * K + k] * xr[i];
        }
        Real* os[RB] = {o0, o1, o2, o3};
        for (std::size_t j = 0; j < rn; ++j) os[j][t] += s[j];
      };
      for (std::ptrdiff_t t = 0; t < lo; ++t) edge(t);
      const Real* xs = xr - P;
      if (rn == RB) {
#pragma omp simd
        for (std::ptrdiff_t t = lo; t < hi; ++t) {
          Real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
          for (std::size_t k = 0; k < K; ++k) {
            const Real v = xs[t + static_cast<std::ptrdiff_t>(k)];
            s0 += w0[k] * v;
            s1 += w1[k] * v;
            s2 += w2[k] * v;
            s3 += w3[k] * v;
          }
          o0[t] += s0;
          o1[t] += s1;
          o2[t] += s2;
          o3[t] += s3;
        }
      } else {
        for (std::size_t j = 0; j < rn; ++j) {
          const Real* wj = w0 + j * K;
          Real* oj = o0 + j * To;
#pragma omp simd
          for (std::ptrdiff_t t = lo; t < hi; ++t) {
            Real s = 0;
            for (std::size_t k = 0; k < K; ++k) s += wj[k] * xs[t + static_cast<std::ptrdiff_t>(k)];
            oj[t] += s;
          }
        }
      }
      for (std::ptrdiff_t t = std::max(hi, lo); t < to; ++t) edge(t);
    }
  }
}

void correlate(const Real* in, std::size_t C, std::size_t Tin, KernelView w, std::size_t K, std::ptrdiff_t P,
               Real* out, std::size_t R, std::size_t To) {
  switch (K) {
    case 1: return correlate_rows<1>(in, C, Tin, w, K, P, out, R, To);
    case 3: return correlate_rows<3>(in, C, Tin, w, K, P, out, R, To);
    case 5: return correlate_rows<5>(in, C, Tin, w, K, P, out, R, To);
    case 7: return correlate_rows<7>(in, C, Tin, w, K, P, out, R, To);
    case 9: return correlate_rows<9>(in, C, Tin, w, K, P, out, R, To);
    default: return correlate_rows<0>(in, C, Tin, w, K, P, out, R, To);
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": " + what + " is undefined");
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": " + what + " must have rank " +
                                std::to_string(rank) + ", got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
  }
}

void check_intervals(std::span<const rf::ValidInterval> valid, std::size_t batch, std::size_t extent,
                     const char* op, bool allow_empty) {
  if (valid.size() != batch) {
    throw std::invalid_argument(std::string(op) + ": expected " + std::to_string(batch) +
                                " valid intervals, got " + std::to_string(valid.size()));
  }
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& v = valid[b];
    if (v.empty()) {
      if (allow_empty) continue;
      throw std::invalid_argument(std::string(op) + ": empty valid interval for sample " +
                                  std::to_string(b) + " (apply the length-1 fallback first)");
    }
    if (v.start < 0 || v.end > static_cast<std::int64_t>(extent)) {
      throw std::invalid_argument(std::string(op) + ": valid interval " + rf::to_string(v) +
                                  " outside [0," + std::to_string(extent) + ")");
    }
  }
}

}  // namespace

Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t padding) {
  require_rank(input, 3, "conv1d", "input");
  require_rank(kernel, 3, "conv1d", "kernel");
  const std::size_t B = input.dim(0), Ci = input.dim(1), T = input.dim(2);
  const std::size_t Co = kernel.dim(0), K = kernel.dim(2);
  if (kernel.dim(1) != Ci) {
    throw std::invalid_argument("conv1d: input has " + std::to_string(Ci) + " channels, kernel expects " +
                                std::to_string(kernel.dim(1)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != Co)) {
    throw std::invalid_argument("conv1d: bias must have shape [" + std::to_string(Co) + "]");
  }
  if (K == 0 || T + 2 * padding < K) {
    throw std::invalid_argument("conv1d: input length " + std::to_string(T) + " with padding " +
                                std::to_string(padding) + " is shorter than kernel " + std::to_string(K));
  }
  const std::size_t To = T + 2 * padding - K + 1;
  const auto P = static_cast<std::ptrdiff_t>(padding);

  // Output frame t reads input frame t + k - padding; [lo, hi) keeps it in range.
  auto range = [P, To, T](std::size_t k) {
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - P;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(To),
                                                       static_cast<std::ptrdiff_t>(T) - shift);
    return std::tuple{shift, lo, hi};
  };

  std::vector<Real> out(B * Co * To, Real(0));
  const Real* x = input.data().data();
  const KernelView wf{kernel.data().data(), static_cast<std::ptrdiff_t>(Ci * K), static_cast<std::ptrdiff_t>(K), 1};
  for (std::size_t b = 0; b < B; ++b) {
    Real* o = out.data() + b * Co * To;
    if (bias.defined()) {
      for (std::size_t co = 0; co < Co; ++co) std::fill(o + co * To, o + (co + 1) * To, bias.data()[co]);
    }
    correlate(x + b * Ci * T, Ci, T, wf, K, P, o, Co, To);
  }

  Impl xi = input.impl(), wi = kernel.impl(), bi = bias.defined() ? bias.impl() : nullptr;
  return make_op_result(
      {B, Co, To}, std::move(out), "conv1d", {&input, &kernel, &bias},
      [=](std::span<const Real> g) {
        Real* gx = grad_sink(xi);
        Real* gw = grad_sink(wi);
        Real* gb = grad_sink(bi);
        const Real* xv = xi->data.data();
        const Real* wv = wi->data.data();
        // The input gradient correlates g with the kernel flipped in time and
        // transposed in channels.
        const KernelView wb{wv + (K - 1), static_cast<std::ptrdiff_t>(K), static_cast<std::ptrdiff_t>(Ci * K), -1};
        for (std::size_t b = 0; b < B; ++b) {
          const Real* gbatch = g.data() + b * Co * To;
          if (gx) correlate(gbatch, Co, To, wb, K, static_cast<std::ptrdiff_t>(K) - 1 - P, gx + b * Ci * T, Ci, T);
          for (std::size_t co = 0; co < Co; ++co) {
            const Real* gr = gbatch + co * To;
            if (gb) {
              Real s = 0;
              for (std::size_t t = 0; t < To; ++t) s += gr[t];
              gb[co] += s;
            }
            if (!gw) continue;
            for (std::size_t ci = 0; ci < Ci; ++ci) {
              const Real* xr = xv + (b * Ci + ci) * T;
              for (std::size_t k = 0; k < K; ++k) {
                auto [shift, lo, hi] = range(k);
                if (hi <= lo) continue;
                gw[(co * Ci + ci) * K + k] += dot(gr + lo, xr + lo + shift, static_cast<std::size_t>(hi - lo));
              }
            }
          }
        }
      });
}

Tensor max_pool1d(const Tensor& input, std::size_t window, std::size_t stride) {
  require_rank(input, 3, "max_pool1d", "input");
  if (window < 1 || stride < 1) throw std::invalid_argument("max_pool1d: window and stride must be >= 1");
  const std::size_t B = input.dim(0), C = input.dim(1), T = input.dim(2);
  if (T < window) {
    throw std::invalid_argument("max_pool1d: input length " + std::to_string(T) + " shorter than window " +
                                std::to_string(window));
  }
  const std::size_t To = (T - window) / stride + 1;
  std::vector<Real> out(B * C * To);
  auto arg = std::make_shared<std::vector<std::size_t>>(B * C * To);
  const Real* x = input.data().data();
  for (std::size_t r = 0; r < B * C; ++r) {
    const Real* xr = x + r * T;
    for (std::size_t j = 0; j < To; ++j) {
      std::size_t best = j * stride;
      for (std::size_t i = best + 1; i < j * stride + window; ++i) {
        if (xr[i] > xr[best]) best = i;
      }
      out[r * To + j] = xr[best];
      (*arg)[r * To + j] = r * T + best;
    }
  }
  Impl xi = input.impl();
  return make_op_result({B, C, To}, std::move(out), "max_pool1d", {&input},
                        [xi, arg](std::span<const Real> g) {
                          Real* gx = grad_sink(xi);
                          if (!gx) return;
                          for (std::size_t i = 0; i < g.size(); ++i) gx[(*arg)[i]] += g[i];
                        });
}

Tensor masked_mean(const Tensor& input, std::span<const rf::ValidInterval> valid) {
  require_rank(input, 3, "masked_mean", "input");
  const std::size_t B = input.dim(0), C = input.dim(1), T = input.dim(2);
  check_intervals(valid, B, T, "masked_mean", false);
  std::vector<Real> out(B * C);
  const Real* x = input.data().data();
  for (std::size_t b = 0; b < B; ++b) {
    const auto s = static_cast<std::size_t>(valid[b].start);
    const auto n = static_cast<std::size_t>(valid[b].length());
    for (std::size_t c = 0; c < C; ++c) {
      const Real* xr = x + (b * C + c) * T + s;
      Real acc = 0;
      for (std::size_t t = 0; t < n; ++t) acc += xr[t];
      out[b * C + c] = acc / static_cast<Real>(n);
    }
  }
  Impl xi = input.impl();
  std::vector<rf::ValidInterval> iv(valid.begin(), valid.end());
  return make_op_result({B, C}, std::move(out), "masked_mean", {&input},
                        [=](std::span<const Real> g) {
                          Real* gx = grad_sink(xi);
                          if (!gx) return;
                          for (std::size_t b = 0; b < B; ++b) {
                            const auto s = static_cast<std::size_t>(iv[b].start);
                            const auto n = static_cast<std::size_t>(iv[b].length());
                            for (std::size_t c = 0; c < C; ++c) {
                              const Real share = g[b * C + c] / static_cast<Real>(n);
                              Real* gr = gx + (b * C + c) * T + s;
                              for (std::size_t t = 0; t < n; ++t) gr[t] += share;
                            }
                          }
                        });
}

Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "affine", "input");
  require_rank(weight, 2, "affine", "weight");
  const std::size_t B = input.dim(0), Fi = input.dim(1), Fo = weight.dim(0);
  if (weight.dim(1) != Fi) {
    throw std::invalid_argument("affine: input has " + std::to_string(Fi) + " features, weight expects " +
                                std::to_string(weight.dim(1)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != Fo)) {
    throw std::invalid_argument("affine: bias must have shape [" + std::to_string(Fo) + "]");
  }
  std::vector<Real> out(B * Fo);
  const Real* x = input.data().data();
  const Real* w = weight.data().data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < Fo; ++o) {
      out[b * Fo + o] = dot(x + b * Fi, w + o * Fi, Fi) + (bias.defined() ? bias.data()[o] : Real(0));
    }
  }
  Impl xi = input.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : nullptr;
  return make_op_result({B, Fo}, std::move(out), "affine", {&input, &weight, &bias},
                        [=](std::span<const Real> g) {
                          Real* gx = grad_sink(xi);
                          Real* gw = grad_sink(wi);
                          Real* gb = grad_sink(bi);
                          for (std::size_t b = 0; b < B; ++b) {
                            for (std::size_t o = 0; o < Fo; ++o) {
                              const Real go = g[b * Fo + o];
                              if (gx) axpy(go, wi->data.data() + o * Fi, gx + b * Fi, Fi);
                              if (gw) axpy(go, xi->data.data() + b * Fi, gw + o * Fi, Fi);
                              if (gb) gb[o] += go;
                            }
                          }
                        });
}

Tensor elementwise(const Tensor& input, Activation fn) {
  if (!input.defined()) throw std::invalid_argument("elementwise: input is undefined");
  const auto x = input.data();
  std::vector<Real> out(x.size());
  switch (fn) {
    case Activation::relu:
      // NaN passes through so that bad inputs surface as a non-finite loss.
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] < 0 ? Real(0) : x[i];
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) {
        // Split by sign so exp never overflows.
        if (x[i] >= 0) {
          out[i] = Real(1) / (Real(1) + std::exp(-x[i]));
        } else {
          const Real e = std::exp(x[i]);
          out[i] = e / (Real(1) + e);
        }
      }
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
      break;
  }
  Impl xi = input.impl();
  auto y = std::make_shared<std::vector<Real>>(out);
  const char* name = fn == Activation::relu ? "relu" : fn == Activation::sigmoid ? "sigmoid" : "tanh";
  return make_op_result(input.shape(), std::move(out), name, {&input}, [xi, y, fn](std::span<const Real> g) {
    Real* gx = grad_sink(xi);
    if (!gx) return;
    const auto& yv = *y;
    switch (fn) {
      case Activation::relu:
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xi->data[i] > 0 ? g[i] : Real(0);
        break;
      case Activation::sigmoid:
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i] * (Real(1) - yv[i]);
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (Real(1) - yv[i] * yv[i]);
        break;
    }
  });
}

std::vector<Real> softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax", "logits");
  const std::size_t B = logits.dim(0), N = logits.dim(1);
  std::vector<Real> p(B * N);
  const Real* z = logits.data().data();
  for (std::size_t b = 0; b < B; ++b) {
    const Real m = *std::max_element(z + b * N, z + (b + 1) * N);
    Real s = 0;
    for (std::size_t n = 0; n < N; ++n) s += p[b * N + n] = std::exp(z[b * N + n] - m);
    for (std::size_t n = 0; n < N; ++n) p[b * N + n] /= s;
  }
  return p;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels,
                             std::span<const Real> sample_weights) {
  require_rank(logits, 2, "softmax_cross_entropy", "logits");
  const std::size_t B = logits.dim(0), N = logits.dim(1);
  if (labels.size() != B || sample_weights.size() != B) {
    throw std::invalid_argument("softmax_cross_entropy: need one label and one weight per sample");
  }
  Real wsum = 0;
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= N) {
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(labels[b]) +
                                  " out of range [0," + std::to_string(N) + ")");
    }
    if (!(sample_weights[b] >= 0)) throw std::invalid_argument("softmax_cross_entropy: negative weight");
    wsum += sample_weights[b];
  }
  if (!(wsum > 0)) throw std::invalid_argument("softmax_cross_entropy: sample weights sum to zero");

  const Real* z = logits.data().data();
  Real loss = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const Real m = *std::max_element(z + b * N, z + (b + 1) * N);
    Real s = 0;
    for (std::size_t n = 0; n < N; ++n) s += std::exp(z[b * N + n] - m);
    const Real logp = z[b * N + static_cast<std::size_t>(labels[b])] - m - std::log(s);
    loss -= sample_weights[b] * logp;
  }
  loss /= wsum;

  Impl zi = logits.impl();
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<Real> wts(sample_weights.begin(), sample_weights.end());
  return make_op_result({1}, {loss}, "softmax_cross_entropy", {&logits},
                        [=](std::span<const Real> g) {
                          Real* gz = grad_sink(zi);
                          if (!gz) return;
                          Tensor view(Shape{B, N}, zi->data);
                          const auto p = softmax_rows(view);
                          for (std::size_t b = 0; b < B; ++b) {
                            const Real scale = g[0] * wts[b] / wsum;
                            for (std::size_t n = 0; n < N; ++n) {
                              const Real target = static_cast<int>(n) == lab[b] ? Real(1) : Real(0);
                              gz[b * N + n] += scale * (p[b * N + n] - target);
                            }
                          }
                        });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data(), y = b.data();
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  Impl ai = a.impl(), bi = b.impl();
  return make_op_result(a.shape(), std::move(out), "add", {&a, &b}, [ai, bi](std::span<const Real> g) {
    if (Real* ga = grad_sink(ai)) axpy(Real(1), g.data(), ga, g.size());
    if (Real* gb = grad_sink(bi)) axpy(Real(1), g.data(), gb, g.size());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data(), y = b.data();
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  Impl ai = a.impl(), bi = b.impl();
  return make_op_result(a.shape(), std::move(out), "mul", {&a, &b}, [ai, bi](std::span<const Real> g) {
    if (Real* ga = grad_sink(ai)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bi->data[i];
    }
    if (Real* gb = grad_sink(bi)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ai->data[i];
    }
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw std::invalid_argument("concat: axis out of range");
  std::size_t outer = 1, inner = 1, total = 0;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == ref[i];
    if (!ok) {
      throw std::invalid_argument("concat: incompatible shapes " + shape_string(ref) + " and " +
                                  shape_string(s));
    }
    widths.push_back(s[axis] * inner);
    total += s[axis];
  }
  Shape shape = ref;
  shape[axis] = total;
  const std::size_t row = total * inner;
  std::vector<Real> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Real* src = parts[p].data().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(src + o * widths[p], src + (o + 1) * widths[p], out.data() + o * row + offset);
    }
    offset += widths[p];
  }

  std::vector<Impl> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  Tensor result(std::move(shape), std::move(out));
  if (!GradMode::enabled()) return result;
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (!any) return result;
  // make_op_result takes a fixed input list, so the node is built by hand here.
  auto node = std::make_shared<detail::TapeNode>();
  node->op = "concat";
  node->inputs = impls;
  node->backward = [impls, widths, outer, row](std::span<const Real> g) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < impls.size(); ++p) {
      if (Real* gp = grad_sink(impls[p])) {
        for (std::size_t o = 0; o < outer; ++o) axpy(Real(1), g.data() + o * row + off, gp + o * widths[p], widths[p]);
      }
      off += widths[p];
    }
  };
  result.impl()->requires_grad = true;
  result.impl()->node = std::move(node);
  return result;
}

Tensor slice(const Tensor& input, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = input.shape();
  if (axis >= s.size() || start + length > s[axis] || length == 0) {
    throw std::invalid_argument("slice: range [" + std::to_string(start) + "," + std::to_string(start + length) +
                                ") invalid for axis " + std::to_string(axis) + " of " + shape_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t src_row = s[axis] * inner, dst_row = length * inner, off = start * inner;
  std::vector<Real> out(outer * dst_row);
  const Real* x = input.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy(x + o * src_row + off, x + o * src_row + off + dst_row, out.data() + o * dst_row);
  }
  Shape shape = s;
  shape[axis] = length;
  Impl xi = input.impl();
  return make_op_result(std::move(shape), std::move(out), "slice", {&input}, [=](std::span<const Real> g) {
    Real* gx = grad_sink(xi);
    if (!gx) return;
    for (std::size_t o = 0; o < outer; ++o) axpy(Real(1), g.data() + o * dst_row, gx + o * src_row + off, dst_row);
  });
}

Tensor scale_rows(const Tensor& input, std::span<const Real> factors) {
  const std::size_t B = input.dim(0);
  if (factors.size() != B) throw std::invalid_argument("scale_rows: need one factor per sample");
  const std::size_t row = input.numel() / std::max<std::size_t>(B, 1);
  const Real* x = input.data().data();
  std::vector<Real> out(input.numel());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < row; ++i) out[b * row + i] = factors[b] * x[b * row + i];
  }
  Impl xi = input.impl();
  std::vector<Real> f(factors.begin(), factors.end());
  return make_op_result(input.shape(), std::move(out), "scale_rows", {&input}, [=](std::span<const Real> g) {
    Real* gx = grad_sink(xi);
    if (!gx) return;
    for (std::size_t b = 0; b < B; ++b) axpy(f[b], g.data() + b * row, gx + b * row, row);
  });
}

Tensor weighted_sum(const Tensor& input, std::span<const Real> weights) {
  if (weights.size() != input.numel()) throw std::invalid_argument("weighted_sum: weight count mismatch");
  const Real s = dot(input.data().data(), weights.data(), weights.size());
  Impl xi = input.impl();
  std::vector<Real> w(weights.begin(), weights.end());
  return make_op_result({1}, {s}, "weighted_sum", {&input}, [xi, w](std::span<const Real> g) {
    if (Real* gx = grad_sink(xi)) axpy(g[0], w.data(), gx, w.size());
  });
}

Tensor sum(const Tensor& input) {
  std::vector<Real> ones(input.numel(), Real(1));
  return weighted_sum(input, ones);
}

Tensor append_table_channels(const Tensor& input, const Tensor& table, std::span<const std::size_t> columns) {
  require_rank(input, 3, "append_table_channels", "input");
  require_rank(table, 2, "append_table_channels", "table");
  const std::size_t B = input.dim(0), D = input.dim(1), T = input.dim(2);
  const std::size_t C = table.dim(0), Tt = table.dim(1);
  if (columns.size() != T) throw std::invalid_argument("append_table_channels: need one column per frame");
  for (auto c : columns) {
    if (c >= Tt) throw std::invalid_argument("append_table_channels: column index out of range");
  }
  const std::size_t Do = D + C;
  std::vector<Real> out(B * Do * T);
  const Real* x = input.data().data();
  const Real* e = table.data().data();
  for (std::size_t b = 0; b < B; ++b) {
    std::copy(x + b * D * T, x + (b + 1) * D * T, out.data() + b * Do * T);
    for (std::size_t c = 0; c < C; ++c) {
      Real* o = out.data() + (b * Do + D + c) * T;
      for (std::size_t t = 0; t < T; ++t) o[t] = e[c * Tt + columns[t]];
    }
  }
  Impl xi = input.impl(), ei = table.impl();
  std::vector<std::size_t> cols(columns.begin(), columns.end());
  return make_op_result({B, Do, T}, std::move(out), "append_table_channels", {&input, &table},
                        [=](std::span<const Real> g) {
                          Real* gx = grad_sink(xi);
                          Real* ge = grad_sink(ei);
                          for (std::size_t b = 0; b < B; ++b) {
                            if (gx) axpy(Real(1), g.data() + b * Do * T, gx + b * D * T, D * T);
                            if (!ge) continue;
                            for (std::size_t c = 0; c < C; ++c) {
                              const Real* gr = g.data() + (b * Do + D + c) * T;
                              for (std::size_t t = 0; t < T; ++t) ge[c * Tt + cols[t]] += gr[t];
                            }
                          }
                        });
}

MaskedBatchNormResult masked_batch_norm(const Tensor& input, std::span<const rf::ValidInterval> valid,
                                        const Tensor& gamma, const Tensor& beta, Real epsilon) {
  require_rank(input, 3, "masked_batch_norm", "input");
  const std::size_t B = input.dim(0), C = input.dim(1), T = input.dim(2);
  check_intervals(valid, B, T, "masked_batch_norm", true);
  if (gamma.numel() != C || beta.numel() != C) {
    throw std::invalid_argument("masked_batch_norm: scale/shift must have " + std::to_string(C) + " entries");
  }
  std::size_t M = 0;
  for (const auto& v : valid) M += static_cast<std::size_t>(v.length());
  if (M == 0) throw std::invalid_argument("masked_batch_norm: no valid frame in the batch");

  const Real* x = input.data().data();
  BatchNormStats stats{std::vector<Real>(C, 0), std::vector<Real>(C, 0), M};
  for (std::size_t c = 0; c < C; ++c) {
    Real s = 0;
    for (std::size_t b = 0; b < B; ++b) {
      const Real* xr = x + (b * C + c) * T;
      for (auto t = valid[b].start; t < valid[b].end; ++t) s += xr[t];
    }
    const Real mean = s / static_cast<Real>(M);
    Real ss = 0;
    for (std::size_t b = 0; b < B; ++b) {
      const Real* xr = x + (b * C + c) * T;
      for (auto t = valid[b].start; t < valid[b].end; ++t) ss += (xr[t] - mean) * (xr[t] - mean);
    }
    stats.mean[c] = mean;
    stats.variance[c] = ss / static_cast<Real>(M);
  }

  std::vector<Real> rstd(C);
  for (std::size_t c = 0; c < C; ++c) rstd[c] = Real(1) / std::sqrt(stats.variance[c] + epsilon);
  std::vector<Real> out(B * C * T);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const Real scale = gamma.data()[c] * rstd[c];
      const Real shift = beta.data()[c] - stats.mean[c] * scale;
      const Real* xr = x + (b * C + c) * T;
      Real* o = out.data() + (b * C + c) * T;
      for (std::size_t t = 0; t < T; ++t) o[t] = xr[t] * scale + shift;
    }
  }

  Impl xi = input.impl(), gi = gamma.impl(), bi = beta.impl();
  std::vector<rf::ValidInterval> iv(valid.begin(), valid.end());
  std::vector<Real> mean = stats.mean;
  Tensor result = make_op_result(
      {B, C, T}, std::move(out), "masked_batch_norm", {&input, &gamma, &beta},
      [=](std::span<const Real> g) {
        Real* gx = grad_sink(xi);
        Real* gg = grad_sink(gi);
        Real* gbeta = grad_sink(bi);
        const Real* xv = xi->data.data();
        const Real inv_m = Real(1) / static_cast<Real>(M);
        for (std::size_t c = 0; c < C; ++c) {
          // Every output frame depends on the statistics; only valid frames feed them.
          Real sum_g = 0, sum_gx = 0;
          for (std::size_t b = 0; b < B; ++b) {
            const Real* gr = g.data() + (b * C + c) * T;
            const Real* xr = xv + (b * C + c) * T;
            for (std::size_t t = 0; t < T; ++t) {
              sum_g += gr[t];
              sum_gx += gr[t] * (xr[t] - mean[c]);
            }
          }
          const Real gam = gi->data[c];
          if (gg) gg[c] += sum_gx * rstd[c];
          if (gbeta) gbeta[c] += sum_g;
          if (!gx) continue;
          const Real d_mean = -gam * rstd[c] * sum_g;
          const Real d_var = Real(-0.5) * gam * rstd[c] * rstd[c] * rstd[c] * sum_gx;
          for (std::size_t b = 0; b < B; ++b) {
            const Real* gr = g.data() + (b * C + c) * T;
            const Real* xr = xv + (b * C + c) * T;
            Real* gxr = gx + (b * C + c) * T;
            for (std::size_t t = 0; t < T; ++t) gxr[t] += gr[t] * gam * rstd[c];
            for (auto t = iv[b].start; t < iv[b].end; ++t) {
              gxr[t] += (d_mean + d_var * Real(2) * (xr[t] - mean[c])) * inv_m;
            }
          }
        }
      });
  return {std::move(result), std::move(stats)};
}

Tensor batch_norm_inference(const Tensor& input, std::span<const Real> mean, std::span<const Real> variance,
                            const Tensor& gamma, const Tensor& beta, Real epsilon) {
  require_rank(input, 3, "batch_norm_inference", "input");
  const std::size_t B = input.dim(0), C = input.dim(1), T = input.dim(2);
  if (mean.size() != C || variance.size() != C || gamma.numel() != C || beta.numel() != C) {
    throw std::invalid_argument("batch_norm_inference: per-channel parameters must have " +
                                std::to_string(C) + " entries");
  }
  std::vector<Real> scale(C), shift(C);
  for (std::size_t c = 0; c < C; ++c) {
    scale[c] = gamma.data()[c] / std::sqrt(variance[c] + epsilon);
    shift[c] = beta.data()[c] - mean[c] * scale[c];
  }
  const Real* x = input.data().data();
  std::vector<Real> out(B * C * T);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const Real* xr = x + (b * C + c) * T;
      Real* o = out.data() + (b * C + c) * T;
      for (std::size_t t = 0; t < T; ++t) o[t] = xr[t] * scale[c] + shift[c];
    }
  }
  Impl xi = input.impl(), gi = gamma.impl(), bi = beta.impl();
  std::vector<Real> mu(mean.begin(), mean.end());
  std::vector<Real> inv(C);
  for (std::size_t c = 0; c < C; ++c) inv[c] = Real(1) / std::sqrt(variance[c] + epsilon);
  return make_op_result({B, C, T}, std::move(out), "batch_norm_inference", {&input, &gamma, &beta},
                        [=](std::span<const Real> g) {
                          Real* gx = grad_sink(xi);
                          Real* gg = grad_sink(gi);
                          Real* gb = grad_sink(bi);
                          const Real* xv = xi->data.data();
                          for (std::size_t b = 0; b < B; ++b) {
                            for (std::size_t c = 0; c < C; ++c) {
                              const Real* gr = g.data() + (b * C + c) * T;
                              const Real* xr = xv + (b * C + c) * T;
                              if (gx) axpy(gi->data[c] * inv[c], gr, gx + (b * C + c) * T, T);
                              for (std::size_t t = 0; t < T; ++t) {
                                if (gg) gg[c] += gr[t] * (xr[t] - mu[c]) * inv[c];
                                if (gb) gb[c] += gr[t];
                              }
                            }
                          }
                        });
}

}  // namespace ops
PTSC_END_NAMESPACE

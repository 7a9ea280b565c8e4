#include "mscare/kernels.hpp"

#include <cmath>
#include <cstring>

namespace mscare::nn {

namespace {

// 512-bit vectors via GCC vector extensions; lowered to narrower ISAs when
// AVX-512 is not enabled.
template <typename T>
struct Simd;
template <>
struct Simd<float> {
  typedef float V __attribute__((vector_size(64)));
  static constexpr int N = 16;
};
template <>
struct Simd<double> {
  typedef double V __attribute__((vector_size(64)));
  static constexpr int N = 8;
};

template <typename T>
using Vec = typename Simd<T>::V;

template <typename T>
inline Vec<T> load(const T* p) {
  Vec<T> v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

template <typename T>
inline void store(T* p, Vec<T> v) {
  std::memcpy(p, &v, sizeof(v));
}

template <typename T>
inline T hsum(Vec<T> v) {
  T s = 0;
  for (int i = 0; i < Simd<T>::N; ++i) s += v[i];
  return s;
}

// Zero-padded, flattened channel buffers. A convolution tap becomes a constant
// offset in the flat index, so the kernels run over one contiguous range and
// simply compute (and later discard) values on the padding ring.
template <typename T>
struct PaddedLayout {
  Shape3 s;
  int pad;
  long wp, plane, vol;
  long margin, stride;
  long p0, p_end;
  std::vector<long> taps;

  PaddedLayout(const Shape3& shape, int ksize) : s(shape), pad(ksize / 2) {
    wp = s[2] + 2 * pad;
    plane = static_cast<long>(s[1] + 2 * pad) * wp;
    vol = static_cast<long>(s[0] + 2 * pad) * plane;
    constexpr int n = Simd<T>::N;
    margin = (pad ? plane + wp + 1 : 0) + n;
    stride = margin + vol + margin;
    p0 = interior(0, 0, 0);
    const long last = interior(s[0] - 1, s[1] - 1, s[2] - 1);
    p_end = p0 + ((last - p0 + 1 + n - 1) / n) * n;
    for (int dz = -pad; dz <= pad; ++dz)
      for (int dy = -pad; dy <= pad; ++dy)
        for (int dx = -pad; dx <= pad; ++dx) taps.push_back(dz * plane + dy * wp + dx);
  }

  long interior(int z, int y, int x) const {
    return static_cast<long>(z + pad) * plane + static_cast<long>(y + pad) * wp + (x + pad);
  }

  std::vector<T> pad_tensor(const Tensor<T>& t) const {
    std::vector<T> buf(static_cast<std::size_t>(t.channels()) * stride, T(0));
    for (int c = 0; c < t.channels(); ++c) {
      const T* src = t.channel(c);
      T* dst = buf.data() + c * stride + margin;
      for (int z = 0; z < s[0]; ++z)
        for (int y = 0; y < s[1]; ++y) {
          std::memcpy(dst + interior(z, y, 0), src + (static_cast<long>(z) * s[1] + y) * s[2], sizeof(T) * s[2]);
        }
    }
    return buf;
  }

  Tensor<T> unpad(const std::vector<T>& buf, int channels, std::span<const T> bias) const {
    Tensor<T> t(channels, s);
    for (int c = 0; c < channels; ++c) {
      const T* src = buf.data() + c * stride + margin;
      T* dst = t.channel(c);
      const T b = bias.empty() ? T(0) : bias[c];
      for (int z = 0; z < s[0]; ++z)
        for (int y = 0; y < s[1]; ++y) {
          const T* row = src + interior(z, y, 0);
          T* out = dst + (static_cast<long>(z) * s[1] + y) * s[2];
          for (int x = 0; x < s[2]; ++x) out[x] = row[x] + b;
        }
    }
    return t;
  }
};

// out[co][p] = sum_ci sum_k w[ci][k][co] * in[ci][p + taps[k]] for COB output
// channels starting at cb and PB consecutive vectors starting at p.
template <typename T, int COB, int PB>
inline void conv_block(const T* in, long stride, int cin, const T* w, int cout, int cb, const long* taps, int nt,
                       long p, T* out) {
  constexpr int n = Simd<T>::N;
  Vec<T> acc[COB][PB];
  for (int c = 0; c < COB; ++c)
    for (int j = 0; j < PB; ++j) acc[c][j] = Vec<T>{};
  for (int ci = 0; ci < cin; ++ci) {
    const T* src = in + ci * stride + p;
    const T* wk = w + static_cast<long>(ci) * nt * cout + cb;
    for (int k = 0; k < nt; ++k) {
      Vec<T> xv[PB];
#pragma GCC unroll 8
      for (int j = 0; j < PB; ++j) xv[j] = load(src + taps[k] + j * n);
      const T* wc = wk + static_cast<long>(k) * cout;
#pragma GCC unroll 16
      for (int c = 0; c < COB; ++c) {
        const T wv = wc[c];
#pragma GCC unroll 8
        for (int j = 0; j < PB; ++j) acc[c][j] += xv[j] * wv;
      }
    }
  }
  for (int c = 0; c < COB; ++c)
    for (int j = 0; j < PB; ++j) store(out + (cb + c) * stride + p + j * n, acc[c][j]);
}

template <typename T, int COB>
void conv_range(const T* in, long stride, int cin, const T* w, int cout, int cb0, int cb1, const std::vector<long>& taps,
                long p0, long p_end, T* out) {
  constexpr int n = Simd<T>::N;
  const int nt = static_cast<int>(taps.size());
  for (int cb = cb0; cb + COB <= cb1; cb += COB) {
    for (long p = p0; p < p_end; p += n) conv_block<T, COB, 1>(in, stride, cin, w, cout, cb, taps.data(), nt, p, out);
  }
}

// One vector of positions per block: wider position blocks were measured to
// run at less than half the speed with GCC.
template <typename T>
void conv_dispatch(const T* in, long stride, int cin, const T* w, int cout, const std::vector<long>& taps, long p0,
                   long p_end, T* out) {
  int cb = 0;
  const int c16 = cout / 16 * 16;
  conv_range<T, 16>(in, stride, cin, w, cout, cb, c16, taps, p0, p_end, out);
  cb = c16;
  if (cout - cb >= 8) {
    conv_range<T, 8>(in, stride, cin, w, cout, cb, cb + 8, taps, p0, p_end, out);
    cb += 8;
  }
  if (cout - cb >= 4) {
    conv_range<T, 4>(in, stride, cin, w, cout, cb, cb + 4, taps, p0, p_end, out);
    cb += 4;
  }
  if (cout - cb >= 2) {
    conv_range<T, 2>(in, stride, cin, w, cout, cb, cb + 2, taps, p0, p_end, out);
    cb += 2;
  }
  if (cout - cb >= 1) conv_range<T, 1>(in, stride, cin, w, cout, cb, cb + 1, taps, p0, p_end, out);
}

// dw[ci][k][co] += sum_p dy[co][p] * x[ci][p + taps[k]] for COB output
// channels and KB taps, tiled over p so the dy and x tiles stay in cache. dy is
// read through memory operands to leave the registers to the accumulators.
template <typename T, int COB, int KB>
void weight_grad_block(const T* x, long stride, int cin, const T* dy, int cout, int cb, const std::vector<long>& taps,
                       long t0, long t1, T* dw) {
  constexpr int n = Simd<T>::N;
  const int nt = static_cast<int>(taps.size());
  for (int ci = 0; ci < cin; ++ci) {
    const T* src = x + ci * stride;
    for (int k0 = 0; k0 + KB <= nt; k0 += KB) {
      Vec<T> acc[KB][COB];
      for (int a = 0; a < KB; ++a)
        for (int c = 0; c < COB; ++c) acc[a][c] = Vec<T>{};
      for (long p = t0; p < t1; p += n) {
#pragma GCC unroll 8
        for (int a = 0; a < KB; ++a) {
          const Vec<T> xv = load(src + p + taps[k0 + a]);
#pragma GCC unroll 16
          for (int c = 0; c < COB; ++c) acc[a][c] += load(dy + (cb + c) * stride + p) * xv;
        }
      }
      for (int a = 0; a < KB; ++a)
        for (int c = 0; c < COB; ++c) dw[(static_cast<long>(ci) * nt + k0 + a) * cout + cb + c] += hsum<T>(acc[a][c]);
    }
  }
}

// GEMM form of the same sum for cout a multiple of the vector width: dy is
// transposed to [p][co] so one vector holds N output channels, and x values
// are broadcast per tap. Accumulators never need a horizontal sum.
template <typename T, int NT>
void weight_grad_gemm(const T* x, long stride, int cin, const T* dy, int cout, const std::vector<long>& taps, long p0,
                      long p_end, T* dw) {
  constexpr int n = Simd<T>::N;
  constexpr long kTile = 1024;
  const long len = p_end - p0;
  std::vector<T> dyt(static_cast<std::size_t>(len) * cout);
  for (long i = 0; i < len; ++i)
    for (int c = 0; c < cout; ++c) dyt[i * cout + c] = dy[c * stride + p0 + i];
  long tap[NT];
  for (int k = 0; k < NT; ++k) tap[k] = taps[k];
  for (long t0 = 0; t0 < len; t0 += kTile) {
    const long t1 = std::min(len, t0 + kTile);
    for (int cb = 0; cb < cout; cb += n)
      for (int ci = 0; ci < cin; ++ci) {
        const T* src = x + ci * stride + p0;
        Vec<T> acc[NT];
        for (int k = 0; k < NT; ++k) acc[k] = Vec<T>{};
        for (long i = t0; i < t1; ++i) {
          const Vec<T> d = load(&dyt[i * cout + cb]);
#pragma GCC unroll 27
          for (int k = 0; k < NT; ++k) acc[k] += d * src[i + tap[k]];
        }
        for (int k = 0; k < NT; ++k) {
          T* out = dw + (static_cast<long>(ci) * NT + k) * cout + cb;
          store(out, load(out) + acc[k]);
        }
      }
  }
}

template <typename T, int KB>
void weight_grad(const T* x, long stride, int cin, const T* dy, int cout, const std::vector<long>& taps, long p0,
                 long p_end, T* dw) {
  if (cout % Simd<T>::N == 0) {
    if (taps.size() == 27) return weight_grad_gemm<T, 27>(x, stride, cin, dy, cout, taps, p0, p_end, dw);
    if (taps.size() == 1) return weight_grad_gemm<T, 1>(x, stride, cin, dy, cout, taps, p0, p_end, dw);
  }
  constexpr long kTile = 2048;
  for (long t0 = p0; t0 < p_end; t0 += kTile) {
    const long t1 = std::min(p_end, t0 + kTile);
    int cb = 0;
    for (; cb + 8 <= cout; cb += 8) weight_grad_block<T, 8, KB>(x, stride, cin, dy, cout, cb, taps, t0, t1, dw);
    for (; cb + 4 <= cout; cb += 4) weight_grad_block<T, 4, KB>(x, stride, cin, dy, cout, cb, taps, t0, t1, dw);
    for (; cb < cout; ++cb) weight_grad_block<T, 1, KB>(x, stride, cin, dy, cout, cb, taps, t0, t1, dw);
  }
}

void check_ksize(int ksize) {
  if (ksize != 1 && ksize != 3) throw Error("convolution kernel size must be 1 or 3");
}

// Upsampling along one axis of a [outer][n][inner] block to [outer][2n][inner].
template <typename T>
void upsample_axis(const T* in, T* out, long outer, int n, long inner) {
  for (long o = 0; o < outer; ++o) {
    const T* src = in + o * n * inner;
    T* dst = out + o * 2 * n * inner;
    for (int i = 0; i < n; ++i) {
      const T* c = src + i * inner;
      const T* prev = src + std::max(i - 1, 0) * inner;
      const T* next = src + std::min(i + 1, n - 1) * inner;
      T* even = dst + (2 * i) * inner;
      T* odd = dst + (2 * i + 1) * inner;
      for (long k = 0; k < inner; ++k) {
        even[k] = T(0.75) * c[k] + T(0.25) * prev[k];
        odd[k] = T(0.75) * c[k] + T(0.25) * next[k];
      }
    }
  }
}

template <typename T>
void upsample_axis_adjoint(const T* dout, T* din, long outer, int n, long inner) {
  for (long o = 0; o < outer; ++o) {
    const T* src = dout + o * 2 * n * inner;
    T* dst = din + o * n * inner;
    std::fill(dst, dst + n * inner, T(0));
    for (int i = 0; i < n; ++i) {
      const T* even = src + (2 * i) * inner;
      const T* odd = src + (2 * i + 1) * inner;
      T* c = dst + i * inner;
      T* prev = dst + std::max(i - 1, 0) * inner;
      T* next = dst + std::min(i + 1, n - 1) * inner;
      for (long k = 0; k < inner; ++k) {
        c[k] += T(0.75) * (even[k] + odd[k]);
        prev[k] += T(0.25) * even[k];
        next[k] += T(0.25) * odd[k];
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int cout, int ksize) {
  check_ksize(ksize);
  const int cin = x.channels();
  const std::size_t nt = static_cast<std::size_t>(ksize) * ksize * ksize;
  if (weight.size() != static_cast<std::size_t>(cin) * nt * cout) throw Error("convolution weight size does not match its input");
  if (!bias.empty() && bias.size() != static_cast<std::size_t>(cout)) throw Error("convolution bias size mismatch");
  PaddedLayout<T> lay(x.spatial(), ksize);
  const auto in = lay.pad_tensor(x);
  std::vector<T> out(static_cast<std::size_t>(cout) * lay.stride, T(0));
  conv_dispatch<T>(in.data() + lay.margin, lay.stride, cin, weight.data(), cout, lay.taps, lay.p0, lay.p_end,
                   out.data() + lay.margin);
  return lay.unpad(out, cout, bias);
}

template <typename T>
void conv3d_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, int ksize,
                     std::span<T> dweight, std::span<T> dbias, Tensor<T>* dx) {
  check_ksize(ksize);
  const int cin = x.channels();
  const int cout = dy.channels();
  const int nt = ksize * ksize * ksize;
  if (dy.spatial() != x.spatial()) throw Error("convolution gradient shape mismatch");
  if (dweight.size() != static_cast<std::size_t>(cin) * nt * cout) throw Error("convolution weight-gradient size mismatch");
  PaddedLayout<T> lay(x.spatial(), ksize);
  const auto xp = lay.pad_tensor(x);
  const auto dyp = lay.pad_tensor(dy);

  for (int c = 0; c < cout; ++c) {
    const T* g = dy.channel(c);
    T s = 0;
    for (std::size_t i = 0; i < dy.channel_size(); ++i) s += g[i];
    dbias[c] += s;
  }
  if (nt % 3 == 0) {
    weight_grad<T, 3>(xp.data() + lay.margin, lay.stride, cin, dyp.data() + lay.margin, cout, lay.taps, lay.p0,
                           lay.p_end, dweight.data());
  } else {
    weight_grad<T, 1>(xp.data() + lay.margin, lay.stride, cin, dyp.data() + lay.margin, cout, lay.taps, lay.p0,
                           lay.p_end, dweight.data());
  }

  if (dx) {
    // Input gradient is a convolution of dy with the flipped, transposed kernel.
    std::vector<T> wt(weight.size());
    for (int ci = 0; ci < cin; ++ci)
      for (int k = 0; k < nt; ++k)
        for (int co = 0; co < cout; ++co)
          wt[(static_cast<long>(co) * nt + (nt - 1 - k)) * cin + ci] = weight[(static_cast<long>(ci) * nt + k) * cout + co];
    std::vector<T> dxp(static_cast<std::size_t>(cin) * lay.stride, T(0));
    conv_dispatch<T>(dyp.data() + lay.margin, lay.stride, cout, wt.data(), cin, lay.taps, lay.p0, lay.p_end,
                     dxp.data() + lay.margin);
    *dx = lay.unpad(dxp, cin, {});
  }
}

template <typename T>
void leaky_relu_forward(Tensor<T>& x, T slope) {
  for (T& v : x.data) v = v > T(0) ? v : v * slope;
}

template <typename T>
void leaky_relu_backward(const Tensor<T>& y, Tensor<T>& dy, T slope) {
  for (std::size_t i = 0; i < dy.size(); ++i) {
    if (!(y.data[i] > T(0))) dy.data[i] *= slope;
  }
}

template <typename T>
std::vector<T> dropout_forward(Tensor<T>& x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout rate must lie in [0, 1)");
  const T keep_scale = T(1.0 / (1.0 - rate));
  // Compare the top 53 bits of each draw against the rate.
  const uint64_t threshold = static_cast<uint64_t>(std::ldexp(rate, 53));
  std::vector<T> mult(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mult[i] = (rng() >> 11) < threshold ? T(0) : keep_scale;
    x.data[i] *= mult[i];
  }
  return mult;
}

template <typename T>
void apply_multiplier(Tensor<T>& t, const std::vector<T>& mult) {
  for (std::size_t i = 0; i < t.size(); ++i) t.data[i] *= mult[i];
}

template <typename T>
Tensor<T> max_pool2_forward(const Tensor<T>& x, std::vector<uint8_t>& argmax) {
  const Shape3 s = x.spatial();
  for (int a = 0; a < 3; ++a) {
    if (s[a] % 2 != 0) throw Error("max pooling needs even spatial size on axis " + std::to_string(a));
  }
  const Shape3 o{s[0] / 2, s[1] / 2, s[2] / 2};
  Tensor<T> y(x.channels(), o);
  argmax.assign(y.size(), 0);
  std::size_t idx = 0;
  for (int c = 0; c < x.channels(); ++c) {
    const T* src = x.channel(c);
    for (int z = 0; z < o[0]; ++z)
      for (int yy = 0; yy < o[1]; ++yy)
        for (int xx = 0; xx < o[2]; ++xx, ++idx) {
          T best = 0;
          uint8_t arg = 0;
          for (int k = 0; k < 8; ++k) {
            const int dz = k >> 2, dy = (k >> 1) & 1, dx = k & 1;
            const T v = src[(static_cast<long>(2 * z + dz) * s[1] + 2 * yy + dy) * s[2] + 2 * xx + dx];
            if (k == 0 || v > best) {
              best = v;
              arg = static_cast<uint8_t>(k);
            }
          }
          y.data[idx] = best;
          argmax[idx] = arg;
        }
  }
  return y;
}

template <typename T>
Tensor<T> max_pool2_backward(const Tensor<T>& dy, const std::vector<uint8_t>& argmax, const Shape3& s) {
  Tensor<T> dx(dy.channels(), s);
  const Shape3 o = dy.spatial();
  std::size_t idx = 0;
  for (int c = 0; c < dy.channels(); ++c) {
    T* dst = dx.channel(c);
    for (int z = 0; z < o[0]; ++z)
      for (int yy = 0; yy < o[1]; ++yy)
        for (int xx = 0; xx < o[2]; ++xx, ++idx) {
          const int k = argmax[idx];
          const int dz = k >> 2, dyo = (k >> 1) & 1, dxo = k & 1;
          dst[(static_cast<long>(2 * z + dz) * s[1] + 2 * yy + dyo) * s[2] + 2 * xx + dxo] += dy.data[idx];
        }
  }
  return dx;
}

template <typename T>
Tensor<T> upsample2_forward(const Tensor<T>& x) {
  const Shape3 s = x.spatial();
  const long c = x.channels();
  Tensor<T> a({int(c), s[0], s[1], 2 * s[2]});
  upsample_axis(x.data.data(), a.data.data(), c * s[0] * s[1], s[2], 1);
  Tensor<T> b({int(c), s[0], 2 * s[1], 2 * s[2]});
  upsample_axis(a.data.data(), b.data.data(), c * s[0], s[1], 2L * s[2]);
  Tensor<T> out({int(c), 2 * s[0], 2 * s[1], 2 * s[2]});
  upsample_axis(b.data.data(), out.data.data(), c, s[0], 4L * s[1] * s[2]);
  return out;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& dy) {
  const Shape3 o = dy.spatial();
  const Shape3 s{o[0] / 2, o[1] / 2, o[2] / 2};
  const long c = dy.channels();
  Tensor<T> b({int(c), s[0], 2 * s[1], 2 * s[2]});
  upsample_axis_adjoint(dy.data.data(), b.data.data(), c, s[0], 4L * s[1] * s[2]);
  Tensor<T> a({int(c), s[0], s[1], 2 * s[2]});
  upsample_axis_adjoint(b.data.data(), a.data.data(), c * s[0], s[1], 2L * s[2]);
  Tensor<T> dx({int(c), s[0], s[1], s[2]});
  upsample_axis_adjoint(a.data.data(), dx.data.data(), c * s[0] * s[1], s[2], 1);
  return dx;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.spatial() != b.spatial()) throw Error("channel concatenation needs equal spatial shapes");
  Tensor<T> out(a.channels() + b.channels(), a.spatial());
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.size());
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  Tensor<T> p(logits.shape);
  const int c = logits.channels();
  const std::size_t n = logits.channel_size();
  for (std::size_t i = 0; i < n; ++i) {
    T mx = logits.data[i];
    for (int k = 1; k < c; ++k) mx = std::max(mx, logits.data[k * n + i]);
    T sum = 0;
    for (int k = 0; k < c; ++k) {
      const T e = std::exp(logits.data[k * n + i] - mx);
      p.data[k * n + i] = e;
      sum += e;
    }
    const T inv = T(1) / sum;
    for (int k = 0; k < c; ++k) p.data[k * n + i] *= inv;
  }
  return p;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& prob, const Tensor<T>& dprob) {
  Tensor<T> dl(prob.shape);
  const int c = prob.channels();
  const std::size_t n = prob.channel_size();
  for (std::size_t i = 0; i < n; ++i) {
    T dot = 0;
    for (int k = 0; k < c; ++k) dot += prob.data[k * n + i] * dprob.data[k * n + i];
    for (int k = 0; k < c; ++k) dl.data[k * n + i] = prob.data[k * n + i] * (dprob.data[k * n + i] - dot);
  }
  return dl;
}

#define MSCARE_INSTANTIATE(T)                                                                                      \
  template Tensor<T> conv3d_forward(const Tensor<T>&, std::span<const T>, std::span<const T>, int, int);           \
  template void conv3d_backward(const Tensor<T>&, std::span<const T>, const Tensor<T>&, int, std::span<T>,         \
                                std::span<T>, Tensor<T>*);                                                        \
  template void leaky_relu_forward(Tensor<T>&, T);                                                                 \
  template void leaky_relu_backward(const Tensor<T>&, Tensor<T>&, T);                                              \
  template std::vector<T> dropout_forward(Tensor<T>&, double, std::mt19937_64&);                                  \
  template void apply_multiplier(Tensor<T>&, const std::vector<T>&);                                               \
  template Tensor<T> max_pool2_forward(const Tensor<T>&, std::vector<uint8_t>&);                                   \
  template Tensor<T> max_pool2_backward(const Tensor<T>&, const std::vector<uint8_t>&, const Shape3&);             \
  template Tensor<T> upsample2_forward(const Tensor<T>&);                                                          \
  template Tensor<T> upsample2_backward(const Tensor<T>&);                                                         \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> softmax(const Tensor<T>&);                                                                    \
  template Tensor<T> softmax_backward(const Tensor<T>&, const Tensor<T>&);

MSCARE_INSTANTIATE(float)
MSCARE_INSTANTIATE(double)

#undef MSCARE_INSTANTIATE

}  // namespace mscare::nn

#include "shadownet/ops.hpp"

#include <algorithm>
#include <cmath>

namespace shadownet {

int conv_out_dim(int in, int k, int stride, Padding p, const char* dim_name) {
  if (stride < 1)
    throw InvalidParams(std::string("stride must be >= 1 on ") + dim_name);
  if (p == Padding::valid) {
    if (in < k)
      throw ShapeError(std::string("window larger than input on ") + dim_name +
                       ": " + std::to_string(k) + " > " + std::to_string(in));
    return (in - k) / stride + 1;
  }
  return (in + stride - 1) / stride;
}

int pad_before(int in, int out, int k, int stride, Padding p) {
  if (p == Padding::valid) return 0;
  const int total = std::max(0, (out - 1) * stride + k - in);
  return total / 2;
}

namespace ops {
namespace span {

template <typename T>
void conv2d(const T* in, int h, int w, int cin, const T* filt, int kh, int kw,
            int n, int stride, Padding padding, T* out) {
  const int oh = conv_out_dim(h, kh, stride, padding, "height");
  const int ow = conv_out_dim(w, kw, stride, padding, "width");
  const int pt = pad_before(h, oh, kh, stride, padding);
  const int pl = pad_before(w, ow, kw, stride, padding);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const int y0 = oy * stride - pt;
      const int x0 = ox * stride - pl;
      for (int o = 0; o < n; ++o) {
        double acc = 0;
        for (int ky = 0; ky < kh; ++ky) {
          const int y = y0 + ky;
          if (y < 0 || y >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int x = x0 + kx;
            if (x < 0 || x >= w) continue;
            const T* px = in + (size_t(y) * w + x) * cin;
            const T* fk = filt + (size_t(ky) * kw + kx) * cin * n + o;
            for (int ci = 0; ci < cin; ++ci)
              acc += double(px[ci]) * double(fk[size_t(ci) * n]);
          }
        }
        out[(size_t(oy) * ow + ox) * n + o] = T(acc);
      }
    }
  }
}

template <typename T>
void dwconv2d(const T* in, int h, int w, int c, const T* filt, int kh, int kw,
              int stride, Padding padding, T* out) {
  const int oh = conv_out_dim(h, kh, stride, padding, "height");
  const int ow = conv_out_dim(w, kw, stride, padding, "width");
  const int pt = pad_before(h, oh, kh, stride, padding);
  const int pl = pad_before(w, ow, kw, stride, padding);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const int y0 = oy * stride - pt;
      const int x0 = ox * stride - pl;
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (int ky = 0; ky < kh; ++ky) {
          const int y = y0 + ky;
          if (y < 0 || y >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int x = x0 + kx;
            if (x < 0 || x >= w) continue;
            acc += double(in[(size_t(y) * w + x) * c + ch]) *
                   double(filt[(size_t(ky) * kw + kx) * c + ch]);
          }
        }
        out[(size_t(oy) * ow + ox) * c + ch] = T(acc);
      }
    }
  }
}

template <typename T>
void pointwise(const T* in, int pixels, int cin, const T* filt, int n, T* out,
               T* pixel_tmp) {
  for (int p = 0; p < pixels; ++p) {
    const T* px = in + size_t(p) * cin;
    for (int ci = 0; ci < cin; ++ci) pixel_tmp[ci] = px[ci];
    T* dst = out + size_t(p) * n;
    for (int o = 0; o < n; ++o) {
      double acc = 0;
      for (int ci = 0; ci < cin; ++ci)
        acc += double(pixel_tmp[ci]) * double(filt[size_t(ci) * n + o]);
      dst[o] = T(acc);
    }
  }
}

template <typename T>
void shuffle(T* data, int pixels, int c, const int* perm, const T* scale,
             T* pixel_tmp) {
  for (int p = 0; p < pixels; ++p) {
    T* px = data + size_t(p) * c;
    for (int i = 0; i < c; ++i) pixel_tmp[i] = px[i];
    for (int i = 0; i < c; ++i)
      px[perm[i]] = scale ? pixel_tmp[i] * scale[i] : pixel_tmp[i];
  }
}

template <typename T>
void batchnorm(T* data, int pixels, int c, const T* gamma, const T* beta,
               const T* mean, const T* variance, T eps) {
  for (int p = 0; p < pixels; ++p) {
    T* px = data + size_t(p) * c;
    for (int ch = 0; ch < c; ++ch) {
      const T scale = gamma[ch] / std::sqrt(variance[ch] + eps);
      px[ch] = (px[ch] - mean[ch]) * scale + beta[ch];
    }
  }
}

template <typename T>
void relu6(T* data, size_t count) {
  for (size_t i = 0; i < count; ++i) {
    const T x = data[i];
    data[i] = x < T(0) ? T(0) : (x > T(6) ? T(6) : x);
  }
}

template <typename T>
void axpy_mask(T* data, const T* m, size_t count, T sign) {
  for (size_t i = 0; i < count; ++i) data[i] += sign * m[i];
}

template <typename T>
void add(T* a, const T* b, size_t count) {
  for (size_t i = 0; i < count; ++i) a[i] += b[i];
}

template <typename T>
void softmax(T* data, size_t count) {
  T m = data[0];
  for (size_t i = 1; i < count; ++i) m = std::max(m, data[i]);
  T sum = T(0);
  for (size_t i = 0; i < count; ++i) {
    data[i] = std::exp(data[i] - m);
    sum += data[i];
  }
  for (size_t i = 0; i < count; ++i) data[i] /= sum;
}

template <typename T>
void avg_pool(const T* in, int h, int w, int c, int window, int stride, T* out) {
  const int oh = conv_out_dim(h, window, stride, Padding::valid, "height");
  const int ow = conv_out_dim(w, window, stride, Padding::valid, "width");
  const T inv_area = T(1) / T(window * window);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int ch = 0; ch < c; ++ch) {
        T acc = T(0);
        for (int ky = 0; ky < window; ++ky)
          for (int kx = 0; kx < window; ++kx)
            acc += in[(size_t(oy * stride + ky) * w + ox * stride + kx) * c + ch];
        out[(size_t(oy) * ow + ox) * c + ch] = acc * inv_area;
      }
    }
  }
}

template <typename T>
void max_pool(const T* in, int h, int w, int c, int window, int stride, T* out) {
  const int oh = conv_out_dim(h, window, stride, Padding::valid, "height");
  const int ow = conv_out_dim(w, window, stride, Padding::valid, "width");
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int ch = 0; ch < c; ++ch) {
        T best = in[(size_t(oy * stride) * w + ox * stride) * c + ch];
        for (int ky = 0; ky < window; ++ky)
          for (int kx = 0; kx < window; ++kx)
            best = std::max(
                best,
                in[(size_t(oy * stride + ky) * w + ox * stride + kx) * c + ch]);
        out[(size_t(oy) * ow + ox) * c + ch] = best;
      }
    }
  }
}

#define SHADOWNET_INSTANTIATE_SPAN(T)                                          \
  template void conv2d<T>(const T*, int, int, int, const T*, int, int, int,    \
                          int, Padding, T*);                                   \
  template void dwconv2d<T>(const T*, int, int, int, const T*, int, int, int,  \
                            Padding, T*);                                      \
  template void pointwise<T>(const T*, int, int, const T*, int, T*, T*);       \
  template void shuffle<T>(T*, int, int, const int*, const T*, T*);            \
  template void batchnorm<T>(T*, int, int, const T*, const T*, const T*,       \
                             const T*, T);                                     \
  template void relu6<T>(T*, size_t);                                          \
  template void axpy_mask<T>(T*, const T*, size_t, T);                         \
  template void add<T>(T*, const T*, size_t);                                  \
  template void softmax<T>(T*, size_t);                                        \
  template void avg_pool<T>(const T*, int, int, int, int, int, T*);            \
  template void max_pool<T>(const T*, int, int, int, int, int, T*);

SHADOWNET_INSTANTIATE_SPAN(float)
SHADOWNET_INSTANTIATE_SPAN(double)
#undef SHADOWNET_INSTANTIATE_SPAN

}  // namespace span

namespace {

template <typename T>
void check_activation(const Tensor<T>& x, const char* op) {
  if (x.shape.rank != 3)
    throw ShapeError(std::string(op) + ": activation must be rank 3, got " +
                     x.shape.str());
}

template <typename T>
void check_channel_param(const Tensor<T>& p, int c, const char* op,
                         const char* name) {
  if (p.count() != size_t(c))
    throw ShapeError(std::string(op) + ": " + name + " has " +
                     std::to_string(p.count()) + " channels, activation has " +
                     std::to_string(c));
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride,
                 Padding padding) {
  check_activation(x, "conv2d");
  if (w.shape.rank != 4)
    throw ShapeError("conv2d: filter must be rank 4, got " + w.shape.str());
  if (x.shape.c() != w.shape.cin())
    throw ShapeError("conv2d: input channels (" + std::to_string(x.shape.c()) +
                     ") != filter cin (" + std::to_string(w.shape.cin()) + ")");
  const int oh = conv_out_dim(x.shape.h(), w.shape.kh(), stride, padding, "height");
  const int ow = conv_out_dim(x.shape.w(), w.shape.kw(), stride, padding, "width");
  Tensor<T> out(Shape::hwc(oh, ow, w.shape.n()));
  span::conv2d(x.v.data(), x.shape.h(), x.shape.w(), x.shape.c(), w.v.data(),
               w.shape.kh(), w.shape.kw(), w.shape.n(), stride, padding,
               out.v.data());
  return out;
}

template <typename T>
Tensor<T> dwconv2d(const Tensor<T>& x, const Tensor<T>& w, int stride,
                   Padding padding) {
  check_activation(x, "dwconv2d");
  if (w.shape.rank != 3)
    throw ShapeError("dwconv2d: filter must be rank 3 (kh,kw,c), got " +
                     w.shape.str());
  if (x.shape.c() != w.shape.c())
    throw ShapeError("dwconv2d: input channels (" + std::to_string(x.shape.c()) +
                     ") != filter channels (" + std::to_string(w.shape.c()) + ")");
  const int oh = conv_out_dim(x.shape.h(), w.shape.h(), stride, padding, "height");
  const int ow = conv_out_dim(x.shape.w(), w.shape.w(), stride, padding, "width");
  Tensor<T> out(Shape::hwc(oh, ow, x.shape.c()));
  span::dwconv2d(x.v.data(), x.shape.h(), x.shape.w(), x.shape.c(), w.v.data(),
                 w.shape.h(), w.shape.w(), stride, padding, out.v.data());
  return out;
}

template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& x, const Tensor<T>& w) {
  check_activation(x, "pointwise_conv");
  if (w.shape.rank != 4 || w.shape.kh() != 1 || w.shape.kw() != 1)
    throw ShapeError("pointwise_conv: filter must be (1,1,cin,n), got " +
                     w.shape.str());
  if (x.shape.c() != w.shape.cin())
    throw ShapeError("pointwise_conv: input channels (" +
                     std::to_string(x.shape.c()) + ") != filter cin (" +
                     std::to_string(w.shape.cin()) + ")");
  return conv2d(x, w, 1, Padding::valid);
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w) {
  if (w.shape.rank != 4 || w.shape.kh() != 1 || w.shape.kw() != 1)
    throw ShapeError("dense: weights must be (1,1,n,m), got " + w.shape.str());
  if (x.count() != size_t(w.shape.cin()))
    throw ShapeError("dense: input size (" + std::to_string(x.count()) +
                     ") != weight rows (" + std::to_string(w.shape.cin()) + ")");
  Tensor<T> flat = x;
  flat.shape = Shape::hwc(1, 1, int(x.count()));
  return pointwise_conv(flat, w);
}

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, const Tensor<T>& mean,
                    const Tensor<T>& variance, T eps) {
  check_activation(x, "batchnorm");
  const int c = x.shape.c();
  check_channel_param(gamma, c, "batchnorm", "gamma");
  check_channel_param(beta, c, "batchnorm", "beta");
  check_channel_param(mean, c, "batchnorm", "mean");
  check_channel_param(variance, c, "batchnorm", "variance");
  Tensor<T> out = x;
  span::batchnorm(out.v.data(), x.shape.h() * x.shape.w(), c, gamma.v.data(),
                  beta.v.data(), mean.v.data(), variance.v.data(), eps);
  return out;
}

template <typename T>
Tensor<T> relu6(const Tensor<T>& x) {
  Tensor<T> out = x;
  span::relu6(out.v.data(), out.count());
  return out;
}

template <typename T>
Tensor<T> avg_pool(const Tensor<T>& x, int window, int stride) {
  check_activation(x, "avg_pool");
  const int oh = conv_out_dim(x.shape.h(), window, stride, Padding::valid, "height");
  const int ow = conv_out_dim(x.shape.w(), window, stride, Padding::valid, "width");
  Tensor<T> out(Shape::hwc(oh, ow, x.shape.c()));
  span::avg_pool(x.v.data(), x.shape.h(), x.shape.w(), x.shape.c(), window,
                 stride, out.v.data());
  return out;
}

template <typename T>
Tensor<T> max_pool(const Tensor<T>& x, int window, int stride) {
  check_activation(x, "max_pool");
  const int oh = conv_out_dim(x.shape.h(), window, stride, Padding::valid, "height");
  const int ow = conv_out_dim(x.shape.w(), window, stride, Padding::valid, "width");
  Tensor<T> out(Shape::hwc(oh, ow, x.shape.c()));
  span::max_pool(x.v.data(), x.shape.h(), x.shape.w(), x.shape.c(), window,
                 stride, out.v.data());
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  if (x.count() == 0) throw ShapeError("softmax: empty input");
  Tensor<T> out = x;
  span::softmax(out.v.data(), out.count());
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape)
    throw ShapeError("add: shape mismatch " + a.shape.str() + " vs " +
                     b.shape.str());
  Tensor<T> out = a;
  span::add(out.v.data(), b.v.data(), out.count());
  return out;
}

#define SHADOWNET_INSTANTIATE_OPS(T)                                           \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, int,        \
                               Padding);                                       \
  template Tensor<T> dwconv2d<T>(const Tensor<T>&, const Tensor<T>&, int,      \
                                 Padding);                                     \
  template Tensor<T> pointwise_conv<T>(const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> dense<T>(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> batchnorm<T>(const Tensor<T>&, const Tensor<T>&,          \
                                  const Tensor<T>&, const Tensor<T>&,          \
                                  const Tensor<T>&, T);                        \
  template Tensor<T> relu6<T>(const Tensor<T>&);                               \
  template Tensor<T> avg_pool<T>(const Tensor<T>&, int, int);                  \
  template Tensor<T> max_pool<T>(const Tensor<T>&, int, int);                  \
  template Tensor<T> softmax<T>(const Tensor<T>&);                             \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);

SHADOWNET_INSTANTIATE_OPS(float)
SHADOWNET_INSTANTIATE_OPS(double)
#undef SHADOWNET_INSTANTIATE_OPS

}  // namespace ops
}  // namespace shadownet

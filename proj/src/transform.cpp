#include "shadownet/transform.hpp"

#include <cmath>

#include "shadownet/error.hpp"

namespace shadownet {

void ObfuscationParams::validate() const {
  if (!(ratio >= 1.0))
    throw InvalidParams("obfuscation ratio must be >= 1, got " +
                        std::to_string(ratio));
  if (!(scalar_bound > 0))
    throw InvalidParams("scalar bound must be positive");
  if (!(scalar_floor > 0) || scalar_floor > scalar_bound)
    throw InvalidParams("scalar floor must satisfy 0 < floor <= bound");
  if (!(mask_scale >= 0))
    throw InvalidParams("mask scale must be >= 0");
  if (domain == SecretDomain::dyadic) {
    // Power-of-two scalars 2^0..2^-4 must fit the configured band.
    if (scalar_floor > 0.0625 || scalar_bound < 1.0)
      throw InvalidParams(
          "dyadic domain requires scalar_floor <= 1/16 and scalar_bound >= 1");
  }
}

int expanded_kernel_count(int n, double ratio) {
  if (n < 1) throw InvalidParams("kernel count must be >= 1");
  if (!(ratio >= 1.0))
    throw InvalidParams("obfuscation ratio must be >= 1, got " +
                        std::to_string(ratio));
  const int m = int(std::floor(ratio * double(n) + 1e-9));
  return m < n ? n : m;
}

namespace {

double draw_lambda(const ObfuscationParams& p, Rng& rng) {
  if (p.domain == SecretDomain::dyadic) {
    const int e = int(rng.uniform_int(5));  // 2^0 .. 2^-4
    const double mag = std::ldexp(1.0, -e);
    return (rng.next_u32() & 1u) ? -mag : mag;
  }
  return rng.signed_uniform(p.scalar_floor, p.scalar_bound);
}

double draw_value(const ObfuscationParams& p, Rng& rng) {
  if (p.domain == SecretDomain::dyadic) return rng.dyadic(1024, 10);
  return rng.uniform(-p.scalar_bound, p.scalar_bound);
}

}  // namespace

template <typename T>
ConvSecret<T> gen_conv_secret(int n, int kh, int kw, int cin,
                              const ObfuscationParams& p, Rng& rng) {
  p.validate();
  if (n < 1 || kh < 1 || kw < 1 || cin < 1)
    throw InvalidParams("gen_conv_secret: kernel dims must be >= 1");
  ConvSecret<T> s;
  s.n = n;
  s.m = expanded_kernel_count(n, p.ratio);
  s.lambdas.resize(n);
  for (int i = 0; i < n; ++i) s.lambdas[i] = draw_lambda(p, rng);
  const int extra = s.m - n;
  if (extra > 0) {
    s.filler = Tensor<T>(Shape::filt(kh, kw, cin, extra));
    for (auto& e : s.filler.v) e = T(draw_value(p, rng));
    s.index_c.resize(n);
    for (int i = 0; i < n; ++i) s.index_c[i] = int(rng.uniform_int(uint32_t(extra)));
  }
  s.perm = rng.permutation(s.m);
  return s;
}

template <typename T>
DwSecret<T> gen_dw_secret(int n, const ObfuscationParams& p, Rng& rng) {
  p.validate();
  if (n < 1) throw InvalidParams("gen_dw_secret: channel count must be >= 1");
  DwSecret<T> s;
  s.n = n;
  s.lambdas.resize(n);
  for (int i = 0; i < n; ++i) s.lambdas[i] = draw_lambda(p, rng);
  s.perm = rng.permutation(n);
  return s;
}

template <typename T>
Tensor<T> transform_conv(const Tensor<T>& w, const ConvSecret<T>& s) {
  if (w.shape.rank != 4)
    throw ShapeError("transform_conv: filter must be rank 4, got " +
                     w.shape.str());
  if (w.shape.n() != s.n)
    throw ShapeError("transform_conv: filter has " +
                     std::to_string(w.shape.n()) + " kernels, secret expects " +
                     std::to_string(s.n));
  const int kh = w.shape.kh(), kw = w.shape.kw(), cin = w.shape.cin();
  const int extra = s.m - s.n;
  if (extra > 0 && s.filler.shape != Shape::filt(kh, kw, cin, extra))
    throw ShapeError("transform_conv: filler shape " + s.filler.shape.str() +
                     " does not match kernel shape");
  Tensor<T> out(Shape::filt(kh, kw, cin, s.m));
  for (int ky = 0; ky < kh; ++ky)
    for (int kx = 0; kx < kw; ++kx)
      for (int ci = 0; ci < cin; ++ci) {
        for (int i = 0; i < s.n; ++i) {
          const double we = double(w.at4(ky, kx, ci, i));
          out.at4(ky, kx, ci, s.perm[i]) =
              extra > 0
                  ? transformed_weight_element<T>(
                        s.lambdas[i], we,
                        double(s.filler.at4(ky, kx, ci, s.index_c[i])))
                  : scaled_weight_element<T>(s.lambdas[i], we);
        }
        for (int j = 0; j < extra; ++j)
          out.at4(ky, kx, ci, s.perm[s.n + j]) = s.filler.at4(ky, kx, ci, j);
      }
  return out;
}

template <typename T>
Tensor<T> restore_filter(const ConvSecret<T>& s) {
  Tensor<T> f(Shape::filt(1, 1, s.m, s.n));
  for (int i = 0; i < s.n; ++i) {
    const T inv = T(1.0 / s.lambdas[i]);
    f.at4(0, 0, s.perm[i], i) = inv;
    if (s.m > s.n) f.at4(0, 0, s.perm[s.n + s.index_c[i]], i) = -inv;
  }
  return f;
}

template <typename T>
Tensor<T> transform_dwconv(const Tensor<T>& w, const DwSecret<T>& s) {
  if (w.shape.rank != 3)
    throw ShapeError("transform_dwconv: filter must be rank 3 (kh,kw,c), got " +
                     w.shape.str());
  if (w.shape.c() != s.n)
    throw ShapeError("transform_dwconv: filter has " +
                     std::to_string(w.shape.c()) + " channels, secret expects " +
                     std::to_string(s.n));
  Tensor<T> out(w.shape);
  for (int ky = 0; ky < w.shape.h(); ++ky)
    for (int kx = 0; kx < w.shape.w(); ++kx)
      for (int i = 0; i < s.n; ++i)
        out.at(ky, kx, s.perm[i]) =
            scaled_weight_element<T>(s.lambdas[i], double(w.at(ky, kx, i)));
  return out;
}

template <typename T>
std::vector<T> dw_input_scales(const DwSecret<T>& s) {
  std::vector<T> scales(s.n);
  for (int i = 0; i < s.n; ++i) scales[i] = T(1.0 / s.lambdas[i]);
  return scales;
}

std::vector<int> invert_perm(const std::vector<int>& perm) {
  std::vector<int> inv(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) inv[size_t(perm[i])] = int(i);
  return inv;
}

#define SHADOWNET_INSTANTIATE_TRANSFORM(T)                                     \
  template ConvSecret<T> gen_conv_secret<T>(int, int, int, int,                \
                                            const ObfuscationParams&, Rng&);   \
  template DwSecret<T> gen_dw_secret<T>(int, const ObfuscationParams&, Rng&);  \
  template Tensor<T> transform_conv<T>(const Tensor<T>&, const ConvSecret<T>&);\
  template Tensor<T> restore_filter<T>(const ConvSecret<T>&);                  \
  template Tensor<T> transform_dwconv<T>(const Tensor<T>&, const DwSecret<T>&);\
  template std::vector<T> dw_input_scales<T>(const DwSecret<T>&);

SHADOWNET_INSTANTIATE_TRANSFORM(float)
SHADOWNET_INSTANTIATE_TRANSFORM(double)
#undef SHADOWNET_INSTANTIATE_TRANSFORM

}  // namespace shadownet

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "shadownet/error.hpp"
#include "shadownet/ops.hpp"
#include "shadownet/rng.hpp"
#include "shadownet/transform.hpp"

using namespace shadownet;

TEST_CASE("expanded kernel count truncates") {
  CHECK(expanded_kernel_count(64, 1.2) == 76);  // 76.8 truncates, never 77
  CHECK(expanded_kernel_count(64, 1.0) == 64);
  CHECK(expanded_kernel_count(16, 1.2) == 19);  // 19.2
  CHECK(expanded_kernel_count(5, 1.2) == 6);    // exact product
  CHECK(expanded_kernel_count(10, 1.0) == 10);
  CHECK(expanded_kernel_count(3, 1.5) == 4);    // 4.5
  CHECK(expanded_kernel_count(2, 1.9) == 3);    // 3.8
  CHECK(expanded_kernel_count(2, 2.0) == 4);
  CHECK(expanded_kernel_count(1, 1.2) == 1);    // floor(1.2) = 1 = n
  // Exact products survive the binary representation of the ratio.
  CHECK(expanded_kernel_count(20, 1.2) == 24);
  CHECK(expanded_kernel_count(40, 1.8) == 72);
}

TEST_CASE("parameter validation") {
  ObfuscationParams p;
  p.validate();  // defaults fine
  ObfuscationParams bad = p;
  bad.ratio = 0.9;
  CHECK_THROWS_AS(bad.validate(), InvalidParams);
  bad = p;
  bad.scalar_floor = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidParams);
  bad = p;
  bad.scalar_bound = 0.04;  // below floor
  CHECK_THROWS_AS(bad.validate(), InvalidParams);
  bad = p;
  bad.mask_scale = -1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidParams);
  bad = p;
  bad.domain = SecretDomain::dyadic;
  bad.scalar_floor = 0.1;  // excludes 1/16; dyadic scalars need the low band
  CHECK_THROWS_AS(bad.validate(), InvalidParams);
}

TEST_CASE("worked single-kernel example") {
  // One 1x1x1 kernel w, one filler f, identity placement:
  //   published = [2w + f, f], restore column = [1/2, -1/2].
  ConvSecret<float> s;
  s.n = 1;
  s.m = 2;
  s.lambdas = {2.0};
  s.filler = TensorF(Shape::filt(1, 1, 1, 1));
  s.filler.v = {10.f};
  s.index_c = {0};
  s.perm = {0, 1};

  TensorF w(Shape::filt(1, 1, 1, 1));
  w.v = {3.f};
  TensorF t = transform_conv(w, s);
  REQUIRE(t.shape == Shape::filt(1, 1, 1, 2));
  CHECK(t.v[0] == 16.f);  // 2*3 + 10
  CHECK(t.v[1] == 10.f);  // filler verbatim

  TensorF r = restore_filter(s);
  REQUIRE(r.shape == Shape::filt(1, 1, 2, 1));
  CHECK(r.v[0] == 0.5f);
  CHECK(r.v[1] == -0.5f);

  // The restore really inverts on an activation.
  TensorF x(Shape::hwc(1, 1, 1));
  x.v = {5.f};
  TensorF y = ops::pointwise_conv(ops::conv2d(x, t, 1, Padding::valid), r);
  CHECK(y.v[0] == 15.f);  // w * x exactly, all values dyadic
}

TEST_CASE("worked depthwise example") {
  // Two channels (a, b), lambdas (4, 2), swap permutation:
  //   published kernels = [2b, 4a]; the input shuffle divides and permutes.
  DwSecret<float> s;
  s.n = 2;
  s.lambdas = {4.0, 2.0};
  s.perm = {1, 0};

  TensorF w(Shape::hwc(1, 1, 2));
  w.v = {3.f, 5.f};  // a, b
  TensorF t = transform_dwconv(w, s);
  CHECK(t.v[0] == 10.f);  // position 0 holds 2b
  CHECK(t.v[1] == 12.f);  // position 1 holds 4a

  std::vector<float> scales = dw_input_scales(s);
  REQUIRE(scales.size() == 2);
  CHECK(scales[0] == 0.25f);
  CHECK(scales[1] == 0.5f);

  std::vector<int> inv = invert_perm(s.perm);
  CHECK(inv == std::vector<int>({1, 0}));

  // Full depthwise path: shuffle in, conv on published kernels, shuffle out.
  TensorF x(Shape::hwc(1, 1, 2));
  x.v = {8.f, 4.f};
  std::vector<float> tmp(2);
  TensorF xs = x;
  ops::span::shuffle(xs.v.data(), 1, 2, s.perm.data(), scales.data(),
                     tmp.data());
  TensorF mid = ops::dwconv2d(xs, t, 1, Padding::valid);
  ops::span::shuffle(mid.v.data(), 1, 2, inv.data(), (const float*)nullptr,
                     tmp.data());
  TensorF ref = ops::dwconv2d(x, w, 1, Padding::valid);
  CHECK(bitwise_equal(mid, ref));  // dyadic values keep it exact
}

TEST_CASE("published shape law") {
  ObfuscationParams p;
  p.seed = 5;
  Rng rng(p.seed);
  auto s = gen_conv_secret<float>(64, 1, 1, 32, p, rng);
  TensorF w(Shape::filt(1, 1, 32, 64));
  Rng wr(9);
  for (auto& e : w.v) e = float(wr.uniform(-1.0, 1.0));
  TensorF t = transform_conv(w, s);
  CHECK(t.shape == Shape::filt(1, 1, 32, 76));
}

TEST_CASE("secret generation is deterministic and well-formed") {
  ObfuscationParams p;
  p.seed = 77;
  Rng r1(3), r2(3);
  auto a = gen_conv_secret<float>(12, 3, 3, 4, p, r1);
  auto b = gen_conv_secret<float>(12, 3, 3, 4, p, r2);
  CHECK(a == b);

  CHECK(a.n == 12);
  CHECK(a.m == expanded_kernel_count(12, p.ratio));
  REQUIRE(int(a.lambdas.size()) == 12);
  for (double l : a.lambdas) {
    CHECK(std::fabs(l) >= p.scalar_floor);
    CHECK(std::fabs(l) <= p.scalar_bound);
  }
  for (int c : a.index_c) {
    CHECK(c >= 0);
    CHECK(c < a.m - a.n);
  }
  std::vector<bool> seen(size_t(a.m), false);
  for (int pos : a.perm) {
    REQUIRE(pos >= 0);
    REQUIRE(pos < a.m);
    CHECK(!seen[size_t(pos)]);
    seen[size_t(pos)] = true;
  }

  Rng r3(4);
  auto c = gen_conv_secret<float>(12, 3, 3, 4, p, r3);
  CHECK(!(a == c));
}

TEST_CASE("restore filter sparsity") {
  ObfuscationParams p;
  Rng rng(19);
  auto s = gen_conv_secret<float>(10, 3, 3, 4, p, rng);
  TensorF r = restore_filter(s);
  REQUIRE(r.shape == Shape::filt(1, 1, s.m, s.n));
  for (int o = 0; o < s.n; ++o) {
    int nonzero = 0;
    for (int ci = 0; ci < s.m; ++ci)
      if (r.at4(0, 0, ci, o) != 0.f) ++nonzero;
    CHECK(nonzero == 2);  // +1/lambda and -1/lambda
  }

  // Without expansion the restore is scale + unshuffle only.
  ObfuscationParams p1 = p;
  p1.ratio = 1.0;
  Rng rng1(19);
  auto s1 = gen_conv_secret<float>(10, 3, 3, 4, p1, rng1);
  CHECK(s1.m == 10);
  CHECK(s1.filler.v.empty());
  CHECK(s1.index_c.empty());
  TensorF r1 = restore_filter(s1);
  for (int o = 0; o < 10; ++o) {
    int nonzero = 0;
    for (int ci = 0; ci < 10; ++ci)
      if (r1.at4(0, 0, ci, o) != 0.f) ++nonzero;
    CHECK(nonzero == 1);
  }
}

TEST_CASE("conv round-trip within float tolerance") {
  ObfuscationParams p;
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 2 + int(rng.uniform_int(10));
    int cin = 1 + int(rng.uniform_int(6));
    int k = 1 + int(rng.uniform_int(3));
    Rng sr = rng.split(uint64_t(trial));
    auto s = gen_conv_secret<float>(n, k, k, cin, p, sr);

    TensorF w(Shape::filt(k, k, cin, n));
    for (auto& e : w.v) e = float(rng.uniform(-1.0, 1.0));
    TensorF x(Shape::hwc(5, 5, cin));
    for (auto& e : x.v) e = float(rng.uniform(-1.0, 1.0));

    TensorF ref = ops::conv2d(x, w, 1, Padding::same);
    TensorF masked = ops::conv2d(x, transform_conv(w, s), 1, Padding::same);
    TensorF back = ops::pointwise_conv(masked, restore_filter(s));
    REQUIRE(back.shape == ref.shape);
    CHECK(rel_error(back, ref) <= 1e-5);
  }
}

TEST_CASE("dyadic domain round-trips bitwise in double") {
  ObfuscationParams p;
  p.domain = SecretDomain::dyadic;
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 2 + int(rng.uniform_int(6));
    int cin = 1 + int(rng.uniform_int(4));
    Rng sr = rng.split(uint64_t(trial));
    auto s = gen_conv_secret<double>(n, 3, 3, cin, p, sr);

    for (double l : s.lambdas) {  // signed powers of two
      int e;
      double m = std::frexp(l, &e);
      CHECK(std::fabs(m) == 0.5);
    }
    for (double f : s.filler.v)  // on the 2^-10 grid
      CHECK(std::ldexp(f, 10) == std::floor(std::ldexp(f, 10)));

    TensorD w(Shape::filt(3, 3, cin, n));
    for (auto& e : w.v) e = rng.dyadic(1024, 10);
    TensorD x(Shape::hwc(4, 4, cin));
    for (auto& e : x.v) e = rng.dyadic(1024, 10);

    TensorD ref = ops::conv2d(x, w, 1, Padding::same);
    TensorD masked = ops::conv2d(x, transform_conv(w, s), 1, Padding::same);
    TensorD back = ops::pointwise_conv(masked, restore_filter(s));
    CHECK(bitwise_equal(back, ref));
  }
}

TEST_CASE("invert_perm inverts") {
  std::vector<int> p = {3, 0, 2, 1};
  std::vector<int> inv = invert_perm(p);
  for (int i = 0; i < 4; ++i) CHECK(inv[size_t(p[size_t(i)])] == i);
}

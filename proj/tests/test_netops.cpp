#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "kerngen/netops.hpp"

using namespace kerngen;

namespace {

// test-side RNG, independent of library code
struct rng_t {
  uint64_t x;
  explicit rng_t(uint64_t seed) : x(seed ? seed : 1) {}
  float next() {
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    return (float)((double)((x * 2685821657736338717ull) >> 11) / (double)(1ull << 53) * 2.0 - 1.0);
  }
};

nda_t rand_nda(dims_t const& d, uint64_t seed) {
  nda_t a{d};
  rng_t r(seed);
  for (float& v : a.data()) { v = r.next(); }
  return a;
}

// independent brute-force convolution: the direct 7-nested-loop form, written
// against the raw flat buffers and kept separate from the library path
nda_t brute_conv(conv_spec_t const& s, nda_t const& in, nda_t const& filts, nda_t const* bias) {
  int64_t const oy_n = 1 + (s.in_y + 2 * s.pad - s.ksz) / s.stride;
  int64_t const ox_n = 1 + (s.in_x + 2 * s.pad - s.ksz) / s.stride;
  std::vector<axis_t> axes;
  if (s.batch > 1) { axes.push_back({"B", s.batch}); }
  axes.push_back({"Y", oy_n});
  axes.push_back({"X", ox_n});
  axes.push_back({"C", s.oc});
  nda_t out{dims_t{axes}};
  for (int64_t b = 0; b != s.batch; ++b) {
    for (int64_t oy = 0; oy != oy_n; ++oy) {
      for (int64_t ox = 0; ox != ox_n; ++ox) {
        for (int64_t oc = 0; oc != s.oc; ++oc) {
          double acc = 0.0;
          for (int64_t ky = 0; ky != s.ksz; ++ky) {
            for (int64_t kx = 0; kx != s.ksz; ++kx) {
              for (int64_t ic = 0; ic != s.in_c; ++ic) {
                int64_t const iy = oy * s.stride - s.pad + ky;
                int64_t const ix = ox * s.stride - s.pad + kx;
                if (iy < 0 || iy >= s.in_y || ix < 0 || ix >= s.in_x) { continue; }
                acc += (double)in.data()[(size_t)(((b * s.in_y + iy) * s.in_x + ix) * s.in_c + ic)] *
                       (double)filts.data()[(size_t)(((oc * s.ksz + ky) * s.ksz + kx) * s.in_c + ic)];
              }
            }
          }
          if (bias) { acc += (double)bias->data()[(size_t)oc]; }
          if (s.fuse_relu && acc < 0) { acc = 0; }
          out.data()[(size_t)(((b * oy_n + oy) * ox_n + ox) * s.oc + oc)] = (float)acc;
        }
      }
    }
  }
  return out;
}

bool close(nda_t const& a, nda_t const& b, double tol = 1e-5) {
  if (!(a.dims() == b.dims())) { return false; }
  for (size_t i = 0; i != a.data().size(); ++i) {
    double const den = std::max({std::fabs((double)a.data()[i]), std::fabs((double)b.data()[i]), 1e-6});
    if (std::fabs((double)a.data()[i] - (double)b.data()[i]) / den > tol) { return false; }
  }
  return true;
}

}  // namespace

TEST_CASE("infer_shapes on the 205x205x3 7x7/2 case") {
  conv_spec_t s;
  s.in_y = s.in_x = 205;
  s.in_c = 3;
  s.oc = 96;
  s.ksz = 7;
  s.stride = 2;
  conv_shapes_t const sh = infer_shapes(s);
  CHECK(sh.out_dims.str() == "Y:X:C=100:100:96");
  CHECK(sh.filts_dims.str() == "OC:KY:KX:IC=96:7:7:3");
  CHECK(sh.inmat_dims.str() == "M:K=10000:147");
  CHECK(sh.out_dims.product() == 960000);
  CHECK(sh.flops == 2ll * 960000 * 147);
}

TEST_CASE("infer_shapes identity window and same-padding") {
  conv_spec_t s;
  s.in_y = 17;
  s.in_x = 13;
  s.in_c = 5;
  s.oc = 2;
  s.ksz = 1;
  conv_shapes_t const sh = infer_shapes(s);
  CHECK(sh.out_y == 17);
  CHECK(sh.out_x == 13);

  conv_spec_t p;
  p.in_y = p.in_x = 8;
  p.in_c = 2;
  p.oc = 4;
  p.ksz = 3;
  p.pad = 1;
  conv_shapes_t const shp = infer_shapes(p);
  CHECK(shp.out_dims.str() == "Y:X:C=8:8:4");
}

TEST_CASE("infer_shapes rejects kernels larger than the padded input") {
  conv_spec_t s;
  s.in_y = s.in_x = 4;
  s.in_c = 1;
  s.oc = 1;
  s.ksz = 7;
  CHECK_THROWS(infer_shapes(s));
  s.pad = 2;  // 4 + 4 >= 7
  CHECK_NOTHROW(infer_shapes(s));
}

TEST_CASE("conv_oracle scalar and zero cases") {
  conv_spec_t s;
  s.in_y = s.in_x = 1;
  s.in_c = 1;
  s.oc = 1;
  s.ksz = 1;
  nda_t const in{dims_t{{"Y", 1}, {"X", 1}, {"C", 1}}, {3.0f}};
  nda_t const filts{dims_t{{"OC", 1}, {"KY", 1}, {"KX", 1}, {"IC", 1}}, {2.0f}};
  nda_t const out = conv_oracle(s, in, filts);
  CHECK(out.data()[0] == 6.0f);

  conv_spec_t z;
  z.in_y = z.in_x = 5;
  z.in_c = 2;
  z.oc = 3;
  z.ksz = 3;
  nda_t const zin = rand_nda(z.in_dims(), 11);
  nda_t const zfilts{infer_shapes(z).filts_dims};
  nda_t const zout = conv_oracle(z, zin, zfilts);
  for (float const v : zout.data()) { CHECK(v == 0.0f); }
}

TEST_CASE("conv_oracle equals the independent brute force") {
  conv_spec_t s;
  s.in_y = s.in_x = 9;
  s.in_c = 3;
  s.oc = 4;
  s.ksz = 3;
  s.stride = 2;
  s.pad = 1;
  nda_t const in = rand_nda(s.in_dims(), 42);
  nda_t const filts = rand_nda(infer_shapes(s).filts_dims, 43);
  CHECK(close(conv_oracle(s, in, filts), brute_conv(s, in, filts, nullptr)));

  s.fuse_relu = true;
  s.has_bias = true;
  nda_t const bias = rand_nda(dims_t{{"OC", s.oc}}, 44);
  CHECK(close(conv_oracle(s, in, filts, &bias), brute_conv(s, in, filts, &bias)));
}

TEST_CASE("batched conv equals independent per-image convs") {
  conv_spec_t s;
  s.in_y = 6;
  s.in_x = 7;
  s.in_c = 2;
  s.oc = 3;
  s.ksz = 3;
  s.pad = 1;
  s.batch = 4;
  nda_t const in = rand_nda(s.in_dims(), 7);
  nda_t const filts = rand_nda(infer_shapes(s).filts_dims, 8);
  nda_t const out = conv_oracle(s, in, filts);
  conv_spec_t one = s;
  one.batch = 1;
  for (int64_t b = 0; b != s.batch; ++b) {
    nda_t const img = in.slice({{"B", b}});
    nda_t const expect = conv_oracle(one, img, filts);
    nda_t const got = out.slice({{"B", b}});
    CHECK(close(expect, got, 0.0));  // identical accumulation order: bit-equal
  }
}

TEST_CASE("im2col shapes and identity case") {
  conv_spec_t s;
  s.in_y = s.in_x = 205;
  s.in_c = 3;
  s.oc = 96;
  s.ksz = 7;
  s.stride = 2;
  nda_t const in = rand_nda(s.in_dims(), 5);
  nda_t const m = im2col(s, in);
  CHECK(m.dims().str() == "M:K=10000:147");

  conv_spec_t k1;
  k1.in_y = 4;
  k1.in_x = 5;
  k1.in_c = 3;
  k1.oc = 2;
  k1.ksz = 1;
  nda_t const in1 = rand_nda(k1.in_dims(), 6);
  nda_t const m1 = im2col(k1, in1);
  CHECK(m1.data() == in1.data());  // per-image im2col with KSZ=1 is the identity on data
}

TEST_CASE("im2col rows equal brute-force patch gather") {
  conv_spec_t s;
  s.in_y = s.in_x = 4;
  s.in_c = 1;
  s.oc = 1;
  s.ksz = 3;
  nda_t const in = rand_nda(s.in_dims(), 9);
  nda_t const m = im2col(s, in);
  CHECK(m.dims().str() == "M:K=4:9");
  for (int64_t oy = 0; oy != 2; ++oy) {
    for (int64_t ox = 0; ox != 2; ++ox) {
      for (int64_t ky = 0; ky != 3; ++ky) {
        for (int64_t kx = 0; kx != 3; ++kx) {
          CHECK(m.at({oy * 2 + ox, ky * 3 + kx}) == in.at({oy + ky, ox + kx, 0}));
        }
      }
    }
  }
}

TEST_CASE("conv_via_gemm equals the oracle") {
  // running-example shapes at reduced size, plus KSZ=1 and a batched case
  conv_spec_t cases[3];
  cases[0].in_y = cases[0].in_x = 21;
  cases[0].in_c = 3;
  cases[0].oc = 8;
  cases[0].ksz = 7;
  cases[0].stride = 2;
  cases[1].in_y = 14;
  cases[1].in_x = 14;
  cases[1].in_c = 16;
  cases[1].oc = 8;
  cases[1].ksz = 1;
  cases[2].in_y = cases[2].in_x = 9;
  cases[2].in_c = 3;
  cases[2].oc = 4;
  cases[2].ksz = 3;
  cases[2].stride = 2;
  cases[2].pad = 1;
  cases[2].batch = 2;
  for (conv_spec_t const& s : cases) {
    nda_t const in = rand_nda(s.in_dims(), 100 + s.ksz);
    nda_t const filts = rand_nda(infer_shapes(s).filts_dims, 200 + s.ksz);
    CHECK(close(conv_via_gemm(s, in, filts), conv_oracle(s, in, filts)));
  }
}

TEST_CASE("conv_via_gemm equals the oracle on randomized specs") {
  rng_t r(20240809);
  auto draw = [&](int64_t lo, int64_t hi) { return lo + (int64_t)((r.next() + 1.0f) / 2.0f * (float)(hi - lo)); };
  for (int it = 0; it != 20; ++it) {
    conv_spec_t s;
    s.ksz = draw(1, 5);
    s.stride = draw(1, 3);
    s.pad = draw(0, s.ksz);
    s.in_y = s.ksz + draw(0, 9);
    s.in_x = s.ksz + draw(0, 9);
    s.in_c = draw(1, 5);
    s.oc = draw(1, 6);
    s.batch = draw(1, 3);
    nda_t const in = rand_nda(s.in_dims(), 1000 + (uint64_t)it);
    nda_t const filts = rand_nda(infer_shapes(s).filts_dims, 2000 + (uint64_t)it);
    CHECK_MESSAGE(close(conv_via_gemm(s, in, filts), conv_oracle(s, in, filts)), format_op_line({"rand", s}));
  }
}

TEST_CASE("reuse counts in an instrumented small GEMM") {
  // 5x5 output, 4 output channels: each patch row takes part in 4 dot
  // products, each filter column in 25. the counting instruments an actual
  // GEMM over the patch matrix, whose result must also match the oracle.
  conv_spec_t s;
  s.in_y = s.in_x = 7;
  s.in_c = 2;
  s.oc = 4;
  s.ksz = 3;
  conv_shapes_t const sh = infer_shapes(s);
  nda_t const in = rand_nda(s.in_dims(), 55);
  nda_t const filts = rand_nda(sh.filts_dims, 56);
  nda_t const inmat = im2col(s, in);
  int64_t const m = sh.inmat_dims.axis(0).size;
  int64_t const k = sh.inmat_dims.axis(1).size;
  REQUIRE(m == 25);
  std::vector<int64_t> row_uses((size_t)m, 0), col_uses((size_t)s.oc, 0);
  nda_t outmat{dims_t{{"M", m}, {"N", s.oc}}};
  for (int64_t i = 0; i != m; ++i) {
    for (int64_t j = 0; j != s.oc; ++j) {
      ++row_uses[(size_t)i];  // inmat row i feeds this dot product
      ++col_uses[(size_t)j];  // filtsmat column j does too
      double acc = 0.0;
      for (int64_t kk = 0; kk != k; ++kk) {
        acc += (double)inmat.data()[(size_t)(i * k + kk)] * (double)filts.data()[(size_t)(j * k + kk)];
      }
      outmat.data()[(size_t)(i * s.oc + j)] = (float)acc;
    }
  }
  for (int64_t const u : row_uses) { CHECK(u == 4); }
  for (int64_t const u : col_uses) { CHECK(u == 25); }
  CHECK(close(outmat.reshape(sh.out_dims), conv_oracle(s, in, filts)));
}

TEST_CASE("relu, softmax, pooling references") {
  nda_t const v{dims_t{{"N", 3}}, {-1.0f, 0.0f, 2.0f}};
  nda_t const r = relu_ref(v);
  CHECK(r.data() == std::vector<float>{0.0f, 0.0f, 2.0f});
  CHECK(relu_ref(r).data() == r.data());  // idempotent

  nda_t const u{dims_t{{"N", 5}}, {3.0f, 3.0f, 3.0f, 3.0f, 3.0f}};
  nda_t const sm = softmax_ref(u, "N");
  for (float const x : sm.data()) { CHECK(x == doctest::Approx(0.2).epsilon(1e-6)); }

  nda_t sm2 = softmax_ref(rand_nda(dims_t{{"Y", 4}, {"C", 6}}, 3), "C");
  for (int64_t y = 0; y != 4; ++y) {
    double sum = 0.0;
    for (int64_t c = 0; c != 6; ++c) { sum += sm2.at({y, c}); }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }

  // max-pool 2x2 stride 2 on a 4x4 ramp, checked by enumeration
  nda_t ramp{dims_t{{"Y", 4}, {"X", 4}, {"C", 1}}};
  for (size_t i = 0; i != ramp.data().size(); ++i) { ramp.data()[i] = (float)i; }
  nda_t const mp = pool_ref(pool_kind_t::max_pool, 2, 2, ramp);
  CHECK(mp.dims().str() == "Y:X:C=2:2:1");
  for (int64_t oy = 0; oy != 2; ++oy) {
    for (int64_t ox = 0; ox != 2; ++ox) {
      float expect = -1.0f;
      for (int64_t wy = 0; wy != 2; ++wy) {
        for (int64_t wx = 0; wx != 2; ++wx) { expect = std::max(expect, ramp.at({oy * 2 + wy, ox * 2 + wx, 0})); }
      }
      CHECK(mp.at({oy, ox, 0}) == expect);
    }
  }
  nda_t const ap = pool_ref(pool_kind_t::avg_pool, 2, 2, ramp);
  CHECK(ap.at({0, 0, 0}) == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
  CHECK_THROWS(pool_ref(pool_kind_t::max_pool, 5, 1, ramp));  // window exceeds input

  // unit-window pooling is the identity, hence idempotent
  nda_t const p1 = pool_ref(pool_kind_t::max_pool, 1, 1, ramp);
  CHECK(p1.data() == ramp.data());
  CHECK(pool_ref(pool_kind_t::max_pool, 1, 1, p1).data() == p1.data());

  // softmax along a non-innermost axis
  nda_t const smy = softmax_ref(rand_nda(dims_t{{"Y", 4}, {"C", 6}}, 13), "Y");
  for (int64_t c = 0; c != 6; ++c) {
    double sum = 0.0;
    for (int64_t y = 0; y != 4; ++y) { sum += smy.at({y, c}); }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("op-line parse and format round-trip") {
  named_op_t const op = parse_op_line("conv1 in=Y:X:C=205:205:3 OC=96 KSZ=7 stride=2 pad=0 B=1 relu=1 bias=1");
  CHECK(op.name == "conv1");
  CHECK(op.spec.in_x == 205);
  CHECK(op.spec.oc == 96);
  CHECK(op.spec.ksz == 7);
  CHECK(op.spec.stride == 2);
  CHECK(op.spec.fuse_relu);
  CHECK(op.spec.has_bias);
  named_op_t const back = parse_op_line(format_op_line(op));
  CHECK(back.spec == op.spec);

  named_op_t const same = parse_op_line("c in=Y:X:C=8:8:2 OC=4 KSZ=3 pad=same");
  CHECK(same.spec.pad == 1);

  CHECK_THROWS(parse_op_line("c in=Y:X:C=8:8:2 KSZ=3"));                    // missing OC
  CHECK_THROWS(parse_op_line("c in=Y:X:C=8:8:2 OC=4 KSZ=3", true));        // relu/bias required
  CHECK_THROWS(parse_op_line("c in=Y:X:C=8:8:2 OC=4 KSZ=3 wat=1"));        // unknown field
}

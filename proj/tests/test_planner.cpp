#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <random>

#include <fstream>

#include "json.hpp"
#include "kerngen/planner.hpp"

using namespace kerngen;

namespace {

machine_model_t simd_machine() {
  machine_model_t m;
  m.name = "mobile_simd";
  m.simd_width = 4;
  m.explicit_local_mem_profitable = false;
  return m;
}

conv_spec_t mk(int64_t y, int64_t x, int64_t c, int64_t oc, int64_t ksz, int64_t stride = 1, int64_t pad = 0,
               int64_t b = 1) {
  conv_spec_t s;
  s.in_y = y;
  s.in_x = x;
  s.in_c = c;
  s.oc = oc;
  s.ksz = ksz;
  s.stride = stride;
  s.pad = pad;
  s.batch = b;
  return s;
}

}  // namespace

TEST_CASE("select_variant taxonomy") {
  machine_model_t const m;  // scalar, local-memory machine
  CHECK(select_variant(mk(14, 14, 256, 64, 1), m) == variant_t::k1conv);
  CHECK(select_variant(mk(205, 205, 3, 96, 7, 2), m) == variant_t::tconv);  // 205 in [7*4, 7*50]
  CHECK(select_variant(mk(100, 100, 8, 8, 13), m) == variant_t::conv);      // KSZ outside [2,11]
  CHECK(select_variant(mk(7, 7, 832, 128, 5, 1, 2), m) == variant_t::conv); // width below the tconv window
  CHECK(select_variant(mk(600, 600, 3, 8, 3), m) == variant_t::conv);       // width above 50*KSZ

  machine_model_t const sm = simd_machine();
  CHECK(select_variant(mk(14, 14, 256, 64, 1), sm) == variant_t::k1conv_simd);
  CHECK(select_variant(mk(205, 205, 3, 96, 7, 2), sm) == variant_t::conv_simd);  // no tconv_simd form
  CHECK(select_variant(mk(100, 100, 8, 8, 13), sm) == variant_t::conv_simd);
}

TEST_CASE("gemm_view_of") {
  gemm_view_t const v = gemm_view_of(mk(205, 205, 3, 96, 7, 2));
  CHECK(v.m == 10000);
  CHECK(v.n == 96);
  CHECK(v.k == 147);

  gemm_view_t const v1 = gemm_view_of(mk(14, 14, 256, 64, 1));
  CHECK(v1.m == 196);
  CHECK(v1.n == 64);
  CHECK(v1.k == 256);

  gemm_view_t const vb = gemm_view_of(mk(205, 205, 3, 96, 7, 2, 0, 20));
  CHECK(vb.m == 200000);  // B multiplies the output-point count
}

TEST_CASE("derive_blocking heuristic defaults") {
  machine_model_t const m;
  gemm_view_t const v{4096, 4096, 4096};
  blocking_t const b = derive_blocking(v, m);
  CHECK(b.mt >= 1);
  CHECK(b.mt <= 8);
  CHECK(b.nt >= 1);
  CHECK(b.nt <= 8);
  CHECK(b.kb >= 1);
  CHECK(b.kb <= 8);
  CHECK(b.threads_per_wg() >= m.min_wg_threads);
  CHECK(b.threads_per_wg() <= m.max_wg_threads);
  CHECK(b.mg == ceil_div(4096, b.mb * b.mt));
  CHECK(b.ng == ceil_div(4096, b.nb * b.nt));
  CHECK(b.local_bytes <= m.local_mem_bytes);
  // frozen heuristic on the default machine: full 8x8 tiles on a 16x16 grid
  CHECK(b.mt == 8);
  CHECK(b.nt == 8);
  CHECK(b.mb == 16);
  CHECK(b.nb == 16);
  CHECK(b.kb == 8);
}

TEST_CASE("derive_blocking honors overrides and the Mg example") {
  machine_model_t const m;
  blocking_overrides_t ov;
  ov.mt = 8;
  ov.nt = 8;
  ov.mb = 8;
  ov.nb = 8;
  ov.kb = 8;
  blocking_t const b = derive_blocking(gemm_view_t{10000, 512, 64}, m, ov);
  CHECK(b.mb == 8);
  CHECK(b.threads_per_wg() == 64);
  CHECK(b.mg == 157);  // ceil(10000/64)
}

TEST_CASE("derive_blocking rejects override violations by name") {
  machine_model_t const m;
  blocking_overrides_t ov;
  ov.mt = 9;
  CHECK_THROWS_WITH_AS(derive_blocking(gemm_view_t{100, 100, 100}, m, ov), doctest::Contains("Mt=9"), error);
  ov = {};
  ov.mb = 1;
  ov.nb = 1;  // 1 thread per workgroup, below min_wg_threads
  CHECK_THROWS_WITH_AS(derive_blocking(gemm_view_t{100, 100, 100}, m, ov), doctest::Contains("workgroup bounds"), error);
  ov = {};
  ov.kb = 3;  // simd machines need Kb to be a vector-width multiple
  CHECK_THROWS(derive_blocking(gemm_view_t{100, 100, 100}, simd_machine(), ov, false, 4));
}

TEST_CASE("derive_blocking infeasible machine limits") {
  machine_model_t tiny;
  tiny.reg_budget_per_thread = 5;  // below even the 1x1 tile's 1+2+16
  CHECK_THROWS(derive_blocking(gemm_view_t{64, 64, 64}, tiny));
  machine_model_t bad;
  bad.min_wg_threads = 300;
  bad.max_wg_threads = 300;  // no square grid b*b in [300,300]
  CHECK_THROWS(derive_blocking(gemm_view_t{64, 64, 64}, bad));
}

TEST_CASE("blocking legality under randomized views and machines") {
  std::mt19937_64 rng(777);
  std::uniform_int_distribution<int64_t> dim(1, 1000000);
  std::uniform_int_distribution<int64_t> wg(32, 1024);
  std::uniform_int_distribution<int64_t> regs(24, 256);
  std::uniform_int_distribution<int64_t> lmem(1024, 131072);
  int accepted = 0;
  for (int it = 0; it != 2000; ++it) {
    gemm_view_t const v{dim(rng), dim(rng), dim(rng)};
    machine_model_t m;
    m.max_wg_threads = wg(rng);
    m.min_wg_threads = std::min<int64_t>(32, m.max_wg_threads);
    m.reg_budget_per_thread = regs(rng);
    m.local_mem_bytes = lmem(rng);
    bool const use_local = (it % 2) == 0;
    try {
      blocking_t const b = derive_blocking(v, m, {}, use_local);
      validate_blocking(b, v, m, use_local);  // every invariant holds
      CHECK(b.mg * b.mb * b.mt >= v.m);
      CHECK(b.ng * b.nb * b.nt >= v.n);
      ++accepted;
    } catch (error const&) {
      // infeasible machine draw; rejection must be an explicit error
    }
  }
  CHECK(accepted > 1500);
}

TEST_CASE("Mg monotonicity in Mb") {
  machine_model_t m;
  m.min_wg_threads = 1;
  int64_t prev_mg = INT64_MAX;
  for (int64_t mb = 1; mb <= 16; mb *= 2) {
    blocking_overrides_t ov;
    ov.mb = mb;
    ov.nb = 16;
    ov.mt = 4;
    ov.nt = 4;
    blocking_t const b = derive_blocking(gemm_view_t{10000, 256, 128}, m, ov);
    CHECK(b.mg <= prev_mg);
    prev_mg = b.mg;
  }
}

TEST_CASE("plan_conv wires variant, transform, and vectorization") {
  machine_model_t const m;
  variant_plan_t const pk1 = plan_conv(mk(14, 14, 256, 64, 1), m);
  CHECK(pk1.variant == variant_t::k1conv);
  CHECK(pk1.input_transform == input_transform_t::k1_layout);
  CHECK(pk1.use_local_mem);
  CHECK(pk1.vec_width == 1);

  variant_plan_t const pt = plan_conv(mk(205, 205, 3, 96, 7, 2), m);
  CHECK(pt.variant == variant_t::tconv);
  CHECK(pt.input_transform == input_transform_t::tile_layout);
  CHECK(pt.use_local_mem);
  // row-aligned padded view: the ceiling invariants hold exactly
  CHECK(pt.blocking.mg == ceil_div(pt.gemm_view.m, pt.blocking.mb * pt.blocking.mt));
  CHECK(pt.gemm_view.m >= 10000);

  machine_model_t const sm = simd_machine();
  variant_plan_t const ps = plan_conv(mk(14, 14, 256, 64, 1), sm);
  CHECK(ps.variant == variant_t::k1conv_simd);
  CHECK(!ps.use_local_mem);
  CHECK(ps.vec_width == 4);
  CHECK(ps.blocking.nt % 4 == 0);
  CHECK(ps.blocking.kb % 4 == 0);

  CHECK_THROWS(plan_conv(mk(8, 8, 4, 4, 3), m, {}, variant_t::k1conv));  // KSZ != 1 pin
}

TEST_CASE("estimate_resources") {
  machine_model_t const m;
  variant_plan_t p = plan_conv(mk(32, 32, 16, 32, 3, 1, 1), m);
  resource_estimate_t const r = estimate_resources(p);
  CHECK(r.regs_est == p.blocking.mt * p.blocking.nt + p.blocking.mt + p.blocking.nt + k_reg_overhead);
  CHECK(r.regs_est >= p.blocking.mt * p.blocking.nt);
  CHECK(r.wg_count == p.blocking.mg * p.blocking.ng);
  CHECK(r.local_bytes == 4 * p.blocking.kb * (p.blocking.mb * p.blocking.mt + p.blocking.nb * p.blocking.nt));

  variant_plan_t nolocal = p;
  nolocal.use_local_mem = false;
  CHECK(estimate_resources(nolocal).local_bytes == 0);

  // local bytes scale linearly with Kb
  variant_plan_t doubled = p;
  doubled.blocking.kb *= 2;
  CHECK(estimate_resources(doubled).local_bytes == 2 * r.local_bytes);
}

TEST_CASE("tuning file load") {
  std::string const path = "/tmp/kerngen_test_tune.json";
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("{\"planner\": {\"tconv_min_width_factor\": 5}, \"ops\": {\"conv1\": {\"variant\": \"tconv\", \"Mt\": 4, \"Nt\": 2}}}", f);
    std::fclose(f);
  }
  tuning_t const t = load_tuning(path);
  CHECK(t.planner.tconv_min_width_factor == 5);
  REQUIRE(t.ops.count("conv1"));
  CHECK(t.ops.at("conv1").variant_pin == variant_t::tconv);
  CHECK(t.ops.at("conv1").blocking.mt == 4);
  CHECK(t.ops.at("conv1").blocking.nt == 2);
  CHECK(!t.ops.at("conv1").blocking.kb);
  CHECK_THROWS(load_tuning("/nonexistent/tune.json"));
}

TEST_CASE("frozen-heuristic blocking for the 4096 cube matches its golden record") {
  machine_model_t const m = load_machine_model(std::string(KERNGEN_DATA_DIR) + "/machines/default.json");
  blocking_t const b = derive_blocking(gemm_view_t{4096, 4096, 4096}, m);
  std::ifstream g(std::string(KERNGEN_GOLDEN_DIR) + "/blocking_4096.json");
  REQUIRE(g.good());
  nlohmann::json j;
  g >> j;
  CHECK(b.mt == j.at("Mt").get<int64_t>());
  CHECK(b.nt == j.at("Nt").get<int64_t>());
  CHECK(b.kb == j.at("Kb").get<int64_t>());
  CHECK(b.mb == j.at("Mb").get<int64_t>());
  CHECK(b.nb == j.at("Nb").get<int64_t>());
  CHECK(b.mg == j.at("Mg").get<int64_t>());
  CHECK(b.ng == j.at("Ng").get<int64_t>());
  CHECK(b.regs_est == j.at("regs_est").get<int64_t>());
  CHECK(b.local_bytes == j.at("local_bytes").get<int64_t>());
}

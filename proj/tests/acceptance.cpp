// acceptance suite: one criterion per test case, one printed pass/fail line each
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "kerngen/bench.hpp"

using namespace kerngen;
using clock_t_ = std::chrono::steady_clock;

namespace {

std::string const data_dir = KERNGEN_DATA_DIR;
std::string const golden_dir = KERNGEN_GOLDEN_DIR;

double seconds_since(clock_t_::time_point const t0) {
  return std::chrono::duration<double>(clock_t_::now() - t0).count();
}

void report(int const n, char const* name, bool const ok, double const secs) {
  std::printf("ACCEPTANCE %d %-18s %s  (%.3fs)\n", n, name, ok ? "PASS" : "FAIL", secs);
  std::fflush(stdout);
}

conv_spec_t mk(int64_t y, int64_t x, int64_t c, int64_t oc, int64_t ksz, int64_t stride, int64_t pad, int64_t b,
               bool relu, bool bias) {
  conv_spec_t s;
  s.in_y = y;
  s.in_x = x;
  s.in_c = c;
  s.oc = oc;
  s.ksz = ksz;
  s.stride = stride;
  s.pad = pad;
  s.batch = b;
  s.fuse_relu = relu;
  s.has_bias = bias;
  return s;
}

}  // namespace

TEST_CASE("criterion 1: shape fidelity") {
  auto const t0 = clock_t_::now();
  conv_spec_t s;
  s.in_y = s.in_x = 205;
  s.in_c = 3;
  s.oc = 96;
  s.ksz = 7;
  s.stride = 2;
  conv_shapes_t const sh = infer_shapes(s);
  double const secs = seconds_since(t0);
  bool ok = true;
  ok &= sh.out_dims == dims_t::parse("Y:X:C=100:100:96");
  ok &= sh.filts_dims == dims_t::parse("OC:KY:KX:IC=96:7:7:3");
  ok &= sh.inmat_dims == dims_t::parse("M:K=10000:147");
  ok &= sh.out_dims.product() == 960000;
  ok &= secs < 0.001;
  report(1, "shape-fidelity", ok, secs);
  CHECK(sh.out_dims.str() == "Y:X:C=100:100:96");
  CHECK(sh.filts_dims.str() == "OC:KY:KX:IC=96:7:7:3");
  CHECK(sh.inmat_dims.str() == "M:K=10000:147");
  CHECK(sh.out_dims.product() == 960000);
  CHECK(secs < 0.001);
}

TEST_CASE("criterion 2: AI fidelity") {
  auto const t0 = clock_t_::now();
  // independently coded FLOP/byte counter: walk the GEMM traversal, count
  // 2 FLOPs per multiply-add, and mark every touched element of a, b, c
  int64_t const M = 10000, N = 96, K = 147;
  std::vector<uint8_t> ta((size_t)(M * K), 0), tb((size_t)(K * N), 0), tc((size_t)(M * N), 0);
  int64_t flops = 0;
  for (int64_t m = 0; m != M; ++m) {
    for (int64_t n = 0; n != N; ++n) {
      for (int64_t k = 0; k != K; ++k) {
        flops += 2;
        ta[(size_t)(m * K + k)] = 1;
        tb[(size_t)(k * N + n)] = 1;
        tc[(size_t)(m * N + n)] = 1;
      }
    }
  }
  int64_t bytes = 0;
  for (uint8_t const v : ta) { bytes += v ? 4 : 0; }
  for (uint8_t const v : tb) { bytes += v ? 4 : 0; }
  for (uint8_t const v : tc) { bytes += v ? 4 : 0; }
  double const counted_ai = (double)flops / (double)bytes;
  double const formula_ai = sgemm_ai(M, N, K);
  bool ok = std::fabs(counted_ai - formula_ai) / formula_ai <= 1e-12;

  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int64_t> d(1, 1000000);
  for (int it = 0; it != 1000 && ok; ++it) {
    int64_t const a = d(rng), b = d(rng), c = d(rng);
    double const base = sgemm_ai(a, b, c);
    for (auto const& p : {std::array<int64_t, 3>{a, c, b}, {b, a, c}, {b, c, a}, {c, a, b}, {c, b, a}}) {
      ok &= std::fabs(sgemm_ai(p[0], p[1], p[2]) - base) / base <= 1e-12;
    }
  }
  double const secs = seconds_since(t0);
  report(2, "ai-fidelity", ok, secs);
  CHECK(counted_ai == doctest::Approx(formula_ai).epsilon(1e-12));
  CHECK(ok);
}

TEST_CASE("criterion 3: twin property across the variant matrix") {
  auto const t0 = clock_t_::now();
  machine_model_t const desk = load_machine_model(data_dir + "/machines/default.json");
  machine_model_t const mobile = load_machine_model(data_dir + "/machines/mobile_simd.json");

  struct case_t {
    conv_spec_t s;
    variant_t v;
    machine_model_t const* m;
  };
  std::vector<case_t> cases;
  auto add = [&](conv_spec_t const& s, variant_t v, machine_model_t const& m) { cases.push_back({s, v, &m}); };

  // conv and conv_simd: divisible and non-divisible sizes, both pads, B in {1,2}, fusion combos
  for (int64_t const b : {1, 2}) {
    for (int const fuse : {0, 1}) {
      add(mk(16, 16, 4, 8, 3, 1, 0, b, fuse, fuse), variant_t::conv, desk);
      add(mk(13, 11, 3, 5, 3, 1, 1, b, !fuse, fuse), variant_t::conv, desk);
      add(mk(16, 16, 8, 8, 3, 1, 1, b, fuse, !fuse), variant_t::conv_simd, mobile);
      add(mk(13, 11, 3, 5, 3, 1, 0, b, fuse, fuse), variant_t::conv_simd, mobile);
    }
  }
  // k1conv family: stride 1 and 2, vector-divisible and ragged channels
  for (int64_t const b : {1, 2}) {
    for (int const fuse : {0, 1}) {
      add(mk(14, 14, 16, 8, 1, 1, 0, b, fuse, fuse), variant_t::k1conv, desk);
      add(mk(13, 9, 7, 5, 1, 1, 0, b, !fuse, fuse), variant_t::k1conv, desk);
      add(mk(16, 16, 16, 8, 1, 2, 0, b, fuse, !fuse), variant_t::k1conv_simd, mobile);
      add(mk(13, 9, 7, 5, 1, 1, 0, b, fuse, fuse), variant_t::k1conv_simd, mobile);
    }
  }
  // tconv: kernel sizes across its window, both pads, non-divisible widths
  for (int64_t const b : {1, 2}) {
    add(mk(12, 12, 4, 4, 3, 1, 0, b, false, false), variant_t::tconv, desk);
    add(mk(12, 12, 4, 4, 3, 1, 1, b, true, true), variant_t::tconv, desk);
    add(mk(13, 17, 3, 5, 3, 1, 1, b, false, true), variant_t::tconv, desk);
    add(mk(21, 21, 3, 8, 7, 2, 3, b, true, false), variant_t::tconv, desk);
    add(mk(25, 30, 2, 6, 5, 2, 2, b, false, false), variant_t::tconv, desk);
  }
  // sgemm-shaped extra case through the conv fallback at KSZ outside [2,11]
  add(mk(40, 40, 2, 4, 13, 3, 0, 1, false, false), variant_t::conv, desk);
  add(mk(40, 40, 2, 4, 13, 3, 0, 1, true, true), variant_t::conv_simd, mobile);

  REQUIRE(cases.size() >= 40);
  bool ok = true;
  int64_t idx = 0;
  int fails = 0;
  for (case_t const& c : cases) {
    named_op_t op;
    op.name = strprintf("twin%lld", (long long)idx++);
    op.spec = c.s;
    tuning_t tuning;
    tuning.ops[op.name].variant_pin = c.v;
    sweep_config_t cfg;
    report_row_t const row = verify_op(op, *c.m, tuning, cfg);
    if (!row.verified) {
      ++fails;
      std::printf("  twin case %s (%s) FAILED: %s\n", op.name.c_str(), variant_str(c.v), row.fail_reason.c_str());
    }
    ok &= row.verified;
    CHECK_MESSAGE(row.verified, variant_str(c.v));
  }
  double const secs = seconds_since(t0);
  ok &= secs < 300.0;
  report(3, "twin-property", ok, secs);
  std::printf("  %zu cases, %d failures\n", cases.size(), fails);
  CHECK(secs < 300.0);
}

TEST_CASE("criterion 4: tconv traffic reduction") {
  auto const t0 = clock_t_::now();
  machine_model_t const desk = load_machine_model(data_dir + "/machines/default.json");
  bool ok = true;
  struct tcase_t {
    conv_spec_t s;
    double ideal;
  };
  // tile-aligned 32x64-output shapes keep boundary overlap inside the slack
  std::vector<tcase_t> const tcases{{mk(34, 66, 8, 4, 3, 1, 0, 1, false, false), 9.0},
                                    {mk(69, 133, 4, 4, 7, 2, 0, 1, false, false), 12.25}};
  for (tcase_t const& tc : tcases) {
    blocking_overrides_t ov;
    ov.mt = 4;
    ov.nt = 4;
    ov.mb = 256;
    ov.nb = 1;
    auto run_variant = [&](variant_t v) {
      variant_plan_t const plan = plan_conv(tc.s, desk, ov, v);
      std::vector<kernel_artifact_t> const stages = gen_conv_pipeline(plan, tc.s);
      std::map<std::string, nda_t> inputs;
      nda_t in{tc.s.in_dims()};
      nda_t filts{infer_shapes(tc.s).filts_dims};
      for (size_t i = 0; i != in.data().size(); ++i) { in.data()[i] = (float)((i * 13 + 1) % 17) / 8.0f; }
      for (size_t i = 0; i != filts.data().size(); ++i) { filts.data()[i] = (float)((i * 7 + 2) % 19) / 9.0f - 1.0f; }
      inputs.emplace("in", std::move(in));
      inputs.emplace("filts", std::move(filts));
      return run_pipeline(stages, inputs);
    };
    pipeline_result_t const rt = run_variant(variant_t::tconv);
    pipeline_result_t const rc = run_variant(variant_t::conv);
    double const tconv_in = (double)rt.stage_counters.back().loads_by_buffer.at("in_tiled");
    double const conv_in = (double)rc.stage_counters.back().loads_by_buffer.at("in");
    double const factor = conv_in / tconv_in;
    bool const within = factor >= tc.ideal * 0.7 && factor <= tc.ideal * 1.3;
    std::printf("  KSZ=%lld stride=%lld: conv %lld B, tconv %lld B, factor %.2f (ideal %.2f)\n", (long long)tc.s.ksz,
                (long long)tc.s.stride, (long long)(int64_t)conv_in, (long long)(int64_t)tconv_in, factor, tc.ideal);
    ok &= within;
    CHECK(within);
  }
  double const secs = seconds_since(t0);
  ok &= secs < 60.0;
  report(4, "traffic-reduction", ok, secs);
  CHECK(secs < 60.0);
}

TEST_CASE("criterion 5: blocking legality on 10000 randomized calls") {
  auto const t0 = clock_t_::now();
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<int64_t> dim(1, 1000000);
  std::uniform_int_distribution<int64_t> wg(36, 1024);
  std::uniform_int_distribution<int64_t> regs(19, 256);
  std::uniform_int_distribution<int64_t> lmem(4096, 131072);
  bool ok = true;
  for (int it = 0; it != 10000 && ok; ++it) {
    gemm_view_t const v{dim(rng), dim(rng), dim(rng)};
    machine_model_t m;
    m.max_wg_threads = wg(rng);
    m.min_wg_threads = 32;
    m.reg_budget_per_thread = regs(rng);
    m.local_mem_bytes = lmem(rng);
    bool const use_local = (it % 2) == 0;
    try {
      blocking_t const b = derive_blocking(v, m, {}, use_local);
      validate_blocking(b, v, m, use_local);
      ok &= b.mt >= 1 && b.mt <= 8 && b.nt >= 1 && b.nt <= 8 && b.kb >= 1 && b.kb <= 8;
      ok &= b.threads_per_wg() >= 32 && b.threads_per_wg() <= m.max_wg_threads;
      ok &= b.mg == ceil_div(v.m, b.mb * b.mt) && b.ng == ceil_div(v.n, b.nb * b.nt);
    } catch (std::exception const& e) {
      std::printf("  derive_blocking failed at it=%d: %s\n", it, e.what());
      ok = false;
    }
  }
  double const secs = seconds_since(t0);
  ok &= secs < 30.0;
  report(5, "blocking-legality", ok, secs);
  CHECK(ok);
  CHECK(secs < 30.0);
}

TEST_CASE("criterion 6: three-net suite sweep at scale 4") {
  auto const t0 = clock_t_::now();
  suite_t const suite = load_suite(
      {data_dir + "/nets/alexnet.ops", data_dir + "/nets/nin.ops", data_dir + "/nets/googlenet_v1.ops"}, {1, 5, 20});
  machine_model_t const desk = load_machine_model(data_dir + "/machines/default.json");

  std::ifstream gf(golden_dir + "/suite_counts.json");
  REQUIRE_MESSAGE(gf.good(), "golden suite_counts.json missing");
  nlohmann::json gj;
  gf >> gj;
  int64_t const golden_ops = gj.at("unique_ops").get<int64_t>();
  int64_t const golden_fallback = gj.at("conv_fallback_rows").get<int64_t>();

  bool ok = (int64_t)suite.ops.size() == golden_ops;
  ok &= suite.ops.size() >= 120 && suite.ops.size() <= 240;  // on the order of 180

  sweep_config_t cfg;
  cfg.scale = 4;
  cfg.parallel_rows = 8;
  std::vector<report_row_t> const rows = sweep(suite, desk, {}, cfg);
  int64_t fallback = 0, failures = 0;
  for (report_row_t const& r : rows) {
    fallback += r.variant == variant_t::conv ? 1 : 0;
    failures += r.verified ? 0 : 1;
    if (!r.verified) { std::printf("  row %s B=%lld FAILED: %s\n", r.op_name.c_str(), (long long)r.batch, r.fail_reason.c_str()); }
  }
  ok &= failures == 0;
  ok &= fallback == golden_fallback;
  ok &= (double)fallback / (double)rows.size() < 0.25;

  std::string const csv = emit_report(rows, report_format_t::csv);
  sweep_config_t cfg2 = cfg;
  cfg2.parallel_rows = 3;
  cfg2.emu.workgroup_parallelism = 2;
  std::string const csv2 = emit_report(sweep(suite, desk, {}, cfg2), report_format_t::csv);
  ok &= csv == csv2;

  double const secs = seconds_since(t0);
  ok &= secs < 600.0;
  report(6, "suite-sweep", ok, secs);
  std::printf("  %zu unique ops (golden %lld), %lld conv-fallback rows (%.1f%%), %lld failures\n", rows.size(),
              (long long)golden_ops, (long long)fallback, 100.0 * (double)fallback / (double)rows.size(),
              (long long)failures);
  CHECK((int64_t)suite.ops.size() == golden_ops);
  CHECK(failures == 0);
  CHECK(fallback == golden_fallback);
  CHECK((double)fallback / (double)rows.size() < 0.25);
  CHECK(csv == csv2);
  CHECK(secs < 600.0);
}

TEST_CASE("criterion 7: determinism of codegen and emulation") {
  auto const t0 = clock_t_::now();
  machine_model_t const desk = load_machine_model(data_dir + "/machines/default.json");
  machine_model_t const mobile = load_machine_model(data_dir + "/machines/mobile_simd.json");
  bool ok = true;

  // ten frozen plans: five specs on each machine; three generation runs each
  std::vector<std::pair<variant_plan_t, conv_spec_t>> plans;
  for (conv_spec_t const& s :
       {mk(9, 9, 3, 4, 3, 2, 1, 1, false, false), mk(14, 14, 16, 8, 1, 1, 0, 1, true, true),
        mk(12, 12, 4, 4, 3, 1, 1, 2, false, true), mk(21, 21, 3, 8, 7, 2, 0, 1, true, false),
        mk(13, 11, 3, 5, 3, 1, 1, 1, false, false)}) {
    plans.emplace_back(plan_conv(s, desk), s);
    plans.emplace_back(plan_conv(s, mobile), s);
  }
  for (auto const& [plan, spec] : plans) {
    std::vector<kernel_artifact_t> const a = gen_conv_pipeline(plan, spec);
    for (int rep = 0; rep != 2; ++rep) {
      std::vector<kernel_artifact_t> const b = gen_conv_pipeline(plan, spec);
      ok &= a.size() == b.size();
      for (size_t i = 0; i != a.size(); ++i) {
        ok &= a[i].source_text == b[i].source_text;
        ok &= ir_to_json(a[i].ir, a[i].buffers) == ir_to_json(b[i].ir, b[i].buffers);
      }
    }
  }

  // emulator outputs bit-identical across workgroup_parallelism in {1,4}
  conv_spec_t const s = mk(17, 13, 5, 7, 3, 2, 1, 2, true, true);
  named_op_t op;
  op.name = "det";
  op.spec = s;
  sweep_config_t c1;
  c1.emu.workgroup_parallelism = 1;
  sweep_config_t c4;
  c4.emu.workgroup_parallelism = 4;
  for (variant_t v : {variant_t::conv, variant_t::tconv}) {
    tuning_t tuning;
    tuning.ops[op.name].variant_pin = v;
    variant_plan_t const plan = plan_conv(s, desk, {}, v);
    std::vector<kernel_artifact_t> const stages = gen_conv_pipeline(plan, s);
    std::map<std::string, nda_t> inputs;
    nda_t in{s.in_dims()}, filts{infer_shapes(s).filts_dims}, bias{dims_t{{"OC", s.oc}}};
    for (size_t i = 0; i != in.data().size(); ++i) { in.data()[i] = (float)((i * 31 + 7) % 23) / 11.0f - 1.0f; }
    for (size_t i = 0; i != filts.data().size(); ++i) { filts.data()[i] = (float)((i * 17 + 3) % 29) / 14.0f - 1.0f; }
    for (size_t i = 0; i != bias.data().size(); ++i) { bias.data()[i] = (float)i / 7.0f - 0.5f; }
    inputs.emplace("in", std::move(in));
    inputs.emplace("filts", std::move(filts));
    inputs.emplace("bias", std::move(bias));
    pipeline_result_t const r1 = run_pipeline(stages, inputs, c1.emu);
    pipeline_result_t const r4 = run_pipeline(stages, inputs, c4.emu);
    ok &= r1.outputs.at("out").data() == r4.outputs.at("out").data();
    ok &= r1.counters.fma_count == r4.counters.fma_count;
    ok &= r1.counters.global_loads_bytes == r4.counters.global_loads_bytes;
  }

  double const secs = seconds_since(t0);
  ok &= secs < 60.0;
  report(7, "determinism", ok, secs);
  CHECK(ok);
  CHECK(secs < 60.0);
}

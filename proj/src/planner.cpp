#include "kerngen/planner.hpp"

#include <fstream>

#include "json.hpp"

namespace kerngen {

char const* variant_str(variant_t const v) {
  switch (v) {
    case variant_t::conv: return "conv";
    case variant_t::k1conv: return "k1conv";
    case variant_t::tconv: return "tconv";
    case variant_t::conv_simd: return "conv_simd";
    case variant_t::k1conv_simd: return "k1conv_simd";
    case variant_t::sgemm: return "sgemm";
  }
  return "?";
}

variant_t variant_from_str(std::string const& s) {
  for (variant_t v : {variant_t::conv, variant_t::k1conv, variant_t::tconv, variant_t::conv_simd,
                      variant_t::k1conv_simd, variant_t::sgemm}) {
    if (s == variant_str(v)) { return v; }
  }
  rt_err("unknown variant '" + s + "'");
}

char const* input_transform_str(input_transform_t const t) {
  switch (t) {
    case input_transform_t::none: return "none";
    case input_transform_t::k1_layout: return "k1_layout";
    case input_transform_t::tile_layout: return "tile_layout";
  }
  return "?";
}

variant_t select_variant(conv_spec_t const& s, machine_model_t const& m, planner_config_t const& cfg) {
  variant_t base = variant_t::conv;
  if (s.ksz == 1) {
    base = variant_t::k1conv;
  } else if (s.ksz >= cfg.tconv_min_ksz && s.ksz <= cfg.tconv_max_ksz && s.in_x >= s.ksz * cfg.tconv_min_width_factor &&
             s.in_x <= s.ksz * cfg.tconv_max_width_factor) {
    base = variant_t::tconv;
  }
  if (m.simd_width > 1) {
    // only conv and k1conv have simd forms; tconv-eligible ops fall back to conv_simd
    if (base == variant_t::k1conv) { return variant_t::k1conv_simd; }
    return variant_t::conv_simd;
  }
  return base;
}

gemm_view_t gemm_view_of(conv_spec_t const& s) {
  conv_shapes_t const sh = infer_shapes(s);
  return gemm_view_t{checked_mul(s.batch, sh.out_y * sh.out_x, "gemm M"), s.oc, s.ksz * s.ksz * s.in_c};
}

void validate_blocking(blocking_t const& b, gemm_view_t const& view, machine_model_t const& m, bool const use_local_mem) {
  std::string viol;
  auto require = [&](bool const ok, std::string const& what) {
    if (!ok) { viol += (viol.empty() ? "" : "; ") + what; }
  };
  require(b.mt >= 1 && b.mt <= 8, strprintf("Mt=%lld outside [1,8]", (long long)b.mt));
  require(b.nt >= 1 && b.nt <= 8, strprintf("Nt=%lld outside [1,8]", (long long)b.nt));
  require(b.kb >= 1 && b.kb <= 8, strprintf("Kb=%lld outside [1,8]", (long long)b.kb));
  require(b.mb >= 1 && b.nb >= 1, "Mb/Nb must be >= 1");
  require(b.threads_per_wg() >= m.min_wg_threads && b.threads_per_wg() <= m.max_wg_threads,
          strprintf("Mb*Nb=%lld outside workgroup bounds [%lld,%lld]", (long long)b.threads_per_wg(),
                    (long long)m.min_wg_threads, (long long)m.max_wg_threads));
  require(b.mg == ceil_div(view.m, b.mb * b.mt), strprintf("Mg=%lld != ceil(M/(Mb*Mt))=%lld", (long long)b.mg,
                                                           (long long)ceil_div(view.m, b.mb * b.mt)));
  require(b.ng == ceil_div(view.n, b.nb * b.nt), strprintf("Ng=%lld != ceil(N/(Nb*Nt))=%lld", (long long)b.ng,
                                                           (long long)ceil_div(view.n, b.nb * b.nt)));
  require(b.regs_est == b.mt * b.nt + b.mt + b.nt + k_reg_overhead, "regs_est formula mismatch");
  if (use_local_mem) {
    require(b.local_bytes == 4 * b.kb * (b.mb * b.mt + b.nb * b.nt), "local_bytes formula mismatch");
    require(b.local_bytes <= m.local_mem_bytes, strprintf("local_bytes=%lld exceeds machine local memory %lld",
                                                          (long long)b.local_bytes, (long long)m.local_mem_bytes));
  } else {
    require(b.local_bytes == 0, "local_bytes must be 0 when local memory is unused");
  }
  require(b.mg * b.mb * b.mt >= view.m, "coverage: Mg*Mb*Mt < M");
  require(b.ng * b.nb * b.nt >= view.n, "coverage: Ng*Nb*Nt < N");
  if (!viol.empty()) { rt_err("invalid blocking: " + viol); }
}

// largest t in [lo,8] with mt*t+mt+t+overhead within the register budget,
// stepping down in multiples of `mult`
static int64_t largest_nt(int64_t const mt, int64_t const budget, int64_t const mult, int64_t const lo) {
  for (int64_t t = 8 / mult * mult; t >= lo; t -= mult) {
    if (mt * t + mt + t + k_reg_overhead <= budget) { return t; }
  }
  return 0;
}

blocking_t derive_blocking(gemm_view_t const& view, machine_model_t const& m, blocking_overrides_t const& ov,
                           bool const use_local_mem, int64_t const vec_width, planner_config_t const& cfg) {
  m.validate();
  if (view.m < 1 || view.n < 1 || view.k < 1) { rt_err("derive_blocking: M,N,K must be >= 1"); }
  if (vec_width < 1) { rt_err("derive_blocking: vec_width must be >= 1"); }
  int64_t const nt_mult = vec_width > 1 ? vec_width : 1;
  if (nt_mult > 8) { rt_err(strprintf("machine simd_width %lld exceeds the Nt range [1,8]; no legal blocking", (long long)nt_mult)); }

  blocking_t b;
  // register tile: largest square-ish Mt x Nt fitting the register budget;
  // for vectorized stores Nt stays a multiple of the vector width
  if (ov.mt && ov.nt) {
    b.mt = *ov.mt;
    b.nt = *ov.nt;
  } else if (ov.mt) {
    b.mt = *ov.mt;
    b.nt = largest_nt(b.mt, m.reg_budget_per_thread, nt_mult, nt_mult);
    if (!b.nt) { rt_err(strprintf("infeasible machine limits: no Nt in [1,8] fits reg budget %lld with Mt=%lld", (long long)m.reg_budget_per_thread, (long long)b.mt)); }
  } else if (ov.nt) {
    b.nt = *ov.nt;
    b.mt = largest_nt(b.nt, m.reg_budget_per_thread, 1, 1);
    if (!b.mt) { rt_err("infeasible machine limits: no Mt in [1,8] fits the register budget"); }
  } else {
    int64_t best_mt = 0, best_nt = 0;
    for (int64_t t = 8; t >= 1; --t) {
      int64_t const nt = largest_nt(t, m.reg_budget_per_thread, nt_mult, nt_mult);
      if (nt && (t * nt > best_mt * best_nt)) { best_mt = t; best_nt = nt; }
    }
    if (!best_mt) { rt_err(strprintf("infeasible machine limits: register budget %lld below the minimum tile", (long long)m.reg_budget_per_thread)); }
    b.mt = best_mt;
    b.nt = best_nt;
  }

  // thread grid: largest square Mb=Nb within the workgroup thread bound; when
  // local memory is used the Kb=1 tile must fit before choosing Kb
  auto local_fits = [&](int64_t const kb, int64_t const mb, int64_t const nb) {
    return 4 * kb * (mb * b.mt + nb * b.nt) <= m.local_mem_bytes;
  };
  if (ov.mb && ov.nb) {
    b.mb = *ov.mb;
    b.nb = *ov.nb;
  } else if (ov.mb || ov.nb) {
    int64_t const fixed = ov.mb ? *ov.mb : *ov.nb;
    if (fixed < 1) { rt_err("invalid blocking: Mb/Nb must be >= 1"); }
    int64_t other = std::max<int64_t>(1, m.max_wg_threads / fixed);
    while (other > 1 && (use_local_mem && !local_fits(1, ov.mb ? fixed : other, ov.mb ? other : fixed))) { --other; }
    b.mb = ov.mb ? fixed : other;
    b.nb = ov.nb ? fixed : other;
  } else {
    int64_t bb = 1;
    while ((bb + 1) * (bb + 1) <= m.max_wg_threads) { ++bb; }
    while (bb > 1 && use_local_mem && !local_fits(1, bb, bb)) { --bb; }
    b.mb = b.nb = bb;
    if (bb * bb < m.min_wg_threads) {
      rt_err(strprintf("infeasible machine limits: largest square thread grid %lldx%lld below min_wg_threads %lld",
                       (long long)bb, (long long)bb, (long long)m.min_wg_threads));
    }
  }

  // inner-loop unroll: largest Kb fitting local memory (or max when local
  // memory is unused); vectorized variants keep Kb a vector-width multiple
  if (ov.kb) {
    b.kb = *ov.kb;
  } else {
    int64_t kb = 0;
    for (int64_t k = 8 / nt_mult * nt_mult; k >= nt_mult; k -= nt_mult) {
      if (!use_local_mem || local_fits(k, b.mb, b.nb)) { kb = k; break; }
    }
    if (!kb) { rt_err(strprintf("infeasible machine limits: local memory %lld too small for Kb=%lld at Mb=%lld Nb=%lld",
                                (long long)m.local_mem_bytes, (long long)nt_mult, (long long)b.mb, (long long)b.nb)); }
    b.kb = kb;
  }

  // clamp register tiles down while the launch is too small to saturate the
  // device; shrink Nt before Mt on ties, never below the vector width
  int64_t const sat = cfg.saturation_wg_per_cu * m.compute_units;
  auto mg_of = [&]() { return ceil_div(view.m, b.mb * b.mt); };
  auto ng_of = [&]() { return ceil_div(view.n, b.nb * b.nt); };
  for (;;) {
    if (mg_of() * ng_of() >= sat) { break; }
    bool const can_nt = !ov.nt && b.nt / 2 >= nt_mult && (b.nt / 2) % nt_mult == 0;
    bool const can_mt = !ov.mt && b.mt / 2 >= 1;
    if (!can_nt && !can_mt) { break; }
    if (can_nt && (!can_mt || b.nt >= b.mt)) { b.nt /= 2; } else { b.mt /= 2; }
  }

  b.mg = mg_of();
  b.ng = ng_of();
  b.regs_est = b.mt * b.nt + b.mt + b.nt + k_reg_overhead;
  b.local_bytes = use_local_mem ? 4 * b.kb * (b.mb * b.mt + b.nb * b.nt) : 0;

  if (vec_width > 1 && (b.nt % vec_width || b.kb % vec_width)) {
    rt_err(strprintf("invalid blocking: vec_width %lld must divide Nt=%lld and Kb=%lld", (long long)vec_width,
                     (long long)b.nt, (long long)b.kb));
  }
  validate_blocking(b, view, m, use_local_mem);
  return b;
}

resource_estimate_t estimate_resources(variant_plan_t const& p) {
  resource_estimate_t r;
  r.regs_est = p.blocking.mt * p.blocking.nt + p.blocking.mt + p.blocking.nt + k_reg_overhead;
  r.local_bytes = p.use_local_mem ? 4 * p.blocking.kb * (p.blocking.mb * p.blocking.mt + p.blocking.nb * p.blocking.nt) : 0;
  r.wg_count = p.blocking.mg * p.blocking.ng;
  return r;
}

// row-aligned x-block factorization of the tconv thread grid: largest divisor
// of Mb not exceeding the per-row x-block count
int64_t tconv_mb_x(int64_t const mb, int64_t const xb) {
  for (int64_t d = std::min(mb, xb); d >= 1; --d) {
    if (mb % d == 0) { return d; }
  }
  return 1;
}

variant_plan_t plan_conv(conv_spec_t const& s, machine_model_t const& m, blocking_overrides_t const& ov,
                         std::optional<variant_t> const variant_pin, planner_config_t const& cfg) {
  variant_plan_t p;
  p.variant = variant_pin ? *variant_pin : select_variant(s, m, cfg);
  if (p.variant == variant_t::sgemm) { rt_err("plan_conv: sgemm is not a convolution variant; use plan_sgemm"); }
  if ((p.variant == variant_t::k1conv || p.variant == variant_t::k1conv_simd) && s.ksz != 1) {
    rt_err(strprintf("variant %s requires KSZ=1, got KSZ=%lld", variant_str(p.variant), (long long)s.ksz));
  }
  bool const simd = variant_is_simd(p.variant);
  p.vec_width = simd ? m.simd_width : 1;
  p.use_local_mem = p.variant == variant_t::tconv ? true : (!simd && m.explicit_local_mem_profitable);
  p.gemm_view = gemm_view_of(s);
  switch (p.variant) {
    case variant_t::k1conv:
    case variant_t::k1conv_simd: p.input_transform = input_transform_t::k1_layout; break;
    case variant_t::tconv: p.input_transform = input_transform_t::tile_layout; break;
    default: p.input_transform = input_transform_t::none; break;
  }
  p.blocking = derive_blocking(p.gemm_view, m, ov, p.use_local_mem, p.vec_width, cfg);
  if (p.variant == variant_t::tconv) {
    // row-aligned tiling: round M up so every workgroup owns a rectangular
    // (Mb_y rows) x (Mb_x*Mt columns) output tile of one image
    conv_shapes_t const sh = infer_shapes(s);
    int64_t const xb = ceil_div(sh.out_x, p.blocking.mt);
    int64_t const mbx = tconv_mb_x(p.blocking.mb, xb);
    int64_t const mby = p.blocking.mb / mbx;
    int64_t const mg = s.batch * ceil_div(sh.out_y, mby) * ceil_div(xb, mbx);
    p.blocking.mg = mg;
    p.gemm_view.m = mg * p.blocking.mb * p.blocking.mt;
    validate_blocking(p.blocking, p.gemm_view, m, p.use_local_mem);
  }
  return p;
}

variant_plan_t plan_sgemm(gemm_view_t const& view, machine_model_t const& m, blocking_overrides_t const& ov) {
  variant_plan_t p;
  p.variant = variant_t::sgemm;
  p.vec_width = m.simd_width;
  p.use_local_mem = m.explicit_local_mem_profitable && m.simd_width == 1;
  p.gemm_view = view;
  p.input_transform = input_transform_t::none;
  p.blocking = derive_blocking(view, m, ov, p.use_local_mem, p.vec_width, {});
  return p;
}

tuning_t load_tuning(std::string const& path) {
  std::ifstream in(path);
  if (!in) { rt_err("cannot open tuning file: " + path); }
  nlohmann::json j;
  try {
    in >> j;
  } catch (std::exception const& e) {
    rt_err("bad tuning JSON in " + path + ": " + e.what());
  }
  tuning_t t;
  if (j.contains("planner")) {
    nlohmann::json const& p = j.at("planner");
    auto get = [&](char const* key, int64_t& field) {
      if (p.contains(key)) { field = p.at(key).get<int64_t>(); }
    };
    get("tconv_min_ksz", t.planner.tconv_min_ksz);
    get("tconv_max_ksz", t.planner.tconv_max_ksz);
    get("tconv_min_width_factor", t.planner.tconv_min_width_factor);
    get("tconv_max_width_factor", t.planner.tconv_max_width_factor);
    get("saturation_wg_per_cu", t.planner.saturation_wg_per_cu);
  }
  if (j.contains("ops")) {
    for (auto const& [name, e] : j.at("ops").items()) {
      tuning_t::entry_t entry;
      auto get = [&](char const* key, std::optional<int64_t>& field) {
        if (e.contains(key)) { field = e.at(key).template get<int64_t>(); }
      };
      get("Mt", entry.blocking.mt);
      get("Nt", entry.blocking.nt);
      get("Kb", entry.blocking.kb);
      get("Mb", entry.blocking.mb);
      get("Nb", entry.blocking.nb);
      if (e.contains("variant")) { entry.variant_pin = variant_from_str(e.at("variant").get<std::string>()); }
      t.ops[name] = entry;
    }
  }
  return t;
}

}  // namespace kerngen

#ifndef KERNGEN_PLANNER_HPP
#define KERNGEN_PLANNER_HPP

#include <map>
#include <optional>
#include <string>

#include "kerngen/analysis.hpp"
#include "kerngen/netops.hpp"

namespace kerngen {

enum class variant_t { conv, k1conv, tconv, conv_simd, k1conv_simd, sgemm };
char const* variant_str(variant_t v);
variant_t variant_from_str(std::string const& s);
inline bool variant_is_simd(variant_t const v) { return v == variant_t::conv_simd || v == variant_t::k1conv_simd; }

enum class input_transform_t { none, k1_layout, tile_layout };
char const* input_transform_str(input_transform_t t);

struct gemm_view_t {
  int64_t m = 0;
  int64_t n = 0;
  int64_t k = 0;
};

// register-tile / workgroup blocking constants
struct blocking_t {
  int64_t mt = 1, nt = 1;  // outputs per thread per dim, in [1,8]
  int64_t kb = 1;          // inner-loop unroll factor, in [1,8]
  int64_t mb = 1, nb = 1;  // thread grid per workgroup; mb*nb in machine wg bounds
  int64_t mg = 1, ng = 1;  // workgroup grid: mg = ceil(M/(mb*mt)), ng = ceil(N/(nb*nt))
  int64_t regs_est = 0;    // mt*nt + mt + nt + fixed overhead
  int64_t local_bytes = 0; // 4*kb*(mb*mt + nb*nt) when local memory is used, else 0

  int64_t threads_per_wg() const { return mb * nb; }
};

// fixed register-overhead constant for addresses/loop counters; an estimate,
// not a hardware truth
constexpr int64_t k_reg_overhead = 16;

struct blocking_overrides_t {
  std::optional<int64_t> mt, nt, kb, mb, nb;
  bool any() const { return mt || nt || kb || mb || nb; }
};

// planner policy constants; tconv applicability bounds are deliberately
// config-exposed since they are heuristics, not hard limits
struct planner_config_t {
  int64_t tconv_min_ksz = 2;
  int64_t tconv_max_ksz = 11;
  int64_t tconv_min_width_factor = 4;   // tconv requires in_X >= factor*KSZ
  int64_t tconv_max_width_factor = 50;  // ... and in_X <= factor*KSZ
  int64_t saturation_wg_per_cu = 4;     // target mg*ng >= this * compute_units
};

struct variant_plan_t {
  variant_t variant = variant_t::conv;
  blocking_t blocking;
  bool use_local_mem = false;
  int64_t vec_width = 1;
  input_transform_t input_transform = input_transform_t::none;
  gemm_view_t gemm_view;  // the variant's implicit matrix sizes
};

variant_t select_variant(conv_spec_t const& s, machine_model_t const& m, planner_config_t const& cfg = {});

// largest divisor of Mb not exceeding the per-row x-block count; the tconv
// thread grid factors as (Mb/mb_x) rows by mb_x column blocks
int64_t tconv_mb_x(int64_t mb, int64_t xb);

// M = B*out_Y*out_X, N = OC, K = KSZ*KSZ*IC
gemm_view_t gemm_view_of(conv_spec_t const& s);

// deterministic heuristic fill; overrides honored verbatim, then everything
// validated. errors name the violated constraint.
blocking_t derive_blocking(gemm_view_t const& view, machine_model_t const& m, blocking_overrides_t const& overrides = {},
                           bool use_local_mem = true, int64_t vec_width = 1, planner_config_t const& cfg = {});

void validate_blocking(blocking_t const& b, gemm_view_t const& view, machine_model_t const& m, bool use_local_mem);

struct resource_estimate_t {
  int64_t regs_est = 0;
  int64_t local_bytes = 0;
  int64_t wg_count = 0;
};
resource_estimate_t estimate_resources(variant_plan_t const& p);

// full planning for one conv op: variant (or pin) + blocking + launch geometry
variant_plan_t plan_conv(conv_spec_t const& s, machine_model_t const& m, blocking_overrides_t const& overrides = {},
                         std::optional<variant_t> variant_pin = {}, planner_config_t const& cfg = {});
variant_plan_t plan_sgemm(gemm_view_t const& view, machine_model_t const& m, blocking_overrides_t const& overrides = {});

// per-op-name tuning overrides, from a JSON file
struct tuning_t {
  struct entry_t {
    blocking_overrides_t blocking;
    std::optional<variant_t> variant_pin;
  };
  std::map<std::string, entry_t> ops;
  planner_config_t planner;
};
tuning_t load_tuning(std::string const& path);

}  // namespace kerngen

#endif

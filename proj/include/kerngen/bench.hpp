#ifndef KERNGEN_BENCH_HPP
#define KERNGEN_BENCH_HPP

#include "kerngen/executor.hpp"
#include "kerngen/planner.hpp"

namespace kerngen {

struct suite_t {
  std::string name;
  std::vector<named_op_t> ops;  // after batch expansion and dedup; batch set per entry
  std::vector<int64_t> batch_sizes;
  bool dedup = true;
};

// op-list files: one op per line (relu=/bias= required) or a JSON array of op
// objects; '#' starts a comment. the suite is the cross product of ops and
// batch sizes, deduplicated on the full spec (all fields plus B).
suite_t load_suite(std::vector<std::string> const& paths, std::vector<int64_t> batch_sizes = {1, 5, 20},
                   bool dedup = true);

struct report_row_t {
  std::string op_name;
  int64_t batch = 1;
  variant_t variant = variant_t::conv;
  gemm_view_t view;  // canonical full-size gemm view
  int64_t flops = 0;
  double ai = 0.0;  // direct-lowering arithmetic intensity at full size
  bound_kind_t predicted_bound = bound_kind_t::bandwidth;
  bool verified = false;
  std::string fail_reason;
  int64_t fma_count = 0;  // from the scaled emulation, all stages
  int64_t global_loads_bytes = 0;
  int64_t global_stores_bytes = 0;
};

struct sweep_config_t {
  int64_t scale = 1;      // uniformly divides spatial dims and channel counts (ceil, min 1)
  bool strict = false;    // abort on the first verification failure
  std::string emit_dir;   // when set, write per-op .cl and .ir.json files
  int64_t parallel_rows = 1;
  emu_config_t emu;
};

// per (op,B): plan -> generate -> emulate at scale -> verify vs the oracle.
// row order is suite order; identical inputs give identical rows.
std::vector<report_row_t> sweep(suite_t const& suite, machine_model_t const& machine, tuning_t const& tuning,
                                sweep_config_t const& cfg);

conv_spec_t scale_spec(conv_spec_t const& s, int64_t f);

enum class report_format_t { csv, json, plotdata };
report_format_t report_format_from_str(std::string const& s);
std::string emit_report(std::vector<report_row_t> const& rows, report_format_t fmt);

// element-wise relative comparison with clamped denominators
bool rel_equal(nda_t const& a, nda_t const& b, double tol, double clamp, double* max_rel = nullptr);

// plan, generate, and verify a single op at its own size; returns the row and
// optionally the generated stages and the full pipeline counters
report_row_t verify_op(named_op_t const& op, machine_model_t const& machine, tuning_t const& tuning,
                       sweep_config_t const& cfg, std::vector<kernel_artifact_t>* stages_out = nullptr,
                       pipeline_result_t* pipeline_out = nullptr);

}  // namespace kerngen

#endif

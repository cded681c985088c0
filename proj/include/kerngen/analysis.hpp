#ifndef KERNGEN_ANALYSIS_HPP
#define KERNGEN_ANALYSIS_HPP

#include <string>

#include "kerngen/netops.hpp"

namespace kerngen {

// device capability record. peaks come from a user-editable JSON file; they
// are inputs to the model, not measured facts.
struct machine_model_t {
  std::string name = "default";
  double peak_gflops = 6000.0;
  double peak_gbps = 336.0;
  int64_t local_mem_bytes = 49152;
  int64_t max_wg_threads = 256;
  int64_t min_wg_threads = 32;
  int64_t reg_budget_per_thread = 128;
  int64_t simd_width = 1;  // element count for vectorized load/store; 1 = scalar
  bool explicit_local_mem_profitable = true;
  int64_t compute_units = 16;  // used for the workgroup-saturation threshold

  void validate() const;
};

machine_model_t load_machine_model(std::string const& path);
std::string machine_model_json(machine_model_t const& m);

enum class bound_kind_t { compute, bandwidth };
inline char const* bound_kind_str(bound_kind_t b) { return b == bound_kind_t::compute ? "compute" : "bandwidth"; }

struct ai_report_t {
  int64_t flops = 0;
  int64_t bytes_min = 0;
  double ai = 0.0;       // flops / bytes_min
  double knee_ai = 0.0;  // device peak_gflops / peak_gbps
  bound_kind_t predicted_bound = bound_kind_t::bandwidth;  // compute iff ai >= knee_ai
};

// AI = 2*M*N*K / (4*(M*N + M*K + K*N)), 4 bytes per 32-bit float
double sgemm_ai(int64_t m, int64_t n, int64_t k);

double knee_ai(machine_model_t const& m);

enum class lowering_t { direct, im2col_gemm };
// direct: bytes = 4*(|in|+|filts|+|out|); im2col_gemm replaces |in| with |inmat|
ai_report_t conv_ai(conv_shapes_t const& shapes, lowering_t lowering, machine_model_t const& m);

// min(peak_gflops, ai * peak_gbps)
double roofline_point(int64_t flops, int64_t bytes, machine_model_t const& m);

}  // namespace kerngen

#endif

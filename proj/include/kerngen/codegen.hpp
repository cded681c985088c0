#ifndef KERNGEN_CODEGEN_HPP
#define KERNGEN_CODEGEN_HPP

#include "kerngen/ir.hpp"
#include "kerngen/planner.hpp"
#include "kerngen/template.hpp"

namespace kerngen {

// emitted kernel: portable OpenCL-flavored source text plus its executable
// schedule-IR twin, generated from the same plan in one pass
struct kernel_artifact_t {
  std::string name;          // kernel name, deterministic from plan + shapes
  std::string kind;          // variant name, or the transform kind
  std::string source_text;
  schedule_ir_t ir;
  std::vector<buffer_decl_t> buffers;
  launch_t launch;
};

// structural lint on emitted source: no residual placeholders, balanced braces
void lint_kernel_source(std::string const& text);

// c = a * bt-view per the SGEMM template; a is M:K, bt is N:K (pre-transposed), c is M:N
kernel_artifact_t gen_sgemm(variant_plan_t const& plan);

// variant-specific convolution kernel; the plan must be consistent with the
// spec (k1conv requires KSZ=1, transforms per plan.input_transform)
kernel_artifact_t gen_conv(variant_plan_t const& plan, conv_spec_t const& s);

// standalone input-layout transform kernel for the plan's transform kind
kernel_artifact_t gen_input_transform(variant_plan_t const& plan, conv_spec_t const& s);

// filter column-pad stage for vectorized k1conv (K padded to the vector width)
kernel_artifact_t gen_filts_pad(variant_plan_t const& plan, conv_spec_t const& s);

// all stages for one op in execution order: transform(s), then the compute kernel
std::vector<kernel_artifact_t> gen_conv_pipeline(variant_plan_t const& plan, conv_spec_t const& s);

// k extent of the compute kernel's a/bt operands (input channels rounded up
// to the vector width for vectorized k1 plans)
int64_t k1_padded_k(variant_plan_t const& plan, conv_spec_t const& s);
// c columns: OC rounded up to the vector width for vectorized plans
int64_t padded_oc(variant_plan_t const& plan, conv_spec_t const& s);

}  // namespace kerngen

#endif

#include "kerngen/template.hpp"

namespace kerngen {

std::string expand_template(template_t const& t, std::map<std::string, std::string> const& consts,
                            std::map<std::string, std::string> const& blocks) {
  std::string out;
  out.reserve(t.body.size() * 2);
  size_t pos = 0;
  while (pos < t.body.size()) {
    size_t const ph = t.body.find("%(", pos);
    if (ph == std::string::npos) {
      out.append(t.body, pos, std::string::npos);
      break;
    }
    out.append(t.body, pos, ph - pos);
    size_t const end = t.body.find(')', ph);
    if (end == std::string::npos) { rt_err("template " + t.name + ": unterminated placeholder"); }
    std::string const name = t.body.substr(ph + 2, end - ph - 2);
    auto ci = consts.find(name);
    auto bi = blocks.find(name);
    if (ci != consts.end()) {
      out += ci->second;
    } else if (bi != blocks.end()) {
      out += bi->second;
    } else {
      rt_err("template " + t.name + ": unbound %(" + name + ")");
    }
    pos = end + 1;
  }
  if (out.find("%(") != std::string::npos) {
    rt_err("template " + t.name + ": expansion left a residual placeholder");
  }
  return out;
}

namespace {

// Listing-1-shaped register-tiled GEMM with explicit local-memory blocking.
// also used by the conv and k1conv variants, which differ only in how the
// %(lm_loads) block computes global indices.
template_t const k_tmpl_gemm_local{
    "sgemm",
    R"(// %(kernel_comment)
#define BARRIER_SYNC barrier(CLK_LOCAL_MEM_FENCE)

kernel void %(kernel_name)( %(args) ) {
  // work dims Mg:Ng:Mb:Nb:Kb:Mt:Nt = %(Mg):%(Ng):%(Mb):%(Nb):%(Kb):%(Mt):%(Nt)
  local float a_lm[%(a_lm_sz)]; // (Mb*Mt) x Kb
  local float b_lm[%(b_lm_sz)]; // (Nb*Nt) x Kb
  // per-thread tile of output to compute, stored in registers
  float c_t[%(c_t_sz)] = { 0.0f };
  float a_r[%(Mt)];
  float b_r[%(Nt)];
%(id_decls)
  for( int k = 0; k < %(K_pad); k += %(Kb) ) {
    BARRIER_SYNC;
    // workgroup-wide load of local memory for this iteration
%(lm_loads)
    BARRIER_SYNC;
    for( int subk = 0; subk < %(Kb); ++subk ) {
%(loads)
%(fmas)
    }
  }
  // iterate over rows of the Mt * Nt registers in c_t
  for( int m = 0; m < %(Mt); ++m ) {
%(transpose_c_t_row)
%(store_c_t_row)
  }
}
)",
    {"id_decls", "lm_loads", "loads", "fmas", "transpose_c_t_row", "store_c_t_row"}};

// register-tiled GEMM reading global memory directly (cache blocking, no
// explicit local memory); the simd variants add vectorized accesses here
template_t const k_tmpl_gemm_direct{
    "gemm_direct",
    R"(// %(kernel_comment)

kernel void %(kernel_name)( %(args) ) {
  // work dims Mg:Ng:Mb:Nb:Kb:Mt:Nt = %(Mg):%(Ng):%(Mb):%(Nb):%(Kb):%(Mt):%(Nt)
  // per-thread tile of output to compute, stored in registers
  float c_t[%(c_t_sz)] = { 0.0f };
  float a_r[%(a_r_sz)];
  float b_r[%(b_r_sz)];
%(id_decls)
  for( int k = 0; k < %(K_pad); k += %(Kb) ) {
%(loads_fmas)
  }
  // iterate over rows of the Mt * Nt registers in c_t
  for( int m = 0; m < %(Mt); ++m ) {
%(transpose_c_t_row)
%(store_c_t_row)
  }
}
)",
    {"id_decls", "loads_fmas", "transpose_c_t_row", "store_c_t_row"}};

// tiled convolution: the workgroup loads whole input tiles into local memory
// once per channel chunk; the kernel-x taps are fully unrolled
template_t const k_tmpl_tconv{
    "tconv",
    R"(// %(kernel_comment)
#define BARRIER_SYNC barrier(CLK_LOCAL_MEM_FENCE)

kernel void %(kernel_name)( %(args) ) {
  // work dims Mg:Ng:Mb:Nb:Kb:Mt:Nt = %(Mg):%(Ng):%(Mb):%(Nb):%(Kb):%(Mt):%(Nt)
  // input tile %(tile_y) x %(tile_x) x Kb; thread grid split %(Mb_y) x %(Mb_x) over rows x column blocks
  local float in_tile[%(tile_sz)];
  float c_t[%(c_t_sz)] = { 0.0f };
  float in_seg[%(seg_sz)]; // one input row segment, reused across the unrolled kernel-x taps
  float f_r[%(f_r_sz)];
%(id_decls)
  for( int icb = 0; icb < %(IC_pad); icb += %(Kb) ) {
    BARRIER_SYNC;
    // workgroup-wide load of the input tile slab for this channel chunk
%(tile_loads)
    BARRIER_SYNC;
    for( int ick = 0; ick < %(Kb); ++ick ) {
      for( int ky = 0; ky < %(KSZ); ++ky ) {
%(seg_loads)
%(filt_loads)
        // kernel-x fully unrolled
%(fmas)
      }
    }
  }
  // iterate over rows of the Mt * Nt registers in c_t
  for( int m = 0; m < %(Mt); ++m ) {
%(transpose_c_t_row)
%(store_c_t_row)
  }
}
)",
    {"id_decls", "tile_loads", "seg_loads", "filt_loads", "fmas", "transpose_c_t_row", "store_c_t_row"}};

// elementwise gather used by the input-layout transforms
template_t const k_tmpl_xform{
    "xform",
    R"(// %(kernel_comment)

kernel void %(kernel_name)( %(args) ) {
  int const wg = get_group_id(0);
  int const tid = get_local_id(0);
  for( int i = 0; i < %(per_thread); ++i ) {
    int const e = (wg*%(tpw) + tid)*%(per_thread) + i;
    if( e < %(total) ) {
%(gather)
    }
  }
}
)",
    {"gather"}};

}  // namespace

template_t const& builtin_template(std::string const& name) {
  if (name == "sgemm") { return k_tmpl_gemm_local; }
  if (name == "gemm_direct") { return k_tmpl_gemm_direct; }
  if (name == "tconv") { return k_tmpl_tconv; }
  if (name == "xform") { return k_tmpl_xform; }
  rt_err("unknown template '" + name + "'");
}

std::vector<std::string> builtin_template_names() { return {"sgemm", "gemm_direct", "tconv", "xform"}; }

}  // namespace kerngen

#ifndef KERNGEN_IR_HPP
#define KERNGEN_IR_HPP

#include <string>
#include <vector>

#include "kerngen/nda.hpp"

namespace kerngen {

// index-expression variables: the workgroup/thread ids (wg_m = wg_id/Ng,
// wg_n = wg_id%Ng, tid_m = tid/Nb, tid_n = tid%Nb), loop variables, and
// derived variables (constant-divisor div/mod of an affine source). all index
// expressions are affine over these with known-constant strides, so every
// access resolves to a concrete offset given (wg_id, thread_id, loop state).
enum class var_kind_t : uint8_t { wg_m, wg_n, tid_m, tid_n, loop_var, derived };

struct affine_term_t {
  var_kind_t kind = var_kind_t::wg_m;
  int32_t id = 0;  // loop or derived-var index; unused for ids
  int64_t coeff = 0;
};

struct affine_expr_t {
  int64_t c = 0;
  std::vector<affine_term_t> terms;

  affine_expr_t& add(var_kind_t kind, int32_t id, int64_t coeff);
  affine_expr_t& add_const(int64_t v) { c += v; return *this; }
  static affine_expr_t constant(int64_t v) { affine_expr_t e; e.c = v; return e; }
};

enum class dv_op_t : uint8_t { div, mod };

// name = src / divisor or src % divisor; src may reference ids, loop vars,
// and earlier derived vars only
struct derived_var_t {
  std::string name;
  dv_op_t op = dv_op_t::div;
  affine_expr_t src;
  int64_t divisor = 1;
};

enum class opcode_t : uint8_t {
  global_load,   // dst..dst+vec_width-1 <- buf[idx..]; must sit under a bounds guard or be provably in range
  global_store,  // buf[idx..] <- src..src+vec_width-1
  local_load,    // dst <- lmem[idx]
  local_store,   // lmem[idx] <- src
  reg_move,      // dst <- src reg, or immediate when use_imm
  fma,           // dst += a * b
  fmax,          // dst = max(dst, a); used for fused relu against a zero reg
  barrier,
  loop,
  guard,
};

// conjunction term: lo <= expr < hi
struct guard_term_t {
  affine_expr_t expr;
  int64_t lo = 0;
  int64_t hi = 0;
};

struct instr_t {
  opcode_t op = opcode_t::barrier;
  int32_t dst = -1;
  int32_t a = -1;
  int32_t b = -1;
  int32_t buf = -1;
  int32_t vec_width = 1;
  float imm = 0.0f;
  bool use_imm = false;
  affine_expr_t idx;
  // loop fields; body covers `unroll` consecutive logical iterations, so
  // execution steps the variable by step*unroll per pass
  int32_t loop_id = -1;
  int64_t bound = 0;
  int64_t step = 1;
  int64_t unroll = 1;
  std::vector<guard_term_t> guards;
  std::vector<instr_t> body;
};

enum class buf_role_t : uint8_t { input, output };

struct buffer_decl_t {
  std::string name;
  dims_t dims;
  std::string layout;  // free-form layout note
  buf_role_t role = buf_role_t::input;
};

struct launch_t {
  int64_t wg_count = 0;
  int64_t threads_per_wg = 0;
};

struct schedule_ir_t {
  std::string kernel_name;
  int64_t mg = 1, ng = 1;  // workgroup grid; wg_count = mg*ng
  int64_t mb = 1, nb = 1;  // thread grid; threads_per_wg = mb*nb
  int32_t num_regs = 0;
  std::vector<std::string> reg_names;  // debug names, parallel to register indices
  int64_t local_mem_floats = 0;
  std::vector<std::string> loop_var_names;
  std::vector<derived_var_t> derived_vars;
  std::vector<instr_t> body;

  launch_t launch() const { return {mg * ng, mb * nb}; }
};

// static checks: barriers at workgroup scope only (never under a guard),
// registers definitely written before read, derived vars referencing earlier
// slots only, register/buffer ids in range. errors describe the violation.
void validate_ir(schedule_ir_t const& ir, std::vector<buffer_decl_t> const& buffers);

std::string ir_to_json(schedule_ir_t const& ir, std::vector<buffer_decl_t> const& buffers);
void ir_from_json(std::string const& text, schedule_ir_t& ir, std::vector<buffer_decl_t>& buffers);

}  // namespace kerngen

#endif

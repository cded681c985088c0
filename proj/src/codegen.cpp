#include "kerngen/codegen.hpp"

#include <cstdarg>
#include <functional>

namespace kerngen {

namespace {

affine_expr_t ex(int64_t const c = 0) { return affine_expr_t::constant(c); }

// generation context: IR builder plus the paired text blocks, filled together
struct cg_t {
  schedule_ir_t ir;
  std::vector<buffer_decl_t> buffers;
  std::map<std::string, std::string> blocks;

  std::vector<instr_t> root;
  struct frame_t {
    instr_t head;
    std::vector<instr_t> body;
  };
  std::vector<frame_t> frames;

  std::string* tb = nullptr;
  int ind = 0;

  int32_t add_buf(std::string const& name, dims_t dims, std::string const& layout, buf_role_t const role) {
    buffers.push_back({name, std::move(dims), layout, role});
    return (int32_t)buffers.size() - 1;
  }
  int32_t add_reg(std::string const& name) {
    ir.reg_names.push_back(name);
    return ir.num_regs++;
  }
  int32_t add_regs(std::string const& base, int64_t const n) {
    int32_t const r0 = ir.num_regs;
    for (int64_t i = 0; i != n; ++i) { add_reg(strprintf("%s[%lld]", base.c_str(), (long long)i)); }
    return r0;
  }
  int32_t add_loop_var(std::string const& name) {
    ir.loop_var_names.push_back(name);
    return (int32_t)ir.loop_var_names.size() - 1;
  }
  int32_t add_dvar(std::string const& name, dv_op_t const op, affine_expr_t src, int64_t const divisor) {
    ir.derived_vars.push_back({name, op, std::move(src), divisor});
    return (int32_t)ir.derived_vars.size() - 1;
  }

  void emit(instr_t ins) { (frames.empty() ? root : frames.back().body).push_back(std::move(ins)); }

  void begin_loop(int32_t const id, int64_t const bound, int64_t const step, int64_t const unroll) {
    instr_t h;
    h.op = opcode_t::loop;
    h.loop_id = id;
    h.bound = bound;
    h.step = step;
    h.unroll = unroll;
    frames.push_back({std::move(h), {}});
  }
  void begin_guard(std::vector<guard_term_t> gs) {
    instr_t h;
    h.op = opcode_t::guard;
    h.guards = std::move(gs);
    frames.push_back({std::move(h), {}});
  }
  void end() {
    frame_t f = std::move(frames.back());
    frames.pop_back();
    f.head.body = std::move(f.body);
    emit(std::move(f.head));
  }
  void barrier() {
    instr_t i;
    i.op = opcode_t::barrier;
    emit(std::move(i));
  }
  void g_load(int32_t const dst, int32_t const buf, affine_expr_t idx, int32_t const vw = 1) {
    instr_t i;
    i.op = opcode_t::global_load;
    i.dst = dst;
    i.buf = buf;
    i.idx = std::move(idx);
    i.vec_width = vw;
    emit(std::move(i));
  }
  void g_store(int32_t const buf, affine_expr_t idx, int32_t const src, int32_t const vw = 1) {
    instr_t i;
    i.op = opcode_t::global_store;
    i.buf = buf;
    i.idx = std::move(idx);
    i.a = src;
    i.vec_width = vw;
    emit(std::move(i));
  }
  void l_load(int32_t const dst, affine_expr_t idx) {
    instr_t i;
    i.op = opcode_t::local_load;
    i.dst = dst;
    i.idx = std::move(idx);
    emit(std::move(i));
  }
  void l_store(affine_expr_t idx, int32_t const src) {
    instr_t i;
    i.op = opcode_t::local_store;
    i.idx = std::move(idx);
    i.a = src;
    emit(std::move(i));
  }
  void rmov_imm(int32_t const dst, float const v) {
    instr_t i;
    i.op = opcode_t::reg_move;
    i.dst = dst;
    i.use_imm = true;
    i.imm = v;
    emit(std::move(i));
  }
  void rmov(int32_t const dst, int32_t const src) {
    instr_t i;
    i.op = opcode_t::reg_move;
    i.dst = dst;
    i.a = src;
    emit(std::move(i));
  }
  void fma(int32_t const dst, int32_t const a, int32_t const b) {
    instr_t i;
    i.op = opcode_t::fma;
    i.dst = dst;
    i.a = a;
    i.b = b;
    emit(std::move(i));
  }
  void fmax0(int32_t const dst, int32_t const zero) {
    instr_t i;
    i.op = opcode_t::fmax;
    i.dst = dst;
    i.a = zero;
    emit(std::move(i));
  }

  // zero-defaulted guarded load; unconditional when no guard terms apply
  void load_zero_default(int32_t const dst, int32_t const buf, affine_expr_t idx, int32_t const vw,
                         std::vector<guard_term_t> gs, int32_t const zero_r) {
    if (gs.empty()) {
      g_load(dst, buf, std::move(idx), vw);
      return;
    }
    for (int32_t l = 0; l != vw; ++l) { rmov(dst + l, zero_r); }
    begin_guard(std::move(gs));
    g_load(dst, buf, std::move(idx), vw);
    end();
  }

  void set_block(std::string const& name, int const indent) {
    tb = &blocks[name];
    ind = indent;
  }
  void text(char const* fmt, ...) {
    va_list ap;
    va_start(ap, fmt);
    va_list ap2;
    va_copy(ap2, ap);
    int const n = std::vsnprintf(nullptr, 0, fmt, ap);
    va_end(ap);
    std::string line(static_cast<size_t>(n), '\0');
    std::vsnprintf(line.data(), line.size() + 1, fmt, ap2);
    va_end(ap2);
    tb->append((size_t)ind, ' ');
    *tb += line;
    *tb += '\n';
  }
};

// workgroup/thread id declarations with degenerate divisions elided
void text_std_ids(cg_t& cg, blocking_t const& bl, bool const want_flat_tid) {
  if (bl.ng == 1) {
    cg.text("int const wg_m = get_group_id(0);");
    cg.text("int const wg_n = 0;");
  } else {
    cg.text("int const wg_m = get_group_id(0) / %lld;", (long long)bl.ng);
    cg.text("int const wg_n = get_group_id(0) %% %lld;", (long long)bl.ng);
  }
  if (bl.nb == 1) {
    cg.text("int const tid_m = get_local_id(0);");
    cg.text("int const tid_n = 0;");
  } else {
    cg.text("int const tid_m = get_local_id(0) / %lld;", (long long)bl.nb);
    cg.text("int const tid_n = get_local_id(0) %% %lld;", (long long)bl.nb);
  }
  if (want_flat_tid) { cg.text("int const tid = get_local_id(0);"); }
}

// shared geometry for the SGEMM-shaped kernels (sgemm, k1conv, conv and their
// simd forms). a is read as an M x K matrix (implicitly for conv), bt as N x K,
// c written as M x ldc.
struct gemm_geom_t {
  int64_t m = 0, n = 0;     // logical output extent
  int64_t k = 0;            // logical reduction extent
  int64_t k_iter = 0;       // k extent covered by the loop (padded for vectorized k1)
  int64_t k_alloc_a = 0;    // allocated k columns of a (row stride)
  int64_t k_alloc_b = 0;    // allocated k columns of bt (row stride)
  int64_t ldc = 0;          // c row stride (allocated columns)
  bool implicit_conv = false;
  conv_spec_t spec;         // for implicit a-indexing
  int32_t a_buf = -1, b_buf = -1, c_buf = -1, bias_buf = -1;
  bool fuse_bias = false, fuse_relu = false;
  int64_t vw_k = 1;      // k-direction load vector width
  int64_t vw_store = 1;  // n-direction store vector width
  std::string a_name, b_name, c_name, bias_name;
};

// per-tile-row implicit patch coordinates for the conv variant
struct conv_row_vars_t {
  int32_t b = -1, oy = -1, ox = -1;  // derived var ids; b unused when batch == 1
};

struct conv_dims_t {
  int64_t oy = 0, ox = 0;
};

conv_row_vars_t make_conv_row_dvars(cg_t& cg, conv_spec_t const& s, conv_dims_t const& od, std::string const& tag,
                                    affine_expr_t const& m_expr) {
  conv_row_vars_t rv;
  affine_expr_t rem = m_expr;
  if (s.batch > 1) {
    rv.b = cg.add_dvar("b_" + tag, dv_op_t::div, m_expr, od.oy * od.ox);
    int32_t const mr = cg.add_dvar("mr_" + tag, dv_op_t::mod, m_expr, od.oy * od.ox);
    rem = ex().add(var_kind_t::derived, mr, 1);
  }
  rv.oy = cg.add_dvar("oy_" + tag, dv_op_t::div, rem, od.ox);
  rv.ox = cg.add_dvar("ox_" + tag, dv_op_t::mod, rem, od.ox);
  return rv;
}

// in[] element index for patch row (b,oy,ox) at kernel offset (ky,kx,ic); the
// ky/kx/ic contribution arrives as pre-built expression pieces
affine_expr_t conv_in_index(conv_spec_t const& s, conv_row_vars_t const& rv, affine_expr_t const& ky,
                            affine_expr_t const& kx, affine_expr_t const& icc) {
  int64_t const row_st = s.in_x * s.in_c;
  affine_expr_t e;
  if (s.batch > 1) { e.add(var_kind_t::derived, rv.b, s.in_y * row_st); }
  e.add(var_kind_t::derived, rv.oy, s.stride * row_st);
  e.add(var_kind_t::derived, rv.ox, s.stride * s.in_c);
  e.add_const(-s.pad * row_st - s.pad * s.in_c);
  for (affine_term_t const& t : ky.terms) { e.add(t.kind, t.id, t.coeff * row_st); }
  e.add_const(ky.c * row_st);
  for (affine_term_t const& t : kx.terms) { e.add(t.kind, t.id, t.coeff * s.in_c); }
  e.add_const(kx.c * s.in_c);
  for (affine_term_t const& t : icc.terms) { e.add(t.kind, t.id, t.coeff); }
  e.add_const(icc.c);
  return e;
}

// guard terms for the in-bounds read of that element: 0 <= iy < in_y, 0 <= ix < in_x
void conv_in_guards(conv_spec_t const& s, conv_row_vars_t const& rv, affine_expr_t const& ky, affine_expr_t const& kx,
                    std::vector<guard_term_t>& gs) {
  affine_expr_t iy = ky;
  iy.add(var_kind_t::derived, rv.oy, s.stride).add_const(-s.pad);
  gs.push_back({iy, 0, s.in_y});
  affine_expr_t ix = kx;
  ix.add(var_kind_t::derived, rv.ox, s.stride).add_const(-s.pad);
  gs.push_back({ix, 0, s.in_x});
}

// decomposition of a flat patch-column index kt into (ky, kx, ic) expression
// pieces; emits derived vars unless the shape makes them degenerate
struct kdecomp_t {
  affine_expr_t ky, kx, icc;
};

kdecomp_t make_kdecomp(cg_t& cg, conv_spec_t const& s, std::string const& tag, affine_expr_t const& kt) {
  kdecomp_t d;
  if (s.ksz == 1) {
    d.ky = ex();
    d.kx = ex();
    d.icc = kt;
    return d;
  }
  int32_t const ky = cg.add_dvar("ky_" + tag, dv_op_t::div, kt, s.ksz * s.in_c);
  int32_t const kr = cg.add_dvar("kr_" + tag, dv_op_t::mod, kt, s.ksz * s.in_c);
  affine_expr_t const kr_e = ex().add(var_kind_t::derived, kr, 1);
  int32_t const kx = cg.add_dvar("kx_" + tag, dv_op_t::div, kr_e, s.in_c);
  int32_t const icc = cg.add_dvar("ic_" + tag, dv_op_t::mod, kr_e, s.in_c);
  d.ky = ex().add(var_kind_t::derived, ky, 1);
  d.kx = ex().add(var_kind_t::derived, kx, 1);
  d.icc = ex().add(var_kind_t::derived, icc, 1);
  return d;
}

// text for the (ky,kx,ic) decomposition of a flat column index `kt`
void text_kdecomp(cg_t& cg, conv_spec_t const& s) {
  cg.text("int const ky = kt / %lld; int const kr = kt %% %lld;", (long long)(s.ksz * s.in_c), (long long)(s.ksz * s.in_c));
  cg.text("int const kx = kr / %lld; int const icc = kr %% %lld;", (long long)s.in_c, (long long)s.in_c);
}

void text_mdecomp(cg_t& cg, conv_spec_t const& s, conv_dims_t const& od, char const* m, char const* sfx) {
  if (s.batch > 1) {
    cg.text("int const b%s = %s / %lld; int const mr%s = %s %% %lld;", sfx, m, (long long)(od.oy * od.ox), sfx, m,
            (long long)(od.oy * od.ox));
    cg.text("int const oy%s = mr%s / %lld; int const ox%s = mr%s %% %lld;", sfx, sfx, (long long)od.ox, sfx, sfx,
            (long long)od.ox);
  } else {
    cg.text("int const oy%s = %s / %lld; int const ox%s = %s %% %lld;", sfx, m, (long long)od.ox, sfx, m, (long long)od.ox);
  }
}

std::string text_conv_in_index(conv_spec_t const& s, char const* sfx) {
  std::string const b = s.batch > 1 ? strprintf("(b%s*%lld) + ", sfx, (long long)(s.in_y * s.in_x * s.in_c)) : std::string();
  return strprintf("%s(iy%s*%lld) + (ix%s*%lld) + icc", b.c_str(), sfx, (long long)(s.in_x * s.in_c), sfx, (long long)s.in_c);
}

void gen_gemm_like(cg_t& cg, variant_plan_t const& plan, gemm_geom_t const& g) {
  blocking_t const& bl = plan.blocking;
  int64_t const mt = bl.mt, nt = bl.nt, kb = bl.kb, mb = bl.mb, nb = bl.nb;
  int64_t const k_pad = ceil_div(g.k_iter, kb) * kb;
  bool const local = plan.use_local_mem;
  if (local && (g.vw_k > 1 || g.vw_store > 1)) { rt_err("gen_gemm_like: vectorized local-memory path is not emitted"); }
  if (g.vw_k > 1 && (kb % g.vw_k || g.k_alloc_a % g.vw_k || g.k_alloc_b % g.vw_k)) {
    rt_err("gen_gemm_like: vectorized k loads need Kb and the k extents to be vector-width multiples");
  }

  conv_dims_t od;
  if (g.implicit_conv) {
    conv_shapes_t const sh = infer_shapes(g.spec);
    od = {sh.out_y, sh.out_x};
  }

  // registers
  int32_t const c_t = cg.add_regs("c_t", mt * nt);
  int32_t const a_r = cg.add_regs("a_r", mt * g.vw_k);
  int32_t const b_r = cg.add_regs("b_r", nt * g.vw_k);
  int32_t const out_r = cg.add_regs("out_r", nt);
  int32_t const zero_r = cg.add_reg("zero");
  int32_t const ld_r = cg.add_reg("ld");
  int32_t const one_r = g.fuse_bias ? cg.add_reg("one") : -1;
  int32_t const bias_r = g.fuse_bias ? cg.add_regs("bias_r", nt) : -1;

  cg.rmov_imm(zero_r, 0.0f);
  for (int64_t i = 0; i != mt * nt; ++i) { cg.rmov(c_t + (int32_t)i, zero_r); }
  if (g.fuse_bias) { cg.rmov_imm(one_r, 1.0f); }

  bool const guard_m = bl.mg * mb * mt > g.m;
  bool const guard_n_b = bl.ng * nb * nt > g.n;  // bt row validity
  bool const guard_kt_a = k_pad > g.k_alloc_a;
  bool const guard_kt_b = k_pad > g.k_alloc_b;

  // thread's first output column; columns are consecutive so vectorized
  // stores stay contiguous
  auto n_expr = [&](int64_t const j) {
    return ex(j).add(var_kind_t::wg_n, 0, nb * nt).add(var_kind_t::tid_n, 0, nt);
  };
  auto m_expr = [&](int64_t const i) {
    return ex(i).add(var_kind_t::wg_m, 0, mb * mt).add(var_kind_t::tid_m, 0, mt);
  };

  // --- id_decls text ---
  cg.set_block("id_decls", 2);
  text_std_ids(cg, bl, local);
  if (mt == 1) {
    cg.text("int const m_0 = wg_m*%lld + tid_m;  // this thread's output row", (long long)mb);
  } else {
    cg.text("int const m_0 = (wg_m*%lld + tid_m)*%lld;  // first output row of this thread's tile", (long long)mb, (long long)mt);
  }
  if (nt == 1) {
    cg.text("int const n_0 = wg_n*%lld + tid_n;  // this thread's output column", (long long)nb);
  } else {
    cg.text("int const n_0 = (wg_n*%lld + tid_n)*%lld;  // first output column", (long long)nb, (long long)nt);
  }

  // per-tile-row implicit patch coordinates for the direct conv path
  std::vector<conv_row_vars_t> row_vars;
  if (g.implicit_conv && !local) {
    for (int64_t i = 0; i != mt; ++i) {
      row_vars.push_back(make_conv_row_dvars(cg, g.spec, od, strprintf("r%lld", (long long)i), m_expr(i)));
      text_mdecomp(cg, g.spec, od, strprintf("(m_0+%lld)", (long long)i).c_str(), strprintf("_%lld", (long long)i).c_str());
    }
  }
  if (g.fuse_bias) {
    cg.text("float bias_r[%lld];", (long long)nt);
    for (int64_t j = 0; j != nt; ++j) {
      std::vector<guard_term_t> gs;
      if (guard_n_b) {
        cg.text("bias_r[%lld] = ( n_0+%lld < %lld ) ? %s[n_0+%lld] : 0.0f;", (long long)j, (long long)j, (long long)g.n,
                g.bias_name.c_str(), (long long)j);
        gs.push_back({n_expr(j), 0, g.n});
      } else {
        cg.text("bias_r[%lld] = %s[n_0+%lld];", (long long)j, g.bias_name.c_str(), (long long)j);
      }
      cg.load_zero_default(bias_r + (int32_t)j, g.bias_buf, n_expr(j), 1, gs, zero_r);
    }
  }

  int32_t const k_lv = cg.add_loop_var("k");
  auto k_e = [&]() { return ex().add(var_kind_t::loop_var, k_lv, 1); };

  if (local) {
    // --- cooperative local-memory loads, round-robin threads over elements ---
    int64_t const ea = mb * mt * kb;
    int64_t const eb = nb * nt * kb;
    int64_t const tthreads = mb * nb;
    cg.ir.local_mem_floats = ea + eb;
    auto tid_flat = [&]() { return ex().add(var_kind_t::tid_m, 0, nb).add(var_kind_t::tid_n, 0, 1); };

    cg.begin_loop(k_lv, k_pad, kb, 1);
    cg.barrier();

    cg.set_block("lm_loads", 4);
    // a tile: (Mb*Mt) rows x Kb
    cg.text("for( int e = tid; e < %lld; e += %lld ) { // a tile", (long long)ea, (long long)tthreads);
    cg.ind += 2;
    cg.text("int const row = e / %lld; int const kk = e %% %lld;", (long long)kb, (long long)kb);
    cg.text("int const gm = wg_m*%lld + row;", (long long)(mb * mt));
    cg.text("int const kt = k + kk;");
    if (g.implicit_conv) {
      text_mdecomp(cg, g.spec, od, "gm", "");
      text_kdecomp(cg, g.spec);
      cg.text("int const iy = oy*%lld - %lld + ky; int const ix = ox*%lld - %lld + kx;", (long long)g.spec.stride,
              (long long)g.spec.pad, (long long)g.spec.stride, (long long)g.spec.pad);
      std::string cond;
      if (guard_m) { cond += strprintf("gm < %lld && ", (long long)g.m); }
      if (k_pad > g.k) { cond += strprintf("kt < %lld && ", (long long)g.k); }
      cond += strprintf("0 <= iy && iy < %lld && 0 <= ix && ix < %lld", (long long)g.spec.in_y, (long long)g.spec.in_x);
      cg.text("float v = 0.0f;");
      cg.text("if( %s ) { v = %s[%s]; }", cond.c_str(), g.a_name.c_str(), text_conv_in_index(g.spec, "").c_str());
    } else {
      std::string cond;
      if (guard_m) { cond += strprintf("gm < %lld", (long long)g.m); }
      if (guard_kt_a) { cond += strprintf("%skt < %lld", cond.empty() ? "" : " && ", (long long)g.k_alloc_a); }
      if (cond.empty()) {
        cg.text("float const v = %s[gm*%lld + kt];", g.a_name.c_str(), (long long)g.k_alloc_a);
      } else {
        cg.text("float v = 0.0f;");
        cg.text("if( %s ) { v = %s[gm*%lld + kt]; }", cond.c_str(), g.a_name.c_str(), (long long)g.k_alloc_a);
      }
    }
    cg.text("a_lm[e] = v;");
    cg.ind -= 2;
    cg.text("}");
    // bt tile: (Nb*Nt) rows x Kb
    cg.text("for( int e = tid; e < %lld; e += %lld ) { // bt tile", (long long)eb, (long long)tthreads);
    cg.ind += 2;
    cg.text("int const row = e / %lld; int const kk = e %% %lld;", (long long)kb, (long long)kb);
    cg.text("int const gn = wg_n*%lld + row;", (long long)(nb * nt));
    cg.text("int const kt = k + kk;");
    {
      std::string cond;
      if (guard_n_b) { cond += strprintf("gn < %lld", (long long)g.n); }
      if (guard_kt_b) { cond += strprintf("%skt < %lld", cond.empty() ? "" : " && ", (long long)g.k_alloc_b); }
      if (cond.empty()) {
        cg.text("float const v = %s[gn*%lld + kt];", g.b_name.c_str(), (long long)g.k_alloc_b);
      } else {
        cg.text("float v = 0.0f;");
        cg.text("if( %s ) { v = %s[gn*%lld + kt]; }", cond.c_str(), g.b_name.c_str(), (long long)g.k_alloc_b);
      }
    }
    cg.text("b_lm[e] = v;");
    cg.ind -= 2;
    cg.text("}");

    // IR: unrolled round-robin iterations, one set of derived vars each
    int64_t const its_a = ceil_div(ea, tthreads);
    for (int64_t it = 0; it != its_a; ++it) {
      affine_expr_t e_expr = tid_flat().add_const(it * tthreads);
      std::string const tag = strprintf("la%lld", (long long)it);
      int32_t const row = cg.add_dvar("row_" + tag, dv_op_t::div, e_expr, kb);
      int32_t const kk = cg.add_dvar("kk_" + tag, dv_op_t::mod, e_expr, kb);
      affine_expr_t const gm = ex().add(var_kind_t::wg_m, 0, mb * mt).add(var_kind_t::derived, row, 1);
      affine_expr_t const kt = k_e().add(var_kind_t::derived, kk, 1);
      bool const guard_e = (it + 1) * tthreads > ea;
      if (guard_e) { cg.begin_guard({{e_expr, 0, ea}}); }
      std::vector<guard_term_t> gs;
      if (guard_m) { gs.push_back({gm, 0, g.m}); }
      if (g.implicit_conv) {
        if (k_pad > g.k) { gs.push_back({kt, 0, g.k}); }
        conv_row_vars_t const rv = make_conv_row_dvars(cg, g.spec, od, tag, gm);
        kdecomp_t const kd = make_kdecomp(cg, g.spec, tag, kt);
        conv_in_guards(g.spec, rv, kd.ky, kd.kx, gs);
        cg.load_zero_default(ld_r, g.a_buf, conv_in_index(g.spec, rv, kd.ky, kd.kx, kd.icc), 1, gs, zero_r);
      } else {
        if (guard_kt_a) { gs.push_back({kt, 0, g.k_alloc_a}); }
        affine_expr_t idx = kt;
        for (affine_term_t const& t : gm.terms) { idx.add(t.kind, t.id, t.coeff * g.k_alloc_a); }
        idx.add_const(gm.c * g.k_alloc_a);
        cg.load_zero_default(ld_r, g.a_buf, idx, 1, gs, zero_r);
      }
      cg.l_store(e_expr, ld_r);
      if (guard_e) { cg.end(); }
    }
    int64_t const its_b = ceil_div(eb, tthreads);
    for (int64_t it = 0; it != its_b; ++it) {
      affine_expr_t e_expr = tid_flat().add_const(it * tthreads);
      std::string const tag = strprintf("lb%lld", (long long)it);
      int32_t const row = cg.add_dvar("row_" + tag, dv_op_t::div, e_expr, kb);
      int32_t const kk = cg.add_dvar("kk_" + tag, dv_op_t::mod, e_expr, kb);
      affine_expr_t const gn = ex().add(var_kind_t::wg_n, 0, nb * nt).add(var_kind_t::derived, row, 1);
      affine_expr_t const kt = k_e().add(var_kind_t::derived, kk, 1);
      bool const guard_e = (it + 1) * tthreads > eb;
      if (guard_e) { cg.begin_guard({{e_expr, 0, eb}}); }
      std::vector<guard_term_t> gs;
      if (guard_n_b) { gs.push_back({gn, 0, g.n}); }
      if (guard_kt_b) { gs.push_back({kt, 0, g.k_alloc_b}); }
      affine_expr_t idx = kt;
      for (affine_term_t const& t : gn.terms) { idx.add(t.kind, t.id, t.coeff * g.k_alloc_b); }
      idx.add_const(gn.c * g.k_alloc_b);
      cg.load_zero_default(ld_r, g.b_buf, idx, 1, gs, zero_r);
      affine_expr_t lidx = e_expr;
      lidx.add_const(ea);  // bt tile sits after the a tile
      cg.l_store(lidx, ld_r);
      if (guard_e) { cg.end(); }
    }

    cg.barrier();

    // --- per-thread register loads and FMAs for each subk ---
    int32_t const subk_lv = cg.add_loop_var("subk");
    cg.begin_loop(subk_lv, kb, 1, 1);
    cg.set_block("loads", 6);
    for (int64_t i = 0; i != mt; ++i) {
      cg.text("a_r[%lld] = a_lm[(tid_m*%lld + %lld)*%lld + subk];", (long long)i, (long long)mt, (long long)i, (long long)kb);
      affine_expr_t idx = ex(i * kb).add(var_kind_t::tid_m, 0, mt * kb).add(var_kind_t::loop_var, subk_lv, 1);
      cg.l_load(a_r + (int32_t)i, idx);
    }
    for (int64_t j = 0; j != nt; ++j) {
      cg.text("b_r[%lld] = b_lm[(tid_n*%lld + %lld)*%lld + subk];", (long long)j, (long long)nt, (long long)j, (long long)kb);
      affine_expr_t idx = ex(ea + j * kb).add(var_kind_t::tid_n, 0, nt * kb).add(var_kind_t::loop_var, subk_lv, 1);
      cg.l_load(b_r + (int32_t)j, idx);
    }
    cg.set_block("fmas", 6);
    for (int64_t i = 0; i != mt; ++i) {
      for (int64_t j = 0; j != nt; ++j) {
        cg.text("c_t[%lld] += a_r[%lld] * b_r[%lld];", (long long)(i * nt + j), (long long)i, (long long)j);
        cg.fma(c_t + (int32_t)(i * nt + j), a_r + (int32_t)i, b_r + (int32_t)j);
      }
    }
    cg.end();  // subk loop
    cg.end();  // k loop
  } else {
    // --- direct global loads (cache blocking); optionally vectorized ---
    int32_t const subk_lv = cg.add_loop_var("subk");
    int64_t const vk = g.vw_k;
    cg.begin_loop(k_lv, k_pad, kb, 1);
    cg.begin_loop(subk_lv, kb, vk, 1);
    auto kt_e = [&]() { return k_e().add(var_kind_t::loop_var, subk_lv, 1); };

    cg.set_block("loads_fmas", 4);
    if (vk == 1) {
      cg.text("for( int subk = 0; subk < %lld; ++subk ) {", (long long)kb);
    } else {
      cg.text("for( int subk = 0; subk < %lld; subk += %lld ) {", (long long)kb, (long long)vk);
    }
    cg.ind += 2;
    cg.text("int const kt = k + subk;");
    if (g.implicit_conv && g.spec.ksz > 1) { text_kdecomp(cg, g.spec); }

    kdecomp_t kd;
    if (g.implicit_conv) { kd = make_kdecomp(cg, g.spec, "s", kt_e()); }

    for (int64_t i = 0; i != mt; ++i) {
      std::vector<guard_term_t> gs;
      if (guard_m) { gs.push_back({m_expr(i), 0, g.m}); }
      if (g.implicit_conv) {
        if (k_pad > g.k) { gs.push_back({kt_e(), 0, g.k}); }
        conv_in_guards(g.spec, row_vars[(size_t)i], kd.ky, kd.kx, gs);
        std::string const m_guard = guard_m ? strprintf("m_0+%lld < %lld && ", (long long)i, (long long)g.m) : std::string();
        std::string const k_guard = k_pad > g.k ? strprintf("kt < %lld && ", (long long)g.k) : std::string();
        cg.text("%s av_%lld = 0.0f;", vk > 1 ? strprintf("float%lld", (long long)vk).c_str() : "float", (long long)i);
        cg.text("{ int const iy = oy_%lld*%lld - %lld + %s; int const ix = ox_%lld*%lld - %lld + %s;", (long long)i,
                (long long)g.spec.stride, (long long)g.spec.pad, g.spec.ksz > 1 ? "ky" : "0", (long long)i,
                (long long)g.spec.stride, (long long)g.spec.pad, g.spec.ksz > 1 ? "kx" : "0");
        std::string const icc_txt = g.spec.ksz > 1 ? "icc" : "kt";
        std::string const b_txt = g.spec.batch > 1 ? strprintf("(b_%lld*%lld) + ", (long long)i, (long long)(g.spec.in_y * g.spec.in_x * g.spec.in_c)) : std::string();
        std::string const idx_txt = strprintf("%s(iy*%lld) + (ix*%lld) + %s", b_txt.c_str(), (long long)(g.spec.in_x * g.spec.in_c),
                                              (long long)g.spec.in_c, icc_txt.c_str());
        if (vk > 1) {
          cg.text("  if( %s%s0 <= iy && iy < %lld && 0 <= ix && ix < %lld ) { av_%lld = vload%lld(0, &%s[%s]); } }",
                  m_guard.c_str(), k_guard.c_str(), (long long)g.spec.in_y, (long long)g.spec.in_x, (long long)i,
                  (long long)vk, g.a_name.c_str(), idx_txt.c_str());
        } else {
          cg.text("  if( %s%s0 <= iy && iy < %lld && 0 <= ix && ix < %lld ) { av_%lld = %s[%s]; } }", m_guard.c_str(),
                  k_guard.c_str(), (long long)g.spec.in_y, (long long)g.spec.in_x, (long long)i, g.a_name.c_str(),
                  idx_txt.c_str());
        }
        cg.load_zero_default(a_r + (int32_t)(i * vk), g.a_buf,
                             conv_in_index(g.spec, row_vars[(size_t)i], kd.ky, kd.kx, kd.icc), (int32_t)vk, gs, zero_r);
      } else {
        if (guard_kt_a) { gs.push_back({kt_e(), 0, g.k_alloc_a}); }
        affine_expr_t idx = kt_e();
        for (affine_term_t const& t : m_expr(i).terms) { idx.add(t.kind, t.id, t.coeff * g.k_alloc_a); }
        idx.add_const(m_expr(i).c * g.k_alloc_a);
        std::string cond;
        if (guard_m) { cond += strprintf("m_0+%lld < %lld", (long long)i, (long long)g.m); }
        if (guard_kt_a) { cond += strprintf("%skt < %lld", cond.empty() ? "" : " && ", (long long)g.k_alloc_a); }
        std::string const load = vk > 1 ? strprintf("vload%lld(0, &%s[(m_0+%lld)*%lld + kt])", (long long)vk, g.a_name.c_str(), (long long)i, (long long)g.k_alloc_a)
                                        : strprintf("%s[(m_0+%lld)*%lld + kt]", g.a_name.c_str(), (long long)i, (long long)g.k_alloc_a);
        if (cond.empty()) {
          cg.text("%s const av_%lld = %s;", vk > 1 ? strprintf("float%lld", (long long)vk).c_str() : "float", (long long)i, load.c_str());
        } else {
          cg.text("%s av_%lld = 0.0f; if( %s ) { av_%lld = %s; }", vk > 1 ? strprintf("float%lld", (long long)vk).c_str() : "float",
                  (long long)i, cond.c_str(), (long long)i, load.c_str());
        }
        cg.load_zero_default(a_r + (int32_t)(i * vk), g.a_buf, idx, (int32_t)vk, gs, zero_r);
      }
    }
    for (int64_t j = 0; j != nt; ++j) {
      std::vector<guard_term_t> gs;
      if (guard_n_b) { gs.push_back({n_expr(j), 0, g.n}); }
      if (guard_kt_b) { gs.push_back({kt_e(), 0, g.k_alloc_b}); }
      affine_expr_t idx = kt_e();
      for (affine_term_t const& t : n_expr(j).terms) { idx.add(t.kind, t.id, t.coeff * g.k_alloc_b); }
      idx.add_const(n_expr(j).c * g.k_alloc_b);
      std::string cond;
      if (guard_n_b) { cond += strprintf("n_0+%lld < %lld", (long long)j, (long long)g.n); }
      if (guard_kt_b) { cond += strprintf("%skt < %lld", cond.empty() ? "" : " && ", (long long)g.k_alloc_b); }
      std::string const load = vk > 1 ? strprintf("vload%lld(0, &%s[(n_0+%lld)*%lld + kt])", (long long)vk, g.b_name.c_str(), (long long)j, (long long)g.k_alloc_b)
                                      : strprintf("%s[(n_0+%lld)*%lld + kt]", g.b_name.c_str(), (long long)j, (long long)g.k_alloc_b);
      if (cond.empty()) {
        cg.text("%s const bv_%lld = %s;", vk > 1 ? strprintf("float%lld", (long long)vk).c_str() : "float", (long long)j, load.c_str());
      } else {
        cg.text("%s bv_%lld = 0.0f; if( %s ) { bv_%lld = %s; }", vk > 1 ? strprintf("float%lld", (long long)vk).c_str() : "float",
                (long long)j, cond.c_str(), (long long)j, load.c_str());
      }
      cg.load_zero_default(b_r + (int32_t)(j * vk), g.b_buf, idx, (int32_t)vk, gs, zero_r);
    }
    for (int64_t i = 0; i != mt; ++i) {
      for (int64_t j = 0; j != nt; ++j) {
        for (int64_t l = 0; l != vk; ++l) {
          if (vk > 1) {
            cg.text("c_t[%lld] += av_%lld.s%lld * bv_%lld.s%lld;", (long long)(i * nt + j), (long long)i, (long long)l,
                    (long long)j, (long long)l);
          } else {
            cg.text("c_t[%lld] += av_%lld * bv_%lld;", (long long)(i * nt + j), (long long)i, (long long)j);
          }
          cg.fma(c_t + (int32_t)(i * nt + j), a_r + (int32_t)(i * vk + l), b_r + (int32_t)(j * vk + l));
        }
      }
    }
    cg.ind -= 2;
    cg.text("}");
    cg.end();  // subk loop
    cg.end();  // k loop
  }

  // --- output staging and stores; bias-add and relu are fused here ---
  cg.set_block("transpose_c_t_row", 4);
  cg.text("float out_r[%lld];", (long long)nt);
  for (int64_t j = 0; j != nt; ++j) {
    cg.text("out_r[%lld] = c_t[m*%lld + %lld];", (long long)j, (long long)nt, (long long)j);
  }
  cg.set_block("store_c_t_row", 4);
  cg.text("{ int const gm = m_0 + m;");
  cg.ind += 2;
  if (g.fuse_bias) {
    for (int64_t j = 0; j != nt; ++j) { cg.text("out_r[%lld] += bias_r[%lld];", (long long)j, (long long)j); }
  }
  if (g.fuse_relu) {
    for (int64_t j = 0; j != nt; ++j) { cg.text("out_r[%lld] = max(0.0f, out_r[%lld]);", (long long)j, (long long)j); }
  }

  for (int64_t i = 0; i != mt; ++i) {
    for (int64_t j = 0; j != nt; ++j) {
      cg.rmov(out_r + (int32_t)j, c_t + (int32_t)(i * nt + j));
      if (g.fuse_bias) { cg.fma(out_r + (int32_t)j, bias_r + (int32_t)j, one_r); }
      if (g.fuse_relu) { cg.fmax0(out_r + (int32_t)j, zero_r); }
    }
    bool const guard_vec_n = bl.ng * nb * nt > g.ldc;
    if (g.vw_store > 1) {
      for (int64_t jv = 0; jv < nt; jv += g.vw_store) {
        std::vector<guard_term_t> gs;
        if (guard_m) { gs.push_back({m_expr(i), 0, g.m}); }
        // aligned chunk: start in range implies the whole chunk fits
        if (guard_vec_n) { gs.push_back({n_expr(jv), 0, g.ldc}); }
        affine_expr_t idx = n_expr(jv);
        for (affine_term_t const& t : m_expr(i).terms) { idx.add(t.kind, t.id, t.coeff * g.ldc); }
        idx.add_const(m_expr(i).c * g.ldc);
        if (!gs.empty()) { cg.begin_guard(gs); }
        cg.g_store(g.c_buf, idx, out_r + (int32_t)jv, (int32_t)g.vw_store);
        if (!gs.empty()) { cg.end(); }
      }
    } else {
      for (int64_t j = 0; j != nt; ++j) {
        std::vector<guard_term_t> gs;
        if (guard_m) { gs.push_back({m_expr(i), 0, g.m}); }
        if (guard_n_b) { gs.push_back({n_expr(j), 0, g.n}); }
        affine_expr_t idx = n_expr(j);
        for (affine_term_t const& t : m_expr(i).terms) { idx.add(t.kind, t.id, t.coeff * g.ldc); }
        idx.add_const(m_expr(i).c * g.ldc);
        if (!gs.empty()) { cg.begin_guard(gs); }
        cg.g_store(g.c_buf, idx, out_r + (int32_t)j);
        if (!gs.empty()) { cg.end(); }
      }
    }
  }
  // text stores
  bool const guard_vec_n = bl.ng * nb * nt > g.ldc;
  std::string const m_guard_txt = guard_m ? strprintf("if( gm < %lld ) ", (long long)g.m) : std::string();
  if (g.vw_store > 1) {
    for (int64_t jv = 0; jv < nt; jv += g.vw_store) {
      std::string lanes;
      for (int64_t l = 0; l != g.vw_store; ++l) { lanes += strprintf("%sout_r[%lld]", l ? "," : "", (long long)(jv + l)); }
      std::string const n_guard_txt = guard_vec_n ? strprintf("if( n_0+%lld < %lld ) ", (long long)jv, (long long)g.ldc)
                                                  : std::string();
      cg.text("%s%svstore%lld( (float%lld)(%s), 0, &%s[gm*%lld + n_0+%lld] );", m_guard_txt.c_str(), n_guard_txt.c_str(),
              (long long)g.vw_store, (long long)g.vw_store, lanes.c_str(), g.c_name.c_str(), (long long)g.ldc,
              (long long)jv);
    }
  } else {
    for (int64_t j = 0; j != nt; ++j) {
      std::string const n_guard_txt = guard_n_b ? strprintf("if( n_0+%lld < %lld ) ", (long long)j, (long long)g.n)
                                                : std::string();
      cg.text("%s%s%s[gm*%lld + n_0+%lld] = out_r[%lld];", m_guard_txt.c_str(), n_guard_txt.c_str(), g.c_name.c_str(),
              (long long)g.ldc, (long long)j, (long long)j);
    }
  }
  cg.ind -= 2;
  cg.text("}");
}

std::string args_text(std::vector<buffer_decl_t> const& buffers) {
  std::string args;
  for (size_t i = 0; i != buffers.size(); ++i) {
    if (i) { args += ", "; }
    bool const in = buffers[i].role == buf_role_t::input;
    args += strprintf("global float %s* const %s", in ? "const " : "", buffers[i].name.c_str());
  }
  return args;
}

kernel_artifact_t finish_artifact(cg_t& cg, variant_plan_t const& plan, std::string const& tmpl_name,
                                  std::string const& kernel_name, std::string const& kind,
                                  std::map<std::string, std::string> consts) {
  blocking_t const& bl = plan.blocking;
  cg.ir.kernel_name = kernel_name;
  cg.ir.mg = bl.mg;
  cg.ir.ng = bl.ng;
  cg.ir.mb = bl.mb;
  cg.ir.nb = bl.nb;
  cg.ir.body = std::move(cg.root);
  if (!cg.frames.empty()) { rt_err("internal: unbalanced codegen frames"); }

  consts["kernel_name"] = kernel_name;
  consts["args"] = args_text(cg.buffers);
  consts["Mg"] = std::to_string(bl.mg);
  consts["Ng"] = std::to_string(bl.ng);
  consts["Mb"] = std::to_string(bl.mb);
  consts["Nb"] = std::to_string(bl.nb);
  consts["Kb"] = std::to_string(bl.kb);
  consts["Mt"] = std::to_string(bl.mt);
  consts["Nt"] = std::to_string(bl.nt);

  kernel_artifact_t art;
  art.name = kernel_name;
  art.kind = kind;
  art.source_text = expand_template(builtin_template(tmpl_name), consts, cg.blocks);
  art.ir = std::move(cg.ir);
  art.buffers = std::move(cg.buffers);
  art.launch = art.ir.launch();
  validate_ir(art.ir, art.buffers);
  lint_kernel_source(art.source_text);
  return art;
}

std::string blocking_tag(blocking_t const& bl) {
  return strprintf("Mt%lld_Nt%lld_Kb%lld_Mb%lld_Nb%lld", (long long)bl.mt, (long long)bl.nt, (long long)bl.kb,
                   (long long)bl.mb, (long long)bl.nb);
}

}  // namespace

void lint_kernel_source(std::string const& text) {
  if (text.find("%(") != std::string::npos) { rt_err("kernel source lint: residual placeholder"); }
  int64_t depth = 0;
  for (char const ch : text) {
    if (ch == '{') { ++depth; }
    if (ch == '}') { --depth; }
    if (depth < 0) { rt_err("kernel source lint: unbalanced braces"); }
  }
  if (depth != 0) { rt_err("kernel source lint: unbalanced braces"); }
  if (text.find("kernel void ") == std::string::npos) { rt_err("kernel source lint: no kernel entry point"); }
}

int64_t k1_padded_k(variant_plan_t const& plan, conv_spec_t const& s) {
  return ceil_div(s.in_c, plan.vec_width) * plan.vec_width;
}

int64_t padded_oc(variant_plan_t const& plan, conv_spec_t const& s) {
  return plan.vec_width > 1 ? ceil_div(s.oc, plan.vec_width) * plan.vec_width : s.oc;
}

kernel_artifact_t gen_sgemm(variant_plan_t const& plan) {
  if (plan.variant != variant_t::sgemm) { rt_err("gen_sgemm: plan variant is not sgemm"); }
  gemm_view_t const& v = plan.gemm_view;
  cg_t cg;
  gemm_geom_t g;
  g.m = v.m;
  g.n = v.n;
  g.k = g.k_iter = g.k_alloc_a = g.k_alloc_b = v.k;
  g.ldc = v.n;
  g.a_name = "a";
  g.b_name = "bt";
  g.c_name = "c";
  g.a_buf = cg.add_buf("a", dims_t{{"M", v.m}, {"K", v.k}}, "row-major", buf_role_t::input);
  g.b_buf = cg.add_buf("bt", dims_t{{"N", v.n}, {"K", v.k}}, "row-major, pre-transposed operand", buf_role_t::input);
  g.c_buf = cg.add_buf("c", dims_t{{"M", v.m}, {"N", v.n}}, "row-major", buf_role_t::output);
  if (plan.vec_width > 1) {
    g.vw_k = (v.k % plan.vec_width == 0 && plan.blocking.kb % plan.vec_width == 0) ? plan.vec_width : 1;
    g.vw_store = v.n % plan.vec_width == 0 ? plan.vec_width : 1;
  }
  gen_gemm_like(cg, plan, g);
  std::string const name = strprintf("sgemm__M%lld_N%lld_K%lld__%s", (long long)v.m, (long long)v.n, (long long)v.k,
                                     blocking_tag(plan.blocking).c_str());
  std::map<std::string, std::string> consts;
  consts["kernel_comment"] = strprintf("kernel: %s (sgemm; c = a * bt-view)", name.c_str());
  consts["K_pad"] = std::to_string(ceil_div(g.k_iter, plan.blocking.kb) * plan.blocking.kb);
  consts["a_lm_sz"] = std::to_string(plan.blocking.mb * plan.blocking.mt * plan.blocking.kb);
  consts["b_lm_sz"] = std::to_string(plan.blocking.nb * plan.blocking.nt * plan.blocking.kb);
  consts["c_t_sz"] = std::to_string(plan.blocking.mt * plan.blocking.nt);
  consts["a_r_sz"] = std::to_string(plan.blocking.mt * g.vw_k);
  consts["b_r_sz"] = std::to_string(plan.blocking.nt * g.vw_k);
  return finish_artifact(cg, plan, plan.use_local_mem ? "sgemm" : "gemm_direct", name, "sgemm", std::move(consts));
}

namespace {

std::string conv_kernel_name(variant_plan_t const& plan, conv_spec_t const& s) {
  return strprintf("%s__Y%lldX%lldC%lld_OC%lld_K%lld_S%lld_P%lld_B%lld%s%s__%s", variant_str(plan.variant),
                   (long long)s.in_y, (long long)s.in_x, (long long)s.in_c, (long long)s.oc, (long long)s.ksz,
                   (long long)s.stride, (long long)s.pad, (long long)s.batch, s.fuse_relu ? "_relu" : "",
                   s.has_bias ? "_bias" : "", blocking_tag(plan.blocking).c_str());
}

dims_t out_dims_padded(conv_spec_t const& s, conv_shapes_t const& sh, int64_t const ocp) {
  if (s.batch > 1) { return dims_t{{"B", s.batch}, {"Y", sh.out_y}, {"X", sh.out_x}, {"C", ocp}}; }
  return dims_t{{"Y", sh.out_y}, {"X", sh.out_x}, {"C", ocp}};
}

kernel_artifact_t gen_conv_gemm_shaped(variant_plan_t const& plan, conv_spec_t const& s) {
  conv_shapes_t const sh = infer_shapes(s);
  gemm_view_t const view = plan.gemm_view;
  bool const k1 = plan.variant == variant_t::k1conv || plan.variant == variant_t::k1conv_simd;
  int64_t const ocp = padded_oc(plan, s);
  cg_t cg;
  gemm_geom_t g;
  g.m = view.m;
  g.n = s.oc;
  g.fuse_bias = s.has_bias;
  g.fuse_relu = s.fuse_relu;
  g.ldc = ocp;
  if (k1) {
    int64_t const kp = k1_padded_k(plan, s);
    g.k = g.k_iter = g.k_alloc_a = g.k_alloc_b = kp;
    g.a_name = "inmat_k1";
    g.a_buf = cg.add_buf("inmat_k1", dims_t{{"M", view.m}, {"K", kp}},
                         kp == s.in_c ? "patch rows, one per output point" : "patch rows; K zero-padded to the vector width",
                         buf_role_t::input);
    if (plan.vec_width > 1) {
      g.b_name = "filts_k1";
      g.b_buf = cg.add_buf("filts_k1", dims_t{{"OC", s.oc}, {"K", kp}}, "filters; K zero-padded to the vector width",
                           buf_role_t::input);
    } else {
      g.b_name = "filts";
      g.b_buf = cg.add_buf("filts", sh.filts_dims, "natural OC:KY:KX:IC layout; a pure reshape views it as OC x K",
                           buf_role_t::input);
    }
    g.vw_k = plan.vec_width;
    g.vw_store = plan.vec_width;
  } else {
    g.k = g.k_iter = view.k;
    g.k_alloc_a = view.k;  // logical patch columns; reads go to the raw input
    g.k_alloc_b = view.k;
    g.implicit_conv = true;
    g.spec = s;
    g.a_name = "in";
    g.a_buf = cg.add_buf("in", s.in_dims(), "raw input; patch rows are formed implicitly", buf_role_t::input);
    g.b_name = "filts";
    g.b_buf = cg.add_buf("filts", sh.filts_dims, "natural OC:KY:KX:IC layout; a pure reshape views it as OC x K",
                         buf_role_t::input);
    if (plan.vec_width > 1) {
      // vectorize along channels only when chunks cannot straddle a pixel or
      // a filter cell; otherwise loads stay scalar and stores keep the vector width
      bool const chan_ok = s.in_c % plan.vec_width == 0 && plan.blocking.kb % plan.vec_width == 0;
      g.vw_k = chan_ok ? plan.vec_width : 1;
      g.vw_store = plan.vec_width;
    }
  }
  if (g.fuse_bias) {
    g.bias_name = "bias";
    g.bias_buf = cg.add_buf("bias", dims_t{{"OC", s.oc}}, "per-output-channel bias", buf_role_t::input);
  }
  g.c_name = "out";
  std::string const out_layout = ocp == s.oc ? "row-major, channels innermost"
                                             : strprintf("channels padded to %lld; lanes [0,%lld) are valid",
                                                         (long long)ocp, (long long)s.oc);
  g.c_buf = cg.add_buf("out", out_dims_padded(s, sh, ocp), out_layout, buf_role_t::output);

  gen_gemm_like(cg, plan, g);
  std::string const name = conv_kernel_name(plan, s);
  std::map<std::string, std::string> consts;
  consts["kernel_comment"] = strprintf("kernel: %s (%s%s)", name.c_str(), variant_str(plan.variant),
                                       k1 ? "; structurally SGEMM over the gemm view" : "; implicit-SGEMM, patch matrix never materialized");
  consts["K_pad"] = std::to_string(ceil_div(g.k_iter, plan.blocking.kb) * plan.blocking.kb);
  consts["a_lm_sz"] = std::to_string(plan.blocking.mb * plan.blocking.mt * plan.blocking.kb);
  consts["b_lm_sz"] = std::to_string(plan.blocking.nb * plan.blocking.nt * plan.blocking.kb);
  consts["c_t_sz"] = std::to_string(plan.blocking.mt * plan.blocking.nt);
  consts["a_r_sz"] = std::to_string(plan.blocking.mt * g.vw_k);
  consts["b_r_sz"] = std::to_string(plan.blocking.nt * g.vw_k);
  return finish_artifact(cg, plan, plan.use_local_mem ? "sgemm" : "gemm_direct", name, variant_str(plan.variant),
                         std::move(consts));
}

kernel_artifact_t gen_tconv(variant_plan_t const& plan, conv_spec_t const& s) {
  conv_shapes_t const sh = infer_shapes(s);
  blocking_t const& bl = plan.blocking;
  int64_t const mt = bl.mt, nt = bl.nt, kb = bl.kb, mb = bl.mb, nb = bl.nb;
  int64_t const yp = s.in_y + 2 * s.pad;
  int64_t const xp = s.in_x + 2 * s.pad;
  int64_t const xb = ceil_div(sh.out_x, mt);
  int64_t const mbx = tconv_mb_x(mb, xb);
  int64_t const mby = mb / mbx;
  int64_t const nby = ceil_div(sh.out_y, mby);
  int64_t const nbx = ceil_div(xb, mbx);
  if (bl.mg != s.batch * nby * nbx) { rt_err("gen_tconv: plan Mg does not match the row-aligned tile grid"); }
  int64_t const ty = (mby - 1) * s.stride + s.ksz;           // input tile rows
  int64_t const tx = (mbx * mt - 1) * s.stride + s.ksz;      // input tile columns
  int64_t const seg = (mt - 1) * s.stride + s.ksz;           // per-thread row segment
  int64_t const ic_pad = ceil_div(s.in_c, kb) * kb;
  int64_t const tthreads = mb * nb;

  cg_t cg;
  int32_t const in_buf = cg.add_buf("in_tiled", s.batch > 1 ? dims_t{{"B", s.batch}, {"Y", yp}, {"X", xp}, {"C", s.in_c}}
                                                            : dims_t{{"Y", yp}, {"X", xp}, {"C", s.in_c}},
                                    "zero-padded input from the tile_layout transform", buf_role_t::input);
  int32_t const f_buf = cg.add_buf("filts", sh.filts_dims, "natural OC:KY:KX:IC layout", buf_role_t::input);
  int32_t bias_buf = -1;
  if (s.has_bias) { bias_buf = cg.add_buf("bias", dims_t{{"OC", s.oc}}, "per-output-channel bias", buf_role_t::input); }
  int32_t const c_buf = cg.add_buf("out", sh.out_dims, "row-major, channels innermost", buf_role_t::output);

  int32_t const c_t = cg.add_regs("c_t", mt * nt);
  int32_t const seg_r = cg.add_regs("in_seg", seg);
  int32_t const f_r = cg.add_regs("f_r", nt * s.ksz);
  int32_t const out_r = cg.add_regs("out_r", nt);
  int32_t const zero_r = cg.add_reg("zero");
  int32_t const ld_r = cg.add_reg("ld");
  int32_t const one_r = s.has_bias ? cg.add_reg("one") : -1;
  int32_t const bias_r = s.has_bias ? cg.add_regs("bias_r", nt) : -1;

  cg.rmov_imm(zero_r, 0.0f);
  for (int64_t i = 0; i != mt * nt; ++i) { cg.rmov(c_t + (int32_t)i, zero_r); }
  if (s.has_bias) { cg.rmov_imm(one_r, 1.0f); }

  // workgroup tile coordinates: wg_m enumerates (image, row block, column block)
  affine_expr_t const wgm_e = ex().add(var_kind_t::wg_m, 0, 1);
  int32_t b_dv = -1;
  affine_expr_t r1_e = wgm_e;
  if (s.batch > 1) {
    b_dv = cg.add_dvar("b_wg", dv_op_t::div, wgm_e, nby * nbx);
    int32_t const r1 = cg.add_dvar("r1_wg", dv_op_t::mod, wgm_e, nby * nbx);
    r1_e = ex().add(var_kind_t::derived, r1, 1);
  }
  int32_t const oyb = cg.add_dvar("oyb", dv_op_t::div, r1_e, nbx);
  int32_t const oxb = cg.add_dvar("oxb", dv_op_t::mod, r1_e, nbx);
  affine_expr_t const tidm_e = ex().add(var_kind_t::tid_m, 0, 1);
  int32_t const tmy = cg.add_dvar("tmy", dv_op_t::div, tidm_e, mbx);
  int32_t const tmx = cg.add_dvar("tmx", dv_op_t::mod, tidm_e, mbx);

  // thread's output row and first output column
  auto oy_e = [&]() { return ex().add(var_kind_t::derived, oyb, mby).add(var_kind_t::derived, tmy, 1); };
  auto ox_e = [&](int64_t const i) { return ex(i).add(var_kind_t::derived, oxb, mbx * mt).add(var_kind_t::derived, tmx, mt); };
  auto n_expr = [&](int64_t const j) { return ex(j).add(var_kind_t::wg_n, 0, nb * nt).add(var_kind_t::tid_n, 0, nt); };

  cg.set_block("id_decls", 2);
  text_std_ids(cg, bl, true);
  if (s.batch > 1) {
    cg.text("int const b_wg = wg_m / %lld; int const r1 = wg_m %% %lld;", (long long)(nby * nbx), (long long)(nby * nbx));
    cg.text("int const oyb = r1 / %lld; int const oxb = r1 %% %lld;", (long long)nbx, (long long)nbx);
  } else {
    cg.text("int const oyb = wg_m / %lld; int const oxb = wg_m %% %lld;", (long long)nbx, (long long)nbx);
  }
  cg.text("int const tmy = tid_m / %lld; int const tmx = tid_m %% %lld;", (long long)mbx, (long long)mbx);
  cg.text("int const oy = oyb*%lld + tmy;       // this thread's output row", (long long)mby);
  cg.text("int const ox_0 = (oxb*%lld + tmx)*%lld; // first output column", (long long)mbx, (long long)mt);
  cg.text("int const n_0 = (wg_n*%lld + tid_n)*%lld;", (long long)nb, (long long)nt);
  cg.text("int const ty0 = oyb*%lld; // input tile origin (padded coords)", (long long)(mby * s.stride));
  cg.text("int const tx0 = oxb*%lld;", (long long)(mbx * mt * s.stride));
  bool const guard_n = bl.ng * nb * nt > s.oc;
  if (s.has_bias) {
    cg.text("float bias_r[%lld];", (long long)nt);
    for (int64_t j = 0; j != nt; ++j) {
      std::vector<guard_term_t> gs;
      if (guard_n) {
        cg.text("bias_r[%lld] = ( n_0+%lld < %lld ) ? bias[n_0+%lld] : 0.0f;", (long long)j, (long long)j, (long long)s.oc,
                (long long)j);
        gs.push_back({n_expr(j), 0, s.oc});
      } else {
        cg.text("bias_r[%lld] = bias[n_0+%lld];", (long long)j, (long long)j);
      }
      cg.load_zero_default(bias_r + (int32_t)j, bias_buf, n_expr(j), 1, gs, zero_r);
    }
  }

  cg.ir.local_mem_floats = ty * tx * kb;
  int64_t const et = ty * tx * kb;
  int64_t const img_p = yp * xp * s.in_c;
  // guard elision: tiles that cannot overhang skip their bounds checks
  bool const guard_ty = (nby - 1) * mby * s.stride + ty > yp;
  bool const guard_tx = (nbx - 1) * mbx * mt * s.stride + tx > xp;
  bool const guard_tc = ceil_div(s.in_c, kb) * kb > s.in_c;

  int32_t const icb_lv = cg.add_loop_var("icb");
  cg.begin_loop(icb_lv, ic_pad, kb, 1);
  auto icb_e = [&]() { return ex().add(var_kind_t::loop_var, icb_lv, 1); };
  cg.barrier();

  // --- cooperative tile slab load: ty x tx rows/cols of the Kb channel chunk ---
  cg.set_block("tile_loads", 4);
  cg.text("for( int e = tid; e < %lld; e += %lld ) {", (long long)et, (long long)tthreads);
  cg.ind += 2;
  cg.text("int const tyy = e / %lld; int const r2 = e %% %lld;", (long long)(tx * kb), (long long)(tx * kb));
  cg.text("int const txx = r2 / %lld; int const cc = r2 %% %lld;", (long long)kb, (long long)kb);
  std::string const b_txt = s.batch > 1 ? strprintf("(b_wg*%lld) + ", (long long)img_p) : std::string();
  std::string const ld_txt = strprintf("in_tiled[%s((ty0+tyy)*%lld) + ((tx0+txx)*%lld) + icb + cc]", b_txt.c_str(),
                                       (long long)(xp * s.in_c), (long long)s.in_c);
  std::string tcond;
  if (guard_ty) { tcond += strprintf("ty0+tyy < %lld", (long long)yp); }
  if (guard_tx) { tcond += strprintf("%stx0+txx < %lld", tcond.empty() ? "" : " && ", (long long)xp); }
  if (guard_tc) { tcond += strprintf("%sicb+cc < %lld", tcond.empty() ? "" : " && ", (long long)s.in_c); }
  if (tcond.empty()) {
    cg.text("in_tile[e] = %s;", ld_txt.c_str());
  } else {
    cg.text("float v = 0.0f;");
    cg.text("if( %s ) { v = %s; }", tcond.c_str(), ld_txt.c_str());
    cg.text("in_tile[e] = v;");
  }
  cg.ind -= 2;
  cg.text("}");

  int64_t const its = ceil_div(et, tthreads);
  auto tid_flat = [&]() { return ex().add(var_kind_t::tid_m, 0, nb).add(var_kind_t::tid_n, 0, 1); };
  for (int64_t it = 0; it != its; ++it) {
    affine_expr_t const e_expr = tid_flat().add_const(it * tthreads);
    std::string const tag = strprintf("t%lld", (long long)it);
    int32_t const tyy = cg.add_dvar("ty_" + tag, dv_op_t::div, e_expr, tx * kb);
    int32_t const r2 = cg.add_dvar("r2_" + tag, dv_op_t::mod, e_expr, tx * kb);
    affine_expr_t const r2_e = ex().add(var_kind_t::derived, r2, 1);
    int32_t const txx = cg.add_dvar("tx_" + tag, dv_op_t::div, r2_e, kb);
    int32_t const cc = cg.add_dvar("cc_" + tag, dv_op_t::mod, r2_e, kb);
    bool const guard_e = (it + 1) * tthreads > et;
    if (guard_e) { cg.begin_guard({{e_expr, 0, et}}); }
    std::vector<guard_term_t> gs;
    affine_expr_t gy = ex().add(var_kind_t::derived, oyb, mby * s.stride).add(var_kind_t::derived, tyy, 1);
    if (guard_ty) { gs.push_back({gy, 0, yp}); }
    affine_expr_t gx = ex().add(var_kind_t::derived, oxb, mbx * mt * s.stride).add(var_kind_t::derived, txx, 1);
    if (guard_tx) { gs.push_back({gx, 0, xp}); }
    affine_expr_t gc = icb_e().add(var_kind_t::derived, cc, 1);
    if (guard_tc) { gs.push_back({gc, 0, s.in_c}); }
    affine_expr_t idx;
    if (s.batch > 1) { idx.add(var_kind_t::derived, b_dv, img_p); }
    for (affine_term_t const& t : gy.terms) { idx.add(t.kind, t.id, t.coeff * xp * s.in_c); }
    for (affine_term_t const& t : gx.terms) { idx.add(t.kind, t.id, t.coeff * s.in_c); }
    for (affine_term_t const& t : gc.terms) { idx.add(t.kind, t.id, t.coeff); }
    cg.load_zero_default(ld_r, in_buf, idx, 1, gs, zero_r);
    cg.l_store(e_expr, ld_r);
    if (guard_e) { cg.end(); }
  }

  cg.barrier();

  // --- compute: per channel-in-chunk, per kernel row; kernel-x fully unrolled ---
  int32_t const ick_lv = cg.add_loop_var("ick");
  int32_t const ky_lv = cg.add_loop_var("ky");
  int32_t const kx_lv = cg.add_loop_var("kx");
  cg.begin_loop(ick_lv, kb, 1, 1);
  cg.begin_loop(ky_lv, s.ksz, 1, 1);
  auto ick_e = [&]() { return ex().add(var_kind_t::loop_var, ick_lv, 1); };
  auto ky_e = [&]() { return ex().add(var_kind_t::loop_var, ky_lv, 1); };

  cg.set_block("seg_loads", 8);
  for (int64_t d = 0; d != seg; ++d) {
    cg.text("in_seg[%lld] = in_tile[((tmy*%lld + ky)*%lld + tmx*%lld + %lld)*%lld + ick];", (long long)d,
            (long long)s.stride, (long long)tx, (long long)(mt * s.stride), (long long)d, (long long)kb);
    // slab index: ((tmy*stride + ky)*tx + tmx*mt*stride + d)*kb + ick
    affine_expr_t idx = ick_e();
    idx.add(var_kind_t::derived, tmy, s.stride * tx * kb);
    for (affine_term_t const& t : ky_e().terms) { idx.add(t.kind, t.id, t.coeff * tx * kb); }
    idx.add(var_kind_t::derived, tmx, mt * s.stride * kb);
    idx.add_const(d * kb);
    cg.l_load(seg_r + (int32_t)d, idx);
  }

  cg.set_block("filt_loads", 8);
  bool const guard_ic = ic_pad > s.in_c;
  for (int64_t j = 0; j != nt; ++j) {
    for (int64_t kx = 0; kx != s.ksz; ++kx) {
      std::string cond;
      if (guard_n) { cond += strprintf("n_0+%lld < %lld", (long long)j, (long long)s.oc); }
      if (guard_ic) { cond += strprintf("%sicb+ick < %lld", cond.empty() ? "" : " && ", (long long)s.in_c); }
      std::string const load = strprintf("filts[(((n_0+%lld)*%lld + ky)*%lld + %lld)*%lld + icb + ick]", (long long)j,
                                         (long long)s.ksz, (long long)s.ksz, (long long)kx, (long long)s.in_c);
      if (cond.empty()) {
        cg.text("f_r[%lld] = %s;", (long long)(j * s.ksz + kx), load.c_str());
      } else {
        cg.text("f_r[%lld] = ( %s ) ? %s : 0.0f;", (long long)(j * s.ksz + kx), cond.c_str(), load.c_str());
      }
      // filts flat: ((n*ksz + ky)*ksz + kx)*ic + icb + ick
      affine_expr_t idx = icb_e();
      idx.add(var_kind_t::loop_var, ick_lv, 1);
      for (affine_term_t const& t : n_expr(j).terms) { idx.add(t.kind, t.id, t.coeff * s.ksz * s.ksz * s.in_c); }
      idx.add_const(n_expr(j).c * s.ksz * s.ksz * s.in_c);
      for (affine_term_t const& t : ky_e().terms) { idx.add(t.kind, t.id, t.coeff * s.ksz * s.in_c); }
      idx.add_const(kx * s.in_c);
      std::vector<guard_term_t> gs;
      if (guard_n) { gs.push_back({n_expr(j), 0, s.oc}); }
      if (guard_ic) { gs.push_back({icb_e().add(var_kind_t::loop_var, ick_lv, 1), 0, s.in_c}); }
      cg.load_zero_default(f_r + (int32_t)(j * s.ksz + kx), f_buf, idx, 1, gs, zero_r);
    }
  }

  cg.set_block("fmas", 8);
  cg.begin_loop(kx_lv, s.ksz, 1, s.ksz);  // fully unrolled over kernel x
  for (int64_t kx = 0; kx != s.ksz; ++kx) {
    for (int64_t i = 0; i != mt; ++i) {
      for (int64_t j = 0; j != nt; ++j) {
        cg.text("c_t[%lld] += in_seg[%lld] * f_r[%lld];", (long long)(i * nt + j), (long long)(i * s.stride + kx),
                (long long)(j * s.ksz + kx));
        cg.fma(c_t + (int32_t)(i * nt + j), seg_r + (int32_t)(i * s.stride + kx), f_r + (int32_t)(j * s.ksz + kx));
      }
    }
  }
  cg.end();  // kx
  cg.end();  // ky
  cg.end();  // ick
  cg.end();  // icb

  // --- stores; same fused bias-add/relu staging as the gemm-shaped variants ---
  cg.set_block("transpose_c_t_row", 4);
  cg.text("float out_r[%lld];", (long long)nt);
  for (int64_t j = 0; j != nt; ++j) { cg.text("out_r[%lld] = c_t[m*%lld + %lld];", (long long)j, (long long)nt, (long long)j); }
  cg.set_block("store_c_t_row", 4);
  if (s.has_bias) {
    for (int64_t j = 0; j != nt; ++j) { cg.text("out_r[%lld] += bias_r[%lld];", (long long)j, (long long)j); }
  }
  if (s.fuse_relu) {
    for (int64_t j = 0; j != nt; ++j) { cg.text("out_r[%lld] = max(0.0f, out_r[%lld]);", (long long)j, (long long)j); }
  }
  int64_t const out_img = sh.out_y * sh.out_x * s.oc;
  bool const guard_oy = nby * mby > sh.out_y;
  bool const guard_ox = nbx * mbx * mt > sh.out_x;
  for (int64_t i = 0; i != mt; ++i) {
    for (int64_t j = 0; j != nt; ++j) {
      cg.rmov(out_r + (int32_t)j, c_t + (int32_t)(i * nt + j));
      if (s.has_bias) { cg.fma(out_r + (int32_t)j, bias_r + (int32_t)j, one_r); }
      if (s.fuse_relu) { cg.fmax0(out_r + (int32_t)j, zero_r); }
    }
    for (int64_t j = 0; j != nt; ++j) {
      std::vector<guard_term_t> gs;
      if (guard_oy) { gs.push_back({oy_e(), 0, sh.out_y}); }
      if (guard_ox) { gs.push_back({ox_e(i), 0, sh.out_x}); }
      if (guard_n) { gs.push_back({n_expr(j), 0, s.oc}); }
      affine_expr_t idx = n_expr(j);
      if (s.batch > 1) { idx.add(var_kind_t::derived, b_dv, out_img); }
      for (affine_term_t const& t : oy_e().terms) { idx.add(t.kind, t.id, t.coeff * sh.out_x * s.oc); }
      for (affine_term_t const& t : ox_e(i).terms) { idx.add(t.kind, t.id, t.coeff * s.oc); }
      idx.add_const(ox_e(i).c * s.oc);
      if (!gs.empty()) { cg.begin_guard(gs); }
      cg.g_store(c_buf, idx, out_r + (int32_t)j);
      if (!gs.empty()) { cg.end(); }
    }
  }
  std::string const ob_txt = s.batch > 1 ? strprintf("(b_wg*%lld) + ", (long long)out_img) : std::string();
  std::string yx_cond;
  if (guard_oy) { yx_cond += strprintf("oy < %lld", (long long)sh.out_y); }
  if (guard_ox) { yx_cond += strprintf("%sox_0+m < %lld", yx_cond.empty() ? "" : " && ", (long long)sh.out_x); }
  if (!yx_cond.empty()) { cg.text("if( %s ) {", yx_cond.c_str()); }
  for (int64_t j = 0; j != nt; ++j) {
    if (guard_n) {
      cg.text("%sif( n_0+%lld < %lld ) out[%s(oy*%lld) + ((ox_0+m)*%lld) + n_0+%lld] = out_r[%lld];",
              yx_cond.empty() ? "" : "  ", (long long)j, (long long)s.oc, ob_txt.c_str(), (long long)(sh.out_x * s.oc),
              (long long)s.oc, (long long)j, (long long)j);
    } else {
      cg.text("%sout[%s(oy*%lld) + ((ox_0+m)*%lld) + n_0+%lld] = out_r[%lld];", yx_cond.empty() ? "" : "  ",
              ob_txt.c_str(), (long long)(sh.out_x * s.oc), (long long)s.oc, (long long)j, (long long)j);
    }
  }
  if (!yx_cond.empty()) { cg.text("}"); }

  std::string const name = conv_kernel_name(plan, s);
  std::map<std::string, std::string> consts;
  consts["kernel_comment"] = strprintf("kernel: %s (tconv; workgroup input tiles, kernel-x unrolled)", name.c_str());
  consts["tile_y"] = std::to_string(ty);
  consts["tile_x"] = std::to_string(tx);
  consts["Mb_y"] = std::to_string(mby);
  consts["Mb_x"] = std::to_string(mbx);
  consts["tile_sz"] = std::to_string(et);
  consts["c_t_sz"] = std::to_string(mt * nt);
  consts["seg_sz"] = std::to_string(seg);
  consts["f_r_sz"] = std::to_string(nt * s.ksz);
  consts["IC_pad"] = std::to_string(ic_pad);
  consts["KSZ"] = std::to_string(s.ksz);
  return finish_artifact(cg, plan, "tconv", name, "tconv", std::move(consts));
}

// elementwise gather kernel shared by the layout transforms
struct xform_build_t {
  std::string kind;
  int64_t total = 0;
  std::function<void(cg_t&, affine_expr_t const&, int32_t /*ld*/, int32_t /*zero*/, int32_t /*src*/, int32_t /*dst*/)> emit_ir;
  std::function<void(cg_t&)> emit_text;
};

kernel_artifact_t gen_xform(variant_plan_t const& plan, std::string const& name, buffer_decl_t src, buffer_decl_t dst,
                            xform_build_t const& xb) {
  cg_t cg;
  int32_t const src_buf = cg.add_buf(src.name, src.dims, src.layout, buf_role_t::input);
  int32_t const dst_buf = cg.add_buf(dst.name, dst.dims, dst.layout, buf_role_t::output);
  int64_t const tpw = plan.blocking.mb * plan.blocking.nb;
  int64_t const wgs = ceil_div(xb.total, tpw);
  int32_t const ld = cg.add_reg("v");
  int32_t const zero = cg.add_reg("zero");
  cg.rmov_imm(zero, 0.0f);

  // transform launch: 1-d grid, one element per thread pass
  schedule_ir_t& ir = cg.ir;
  ir.kernel_name = name;
  ir.mg = wgs;
  ir.ng = 1;
  ir.mb = tpw;
  ir.nb = 1;

  affine_expr_t const e_expr = ex().add(var_kind_t::wg_m, 0, tpw).add(var_kind_t::tid_m, 0, 1);
  bool const guard_e = wgs * tpw > xb.total;
  if (guard_e) { cg.begin_guard({{e_expr, 0, xb.total}}); }
  xb.emit_ir(cg, e_expr, ld, zero, src_buf, dst_buf);
  if (guard_e) { cg.end(); }

  cg.set_block("gather", 6);
  xb.emit_text(cg);

  ir.body = std::move(cg.root);
  std::map<std::string, std::string> consts;
  consts["kernel_comment"] = strprintf("kernel: %s (%s input transform)", name.c_str(), xb.kind.c_str());
  consts["kernel_name"] = name;
  consts["args"] = args_text(cg.buffers);
  consts["per_thread"] = "1";
  consts["tpw"] = std::to_string(tpw);
  consts["total"] = std::to_string(xb.total);

  kernel_artifact_t art;
  art.name = name;
  art.kind = xb.kind;
  art.source_text = expand_template(builtin_template("xform"), consts, cg.blocks);
  art.ir = std::move(cg.ir);
  art.buffers = std::move(cg.buffers);
  art.launch = art.ir.launch();
  validate_ir(art.ir, art.buffers);
  lint_kernel_source(art.source_text);
  return art;
}

}  // namespace

kernel_artifact_t gen_input_transform(variant_plan_t const& plan, conv_spec_t const& s) {
  if (plan.input_transform == input_transform_t::none) { rt_err("gen_input_transform: plan has no input transform"); }
  conv_shapes_t const sh = infer_shapes(s);
  if (plan.input_transform == input_transform_t::k1_layout) {
    // gather the (strided, padded) pixel for each output point into a patch
    // row; channels sit innermost, zero-padded to the vector width
    int64_t const kp = k1_padded_k(plan, s);
    int64_t const m = plan.gemm_view.m;
    int64_t const total = m * kp;
    conv_dims_t const od{sh.out_y, sh.out_x};
    xform_build_t xb;
    xb.kind = "xform_k1";
    xb.total = total;
    xb.emit_ir = [&, kp](cg_t& cg, affine_expr_t const& e, int32_t ld, int32_t zero, int32_t src, int32_t dst) {
      int32_t const mm = cg.add_dvar("mm", dv_op_t::div, e, kp);
      int32_t const kk = cg.add_dvar("kk", dv_op_t::mod, e, kp);
      conv_row_vars_t const rv = make_conv_row_dvars(cg, s, od, "x", ex().add(var_kind_t::derived, mm, 1));
      cg.rmov(ld, zero);
      std::vector<guard_term_t> gs;
      affine_expr_t const kk_e = ex().add(var_kind_t::derived, kk, 1);
      if (kp > s.in_c) { gs.push_back({kk_e, 0, s.in_c}); }
      conv_in_guards(s, rv, ex(), ex(), gs);
      cg.begin_guard(gs);
      cg.g_load(ld, src, conv_in_index(s, rv, ex(), ex(), kk_e));
      cg.end();
      cg.g_store(dst, e, ld);
    };
    xb.emit_text = [&, kp](cg_t& cg) {
      cg.text("int const mm = e / %lld; int const kk = e %% %lld;", (long long)kp, (long long)kp);
      text_mdecomp(cg, s, od, "mm", "");
      cg.text("int const iy = oy*%lld - %lld; int const ix = ox*%lld - %lld;", (long long)s.stride, (long long)s.pad,
              (long long)s.stride, (long long)s.pad);
      cg.text("float v = 0.0f;");
      std::string const kguard = kp > s.in_c ? strprintf("kk < %lld && ", (long long)s.in_c) : std::string();
      std::string const b_txt = s.batch > 1 ? strprintf("(b*%lld) + ", (long long)(s.in_y * s.in_x * s.in_c)) : std::string();
      cg.text("if( %s0 <= iy && iy < %lld && 0 <= ix && ix < %lld ) { v = in[%s(iy*%lld) + (ix*%lld) + kk]; }",
              kguard.c_str(), (long long)s.in_y, (long long)s.in_x, b_txt.c_str(), (long long)(s.in_x * s.in_c),
              (long long)s.in_c);
      cg.text("inmat_k1[e] = v;");
    };
    std::string const name = strprintf("xform_k1__M%lld_K%lld", (long long)m, (long long)kp);
    return gen_xform(plan, name, {"in", s.in_dims(), "raw input", buf_role_t::input},
                     {"inmat_k1", dims_t{{"M", m}, {"K", kp}},
                      kp == s.in_c ? "patch rows, one per output point" : "patch rows; K zero-padded to the vector width",
                      buf_role_t::output},
                     xb);
  }
  // tile_layout: explicit zero padding so the tiled kernel needs no pad guards
  int64_t const yp = s.in_y + 2 * s.pad;
  int64_t const xp = s.in_x + 2 * s.pad;
  int64_t const total = s.batch * yp * xp * s.in_c;
  xform_build_t xb;
  xb.kind = "xform_tile";
  xb.total = total;
  xb.emit_ir = [&, yp, xp](cg_t& cg, affine_expr_t const& e, int32_t ld, int32_t zero, int32_t src, int32_t dst) {
    affine_expr_t rem = e;
    int32_t b_dv = -1;
    if (s.batch > 1) {
      b_dv = cg.add_dvar("b", dv_op_t::div, e, yp * xp * s.in_c);
      int32_t const r = cg.add_dvar("r", dv_op_t::mod, e, yp * xp * s.in_c);
      rem = ex().add(var_kind_t::derived, r, 1);
    }
    int32_t const yy = cg.add_dvar("yy", dv_op_t::div, rem, xp * s.in_c);
    int32_t const r2 = cg.add_dvar("r2", dv_op_t::mod, rem, xp * s.in_c);
    affine_expr_t const r2_e = ex().add(var_kind_t::derived, r2, 1);
    int32_t const xx = cg.add_dvar("xx", dv_op_t::div, r2_e, s.in_c);
    int32_t const ccv = cg.add_dvar("cc", dv_op_t::mod, r2_e, s.in_c);
    cg.rmov(ld, zero);
    std::vector<guard_term_t> gs;
    affine_expr_t const iy = ex(-s.pad).add(var_kind_t::derived, yy, 1);
    affine_expr_t const ix = ex(-s.pad).add(var_kind_t::derived, xx, 1);
    gs.push_back({iy, 0, s.in_y});
    gs.push_back({ix, 0, s.in_x});
    affine_expr_t idx;
    if (s.batch > 1) { idx.add(var_kind_t::derived, b_dv, s.in_y * s.in_x * s.in_c); }
    for (affine_term_t const& t : iy.terms) { idx.add(t.kind, t.id, t.coeff * s.in_x * s.in_c); }
    idx.add_const(iy.c * s.in_x * s.in_c);
    for (affine_term_t const& t : ix.terms) { idx.add(t.kind, t.id, t.coeff * s.in_c); }
    idx.add_const(ix.c * s.in_c);
    idx.add(var_kind_t::derived, ccv, 1);
    cg.begin_guard(gs);
    cg.g_load(ld, src, idx);
    cg.end();
    cg.g_store(dst, e, ld);
  };
  xb.emit_text = [&, yp, xp](cg_t& cg) {
    if (s.batch > 1) {
      cg.text("int const b = e / %lld; int const r = e %% %lld;", (long long)(yp * xp * s.in_c), (long long)(yp * xp * s.in_c));
      cg.text("int const yy = r / %lld; int const r2 = r %% %lld;", (long long)(xp * s.in_c), (long long)(xp * s.in_c));
    } else {
      cg.text("int const yy = e / %lld; int const r2 = e %% %lld;", (long long)(xp * s.in_c), (long long)(xp * s.in_c));
    }
    cg.text("int const xx = r2 / %lld; int const cc = r2 %% %lld;", (long long)s.in_c, (long long)s.in_c);
    cg.text("int const iy = yy - %lld; int const ix = xx - %lld;", (long long)s.pad, (long long)s.pad);
    cg.text("float v = 0.0f;");
    std::string const b_txt = s.batch > 1 ? strprintf("(b*%lld) + ", (long long)(s.in_y * s.in_x * s.in_c)) : std::string();
    cg.text("if( 0 <= iy && iy < %lld && 0 <= ix && ix < %lld ) { v = in[%s(iy*%lld) + (ix*%lld) + cc]; }",
            (long long)s.in_y, (long long)s.in_x, b_txt.c_str(), (long long)(s.in_x * s.in_c), (long long)s.in_c);
    cg.text("in_tiled[e] = v;");
  };
  std::string const name = strprintf("xform_tile__Y%lldX%lldC%lld_P%lld_B%lld", (long long)s.in_y, (long long)s.in_x,
                                     (long long)s.in_c, (long long)s.pad, (long long)s.batch);
  dims_t const out_dims = s.batch > 1 ? dims_t{{"B", s.batch}, {"Y", yp}, {"X", xp}, {"C", s.in_c}}
                                      : dims_t{{"Y", yp}, {"X", xp}, {"C", s.in_c}};
  return gen_xform(plan, name, {"in", s.in_dims(), "raw input", buf_role_t::input},
                   {"in_tiled", out_dims, "zero-padded input", buf_role_t::output}, xb);
}

kernel_artifact_t gen_filts_pad(variant_plan_t const& plan, conv_spec_t const& s) {
  if (plan.vec_width <= 1) { rt_err("gen_filts_pad: only vectorized plans pad the filter columns"); }
  int64_t const kp = k1_padded_k(plan, s);
  int64_t const total = s.oc * kp;
  xform_build_t xb;
  xb.kind = "xform_filts_pad";
  xb.total = total;
  xb.emit_ir = [&, kp](cg_t& cg, affine_expr_t const& e, int32_t ld, int32_t zero, int32_t src, int32_t dst) {
    int32_t const n = cg.add_dvar("n", dv_op_t::div, e, kp);
    int32_t const kk = cg.add_dvar("kk", dv_op_t::mod, e, kp);
    cg.rmov(ld, zero);
    affine_expr_t const kk_e = ex().add(var_kind_t::derived, kk, 1);
    cg.begin_guard({{kk_e, 0, s.in_c}});
    affine_expr_t idx = kk_e;
    idx.add(var_kind_t::derived, n, s.in_c);
    cg.g_load(ld, src, idx);
    cg.end();
    cg.g_store(dst, e, ld);
  };
  xb.emit_text = [&, kp](cg_t& cg) {
    cg.text("int const n = e / %lld; int const kk = e %% %lld;", (long long)kp, (long long)kp);
    cg.text("float v = 0.0f;");
    cg.text("if( kk < %lld ) { v = filts[n*%lld + kk]; }", (long long)s.in_c, (long long)s.in_c);
    cg.text("filts_k1[e] = v;");
  };
  std::string const name = strprintf("xform_filts_pad__OC%lld_K%lld", (long long)s.oc, (long long)kp);
  return gen_xform(plan, name, {"filts", infer_shapes(s).filts_dims, "natural layout", buf_role_t::input},
                   {"filts_k1", dims_t{{"OC", s.oc}, {"K", kp}}, "filters; K zero-padded to the vector width",
                    buf_role_t::output},
                   xb);
}

kernel_artifact_t gen_conv(variant_plan_t const& plan, conv_spec_t const& s) {
  switch (plan.variant) {
    case variant_t::sgemm: rt_err("gen_conv: sgemm plans go through gen_sgemm");
    case variant_t::k1conv:
    case variant_t::k1conv_simd:
      if (s.ksz != 1) { rt_err(strprintf("gen_conv: %s requires KSZ=1, got %lld", variant_str(plan.variant), (long long)s.ksz)); }
      if (plan.input_transform != input_transform_t::k1_layout) { rt_err("gen_conv: k1conv requires the k1_layout transform"); }
      return gen_conv_gemm_shaped(plan, s);
    case variant_t::tconv:
      if (plan.input_transform != input_transform_t::tile_layout) { rt_err("gen_conv: tconv requires the tile_layout transform"); }
      return gen_tconv(plan, s);
    case variant_t::conv:
    case variant_t::conv_simd:
      if (plan.input_transform != input_transform_t::none) { rt_err("gen_conv: conv reads the raw input; no transform expected"); }
      return gen_conv_gemm_shaped(plan, s);
  }
  rt_err("gen_conv: bad variant");
}

std::vector<kernel_artifact_t> gen_conv_pipeline(variant_plan_t const& plan, conv_spec_t const& s) {
  std::vector<kernel_artifact_t> stages;
  if (plan.input_transform != input_transform_t::none) { stages.push_back(gen_input_transform(plan, s)); }
  if ((plan.variant == variant_t::k1conv || plan.variant == variant_t::k1conv_simd) && plan.vec_width > 1) {
    stages.push_back(gen_filts_pad(plan, s));
  }
  stages.push_back(gen_conv(plan, s));
  return stages;
}

}  // namespace kerngen

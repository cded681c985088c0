#include "kerngen/ir.hpp"

#include <functional>

#include "json.hpp"

namespace kerngen {

affine_expr_t& affine_expr_t::add(var_kind_t const kind, int32_t const id, int64_t const coeff) {
  if (coeff != 0) { terms.push_back({kind, id, coeff}); }
  return *this;
}

namespace {

struct ir_checker_t {
  schedule_ir_t const& ir;
  std::vector<buffer_decl_t> const& buffers;
  std::vector<bool> written;

  explicit ir_checker_t(schedule_ir_t const& ir_, std::vector<buffer_decl_t> const& bufs)
      : ir(ir_), buffers(bufs), written((size_t)ir_.num_regs, false) {}

  void check_expr(affine_expr_t const& e, char const* where) const {
    for (affine_term_t const& t : e.terms) {
      if (t.kind == var_kind_t::loop_var && (t.id < 0 || t.id >= (int32_t)ir.loop_var_names.size())) {
        rt_err(strprintf("%s: bad loop var id %d", where, t.id));
      }
      if (t.kind == var_kind_t::derived && (t.id < 0 || t.id >= (int32_t)ir.derived_vars.size())) {
        rt_err(strprintf("%s: bad derived var id %d", where, t.id));
      }
    }
  }

  void check_reg(int32_t const r, char const* where) const {
    if (r < 0 || r >= ir.num_regs) { rt_err(strprintf("%s: register %d out of range [0,%d)", where, r, ir.num_regs)); }
  }

  void read_reg(int32_t const r, char const* where) {
    check_reg(r, where);
    if (!written[(size_t)r]) {
      std::string const nm = (size_t)r < ir.reg_names.size() ? ir.reg_names[(size_t)r] : std::to_string(r);
      rt_err(strprintf("%s: register %s read before any definite write", where, nm.c_str()));
    }
  }

  void write_reg(int32_t const r, int32_t const vw, char const* where) {
    for (int32_t i = 0; i != vw; ++i) {
      check_reg(r + i, where);
      written[(size_t)(r + i)] = true;
    }
  }

  // writes under a guard are definite for the rest of that guard's body only;
  // loop bodies execute at least once (bound >= 1), so their writes persist
  void walk(std::vector<instr_t> const& body, bool const in_guard) {
    for (instr_t const& ins : body) {
      switch (ins.op) {
        case opcode_t::barrier:
          if (in_guard) { rt_err("barrier under a guard: barriers must be at workgroup scope"); }
          break;
        case opcode_t::global_load:
          if (ins.buf < 0 || ins.buf >= (int32_t)buffers.size()) { rt_err("global_load: bad buffer id"); }
          check_expr(ins.idx, "global_load");
          write_reg(ins.dst, ins.vec_width, "global_load");
          break;
        case opcode_t::global_store:
          if (ins.buf < 0 || ins.buf >= (int32_t)buffers.size()) { rt_err("global_store: bad buffer id"); }
          check_expr(ins.idx, "global_store");
          for (int32_t i = 0; i != ins.vec_width; ++i) { read_reg(ins.a + i, "global_store"); }
          break;
        case opcode_t::local_load:
          check_expr(ins.idx, "local_load");
          write_reg(ins.dst, 1, "local_load");
          break;
        case opcode_t::local_store:
          check_expr(ins.idx, "local_store");
          read_reg(ins.a, "local_store");
          break;
        case opcode_t::reg_move:
          if (!ins.use_imm) { read_reg(ins.a, "reg_move"); }
          write_reg(ins.dst, 1, "reg_move");
          break;
        case opcode_t::fma:
          read_reg(ins.dst, "fma");
          read_reg(ins.a, "fma");
          read_reg(ins.b, "fma");
          break;
        case opcode_t::fmax:
          read_reg(ins.dst, "fmax");
          read_reg(ins.a, "fmax");
          break;
        case opcode_t::loop:
          if (ins.loop_id < 0 || ins.loop_id >= (int32_t)ir.loop_var_names.size()) { rt_err("loop: bad loop var id"); }
          if (ins.bound < 1 || ins.step < 1 || ins.unroll < 1) { rt_err("loop: bound, step, and unroll must be >= 1"); }
          walk(ins.body, in_guard);
          break;
        case opcode_t::guard: {
          for (guard_term_t const& g : ins.guards) { check_expr(g.expr, "guard"); }
          std::vector<bool> const saved = written;
          walk(ins.body, true);
          written = saved;
          break;
        }
      }
    }
  }
};

}  // namespace

void validate_ir(schedule_ir_t const& ir, std::vector<buffer_decl_t> const& buffers) {
  if (ir.mg < 1 || ir.ng < 1 || ir.mb < 1 || ir.nb < 1) { rt_err("validate_ir: launch geometry must be positive"); }
  for (size_t i = 0; i != ir.derived_vars.size(); ++i) {
    derived_var_t const& dv = ir.derived_vars[i];
    if (dv.divisor < 1) { rt_err("derived var " + dv.name + ": divisor must be >= 1"); }
    for (affine_term_t const& t : dv.src.terms) {
      if (t.kind == var_kind_t::derived && t.id >= (int32_t)i) {
        rt_err("derived var " + dv.name + " references a non-earlier derived var");
      }
      if (t.kind == var_kind_t::loop_var && (t.id < 0 || t.id >= (int32_t)ir.loop_var_names.size())) {
        rt_err("derived var " + dv.name + ": bad loop var id");
      }
    }
  }
  ir_checker_t chk(ir, buffers);
  chk.walk(ir.body, false);
}

// --- JSON serialization -----------------------------------------------------

namespace {

using nlohmann::json;

json expr_to_json(schedule_ir_t const& ir, affine_expr_t const& e) {
  json terms = json::array();
  for (affine_term_t const& t : e.terms) {
    std::string var;
    switch (t.kind) {
      case var_kind_t::wg_m: var = "wg_m"; break;
      case var_kind_t::wg_n: var = "wg_n"; break;
      case var_kind_t::tid_m: var = "tid_m"; break;
      case var_kind_t::tid_n: var = "tid_n"; break;
      case var_kind_t::loop_var: var = ir.loop_var_names.at((size_t)t.id); break;
      case var_kind_t::derived: var = ir.derived_vars.at((size_t)t.id).name; break;
    }
    terms.push_back(json::array({var, t.coeff}));
  }
  return json{{"c", e.c}, {"terms", terms}};
}

affine_expr_t expr_from_json(schedule_ir_t const& ir, json const& j) {
  affine_expr_t e;
  e.c = j.at("c").get<int64_t>();
  for (json const& t : j.at("terms")) {
    std::string const var = t.at(0).get<std::string>();
    int64_t const coeff = t.at(1).get<int64_t>();
    if (var == "wg_m") { e.add(var_kind_t::wg_m, 0, coeff); continue; }
    if (var == "wg_n") { e.add(var_kind_t::wg_n, 0, coeff); continue; }
    if (var == "tid_m") { e.add(var_kind_t::tid_m, 0, coeff); continue; }
    if (var == "tid_n") { e.add(var_kind_t::tid_n, 0, coeff); continue; }
    bool found = false;
    for (size_t i = 0; i != ir.loop_var_names.size() && !found; ++i) {
      if (ir.loop_var_names[i] == var) { e.add(var_kind_t::loop_var, (int32_t)i, coeff); found = true; }
    }
    for (size_t i = 0; i != ir.derived_vars.size() && !found; ++i) {
      if (ir.derived_vars[i].name == var) { e.add(var_kind_t::derived, (int32_t)i, coeff); found = true; }
    }
    if (!found) { rt_err("ir json: unknown variable '" + var + "'"); }
  }
  return e;
}

char const* opcode_name(opcode_t const op) {
  switch (op) {
    case opcode_t::global_load: return "GlobalLoad";
    case opcode_t::global_store: return "GlobalStore";
    case opcode_t::local_load: return "LocalLoad";
    case opcode_t::local_store: return "LocalStore";
    case opcode_t::reg_move: return "RegMove";
    case opcode_t::fma: return "FMA";
    case opcode_t::fmax: return "FMax";
    case opcode_t::barrier: return "Barrier";
    case opcode_t::loop: return "Loop";
    case opcode_t::guard: return "Guard";
  }
  return "?";
}

opcode_t opcode_from_name(std::string const& s) {
  for (opcode_t op : {opcode_t::global_load, opcode_t::global_store, opcode_t::local_load, opcode_t::local_store,
                      opcode_t::reg_move, opcode_t::fma, opcode_t::fmax, opcode_t::barrier, opcode_t::loop, opcode_t::guard}) {
    if (s == opcode_name(op)) { return op; }
  }
  rt_err("ir json: unknown opcode '" + s + "'");
}

json instrs_to_json(schedule_ir_t const& ir, std::vector<buffer_decl_t> const& buffers, std::vector<instr_t> const& body) {
  json arr = json::array();
  for (instr_t const& ins : body) {
    json j;
    j["op"] = opcode_name(ins.op);
    switch (ins.op) {
      case opcode_t::global_load:
      case opcode_t::global_store:
        j["buffer"] = buffers.at((size_t)ins.buf).name;
        j["index"] = expr_to_json(ir, ins.idx);
        j["vec_width"] = ins.vec_width;
        if (ins.op == opcode_t::global_load) { j["dst"] = ins.dst; } else { j["src"] = ins.a; }
        break;
      case opcode_t::local_load:
        j["dst"] = ins.dst;
        j["index"] = expr_to_json(ir, ins.idx);
        break;
      case opcode_t::local_store:
        j["src"] = ins.a;
        j["index"] = expr_to_json(ir, ins.idx);
        break;
      case opcode_t::reg_move:
        j["dst"] = ins.dst;
        if (ins.use_imm) { j["imm"] = ins.imm; } else { j["src"] = ins.a; }
        break;
      case opcode_t::fma:
        j["dst"] = ins.dst;
        j["a"] = ins.a;
        j["b"] = ins.b;
        break;
      case opcode_t::fmax:
        j["dst"] = ins.dst;
        j["a"] = ins.a;
        break;
      case opcode_t::barrier:
        break;
      case opcode_t::loop:
        j["var"] = ir.loop_var_names.at((size_t)ins.loop_id);
        j["bound"] = ins.bound;
        j["step"] = ins.step;
        j["unroll"] = ins.unroll;
        j["body"] = instrs_to_json(ir, buffers, ins.body);
        break;
      case opcode_t::guard: {
        json terms = json::array();
        for (guard_term_t const& g : ins.guards) {
          terms.push_back(json{{"expr", expr_to_json(ir, g.expr)}, {"lo", g.lo}, {"hi", g.hi}});
        }
        j["pred"] = terms;
        j["body"] = instrs_to_json(ir, buffers, ins.body);
        break;
      }
    }
    arr.push_back(j);
  }
  return arr;
}

std::vector<instr_t> instrs_from_json(schedule_ir_t const& ir, std::vector<buffer_decl_t> const& buffers, json const& arr) {
  std::vector<instr_t> body;
  for (json const& j : arr) {
    instr_t ins;
    ins.op = opcode_from_name(j.at("op").get<std::string>());
    auto buf_id = [&](std::string const& name) -> int32_t {
      for (size_t i = 0; i != buffers.size(); ++i) {
        if (buffers[i].name == name) { return (int32_t)i; }
      }
      rt_err("ir json: unknown buffer '" + name + "'");
    };
    switch (ins.op) {
      case opcode_t::global_load:
      case opcode_t::global_store:
        ins.buf = buf_id(j.at("buffer").get<std::string>());
        ins.idx = expr_from_json(ir, j.at("index"));
        ins.vec_width = j.at("vec_width").get<int32_t>();
        if (ins.op == opcode_t::global_load) { ins.dst = j.at("dst").get<int32_t>(); } else { ins.a = j.at("src").get<int32_t>(); }
        break;
      case opcode_t::local_load:
        ins.dst = j.at("dst").get<int32_t>();
        ins.idx = expr_from_json(ir, j.at("index"));
        break;
      case opcode_t::local_store:
        ins.a = j.at("src").get<int32_t>();
        ins.idx = expr_from_json(ir, j.at("index"));
        break;
      case opcode_t::reg_move:
        ins.dst = j.at("dst").get<int32_t>();
        if (j.contains("imm")) {
          ins.use_imm = true;
          ins.imm = j.at("imm").get<float>();
        } else {
          ins.a = j.at("src").get<int32_t>();
        }
        break;
      case opcode_t::fma:
        ins.dst = j.at("dst").get<int32_t>();
        ins.a = j.at("a").get<int32_t>();
        ins.b = j.at("b").get<int32_t>();
        break;
      case opcode_t::fmax:
        ins.dst = j.at("dst").get<int32_t>();
        ins.a = j.at("a").get<int32_t>();
        break;
      case opcode_t::barrier:
        break;
      case opcode_t::loop: {
        std::string const var = j.at("var").get<std::string>();
        ins.loop_id = -1;
        for (size_t i = 0; i != ir.loop_var_names.size(); ++i) {
          if (ir.loop_var_names[i] == var) { ins.loop_id = (int32_t)i; }
        }
        if (ins.loop_id < 0) { rt_err("ir json: unknown loop var '" + var + "'"); }
        ins.bound = j.at("bound").get<int64_t>();
        ins.step = j.at("step").get<int64_t>();
        ins.unroll = j.at("unroll").get<int64_t>();
        ins.body = instrs_from_json(ir, buffers, j.at("body"));
        break;
      }
      case opcode_t::guard:
        for (json const& g : j.at("pred")) {
          ins.guards.push_back({expr_from_json(ir, g.at("expr")), g.at("lo").get<int64_t>(), g.at("hi").get<int64_t>()});
        }
        ins.body = instrs_from_json(ir, buffers, j.at("body"));
        break;
    }
    body.push_back(std::move(ins));
  }
  return body;
}

}  // namespace

std::string ir_to_json(schedule_ir_t const& ir, std::vector<buffer_decl_t> const& buffers) {
  json j;
  j["kernel"] = ir.kernel_name;
  j["launch"] = json{{"Mg", ir.mg}, {"Ng", ir.ng}, {"Mb", ir.mb}, {"Nb", ir.nb},
                     {"wg_count", ir.mg * ir.ng}, {"threads_per_wg", ir.mb * ir.nb}};
  json bufs = json::array();
  for (buffer_decl_t const& b : buffers) {
    bufs.push_back(json{{"name", b.name}, {"dims", b.dims.str()}, {"layout", b.layout},
                        {"role", b.role == buf_role_t::input ? "in" : "out"}});
  }
  j["buffers"] = bufs;
  j["num_regs"] = ir.num_regs;
  j["reg_names"] = ir.reg_names;
  j["local_mem_floats"] = ir.local_mem_floats;
  j["loop_vars"] = ir.loop_var_names;
  json dvs = json::array();
  for (derived_var_t const& dv : ir.derived_vars) {
    dvs.push_back(json{{"name", dv.name}, {"op", dv.op == dv_op_t::div ? "div" : "mod"},
                       {"src", expr_to_json(ir, dv.src)}, {"divisor", dv.divisor}});
  }
  j["derived_vars"] = dvs;
  j["body"] = instrs_to_json(ir, buffers, ir.body);
  return j.dump(1);
}

void ir_from_json(std::string const& text, schedule_ir_t& ir, std::vector<buffer_decl_t>& buffers) {
  json j;
  try {
    j = json::parse(text);
  } catch (std::exception const& e) {
    rt_err(std::string("bad ir json: ") + e.what());
  }
  ir = schedule_ir_t{};
  buffers.clear();
  ir.kernel_name = j.at("kernel").get<std::string>();
  ir.mg = j.at("launch").at("Mg").get<int64_t>();
  ir.ng = j.at("launch").at("Ng").get<int64_t>();
  ir.mb = j.at("launch").at("Mb").get<int64_t>();
  ir.nb = j.at("launch").at("Nb").get<int64_t>();
  for (json const& b : j.at("buffers")) {
    buffers.push_back({b.at("name").get<std::string>(), dims_t::parse(b.at("dims").get<std::string>()),
                       b.at("layout").get<std::string>(),
                       b.at("role").get<std::string>() == "in" ? buf_role_t::input : buf_role_t::output});
  }
  ir.num_regs = j.at("num_regs").get<int32_t>();
  ir.reg_names = j.at("reg_names").get<std::vector<std::string>>();
  ir.local_mem_floats = j.at("local_mem_floats").get<int64_t>();
  ir.loop_var_names = j.at("loop_vars").get<std::vector<std::string>>();
  for (json const& d : j.at("derived_vars")) {
    // two passes would allow forward refs; derived vars only reference earlier
    // ones, so incremental construction works
    derived_var_t dv;
    dv.name = d.at("name").get<std::string>();
    dv.op = d.at("op").get<std::string>() == "div" ? dv_op_t::div : dv_op_t::mod;
    dv.divisor = d.at("divisor").get<int64_t>();
    dv.src = expr_from_json(ir, d.at("src"));
    ir.derived_vars.push_back(std::move(dv));
  }
  ir.body = instrs_from_json(ir, buffers, j.at("body"));
}

}  // namespace kerngen

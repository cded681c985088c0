#include "kerngen/executor.hpp"

#include <cmath>
#include <thread>

#include "json.hpp"

namespace kerngen {

void traffic_counters_t::merge(traffic_counters_t const& o) {
  global_loads_bytes += o.global_loads_bytes;
  global_stores_bytes += o.global_stores_bytes;
  local_loads_bytes += o.local_loads_bytes;
  local_stores_bytes += o.local_stores_bytes;
  fma_count += o.fma_count;
  barrier_count += o.barrier_count;
  for (auto const& [k, v] : o.loads_by_buffer) { loads_by_buffer[k] += v; }
  for (auto const& [k, v] : o.stores_by_buffer) { stores_by_buffer[k] += v; }
}

std::string traffic_counters_t::json() const {
  nlohmann::json j;
  j["global_loads_bytes"] = global_loads_bytes;
  j["global_stores_bytes"] = global_stores_bytes;
  j["local_loads_bytes"] = local_loads_bytes;
  j["local_stores_bytes"] = local_stores_bytes;
  j["fma_count"] = fma_count;
  j["barrier_count"] = barrier_count;
  j["loads_by_buffer"] = loads_by_buffer;
  j["stores_by_buffer"] = stores_by_buffer;
  return j.dump(2);
}

namespace {

struct dv_meta_t {
  bool per_thread = false;
  uint64_t loop_mask = 0;
};

struct exec_plan_t {
  kernel_artifact_t const& art;
  emu_config_t cfg;
  std::vector<float const*> rd;   // per buffer, input data (null for outputs)
  std::vector<float*> wr;         // per buffer, output data (null for inputs)
  std::vector<int64_t> len;       // per buffer, element count
  std::vector<dv_meta_t> dv_meta;
  int64_t threads = 0;

  exec_plan_t(kernel_artifact_t const& a, emu_config_t const& c) : art(a), cfg(c) {
    threads = a.ir.mb * a.ir.nb;
    if ((int64_t)a.ir.loop_var_names.size() > 63) { rt_err("emulator: too many loop variables"); }
    for (derived_var_t const& dv : a.ir.derived_vars) {
      dv_meta_t m;
      for (affine_term_t const& t : dv.src.terms) {
        switch (t.kind) {
          case var_kind_t::tid_m:
          case var_kind_t::tid_n: m.per_thread = true; break;
          case var_kind_t::loop_var: m.loop_mask |= 1ull << t.id; break;
          case var_kind_t::derived:
            m.per_thread = m.per_thread || dv_meta[(size_t)t.id].per_thread;
            m.loop_mask |= dv_meta[(size_t)t.id].loop_mask;
            break;
          default: break;
        }
      }
      dv_meta.push_back(m);
    }
  }
};

struct wg_exec_t {
  exec_plan_t const& pl;
  schedule_ir_t const& ir;
  int64_t wg_m = 0, wg_n = 0;
  int64_t T;
  std::vector<int64_t> tid_m_of, tid_n_of;
  std::vector<double> regs;        // [thread][reg]
  std::vector<float> lmem;
  std::vector<int64_t> loop_vals;
  std::vector<int64_t> dv_u;       // uniform derived values
  std::vector<int64_t> dv_t;       // per-thread derived values, [dv][thread]
  std::vector<std::vector<int32_t>> mask_pool;  // fixed depth; references stay valid
  traffic_counters_t ctr;
  std::vector<int64_t> loads_by_buf, stores_by_buf;  // by buffer id; folded into ctr at the end

  explicit wg_exec_t(exec_plan_t const& p)
      : pl(p), ir(p.art.ir), T(p.threads), regs((size_t)(p.threads * p.art.ir.num_regs), 0.0),
        lmem((size_t)p.art.ir.local_mem_floats, 0.0f), loop_vals(p.art.ir.loop_var_names.size(), 0),
        dv_u(p.art.ir.derived_vars.size(), 0), dv_t(p.art.ir.derived_vars.size() * (size_t)p.threads, 0),
        mask_pool(32), loads_by_buf(p.art.buffers.size(), 0), stores_by_buf(p.art.buffers.size(), 0) {
    tid_m_of.resize((size_t)T);
    tid_n_of.resize((size_t)T);
    for (int64_t t = 0; t != T; ++t) {
      tid_m_of[(size_t)t] = t / ir.nb;
      tid_n_of[(size_t)t] = t % ir.nb;
    }
  }

  traffic_counters_t take_counters() {
    for (size_t i = 0; i != loads_by_buf.size(); ++i) {
      if (loads_by_buf[i]) { ctr.loads_by_buffer[pl.art.buffers[i].name] += loads_by_buf[i]; }
      if (stores_by_buf[i]) { ctr.stores_by_buffer[pl.art.buffers[i].name] += stores_by_buf[i]; }
    }
    return std::move(ctr);
  }

  int64_t eval(affine_expr_t const& e, int64_t const t) const {
    int64_t v = e.c;
    for (affine_term_t const& tm : e.terms) {
      switch (tm.kind) {
        case var_kind_t::wg_m: v += wg_m * tm.coeff; break;
        case var_kind_t::wg_n: v += wg_n * tm.coeff; break;
        case var_kind_t::tid_m: v += tid_m_of[(size_t)t] * tm.coeff; break;
        case var_kind_t::tid_n: v += tid_n_of[(size_t)t] * tm.coeff; break;
        case var_kind_t::loop_var: v += loop_vals[(size_t)tm.id] * tm.coeff; break;
        case var_kind_t::derived:
          v += (pl.dv_meta[(size_t)tm.id].per_thread ? dv_t[(size_t)tm.id * (size_t)T + (size_t)t] : dv_u[(size_t)tm.id]) *
               tm.coeff;
          break;
      }
    }
    return v;
  }

  void recompute_dv(size_t const i) {
    derived_var_t const& dv = ir.derived_vars[i];
    if (pl.dv_meta[i].per_thread) {
      for (int64_t t = 0; t != T; ++t) {
        int64_t const s = eval(dv.src, t);
        dv_t[i * (size_t)T + (size_t)t] = dv.op == dv_op_t::div ? s / dv.divisor : s % dv.divisor;
      }
    } else {
      int64_t const s = eval(dv.src, 0);
      dv_u[i] = dv.op == dv_op_t::div ? s / dv.divisor : s % dv.divisor;
    }
  }

  void recompute_all_dvs() {
    for (size_t i = 0; i != ir.derived_vars.size(); ++i) { recompute_dv(i); }
  }

  void recompute_dvs_for_loop(int32_t const loop_id) {
    uint64_t const bit = 1ull << loop_id;
    for (size_t i = 0; i != ir.derived_vars.size(); ++i) {
      if (pl.dv_meta[i].loop_mask & bit) { recompute_dv(i); }
    }
  }

  [[noreturn]] void oob(instr_t const& ins, char const* space, int64_t const off, int64_t const limit, int64_t const t) const {
    char const* opn = "?";
    switch (ins.op) {
      case opcode_t::global_load: opn = "GlobalLoad"; break;
      case opcode_t::global_store: opn = "GlobalStore"; break;
      case opcode_t::local_load: opn = "LocalLoad"; break;
      case opcode_t::local_store: opn = "LocalStore"; break;
      default: break;
    }
    std::string const buf = ins.buf >= 0 ? pl.art.buffers[(size_t)ins.buf].name : std::string("local");
    rt_err(strprintf("%s: out-of-bounds %s access in kernel %s: buffer '%s' offset %lld (size %lld) at wg=(%lld,%lld) thread=%lld",
                     opn, space, ir.kernel_name.c_str(), buf.c_str(), (long long)off, (long long)limit, (long long)wg_m,
                     (long long)wg_n, (long long)t));
  }

  void exec_leaf(instr_t const& ins, std::vector<int32_t> const& active) {
    bool const cc = pl.cfg.collect_counters;
    switch (ins.op) {
      case opcode_t::global_load: {
        int64_t const limit = pl.len[(size_t)ins.buf];
        float const* const src = pl.rd[(size_t)ins.buf];
        for (int32_t const t : active) {
          int64_t const off = eval(ins.idx, t);
          if (pl.cfg.check_bounds && (off < 0 || off + ins.vec_width > limit)) { oob(ins, "global", off, limit, t); }
          double* const r = &regs[(size_t)t * (size_t)ir.num_regs + (size_t)ins.dst];
          for (int32_t l = 0; l != ins.vec_width; ++l) { r[l] = (double)src[off + l]; }
        }
        if (cc) {
          int64_t const bytes = 4ll * ins.vec_width * (int64_t)active.size();
          ctr.global_loads_bytes += bytes;
          loads_by_buf[(size_t)ins.buf] += bytes;
        }
        break;
      }
      case opcode_t::global_store: {
        int64_t const limit = pl.len[(size_t)ins.buf];
        float* const dst = pl.wr[(size_t)ins.buf];
        if (!dst) { rt_err("GlobalStore to an input buffer '" + pl.art.buffers[(size_t)ins.buf].name + "'"); }
        for (int32_t const t : active) {
          int64_t const off = eval(ins.idx, t);
          if (pl.cfg.check_bounds && (off < 0 || off + ins.vec_width > limit)) { oob(ins, "global", off, limit, t); }
          double const* const r = &regs[(size_t)t * (size_t)ir.num_regs + (size_t)ins.a];
          for (int32_t l = 0; l != ins.vec_width; ++l) {
            float const v = (float)r[l];
            if (pl.cfg.trap_nan && std::isnan(v)) {
              rt_err(strprintf("GlobalStore: NaN stored to '%s' in kernel %s", pl.art.buffers[(size_t)ins.buf].name.c_str(),
                               ir.kernel_name.c_str()));
            }
            dst[off + l] = v;
          }
        }
        if (cc) {
          int64_t const bytes = 4ll * ins.vec_width * (int64_t)active.size();
          ctr.global_stores_bytes += bytes;
          stores_by_buf[(size_t)ins.buf] += bytes;
        }
        break;
      }
      case opcode_t::local_load: {
        int64_t const limit = (int64_t)lmem.size();
        for (int32_t const t : active) {
          int64_t const off = eval(ins.idx, t);
          if (pl.cfg.check_bounds && (off < 0 || off >= limit)) { oob(ins, "local", off, limit, t); }
          regs[(size_t)t * (size_t)ir.num_regs + (size_t)ins.dst] = (double)lmem[(size_t)off];
        }
        if (cc) { ctr.local_loads_bytes += 4ll * (int64_t)active.size(); }
        break;
      }
      case opcode_t::local_store: {
        int64_t const limit = (int64_t)lmem.size();
        for (int32_t const t : active) {
          int64_t const off = eval(ins.idx, t);
          if (pl.cfg.check_bounds && (off < 0 || off >= limit)) { oob(ins, "local", off, limit, t); }
          lmem[(size_t)off] = (float)regs[(size_t)t * (size_t)ir.num_regs + (size_t)ins.a];
        }
        if (cc) { ctr.local_stores_bytes += 4ll * (int64_t)active.size(); }
        break;
      }
      case opcode_t::reg_move:
        if (ins.use_imm) {
          for (int32_t const t : active) { regs[(size_t)t * (size_t)ir.num_regs + (size_t)ins.dst] = (double)ins.imm; }
        } else {
          for (int32_t const t : active) {
            double* const r = &regs[(size_t)t * (size_t)ir.num_regs];
            r[ins.dst] = r[ins.a];
          }
        }
        break;
      case opcode_t::fma:
        for (int32_t const t : active) {
          double* const r = &regs[(size_t)t * (size_t)ir.num_regs];
          r[ins.dst] = std::fma(r[ins.a], r[ins.b], r[ins.dst]);
        }
        if (cc) { ctr.fma_count += (int64_t)active.size(); }
        break;
      case opcode_t::fmax:
        for (int32_t const t : active) {
          double* const r = &regs[(size_t)t * (size_t)ir.num_regs];
          r[ins.dst] = std::max(r[ins.dst], r[ins.a]);
        }
        break;
      default: rt_err("exec_leaf: unexpected opcode");
    }
  }

  void exec_body(std::vector<instr_t> const& body, std::vector<int32_t> const& active, size_t const depth) {
    for (instr_t const& ins : body) {
      switch (ins.op) {
        case opcode_t::barrier:
          if ((int64_t)active.size() != T) {
            rt_err(strprintf("barrier divergence in kernel %s: %zu of %lld threads reached the barrier",
                             ir.kernel_name.c_str(), active.size(), (long long)T));
          }
          ctr.barrier_count += 1;
          break;
        case opcode_t::loop:
          for (int64_t v = 0; v < ins.bound; v += ins.step * ins.unroll) {
            loop_vals[(size_t)ins.loop_id] = v;
            recompute_dvs_for_loop(ins.loop_id);
            exec_body(ins.body, active, depth);
          }
          break;
        case opcode_t::guard: {
          if (depth + 1 >= mask_pool.size()) { rt_err("guard nesting exceeds the emulator's depth limit"); }
          std::vector<int32_t>& pass = mask_pool[depth];
          pass.clear();
          for (int32_t const t : active) {
            bool ok = true;
            for (guard_term_t const& g : ins.guards) {
              int64_t const v = eval(g.expr, t);
              if (v < g.lo || v >= g.hi) { ok = false; break; }
            }
            if (ok) { pass.push_back(t); }
          }
          if (!pass.empty()) { exec_body(ins.body, pass, depth + 1); }
          break;
        }
        default: exec_leaf(ins, active);
      }
    }
  }

  void run_wg(int64_t const wg_id, std::vector<int32_t> const& all) {
    wg_m = wg_id / ir.ng;
    wg_n = wg_id % ir.ng;
    std::fill(regs.begin(), regs.end(), 0.0);
    std::fill(lmem.begin(), lmem.end(), 0.0f);
    std::fill(loop_vals.begin(), loop_vals.end(), 0);
    recompute_all_dvs();
    exec_body(ir.body, all, 0);
  }
};

}  // namespace

run_result_t run(kernel_artifact_t const& artifact, std::map<std::string, nda_t> const& inputs, emu_config_t const& cfg) {
  exec_plan_t pl(artifact, cfg);
  run_result_t res;
  for (buffer_decl_t const& b : artifact.buffers) {
    if (b.role == buf_role_t::input) {
      auto it = inputs.find(b.name);
      if (it == inputs.end()) { rt_err("run: missing input buffer '" + b.name + "'"); }
      if (!(it->second.dims() == b.dims)) {
        rt_err("run: input '" + b.name + "' dims " + it->second.dims().str() + " do not match declared " + b.dims.str());
      }
      pl.rd.push_back(it->second.data().data());
      pl.wr.push_back(nullptr);
      pl.len.push_back(it->second.elems());
    } else {
      auto [it, fresh] = res.outputs.emplace(b.name, nda_t{b.dims});
      if (!fresh) { rt_err("run: duplicate output buffer '" + b.name + "'"); }
      pl.rd.push_back(nullptr);
      pl.wr.push_back(it->second.data().data());
      pl.len.push_back(it->second.elems());
    }
  }

  int64_t const wg_count = artifact.ir.mg * artifact.ir.ng;
  std::vector<int32_t> all((size_t)pl.threads);
  for (int64_t t = 0; t != pl.threads; ++t) { all[(size_t)t] = (int32_t)t; }

  int64_t const workers = std::max<int64_t>(1, std::min(cfg.workgroup_parallelism, wg_count));
  if (workers == 1) {
    wg_exec_t wx(pl);
    for (int64_t wg = 0; wg != wg_count; ++wg) { wx.run_wg(wg, all); }
    res.counters = wx.take_counters();
  } else {
    // contiguous ranges per worker; workgroups are independent and own
    // disjoint output elements, counters merge in range order
    std::vector<traffic_counters_t> ctrs((size_t)workers);
    std::vector<std::string> errs((size_t)workers);
    std::vector<std::thread> ths;
    int64_t const chunk = ceil_div(wg_count, workers);
    for (int64_t w = 0; w != workers; ++w) {
      ths.emplace_back([&, w]() {
        try {
          wg_exec_t wx(pl);
          int64_t const lo = w * chunk;
          int64_t const hi = std::min(wg_count, lo + chunk);
          for (int64_t wg = lo; wg < hi; ++wg) { wx.run_wg(wg, all); }
          ctrs[(size_t)w] = wx.take_counters();
        } catch (std::exception const& e) {
          errs[(size_t)w] = e.what();
        }
      });
    }
    for (std::thread& th : ths) { th.join(); }
    for (std::string const& e : errs) {
      if (!e.empty()) { rt_err(e); }
    }
    for (traffic_counters_t const& c : ctrs) { res.counters.merge(c); }
  }
  return res;
}

pipeline_result_t run_pipeline(std::vector<kernel_artifact_t> const& stages, std::map<std::string, nda_t> const& inputs,
                               emu_config_t const& cfg) {
  pipeline_result_t res;
  if (stages.empty()) {
    res.outputs = inputs;
    return res;
  }
  std::map<std::string, nda_t> pool = inputs;
  for (size_t i = 0; i != stages.size(); ++i) {
    std::map<std::string, nda_t> stage_in;
    for (buffer_decl_t const& b : stages[i].buffers) {
      if (b.role != buf_role_t::input) { continue; }
      auto it = pool.find(b.name);
      if (it == pool.end()) {
        rt_err(strprintf("run_pipeline: stage %zu (%s) needs buffer '%s' which no earlier stage or input provides", i,
                         stages[i].name.c_str(), b.name.c_str()));
      }
      stage_in.emplace(b.name, it->second);
    }
    run_result_t r = run(stages[i], stage_in, cfg);
    res.stage_counters.push_back(r.counters);
    res.counters.merge(r.counters);
    res.outputs = r.outputs;
    for (auto& [name, arr] : r.outputs) { pool.insert_or_assign(name, std::move(arr)); }
  }
  return res;
}

}  // namespace kerngen

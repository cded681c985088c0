#include "kerngen/bench.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "json.hpp"

namespace kerngen {

namespace {

uint64_t fnv1a(std::string const& s) {
  uint64_t h = 1469598103934665603ull;
  for (char const c : s) {
    h ^= (uint8_t)c;
    h *= 1099511628211ull;
  }
  return h;
}

nda_t random_nda(dims_t const& dims, uint64_t const seed) {
  nda_t a{dims};
  uint64_t x = seed ? seed : 1;
  for (float& v : a.data()) {
    // xorshift64*; uniform in [-1, 1)
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    uint64_t const r = x * 2685821657736338717ull;
    v = (float)((double)(r >> 11) / (double)(1ull << 53) * 2.0 - 1.0);
  }
  return a;
}

}  // namespace

suite_t load_suite(std::vector<std::string> const& paths, std::vector<int64_t> batch_sizes, bool const dedup) {
  suite_t suite;
  suite.batch_sizes = std::move(batch_sizes);
  suite.dedup = dedup;
  std::vector<named_op_t> base;
  for (std::string const& path : paths) {
    std::ifstream in(path);
    if (!in) { rt_err("cannot open suite file: " + path); }
    if (!suite.name.empty()) { suite.name += "+"; }
    suite.name += std::filesystem::path(path).stem().string();
    std::string first;
    std::getline(in, first);
    in.seekg(0);
    size_t const ws = first.find_first_not_of(" \t");
    if (ws != std::string::npos && first[ws] == '[') {
      nlohmann::json j;
      try {
        in >> j;
      } catch (std::exception const& e) {
        rt_err("bad suite JSON in " + path + ": " + e.what());
      }
      for (nlohmann::json const& o : j) {
        std::string line = o.at("name").get<std::string>();
        for (auto const& [k, v] : o.items()) {
          if (k == "name") { continue; }
          line += " " + k + "=" + (v.is_string() ? v.get<std::string>() : v.dump());
        }
        base.push_back(parse_op_line(line, true));
      }
      continue;
    }
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      size_t const h = line.find('#');
      if (h != std::string::npos) { line.resize(h); }
      if (line.find_first_not_of(" \t\r") == std::string::npos) { continue; }
      try {
        base.push_back(parse_op_line(line, true));
      } catch (std::exception const& e) {
        rt_err(strprintf("%s:%lld: %s", path.c_str(), (long long)lineno, e.what()));
      }
    }
  }
  // op-major order, batch sizes inner; dedup keeps the first occurrence
  for (named_op_t const& op : base) {
    for (int64_t const b : suite.batch_sizes) {
      named_op_t e = op;
      e.spec.batch = b;
      bool dup = false;
      if (dedup) {
        for (named_op_t const& seen : suite.ops) {
          if (seen.spec == e.spec) {
            dup = true;
            break;
          }
        }
      }
      if (!dup) { suite.ops.push_back(std::move(e)); }
    }
  }
  return suite;
}

conv_spec_t scale_spec(conv_spec_t const& s, int64_t const f) {
  if (f < 1) { rt_err("scale factor must be >= 1"); }
  if (f == 1) { return s; }
  conv_spec_t r = s;
  r.in_y = std::max<int64_t>(1, ceil_div(s.in_y, f));
  r.in_x = std::max<int64_t>(1, ceil_div(s.in_x, f));
  r.in_c = std::max<int64_t>(1, ceil_div(s.in_c, f));
  r.oc = std::max<int64_t>(1, ceil_div(s.oc, f));
  return r;
}

bool rel_equal(nda_t const& a, nda_t const& b, double const tol, double const clamp, double* max_rel) {
  if (!(a.dims() == b.dims())) {
    if (max_rel) { *max_rel = HUGE_VAL; }
    return false;
  }
  double worst = 0.0;
  for (size_t i = 0; i != a.data().size(); ++i) {
    double const av = a.data()[i], bv = b.data()[i];
    double const den = std::max(std::max(std::fabs(av), std::fabs(bv)), clamp);
    worst = std::max(worst, std::fabs(av - bv) / den);
  }
  if (max_rel) { *max_rel = worst; }
  return worst <= tol;
}

report_row_t verify_op(named_op_t const& op, machine_model_t const& machine, tuning_t const& tuning,
                       sweep_config_t const& cfg, std::vector<kernel_artifact_t>* stages_out,
                       pipeline_result_t* pipeline_out) {
  report_row_t row;
  row.op_name = op.name;
  row.batch = op.spec.batch;

  // analysis and variant selection happen at full size; scaling is only for emulation
  conv_shapes_t const full_sh = infer_shapes(op.spec);
  row.view = gemm_view_of(op.spec);
  row.flops = full_sh.flops;
  ai_report_t const air = conv_ai(full_sh, lowering_t::direct, machine);
  row.ai = air.ai;
  row.predicted_bound = air.predicted_bound;

  blocking_overrides_t overrides;
  std::optional<variant_t> pin;
  auto ti = tuning.ops.find(op.name);
  if (ti != tuning.ops.end()) {
    overrides = ti->second.blocking;
    pin = ti->second.variant_pin;
  }
  if (!pin) { pin = select_variant(op.spec, machine, tuning.planner); }
  row.variant = *pin;

  try {
    conv_spec_t const scaled = scale_spec(op.spec, cfg.scale);
    variant_plan_t const plan = plan_conv(scaled, machine, overrides, pin, tuning.planner);
    std::vector<kernel_artifact_t> stages = gen_conv_pipeline(plan, scaled);

    uint64_t const seed = fnv1a(op.name) ^ (uint64_t)op.spec.batch * 0x9e3779b97f4a7c15ull;
    conv_shapes_t const ssh = infer_shapes(scaled);
    std::map<std::string, nda_t> inputs;
    inputs.emplace("in", random_nda(scaled.in_dims(), seed));
    inputs.emplace("filts", random_nda(ssh.filts_dims, seed ^ 0xf117f117f117f117ull));
    nda_t const* bias = nullptr;
    if (scaled.has_bias) {
      auto [it, ok] = inputs.emplace("bias", random_nda(dims_t{{"OC", scaled.oc}}, seed ^ 0xb1a5b1a5b1a5b1a5ull));
      (void)ok;
      bias = &it->second;
    }
    pipeline_result_t pr = run_pipeline(stages, inputs, cfg.emu);
    row.fma_count = pr.counters.fma_count;
    row.global_loads_bytes = pr.counters.global_loads_bytes;
    row.global_stores_bytes = pr.counters.global_stores_bytes;

    nda_t const expect = conv_oracle(scaled, inputs.at("in"), inputs.at("filts"), bias);
    auto oi = pr.outputs.find("out");
    if (oi == pr.outputs.end()) { rt_err("pipeline produced no 'out' buffer"); }
    nda_t got = oi->second;
    if (got.dims().size_of("C") != scaled.oc) {
      got = got.slice({{"C", 0, scaled.oc}});  // drop vector-width padding lanes
    }
    double max_rel = 0.0;
    row.verified = rel_equal(expect, got, 1e-5, 1e-6, &max_rel);
    if (!row.verified) { row.fail_reason = strprintf("max relative error %.3g exceeds 1e-5", max_rel); }
    if (stages_out) { *stages_out = std::move(stages); }
    if (pipeline_out) { *pipeline_out = std::move(pr); }
  } catch (std::exception const& e) {
    row.verified = false;
    row.fail_reason = e.what();
  }
  return row;
}

std::vector<report_row_t> sweep(suite_t const& suite, machine_model_t const& machine, tuning_t const& tuning,
                                sweep_config_t const& cfg) {
  std::vector<report_row_t> rows(suite.ops.size());
  auto process = [&](size_t const i) {
    std::vector<kernel_artifact_t> stages;
    rows[i] = verify_op(suite.ops[i], machine, tuning, cfg, cfg.emit_dir.empty() ? nullptr : &stages);
    if (!cfg.emit_dir.empty()) {
      std::filesystem::create_directories(cfg.emit_dir);
      for (kernel_artifact_t const& art : stages) {
        std::string const base = strprintf("%s/%s_B%lld.%s", cfg.emit_dir.c_str(), suite.ops[i].name.c_str(),
                                           (long long)suite.ops[i].spec.batch, art.kind.c_str());
        std::ofstream(base + ".cl") << art.source_text;
        std::ofstream(base + ".ir.json") << ir_to_json(art.ir, art.buffers);
      }
    }
  };
  int64_t const workers = std::max<int64_t>(1, std::min<int64_t>(cfg.parallel_rows, (int64_t)rows.size()));
  if (workers == 1) {
    for (size_t i = 0; i != rows.size(); ++i) { process(i); }
  } else {
    std::vector<std::thread> ths;
    std::vector<std::string> errs((size_t)workers);
    for (int64_t w = 0; w != workers; ++w) {
      ths.emplace_back([&, w]() {
        try {
          for (size_t i = (size_t)w; i < rows.size(); i += (size_t)workers) { process(i); }
        } catch (std::exception const& e) {
          errs[(size_t)w] = e.what();
        }
      });
    }
    for (std::thread& t : ths) { t.join(); }
    for (std::string const& e : errs) {
      if (!e.empty()) { rt_err(e); }
    }
  }
  if (cfg.strict) {
    for (report_row_t const& r : rows) {
      if (!r.verified) {
        rt_err(strprintf("strict mode: op %s B=%lld failed verification: %s", r.op_name.c_str(), (long long)r.batch,
                         r.fail_reason.c_str()));
      }
    }
  }
  return rows;
}

report_format_t report_format_from_str(std::string const& s) {
  if (s == "csv") { return report_format_t::csv; }
  if (s == "json") { return report_format_t::json; }
  if (s == "plotdata") { return report_format_t::plotdata; }
  rt_err("unknown report format '" + s + "' (csv|json|plotdata)");
}

std::string emit_report(std::vector<report_row_t> const& rows, report_format_t const fmt) {
  if (fmt == report_format_t::csv) {
    std::string out = "name,B,variant,M,N,K,flops,ai,predicted_bound,verified,fma_count,global_loads_bytes,global_stores_bytes\n";
    for (report_row_t const& r : rows) {
      out += strprintf("%s,%lld,%s,%lld,%lld,%lld,%lld,%.6g,%s,%s,%lld,%lld,%lld\n", r.op_name.c_str(), (long long)r.batch,
                       variant_str(r.variant), (long long)r.view.m, (long long)r.view.n, (long long)r.view.k,
                       (long long)r.flops, r.ai, bound_kind_str(r.predicted_bound), r.verified ? "pass" : "fail",
                       (long long)r.fma_count, (long long)r.global_loads_bytes, (long long)r.global_stores_bytes);
    }
    return out;
  }
  if (fmt == report_format_t::json) {
    nlohmann::json arr = nlohmann::json::array();
    for (report_row_t const& r : rows) {
      nlohmann::json j;
      j["name"] = r.op_name;
      j["B"] = r.batch;
      j["variant"] = variant_str(r.variant);
      j["M"] = r.view.m;
      j["N"] = r.view.n;
      j["K"] = r.view.k;
      j["flops"] = r.flops;
      j["ai"] = r.ai;
      j["predicted_bound"] = bound_kind_str(r.predicted_bound);
      j["verified"] = r.verified;
      if (!r.verified) { j["fail_reason"] = r.fail_reason; }
      j["fma_count"] = r.fma_count;
      j["global_loads_bytes"] = r.global_loads_bytes;
      j["global_stores_bytes"] = r.global_stores_bytes;
      arr.push_back(j);
    }
    return arr.dump(1) + "\n";
  }
  // plotdata: (ai, variant, flops) tuples sorted by ai ascending
  std::vector<size_t> order(rows.size());
  for (size_t i = 0; i != order.size(); ++i) { order[i] = i; }
  std::stable_sort(order.begin(), order.end(), [&](size_t const a, size_t const b) { return rows[a].ai < rows[b].ai; });
  std::string out = "# ai variant flops\n";
  for (size_t const i : order) {
    out += strprintf("%.6g %s %lld\n", rows[i].ai, variant_str(rows[i].variant), (long long)rows[i].flops);
  }
  return out;
}

}  // namespace kerngen

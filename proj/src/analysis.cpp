#include "kerngen/analysis.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

namespace kerngen {

void machine_model_t::validate() const {
  if (peak_gflops <= 0 || peak_gbps <= 0) { rt_err("machine model: peaks must be positive"); }
  if (local_mem_bytes <= 0 || max_wg_threads <= 0 || min_wg_threads <= 0 || reg_budget_per_thread <= 0 ||
      simd_width <= 0 || compute_units <= 0) {
    rt_err("machine model: all counts must be positive");
  }
  if (min_wg_threads > max_wg_threads) { rt_err("machine model: min_wg_threads > max_wg_threads"); }
}

machine_model_t load_machine_model(std::string const& path) {
  std::ifstream in(path);
  if (!in) { rt_err("cannot open machine model file: " + path); }
  nlohmann::json j;
  try {
    in >> j;
  } catch (std::exception const& e) {
    rt_err("bad machine model JSON in " + path + ": " + e.what());
  }
  machine_model_t m;
  auto get = [&](char const* key, auto& field) {
    if (j.contains(key)) { field = j.at(key).template get<std::decay_t<decltype(field)>>(); }
  };
  get("name", m.name);
  get("peak_gflops", m.peak_gflops);
  get("peak_gbps", m.peak_gbps);
  get("local_mem_bytes", m.local_mem_bytes);
  get("max_wg_threads", m.max_wg_threads);
  get("min_wg_threads", m.min_wg_threads);
  get("reg_budget_per_thread", m.reg_budget_per_thread);
  get("simd_width", m.simd_width);
  get("explicit_local_mem_profitable", m.explicit_local_mem_profitable);
  get("compute_units", m.compute_units);
  m.validate();
  return m;
}

std::string machine_model_json(machine_model_t const& m) {
  nlohmann::json j;
  j["name"] = m.name;
  j["peak_gflops"] = m.peak_gflops;
  j["peak_gbps"] = m.peak_gbps;
  j["local_mem_bytes"] = m.local_mem_bytes;
  j["max_wg_threads"] = m.max_wg_threads;
  j["min_wg_threads"] = m.min_wg_threads;
  j["reg_budget_per_thread"] = m.reg_budget_per_thread;
  j["simd_width"] = m.simd_width;
  j["explicit_local_mem_profitable"] = m.explicit_local_mem_profitable;
  j["compute_units"] = m.compute_units;
  return j.dump(2);
}

double sgemm_ai(int64_t const m, int64_t const n, int64_t const k) {
  if (m < 1 || n < 1 || k < 1) { rt_err("sgemm_ai: M,N,K must be >= 1"); }
  double const flops = 2.0 * (double)m * (double)n * (double)k;
  double const bytes = 4.0 * ((double)m * (double)n + (double)m * (double)k + (double)k * (double)n);
  return flops / bytes;
}

double knee_ai(machine_model_t const& m) {
  m.validate();
  return m.peak_gflops / m.peak_gbps;
}

ai_report_t conv_ai(conv_shapes_t const& shapes, lowering_t const lowering, machine_model_t const& m) {
  ai_report_t r;
  r.flops = shapes.flops;
  r.bytes_min = shapes.min_bytes;
  if (lowering == lowering_t::im2col_gemm) {
    // replace |in| with |inmat|: the (KSZ/stride)^2 patch-matrix inflation
    r.bytes_min = 4 * (shapes.inmat_dims.product() + shapes.filts_dims.product() + shapes.out_dims.product());
  }
  r.ai = (double)r.flops / (double)r.bytes_min;
  r.knee_ai = knee_ai(m);
  r.predicted_bound = r.ai >= r.knee_ai ? bound_kind_t::compute : bound_kind_t::bandwidth;
  return r;
}

double roofline_point(int64_t const flops, int64_t const bytes, machine_model_t const& m) {
  m.validate();
  if (flops < 0 || bytes <= 0) { rt_err("roofline_point: flops >= 0 and bytes > 0 required"); }
  double const ai = (double)flops / (double)bytes;
  return std::min(m.peak_gflops, ai * m.peak_gbps);
}

}  // namespace kerngen

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "kerngen/bench.hpp"

using namespace kerngen;

namespace {

machine_model_t machine_or_default(std::string const& path) {
  if (path.empty()) { return machine_model_t{}; }
  return load_machine_model(path);
}

tuning_t tuning_or_default(std::string const& path) {
  if (path.empty()) { return tuning_t{}; }
  return load_tuning(path);
}

void emit_stages(std::vector<kernel_artifact_t> const& stages, named_op_t const& op, std::string const& dir) {
  std::filesystem::create_directories(dir);
  for (kernel_artifact_t const& art : stages) {
    std::string const base = dir + "/" + op.name + "." + art.kind;
    std::ofstream(base + ".cl") << art.source_text;
    std::ofstream(base + ".ir.json") << ir_to_json(art.ir, art.buffers);
    std::cout << "wrote " << base << ".cl and .ir.json\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kerngen: blocked GPU-style kernel generation, analysis, and emulation for CNN convolutions"};
  app.require_subcommand(1);

  // --- sweep ---
  auto* sweep_cmd = app.add_subcommand("sweep", "plan, generate, emulate, and verify a suite of convolutions");
  std::vector<std::string> suite_paths;
  std::string machine_path, tune_path, emit_dir, format = "csv", out_path;
  std::vector<int64_t> batches{1, 5, 20};
  int64_t scale = 1, parallel = 1;
  bool strict = false, no_dedup = false, fast = false;
  sweep_cmd->add_option("--suite", suite_paths, "op-list file(s)")->required()->expected(-1);
  sweep_cmd->add_option("--machine", machine_path, "machine model JSON");
  sweep_cmd->add_option("--tune", tune_path, "tuning-override JSON");
  sweep_cmd->add_option("--batches", batches, "batch sizes to pool");
  sweep_cmd->add_option("--scale", scale, "divide spatial dims and channels by this factor for emulation");
  sweep_cmd->add_option("--emit-dir", emit_dir, "write per-op kernel source and IR here");
  sweep_cmd->add_option("--format", format, "csv|json|plotdata");
  sweep_cmd->add_option("--out", out_path, "report file (stdout when omitted)");
  sweep_cmd->add_option("--parallel", parallel, "process rows on this many workers");
  sweep_cmd->add_flag("--strict", strict, "nonzero exit on any verification failure");
  sweep_cmd->add_flag("--no-dedup", no_dedup, "keep duplicate (spec, B) pairs");
  sweep_cmd->add_flag("--fast", fast, "disable emulator bounds checking");

  // --- gen ---
  auto* gen_cmd = app.add_subcommand("gen", "generate the kernel pipeline for one op");
  std::string op_line, gen_machine, gen_tune, gen_emit = ".";
  bool gen_verify = false, gen_counters = false;
  gen_cmd->add_option("--op", op_line, "op line, e.g. \"conv1 in=Y:X:C=205:205:3 OC=96 KSZ=7 stride=2 pad=0 B=1\"")->required();
  gen_cmd->add_option("--machine", gen_machine, "machine model JSON");
  gen_cmd->add_option("--tune", gen_tune, "tuning-override JSON");
  gen_cmd->add_option("--emit-dir", gen_emit, "output directory");
  gen_cmd->add_flag("--verify", gen_verify, "also emulate and check against the reference convolution");
  gen_cmd->add_flag("--counters", gen_counters, "with --verify, write traffic counters JSON next to the kernels");

  // --- ai ---
  auto* ai_cmd = app.add_subcommand("ai", "arithmetic-intensity and roofline report for one op");
  std::string ai_op, ai_machine;
  ai_cmd->add_option("--op", ai_op, "op line")->required();
  ai_cmd->add_option("--machine", ai_machine, "machine model JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sweep_cmd) {
      machine_model_t const machine = machine_or_default(machine_path);
      tuning_t const tuning = tuning_or_default(tune_path);
      suite_t const suite = load_suite(suite_paths, batches, !no_dedup);
      sweep_config_t cfg;
      cfg.scale = scale;
      cfg.strict = strict;
      cfg.emit_dir = emit_dir;
      cfg.parallel_rows = parallel;
      cfg.emu.check_bounds = !fast;
      std::vector<report_row_t> const rows = sweep(suite, machine, tuning, cfg);
      std::string const report = emit_report(rows, report_format_from_str(format));
      if (out_path.empty()) {
        std::cout << report;
      } else {
        std::ofstream(out_path) << report;
      }
      int64_t fails = 0;
      for (report_row_t const& r : rows) { fails += r.verified ? 0 : 1; }
      std::cerr << strprintf("sweep: %zu ops, %lld verification failure(s)\n", rows.size(), (long long)fails);
      return fails && strict ? 1 : 0;
    }
    if (*gen_cmd) {
      machine_model_t const machine = machine_or_default(gen_machine);
      tuning_t const tuning = tuning_or_default(gen_tune);
      named_op_t const op = parse_op_line(op_line);
      blocking_overrides_t ov;
      std::optional<variant_t> pin;
      auto ti = tuning.ops.find(op.name);
      if (ti != tuning.ops.end()) {
        ov = ti->second.blocking;
        pin = ti->second.variant_pin;
      }
      variant_plan_t const plan = plan_conv(op.spec, machine, ov, pin, tuning.planner);
      std::vector<kernel_artifact_t> const stages = gen_conv_pipeline(plan, op.spec);
      emit_stages(stages, op, gen_emit);
      resource_estimate_t const res = estimate_resources(plan);
      std::cout << strprintf("variant=%s gemm_view=M%lld,N%lld,K%lld Mt=%lld Nt=%lld Kb=%lld Mb=%lld Nb=%lld Mg=%lld Ng=%lld\n",
                             variant_str(plan.variant), (long long)plan.gemm_view.m, (long long)plan.gemm_view.n,
                             (long long)plan.gemm_view.k, (long long)plan.blocking.mt, (long long)plan.blocking.nt,
                             (long long)plan.blocking.kb, (long long)plan.blocking.mb, (long long)plan.blocking.nb,
                             (long long)plan.blocking.mg, (long long)plan.blocking.ng);
      std::cout << strprintf("regs_est=%lld local_bytes=%lld wg_count=%lld threads_per_wg=%lld\n", (long long)res.regs_est,
                             (long long)res.local_bytes, (long long)res.wg_count, (long long)plan.blocking.threads_per_wg());
      if (gen_verify) {
        sweep_config_t vcfg;
        pipeline_result_t pr;
        report_row_t const row = verify_op(op, machine, tuning, vcfg, nullptr, &pr);
        std::cout << (row.verified ? "verify: pass\n" : "verify: FAIL: " + row.fail_reason + "\n");
        if (gen_counters) {
          std::string const cpath = gen_emit + "/" + op.name + ".counters.json";
          std::ofstream(cpath) << pr.counters.json() << "\n";
          std::cout << "wrote " << cpath << "\n";
        }
        return row.verified ? 0 : 1;
      }
      return 0;
    }
    if (*ai_cmd) {
      machine_model_t const machine = machine_or_default(ai_machine);
      named_op_t const op = parse_op_line(ai_op);
      conv_shapes_t const sh = infer_shapes(op.spec);
      gemm_view_t const v = gemm_view_of(op.spec);
      ai_report_t const direct = conv_ai(sh, lowering_t::direct, machine);
      ai_report_t const gemm = conv_ai(sh, lowering_t::im2col_gemm, machine);
      std::cout << strprintf("op %s: out %s, filts %s, inmat %s\n", op.name.c_str(), sh.out_dims.str().c_str(),
                             sh.filts_dims.str().c_str(), sh.inmat_dims.str().c_str());
      std::cout << strprintf("flops=%lld gemm_view=M%lld,N%lld,K%lld sgemm_ai=%.4f\n", (long long)sh.flops, (long long)v.m,
                             (long long)v.n, (long long)v.k, sgemm_ai(v.m, v.n, v.k));
      std::cout << strprintf("direct:      bytes_min=%lld ai=%.4f bound=%s roofline=%.1f GF/s\n", (long long)direct.bytes_min,
                             direct.ai, bound_kind_str(direct.predicted_bound),
                             roofline_point(direct.flops, direct.bytes_min, machine));
      std::cout << strprintf("im2col_gemm: bytes_min=%lld ai=%.4f bound=%s roofline=%.1f GF/s\n", (long long)gemm.bytes_min,
                             gemm.ai, bound_kind_str(gemm.predicted_bound),
                             roofline_point(gemm.flops, gemm.bytes_min, machine));
      std::cout << strprintf("machine %s: knee_ai=%.4f F/B\n", machine.name.c_str(), knee_ai(machine));
      return 0;
    }
  } catch (std::exception const& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

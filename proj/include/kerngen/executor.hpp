#ifndef KERNGEN_EXECUTOR_HPP
#define KERNGEN_EXECUTOR_HPP

#include <map>

#include "kerngen/codegen.hpp"

namespace kerngen {

struct emu_config_t {
  bool check_bounds = true;
  bool trap_nan = false;
  bool collect_counters = true;
  int64_t workgroup_parallelism = 1;  // workgroups are independent; results do not depend on this
};

// per-kernel-launch totals; one FMA counts as 2 FLOPs. per-buffer breakdowns
// support traffic comparisons between variants.
struct traffic_counters_t {
  int64_t global_loads_bytes = 0;
  int64_t global_stores_bytes = 0;
  int64_t local_loads_bytes = 0;
  int64_t local_stores_bytes = 0;
  int64_t fma_count = 0;
  int64_t barrier_count = 0;  // one per barrier execution per workgroup
  std::map<std::string, int64_t> loads_by_buffer;
  std::map<std::string, int64_t> stores_by_buffer;

  void merge(traffic_counters_t const& o);
  std::string json() const;
};

struct run_result_t {
  std::map<std::string, nda_t> outputs;
  traffic_counters_t counters;
};

// execute all Mg*Ng workgroups. threads within a workgroup run in lockstep
// between barriers with a fixed serialization, so outputs are bit-identical
// across runs and across workgroup_parallelism settings.
run_result_t run(kernel_artifact_t const& artifact, std::map<std::string, nda_t> const& inputs,
                 emu_config_t const& cfg = {});

struct pipeline_result_t {
  std::map<std::string, nda_t> outputs;  // final stage outputs (inputs unchanged when no stages)
  traffic_counters_t counters;           // merged across stages
  std::vector<traffic_counters_t> stage_counters;
};

// chain transform stage(s) then the compute stage; intermediates are wired by
// buffer name and allocated from artifact metadata
pipeline_result_t run_pipeline(std::vector<kernel_artifact_t> const& stages, std::map<std::string, nda_t> const& inputs,
                               emu_config_t const& cfg = {});

}  // namespace kerngen

#endif

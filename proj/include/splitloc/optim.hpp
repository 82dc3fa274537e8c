#pragma once
#include <cstdint>
#include <vector>

#include "splitloc/tensor.hpp"

namespace splitloc {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers aligned with a ParamSet's entries.
struct OptimizerState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    int64_t step = 0;

    static OptimizerState for_params(const ParamSet& params);
};

// One Adam update with bias correction. Reads each tensor's grad buffer
// (missing grads are treated as zero) and throws std::runtime_error naming
// the parameter if a gradient is not finite.
void adam_step(ParamSet& params, OptimizerState& state, double lr,
               const AdamConfig& cfg = {});

// One-cycle schedule: cosine ramp from max_lr/div_factor up to max_lr over
// the warmup fraction of steps, then cosine decay to max_lr/final_div.
double one_cycle_lr(int64_t step, int64_t total_steps, double max_lr,
                    double warmup_frac = 0.3, double div_factor = 25.0,
                    double final_div = 1e4);

} // namespace splitloc

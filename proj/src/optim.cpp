#include "splitloc/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace splitloc {

OptimizerState OptimizerState::for_params(const ParamSet& params) {
    OptimizerState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const auto& e : params.entries()) {
        st.m.emplace_back(e.tensor.data.size(), 0.0);
        st.v.emplace_back(e.tensor.data.size(), 0.0);
    }
    return st;
}

void adam_step(ParamSet& params, OptimizerState& state, double lr, const AdamConfig& cfg) {
    if (state.m.size() != params.size())
        throw std::invalid_argument("optimizer state does not match parameter set");
    ++state.step;
    const double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (size_t ei = 0; ei < params.size(); ++ei) {
        auto& e = params.entries()[ei];
        if (!e.tensor.requires_grad)
            continue;
        auto& m = state.m[ei];
        auto& v = state.v[ei];
        const bool has_grad = e.tensor.grad.size() == e.tensor.data.size();
        for (size_t i = 0; i < e.tensor.data.size(); ++i) {
            const double g = has_grad ? e.tensor.grad[i] : 0.0;
            if (!std::isfinite(g))
                throw std::runtime_error("non-finite gradient in parameter " + e.name);
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[i] / b1t;
            const double vhat = v[i] / b2t;
            e.tensor.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

double one_cycle_lr(int64_t step, int64_t total_steps, double max_lr, double warmup_frac,
                    double div_factor, double final_div) {
    if (total_steps <= 0)
        throw std::invalid_argument("one_cycle_lr: total_steps must be positive");
    if (step < 0 || step >= total_steps)
        throw std::invalid_argument("one_cycle_lr: step out of range");
    if (total_steps == 1)
        return max_lr;

    int64_t warm = static_cast<int64_t>(warmup_frac * static_cast<double>(total_steps));
    if (warm < 1)
        warm = 1;
    if (warm > total_steps - 1)
        warm = total_steps - 1;

    const double init_lr = max_lr / div_factor;
    const double final_lr = max_lr / final_div;
    if (step <= warm) {
        const double u = static_cast<double>(step) / static_cast<double>(warm);
        return init_lr + (max_lr - init_lr) * 0.5 * (1.0 - std::cos(std::numbers::pi * u));
    }
    const double u =
        static_cast<double>(step - warm) / static_cast<double>(total_steps - 1 - warm);
    return final_lr + (max_lr - final_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * u));
}

} // namespace splitloc

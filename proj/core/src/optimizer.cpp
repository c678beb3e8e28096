#include "pcmae/optimizer.hpp"

#include <cmath>
#include <numbers>

namespace pcmae::optim {

double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double base_lr, double min_lr) {
    if (warmup_steps >= total_steps)
        throw std::invalid_argument("lr schedule: warmup_steps (" + std::to_string(warmup_steps) +
                                    ") must be < total_steps (" + std::to_string(total_steps) + ")");
    if (step > total_steps)
        throw std::out_of_range("lr schedule: step " + std::to_string(step) + " beyond total_steps " +
                                std::to_string(total_steps));
    if (step < warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    const double progress =
        static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
    return min_lr + (base_lr - min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamWState AdamWState::zeros_like(const std::vector<NamedParam>& params) {
    AdamWState s;
    for (const auto& p : params) {
        s.m.emplace_back(p.tensor.size(), 0.0f);
        s.v.emplace_back(p.tensor.size(), 0.0f);
    }
    return s;
}

void adamw_step(std::vector<NamedParam>& params, AdamWState& state, double lr, const AdamWHyper& hp) {
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw std::invalid_argument("adamw: state holds " + std::to_string(state.m.size()) + " moments for " +
                                    std::to_string(params.size()) + " parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = params[i];
        if (!p.tensor.requires_grad())
            throw std::invalid_argument("adamw: parameter '" + p.name + "' has no gradient buffer");
        if (state.m[i].size() != p.tensor.size() || state.v[i].size() != p.tensor.size())
            throw std::invalid_argument("adamw: moment shape mismatch for '" + p.name + "'");
        const auto g = p.tensor.grad();
        for (std::size_t j = 0; j < g.size(); ++j)
            if (!std::isfinite(g[j]))
                throw NonFiniteError("adamw: non-finite gradient " + std::to_string(g[j]) + " in '" + p.name +
                                     "' at element " + std::to_string(j) + " (step " + std::to_string(state.t + 1) +
                                     ")");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        auto w = p.tensor.values();
        const auto g = p.tensor.grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        const double decay = p.decay ? 1.0 - lr * hp.weight_decay : 1.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = g[j];
            m[j] = static_cast<float>(hp.beta1 * m[j] + (1.0 - hp.beta1) * gj);
            v[j] = static_cast<float>(hp.beta2 * v[j] + (1.0 - hp.beta2) * gj * gj);
            const double mhat = m[j] / bc1, vhat = v[j] / bc2;
            w[j] = static_cast<float>(w[j] * decay - lr * mhat / (std::sqrt(vhat) + hp.eps));
        }
    }
}

}  // namespace pcmae::optim

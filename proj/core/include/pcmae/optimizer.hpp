#pragma once

#include "pcmae/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcmae::optim {

/// Linear warmup from 0 to base_lr over warmup_steps, then half-cosine decay
/// from base_lr to min_lr at total_steps. Throws std::invalid_argument when
/// warmup_steps >= total_steps and std::out_of_range when step > total_steps.
double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double base_lr, double min_lr);

/// A gradient or parameter became NaN/inf; the message names the tensor.
struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NamedParam {
    std::string name;
    ad::Tensor<float> tensor;
    bool decay = true;
};

struct AdamWHyper {
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamWState {
    std::uint64_t t = 0;                // completed steps
    std::vector<std::vector<float>> m;  // aligned with the parameter list
    std::vector<std::vector<float>> v;

    static AdamWState zeros_like(const std::vector<NamedParam>& params);
};

/// One AdamW update with decoupled decay: theta *= (1 - lr wd) for decayed
/// tensors, then theta -= lr * m_hat / (sqrt(v_hat) + eps). Validates every
/// gradient before touching any state.
void adamw_step(std::vector<NamedParam>& params, AdamWState& state, double lr, const AdamWHyper& hp);

}  // namespace pcmae::optim

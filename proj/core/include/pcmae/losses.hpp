#pragma once

#include "pcmae/model.hpp"
#include "pcmae/tensor.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace pcmae::losses {

/// Symmetric l2 Chamfer distance, both directions normalized by their point
/// counts, averaged over patches. pred is [m x kp x 3], gt is [m x kg x 3].
/// Nearest-neighbour pairings are fixed per call; gradients flow through the
/// coordinates of both sets. m = 0 gives 0.
template <typename T>
ad::Tensor<T> chamfer_l2(ad::Tape<T>& tape, const ad::Tensor<T>& pred, const ad::Tensor<T>& gt);

/// Mean of 1 - cos(h1[i], h2[i]) over the row indices in `comask`; 0 when the
/// co-mask is empty. Norms are clamped below at 1e-8.
template <typename T>
ad::Tensor<T> contrastive_loss(ad::Tape<T>& tape, const ad::Tensor<T>& h1, const ad::Tensor<T>& h2,
                               std::span<const std::size_t> comask);

/// Per-sample contrastive loss averaged over the batch. h1/h2 are decoder
/// outputs in each branch's [visible, masked] layout; they are reordered to
/// original token order before comparison.
template <typename T>
ad::Tensor<T> contrastive_loss_batched(ad::Tape<T>& tape, const ad::Tensor<T>& h1, const ad::Tensor<T>& h2,
                                       const std::vector<masking::DualMask>& masks);

struct LossReport {
    double recon1 = 0;
    double recon2 = 0;
    double contras = 0;
    double total = 0;
    std::size_t comask_count = 0;
    bool has_recon2 = true;
    bool has_contras = true;
};

/// recon1 + recon2 + lambda * contras, dropping terms disabled by the toggles.
/// Throws std::invalid_argument for negative or non-finite lambda.
LossReport total_loss(double recon1, double recon2, double contras, double lambda, bool dual_mask,
                      bool contrastive, std::size_t comask_count = 0);

template <typename T>
struct PretrainLoss {
    ad::Tensor<T> total;  // scalar, differentiable
    LossReport report;
};

template <typename T>
PretrainLoss<T> pretrain_loss(ad::Tape<T>& tape, const model::PretrainOutput<T>& out, const ModelConfig& cfg);

}  // namespace pcmae::losses

#pragma once

#include "pcmae/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace pcmae::masking {

/// Two equal-cardinality masks over n tokens. All index lists are ascending.
struct DualMask {
    std::size_t n = 0;
    double ratio = 0;
    std::vector<std::size_t> m1, m2;
    std::vector<std::size_t> visible1, visible2;
    std::vector<std::size_t> comask;  // m1 ∩ m2

    std::size_t masked_count() const noexcept { return m1.size(); }
    std::size_t visible_count() const noexcept { return n - m1.size(); }
    /// Token order fed to decoder 1: [visible1..., m1...].
    std::vector<std::size_t> order1() const;
    std::vector<std::size_t> order2() const;
};

/// floor(r * n), robust to representation error in r (0.29 * 100 -> 29).
std::size_t mask_count(std::size_t n, double ratio);

/// Two independent fixed-count draws; m2 is redrawn while it equals m1 unless
/// the cardinality forces equality (0 or n).
DualMask generate_dual_mask(std::size_t n, double ratio, std::uint64_t seed);

/// Single-mask variant used by the Point-MAE baseline: m2 := m1.
DualMask generate_single_mask(std::size_t n, double ratio, std::uint64_t seed);

/// 1 - (1 - r^2)^n: chance that at least one token is masked twice when every
/// token is masked independently with probability r in each mask.
double comask_probability(std::size_t n, double ratio);

enum class MaskModel { bernoulli, fixed_count };

MaskModel parse_mask_model(std::string_view name);
std::string_view to_string(MaskModel model);

struct McEstimate {
    double probability = 0;  // fraction of trials with a nonempty co-mask
    double stderr_ = 0;      // binomial standard error of `probability`
    double mean_comask = 0;
    double stddev_comask = 0;
    std::size_t trials = 0;
};

McEstimate comask_probability_mc(std::size_t n, double ratio, std::size_t trials,
                                 std::uint64_t seed, MaskModel mode);

/// Inverse of a permutation of [0, t). Throws std::invalid_argument otherwise.
std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm);

/// Undo the [visible, masked] layout: output row indices[j] = input row j.
template <typename T>
ad::Tensor<T> reorder(ad::Tape<T>& tape, std::span<const std::size_t> indices, const ad::Tensor<T>& h);

/// Same, for `orders.size()` sequences stacked along the first axis.
template <typename T>
ad::Tensor<T> reorder_batched(ad::Tape<T>& tape, const std::vector<std::vector<std::size_t>>& orders,
                              const ad::Tensor<T>& h);

}  // namespace pcmae::masking

#include "pcmae/masking.hpp"

#include "pcmae/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pcmae::masking {

namespace {

void check_args(std::size_t n, double ratio) {
    if (n == 0) throw std::invalid_argument("mask: token count must be >= 1");
    if (!(ratio >= 0.0 && ratio <= 1.0))
        throw std::invalid_argument("mask: ratio must lie in [0, 1], got " + std::to_string(ratio));
}

std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& sorted) {
    std::vector<std::size_t> out;
    out.reserve(n - sorted.size());
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (j < sorted.size() && sorted[j] == i)
            ++j;
        else
            out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> draw_sorted(Rng& rng, std::size_t n, std::size_t count) {
    auto m = rng.sample_without_replacement(n, count);
    std::sort(m.begin(), m.end());
    return m;
}

void fill_derived(DualMask& mask) {
    mask.visible1 = complement(mask.n, mask.m1);
    mask.visible2 = complement(mask.n, mask.m2);
    mask.comask.clear();
    std::set_intersection(mask.m1.begin(), mask.m1.end(), mask.m2.begin(), mask.m2.end(),
                          std::back_inserter(mask.comask));
}

std::vector<std::size_t> concat(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    std::vector<std::size_t> out(a);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

}  // namespace

std::vector<std::size_t> DualMask::order1() const { return concat(visible1, m1); }
std::vector<std::size_t> DualMask::order2() const { return concat(visible2, m2); }

std::size_t mask_count(std::size_t n, double ratio) {
    check_args(n, ratio);
    const auto c = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
    return std::min(c, n);
}

DualMask generate_dual_mask(std::size_t n, double ratio, std::uint64_t seed) {
    const std::size_t count = mask_count(n, ratio);
    Rng rng(seed);
    DualMask mask;
    mask.n = n;
    mask.ratio = ratio;
    mask.m1 = draw_sorted(rng, n, count);
    mask.m2 = draw_sorted(rng, n, count);
    if (count != 0 && count != n)
        while (mask.m2 == mask.m1) mask.m2 = draw_sorted(rng, n, count);
    fill_derived(mask);
    return mask;
}

DualMask generate_single_mask(std::size_t n, double ratio, std::uint64_t seed) {
    const std::size_t count = mask_count(n, ratio);
    Rng rng(seed);
    DualMask mask;
    mask.n = n;
    mask.ratio = ratio;
    mask.m1 = draw_sorted(rng, n, count);
    mask.m2 = mask.m1;
    fill_derived(mask);
    return mask;
}

double comask_probability(std::size_t n, double ratio) {
    check_args(n, ratio);
    // -expm1(n * log1p(-r^2)) keeps precision when the result is near 0.
    const double r2 = ratio * ratio;
    if (r2 >= 1.0) return 1.0;
    return -std::expm1(static_cast<double>(n) * std::log1p(-r2));
}

MaskModel parse_mask_model(std::string_view name) {
    if (name == "bernoulli") return MaskModel::bernoulli;
    if (name == "fixed" || name == "fixed_count" || name == "fixed-count") return MaskModel::fixed_count;
    throw std::invalid_argument("unknown mask model '" + std::string(name) +
                                "' (expected bernoulli or fixed)");
}

std::string_view to_string(MaskModel model) {
    return model == MaskModel::bernoulli ? "bernoulli" : "fixed";
}

McEstimate comask_probability_mc(std::size_t n, double ratio, std::size_t trials,
                                 std::uint64_t seed, MaskModel mode) {
    check_args(n, ratio);
    if (trials == 0) throw std::invalid_argument("comask_probability_mc: trials must be >= 1");
    std::size_t hits = 0;
    double sum = 0, sum_sq = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        std::size_t co = 0;
        if (mode == MaskModel::bernoulli) {
            Rng rng(derive_seed(seed, t));
            for (std::size_t i = 0; i < n; ++i) {
                const bool a = rng.uniform() < ratio;
                const bool b = rng.uniform() < ratio;
                co += (a && b) ? 1 : 0;
            }
        } else {
            co = generate_dual_mask(n, ratio, derive_seed(seed, t)).comask.size();
        }
        hits += co > 0 ? 1 : 0;
        sum += static_cast<double>(co);
        sum_sq += static_cast<double>(co) * static_cast<double>(co);
    }
    McEstimate est;
    est.trials = trials;
    est.probability = static_cast<double>(hits) / static_cast<double>(trials);
    est.stderr_ = std::sqrt(est.probability * (1.0 - est.probability) / static_cast<double>(trials));
    est.mean_comask = sum / static_cast<double>(trials);
    const double var = trials > 1 ? (sum_sq - sum * est.mean_comask) / static_cast<double>(trials - 1) : 0.0;
    est.stddev_comask = std::sqrt(std::max(0.0, var));
    return est;
}

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
    const std::size_t t = perm.size();
    std::vector<std::size_t> inv(t, t);
    for (std::size_t j = 0; j < t; ++j) {
        if (perm[j] >= t || inv[perm[j]] != t)
            throw std::invalid_argument("reorder: indices are not a permutation of [0," +
                                        std::to_string(t) + ")");
        inv[perm[j]] = j;
    }
    return inv;
}

template <typename T>
ad::Tensor<T> reorder(ad::Tape<T>& tape, std::span<const std::size_t> indices, const ad::Tensor<T>& h) {
    if (indices.size() != h.rows())
        throw ad::DimensionError("reorder: " + std::to_string(indices.size()) + " indices for " +
                                 std::to_string(h.rows()) + " rows");
    const auto inv = inverse_permutation(indices);
    return ad::gather_rows(tape, h, std::span<const std::size_t>(inv));
}

template <typename T>
ad::Tensor<T> reorder_batched(ad::Tape<T>& tape, const std::vector<std::vector<std::size_t>>& orders,
                              const ad::Tensor<T>& h) {
    std::vector<std::size_t> global;
    global.reserve(h.rows());
    std::size_t offset = 0;
    for (const auto& order : orders) {
        for (std::size_t j : inverse_permutation(order)) global.push_back(offset + j);
        offset += order.size();
    }
    if (offset != h.rows())
        throw ad::DimensionError("reorder_batched: orders cover " + std::to_string(offset) +
                                 " rows, tensor has " + std::to_string(h.rows()));
    return ad::gather_rows(tape, h, std::span<const std::size_t>(global));
}

template ad::Tensor<float> reorder(ad::Tape<float>&, std::span<const std::size_t>, const ad::Tensor<float>&);
template ad::Tensor<double> reorder(ad::Tape<double>&, std::span<const std::size_t>, const ad::Tensor<double>&);
template ad::Tensor<float> reorder_batched(ad::Tape<float>&, const std::vector<std::vector<std::size_t>>&,
                                           const ad::Tensor<float>&);
template ad::Tensor<double> reorder_batched(ad::Tape<double>&, const std::vector<std::vector<std::size_t>>&,
                                            const ad::Tensor<double>&);

}  // namespace pcmae::masking

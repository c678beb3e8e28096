#include "pcmae/losses.hpp"

#include "pcmae/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pcmae::losses {

namespace {

constexpr double kCosEps = 1e-8;

template <typename T>
std::vector<geometry::Vec3> to_points(std::span<const T> v) {
    std::vector<geometry::Vec3> out(v.size() / 3);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = {static_cast<double>(v[3 * i]), static_cast<double>(v[3 * i + 1]),
                  static_cast<double>(v[3 * i + 2])};
    return out;
}

template <typename T>
void require_patches(const ad::Tensor<T>& t, const char* what) {
    if (t.rank() != 3 || t.extent(2) != 3)
        throw ad::DimensionError(std::string("chamfer_l2: ") + what + " must be [m x k x 3], got " +
                                 ad::to_string(t.shape()));
}

// sum_i w_i * (1 - cos(a[rows_i], b[rows_i]))
template <typename T>
ad::Tensor<T> weighted_cosine_distance(ad::Tape<T>& tape, const ad::Tensor<T>& a, const ad::Tensor<T>& b,
                                       std::vector<std::size_t> rows, std::vector<double> weights) {
    if (a.shape() != b.shape() || a.rank() != 2)
        throw ad::DimensionError("contrastive_loss: features must be matching [n x C], got " +
                                 ad::to_string(a.shape()) + " and " + ad::to_string(b.shape()));
    const std::size_t c = a.cols();
    for (std::size_t r : rows)
        if (r >= a.rows())
            throw ad::IndexError("contrastive_loss: co-mask index " + std::to_string(r) + " out of range for " +
                                 std::to_string(a.rows()) + " tokens");
    struct Saved {
        double na, nb, dot;
    };
    std::vector<Saved> saved(rows.size());
    double loss = 0;
    const auto av = a.values(), bv = b.values();
    for (std::size_t j = 0; j < rows.size(); ++j) {
        const T* x = av.data() + rows[j] * c;
        const T* y = bv.data() + rows[j] * c;
        double na = 0, nb = 0, dot = 0;
        for (std::size_t q = 0; q < c; ++q) {
            na += double(x[q]) * x[q];
            nb += double(y[q]) * y[q];
            dot += double(x[q]) * y[q];
        }
        saved[j] = {std::sqrt(na), std::sqrt(nb), dot};
        const double cos = dot / (std::max(saved[j].na, kCosEps) * std::max(saved[j].nb, kCosEps));
        loss += weights[j] * (1.0 - cos);
    }
    auto out = ad::Tensor<T>::scalar(static_cast<T>(loss));
    tape.record({a, b}, out,
                [an = a.node(), bn = b.node(), on = out.node(), rows = std::move(rows),
                 weights = std::move(weights), saved = std::move(saved), c] {
                    const double g = on->grad[0];
                    for (std::size_t j = 0; j < rows.size(); ++j) {
                        const auto [na, nb, dot] = saved[j];
                        const double ca = std::max(na, kCosEps), cb = std::max(nb, kCosEps);
                        const double coef = -g * weights[j];
                        const double cos = dot / (ca * cb);
                        const std::size_t off = rows[j] * c;
                        // d cos / dx = y / (ca cb) - [na > eps] cos x / na^2
                        for (std::size_t q = 0; q < c; ++q) {
                            const double x = an->value[off + q], y = bn->value[off + q];
                            if (an->requires_grad) {
                                double d = y / (ca * cb);
                                if (na > kCosEps) d -= cos * x / (na * na);
                                an->grad[off + q] += static_cast<T>(coef * d);
                            }
                            if (bn->requires_grad) {
                                double d = x / (ca * cb);
                                if (nb > kCosEps) d -= cos * y / (nb * nb);
                                bn->grad[off + q] += static_cast<T>(coef * d);
                            }
                        }
                    }
                });
    return out;
}

}  // namespace

template <typename T>
ad::Tensor<T> chamfer_l2(ad::Tape<T>& tape, const ad::Tensor<T>& pred, const ad::Tensor<T>& gt) {
    require_patches(pred, "pred");
    require_patches(gt, "gt");
    const std::size_t m = pred.extent(0), kp = pred.extent(1), kg = gt.extent(1);
    if (gt.extent(0) != m)
        throw ad::DimensionError("chamfer_l2: " + std::to_string(m) + " predicted patches vs " +
                                 std::to_string(gt.extent(0)) + " ground-truth patches");
    if (m == 0) return ad::Tensor<T>::scalar(T(0));
    if (kp == 0 || kg == 0) throw std::invalid_argument("chamfer_l2: empty patch");

    std::vector<geometry::Correspondences> corr(m);
    double loss = 0;
    const auto pv = pred.values(), gv = gt.values();
    for (std::size_t p = 0; p < m; ++p) {
        const auto r = to_points<T>(pv.subspan(p * kp * 3, kp * 3));
        const auto g = to_points<T>(gv.subspan(p * kg * 3, kg * 3));
        corr[p] = geometry::chamfer_correspondences(r, g);
        double fwd = 0, bwd = 0;
        for (std::size_t i = 0; i < kp; ++i) fwd += geometry::squared_distance(r[i], g[corr[p].r_to_g[i]]);
        for (std::size_t j = 0; j < kg; ++j) bwd += geometry::squared_distance(g[j], r[corr[p].g_to_r[j]]);
        loss += fwd / double(kp) + bwd / double(kg);
    }
    loss /= double(m);
    auto out = ad::Tensor<T>::scalar(static_cast<T>(loss));
    tape.record({pred, gt}, out, [pn = pred.node(), gn = gt.node(), on = out.node(), corr = std::move(corr), m, kp, kg] {
        const double g = on->grad[0] / double(m);
        auto pair = [&](std::size_t pi, std::size_t gi, double w) {
            for (std::size_t d = 0; d < 3; ++d) {
                const double diff = double(pn->value[pi * 3 + d]) - double(gn->value[gi * 3 + d]);
                if (pn->requires_grad) pn->grad[pi * 3 + d] += static_cast<T>(2 * w * diff);
                if (gn->requires_grad) gn->grad[gi * 3 + d] -= static_cast<T>(2 * w * diff);
            }
        };
        for (std::size_t p = 0; p < m; ++p) {
            for (std::size_t i = 0; i < kp; ++i) pair(p * kp + i, p * kg + corr[p].r_to_g[i], g / double(kp));
            for (std::size_t j = 0; j < kg; ++j) pair(p * kp + corr[p].g_to_r[j], p * kg + j, g / double(kg));
        }
    });
    return out;
}

template <typename T>
ad::Tensor<T> contrastive_loss(ad::Tape<T>& tape, const ad::Tensor<T>& h1, const ad::Tensor<T>& h2,
                               std::span<const std::size_t> comask) {
    std::vector<std::size_t> rows(comask.begin(), comask.end());
    std::vector<double> weights(rows.size(), rows.empty() ? 0.0 : 1.0 / double(rows.size()));
    return weighted_cosine_distance(tape, h1, h2, std::move(rows), std::move(weights));
}

template <typename T>
ad::Tensor<T> contrastive_loss_batched(ad::Tape<T>& tape, const ad::Tensor<T>& h1, const ad::Tensor<T>& h2,
                                       const std::vector<masking::DualMask>& masks) {
    if (masks.empty()) throw std::invalid_argument("contrastive_loss_batched: no masks");
    std::vector<std::vector<std::size_t>> o1, o2;
    for (const auto& m : masks) {
        o1.push_back(m.order1());
        o2.push_back(m.order2());
    }
    const auto r1 = masking::reorder_batched(tape, o1, h1);
    const auto r2 = masking::reorder_batched(tape, o2, h2);
    std::vector<std::size_t> rows;
    std::vector<double> weights;
    std::size_t offset = 0;
    for (const auto& m : masks) {
        for (std::size_t i : m.comask) {
            rows.push_back(offset + i);
            weights.push_back(1.0 / (double(m.comask.size()) * double(masks.size())));
        }
        offset += m.n;
    }
    return weighted_cosine_distance(tape, r1, r2, std::move(rows), std::move(weights));
}

LossReport total_loss(double recon1, double recon2, double contras, double lambda, bool dual_mask,
                      bool contrastive, std::size_t comask_count) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("total_loss: lambda must be finite and >= 0, got " + std::to_string(lambda));
    LossReport r;
    r.recon1 = recon1;
    r.has_recon2 = dual_mask;
    r.has_contras = dual_mask && contrastive;
    r.recon2 = r.has_recon2 ? recon2 : 0.0;
    r.contras = r.has_contras ? contras : 0.0;
    r.comask_count = r.has_contras ? comask_count : 0;
    r.total = r.recon1 + r.recon2 + lambda * r.contras;
    return r;
}

template <typename T>
PretrainLoss<T> pretrain_loss(ad::Tape<T>& tape, const model::PretrainOutput<T>& out, const ModelConfig& cfg) {
    PretrainLoss<T> result;
    auto total = chamfer_l2(tape, out.pred1, out.gt1);
    const double recon1 = total.item();
    double recon2 = 0, contras = 0;
    std::size_t comask = 0;
    if (cfg.dual_mask) {
        auto r2 = chamfer_l2(tape, out.pred2, out.gt2);
        recon2 = r2.item();
        total = ad::add(tape, total, r2);
        if (cfg.contrastive) {
            auto c = contrastive_loss_batched(tape, out.h1, out.h2, out.masks);
            contras = c.item();
            for (const auto& m : out.masks) comask += m.comask.size();
            total = ad::add(tape, total, ad::scale(tape, c, static_cast<T>(cfg.lambda)));
        }
    }
    result.total = total;
    result.report = total_loss(recon1, recon2, contras, cfg.lambda, cfg.dual_mask, cfg.contrastive, comask);
    return result;
}

#define PCMAE_LOSSES_INSTANTIATE(T)                                                                          \
    template ad::Tensor<T> chamfer_l2(ad::Tape<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&);             \
    template ad::Tensor<T> contrastive_loss(ad::Tape<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&,        \
                                            std::span<const std::size_t>);                                   \
    template ad::Tensor<T> contrastive_loss_batched(ad::Tape<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&, \
                                                    const std::vector<masking::DualMask>&);                  \
    template PretrainLoss<T> pretrain_loss(ad::Tape<T>&, const model::PretrainOutput<T>&, const ModelConfig&);

PCMAE_LOSSES_INSTANTIATE(float)
PCMAE_LOSSES_INSTANTIATE(double)

#undef PCMAE_LOSSES_INSTANTIATE

}  // namespace pcmae::losses

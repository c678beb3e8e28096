#include "pcmae/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace pcmae::ad {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                             " vs " + to_string(b.shape()));
}

template <typename T>
void require_rank2(const Tensor<T>& a, const char* op) {
    if (a.rank() != 2)
        throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " +
                             to_string(a.shape()));
}

template <typename T>
void accumulate(std::vector<T>& dst, std::span<const T> src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<Node<T>>()) {
    if (numel(shape) != values.size())
        throw DimensionError("Tensor: shape " + to_string(shape) + " holds " +
                             std::to_string(numel(shape)) + " values, got " +
                             std::to_string(values.size()));
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    set_requires_grad(requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    const std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    const std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::extent(std::size_t axis) const {
    if (axis >= rank())
        throw DimensionError("extent: axis " + std::to_string(axis) + " out of range for " +
                             to_string(shape()));
    return node_->shape[axis];
}

template <typename T>
std::size_t Tensor<T>::row_width() const {
    std::size_t w = 1;
    for (std::size_t i = 1; i < node_->shape.size(); ++i) w *= node_->shape[i];
    return w;
}

template <typename T>
T Tensor<T>::item() const {
    if (size() != 1)
        throw ContractError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
    return node_->value[0];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
    node_->requires_grad = on;
    if (on)
        node_->grad.assign(node_->value.size(), T(0));
    else
        node_->grad.clear();
}

template <typename T>
void Tensor<T>::zero_grad() {
    std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
bool Tensor<T>::all_finite() const {
    return std::all_of(node_->value.begin(), node_->value.end(),
                       [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(node_->shape, node_->value, false);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    return Tensor(std::move(shape), node_->value, false);
}

// ---- Tape ------------------------------------------------------------------

template <typename T>
void Tape<T>::record(std::initializer_list<Tensor<T>> inputs, Tensor<T>& out, BackwardFn fn) {
    if (consumed_) throw StateError("tape: ops recorded after backward; use a fresh tape");
    if (!recording()) return;
    const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor<T>& t) { return t.requires_grad(); });
    if (!needs) return;
    out.set_requires_grad(true);
    entries_.push_back(Entry{out.node(), std::move(fn)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    if (consumed_) throw StateError("tape: backward already ran on this tape");
    if (loss.size() != 1)
        throw ContractError("backward: loss must be a scalar, got shape " +
                            to_string(loss.shape()));
    if (!loss.requires_grad())
        throw ContractError("backward: loss does not depend on any tensor requiring grad");
    consumed_ = true;
    loss.node()->grad[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();
    entries_.clear();
}

// ---- ops -------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.extent(0), k = a.extent(1), p = b.extent(1);
    if (b.extent(0) != k)
        throw DimensionError("matmul: inner extents disagree " + to_string(a.shape()) + " x " +
                             to_string(b.shape()));
    auto out = Tensor<T>::zeros({m, p});
    ConstMapMat<T> A(a.values().data(), m, k), B(b.values().data(), k, p);
    MapMat<T> C(out.values().data(), m, p);
    C.noalias() = A * B;
    tape.record({a, b}, out, [an = a.node(), bn = b.node(), on = out.node(), m, k, p] {
        ConstMapMat<T> dC(on->grad.data(), m, p);
        if (an->requires_grad) {
            MapMat<T> dA(an->grad.data(), m, k);
            dA.noalias() += dC * ConstMapMat<T>(bn->value.data(), k, p).transpose();
        }
        if (bn->requires_grad) {
            MapMat<T> dB(bn->grad.data(), k, p);
            dB.noalias() += ConstMapMat<T>(an->value.data(), m, k).transpose() * dC;
        }
    });
    return out;
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    auto out = Tensor<T>::zeros(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    tape.record({a, b}, out, [an = a.node(), bn = b.node(), on = out.node()] {
        if (an->requires_grad) accumulate<T>(an->grad, on->grad);
        if (bn->requires_grad) accumulate<T>(bn->grad, on->grad);
    });
    return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    auto out = Tensor<T>::zeros(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    tape.record({a, b}, out, [an = a.node(), bn = b.node(), on = out.node()] {
        const std::size_t n = on->grad.size();
        if (an->requires_grad)
            for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i] * bn->value[i];
        if (bn->requires_grad)
            for (std::size_t i = 0; i < n; ++i) bn->grad[i] += on->grad[i] * an->value[i];
    });
    return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor) {
    auto out = Tensor<T>::zeros(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
    tape.record({a}, out, [an = a.node(), on = out.node(), factor] {
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * factor;
    });
    return out;
}

template <typename T>
Tensor<T> add_row(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& row) {
    const std::size_t c = x.cols();
    if (row.size() != c)
        throw DimensionError("add_row: row of " + std::to_string(row.size()) +
                             " elements for last extent " + std::to_string(c));
    const std::size_t r = x.size() / c;
    auto out = Tensor<T>::zeros(x.shape());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] + row[j];
    tape.record({x, row}, out, [xn = x.node(), bn = row.node(), on = out.node(), r, c] {
        if (xn->requires_grad) accumulate<T>(xn->grad, on->grad);
        if (bn->requires_grad)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) bn->grad[j] += on->grad[i * c + j];
    });
    return out;
}

template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    return add_row(tape, matmul(tape, x, weight), bias);
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a) {
    T acc = 0;
    for (T v : a.values()) acc += v;
    auto out = Tensor<T>::scalar(acc);
    tape.record({a}, out, [an = a.node(), on = out.node()] {
        const T g = on->grad[0];
        for (T& d : an->grad) d += g;
    });
    return out;
}

template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& a) {
    return scale(tape, sum(tape, a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> gelu(Tape<T>& tape, const Tensor<T>& a) {
    auto out = Tensor<T>::zeros(a.shape());
    constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T x = a[i];
        out[i] = x * T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
    }
    tape.record({a}, out, [an = a.node(), on = out.node()] {
        constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
        for (std::size_t i = 0; i < on->grad.size(); ++i) {
            const T x = an->value[i];
            const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
            const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
            an->grad[i] += on->grad[i] * (cdf + x * pdf);
        }
    });
    return out;
}

template <typename T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x, std::size_t axis) {
    const std::size_t d = x.extent(axis);
    if (d == 0) throw DimensionError("softmax: empty axis " + std::to_string(axis));
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.extent(i);
    const std::size_t outer = x.size() / (d * inner);
    auto out = Tensor<T>::zeros(x.shape());
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * d * inner + in;
            T mx = x[base];
            for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, x[base + j * inner]);
            T z = 0;
            for (std::size_t j = 0; j < d; ++j) {
                const T e = std::exp(x[base + j * inner] - mx);
                out[base + j * inner] = e;
                z += e;
            }
            for (std::size_t j = 0; j < d; ++j) out[base + j * inner] /= z;
        }
    tape.record({x}, out, [xn = x.node(), on = out.node(), d, inner, outer] {
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * d * inner + in;
                T dot = 0;
                for (std::size_t j = 0; j < d; ++j)
                    dot += on->grad[base + j * inner] * on->value[base + j * inner];
                for (std::size_t j = 0; j < d; ++j) {
                    const std::size_t q = base + j * inner;
                    xn->grad[q] += on->value[q] * (on->grad[q] - dot);
                }
            }
    });
    return out;
}

template <typename T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps) {
    const std::size_t c = x.cols();
    if (gain.size() != c || bias.size() != c)
        throw DimensionError("layer_norm: gain/bias must have " + std::to_string(c) + " elements");
    if (!(eps > T(0))) throw std::invalid_argument("layer_norm: eps must be positive");
    const std::size_t r = x.size() / c;
    auto out = Tensor<T>::zeros(x.shape());
    std::vector<T> xhat(x.size()), rstd(r);
    for (std::size_t i = 0; i < r; ++i) {
        const T* row = x.values().data() + i * c;
        T mu = 0;
        for (std::size_t j = 0; j < c; ++j) mu += row[j];
        mu /= static_cast<T>(c);
        T var = 0;
        for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<T>(c);
        rstd[i] = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            xhat[i * c + j] = (row[j] - mu) * rstd[i];
            out[i * c + j] = xhat[i * c + j] * gain[j] + bias[j];
        }
    }
    tape.record({x, gain, bias},
                out, [xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node(),
                      xhat = std::move(xhat), rstd = std::move(rstd), r, c] {
                    std::vector<T> dxhat(c);
                    for (std::size_t i = 0; i < r; ++i) {
                        const T* dy = on->grad.data() + i * c;
                        const T* xh = xhat.data() + i * c;
                        if (gn->requires_grad)
                            for (std::size_t j = 0; j < c; ++j) gn->grad[j] += dy[j] * xh[j];
                        if (bn->requires_grad)
                            for (std::size_t j = 0; j < c; ++j) bn->grad[j] += dy[j];
                        if (!xn->requires_grad) continue;
                        T m1 = 0, m2 = 0;
                        for (std::size_t j = 0; j < c; ++j) {
                            dxhat[j] = dy[j] * gn->value[j];
                            m1 += dxhat[j];
                            m2 += dxhat[j] * xh[j];
                        }
                        m1 /= static_cast<T>(c);
                        m2 /= static_cast<T>(c);
                        for (std::size_t j = 0; j < c; ++j)
                            xn->grad[i * c + j] += rstd[i] * (dxhat[j] - m1 - xh[j] * m2);
                    }
                });
    return out;
}

template <typename T>
Tensor<T> gather_rows(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> idx) {
    const std::size_t n = x.rows(), w = x.row_width();
    for (std::size_t i : idx)
        if (i >= n)
            throw IndexError("gather_rows: index " + std::to_string(i) + " out of range [0," +
                             std::to_string(n) + ")");
    Shape shape = x.shape();
    if (shape.empty()) shape = {1};
    shape[0] = idx.size();
    auto out = Tensor<T>::zeros(shape);
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy_n(x.values().data() + idx[r] * w, w, out.values().data() + r * w);
    tape.record({x}, out,
                [xn = x.node(), on = out.node(), ids = std::vector<std::size_t>(idx.begin(), idx.end()), w] {
                    for (std::size_t r = 0; r < ids.size(); ++r)
                        for (std::size_t j = 0; j < w; ++j)
                            xn->grad[ids[r] * w + j] += on->grad[r * w + j];
                });
    return out;
}

template <typename T>
Tensor<T> concat_rows(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != b.rank() || a.row_width() != b.row_width() ||
        !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1))
        throw DimensionError("concat_rows: incompatible shapes " + to_string(a.shape()) + " and " +
                             to_string(b.shape()));
    Shape shape = a.shape();
    shape[0] += b.rows();
    auto out = Tensor<T>::zeros(shape);
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    std::copy(b.values().begin(), b.values().end(), out.values().begin() + a.size());
    tape.record({a, b}, out, [an = a.node(), bn = b.node(), on = out.node()] {
        const std::size_t na = an->value.size();
        if (an->requires_grad)
            for (std::size_t i = 0; i < na; ++i) an->grad[i] += on->grad[i];
        if (bn->requires_grad)
            for (std::size_t i = 0; i < bn->value.size(); ++i) bn->grad[i] += on->grad[na + i];
    });
    return out;
}

template <typename T>
Tensor<T> concat_cols(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_rank2(a, "concat_cols");
    require_rank2(b, "concat_cols");
    if (a.rows() != b.rows())
        throw DimensionError("concat_cols: row counts differ " + to_string(a.shape()) + " and " +
                             to_string(b.shape()));
    const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols(), c = ca + cb;
    auto out = Tensor<T>::zeros({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(a.values().data() + i * ca, ca, out.values().data() + i * c);
        std::copy_n(b.values().data() + i * cb, cb, out.values().data() + i * c + ca);
    }
    tape.record({a, b}, out, [an = a.node(), bn = b.node(), on = out.node(), r, ca, cb, c] {
        for (std::size_t i = 0; i < r; ++i) {
            if (an->requires_grad)
                for (std::size_t j = 0; j < ca; ++j) an->grad[i * ca + j] += on->grad[i * c + j];
            if (bn->requires_grad)
                for (std::size_t j = 0; j < cb; ++j) bn->grad[i * cb + j] += on->grad[i * c + ca + j];
        }
    });
    return out;
}

template <typename T>
Tensor<T> group_max(Tape<T>& tape, const Tensor<T>& x, std::size_t group) {
    require_rank2(x, "group_max");
    if (group == 0 || x.rows() % group != 0)
        throw DimensionError("group_max: " + std::to_string(x.rows()) +
                             " rows not divisible into groups of " + std::to_string(group));
    const std::size_t g = x.rows() / group, c = x.cols();
    auto out = Tensor<T>::zeros({g, c});
    std::vector<std::size_t> arg(g * c);
    for (std::size_t b = 0; b < g; ++b)
        for (std::size_t j = 0; j < c; ++j) {
            std::size_t best = b * group;
            for (std::size_t r = b * group + 1; r < (b + 1) * group; ++r)
                if (x[r * c + j] > x[best * c + j]) best = r;
            arg[b * c + j] = best;
            out[b * c + j] = x[best * c + j];
        }
    tape.record({x}, out, [xn = x.node(), on = out.node(), arg = std::move(arg), c] {
        for (std::size_t q = 0; q < arg.size(); ++q) xn->grad[arg[q] * c + q % c] += on->grad[q];
    });
    return out;
}

template <typename T>
Tensor<T> group_mean(Tape<T>& tape, const Tensor<T>& x, std::size_t group) {
    require_rank2(x, "group_mean");
    if (group == 0 || x.rows() % group != 0)
        throw DimensionError("group_mean: " + std::to_string(x.rows()) +
                             " rows not divisible into groups of " + std::to_string(group));
    const std::size_t g = x.rows() / group, c = x.cols();
    const T inv = T(1) / static_cast<T>(group);
    auto out = Tensor<T>::zeros({g, c});
    for (std::size_t b = 0; b < g; ++b)
        for (std::size_t r = b * group; r < (b + 1) * group; ++r)
            for (std::size_t j = 0; j < c; ++j) out[b * c + j] += x[r * c + j];
    for (T& v : out.values()) v *= inv;
    tape.record({x}, out, [xn = x.node(), on = out.node(), group, c, inv] {
        const std::size_t rows = xn->value.size() / c;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j)
                xn->grad[r * c + j] += on->grad[(r / group) * c + j] * inv;
    });
    return out;
}

template <typename T>
Tensor<T> attention(Tape<T>& tape, const Tensor<T>& qkv, std::size_t group, std::size_t heads) {
    require_rank2(qkv, "attention");
    const std::size_t rows = qkv.rows(), width = qkv.cols();
    if (width % 3 != 0) throw DimensionError("attention: qkv width not divisible by 3");
    const std::size_t c = width / 3;
    if (heads == 0 || c % heads != 0)
        throw DimensionError("attention: channel count " + std::to_string(c) +
                             " not divisible by heads " + std::to_string(heads));
    if (group == 0 || rows % group != 0)
        throw DimensionError("attention: " + std::to_string(rows) +
                             " rows not divisible into sequences of " + std::to_string(group));
    const std::size_t d = c / heads, groups = rows / group, t = group;
    const T scale_f = T(1) / std::sqrt(static_cast<T>(d));
    auto out = Tensor<T>::zeros({rows, c});
    std::vector<T> probs(groups * heads * t * t);
    const T* src = qkv.values().data();
    for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t h = 0; h < heads; ++h) {
            T* p = probs.data() + (g * heads + h) * t * t;
            for (std::size_t i = 0; i < t; ++i) {
                const T* q = src + (g * t + i) * width + h * d;
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t j = 0; j < t; ++j) {
                    const T* k = src + (g * t + j) * width + c + h * d;
                    T s = 0;
                    for (std::size_t e = 0; e < d; ++e) s += q[e] * k[e];
                    p[i * t + j] = s * scale_f;
                    mx = std::max(mx, p[i * t + j]);
                }
                T z = 0;
                for (std::size_t j = 0; j < t; ++j) {
                    p[i * t + j] = std::exp(p[i * t + j] - mx);
                    z += p[i * t + j];
                }
                for (std::size_t j = 0; j < t; ++j) p[i * t + j] /= z;
                T* o = out.values().data() + (g * t + i) * c + h * d;
                for (std::size_t j = 0; j < t; ++j) {
                    const T* v = src + (g * t + j) * width + 2 * c + h * d;
                    const T pij = p[i * t + j];
                    for (std::size_t e = 0; e < d; ++e) o[e] += pij * v[e];
                }
            }
        }
    tape.record({qkv}, out, [xn = qkv.node(), on = out.node(), probs = std::move(probs), groups,
                             heads, t, d, c, width, scale_f] {
        const T* src = xn->value.data();
        T* dsrc = xn->grad.data();
        std::vector<T> ds(t * t);
        for (std::size_t g = 0; g < groups; ++g)
            for (std::size_t h = 0; h < heads; ++h) {
                const T* p = probs.data() + (g * heads + h) * t * t;
                for (std::size_t i = 0; i < t; ++i) {
                    const T* dout = on->grad.data() + (g * t + i) * c + h * d;
                    T dot = 0;
                    for (std::size_t j = 0; j < t; ++j) {
                        const T* v = src + (g * t + j) * width + 2 * c + h * d;
                        T* dv = dsrc + (g * t + j) * width + 2 * c + h * d;
                        T dp = 0;
                        for (std::size_t e = 0; e < d; ++e) {
                            dp += dout[e] * v[e];
                            dv[e] += p[i * t + j] * dout[e];
                        }
                        ds[i * t + j] = dp;
                        dot += dp * p[i * t + j];
                    }
                    for (std::size_t j = 0; j < t; ++j)
                        ds[i * t + j] = p[i * t + j] * (ds[i * t + j] - dot) * scale_f;
                }
                for (std::size_t i = 0; i < t; ++i) {
                    const T* q = src + (g * t + i) * width + h * d;
                    T* dq = dsrc + (g * t + i) * width + h * d;
                    for (std::size_t j = 0; j < t; ++j) {
                        const T* k = src + (g * t + j) * width + c + h * d;
                        T* dk = dsrc + (g * t + j) * width + c + h * d;
                        const T s = ds[i * t + j];
                        for (std::size_t e = 0; e < d; ++e) {
                            dq[e] += s * k[e];
                            dk[e] += s * q[e];
                        }
                    }
                }
            }
    });
    return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
    auto out = x.reshaped(std::move(shape));
    tape.record({x}, out, [xn = x.node(), on = out.node()] { accumulate<T>(xn->grad, on->grad); });
    return out;
}

template <typename T>
Tensor<T> cross_entropy(Tape<T>& tape, const Tensor<T>& logits, std::span<const int> labels) {
    require_rank2(logits, "cross_entropy");
    const std::size_t r = logits.rows(), k = logits.cols();
    if (labels.size() != r)
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(r) + " rows");
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= k)
            throw IndexError("cross_entropy: label " + std::to_string(l) + " out of range");
    std::vector<T> probs(r * k);
    T loss = 0;
    for (std::size_t i = 0; i < r; ++i) {
        const T* row = logits.values().data() + i * k;
        const T mx = *std::max_element(row, row + k);
        T z = 0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(row[j] - mx) / z;
        loss += std::log(z) + mx - row[labels[i]];
    }
    auto out = Tensor<T>::scalar(loss / static_cast<T>(r));
    tape.record({logits}, out,
                [ln = logits.node(), on = out.node(), probs = std::move(probs),
                 ys = std::vector<int>(labels.begin(), labels.end()), r, k] {
                    const T g = on->grad[0] / static_cast<T>(r);
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < k; ++j) {
                            const T target = static_cast<int>(j) == ys[i] ? T(1) : T(0);
                            ln->grad[i * k + j] += g * (probs[i * k + j] - target);
                        }
                });
    return out;
}

#define PCMAE_INSTANTIATE(T)                                                                     \
    template class Tensor<T>;                                                                    \
    template class Tape<T>;                                                                      \
    template Tensor<T> matmul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                     \
    template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                     \
    template Tensor<T> add_row(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                    \
    template Tensor<T> linear(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
    template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                          \
    template Tensor<T> mean(Tape<T>&, const Tensor<T>&);                                         \
    template Tensor<T> gelu(Tape<T>&, const Tensor<T>&);                                         \
    template Tensor<T> softmax(Tape<T>&, const Tensor<T>&, std::size_t);                         \
    template Tensor<T> layer_norm(Tape<T>&, const Tensor<T>&, const Tensor<T>&,                  \
                                  const Tensor<T>&, T);                                          \
    template Tensor<T> gather_rows(Tape<T>&, const Tensor<T>&, std::span<const std::size_t>);    \
    template Tensor<T> concat_rows(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                \
    template Tensor<T> concat_cols(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                \
    template Tensor<T> group_max(Tape<T>&, const Tensor<T>&, std::size_t);                       \
    template Tensor<T> group_mean(Tape<T>&, const Tensor<T>&, std::size_t);                      \
    template Tensor<T> attention(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t);          \
    template Tensor<T> reshape(Tape<T>&, const Tensor<T>&, Shape);                               \
    template Tensor<T> cross_entropy(Tape<T>&, const Tensor<T>&, std::span<const int>);

PCMAE_INSTANTIATE(float)
PCMAE_INSTANTIATE(double)

#undef PCMAE_INSTANTIATE

}  // namespace pcmae::ad

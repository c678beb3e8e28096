#pragma once

// Dense row-major tensors with a tape-based reverse-mode differentiator.
//
// Every differentiable op takes the tape explicitly. Ops executed against an
// inference-mode tape (or on inputs that do not require gradients) are not
// recorded and their outputs carry no gradient buffer.
//
// Scalar type is a template parameter: float for training, double for
// finite-difference gradient checks. Both are explicitly instantiated.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcmae::ad {

using Shape = std::vector<std::size_t>;

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty unless requires_grad
    bool requires_grad = false;
};

/// Shared handle to a tensor node. Copies alias the same storage, which is what
/// lets parameters be referenced from several places in a model (shared
/// decoders) and from the tape.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t extent(std::size_t axis) const;
    std::size_t size() const { return node_->value.size(); }
    /// First-axis extent.
    std::size_t rows() const { return node_->shape.empty() ? 1 : node_->shape.front(); }
    /// Elements per first-axis slice.
    std::size_t row_width() const;
    /// Last-axis extent.
    std::size_t cols() const { return node_->shape.empty() ? 1 : node_->shape.back(); }

    std::span<T> values() { return node_->value; }
    std::span<const T> values() const { return node_->value; }
    std::span<T> grad() { return node_->grad; }
    std::span<const T> grad() const { return node_->grad; }

    T item() const;
    T& operator[](std::size_t i) { return node_->value[i]; }
    const T& operator[](std::size_t i) const { return node_->value[i]; }

    bool requires_grad() const { return node_->requires_grad; }
    /// Turning this on allocates a zeroed gradient buffer; off releases it.
    void set_requires_grad(bool on);
    void zero_grad();
    bool all_finite() const;

    /// Deep copy of the values with no gradient.
    Tensor detach() const;
    /// Same values under a different shape of equal element count (deep copy, no grad).
    Tensor reshaped(Shape shape) const;

    const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }
    bool same_storage(const Tensor& other) const noexcept { return node_ == other.node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

template <typename T>
class Tape {
public:
    enum class Mode { record, inference };
    using BackwardFn = std::function<void()>;

    explicit Tape(Mode mode = Mode::record) : mode_(mode) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const noexcept { return mode_ == Mode::record; }
    bool consumed() const noexcept { return consumed_; }
    std::size_t size() const noexcept { return entries_.size(); }

    /// Registers `out` as produced from `inputs`. If the tape records and any
    /// input requires grad, `out` gains a gradient buffer and `fn` runs during
    /// backward; otherwise `fn` is discarded. Custom ops outside this header
    /// use the same hook.
    void record(std::initializer_list<Tensor<T>> inputs, Tensor<T>& out, BackwardFn fn);

    /// Seeds d(loss)/d(loss) = 1 and replays recorded ops in reverse. Gradients
    /// add into existing buffers. A tape can be replayed once.
    void backward(const Tensor<T>& loss);

private:
    struct Entry {
        std::shared_ptr<Node<T>> output;
        BackwardFn fn;
    };
    Mode mode_;
    bool consumed_ = false;
    std::vector<Entry> entries_;
};

template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& tape) {
    tape.backward(loss);
}

// ---- differentiable ops ----------------------------------------------------

/// [m x k] . [k x p]
template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise a + b (identical shapes).
template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise a * b (identical shapes).
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor);

/// Adds a length-`cols` row vector to every row of x (last-axis broadcast).
template <typename T>
Tensor<T> add_row(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& row);

/// x . weight + bias, with weight [in x out] and bias of `out` elements.
template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a);

template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& a);

/// Exact x * Phi(x).
template <typename T>
Tensor<T> gelu(Tape<T>& tape, const Tensor<T>& a);

template <typename T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x, std::size_t axis);

/// Row-wise normalization over the last axis followed by gain/bias.
template <typename T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps = T(1e-5));

/// Copies first-axis slices in `idx` order. Backward scatters (duplicates add).
template <typename T>
Tensor<T> gather_rows(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> idx);

template <typename T>
Tensor<T> concat_rows(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// [R x C1] ++ [R x C2] -> [R x (C1 + C2)]
template <typename T>
Tensor<T> concat_cols(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// Column-wise max over consecutive groups of `group` rows. Ties go to the
/// lowest row.
template <typename T>
Tensor<T> group_max(Tape<T>& tape, const Tensor<T>& x, std::size_t group);

template <typename T>
Tensor<T> group_mean(Tape<T>& tape, const Tensor<T>& x, std::size_t group);

/// Multi-head scaled dot-product self-attention over consecutive groups of
/// `group` rows. `qkv` is [R x 3C] laid out as [Q | K | V], each split into
/// `heads` column blocks; the result is [R x C].
template <typename T>
Tensor<T> attention(Tape<T>& tape, const Tensor<T>& qkv, std::size_t group, std::size_t heads);

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape);

/// Mean softmax cross-entropy of [R x K] logits against class ids.
template <typename T>
Tensor<T> cross_entropy(Tape<T>& tape, const Tensor<T>& logits, std::span<const int> labels);

}  // namespace pcmae::ad

#pragma once

#include "pcmae/geometry.hpp"
#include "pcmae/masking.hpp"
#include "pcmae/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pcmae {

struct ModelConfig {
    std::size_t dim = 384;
    std::size_t encoder_depth = 12;
    std::size_t decoder_depth = 4;
    std::size_t heads = 6;
    std::size_t mlp_ratio = 4;
    std::size_t num_patches = 64;  // n
    std::size_t patch_size = 32;   // k
    std::size_t points_per_cloud = 1024;
    std::size_t pos_hidden = 128;
    double mask_ratio = 0.6;
    double lambda = 1.0;

    // Component toggles (ablation matrix).
    bool dual_mask = true;
    bool share_encoder = true;
    bool share_decoder = false;
    bool contrastive = true;

    std::size_t tokenizer_hidden() const { return dim / 2; }
    std::size_t masked_count() const;

    /// Throws std::invalid_argument describing the first violated constraint.
    void validate() const;

    static ModelConfig paper();
    static ModelConfig tiny();
    /// Smallest config used for finite-difference gradient checks.
    static ModelConfig gradcheck();
};

namespace model {

template <typename T>
struct Linear {
    ad::Tensor<T> weight;  // [in x out]
    ad::Tensor<T> bias;    // [out]
};

template <typename T>
struct Norm {
    ad::Tensor<T> gain;
    ad::Tensor<T> bias;
};

template <typename T>
struct Block {
    Norm<T> norm1;
    Linear<T> qkv;
    Linear<T> proj;
    Norm<T> norm2;
    Linear<T> fc1;
    Linear<T> fc2;
};

/// Pre-norm transformer blocks followed by a final layer norm.
template <typename T>
struct Stack {
    std::vector<Block<T>> blocks;
    Norm<T> norm;
};

/// Shared per-point MLP 3 -> C/2 -> C, max-pooled over each patch.
template <typename T>
struct Tokenizer {
    Linear<T> fc1;
    Linear<T> fc2;
};

template <typename T>
struct PosEmbed {
    Linear<T> fc1;
    Linear<T> fc2;
};

using ParamVisitor = std::function<void(const std::string&)>;

template <typename T>
struct ModelParams {
    Tokenizer<T> tokenizer;
    PosEmbed<T> pos;
    Stack<T> encoder;
    std::optional<Stack<T>> encoder2;  // present iff dual masking with separate encoders
    Stack<T> decoder1;
    std::optional<Stack<T>> decoder2;  // present iff dual masking with unshared decoders
    ad::Tensor<T> mask_token;          // [1 x C]
    Linear<T> head;                    // C -> k*3

    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

    const Stack<T>& encoder_for(int branch) const;
    /// which in {1, 2}; throws std::invalid_argument otherwise.
    const Stack<T>& decoder_for(int which) const;

    /// Every distinct parameter tensor exactly once, in a fixed order.
    void for_each(const std::function<void(const std::string&, ad::Tensor<T>&)>& fn);
    void for_each(const std::function<void(const std::string&, const ad::Tensor<T>&)>& fn) const;

    std::size_t parameter_count() const;
    /// Tokenizer + positional MLP + encoder: what a downstream task keeps.
    std::size_t encoder_parameter_count() const;
    void zero_grad();
};

/// Parameters excluded from weight decay: biases, norm gains, the mask token.
bool is_decay_exempt(const std::string& name);

template <typename T>
Stack<T> make_stack(std::size_t depth, std::size_t dim, std::size_t mlp_ratio, std::uint64_t seed);

template <typename T>
ad::Tensor<T> transformer_block(ad::Tape<T>& tape, const Block<T>& block, const ad::Tensor<T>& x,
                                std::size_t seq_len, std::size_t heads);

/// Blocks then final norm, over consecutive sequences of `seq_len` rows.
template <typename T>
ad::Tensor<T> run_stack(ad::Tape<T>& tape, const Stack<T>& stack, const ad::Tensor<T>& x,
                        std::size_t seq_len, std::size_t heads);

/// patches: [(N*k) x 3] or [N x k x 3] -> tokens [N x C].
template <typename T>
ad::Tensor<T> embed_patches(ad::Tape<T>& tape, const Tokenizer<T>& tok, const ad::Tensor<T>& patches,
                            std::size_t k);

/// centers: [N x 3] -> [N x C].
template <typename T>
ad::Tensor<T> pos_embed(ad::Tape<T>& tape, const PosEmbed<T>& pos, const ad::Tensor<T>& centers);

/// z_f(T_v + pos_v); tokens and positions are already restricted to visible rows.
template <typename T>
ad::Tensor<T> encode(ad::Tape<T>& tape, const Stack<T>& encoder, const ad::Tensor<T>& visible_tokens,
                     const ad::Tensor<T>& visible_pos, std::size_t seq_len, std::size_t heads);

/// Decoder input per sample: [z rows (visible), mask_token x masked], plus
/// positional embeddings already arranged in the same [visible, masked] order.
/// Output keeps that row order.
template <typename T>
ad::Tensor<T> decode(ad::Tape<T>& tape, const ModelParams<T>& params, const ad::Tensor<T>& z,
                     const ad::Tensor<T>& ordered_pos, int which, std::size_t batch,
                     std::size_t visible, std::size_t masked, std::size_t heads);

/// [M x C] -> [M x k x 3] center-relative coordinates.
template <typename T>
ad::Tensor<T> reconstruct(ad::Tape<T>& tape, const Linear<T>& head, const ad::Tensor<T>& h_masked,
                          std::size_t k);

/// Stack per-sample patches into [(B*n) x k x 3] and centers into [(B*n) x 3].
template <typename T>
ad::Tensor<T> stack_patches(std::span<const geometry::PatchSet> batch);
template <typename T>
ad::Tensor<T> stack_centers(std::span<const geometry::PatchSet> batch);

/// normalize -> fps -> knn -> group, per cloud.
std::vector<geometry::PatchSet> tokenize_clouds(std::span<const geometry::PointCloud> clouds,
                                                const ModelConfig& cfg);

template <typename T>
struct PretrainOutput {
    std::size_t batch = 0, n = 0, k = 0, visible = 0, masked = 0;
    bool has_branch2 = false;
    std::vector<masking::DualMask> masks;
    ad::Tensor<T> h1, h2;        // [(B*n) x C], [visible, masked] order per sample
    ad::Tensor<T> pred1, pred2;  // [(B*m) x k x 3]
    ad::Tensor<T> gt1, gt2;      // [(B*m) x k x 3], masked patches in ascending token order
};

template <typename T>
PretrainOutput<T> forward_pretrain(ad::Tape<T>& tape, const ModelParams<T>& params,
                                   const ModelConfig& cfg,
                                   std::span<const geometry::PatchSet> batch, std::uint64_t seed);

template <typename T>
PretrainOutput<T> forward_pretrain(ad::Tape<T>& tape, const ModelParams<T>& params,
                                   const ModelConfig& cfg,
                                   std::span<const geometry::PointCloud> clouds, std::uint64_t seed);

/// Unmasked encoding of every patch, pooled per cloud to [B x 2C] = [max | mean].
template <typename T>
ad::Tensor<T> global_features(ad::Tape<T>& tape, const ModelParams<T>& params, const ModelConfig& cfg,
                              std::span<const geometry::PatchSet> batch);

}  // namespace model
}  // namespace pcmae

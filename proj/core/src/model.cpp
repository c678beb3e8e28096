#include "pcmae/model.hpp"

#include "pcmae/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pcmae {

std::size_t ModelConfig::masked_count() const { return masking::mask_count(num_patches, mask_ratio); }

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
    if (dim == 0 || heads == 0 || dim % heads != 0) fail("dim must be a positive multiple of heads");
    if (dim % 2 != 0) fail("dim must be even (tokenizer hidden width is dim/2)");
    if (encoder_depth < 1 || decoder_depth < 1) fail("encoder and decoder depth must be >= 1");
    if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
    if (pos_hidden < 1) fail("pos_hidden must be >= 1");
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) fail("mask ratio must lie in (0, 1)");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be finite and >= 0");
    if (num_patches < 1) fail("num_patches must be >= 1");
    if (patch_size < 1) fail("patch_size must be >= 1");
    if (points_per_cloud < num_patches || points_per_cloud < patch_size)
        fail("points_per_cloud must be >= num_patches and >= patch_size");
    if (!dual_mask) {
        if (contrastive) fail("the contrastive term needs dual masking (disable contrastive too)");
        if (share_decoder) fail("shared decoders only exist with dual masking");
        if (!share_encoder) fail("separate encoders only exist with dual masking");
    }
}

ModelConfig ModelConfig::paper() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
    ModelConfig c;
    c.dim = 64;
    c.encoder_depth = 4;
    c.decoder_depth = 2;
    c.heads = 4;
    c.num_patches = 32;
    c.patch_size = 16;
    return c;
}

ModelConfig ModelConfig::gradcheck() {
    ModelConfig c;
    c.dim = 8;
    c.encoder_depth = 1;
    c.decoder_depth = 1;
    c.heads = 2;
    c.mlp_ratio = 2;
    c.num_patches = 8;
    c.patch_size = 4;
    c.points_per_cloud = 32;
    c.pos_hidden = 8;
    c.mask_ratio = 0.75;  // 6 of 8 masked: the co-mask is never empty
    return c;
}

namespace model {

namespace {

constexpr std::uint64_t kTagTokenizer = 0x746f6b;
constexpr std::uint64_t kTagPos = 0x706f73;
constexpr std::uint64_t kTagEncoder = 0x656e63;
constexpr std::uint64_t kTagDecoder = 0x646563;
constexpr std::uint64_t kTagHead = 0x686561;
constexpr std::uint64_t kTagMaskToken = 0x6d736b;

template <typename T>
Linear<T> make_linear(Rng& rng, std::size_t in, std::size_t out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<T> w(in * out);
    for (T& v : w) v = static_cast<T>(rng.uniform(-limit, limit));
    return {ad::Tensor<T>({in, out}, std::move(w), true), ad::Tensor<T>::zeros({out}, true)};
}

template <typename T>
Norm<T> make_norm(std::size_t dim) {
    return {ad::Tensor<T>::full({dim}, T(1), true), ad::Tensor<T>::zeros({dim}, true)};
}

template <typename T, typename Fn>
void visit_linear(const std::string& prefix, Linear<T>& l, Fn& fn) {
    fn(prefix + ".weight", l.weight);
    fn(prefix + ".bias", l.bias);
}

template <typename T, typename Fn>
void visit_norm(const std::string& prefix, Norm<T>& l, Fn& fn) {
    fn(prefix + ".gain", l.gain);
    fn(prefix + ".bias", l.bias);
}

template <typename T, typename Fn>
void visit_stack(const std::string& prefix, Stack<T>& s, Fn& fn) {
    for (std::size_t i = 0; i < s.blocks.size(); ++i) {
        const std::string p = prefix + ".blocks." + std::to_string(i);
        auto& b = s.blocks[i];
        visit_norm(p + ".norm1", b.norm1, fn);
        visit_linear(p + ".qkv", b.qkv, fn);
        visit_linear(p + ".proj", b.proj, fn);
        visit_norm(p + ".norm2", b.norm2, fn);
        visit_linear(p + ".fc1", b.fc1, fn);
        visit_linear(p + ".fc2", b.fc2, fn);
    }
    visit_norm(prefix + ".norm", s.norm, fn);
}

template <typename T, typename Fn>
void visit_all(ModelParams<T>& p, Fn& fn) {
    visit_linear("tokenizer.fc1", p.tokenizer.fc1, fn);
    visit_linear("tokenizer.fc2", p.tokenizer.fc2, fn);
    visit_linear("pos.fc1", p.pos.fc1, fn);
    visit_linear("pos.fc2", p.pos.fc2, fn);
    visit_stack("encoder", p.encoder, fn);
    if (p.encoder2) visit_stack("encoder2", *p.encoder2, fn);
    visit_stack("decoder1", p.decoder1, fn);
    if (p.decoder2) visit_stack("decoder2", *p.decoder2, fn);
    fn(std::string("mask_token"), p.mask_token);
    visit_linear("head", p.head, fn);
}

}  // namespace

bool is_decay_exempt(const std::string& name) {
    auto ends_with = [&](std::string_view suffix) {
        return name.size() >= suffix.size() &&
               name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    return ends_with(".bias") || ends_with(".gain") || name == "mask_token";
}

template <typename T>
Stack<T> make_stack(std::size_t depth, std::size_t dim, std::size_t mlp_ratio, std::uint64_t seed) {
    Rng rng(seed);
    Stack<T> s;
    for (std::size_t i = 0; i < depth; ++i) {
        Block<T> b;
        b.norm1 = make_norm<T>(dim);
        b.qkv = make_linear<T>(rng, dim, 3 * dim);
        b.proj = make_linear<T>(rng, dim, dim);
        b.norm2 = make_norm<T>(dim);
        b.fc1 = make_linear<T>(rng, dim, mlp_ratio * dim);
        b.fc2 = make_linear<T>(rng, mlp_ratio * dim, dim);
        s.blocks.push_back(std::move(b));
    }
    s.norm = make_norm<T>(dim);
    return s;
}

template <typename T>
ModelParams<T> ModelParams<T>::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    const std::size_t c = cfg.dim;
    {
        Rng rng(derive_seed(seed, kTagTokenizer));
        p.tokenizer.fc1 = make_linear<T>(rng, 3, cfg.tokenizer_hidden());
        p.tokenizer.fc2 = make_linear<T>(rng, cfg.tokenizer_hidden(), c);
    }
    {
        Rng rng(derive_seed(seed, kTagPos));
        p.pos.fc1 = make_linear<T>(rng, 3, cfg.pos_hidden);
        p.pos.fc2 = make_linear<T>(rng, cfg.pos_hidden, c);
    }
    p.encoder = make_stack<T>(cfg.encoder_depth, c, cfg.mlp_ratio, derive_seed(seed, kTagEncoder, 1));
    if (cfg.dual_mask && !cfg.share_encoder)
        p.encoder2 = make_stack<T>(cfg.encoder_depth, c, cfg.mlp_ratio, derive_seed(seed, kTagEncoder, 2));
    // Decoders come from different seeds so they differ from the first step.
    p.decoder1 = make_stack<T>(cfg.decoder_depth, c, cfg.mlp_ratio, derive_seed(seed, kTagDecoder));
    if (cfg.dual_mask && !cfg.share_decoder)
        p.decoder2 = make_stack<T>(cfg.decoder_depth, c, cfg.mlp_ratio, derive_seed(seed + 1, kTagDecoder));
    {
        Rng rng(derive_seed(seed, kTagMaskToken));
        std::vector<T> v(c);
        for (T& x : v) x = static_cast<T>(rng.normal(0.0, 0.02));
        p.mask_token = ad::Tensor<T>({1, c}, std::move(v), true);
    }
    {
        Rng rng(derive_seed(seed, kTagHead));
        p.head = make_linear<T>(rng, c, cfg.patch_size * 3);
    }
    return p;
}

template <typename T>
const Stack<T>& ModelParams<T>::encoder_for(int branch) const {
    return (branch == 2 && encoder2) ? *encoder2 : encoder;
}

template <typename T>
const Stack<T>& ModelParams<T>::decoder_for(int which) const {
    if (which != 1 && which != 2)
        throw std::invalid_argument("decoder index must be 1 or 2, got " + std::to_string(which));
    return (which == 2 && decoder2) ? *decoder2 : decoder1;
}

template <typename T>
void ModelParams<T>::for_each(const std::function<void(const std::string&, ad::Tensor<T>&)>& fn) {
    visit_all(*this, fn);
}

template <typename T>
void ModelParams<T>::for_each(const std::function<void(const std::string&, const ad::Tensor<T>&)>& fn) const {
    auto adapter = [&](const std::string& name, ad::Tensor<T>& t) { fn(name, t); };
    visit_all(const_cast<ModelParams&>(*this), adapter);
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const ad::Tensor<T>& t) { n += t.size(); });
    return n;
}

template <typename T>
std::size_t ModelParams<T>::encoder_parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string& name, const ad::Tensor<T>& t) {
        if (name.starts_with("tokenizer.") || name.starts_with("pos.") || name.starts_with("encoder."))
            n += t.size();
    });
    return n;
}

template <typename T>
void ModelParams<T>::zero_grad() {
    for_each([](const std::string&, ad::Tensor<T>& t) { t.zero_grad(); });
}

template <typename T>
ad::Tensor<T> transformer_block(ad::Tape<T>& tape, const Block<T>& b, const ad::Tensor<T>& x,
                                std::size_t seq_len, std::size_t heads) {
    auto h = ad::layer_norm(tape, x, b.norm1.gain, b.norm1.bias);
    h = ad::linear(tape, h, b.qkv.weight, b.qkv.bias);
    h = ad::attention(tape, h, seq_len, heads);
    h = ad::linear(tape, h, b.proj.weight, b.proj.bias);
    auto y = ad::add(tape, x, h);
    auto m = ad::layer_norm(tape, y, b.norm2.gain, b.norm2.bias);
    m = ad::gelu(tape, ad::linear(tape, m, b.fc1.weight, b.fc1.bias));
    m = ad::linear(tape, m, b.fc2.weight, b.fc2.bias);
    return ad::add(tape, y, m);
}

template <typename T>
ad::Tensor<T> run_stack(ad::Tape<T>& tape, const Stack<T>& stack, const ad::Tensor<T>& x,
                        std::size_t seq_len, std::size_t heads) {
    ad::Tensor<T> h = x;
    for (const auto& b : stack.blocks) h = transformer_block(tape, b, h, seq_len, heads);
    return ad::layer_norm(tape, h, stack.norm.gain, stack.norm.bias);
}

template <typename T>
ad::Tensor<T> embed_patches(ad::Tape<T>& tape, const Tokenizer<T>& tok, const ad::Tensor<T>& patches,
                            std::size_t k) {
    if (patches.size() % 3 != 0 || k == 0 || (patches.size() / 3) % k != 0)
        throw ad::DimensionError("embed_patches: expected [N x k x 3] points with k=" + std::to_string(k) +
                                 ", got " + ad::to_string(patches.shape()));
    const auto flat = patches.rank() == 2 ? patches : ad::reshape(tape, patches, {patches.size() / 3, 3});
    auto h = ad::gelu(tape, ad::linear(tape, flat, tok.fc1.weight, tok.fc1.bias));
    h = ad::linear(tape, h, tok.fc2.weight, tok.fc2.bias);
    return ad::group_max(tape, h, k);
}

template <typename T>
ad::Tensor<T> pos_embed(ad::Tape<T>& tape, const PosEmbed<T>& pos, const ad::Tensor<T>& centers) {
    if (centers.rank() != 2 || centers.cols() != 3)
        throw ad::DimensionError("pos_embed: expected [N x 3] centers, got " + ad::to_string(centers.shape()));
    auto h = ad::gelu(tape, ad::linear(tape, centers, pos.fc1.weight, pos.fc1.bias));
    return ad::linear(tape, h, pos.fc2.weight, pos.fc2.bias);
}

template <typename T>
ad::Tensor<T> encode(ad::Tape<T>& tape, const Stack<T>& encoder, const ad::Tensor<T>& visible_tokens,
                     const ad::Tensor<T>& visible_pos, std::size_t seq_len, std::size_t heads) {
    return run_stack(tape, encoder, ad::add(tape, visible_tokens, visible_pos), seq_len, heads);
}

template <typename T>
ad::Tensor<T> decode(ad::Tape<T>& tape, const ModelParams<T>& params, const ad::Tensor<T>& z,
                     const ad::Tensor<T>& ordered_pos, int which, std::size_t batch,
                     std::size_t visible, std::size_t masked, std::size_t heads) {
    const auto& decoder = params.decoder_for(which);
    const std::size_t n = visible + masked;
    if (z.rows() != batch * visible || ordered_pos.rows() != batch * n)
        throw ad::DimensionError("decode: expected " + std::to_string(batch * visible) +
                                 " latent rows and " + std::to_string(batch * n) + " position rows");
    auto pool = ad::concat_rows(tape, z, params.mask_token);
    const std::size_t mask_row = batch * visible;
    std::vector<std::size_t> idx;
    idx.reserve(batch * n);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < visible; ++i) idx.push_back(b * visible + i);
        for (std::size_t i = 0; i < masked; ++i) idx.push_back(mask_row);
    }
    auto x = ad::gather_rows(tape, pool, std::span<const std::size_t>(idx));
    return run_stack(tape, decoder, ad::add(tape, x, ordered_pos), n, heads);
}

template <typename T>
ad::Tensor<T> reconstruct(ad::Tape<T>& tape, const Linear<T>& head, const ad::Tensor<T>& h_masked,
                          std::size_t k) {
    if (head.weight.cols() != 3 * k)
        throw ad::DimensionError("reconstruct: head emits " + std::to_string(head.weight.cols()) +
                                 " values, expected k*3 = " + std::to_string(3 * k));
    const std::size_t m = h_masked.rows();
    if (m == 0) return ad::Tensor<T>::zeros({0, k, 3});
    auto y = ad::linear(tape, h_masked, head.weight, head.bias);
    return ad::reshape(tape, y, {m, k, 3});
}

template <typename T>
ad::Tensor<T> stack_patches(std::span<const geometry::PatchSet> batch) {
    if (batch.empty()) throw std::invalid_argument("stack_patches: empty batch");
    const std::size_t n = batch.front().n(), k = batch.front().k;
    std::vector<T> v;
    v.reserve(batch.size() * n * k * 3);
    for (const auto& ps : batch) {
        if (ps.n() != n || ps.k != k) throw std::invalid_argument("stack_patches: ragged batch");
        for (const auto& p : ps.patches)
            for (double c : p) v.push_back(static_cast<T>(c));
    }
    return ad::Tensor<T>({batch.size() * n, k, 3}, std::move(v));
}

template <typename T>
ad::Tensor<T> stack_centers(std::span<const geometry::PatchSet> batch) {
    std::vector<T> v;
    std::size_t rows = 0;
    for (const auto& ps : batch) {
        rows += ps.n();
        for (const auto& c : ps.centers)
            for (double x : c) v.push_back(static_cast<T>(x));
    }
    return ad::Tensor<T>({rows, 3}, std::move(v));
}

std::vector<geometry::PatchSet> tokenize_clouds(std::span<const geometry::PointCloud> clouds,
                                                const ModelConfig& cfg) {
    std::vector<geometry::PatchSet> out;
    out.reserve(clouds.size());
    for (const auto& cloud : clouds)
        out.push_back(geometry::make_patches(geometry::normalize_cloud(cloud), cfg.num_patches,
                                             cfg.patch_size));
    return out;
}

namespace {

template <typename T>
ad::Tensor<T> gather_gt(std::span<const geometry::PatchSet> batch,
                        const std::vector<masking::DualMask>& masks, bool second, std::size_t k) {
    std::vector<T> v;
    std::size_t rows = 0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& m = second ? masks[b].m2 : masks[b].m1;
        for (std::size_t i : m) {
            for (const auto& p : batch[b].patch(i))
                for (double c : p) v.push_back(static_cast<T>(c));
            ++rows;
        }
    }
    return ad::Tensor<T>({rows, k, 3}, std::move(v));
}

template <typename T>
struct BranchResult {
    ad::Tensor<T> h, pred;
};

template <typename T>
BranchResult<T> run_branch(ad::Tape<T>& tape, const ModelParams<T>& params, const ModelConfig& cfg,
                           const ad::Tensor<T>& tokens, const ad::Tensor<T>& pos,
                           const std::vector<masking::DualMask>& masks, int branch) {
    const std::size_t batch = masks.size(), n = cfg.num_patches;
    const std::size_t visible = masks.front().visible_count(), masked = masks.front().masked_count();
    std::vector<std::size_t> vis, order;
    vis.reserve(batch * visible);
    order.reserve(batch * n);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto& v = branch == 1 ? masks[b].visible1 : masks[b].visible2;
        for (std::size_t i : v) vis.push_back(b * n + i);
        for (std::size_t i : (branch == 1 ? masks[b].order1() : masks[b].order2())) order.push_back(b * n + i);
    }
    auto z = encode(tape, params.encoder_for(branch), ad::gather_rows(tape, tokens, std::span<const std::size_t>(vis)),
                    ad::gather_rows(tape, pos, std::span<const std::size_t>(vis)), visible, cfg.heads);
    auto ordered_pos = ad::gather_rows(tape, pos, std::span<const std::size_t>(order));
    auto h = decode(tape, params, z, ordered_pos, branch, batch, visible, masked, cfg.heads);
    std::vector<std::size_t> masked_rows;
    masked_rows.reserve(batch * masked);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = visible; i < n; ++i) masked_rows.push_back(b * n + i);
    auto hm = ad::gather_rows(tape, h, std::span<const std::size_t>(masked_rows));
    return {h, reconstruct(tape, params.head, hm, cfg.patch_size)};
}

}  // namespace

template <typename T>
PretrainOutput<T> forward_pretrain(ad::Tape<T>& tape, const ModelParams<T>& params,
                                   const ModelConfig& cfg,
                                   std::span<const geometry::PatchSet> batch, std::uint64_t seed) {
    cfg.validate();
    if (batch.empty()) throw std::invalid_argument("forward_pretrain: empty batch");
    for (const auto& ps : batch)
        if (ps.n() != cfg.num_patches || ps.k != cfg.patch_size)
            throw ad::DimensionError("forward_pretrain: patch set is " + std::to_string(ps.n()) + "x" +
                                     std::to_string(ps.k) + ", config expects " +
                                     std::to_string(cfg.num_patches) + "x" + std::to_string(cfg.patch_size));
    PretrainOutput<T> out;
    out.batch = batch.size();
    out.n = cfg.num_patches;
    out.k = cfg.patch_size;
    out.has_branch2 = cfg.dual_mask;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto s = derive_seed(seed, b);
        out.masks.push_back(cfg.dual_mask ? masking::generate_dual_mask(cfg.num_patches, cfg.mask_ratio, s)
                                          : masking::generate_single_mask(cfg.num_patches, cfg.mask_ratio, s));
    }
    out.masked = out.masks.front().masked_count();
    out.visible = out.masks.front().visible_count();

    auto tokens = embed_patches(tape, params.tokenizer, stack_patches<T>(batch), cfg.patch_size);
    auto pos = pos_embed(tape, params.pos, stack_centers<T>(batch));

    auto b1 = run_branch(tape, params, cfg, tokens, pos, out.masks, 1);
    out.h1 = b1.h;
    out.pred1 = b1.pred;
    out.gt1 = gather_gt<T>(batch, out.masks, false, cfg.patch_size);
    if (cfg.dual_mask) {
        auto b2 = run_branch(tape, params, cfg, tokens, pos, out.masks, 2);
        out.h2 = b2.h;
        out.pred2 = b2.pred;
        out.gt2 = gather_gt<T>(batch, out.masks, true, cfg.patch_size);
    }
    return out;
}

template <typename T>
PretrainOutput<T> forward_pretrain(ad::Tape<T>& tape, const ModelParams<T>& params,
                                   const ModelConfig& cfg,
                                   std::span<const geometry::PointCloud> clouds, std::uint64_t seed) {
    const auto patches = tokenize_clouds(clouds, cfg);
    return forward_pretrain(tape, params, cfg, std::span<const geometry::PatchSet>(patches), seed);
}

template <typename T>
ad::Tensor<T> global_features(ad::Tape<T>& tape, const ModelParams<T>& params, const ModelConfig& cfg,
                              std::span<const geometry::PatchSet> batch) {
    if (batch.empty()) throw std::invalid_argument("global_features: empty batch");
    const std::size_t n = batch.front().n();
    auto tokens = embed_patches(tape, params.tokenizer, stack_patches<T>(batch), batch.front().k);
    auto pos = pos_embed(tape, params.pos, stack_centers<T>(batch));
    auto z = encode(tape, params.encoder, tokens, pos, n, cfg.heads);
    return ad::concat_cols(tape, ad::group_max(tape, z, n), ad::group_mean(tape, z, n));
}

#define PCMAE_MODEL_INSTANTIATE(T)                                                                       \
    template struct ModelParams<T>;                                                                      \
    template Stack<T> make_stack<T>(std::size_t, std::size_t, std::size_t, std::uint64_t);               \
    template ad::Tensor<T> transformer_block(ad::Tape<T>&, const Block<T>&, const ad::Tensor<T>&,       \
                                             std::size_t, std::size_t);                                  \
    template ad::Tensor<T> run_stack(ad::Tape<T>&, const Stack<T>&, const ad::Tensor<T>&, std::size_t,  \
                                     std::size_t);                                                       \
    template ad::Tensor<T> embed_patches(ad::Tape<T>&, const Tokenizer<T>&, const ad::Tensor<T>&,       \
                                         std::size_t);                                                   \
    template ad::Tensor<T> pos_embed(ad::Tape<T>&, const PosEmbed<T>&, const ad::Tensor<T>&);           \
    template ad::Tensor<T> encode(ad::Tape<T>&, const Stack<T>&, const ad::Tensor<T>&,                  \
                                  const ad::Tensor<T>&, std::size_t, std::size_t);                       \
    template ad::Tensor<T> decode(ad::Tape<T>&, const ModelParams<T>&, const ad::Tensor<T>&,            \
                                  const ad::Tensor<T>&, int, std::size_t, std::size_t, std::size_t,      \
                                  std::size_t);                                                          \
    template ad::Tensor<T> reconstruct(ad::Tape<T>&, const Linear<T>&, const ad::Tensor<T>&,            \
                                       std::size_t);                                                     \
    template ad::Tensor<T> stack_patches<T>(std::span<const geometry::PatchSet>);                        \
    template ad::Tensor<T> stack_centers<T>(std::span<const geometry::PatchSet>);                        \
    template PretrainOutput<T> forward_pretrain(ad::Tape<T>&, const ModelParams<T>&, const ModelConfig&, \
                                                std::span<const geometry::PatchSet>, std::uint64_t);     \
    template PretrainOutput<T> forward_pretrain(ad::Tape<T>&, const ModelParams<T>&, const ModelConfig&, \
                                                std::span<const geometry::PointCloud>, std::uint64_t);   \
    template ad::Tensor<T> global_features(ad::Tape<T>&, const ModelParams<T>&, const ModelConfig&,     \
                                           std::span<const geometry::PatchSet>);

PCMAE_MODEL_INSTANTIATE(float)
PCMAE_MODEL_INSTANTIATE(double)

#undef PCMAE_MODEL_INSTANTIATE

}  // namespace model
}  // namespace pcmae

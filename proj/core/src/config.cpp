#include "pcmae/config.hpp"

namespace pcmae {

std::size_t TrainConfig::steps_per_epoch() const {
    const std::size_t n = data.size();
    return batch_size == 0 ? 0 : (n + batch_size - 1) / batch_size;
}

std::size_t TrainConfig::total_steps() const { return epochs * steps_per_epoch(); }
std::size_t TrainConfig::warmup_steps() const { return warmup_epochs * steps_per_epoch(); }

std::size_t TrainConfig::run_steps() const {
    return max_steps == 0 ? total_steps() : std::min(max_steps, total_steps());
}

void TrainConfig::validate() const {
    try {
        model.validate();
        data.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
    if (epochs < 1) fail("epochs must be >= 1");
    if (warmup_epochs >= epochs) fail("warmup_epochs must be < epochs");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (!(min_lr > 0.0)) fail("min_lr must be > 0");
    if (!(base_lr > min_lr)) fail("base_lr must exceed min_lr");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
    if (!(eps > 0.0)) fail("eps must be > 0");
    if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
    if (data.points != model.points_per_cloud)
        fail("data.points (" + std::to_string(data.points) + ") must equal model.points_per_cloud (" +
             std::to_string(model.points_per_cloud) + ")");
}

ini::Document TrainConfig::to_document() const {
    ini::Document doc;
    const auto u = [](std::size_t v) { return static_cast<std::uint64_t>(v); };
    doc.set("model", "dim", u(model.dim));
    doc.set("model", "encoder_depth", u(model.encoder_depth));
    doc.set("model", "decoder_depth", u(model.decoder_depth));
    doc.set("model", "heads", u(model.heads));
    doc.set("model", "mlp_ratio", u(model.mlp_ratio));
    doc.set("model", "num_patches", u(model.num_patches));
    doc.set("model", "patch_size", u(model.patch_size));
    doc.set("model", "points_per_cloud", u(model.points_per_cloud));
    doc.set("model", "pos_hidden", u(model.pos_hidden));
    doc.set("model", "mask_ratio", model.mask_ratio);
    doc.set("model", "lambda", model.lambda);
    doc.set("model", "dual_mask", model.dual_mask);
    doc.set("model", "share_encoder", model.share_encoder);
    doc.set("model", "share_decoder", model.share_decoder);
    doc.set("model", "contrastive", model.contrastive);

    doc.set("train", "epochs", u(epochs));
    doc.set("train", "warmup_epochs", u(warmup_epochs));
    doc.set("train", "batch_size", u(batch_size));
    doc.set("train", "base_lr", base_lr);
    doc.set("train", "min_lr", min_lr);
    doc.set("train", "weight_decay", weight_decay);
    doc.set("train", "beta1", beta1);
    doc.set("train", "beta2", beta2);
    doc.set("train", "eps", eps);
    doc.set("train", "seed", seed);
    doc.set("train", "checkpoint_every", u(checkpoint_every));
    doc.set("train", "max_steps", u(max_steps));
    doc.set("train", "augment_scale_translate", augment_scale_translate);
    doc.set("train", "augment_rotate", augment_rotate);

    data.write(doc, "data");
    return doc;
}

TrainConfig TrainConfig::from_document(const ini::Document& doc, const TrainConfig& base) {
    try {
        doc.require_known_sections({"model", "train", "data", "state"});
        doc.require_known_keys("model", {"dim", "encoder_depth", "decoder_depth", "heads", "mlp_ratio",
                                         "num_patches", "patch_size", "points_per_cloud", "pos_hidden",
                                         "mask_ratio", "lambda", "dual_mask", "share_encoder", "share_decoder",
                                         "contrastive"});
        doc.require_known_keys("train", {"epochs", "warmup_epochs", "batch_size", "base_lr", "min_lr",
                                         "weight_decay", "beta1", "beta2", "eps", "seed", "checkpoint_every",
                                         "max_steps", "augment_scale_translate", "augment_rotate"});
        TrainConfig c = base;
        auto& m = c.model;
        m.dim = doc.get_uint("model", "dim", m.dim);
        m.encoder_depth = doc.get_uint("model", "encoder_depth", m.encoder_depth);
        m.decoder_depth = doc.get_uint("model", "decoder_depth", m.decoder_depth);
        m.heads = doc.get_uint("model", "heads", m.heads);
        m.mlp_ratio = doc.get_uint("model", "mlp_ratio", m.mlp_ratio);
        m.num_patches = doc.get_uint("model", "num_patches", m.num_patches);
        m.patch_size = doc.get_uint("model", "patch_size", m.patch_size);
        m.points_per_cloud = doc.get_uint("model", "points_per_cloud", m.points_per_cloud);
        m.pos_hidden = doc.get_uint("model", "pos_hidden", m.pos_hidden);
        m.mask_ratio = doc.get_double("model", "mask_ratio", m.mask_ratio);
        m.lambda = doc.get_double("model", "lambda", m.lambda);
        m.dual_mask = doc.get_bool("model", "dual_mask", m.dual_mask);
        m.share_encoder = doc.get_bool("model", "share_encoder", m.share_encoder);
        m.share_decoder = doc.get_bool("model", "share_decoder", m.share_decoder);
        m.contrastive = doc.get_bool("model", "contrastive", m.contrastive);

        c.epochs = doc.get_uint("train", "epochs", c.epochs);
        c.warmup_epochs = doc.get_uint("train", "warmup_epochs", c.warmup_epochs);
        c.batch_size = doc.get_uint("train", "batch_size", c.batch_size);
        c.base_lr = doc.get_double("train", "base_lr", c.base_lr);
        c.min_lr = doc.get_double("train", "min_lr", c.min_lr);
        c.weight_decay = doc.get_double("train", "weight_decay", c.weight_decay);
        c.beta1 = doc.get_double("train", "beta1", c.beta1);
        c.beta2 = doc.get_double("train", "beta2", c.beta2);
        c.eps = doc.get_double("train", "eps", c.eps);
        c.seed = doc.get_uint("train", "seed", c.seed);
        c.checkpoint_every = doc.get_uint("train", "checkpoint_every", c.checkpoint_every);
        c.max_steps = doc.get_uint("train", "max_steps", c.max_steps);
        c.augment_scale_translate = doc.get_bool("train", "augment_scale_translate", c.augment_scale_translate);
        c.augment_rotate = doc.get_bool("train", "augment_rotate", c.augment_rotate);

        if (doc.has_section("data")) {
            ini::Document merged;
            c.data.write(merged, "data");
            for (const auto* key : {"split", "count_per_class", "seed", "points", "jitter", "families"})
                if (const auto v = doc.get("data", key)) merged.set("data", key, *v);
            doc.require_known_keys("data", {"split", "count_per_class", "seed", "points", "jitter", "families"});
            c.data = data::DatasetManifest::read(merged, "data");
        }
        c.validate();
        return c;
    } catch (const ini::ParseError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

TrainConfig TrainConfig::parse(std::string_view text) {
    ini::Document doc;
    try {
        doc = ini::Document::parse(text);
    } catch (const ini::ParseError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return from_document(doc, paper());
}

TrainConfig TrainConfig::paper() {
    TrainConfig c;
    c.model = ModelConfig::paper();
    c.data.points = c.model.points_per_cloud;
    return c;
}

TrainConfig TrainConfig::paper_table_lr() {
    TrainConfig c = paper();
    c.base_lr = 1e-3;
    return c;
}

TrainConfig TrainConfig::tiny() {
    TrainConfig c;
    c.model = ModelConfig::tiny();
    c.data.count_per_class = 64;  // 8 families x 64 = 512 clouds
    c.data.points = c.model.points_per_cloud;
    c.batch_size = 64;
    c.epochs = 25;  // 8 steps per epoch -> 200 steps
    c.warmup_epochs = 2;
    c.base_lr = 1e-3;
    c.checkpoint_every = 5;
    return c;
}

TrainConfig TrainConfig::preset(std::string_view name) {
    if (name == "paper") return paper();
    if (name == "paper-table-lr") return paper_table_lr();
    if (name == "tiny") return tiny();
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected paper, paper-table-lr or tiny)");
}

}  // namespace pcmae

#pragma once

#include "pcmae/dataset.hpp"
#include "pcmae/ini.hpp"
#include "pcmae/model.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace pcmae {

/// Invalid or inconsistent configuration.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
    ModelConfig model;
    data::DatasetManifest data;

    std::size_t epochs = 300;
    std::size_t warmup_epochs = 10;
    std::size_t batch_size = 128;
    double base_lr = 5e-4;
    double min_lr = 1e-6;
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 25;  // epochs
    /// Stop after this many optimizer steps (0 = run the full schedule). The
    /// schedule itself is still laid out over all epochs.
    std::size_t max_steps = 0;
    bool augment_scale_translate = true;
    bool augment_rotate = true;

    std::size_t steps_per_epoch() const;
    std::size_t total_steps() const;
    std::size_t warmup_steps() const;
    /// Steps actually executed: total_steps(), capped by max_steps.
    std::size_t run_steps() const;

    /// Throws ConfigError describing the first violated constraint.
    void validate() const;

    ini::Document to_document() const;
    std::string to_text() const { return to_document().to_text(); }
    /// Unknown sections or keys are errors. Missing keys keep the defaults of
    /// `base` (`TrainConfig::paper()` unless given).
    static TrainConfig from_document(const ini::Document& doc, const TrainConfig& base);
    static TrainConfig parse(std::string_view text);

    /// C=384, depth 12/4, n=64, k=32, 300 epochs, lr 5e-4, batch 128.
    static TrainConfig paper();
    /// As `paper` with the recipe-table pre-training lr of 1e-3.
    static TrainConfig paper_table_lr();
    /// C=64, depth 4/2, n=32, k=16; 512 clouds, 200 steps.
    static TrainConfig tiny();
    /// "paper", "paper-table-lr" or "tiny"; ConfigError otherwise.
    static TrainConfig preset(std::string_view name);
};

}  // namespace pcmae

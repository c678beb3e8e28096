#pragma once

#include "pcmae/checkpoint.hpp"
#include "pcmae/config.hpp"
#include "pcmae/geometry.hpp"
#include "pcmae/losses.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcmae::train {

/// Non-finite loss or a failure surfaced with the step it happened at.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StepRecord {
    std::uint64_t step = 0;  // 1-based index of the optimizer step
    double lr = 0;
    losses::LossReport report;
};

/// {"step":..,"lr":..,"recon1":..,["recon2":..,]["contras":..,]"total":..,"comask_count":..}
std::string to_json_line(const StepRecord& rec);
StepRecord parse_json_line(const std::string& line);

/// Fresh parameters and zeroed moments for `config`.
Checkpoint init_state(const TrainConfig& config);

/// The clouds used at optimizer step `step` (0-based): the seeded epoch
/// permutation sliced to the batch, then the configured augmentations.
std::vector<geometry::PointCloud> make_batch(const TrainConfig& config, std::span<const geometry::PointCloud> dataset,
                                             std::uint64_t step);

/// Loss of the batch for step `state.step` under the current parameters,
/// without updating anything.
losses::LossReport evaluate_step(const Checkpoint& state, std::span<const geometry::PointCloud> dataset);

/// Forward, backward and AdamW update for step `state.step`; advances it.
/// The record carries the loss measured before the update.
StepRecord train_step(Checkpoint& state, std::span<const geometry::PointCloud> dataset);

struct TrainOptions {
    /// When set, metrics.jsonl and checkpoints are written here.
    std::optional<std::filesystem::path> run_dir;
    std::function<void(const StepRecord&)> on_step;
};

/// Runs from `state.step` to config.run_steps(). Metrics are flushed at the
/// end of every epoch; checkpoints go to ckpt_epoch_NNNN.pcme every
/// checkpoint_every epochs, and to latest.pcme / final.pcme at the end.
/// On resume, metric lines past the checkpoint step are discarded first.
std::vector<StepRecord> train(Checkpoint& state, std::span<const geometry::PointCloud> dataset,
                              const TrainOptions& options = {});

/// Trailing mean over `window` records ending at position i (inclusive).
std::vector<double> smoothed_totals(const std::vector<StepRecord>& trace, std::size_t window);

}  // namespace pcmae::train

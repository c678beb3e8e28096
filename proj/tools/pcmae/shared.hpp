#pragma once

#include "pcmae/checkpoint.hpp"
#include "pcmae/probe.hpp"
#include "pcmae/trainer.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace pcmae::cli {

/// Trains `state` to its configured step count, logging every `log_every`
/// steps (0 = silent).
Checkpoint pretrain_run(Checkpoint state, const std::filesystem::path& dir, std::ostream& out,
                        std::size_t log_every);

/// Probe of the checkpoint's encoder on fresh "probe-train" / "probe-test"
/// splits of its dataset manifest, seeds 0 .. seeds-1.
eval::ProbeResult probe_checkpoint(const Checkpoint& ckpt, const std::string& protocol, std::size_t seeds,
                                   std::size_t epochs, std::size_t train_per_class, std::size_t test_per_class,
                                   bool shuffle_labels);

std::optional<train::StepRecord> read_last_metrics(const std::filesystem::path& path);

}  // namespace pcmae::cli

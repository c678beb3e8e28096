#pragma once

#include "pcmae/config.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcmae::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2, kVerification = 3 };

/// Bad flags or flag combinations; maps to exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// An oracle or gradient check failed; maps to exit code 3.
struct VerificationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Parses `args` (without the program name) and runs the chosen command.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct PretrainOptions {
    std::string config_path;
    std::string preset = "tiny";
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    bool resume = false;
    bool no_dual_mask = false;
    bool no_contrastive = false;
    bool share_decoder = false;
    bool separate_encoders = false;
    std::optional<double> mask_ratio;
    std::optional<double> lambda;
    std::optional<std::size_t> max_steps;
    std::optional<std::size_t> epochs;
    bool init_only = false;
    std::size_t log_every = 10;
};

/// Preset, then config file, then individual flags. Throws UsageError.
TrainConfig resolve_config(const PretrainOptions& opts);
int cmd_pretrain(const PretrainOptions& opts, std::ostream& out);

struct ProbeOptions {
    std::string ckpt;
    std::string protocol = "linear";
    std::size_t seeds = 3;
    bool shuffle_labels = false;
    std::size_t epochs = 100;
    std::size_t train_per_class = 32;
    std::size_t test_per_class = 16;
    std::string results_dir;  // default: the checkpoint's directory
};
int cmd_probe(const ProbeOptions& opts, std::ostream& out);

struct FewShotOptions {
    std::string ckpt;
    std::size_t way = 5;
    std::size_t shot = 10;
    std::size_t episodes = 10;
    std::uint64_t seed = 0;
    std::size_t epochs = 100;
    std::string results_dir;
};
int cmd_fewshot(const FewShotOptions& opts, std::ostream& out);

struct SweepOptions {
    std::string preset = "tiny";
    std::string config_path;
    std::string out_dir;
    std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> max_steps;
    std::size_t probe_seeds = 3;
    std::size_t probe_epochs = 100;
};
int cmd_sweep(const SweepOptions& opts, std::ostream& out);

struct MaskStatsOptions {
    std::size_t n = 64;
    double ratio = 0.6;
    std::size_t trials = 100000;
    std::string mode = "both";
    std::uint64_t seed = 0;
};
int cmd_maskstats(const MaskStatsOptions& opts, std::ostream& out);

struct GradcheckOptions {
    std::string preset = "micro";
    std::size_t sample = 0;
    double step = 1e-5;
    double tolerance = 1e-4;
    std::uint64_t seed = 11;
};
int cmd_gradcheck(const GradcheckOptions& opts, std::ostream& out);

struct VerifyOptions {
    std::uint64_t seed = 2024;
    std::size_t trials = 100000;
    std::size_t cases = 100;
    bool no_gradients = false;
};
int cmd_verify(const VerifyOptions& opts, std::ostream& out);

int cmd_chamfer(const std::string& a, const std::string& b, std::ostream& out);

struct ShapeOptions {
    std::string family = "sphere";
    std::uint64_t seed = 0;
    std::size_t points = 1024;
    std::string out_path;
    bool raw = false;
};
int cmd_shape(const ShapeOptions& opts, std::ostream& out);

}  // namespace pcmae::cli

#include "shared.hpp"

#include "cli.hpp"

#include "pcmae/dataset.hpp"

#include <fstream>
#include <numeric>

namespace pcmae::cli {

eval::ProbeResult probe_checkpoint(const Checkpoint& ckpt, const std::string& protocol, std::size_t seeds,
                                   std::size_t epochs, std::size_t train_per_class, std::size_t test_per_class,
                                   bool shuffle_labels) {
    eval::ProbeProtocol p;
    try {
        p.kind = eval::parse_probe_kind(protocol);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (seeds == 0) throw UsageError("--seeds must be at least 1");
    if (epochs == 0) throw UsageError("--epochs must be at least 1");
    if (train_per_class == 0 || test_per_class == 0) throw UsageError("per-class counts must be at least 1");
    p.epochs = epochs;
    p.warmup_epochs = std::min(p.warmup_epochs, epochs - 1);
    const auto train = data::make_dataset(data::with_split(ckpt.config.data, "probe-train", train_per_class));
    const auto test = data::make_dataset(data::with_split(ckpt.config.data, "probe-test", test_per_class));
    std::vector<std::uint64_t> seed_list(seeds);
    std::iota(seed_list.begin(), seed_list.end(), std::uint64_t{0});
    return eval::run_probe(ckpt.params, ckpt.config.model, train, test, p, seed_list, shuffle_labels);
}

std::optional<train::StepRecord> read_last_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::string line, last;
    while (std::getline(in, line))
        if (!line.empty()) last = line;
    if (last.empty()) return std::nullopt;
    return train::parse_json_line(last);
}

}  // namespace pcmae::cli

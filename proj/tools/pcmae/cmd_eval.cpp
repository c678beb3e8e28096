#include "cli.hpp"
#include "run_dir.hpp"
#include "shared.hpp"

#include "pcmae/dataset.hpp"
#include "pcmae/probe.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>

namespace pcmae::cli {

namespace fs = std::filesystem;

namespace {

Checkpoint load_for_eval(const std::string& path) {
    if (path.empty()) throw UsageError("--ckpt is required");
    if (!fs::exists(path)) throw UsageError("checkpoint '" + path + "' does not exist");
    return load_checkpoint(path);
}

fs::path results_dir_for(const std::string& ckpt, const std::string& override_dir) {
    if (!override_dir.empty()) return override_dir;
    const auto parent = fs::path(ckpt).parent_path();
    return parent.empty() ? fs::path(".") : parent;
}

std::string pct(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100 * x);
    return buf;
}

}  // namespace

int cmd_probe(const ProbeOptions& opts, std::ostream& out) {
    const auto ckpt = load_for_eval(opts.ckpt);
    const auto result = probe_checkpoint(ckpt, opts.protocol, opts.seeds, opts.epochs, opts.train_per_class,
                                         opts.test_per_class, opts.shuffle_labels);
    const std::string kind(eval::to_string(result.kind));

    std::string table = "protocol " + kind + (opts.shuffle_labels ? " (shuffled training labels)" : "") +
                        ", checkpoint step " + std::to_string(ckpt.step) + ", " +
                        std::to_string(ckpt.config.data.num_classes()) + " classes, " +
                        std::to_string(opts.train_per_class) + "/" + std::to_string(opts.test_per_class) +
                        " train/test per class\n";
    table += "seed  accuracy\n";
    for (std::size_t i = 0; i < result.seeds.size(); ++i) {
        char line[64];
        std::snprintf(line, sizeof line, "%4llu  %8s\n", static_cast<unsigned long long>(result.seeds[i]),
                      pct(result.accuracies[i]).c_str());
        table += line;
    }
    table += "mean  " + pct(result.mean) + " +- " + pct(result.stddev) + "\n";
    out << table;

    nlohmann::ordered_json row;
    row["kind"] = "probe";
    row["ckpt"] = fs::path(opts.ckpt).filename().string();
    row["step"] = ckpt.step;
    row["protocol"] = kind;
    row["shuffled_labels"] = opts.shuffle_labels;
    row["epochs"] = opts.epochs;
    row["train_per_class"] = opts.train_per_class;
    row["test_per_class"] = opts.test_per_class;
    row["seeds"] = result.seeds;
    row["accuracies"] = result.accuracies;
    row["mean"] = result.mean;
    row["std"] = result.stddev;
    row["encoder_hash"] = result.encoder_hash_before;
    const auto dir = results_dir_for(opts.ckpt, opts.results_dir);
    fs::create_directories(dir);
    append_line(dir / "results.jsonl", row.dump());

    if (result.kind != eval::ProbeKind::full && result.encoder_hash_before != result.encoder_hash_after)
        throw VerificationFailure("encoder parameters changed under a frozen-backbone protocol");
    return kOk;
}

int cmd_fewshot(const FewShotOptions& opts, std::ostream& out) {
    if (opts.way == 0 || opts.shot == 0 || opts.episodes == 0) throw UsageError("--way, --shot and --episodes must be positive");
    if (opts.epochs == 0) throw UsageError("--epochs must be at least 1");
    const auto ckpt = load_for_eval(opts.ckpt);
    if (opts.way > ckpt.config.data.num_classes())
        throw UsageError("--way " + std::to_string(opts.way) + " exceeds the " +
                         std::to_string(ckpt.config.data.num_classes()) + " classes of the dataset");
    constexpr std::size_t kQueries = 20;
    const auto dataset = data::make_dataset(data::with_split(ckpt.config.data, "fewshot", opts.shot + kQueries));
    eval::ProbeProtocol head;
    head.kind = eval::ProbeKind::mlp3;
    head.epochs = opts.epochs;
    head.warmup_epochs = std::min(head.warmup_epochs, opts.epochs - 1);
    const auto result = eval::run_few_shot(ckpt.params, ckpt.config.model, dataset, opts.way, opts.shot,
                                           opts.episodes, opts.seed, head, kQueries);

    std::string table = std::to_string(opts.way) + "-way " + std::to_string(opts.shot) + "-shot, " +
                        std::to_string(opts.episodes) + " episodes, " + std::to_string(kQueries) +
                        " queries per class\n";
    table += "episode  accuracy\n";
    for (std::size_t i = 0; i < result.accuracies.size(); ++i) {
        char line[64];
        std::snprintf(line, sizeof line, "%7zu  %8s\n", i, pct(result.accuracies[i]).c_str());
        table += line;
    }
    table += "mean     " + pct(result.mean) + " +- " + pct(result.stddev) + "\n";
    out << table;

    nlohmann::ordered_json row;
    row["kind"] = "fewshot";
    row["ckpt"] = fs::path(opts.ckpt).filename().string();
    row["step"] = ckpt.step;
    row["way"] = opts.way;
    row["shot"] = opts.shot;
    row["episodes"] = opts.episodes;
    row["seed"] = opts.seed;
    row["accuracies"] = result.accuracies;
    row["mean"] = result.mean;
    row["std"] = result.stddev;
    const auto dir = results_dir_for(opts.ckpt, opts.results_dir);
    fs::create_directories(dir);
    append_line(dir / "results.jsonl", row.dump());
    return kOk;
}

}  // namespace pcmae::cli

#include "cli.hpp"
#include "run_dir.hpp"
#include "shared.hpp"

#include "pcmae/dataset.hpp"
#include "pcmae/probe.hpp"
#include "pcmae/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>

namespace pcmae::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kToggleHelp =
    "valid ablation rows: single-mask baseline (--no-dual-mask --no-contrastive); dual masking with or without "
    "--no-contrastive, optionally combined with --share-decoder or --separate-encoders";

std::string step_line(const train::StepRecord& r, std::size_t total) {
    char buf[256];
    int n = std::snprintf(buf, sizeof buf, "step %5llu/%zu  lr %.3e  total %.5f  recon1 %.5f",
                          static_cast<unsigned long long>(r.step), total, r.lr, r.report.total, r.report.recon1);
    if (r.report.has_recon2)
        n += std::snprintf(buf + n, sizeof buf - static_cast<std::size_t>(n), "  recon2 %.5f", r.report.recon2);
    if (r.report.has_contras)
        std::snprintf(buf + n, sizeof buf - static_cast<std::size_t>(n), "  contras %.5f  comask %zu",
                      r.report.contras, r.report.comask_count);
    return buf;
}

}  // namespace

TrainConfig resolve_config(const PretrainOptions& opts) {
    TrainConfig cfg;
    try {
        cfg = TrainConfig::preset(opts.preset);
        if (!opts.config_path.empty()) {
            const auto doc = ini::Document::parse(read_text_file(opts.config_path));
            cfg = TrainConfig::from_document(doc, cfg);
        }
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    } catch (const ini::ParseError& e) {
        throw UsageError(opts.config_path + ": " + e.what());
    } catch (const std::runtime_error& e) {
        throw UsageError(e.what());
    }
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.no_dual_mask) cfg.model.dual_mask = false;
    if (opts.no_contrastive) cfg.model.contrastive = false;
    if (opts.share_decoder) cfg.model.share_decoder = true;
    if (opts.separate_encoders) cfg.model.share_encoder = false;
    if (opts.mask_ratio) {
        if (!(*opts.mask_ratio > 0.0 && *opts.mask_ratio < 1.0))
            throw UsageError("--mask-ratio must lie strictly between 0 and 1, got " + ini::format_double(*opts.mask_ratio));
        cfg.model.mask_ratio = *opts.mask_ratio;
    }
    if (opts.lambda) cfg.model.lambda = *opts.lambda;
    if (opts.max_steps) cfg.max_steps = *opts.max_steps;
    if (opts.epochs) {
        cfg.epochs = *opts.epochs;
        cfg.warmup_epochs = std::min(cfg.warmup_epochs, cfg.epochs > 0 ? cfg.epochs - 1 : 0);
    }
    if (!cfg.model.dual_mask && (cfg.model.contrastive || cfg.model.share_decoder || !cfg.model.share_encoder)) {
        std::string what = cfg.model.share_decoder      ? "--share-decoder only applies to dual masking"
                           : !cfg.model.share_encoder ? "--separate-encoders only applies to dual masking"
                                                      : "the contrastive term needs two masks (add --no-contrastive)";
        throw UsageError("invalid toggle combination: " + what + "; " + kToggleHelp);
    }
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    return cfg;
}

Checkpoint pretrain_run(Checkpoint state, const fs::path& dir, std::ostream& out, std::size_t log_every) {
    const auto& cfg = state.config;
    const auto dataset = data::make_dataset(cfg.data);
    const std::size_t total = cfg.run_steps();
    train::TrainOptions topt;
    topt.run_dir = dir;
    topt.on_step = [&](const train::StepRecord& r) {
        if (log_every > 0 && (r.step % log_every == 0 || r.step == 1 || r.step == total))
            out << step_line(r, total) << std::endl;
    };
    train::train(state, dataset, topt);
    return state;
}

int cmd_pretrain(const PretrainOptions& opts, std::ostream& out) {
    if (opts.out_dir.empty()) throw UsageError("pretrain: --out is required");
    const fs::path dir(opts.out_dir);
    if (opts.resume) {
        if (!opts.config_path.empty() || opts.no_dual_mask || opts.no_contrastive || opts.share_decoder ||
            opts.separate_encoders || opts.mask_ratio || opts.lambda || opts.seed || opts.epochs || opts.init_only)
            throw UsageError("--resume takes its recipe from the run directory; only --max-steps may be combined with it");
        const fs::path latest = dir / "latest.pcme";
        if (!fs::exists(latest)) throw UsageError("--resume: no checkpoint at '" + latest.string() + "'");
        RunLock lock(dir);
        auto state = load_checkpoint(latest);
        if (opts.max_steps) state.config.max_steps = *opts.max_steps;
        if (state.step >= state.config.run_steps()) {
            out << "run already complete at step " << state.step << "\n";
            return kOk;
        }
        out << "resuming " << dir.string() << " at step " << state.step << " of " << state.config.run_steps() << "\n";
        const auto final_state = pretrain_run(std::move(state), dir, out, opts.log_every);
        out << "finished at step " << final_state.step << "; checkpoint " << (dir / "final.pcme").string() << "\n";
        return kOk;
    }

    const auto cfg = resolve_config(opts);
    if (fs::exists(dir / "latest.pcme") || fs::exists(dir / "final.pcme"))
        throw UsageError("'" + dir.string() + "' already holds a run; pass --resume or choose another --out");
    RunLock lock(dir);
    write_text_file(dir / "config.ini", cfg.to_text());
    {
        ini::Document manifest;
        cfg.data.write(manifest, "data");
        write_text_file(dir / "manifest.ini", manifest.to_text());
    }
    auto state = train::init_state(cfg);
    out << "model: " << state.params.parameter_count() << " parameters (" << state.params.encoder_parameter_count()
        << " in tokenizer + positional MLP + encoder)\n";
    out << "data: " << cfg.data.size() << " clouds, " << cfg.steps_per_epoch() << " steps/epoch, "
        << cfg.run_steps() << " of " << cfg.total_steps() << " scheduled steps\n";
    if (opts.init_only) {
        save_checkpoint(state, dir / "final.pcme");
        save_checkpoint(state, dir / "latest.pcme");
        out << "wrote initial checkpoint " << (dir / "final.pcme").string() << "\n";
        return kOk;
    }
    const auto final_state = pretrain_run(std::move(state), dir, out, opts.log_every);
    out << "finished at step " << final_state.step << "; checkpoint " << (dir / "final.pcme").string() << "\n";
    return kOk;
}

int cmd_sweep(const SweepOptions& opts, std::ostream& out) {
    if (opts.out_dir.empty()) throw UsageError("sweep: --out is required");
    if (opts.ratios.empty()) throw UsageError("sweep: --ratios is empty");
    const fs::path root(opts.out_dir);
    fs::create_directories(root);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    std::vector<std::string> table;
    std::vector<std::pair<double, double>> ranking;
    for (double r : opts.ratios) {
        PretrainOptions p;
        p.preset = opts.preset;
        p.config_path = opts.config_path;
        p.seed = opts.seed;
        p.max_steps = opts.max_steps;
        p.mask_ratio = r;
        const auto cfg = resolve_config(p);
        char name[32];
        std::snprintf(name, sizeof name, "ratio_%.2f", r);
        const fs::path dir = root / name;
        Checkpoint state;
        if (fs::exists(dir / "final.pcme")) {
            state = load_checkpoint(dir / "final.pcme");
            if (state.config.to_text() != cfg.to_text())
                throw UsageError("'" + dir.string() + "' holds a run with a different recipe");
            out << "ratio " << r << ": reusing " << (dir / "final.pcme").string() << "\n";
        } else {
            RunLock lock(dir);
            write_text_file(dir / "config.ini", cfg.to_text());
            out << "ratio " << r << ": pre-training " << cfg.run_steps() << " steps\n";
            state = pretrain_run(train::init_state(cfg), dir, out, 0);
        }
        const auto last = read_last_metrics(dir / "metrics.jsonl");
        const auto probe = probe_checkpoint(state, "linear", opts.probe_seeds, opts.probe_epochs, 32, 16, false);
        ranking.emplace_back(r, probe.mean);
        nlohmann::ordered_json row;
        row["mask_ratio"] = r;
        row["masked_tokens"] = cfg.model.masked_count();
        row["steps"] = state.step;
        row["final_total"] = last ? last->report.total : 0.0;
        row["probe_protocol"] = "linear";
        row["probe_mean"] = probe.mean;
        row["probe_std"] = probe.stddev;
        row["probe_accuracies"] = probe.accuracies;
        rows.push_back(row);
        char line[160];
        std::snprintf(line, sizeof line, "%5.2f  %6zu  %11.5f  %9.2f  %8.2f", r, cfg.model.masked_count(),
                      last ? last->report.total : 0.0, 100 * probe.mean, 100 * probe.stddev);
        table.emplace_back(line);
    }
    std::string text = "ratio  masked  final-total  probe-acc  probe-std\n";
    for (const auto& l : table) text += l + "\n";
    std::stable_sort(ranking.begin(), ranking.end(), [](auto a, auto b) { return a.second > b.second; });
    text += "observed ranking by probe accuracy:";
    for (const auto& [r, acc] : ranking) {
        char buf[48];
        std::snprintf(buf, sizeof buf, " %.2f (%.2f%%)", r, 100 * acc);
        text += buf;
    }
    text += "\n";
    out << text;
    write_text_file(root / "sweep.txt", text);
    std::string jsonl;
    for (const auto& row : rows) jsonl += row.dump() + "\n";
    write_text_file(root / "sweep.jsonl", jsonl);
    return kOk;
}

}  // namespace pcmae::cli

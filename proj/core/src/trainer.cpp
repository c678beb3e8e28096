#include "pcmae/trainer.hpp"

#include "pcmae/dataset.hpp"
#include "pcmae/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace pcmae::train {

namespace {

constexpr std::uint64_t kTagInit = 0x696e6974;
constexpr std::uint64_t kTagShuffle = 0x73687566;
constexpr std::uint64_t kTagAugment = 0x61756731;
constexpr std::uint64_t kTagRotate = 0x61756732;
constexpr std::uint64_t kTagMask = 0x6d61736b;

optim::AdamWHyper hyper(const TrainConfig& c) { return {c.weight_decay, c.beta1, c.beta2, c.eps}; }

std::string epoch_name(std::size_t epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_epoch_%04zu.pcme", epoch);
    return buf;
}

void append_lines(const std::filesystem::path& path, std::vector<std::string>& lines, std::uint64_t step) {
    if (lines.empty()) return;
    std::ofstream out(path, std::ios::app);
    for (const auto& l : lines) out << l << '\n';
    out.flush();
    if (!out) throw TrainingError("step " + std::to_string(step) + ": cannot write metrics to '" + path.string() + "'");
    lines.clear();
}

void truncate_metrics(const std::filesystem::path& path, std::uint64_t keep_through) {
    if (!std::filesystem::exists(path)) return;
    std::ifstream in(path);
    std::vector<std::string> kept;
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        if (parse_json_line(line).step <= keep_through) kept.push_back(line);
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : kept) out << l << '\n';
}

struct StepOutcome {
    losses::LossReport report;
    double lr = 0;
};

StepOutcome run_step(Checkpoint& state, std::span<const geometry::PointCloud> dataset, bool update) {
    const auto& cfg = state.config;
    const auto clouds = make_batch(cfg, dataset, state.step);
    const auto patches = model::tokenize_clouds(clouds, cfg.model);
    ad::Tape<float> tape(update ? ad::Tape<float>::Mode::record : ad::Tape<float>::Mode::inference);
    const auto out = model::forward_pretrain(tape, state.params, cfg.model, std::span<const geometry::PatchSet>(patches),
                                             derive_seed(cfg.seed, kTagMask, state.step));
    auto loss = losses::pretrain_loss(tape, out, cfg.model);
    if (!std::isfinite(loss.report.total) || !loss.total.all_finite())
        throw TrainingError("step " + std::to_string(state.step + 1) + ": non-finite loss (recon1=" +
                            std::to_string(loss.report.recon1) + ", recon2=" + std::to_string(loss.report.recon2) +
                            ", contras=" + std::to_string(loss.report.contras) + ")");
    StepOutcome res{loss.report, 0.0};
    if (!update) return res;
    res.lr = optim::lr_at(state.step + 1, cfg.total_steps(), cfg.warmup_steps(), cfg.base_lr, cfg.min_lr);
    state.params.zero_grad();
    tape.backward(loss.total);
    auto params = named_parameters(state.params);
    if (state.optimizer.m.empty()) state.optimizer = optim::AdamWState::zeros_like(params);
    try {
        optim::adamw_step(params, state.optimizer, res.lr, hyper(cfg));
    } catch (const optim::NonFiniteError& e) {
        throw TrainingError("step " + std::to_string(state.step + 1) + ": " + e.what());
    }
    state.step += 1;
    return res;
}

}  // namespace

std::string to_json_line(const StepRecord& rec) {
    nlohmann::ordered_json j;
    j["step"] = rec.step;
    j["lr"] = rec.lr;
    j["recon1"] = rec.report.recon1;
    if (rec.report.has_recon2) j["recon2"] = rec.report.recon2;
    if (rec.report.has_contras) j["contras"] = rec.report.contras;
    j["total"] = rec.report.total;
    j["comask_count"] = rec.report.comask_count;
    return j.dump();
}

StepRecord parse_json_line(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        StepRecord r;
        r.step = j.at("step").get<std::uint64_t>();
        r.lr = j.at("lr").get<double>();
        r.report.recon1 = j.at("recon1").get<double>();
        r.report.has_recon2 = j.contains("recon2");
        r.report.recon2 = r.report.has_recon2 ? j["recon2"].get<double>() : 0.0;
        r.report.has_contras = j.contains("contras");
        r.report.contras = r.report.has_contras ? j["contras"].get<double>() : 0.0;
        r.report.total = j.at("total").get<double>();
        r.report.comask_count = j.at("comask_count").get<std::size_t>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw TrainingError(std::string("malformed metrics line: ") + e.what());
    }
}

Checkpoint init_state(const TrainConfig& config) {
    config.validate();
    Checkpoint c;
    c.config = config;
    c.step = 0;
    c.params = model::ModelParams<float>::init(config.model, derive_seed(config.seed, kTagInit));
    c.optimizer = optim::AdamWState::zeros_like(named_parameters(c.params));
    return c;
}

std::vector<geometry::PointCloud> make_batch(const TrainConfig& config, std::span<const geometry::PointCloud> dataset,
                                             std::uint64_t step) {
    if (dataset.empty()) throw TrainingError("training dataset is empty");
    const std::size_t n = dataset.size();
    const std::size_t spe = (n + config.batch_size - 1) / config.batch_size;
    const std::uint64_t epoch = step / spe, slot = step % spe;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, kTagShuffle, epoch));
    rng.shuffle(order.begin(), order.end());
    const std::size_t begin = slot * config.batch_size, end = std::min(n, begin + config.batch_size);
    std::vector<geometry::PointCloud> out;
    out.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        auto cloud = dataset[order[i]];
        if (config.augment_scale_translate)
            cloud = data::augment_scale_translate(cloud, derive_seed(config.seed, kTagAugment, step, i - begin));
        if (config.augment_rotate)
            cloud = data::augment_rotate(cloud, derive_seed(config.seed, kTagRotate, step, i - begin));
        out.push_back(std::move(cloud));
    }
    return out;
}

losses::LossReport evaluate_step(const Checkpoint& state, std::span<const geometry::PointCloud> dataset) {
    return run_step(const_cast<Checkpoint&>(state), dataset, false).report;
}

StepRecord train_step(Checkpoint& state, std::span<const geometry::PointCloud> dataset) {
    const auto res = run_step(state, dataset, true);
    return StepRecord{state.step, res.lr, res.report};
}

std::vector<StepRecord> train(Checkpoint& state, std::span<const geometry::PointCloud> dataset,
                              const TrainOptions& options) {
    const auto& cfg = state.config;
    cfg.validate();
    if (dataset.size() != cfg.data.size())
        throw TrainingError("dataset has " + std::to_string(dataset.size()) + " clouds, config expects " +
                            std::to_string(cfg.data.size()));
    const std::size_t spe = cfg.steps_per_epoch(), last = cfg.run_steps();
    std::filesystem::path metrics;
    if (options.run_dir) {
        std::filesystem::create_directories(*options.run_dir);
        metrics = *options.run_dir / "metrics.jsonl";
        truncate_metrics(metrics, state.step);
    }
    std::vector<StepRecord> trace;
    std::vector<std::string> pending;
    auto save = [&](const std::filesystem::path& p) {
        try {
            save_checkpoint(state, p);
        } catch (const std::exception& e) {
            throw TrainingError("step " + std::to_string(state.step) + ": " + e.what());
        }
    };
    while (state.step < last) {
        auto rec = train_step(state, dataset);
        if (options.on_step) options.on_step(rec);
        if (options.run_dir) pending.push_back(to_json_line(rec));
        trace.push_back(rec);
        if (state.step % spe == 0 && options.run_dir) {
            append_lines(metrics, pending, state.step);
            const std::size_t epoch = state.step / spe;
            if (epoch % cfg.checkpoint_every == 0) {
                save(*options.run_dir / epoch_name(epoch));
                save(*options.run_dir / "latest.pcme");
            }
        }
    }
    if (options.run_dir) {
        append_lines(metrics, pending, state.step);
        save(*options.run_dir / "final.pcme");
        save(*options.run_dir / "latest.pcme");
    }
    return trace;
}

std::vector<double> smoothed_totals(const std::vector<StepRecord>& trace, std::size_t window) {
    if (window == 0) throw std::invalid_argument("smoothed_totals: window must be >= 1");
    std::vector<double> out(trace.size());
    double acc = 0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        acc += trace[i].report.total;
        if (i >= window) acc -= trace[i - window].report.total;
        out[i] = acc / static_cast<double>(std::min(window, i + 1));
    }
    return out;
}

}  // namespace pcmae::train

// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
// Usage: pcmae_acceptance WORK_DIR [--sweep-steps N]

#include "cli.hpp"
#include "shared.hpp"

#include "pcmae/checkpoint.hpp"
#include "pcmae/dataset.hpp"
#include "pcmae/masking.hpp"
#include "pcmae/oracles.hpp"
#include "pcmae/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace pcmae;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    std::string id;
    bool passed = false;
    std::string summary;
    double seconds = 0;
};

std::vector<Outcome> g_outcomes;

template <class F>
void criterion(const std::string& id, F&& body) {
    std::cout << "---- " << id << '\n' << std::flush;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    o.id = id;
    try {
        body(o);
    } catch (const std::exception& e) {
        o.passed = false;
        o.summary = std::string("exception: ") + e.what();
    }
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s  %s  (%.1fs)\n", o.passed ? "PASS" : "FAIL", id.c_str(), o.summary.c_str(), o.seconds);
    std::fflush(stdout);
    g_outcomes.push_back(o);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void print_report(const verify::OracleReport& r) {
    std::istringstream in(verify::format_report(r));
    for (std::string line; std::getline(in, line);) std::cout << "  " << line << '\n';
}

std::vector<double> trailing_mean(const std::vector<double>& xs, std::size_t window) {
    std::vector<double> out(xs.size());
    double sum = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sum += xs[i];
        if (i >= window) sum -= xs[i - window];
        out[i] = sum / static_cast<double>(std::min(i + 1, window));
    }
    return out;
}

Checkpoint pretrain(const TrainConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    std::ostringstream log;
    auto state = cli::pretrain_run(train::init_state(cfg), dir, log, 0);
    save_checkpoint(state, dir / "final.pcme");
    return state;
}

std::vector<train::StepRecord> read_metrics(const fs::path& path) {
    std::vector<train::StepRecord> out;
    std::ifstream in(path);
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) out.push_back(train::parse_json_line(line));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: pcmae_acceptance WORK_DIR [--sweep-steps N]\n";
        return 2;
    }
    const fs::path work = argv[1];
    std::size_t sweep_steps = 60;
    for (int i = 2; i + 1 < argc; i += 2)
        if (std::strcmp(argv[i], "--sweep-steps") == 0) sweep_steps = std::stoul(argv[i + 1]);
    fs::remove_all(work);
    fs::create_directories(work);

    const TrainConfig tiny = TrainConfig::tiny();
    std::optional<Checkpoint> full_model;

    criterion("A1 kernel oracles", [&](Outcome& o) {
        o.passed = true;
        std::string s;
        for (const auto& r : {verify::oracle_fps(100, 1), verify::oracle_knn(100, 2), verify::oracle_chamfer(100, 3)}) {
            print_report(r);
            o.passed = o.passed && r.passed && r.cases >= 100 && r.mismatches == 0 && r.max_deviation <= 1e-6;
            s += fmt("%s %zu cases max-dev %.1e; ", r.name.c_str(), r.cases, r.max_deviation);
        }
        o.summary = s;
    });

    criterion("A2 co-mask probability", [&](Outcome& o) {
        const auto grid = verify::eq3_grid({4, 16, 64}, {0.25, 0.5, 0.75}, 100000, 17);
        bool ok = grid.size() == 9;
        double worst = 0;
        for (const auto& c : grid) {
            std::printf("  n=%-3zu r=%.2f analytic=%.6f mc=%.6f sigma=%.2e %s\n", c.n, c.ratio, c.analytic,
                        c.bernoulli, c.sigma, c.within ? "ok" : "OUT");
            ok = ok && c.within;
            if (c.sigma > 0) worst = std::max(worst, std::abs(c.bernoulli - c.analytic) / c.sigma);
        }
        const auto fc = verify::fixed_count_check(64, 0.6, 100000, 18);
        std::printf("  fixed n=64 r=0.6: p=%.6f mean=%.4f expected=%.4f sigma=%.2e\n", fc.probability,
                    fc.mean_comask, fc.expected_mean, fc.sigma_mean);
        const bool fixed_ok = fc.probability == 1.0 && std::abs(fc.expected_mean - 22.5625) < 1e-12 &&
                              std::abs(fc.mean_comask - 22.5625) <= 3 * fc.sigma_mean;
        o.passed = ok && fixed_ok;
        o.summary = fmt("9 cells, worst %.2f sigma; fixed p=%.1f mean %.4f vs 22.5625", worst, fc.probability,
                        fc.mean_comask);
    });

    criterion("A3 desk-scale learning", [&](Outcome& o) {
        const auto dir = work / "full";
        auto state = pretrain(tiny, dir);
        const auto trace = read_metrics(dir / "metrics.jsonl");
        std::vector<double> total, contras;
        for (const auto& r : trace) {
            total.push_back(r.report.total);
            contras.push_back(r.report.contras);
        }
        const auto st = trailing_mean(total, 10), sc = trailing_mean(contras, 10);
        const bool sizes = trace.size() == 200 && tiny.data.count_per_class * 8 == 512;
        o.passed = sizes && st.back() <= 0.5 * st.front() && sc.back() <= 0.7 * sc.front();
        o.summary = fmt("%zu steps; smoothed total %.4f -> %.4f (%.3fx); contras %.4f -> %.5f (%.3fx)", trace.size(),
                        st.front(), st.back(), st.back() / st.front(), sc.front(), sc.back(), sc.back() / sc.front());
        full_model = std::move(state);
    });

    double full_probe = -1;
    criterion("A4 linear probe", [&](Outcome& o) {
        if (!full_model) full_model = load_checkpoint(work / "full" / "final.pcme");
        const auto trained = cli::probe_checkpoint(*full_model, "linear", 3, 100, 32, 16, false);
        const auto random = cli::probe_checkpoint(train::init_state(tiny), "linear", 3, 100, 32, 16, false);
        full_probe = trained.mean;
        o.passed = trained.mean >= 0.125 + 0.40 && trained.mean > random.mean;
        o.summary = fmt("pretrained %.2f%% +- %.2f vs random init %.2f%% +- %.2f (chance 12.5%%)", 100 * trained.mean,
                        100 * trained.stddev, 100 * random.mean, 100 * random.stddev);
    });

    criterion("A5 ablation direction", [&](Outcome& o) {
        auto cfg = tiny;
        cfg.model.dual_mask = false;
        cfg.model.contrastive = false;
        const auto base = pretrain(cfg, work / "baseline");
        const auto b = cli::probe_checkpoint(base, "linear", 3, 100, 32, 16, false);
        if (full_probe < 0) {
            if (!full_model) full_model = load_checkpoint(work / "full" / "final.pcme");
            full_probe = cli::probe_checkpoint(*full_model, "linear", 3, 100, 32, 16, false).mean;
        }
        o.passed = full_probe >= b.mean;
        o.summary = fmt("full %.2f%% vs single-mask baseline %.2f%% (margin %+.2f points)", 100 * full_probe,
                        100 * b.mean, 100 * (full_probe - b.mean));
    });

    criterion("A6 gradient correctness", [&](Outcome& o) {
        const auto r = verify::oracle_gradients(verify::default_grad_cases());
        print_report(r);
        o.passed = r.passed && r.cases == 8 && r.max_deviation <= 1e-4;
        o.summary = fmt("%zu toggle/lambda cases, max rel err %.2e", r.cases, r.max_deviation);
    });

    criterion("A7 determinism and resume", [&](Outcome& o) {
        const auto ds = data::make_dataset(tiny.data);
        auto a = train::init_state(tiny), b = train::init_state(tiny);
        bool identical = true;
        std::string resumed_bytes;
        for (int i = 0; i < 10; ++i) {
            const auto ra = train::train_step(a, ds), rb = train::train_step(b, ds);
            identical = identical && ra.report.total == rb.report.total && ra.report.contras == rb.report.contras;
            if (i == 4) resumed_bytes = serialize_checkpoint(a);
        }
        auto resumed = parse_checkpoint(resumed_bytes);
        const fs::path file = work / "a7.pcme";
        save_checkpoint(resumed, file);
        resumed = load_checkpoint(file);
        auto ref = train::init_state(tiny);
        for (int i = 0; i < 5; ++i) train::train_step(ref, ds);
        const auto next_ref = train::train_step(ref, ds);
        const auto next_res = train::train_step(resumed, ds);
        const bool same_next = next_ref.report.total == next_res.report.total;
        o.passed = identical && same_next;
        o.summary = fmt("10-step traces %s; step-6 loss after resume %.17g vs %.17g",
                        identical ? "bitwise identical" : "DIFFER", next_res.report.total, next_ref.report.total);
    });

    criterion("A8 mask-ratio sweep", [&](Outcome& o) {
        cli::SweepOptions sw;
        sw.out_dir = (work / "sweep").string();
        sw.max_steps = sweep_steps;
        std::ostringstream out;
        const int code = cli::cmd_sweep(sw, out);
        std::istringstream lines(out.str());
        for (std::string line; std::getline(lines, line);) std::cout << "  " << line << '\n';
        const auto table = out.str();
        const bool has_rows = table.find("0.10") != std::string::npos && table.find("0.90") != std::string::npos;
        o.passed = code == 0 && has_rows && table.find("observed ranking") != std::string::npos;
        const auto at = table.find("observed ranking");
        o.summary = fmt("9 ratios x %zu steps; %s", sweep_steps,
                        at == std::string::npos ? "no ranking" : table.substr(at, table.find('\n', at) - at).c_str());
    });

    std::cout << "\n==== summary\n";
    bool all = true;
    for (const auto& o : g_outcomes) {
        std::printf("%s %s  %s\n", o.passed ? "PASS" : "FAIL", o.id.c_str(), o.summary.c_str());
        all = all && o.passed;
    }
    return all ? 0 : 1;
}

#include "cli.hpp"

#include "pcmae/cloud_io.hpp"
#include "pcmae/losses.hpp"
#include "pcmae/masking.hpp"
#include "pcmae/oracles.hpp"
#include "pcmae/shapes.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

namespace pcmae::cli {

namespace {

bool report_all(const std::vector<verify::OracleReport>& reports, std::ostream& out) {
    bool ok = true;
    for (const auto& r : reports) {
        out << verify::format_report(r);
        ok = ok && r.passed;
    }
    out << (ok ? "all checks passed" : "verification FAILED") << "\n";
    return ok;
}

}  // namespace

int cmd_maskstats(const MaskStatsOptions& opts, std::ostream& out) {
    if (opts.n == 0) throw UsageError("--n must be positive");
    if (!(opts.ratio >= 0.0 && opts.ratio <= 1.0)) throw UsageError("--ratio must lie in [0, 1]");
    if (opts.trials == 0) throw UsageError("--trials must be positive");
    const bool bern = opts.mode == "both" || opts.mode == "bernoulli";
    const bool fixed = opts.mode == "both" || opts.mode == "fixed";
    if (!bern && !fixed) throw UsageError("--mode must be bernoulli, fixed or both, got '" + opts.mode + "'");

    const double p = masking::comask_probability(opts.n, opts.ratio);
    const std::size_t k = masking::mask_count(opts.n, opts.ratio);
    char line[256];
    std::snprintf(line, sizeof line, "n = %zu, r = %.4g, trials = %zu, seed = %llu\n", opts.n, opts.ratio, opts.trials,
                  static_cast<unsigned long long>(opts.seed));
    out << line;
    std::snprintf(line, sizeof line, "analytic p = 1 - (1 - r^2)^n = %.6f  (1 - p = %.3e)\n", p, 1.0 - p);
    out << line;
    out << "mode        p(|comask| > 0)  stderr      mean |comask|  std |comask|\n";
    auto row = [&](masking::MaskModel m) {
        const auto est = masking::comask_probability_mc(opts.n, opts.ratio, opts.trials, opts.seed, m);
        std::snprintf(line, sizeof line, "%-10s  %15.6f  %.3e  %13.4f  %12.4f\n",
                      std::string(masking::to_string(m)).c_str(), est.probability, est.stderr_, est.mean_comask,
                      est.stddev_comask);
        out << line;
        return est;
    };
    if (bern) {
        const auto est = row(masking::MaskModel::bernoulli);
        const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(opts.trials));
        const double dev = std::abs(est.probability - p);
        std::snprintf(line, sizeof line, "bernoulli vs analytic: |diff| = %.3e (%s 3 sigma)\n", dev,
                      dev <= 3 * sigma + 1e-15 ? "within" : "OUTSIDE");
        out << line;
    }
    if (fixed) {
        const auto est = row(masking::MaskModel::fixed_count);
        const double expected = static_cast<double>(k) * static_cast<double>(k) / static_cast<double>(opts.n);
        std::snprintf(line, sizeof line, "fixed-count masks hold K = %zu tokens each; expected mean |comask| = K^2/n = %.4f\n",
                      k, expected);
        out << line;
        if (2 * k > opts.n)
            out << "note: 2K > n, so fixed-count masks always overlap (p = 1 exactly); the closed form assumes "
                   "independent per-token masking and only approaches 1\n";
        else if (std::abs(est.probability - p) > 0.01)
            out << "note: fixed-count and independent per-token masking disagree on p by more than 0.01\n";
    }
    return kOk;
}

int cmd_gradcheck(const GradcheckOptions& opts, std::ostream& out) {
    ModelConfig base;
    if (opts.preset == "micro") {
        base = ModelConfig::gradcheck();
    } else if (opts.preset == "tiny") {
        base = ModelConfig::tiny();
    } else {
        throw UsageError("--preset must be micro or tiny, got '" + opts.preset + "'");
    }
    if (!(opts.step > 0) || !(opts.tolerance > 0)) throw UsageError("--step and --tolerance must be positive");
    verify::GradCheckOptions g;
    g.step = opts.step;
    g.tolerance = opts.tolerance;
    g.seed = opts.seed;
    g.sample = opts.sample;
    if (opts.preset == "tiny" && g.sample == 0) g.sample = 4;
    out << "finite-difference gradient check, preset " << opts.preset << ", "
        << (g.sample ? std::to_string(g.sample) + " elements per tensor" : std::string("every element")) << "\n";
    const auto report = verify::oracle_gradients(verify::default_grad_cases(base), g);
    if (!report_all({report}, out)) throw VerificationFailure("gradient check failed");
    return kOk;
}

int cmd_verify(const VerifyOptions& opts, std::ostream& out) {
    if (opts.cases == 0 || opts.trials == 0) throw UsageError("--cases and --trials must be positive");
    verify::SuiteOptions s;
    s.kernel_cases = opts.cases;
    s.eq3_trials = opts.trials;
    s.seed = opts.seed;
    s.gradients = !opts.no_gradients;
    if (!report_all(verify::run_suite(s), out)) throw VerificationFailure("oracle suite failed");
    return kOk;
}

int cmd_chamfer(const std::string& a, const std::string& b, std::ostream& out) {
    const auto ca = data::read_cloud(a);
    const auto cb = data::read_cloud(b);
    if (ca.points.empty() || cb.points.empty()) throw UsageError("chamfer: clouds must be nonempty");
    auto to_tensor = [](const geometry::PointCloud& c) {
        auto t = ad::Tensor<double>::zeros({1, c.size(), 3});
        for (std::size_t i = 0; i < c.size(); ++i)
            for (std::size_t d = 0; d < 3; ++d) t[i * 3 + d] = c.points[i][d];
        return t;
    };
    ad::Tape<double> tape(ad::Tape<double>::Mode::inference);
    const double d = losses::chamfer_l2(tape, to_tensor(ca), to_tensor(cb)).item();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g\n", d);
    out << buf;
    return kOk;
}

int cmd_shape(const ShapeOptions& opts, std::ostream& out) {
    if (opts.out_path.empty()) throw UsageError("shape: --out is required");
    if (opts.points == 0) throw UsageError("--points must be positive");
    data::Family family;
    try {
        family = data::parse_family(opts.family);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const data::ShapeSpec spec{family, opts.points, 1.0};
    const auto cloud = opts.raw ? data::generate_raw_shape(spec, opts.seed).cloud : data::generate_shape(spec, opts.seed);
    data::write_cloud(cloud, opts.out_path);
    out << "wrote " << cloud.size() << " points (" << data::to_string(family) << ") to " << opts.out_path << "\n";
    return kOk;
}

}  // namespace pcmae::cli

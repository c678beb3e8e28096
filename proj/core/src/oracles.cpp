#include "pcmae/oracles.hpp"

#include "pcmae/losses.hpp"
#include "pcmae/masking.hpp"
#include "pcmae/rng.hpp"
#include "pcmae/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pcmae::verify {

namespace {

using geometry::PointCloud;
using geometry::Vec3;

double dist2(const Vec3& a, const Vec3& b) {
    double s = 0;
    for (int d = 0; d < 3; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return s;
}

std::string cloud_text(const PointCloud& c) {
    std::ostringstream os;
    os.precision(17);
    os << "[";
    for (std::size_t i = 0; i < c.size(); ++i)
        os << (i ? ", " : "") << "(" << c.points[i][0] << " " << c.points[i][1] << " " << c.points[i][2] << ")";
    os << "]";
    return os.str();
}

template <typename V>
std::string list_text(const V& v) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
    os << "]";
    return os.str();
}

/// Uniform, clustered or integer-lattice clouds; the lattice produces ties.
PointCloud random_cloud(Rng& rng, std::size_t points) {
    PointCloud c;
    const std::size_t style = rng.below(3);
    for (std::size_t i = 0; i < points; ++i) {
        Vec3 p{};
        if (style == 0) {
            for (auto& x : p) x = rng.uniform(-1, 1);
        } else if (style == 1) {
            const double cx = rng.below(2) ? 0.5 : -0.5;
            p = {cx + 0.1 * rng.normal(), 0.1 * rng.normal(), 0.1 * rng.normal()};
        } else {
            for (auto& x : p) x = static_cast<double>(rng.below(4));
        }
        c.points.push_back(p);
    }
    return c;
}

void fail_case(OracleReport& r, const std::string& text) {
    ++r.mismatches;
    if (r.counterexample.empty()) r.counterexample = text;
    r.passed = false;
}

}  // namespace

std::vector<std::size_t> brute_fps(const PointCloud& cloud, std::size_t n, std::size_t start) {
    std::vector<std::size_t> chosen{start};
    while (chosen.size() < n) {
        double best = -1;
        std::size_t best_idx = 0;
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
            double nearest = std::numeric_limits<double>::infinity();
            for (std::size_t c : chosen) nearest = std::min(nearest, dist2(cloud.points[i], cloud.points[c]));
            if (nearest > best) {
                best = nearest;
                best_idx = i;
            }
        }
        chosen.push_back(best_idx);
    }
    return chosen;
}

std::vector<std::size_t> brute_knn(const PointCloud& cloud, const std::vector<std::size_t>& centers, std::size_t k) {
    std::vector<std::size_t> out;
    for (std::size_t c : centers) {
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t i = 0; i < cloud.size(); ++i) all.emplace_back(dist2(cloud.points[i], cloud.points[c]), i);
        std::sort(all.begin(), all.end());
        for (std::size_t j = 0; j < k; ++j) out.push_back(all[j].second);
    }
    return out;
}

double brute_chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    std::vector<std::vector<double>> d(a.size(), std::vector<double>(b.size()));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) d[i][j] = dist2(a[i], b[j]);
    double fwd = 0, bwd = 0;
    for (std::size_t i = 0; i < a.size(); ++i) fwd += *std::min_element(d[i].begin(), d[i].end());
    for (std::size_t j = 0; j < b.size(); ++j) {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < a.size(); ++i) m = std::min(m, d[i][j]);
        bwd += m;
    }
    return fwd / static_cast<double>(a.size()) + bwd / static_cast<double>(b.size());
}

OracleReport oracle_fps(std::size_t cases, std::uint64_t seed) {
    OracleReport r;
    r.name = "fps";
    const std::size_t sizes[] = {2, 8, 16};
    for (std::size_t t = 0; t < cases; ++t) {
        Rng rng(derive_seed(seed, 0x667073, t));
        const std::size_t n = sizes[t % 3];
        const std::size_t points = n + rng.below(128 - n + 1);
        const auto cloud = random_cloud(rng, points);
        const std::size_t start = rng.below(points);
        const auto got = geometry::fps(cloud, n, start);
        const auto want = brute_fps(cloud, n, start);
        ++r.cases;
        if (got != want)
            fail_case(r, "n=" + std::to_string(n) + " start=" + std::to_string(start) + " cloud=" + cloud_text(cloud) +
                             " kernel=" + list_text(got) + " oracle=" + list_text(want));
    }
    return r;
}

OracleReport oracle_knn(std::size_t cases, std::uint64_t seed) {
    OracleReport r;
    r.name = "knn";
    for (std::size_t t = 0; t < cases; ++t) {
        Rng rng(derive_seed(seed, 0x6b6e6e, t));
        const std::size_t points = 4 + rng.below(125);
        const auto cloud = random_cloud(rng, points);
        const std::size_t centers_n = 1 + rng.below(std::min<std::size_t>(points, 16));
        const auto centers = rng.sample_without_replacement(points, centers_n);
        const std::size_t k = 1 + rng.below(std::min<std::size_t>(points, 32));
        const auto got = geometry::knn(cloud, centers, k);
        const auto want = brute_knn(cloud, centers, k);
        ++r.cases;
        if (got != want)
            fail_case(r, "k=" + std::to_string(k) + " centers=" + list_text(centers) + " cloud=" + cloud_text(cloud) +
                             " kernel=" + list_text(got) + " oracle=" + list_text(want));
    }
    return r;
}

OracleReport oracle_chamfer(std::size_t cases, std::uint64_t seed) {
    OracleReport r;
    r.name = "chamfer";
    for (std::size_t t = 0; t < cases; ++t) {
        Rng rng(derive_seed(seed, 0x63686d, t));
        const std::size_t m = 1 + rng.below(3);
        const std::size_t ka = 1 + rng.below(42), kb = 1 + rng.below(42);
        std::vector<double> av, bv;
        std::vector<std::vector<Vec3>> pa(m), pb(m);
        for (std::size_t p = 0; p < m; ++p) {
            pa[p] = random_cloud(rng, ka).points;
            pb[p] = random_cloud(rng, kb).points;
            for (const auto& q : pa[p]) av.insert(av.end(), q.begin(), q.end());
            for (const auto& q : pb[p]) bv.insert(bv.end(), q.begin(), q.end());
        }
        ad::Tape<double> tape(ad::Tape<double>::Mode::inference);
        const double got = losses::chamfer_l2(tape, ad::Tensor<double>({m, ka, 3}, av), ad::Tensor<double>({m, kb, 3}, bv))
                               .item();
        double want = 0;
        for (std::size_t p = 0; p < m; ++p) want += brute_chamfer(pa[p], pb[p]);
        want /= static_cast<double>(m);
        const double dev = std::abs(got - want);
        r.max_deviation = std::max(r.max_deviation, dev);
        ++r.cases;
        if (!(dev <= 1e-6)) {
            PointCloud a{pa[0], {}}, b{pb[0], {}};
            fail_case(r, "patches=" + std::to_string(m) + " first pred=" + cloud_text(a) + " first gt=" + cloud_text(b) +
                             " kernel=" + std::to_string(got) + " oracle=" + std::to_string(want));
        }
    }
    return r;
}

std::vector<Eq3Cell> eq3_grid(const std::vector<std::size_t>& ns, const std::vector<double>& ratios,
                              std::size_t trials, std::uint64_t seed) {
    std::vector<Eq3Cell> cells;
    for (std::size_t n : ns) {
        for (double r : ratios) {
            Eq3Cell c;
            c.n = n;
            c.ratio = r;
            c.analytic = masking::comask_probability(n, r);
            Rng rng(derive_seed(seed, 0x6571, n, static_cast<std::uint64_t>(std::llround(r * 1e6))));
            std::size_t hits = 0;
            for (std::size_t t = 0; t < trials; ++t) {
                bool any = false;
                for (std::size_t i = 0; i < n; ++i) {
                    const bool in1 = rng.uniform() < r;
                    const bool in2 = rng.uniform() < r;
                    any = any || (in1 && in2);
                }
                hits += any;
            }
            c.bernoulli = static_cast<double>(hits) / static_cast<double>(trials);
            c.sigma = std::sqrt(c.analytic * (1.0 - c.analytic) / static_cast<double>(trials));
            const double dev = std::abs(c.bernoulli - c.analytic);
            c.within = c.sigma == 0.0 ? dev == 0.0 || dev <= 1e-12 : dev <= 3.0 * c.sigma;
            const auto fixed = fixed_count_check(n, r, std::min<std::size_t>(trials, 20000), seed);
            c.fixed = fixed.probability;
            c.fixed_mean_comask = fixed.mean_comask;
            cells.push_back(c);
        }
    }
    return cells;
}

FixedCountCheck fixed_count_check(std::size_t n, double ratio, std::size_t trials, std::uint64_t seed) {
    FixedCountCheck f;
    f.n = n;
    f.ratio = ratio;
    f.trials = trials;
    const double K = static_cast<double>(masking::mask_count(n, ratio)), N = static_cast<double>(n);
    std::size_t hits = 0;
    double sum = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        const auto m = masking::generate_dual_mask(n, ratio, derive_seed(seed, 0x666978, t));
        // Intersection by membership scan, independent of the mask's own co-mask list.
        std::vector<char> in1(n, 0);
        for (std::size_t i : m.m1) in1[i] = 1;
        std::size_t both = 0;
        for (std::size_t i : m.m2) both += in1[i];
        hits += both > 0;
        sum += static_cast<double>(both);
    }
    f.probability = trials ? static_cast<double>(hits) / static_cast<double>(trials) : 0.0;
    f.mean_comask = trials ? sum / static_cast<double>(trials) : 0.0;
    f.expected_mean = K * K / N;
    const double var = n > 1 ? K * (K / N) * ((N - K) / N) * ((N - K) / (N - 1)) : 0.0;
    f.sigma_mean = trials ? std::sqrt(var / static_cast<double>(trials)) : 0.0;
    f.passed = f.probability == 1.0 && std::abs(f.mean_comask - f.expected_mean) <= 3.0 * f.sigma_mean;
    return f;
}

OracleReport oracle_eq3(std::size_t trials, std::uint64_t seed) {
    OracleReport r;
    r.name = "comask-probability";
    const auto cells = eq3_grid({4, 16, 64}, {0.0, 0.25, 0.5, 0.75}, trials, seed);
    char buf[256];
    r.details.push_back("   n  ratio   analytic  bernoulli-mc   3*sigma  fixed-count  mean|comask|");
    for (const auto& c : cells) {
        ++r.cases;
        const double dev = std::abs(c.bernoulli - c.analytic);
        r.max_deviation = std::max(r.max_deviation, dev);
        std::snprintf(buf, sizeof buf, "%4zu  %5.2f  %9.6f  %12.6f  %8.2e  %11.6f  %12.4f%s", c.n, c.ratio, c.analytic,
                      c.bernoulli, 3 * c.sigma, c.fixed, c.fixed_mean_comask, c.within ? "" : "  <-- outside 3 sigma");
        r.details.emplace_back(buf);
        if (!c.within) {
            std::snprintf(buf, sizeof buf, "n=%zu r=%.2f analytic=%.9f mc=%.9f sigma=%.3e trials=%zu", c.n, c.ratio,
                          c.analytic, c.bernoulli, c.sigma, trials);
            fail_case(r, buf);
        }
    }
    const auto f = fixed_count_check(64, 0.6, trials, seed);
    ++r.cases;
    std::snprintf(buf, sizeof buf,
                  "fixed-count n=64 r=0.6: p=%.6f (analytic independent-token value %.12f), mean|comask|=%.4f "
                  "expected %.4f +- %.4f (3 sigma)",
                  f.probability, masking::comask_probability(64, 0.6), f.mean_comask, f.expected_mean,
                  3 * f.sigma_mean);
    r.details.emplace_back(buf);
    if (!f.passed) fail_case(r, buf);
    return r;
}

std::vector<GradCase> default_grad_cases(const ModelConfig& base) {
    std::vector<GradCase> out;
    for (double lambda : {0.0, 1.0}) {
        const std::string suffix = lambda == 0.0 ? " lambda=0" : " lambda=1";
        ModelConfig full = base;
        full.lambda = lambda;
        out.push_back({"dual+contrastive" + suffix, full});
        ModelConfig shared = full;
        shared.share_decoder = true;
        out.push_back({"shared-decoder" + suffix, shared});
        ModelConfig separate = full;
        separate.share_encoder = false;
        out.push_back({"separate-encoders" + suffix, separate});
        ModelConfig single = full;
        single.dual_mask = false;
        single.contrastive = false;
        out.push_back({"single-mask" + suffix, single});
    }
    return out;
}

OracleReport oracle_gradients(const std::vector<GradCase>& cases, const GradCheckOptions& options) {
    OracleReport r;
    r.name = "gradients";
    for (const auto& gc : cases) {
        const auto& cfg = gc.config;
        std::vector<PointCloud> clouds;
        for (std::size_t i = 0; i < options.clouds; ++i) {
            const data::ShapeSpec spec{data::kAllFamilies[i % data::kAllFamilies.size()], cfg.points_per_cloud, 1.0};
            clouds.push_back(data::generate_shape(spec, derive_seed(options.seed, 0x67, i)));
        }
        const auto patches = model::tokenize_clouds(clouds, cfg);
        const std::span<const geometry::PatchSet> batch(patches);
        auto params = model::ModelParams<double>::init(cfg, derive_seed(options.seed, 0x70));
        const std::uint64_t mask_seed = derive_seed(options.seed, 0x6d);

        auto loss_value = [&] {
            ad::Tape<double> tape(ad::Tape<double>::Mode::inference);
            const auto out = model::forward_pretrain(tape, params, cfg, batch, mask_seed);
            return losses::pretrain_loss(tape, out, cfg).total.item();
        };

        ad::Tape<double> tape;
        const auto out = model::forward_pretrain(tape, params, cfg, batch, mask_seed);
        std::size_t comask = 0;
        for (const auto& m : out.masks) comask += m.comask.size();
        auto loss = losses::pretrain_loss(tape, out, cfg);
        params.zero_grad();
        tape.backward(loss.total);

        std::size_t groups = 0, elements = 0, bad = 0;
        double worst = 0;
        std::string worst_where;
        params.for_each([&](const std::string& name, ad::Tensor<double>& t) {
            ++groups;
            const std::vector<double> analytic(t.grad().begin(), t.grad().end());
            std::vector<std::size_t> picks(t.size());
            for (std::size_t j = 0; j < t.size(); ++j) picks[j] = j;
            if (options.sample > 0 && options.sample < t.size()) {
                Rng rng(derive_seed(options.seed, 0x73, groups));
                picks = rng.sample_without_replacement(t.size(), options.sample);
                std::sort(picks.begin(), picks.end());
            }
            for (const std::size_t j : picks) {
                const double orig = t[j];
                t[j] = orig + options.step;
                const double up = loss_value();
                t[j] = orig - options.step;
                const double down = loss_value();
                t[j] = orig;
                const double numeric = (up - down) / (2 * options.step);
                const double a = analytic[j];
                const double rel =
                    std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), options.floor});
                ++elements;
                if (rel > worst) {
                    worst = rel;
                    worst_where = name + "[" + std::to_string(j) + "]";
                }
                if (!(rel <= options.tolerance)) {
                    ++bad;
                    std::ostringstream os;
                    os.precision(12);
                    os << gc.name << ": " << name << "[" << j << "] analytic=" << a << " numeric=" << numeric
                       << " rel=" << rel;
                    fail_case(r, os.str());
                }
            }
        });
        if (cfg.dual_mask && cfg.share_decoder) {
            const bool one_set = !params.decoder2 && &params.decoder_for(1) == &params.decoder_for(2);
            if (!one_set) fail_case(r, gc.name + ": shared decoder exposes two weight sets");
        }
        ++r.cases;
        r.max_deviation = std::max(r.max_deviation, worst);
        char buf[256];
        std::snprintf(buf, sizeof buf, "%-30s groups=%3zu elements=%5zu comask=%zu max-rel-err=%.3e at %s%s",
                      gc.name.c_str(), groups, elements, comask, worst, worst_where.c_str(),
                      bad ? "  FAIL" : "");
        r.details.emplace_back(buf);
    }
    return r;
}

std::vector<OracleReport> run_suite(const SuiteOptions& options) {
    std::vector<OracleReport> out;
    out.push_back(oracle_fps(options.kernel_cases, options.seed));
    out.push_back(oracle_knn(options.kernel_cases, options.seed));
    out.push_back(oracle_chamfer(options.kernel_cases, options.seed));
    out.push_back(oracle_eq3(options.eq3_trials, options.seed));
    if (options.gradients) out.push_back(oracle_gradients(default_grad_cases()));
    return out;
}

std::string format_report(const OracleReport& report) {
    std::ostringstream os;
    os << (report.passed ? "PASS" : "FAIL") << "  " << report.name << "  cases=" << report.cases
       << " mismatches=" << report.mismatches << " max-deviation=" << report.max_deviation << '\n';
    for (const auto& d : report.details) os << "    " << d << '\n';
    if (!report.counterexample.empty()) os << "    first counterexample: " << report.counterexample << '\n';
    return os.str();
}

}  // namespace pcmae::verify

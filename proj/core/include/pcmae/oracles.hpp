#pragma once

// Brute-force reference implementations used to check the optimized kernels.
// They are deliberately naive (full scans, full sorts, recomputation from
// scratch) and do not call the code they check.

#include "pcmae/geometry.hpp"
#include "pcmae/model.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace pcmae::verify {

struct OracleReport {
    std::string name;
    std::size_t cases = 0;
    std::size_t mismatches = 0;
    double max_deviation = 0;
    bool passed = true;
    /// Full inputs of the first failing case, empty when passed.
    std::string counterexample;
    /// Free-form lines (tables, notes) for human consumption.
    std::vector<std::string> details;
};

std::vector<std::size_t> brute_fps(const geometry::PointCloud& cloud, std::size_t n, std::size_t start = 0);
std::vector<std::size_t> brute_knn(const geometry::PointCloud& cloud, const std::vector<std::size_t>& centers,
                                   std::size_t k);
/// Symmetric l2 Chamfer from a full distance matrix, both directions
/// normalized by point count.
double brute_chamfer(const std::vector<geometry::Vec3>& a, const std::vector<geometry::Vec3>& b);

OracleReport oracle_fps(std::size_t cases, std::uint64_t seed);
OracleReport oracle_knn(std::size_t cases, std::uint64_t seed);
OracleReport oracle_chamfer(std::size_t cases, std::uint64_t seed);

struct Eq3Cell {
    std::size_t n = 0;
    double ratio = 0;
    double analytic = 0;
    double bernoulli = 0;  // Monte-Carlo fraction with a nonempty co-mask
    double sigma = 0;      // binomial std of the estimate under the analytic p
    bool within = false;   // |bernoulli - analytic| <= 3 sigma (exact when sigma = 0)
    double fixed = 0;      // same fraction under fixed-count masks
    double fixed_mean_comask = 0;
};

struct FixedCountCheck {
    std::size_t n = 0;
    double ratio = 0;
    std::size_t trials = 0;
    double probability = 0;
    double mean_comask = 0;
    double expected_mean = 0;  // K^2 / n
    double sigma_mean = 0;     // hypergeometric std / sqrt(trials)
    bool passed = false;       // probability == 1 and |mean - expected| <= 3 sigma_mean
};

std::vector<Eq3Cell> eq3_grid(const std::vector<std::size_t>& ns, const std::vector<double>& ratios,
                              std::size_t trials, std::uint64_t seed);
FixedCountCheck fixed_count_check(std::size_t n, double ratio, std::size_t trials, std::uint64_t seed);

/// Grid n in {4, 16, 64} x r in {0, 0.25, 0.5, 0.75} plus the fixed-count
/// check at n = 64, r = 0.6.
OracleReport oracle_eq3(std::size_t trials, std::uint64_t seed);

struct GradCase {
    std::string name;
    ModelConfig config;
};

/// lambda in {0, 1} x {full, shared decoder, separate encoders, single mask},
/// built on `base` (the gradcheck model unless given).
std::vector<GradCase> default_grad_cases(const ModelConfig& base = ModelConfig::gradcheck());

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Relative error is |a - n| / max(|a|, |n|, floor).
    double floor = 1e-6;
    std::size_t clouds = 2;
    std::uint64_t seed = 11;
    /// Elements checked per parameter tensor, drawn without replacement
    /// (0 = every element).
    std::size_t sample = 0;
};

/// Central differences vs reverse-mode gradients of the full pre-training
/// loss for every element of every parameter tensor.
OracleReport oracle_gradients(const std::vector<GradCase>& cases, const GradCheckOptions& options = {});

struct SuiteOptions {
    std::size_t kernel_cases = 100;
    std::size_t eq3_trials = 100000;
    std::uint64_t seed = 2024;
    bool gradients = true;
};

std::vector<OracleReport> run_suite(const SuiteOptions& options = {});

std::string format_report(const OracleReport& report);

}  // namespace pcmae::verify

#pragma once

#include "pcmae/geometry.hpp"
#include "pcmae/model.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pcmae::eval {

enum class ProbeKind { full, linear, mlp3 };

/// "full", "linear" / "mlp-linear", "mlp3" / "mlp-3". Throws std::invalid_argument.
ProbeKind parse_probe_kind(std::string_view name);
std::string_view to_string(ProbeKind kind);

struct ProbeProtocol {
    ProbeKind kind = ProbeKind::linear;
    std::size_t epochs = 100;
    std::size_t warmup_epochs = 3;
    std::size_t batch_size = 32;
    double lr = 5e-4;
    double weight_decay = 0.05;
    std::size_t hidden = 256;  // MLP-3 width

    void validate() const;
};

/// Row-major [rows x dim].
struct Features {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<float> values;

    std::span<const float> row(std::size_t i) const { return std::span<const float>(values).subspan(i * dim, dim); }
};

/// [max | mean] over the unmasked final-layer tokens of one cloud.
std::vector<float> extract_global_feature(const model::ModelParams<float>& params, const ModelConfig& cfg,
                                          const geometry::PointCloud& cloud);

/// Same, for many clouds, in batches.
Features extract_features(const model::ModelParams<float>& params, const ModelConfig& cfg,
                          std::span<const geometry::PointCloud> clouds, std::size_t batch = 64);

std::vector<int> labels_of(std::span<const geometry::PointCloud> clouds);

/// Trains a LINEAR or MLP-3 head on frozen features (standardized with the
/// training statistics) and returns test accuracy in [0, 1]. Throws
/// std::invalid_argument for FULL, mismatched sizes or fewer than two classes.
double probe_accuracy(const Features& train, std::span<const int> train_labels, const Features& test,
                      std::span<const int> test_labels, const ProbeProtocol& protocol, std::uint64_t seed);

/// FULL protocol: fine-tunes a private copy of the tokenizer, positional MLP
/// and encoder together with an MLP-3 head. `params` is not modified.
double full_finetune_accuracy(const model::ModelParams<float>& params, const ModelConfig& cfg,
                              std::span<const geometry::PointCloud> train, std::span<const geometry::PointCloud> test,
                              const ProbeProtocol& protocol, std::uint64_t seed);

struct ProbeResult {
    ProbeKind kind = ProbeKind::linear;
    std::vector<std::uint64_t> seeds;
    std::vector<double> accuracies;
    double mean = 0;
    double stddev = 0;  // sample standard deviation (n - 1)
    std::string encoder_hash_before, encoder_hash_after;
};

/// Runs `protocol` once per seed. With shuffle_train_labels the training
/// labels are permuted (seeded), giving a chance-level sanity baseline.
ProbeResult run_probe(const model::ModelParams<float>& params, const ModelConfig& cfg,
                      std::span<const geometry::PointCloud> train, std::span<const geometry::PointCloud> test,
                      const ProbeProtocol& protocol, std::span<const std::uint64_t> seeds,
                      bool shuffle_train_labels = false);

struct FewShotEpisode {
    std::vector<int> classes;           // dataset labels, in episode-label order
    std::vector<std::size_t> support;   // dataset indices, way x shot
    std::vector<std::size_t> query;     // dataset indices, way x queries
    std::vector<int> support_labels;    // 0 .. way-1
    std::vector<int> query_labels;
};

/// Throws std::invalid_argument unless `way` classes have shot + queries clouds.
FewShotEpisode sample_episode(std::span<const int> labels, std::size_t way, std::size_t shot, std::size_t queries,
                              std::uint64_t seed);

struct FewShotResult {
    std::size_t way = 0, shot = 0, queries = 20;
    std::vector<double> accuracies;
    double mean = 0;
    double stddev = 0;
};

/// Per episode an MLP-3 head is trained on the support features and scored on
/// the queries. way = 1 scores 1.0 without training.
FewShotResult run_few_shot(const model::ModelParams<float>& params, const ModelConfig& cfg,
                           std::span<const geometry::PointCloud> dataset, std::size_t way, std::size_t shot,
                           std::size_t episodes, std::uint64_t seed, const ProbeProtocol& head = {},
                           std::size_t queries = 20);

/// Same, on precomputed features.
FewShotResult run_few_shot_features(const Features& features, std::span<const int> labels, std::size_t way,
                                    std::size_t shot, std::size_t episodes, std::uint64_t seed,
                                    const ProbeProtocol& head = {}, std::size_t queries = 20);

double sample_stddev(std::span<const double> xs);
double mean_of(std::span<const double> xs);

/// SHA-256 (hex) over names, shapes and values of the tokenizer, positional
/// MLP and encoder parameters.
std::string encoder_hash(const model::ModelParams<float>& params);

/// Deep copy: the clone shares no storage with `params`.
model::ModelParams<float> clone_params(const model::ModelParams<float>& params);

}  // namespace pcmae::eval

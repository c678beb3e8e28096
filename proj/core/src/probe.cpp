#include "pcmae/probe.hpp"

#include "pcmae/optimizer.hpp"
#include "pcmae/rng.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace pcmae::eval {

namespace {

constexpr std::uint64_t kTagHead = 0x68656164;
constexpr std::uint64_t kTagOrder = 0x6f726472;
constexpr std::uint64_t kTagShuffleLabels = 0x6c61626c;
constexpr std::uint64_t kTagEpisode = 0x65706973;

using Tensor = ad::Tensor<float>;
using Tape = ad::Tape<float>;

struct Head {
    std::vector<model::Linear<float>> layers;
};

Head make_head(ProbeKind kind, std::size_t in, std::size_t hidden, std::size_t classes, std::uint64_t seed) {
    std::vector<std::size_t> dims = kind == ProbeKind::linear ? std::vector<std::size_t>{in, classes}
                                                              : std::vector<std::size_t>{in, hidden, hidden, classes};
    Rng rng(seed);
    Head h;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const double limit = std::sqrt(6.0 / static_cast<double>(dims[i] + dims[i + 1]));
        std::vector<float> w(dims[i] * dims[i + 1]);
        for (float& v : w) v = static_cast<float>(rng.uniform(-limit, limit));
        h.layers.push_back({Tensor({dims[i], dims[i + 1]}, std::move(w), true), Tensor::zeros({dims[i + 1]}, true)});
    }
    return h;
}

Tensor head_forward(Tape& tape, const Head& head, const Tensor& x) {
    Tensor h = x;
    for (std::size_t i = 0; i < head.layers.size(); ++i) {
        h = ad::linear(tape, h, head.layers[i].weight, head.layers[i].bias);
        if (i + 1 < head.layers.size()) h = ad::gelu(tape, h);
    }
    return h;
}

void add_head_params(std::vector<optim::NamedParam>& out, Head& head) {
    for (std::size_t i = 0; i < head.layers.size(); ++i) {
        const std::string p = "probe.fc" + std::to_string(i + 1);
        out.push_back({p + ".weight", head.layers[i].weight, true});
        out.push_back({p + ".bias", head.layers[i].bias, false});
    }
}

std::size_t count_classes(std::span<const int> labels) {
    std::set<int> s(labels.begin(), labels.end());
    for (int l : s)
        if (l < 0) throw std::invalid_argument("probe: negative class label " + std::to_string(l));
    return s.size();
}

int num_outputs(std::span<const int> a, std::span<const int> b) {
    int m = 0;
    for (int l : a) m = std::max(m, l);
    for (int l : b) m = std::max(m, l);
    return m + 1;
}

/// Mini-batch AdamW with warmup + cosine over `labels.size()` examples.
template <typename LogitsFn>
void fit(std::vector<optim::NamedParam>& params, std::span<const int> labels, const ProbeProtocol& p,
         std::uint64_t seed, LogitsFn&& logits_for) {
    const std::size_t n = labels.size();
    const std::size_t spe = (n + p.batch_size - 1) / p.batch_size;
    const std::size_t total = p.epochs * spe;
    const std::size_t warm = std::min(p.warmup_epochs * spe, total - 1);
    auto state = optim::AdamWState::zeros_like(params);
    const optim::AdamWHyper hp{p.weight_decay, 0.9, 0.999, 1e-8};
    std::vector<std::size_t> order(n);
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < p.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(seed, kTagOrder, epoch));
        rng.shuffle(order.begin(), order.end());
        for (std::size_t b = 0; b < spe; ++b) {
            const std::size_t lo = b * p.batch_size, hi = std::min(n, lo + p.batch_size);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                         order.begin() + static_cast<std::ptrdiff_t>(hi));
            std::vector<int> y;
            for (std::size_t i : idx) y.push_back(labels[i]);
            Tape tape;
            auto loss = ad::cross_entropy(tape, logits_for(tape, idx), std::span<const int>(y));
            for (auto& np : params) np.tensor.zero_grad();
            tape.backward(loss);
            ++step;
            optim::adamw_step(params, state, optim::lr_at(step, total, warm, p.lr, 0.0), hp);
        }
    }
}

double accuracy_from_logits(const Tensor& logits, std::span<const int> labels) {
    const std::size_t k = logits.cols();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto v = logits.values().subspan(i * k, k);
        const auto arg = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
        correct += arg == labels[i];
    }
    return labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
}

struct Standardizer {
    std::vector<double> mean, scale;

    static Standardizer fit(const Features& f) {
        Standardizer s;
        s.mean.assign(f.dim, 0.0);
        s.scale.assign(f.dim, 1.0);
        if (f.rows == 0) return s;
        for (std::size_t i = 0; i < f.rows; ++i)
            for (std::size_t d = 0; d < f.dim; ++d) s.mean[d] += f.values[i * f.dim + d];
        for (double& m : s.mean) m /= static_cast<double>(f.rows);
        std::vector<double> var(f.dim, 0.0);
        for (std::size_t i = 0; i < f.rows; ++i)
            for (std::size_t d = 0; d < f.dim; ++d) {
                const double c = f.values[i * f.dim + d] - s.mean[d];
                var[d] += c * c;
            }
        for (std::size_t d = 0; d < f.dim; ++d) {
            const double sd = std::sqrt(var[d] / static_cast<double>(f.rows));
            s.scale[d] = sd > 1e-6 ? 1.0 / sd : 1.0;
        }
        return s;
    }

    Tensor apply(const Features& f, std::span<const std::size_t> rows) const {
        std::vector<float> v;
        v.reserve(rows.size() * f.dim);
        for (std::size_t r : rows)
            for (std::size_t d = 0; d < f.dim; ++d)
                v.push_back(static_cast<float>((f.values[r * f.dim + d] - mean[d]) * scale[d]));
        return Tensor({rows.size(), f.dim}, std::move(v));
    }
};

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

Features gather_features(const Features& f, std::span<const std::size_t> rows) {
    Features out;
    out.rows = rows.size();
    out.dim = f.dim;
    out.values.reserve(rows.size() * f.dim);
    for (std::size_t r : rows) {
        const auto row = f.row(r);
        out.values.insert(out.values.end(), row.begin(), row.end());
    }
    return out;
}

bool is_encoder_side(const std::string& name) {
    return name.starts_with("tokenizer.") || name.starts_with("pos.") || name.starts_with("encoder.");
}

}  // namespace

ProbeKind parse_probe_kind(std::string_view name) {
    if (name == "full") return ProbeKind::full;
    if (name == "linear" || name == "mlp-linear") return ProbeKind::linear;
    if (name == "mlp3" || name == "mlp-3") return ProbeKind::mlp3;
    throw std::invalid_argument("unknown probe protocol '" + std::string(name) + "' (expected full, linear or mlp3)");
}

std::string_view to_string(ProbeKind kind) {
    switch (kind) {
        case ProbeKind::full: return "full";
        case ProbeKind::linear: return "linear";
        case ProbeKind::mlp3: return "mlp3";
    }
    return "?";
}

void ProbeProtocol::validate() const {
    if (epochs < 1) throw std::invalid_argument("probe: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("probe: batch_size must be >= 1");
    if (hidden < 1) throw std::invalid_argument("probe: hidden width must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("probe: lr must be > 0");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("probe: weight_decay must be >= 0");
}

std::vector<float> extract_global_feature(const model::ModelParams<float>& params, const ModelConfig& cfg,
                                          const geometry::PointCloud& cloud) {
    const auto f = extract_features(params, cfg, std::span<const geometry::PointCloud>(&cloud, 1));
    return f.values;
}

Features extract_features(const model::ModelParams<float>& params, const ModelConfig& cfg,
                          std::span<const geometry::PointCloud> clouds, std::size_t batch) {
    if (batch == 0) throw std::invalid_argument("extract_features: batch must be >= 1");
    Features out;
    out.rows = clouds.size();
    out.dim = 2 * cfg.dim;
    out.values.reserve(out.rows * out.dim);
    for (std::size_t lo = 0; lo < clouds.size(); lo += batch) {
        const auto chunk = clouds.subspan(lo, std::min(batch, clouds.size() - lo));
        const auto patches = model::tokenize_clouds(chunk, cfg);
        Tape tape(Tape::Mode::inference);
        const auto f = model::global_features(tape, params, cfg, std::span<const geometry::PatchSet>(patches));
        out.values.insert(out.values.end(), f.values().begin(), f.values().end());
    }
    return out;
}

std::vector<int> labels_of(std::span<const geometry::PointCloud> clouds) {
    std::vector<int> out;
    out.reserve(clouds.size());
    for (std::size_t i = 0; i < clouds.size(); ++i) {
        if (!clouds[i].label) throw std::invalid_argument("probe: cloud " + std::to_string(i) + " has no label");
        out.push_back(*clouds[i].label);
    }
    return out;
}

double probe_accuracy(const Features& train, std::span<const int> train_labels, const Features& test,
                      std::span<const int> test_labels, const ProbeProtocol& protocol, std::uint64_t seed) {
    protocol.validate();
    if (protocol.kind == ProbeKind::full)
        throw std::invalid_argument("probe_accuracy: FULL fine-tuning needs the encoder, not features");
    if (train.rows != train_labels.size() || test.rows != test_labels.size())
        throw std::invalid_argument("probe_accuracy: feature rows and label counts differ");
    if (train.dim != test.dim) throw std::invalid_argument("probe_accuracy: train/test feature widths differ");
    if (count_classes(train_labels) < 2)
        throw std::invalid_argument("probe_accuracy: training labels must cover at least two classes");
    const int classes = num_outputs(train_labels, test_labels);
    const auto stdz = Standardizer::fit(train);
    Head head = make_head(protocol.kind, train.dim, protocol.hidden, static_cast<std::size_t>(classes),
                          derive_seed(seed, kTagHead));
    std::vector<optim::NamedParam> params;
    add_head_params(params, head);
    const Tensor x_train = stdz.apply(train, all_rows(train.rows));
    fit(params, train_labels, protocol, seed, [&](Tape& tape, const std::vector<std::size_t>& idx) {
        const auto x = ad::gather_rows(tape, x_train, std::span<const std::size_t>(idx));
        return head_forward(tape, head, x);
    });
    Tape tape(Tape::Mode::inference);
    const auto logits = head_forward(tape, head, stdz.apply(test, all_rows(test.rows)));
    return accuracy_from_logits(logits, test_labels);
}

model::ModelParams<float> clone_params(const model::ModelParams<float>& params) {
    model::ModelParams<float> copy = params;
    copy.for_each([](const std::string&, ad::Tensor<float>& t) {
        t = ad::Tensor<float>(t.shape(), std::vector<float>(t.values().begin(), t.values().end()), t.requires_grad());
    });
    return copy;
}

double full_finetune_accuracy(const model::ModelParams<float>& params, const ModelConfig& cfg,
                              std::span<const geometry::PointCloud> train, std::span<const geometry::PointCloud> test,
                              const ProbeProtocol& protocol, std::uint64_t seed) {
    protocol.validate();
    const auto ytrain = labels_of(train), ytest = labels_of(test);
    if (count_classes(ytrain) < 2)
        throw std::invalid_argument("full_finetune_accuracy: training labels must cover at least two classes");
    const int classes = num_outputs(ytrain, ytest);
    auto local = clone_params(params);
    Head head = make_head(ProbeKind::mlp3, 2 * cfg.dim, protocol.hidden, static_cast<std::size_t>(classes),
                          derive_seed(seed, kTagHead));
    std::vector<optim::NamedParam> trainable;
    local.for_each([&](const std::string& name, ad::Tensor<float>& t) {
        if (is_encoder_side(name)) trainable.push_back({name, t, !model::is_decay_exempt(name)});
    });
    add_head_params(trainable, head);
    const auto train_patches = model::tokenize_clouds(train, cfg);
    fit(trainable, ytrain, protocol, seed, [&](Tape& tape, const std::vector<std::size_t>& idx) {
        std::vector<geometry::PatchSet> batch;
        for (std::size_t i : idx) batch.push_back(train_patches[i]);
        const auto f = model::global_features(tape, local, cfg, std::span<const geometry::PatchSet>(batch));
        return head_forward(tape, head, f);
    });
    const auto test_patches = model::tokenize_clouds(test, cfg);
    Tape tape(Tape::Mode::inference);
    const auto f = model::global_features(tape, local, cfg, std::span<const geometry::PatchSet>(test_patches));
    return accuracy_from_logits(head_forward(tape, head, f), ytest);
}

double mean_of(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_stddev(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double acc = 0;
    for (double x : xs) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

ProbeResult run_probe(const model::ModelParams<float>& params, const ModelConfig& cfg,
                      std::span<const geometry::PointCloud> train, std::span<const geometry::PointCloud> test,
                      const ProbeProtocol& protocol, std::span<const std::uint64_t> seeds, bool shuffle_train_labels) {
    protocol.validate();
    if (seeds.empty()) throw std::invalid_argument("run_probe: at least one seed is required");
    ProbeResult res;
    res.kind = protocol.kind;
    res.seeds.assign(seeds.begin(), seeds.end());
    res.encoder_hash_before = encoder_hash(params);
    const auto ytest = labels_of(test);
    if (protocol.kind == ProbeKind::full) {
        for (auto s : seeds) {
            if (shuffle_train_labels) {
                auto shuffled = std::vector<geometry::PointCloud>(train.begin(), train.end());
                auto y = labels_of(train);
                Rng rng(derive_seed(s, kTagShuffleLabels));
                rng.shuffle(y.begin(), y.end());
                for (std::size_t i = 0; i < shuffled.size(); ++i) shuffled[i].label = y[i];
                res.accuracies.push_back(full_finetune_accuracy(params, cfg, shuffled, test, protocol, s));
            } else {
                res.accuracies.push_back(full_finetune_accuracy(params, cfg, train, test, protocol, s));
            }
        }
    } else {
        const auto ftrain = extract_features(params, cfg, train);
        const auto ftest = extract_features(params, cfg, test);
        for (auto s : seeds) {
            auto y = labels_of(train);
            if (shuffle_train_labels) {
                Rng rng(derive_seed(s, kTagShuffleLabels));
                rng.shuffle(y.begin(), y.end());
            }
            res.accuracies.push_back(probe_accuracy(ftrain, y, ftest, ytest, protocol, s));
        }
    }
    res.encoder_hash_after = encoder_hash(params);
    res.mean = mean_of(res.accuracies);
    res.stddev = sample_stddev(res.accuracies);
    return res;
}

FewShotEpisode sample_episode(std::span<const int> labels, std::size_t way, std::size_t shot, std::size_t queries,
                              std::uint64_t seed) {
    if (way < 1 || shot < 1) throw std::invalid_argument("few-shot: way and shot must be >= 1");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    std::vector<int> eligible;
    for (const auto& [label, members] : by_class)
        if (members.size() >= shot + queries) eligible.push_back(label);
    if (eligible.size() < way)
        throw std::invalid_argument("few-shot: need " + std::to_string(way) + " classes with at least " +
                                    std::to_string(shot + queries) + " clouds each, found " +
                                    std::to_string(eligible.size()));
    Rng rng(seed);
    FewShotEpisode ep;
    for (std::size_t c : rng.sample_without_replacement(eligible.size(), way)) ep.classes.push_back(eligible[c]);
    for (std::size_t e = 0; e < ep.classes.size(); ++e) {
        const auto& members = by_class[ep.classes[e]];
        const auto pick = rng.sample_without_replacement(members.size(), shot + queries);
        for (std::size_t j = 0; j < pick.size(); ++j) {
            if (j < shot) {
                ep.support.push_back(members[pick[j]]);
                ep.support_labels.push_back(static_cast<int>(e));
            } else {
                ep.query.push_back(members[pick[j]]);
                ep.query_labels.push_back(static_cast<int>(e));
            }
        }
    }
    return ep;
}

FewShotResult run_few_shot_features(const Features& features, std::span<const int> labels, std::size_t way,
                                    std::size_t shot, std::size_t episodes, std::uint64_t seed,
                                    const ProbeProtocol& head, std::size_t queries) {
    if (episodes < 1) throw std::invalid_argument("few-shot: episodes must be >= 1");
    if (features.rows != labels.size()) throw std::invalid_argument("few-shot: feature rows and labels differ");
    ProbeProtocol protocol = head;
    protocol.kind = ProbeKind::mlp3;
    FewShotResult res;
    res.way = way;
    res.shot = shot;
    res.queries = queries;
    for (std::size_t e = 0; e < episodes; ++e) {
        const auto ep = sample_episode(labels, way, shot, queries, derive_seed(seed, kTagEpisode, e));
        if (way == 1) {
            res.accuracies.push_back(1.0);
            continue;
        }
        res.accuracies.push_back(probe_accuracy(gather_features(features, ep.support), ep.support_labels,
                                                gather_features(features, ep.query), ep.query_labels, protocol,
                                                derive_seed(seed, kTagEpisode, e, 1)));
    }
    res.mean = mean_of(res.accuracies);
    res.stddev = sample_stddev(res.accuracies);
    return res;
}

FewShotResult run_few_shot(const model::ModelParams<float>& params, const ModelConfig& cfg,
                           std::span<const geometry::PointCloud> dataset, std::size_t way, std::size_t shot,
                           std::size_t episodes, std::uint64_t seed, const ProbeProtocol& head, std::size_t queries) {
    const auto labels = labels_of(dataset);
    // Fail on insufficient data before paying for feature extraction.
    sample_episode(labels, way, shot, queries, derive_seed(seed, kTagEpisode, 0));
    const auto features = extract_features(params, cfg, dataset);
    return run_few_shot_features(features, labels, way, shot, episodes, seed, head, queries);
}

std::string encoder_hash(const model::ModelParams<float>& params) {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("encoder_hash: SHA-256 unavailable");
    }
    params.for_each([&](const std::string& name, const ad::Tensor<float>& t) {
        if (!is_encoder_side(name)) return;
        EVP_DigestUpdate(ctx, name.data(), name.size());
        for (std::size_t d : t.shape()) {
            const auto v = static_cast<std::uint64_t>(d);
            EVP_DigestUpdate(ctx, &v, sizeof v);
        }
        EVP_DigestUpdate(ctx, t.values().data(), t.values().size() * sizeof(float));
    });
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xf]);
    }
    return out;
}

}  // namespace pcmae::eval

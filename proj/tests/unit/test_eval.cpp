#include "test_util.hpp"

#include "pcmae/dataset.hpp"
#include "pcmae/probe.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace pcmae;
using namespace pcmae::eval;

namespace {

// Gaussian blobs: class c centered at 3 * e_c in a `dim`-dimensional space.
Features blobs(std::size_t classes, std::size_t per_class, std::size_t dim, std::uint64_t seed, std::vector<int>& labels) {
    Rng rng(seed);
    Features f;
    f.rows = classes * per_class;
    f.dim = dim;
    labels.clear();
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t i = 0; i < per_class; ++i) {
            for (std::size_t d = 0; d < dim; ++d)
                f.values.push_back(static_cast<float>((d == c ? 3.0 : 0.0) + rng.normal(0, 0.5)));
            labels.push_back(static_cast<int>(c));
        }
    return f;
}

}  // namespace

TEST_CASE("protocol names parse") {
    CHECK(parse_probe_kind("linear") == ProbeKind::linear);
    CHECK(parse_probe_kind("mlp-linear") == ProbeKind::linear);
    CHECK(parse_probe_kind("mlp3") == ProbeKind::mlp3);
    CHECK(parse_probe_kind("full") == ProbeKind::full);
    CHECK_THROWS_AS(parse_probe_kind("svm"), std::invalid_argument);
    CHECK(to_string(ProbeKind::mlp3) == "mlp3");
}

TEST_CASE("linear and MLP-3 heads separate well-separated blobs") {
    std::vector<int> ytr, yte;
    const auto tr = blobs(4, 20, 6, 1, ytr);
    const auto te = blobs(4, 10, 6, 2, yte);
    ProbeProtocol p;
    p.epochs = 40;
    p.lr = 1e-2;
    CHECK(probe_accuracy(tr, ytr, te, yte, p, 0) >= 0.95);
    p.kind = ProbeKind::mlp3;
    p.hidden = 32;
    CHECK(probe_accuracy(tr, ytr, te, yte, p, 0) >= 0.95);
    p.kind = ProbeKind::full;
    CHECK_THROWS_AS(probe_accuracy(tr, ytr, te, yte, p, 0), std::invalid_argument);
}

TEST_CASE("probe input validation") {
    std::vector<int> y;
    const auto f = blobs(1, 5, 3, 1, y);
    ProbeProtocol p;
    CHECK_THROWS_AS(probe_accuracy(f, y, f, y, p, 0), std::invalid_argument);
    std::vector<int> short_labels(2, 0);
    CHECK_THROWS_AS(probe_accuracy(f, short_labels, f, y, p, 0), std::invalid_argument);
    p.epochs = 0;
    CHECK_THROWS(p.validate());
}

TEST_CASE("probe training is seeded") {
    std::vector<int> ytr, yte;
    const auto tr = blobs(3, 10, 4, 3, ytr);
    const auto te = blobs(3, 10, 4, 4, yte);
    ProbeProtocol p;
    p.epochs = 5;
    CHECK(probe_accuracy(tr, ytr, te, yte, p, 7) == probe_accuracy(tr, ytr, te, yte, p, 7));
}

TEST_CASE("few-shot episodes are well formed") {
    std::vector<int> labels;
    for (int c = 0; c < 6; ++c)
        for (int i = 0; i < 12; ++i) labels.push_back(c);
    const auto ep = sample_episode(labels, 4, 3, 5, 11);
    CHECK(ep.classes.size() == 4);
    CHECK(std::set<int>(ep.classes.begin(), ep.classes.end()).size() == 4);
    CHECK(ep.support.size() == 12);
    CHECK(ep.query.size() == 20);
    std::set<std::size_t> used(ep.support.begin(), ep.support.end());
    for (std::size_t q : ep.query) CHECK(used.insert(q).second);
    for (std::size_t i = 0; i < ep.support.size(); ++i)
        CHECK(labels[ep.support[i]] == ep.classes[static_cast<std::size_t>(ep.support_labels[i])]);
    for (std::size_t i = 0; i < ep.query.size(); ++i)
        CHECK(labels[ep.query[i]] == ep.classes[static_cast<std::size_t>(ep.query_labels[i])]);
    CHECK_THROWS_AS(sample_episode(labels, 7, 3, 5, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_episode(labels, 2, 10, 5, 1), std::invalid_argument);
    const auto again = sample_episode(labels, 4, 3, 5, 11);
    CHECK(again.support == ep.support);
}

TEST_CASE("few-shot on features: separable blobs and the one-way case") {
    std::vector<int> y;
    const auto f = blobs(5, 25, 5, 9, y);
    ProbeProtocol head;
    head.kind = ProbeKind::mlp3;
    head.hidden = 32;
    head.epochs = 60;
    head.lr = 1e-2;
    const auto r = run_few_shot_features(f, y, 5, 5, 3, 1, head, 20);
    CHECK(r.accuracies.size() == 3);
    CHECK(r.mean >= 0.9);
    const auto one = run_few_shot_features(f, y, 1, 5, 2, 1, head, 20);
    CHECK(one.mean == 1.0);
}

TEST_CASE("sample statistics") {
    const double xs[] = {1, 2, 3, 4};
    CHECK(mean_of(xs) == 2.5);
    // oracle_gen.py
    CHECK(sample_stddev(xs) == doctest::Approx(1.2909944487358056).epsilon(1e-14));
    const double one[] = {5};
    CHECK(sample_stddev(one) == 0.0);
}

TEST_CASE("frozen protocols leave the encoder untouched; clones are independent") {
    auto cfg = ModelConfig::gradcheck();
    const auto params = model::ModelParams<float>::init(cfg, 1);
    data::DatasetManifest m;
    m.points = cfg.points_per_cloud;
    m.count_per_class = 3;
    const auto train = data::make_dataset(m);
    const auto test = data::make_dataset(data::with_split(m, "t", 2));
    ProbeProtocol p;
    p.epochs = 3;
    const std::uint64_t seeds[] = {0, 1};
    const auto r = run_probe(params, cfg, train, test, p, seeds);
    CHECK(r.accuracies.size() == 2);
    CHECK(r.encoder_hash_before == r.encoder_hash_after);
    CHECK(r.encoder_hash_before.size() == 64);

    p.kind = ProbeKind::full;
    p.epochs = 1;
    const auto before = encoder_hash(params);
    const auto full = run_probe(params, cfg, train, test, p, std::span<const std::uint64_t>(seeds, 1));
    CHECK(encoder_hash(params) == before);
    CHECK(full.accuracies[0] >= 0.0);

    auto copy = clone_params(params);
    copy.encoder.blocks[0].qkv.weight[0] += 1.0f;
    CHECK(encoder_hash(copy) != encoder_hash(params));
}

TEST_CASE("global features have 2C entries and depend only on the cloud") {
    const auto cfg = ModelConfig::gradcheck();
    const auto params = model::ModelParams<float>::init(cfg, 1);
    const auto cloud = testutil::random_cloud(cfg.points_per_cloud, 3);
    const auto a = extract_global_feature(params, cfg, cloud);
    CHECK(a.size() == 2 * cfg.dim);
    std::vector<geometry::PointCloud> many{testutil::random_cloud(cfg.points_per_cloud, 4), cloud};
    const auto f = extract_features(params, cfg, many, 1);
    CHECK(f.rows == 2);
    for (std::size_t d = 0; d < a.size(); ++d) CHECK(f.row(1)[d] == doctest::Approx(a[d]).epsilon(1e-5));
}

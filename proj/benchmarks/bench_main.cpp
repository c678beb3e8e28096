#include "pcmae/geometry.hpp"
#include "pcmae/losses.hpp"
#include "pcmae/model.hpp"
#include "pcmae/rng.hpp"
#include "pcmae/shapes.hpp"

#include <benchmark/benchmark.h>

using namespace pcmae;

namespace {

geometry::PointCloud cloud(std::size_t n) {
    return data::generate_shape({data::Family::torus, n, 1.0}, 1);
}

void BM_Fps(benchmark::State& st) {
    const auto c = cloud(static_cast<std::size_t>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(geometry::fps(c, 64));
}
BENCHMARK(BM_Fps)->Arg(1024)->Arg(2048);

void BM_Knn(benchmark::State& st) {
    const auto c = cloud(static_cast<std::size_t>(st.range(0)));
    const auto centers = geometry::fps(c, 64);
    for (auto _ : st) benchmark::DoNotOptimize(geometry::knn(c, centers, 32));
}
BENCHMARK(BM_Knn)->Arg(1024)->Arg(2048);

void BM_Chamfer(benchmark::State& st) {
    const std::size_t patches = static_cast<std::size_t>(st.range(0));
    Rng rng(3);
    std::vector<float> a(patches * 32 * 3), b(patches * 32 * 3);
    for (auto& v : a) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : b) v = static_cast<float>(rng.uniform(-1, 1));
    const ad::Tensor<float> pa({patches, 32, 3}, a), pb({patches, 32, 3}, b);
    for (auto _ : st) {
        ad::Tape<float> tape(ad::Tape<float>::Mode::inference);
        benchmark::DoNotOptimize(losses::chamfer_l2(tape, pa, pb).item());
    }
}
BENCHMARK(BM_Chamfer)->Arg(38)->Arg(304);

void BM_PretrainStep(benchmark::State& st) {
    const auto cfg = ModelConfig::tiny();
    auto params = model::ModelParams<float>::init(cfg, 1);
    std::vector<geometry::PointCloud> clouds;
    for (std::size_t i = 0; i < 8; ++i)
        clouds.push_back(data::generate_shape({data::kAllFamilies[i], cfg.points_per_cloud, 1.0}, i));
    const auto batch = model::tokenize_clouds(clouds, cfg);
    const bool backward = st.range(0) != 0;
    for (auto _ : st) {
        ad::Tape<float> tape(backward ? ad::Tape<float>::Mode::record : ad::Tape<float>::Mode::inference);
        const auto out = model::forward_pretrain(tape, params, cfg, std::span<const geometry::PatchSet>(batch), 7);
        auto loss = losses::pretrain_loss(tape, out, cfg);
        if (backward) {
            params.zero_grad();
            tape.backward(loss.total);
        }
        benchmark::DoNotOptimize(loss.report.total);
    }
}
BENCHMARK(BM_PretrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();

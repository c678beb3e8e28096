#include "test_util.hpp"

#include "cli.hpp"
#include "pcmae/cloud_io.hpp"
#include "pcmae/shapes.hpp"

#include <doctest.h>

#include <fstream>
#include <iterator>
#include <sstream>

using namespace pcmae;

namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    Result r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

bool has(const std::string& text, const std::string& needle) { return text.find(needle) != std::string::npos; }

}  // namespace

TEST_CASE("usage errors exit with code 1") {
    testutil::TempDir dir("cli_usage");
    const auto out = (dir.path / "r").string();
    auto r = run({"pretrain", "--out", out, "--mask-ratio", "1.1"});
    CHECK(r.code == 1);
    CHECK(has(r.err, "mask"));
    r = run({"pretrain", "--out", out, "--no-dual-mask", "--share-decoder"});
    CHECK(r.code == 1);
    CHECK(has(r.err, "valid ablation rows"));
    r = run({"pretrain", "--out", out, "--no-dual-mask"});
    CHECK(r.code == 1);
    CHECK(run({"pretrain", "--out", out, "--bogus"}).code == 1);
    CHECK(run({}).code == 1);
    CHECK(run({"maskstats", "--mode", "poisson"}).code == 1);
    CHECK_FALSE(std::filesystem::exists(out));
}

TEST_CASE("help lists commands and flags") {
    auto r = run({"--help"});
    CHECK(r.code == 0);
    for (const char* cmd : {"pretrain", "probe", "fewshot", "sweep", "maskstats", "gradcheck", "verify", "chamfer"})
        CHECK(has(r.out, cmd));
    r = run({"pretrain", "--help"});
    CHECK(r.code == 0);
    for (const char* flag : {"--no-dual-mask", "--no-contrastive", "--share-decoder", "--separate-encoders",
                             "--mask-ratio", "--lambda", "--resume"})
        CHECK(has(r.out, flag));
}

TEST_CASE("chamfer of a file with itself is zero; missing files are runtime errors") {
    testutil::TempDir dir("cli_chamfer");
    const auto a = (dir.path / "a.xyz").string();
    CHECK(run({"shape", "--family", "torus", "--points", "64", "--out", a}).code == 0);
    auto r = run({"chamfer", a, a});
    CHECK(r.code == 0);
    CHECK(std::stod(r.out.substr(r.out.find_last_of(' ') + 1)) == 0.0);

    data::write_cloud(geometry::PointCloud{{{0, 0, 0}}, std::nullopt}, dir.path / "b.xyz");
    data::write_cloud(geometry::PointCloud{{{1, 0, 0}, {0, 2, 0}}, std::nullopt}, dir.path / "c.xyz");
    r = run({"chamfer", (dir.path / "b.xyz").string(), (dir.path / "c.xyz").string()});
    CHECK(r.code == 0);
    CHECK(has(r.out, "3.5"));
    CHECK(run({"chamfer", a, (dir.path / "missing.xyz").string()}).code == 2);
}

TEST_CASE("maskstats fixed mode reports certainty when 2K > n") {
    auto r = run({"maskstats", "--n", "64", "--ratio", "0.6", "--trials", "2000", "--mode", "fixed"});
    CHECK(r.code == 0);
    CHECK(has(r.out, "1.000000"));
    CHECK(has(r.out, "2K > n"));
    r = run({"maskstats", "--n", "16", "--ratio", "0.25", "--trials", "4000", "--mode", "bernoulli"});
    CHECK(r.code == 0);
    CHECK(has(r.out, "0.643926"));
    CHECK(has(r.out, "within 3 sigma"));
}

TEST_CASE("gradcheck on the micro preset succeeds") {
    const auto r = run({"gradcheck", "--preset", "micro"});
    CHECK(r.code == 0);
    CHECK(has(r.out, "PASS"));
}

TEST_CASE("every toggle combination with two masks is accepted") {
    testutil::TempDir dir("cli_toggles");
    int i = 0;
    for (bool nc : {false, true})
        for (bool sd : {false, true})
            for (bool se : {false, true}) {
                std::vector<std::string> args{"pretrain", "--init-only", "--out", (dir.path / std::to_string(i++)).string()};
                if (nc) args.push_back("--no-contrastive");
                if (sd) args.push_back("--share-decoder");
                if (se) args.push_back("--separate-encoders");
                const auto r = run(args);
                CAPTURE(r.err);
                CHECK(r.code == 0);
            }
    CHECK(run({"pretrain", "--init-only", "--no-dual-mask", "--no-contrastive", "--out",
               (dir.path / "base").string()})
              .code == 0);
}

TEST_CASE("same seed gives identical metrics; baseline omits the dual-mask terms") {
    testutil::TempDir dir("cli_seed");
    const auto a = dir.path / "a", b = dir.path / "b", base = dir.path / "base";
    REQUIRE(run({"pretrain", "--seed", "7", "--max-steps", "2", "--out", a.string()}).code == 0);
    REQUIRE(run({"pretrain", "--seed", "7", "--max-steps", "2", "--out", b.string()}).code == 0);
    const auto ma = slurp(a / "metrics.jsonl");
    CHECK_FALSE(ma.empty());
    CHECK(ma == slurp(b / "metrics.jsonl"));
    CHECK(has(ma, "recon2"));
    CHECK(has(ma, "contras"));
    CHECK(run({"pretrain", "--seed", "7", "--max-steps", "2", "--out", a.string()}).code == 1);

    REQUIRE(run({"pretrain", "--seed", "7", "--max-steps", "2", "--no-dual-mask", "--no-contrastive", "--out",
                 base.string()})
                .code == 0);
    const auto mb = slurp(base / "metrics.jsonl");
    CHECK_FALSE(has(mb, "recon2"));
    CHECK_FALSE(has(mb, "contras"));
}

TEST_CASE("resume continues to the requested step") {
    testutil::TempDir dir("cli_resume");
    const auto run_dir = dir.path / "r";
    REQUIRE(run({"pretrain", "--max-steps", "2", "--out", run_dir.string()}).code == 0);
    auto r = run({"pretrain", "--resume", "--max-steps", "3", "--out", run_dir.string()});
    CHECK(r.code == 0);
    const auto text = slurp(run_dir / "metrics.jsonl");
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
    CHECK(run({"pretrain", "--resume", "--share-decoder", "--out", run_dir.string()}).code == 1);
}

TEST_CASE("probe reports mean and spread; corrupt checkpoints are rejected") {
    testutil::TempDir dir("cli_probe");
    const auto run_dir = dir.path / "r";
    REQUIRE(run({"pretrain", "--init-only", "--out", run_dir.string()}).code == 0);
    const auto ckpt = (run_dir / "final.pcme").string();
    auto r = run({"probe", "--ckpt", ckpt, "--seeds", "3", "--epochs", "2", "--train-per-class", "4",
                  "--test-per-class", "2"});
    CAPTURE(r.err);
    CHECK(r.code == 0);
    CHECK(has(r.out, "+-"));
    CHECK(std::filesystem::exists(run_dir / "results.jsonl"));
    CHECK(run({"probe", "--ckpt", ckpt, "--protocol", "svm"}).code == 1);

    auto bytes = slurp(ckpt);
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 1);
    const auto bad = dir.path / "bad.pcme";
    std::ofstream(bad, std::ios::binary) << bytes;
    r = run({"probe", "--ckpt", bad.string()});
    CHECK(r.code == 2);
    CHECK(has(r.err, "checkpoint"));
}

#include "cli.hpp"

#include "pcmae/checkpoint.hpp"
#include "pcmae/config.hpp"
#include "pcmae/ini.hpp"

#include <CLI11.hpp>

#include <algorithm>

namespace pcmae::cli {

namespace {

template <class T>
void set_if(const CLI::Option* opt, std::optional<T>& dst, const T& value) {
    if (opt->count() > 0) dst = value;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Point cloud masked autoencoder with dual masking and a contrastive co-mask term", "pcmae"};
    app.require_subcommand(1);
    app.fallthrough(false);

    PretrainOptions pre;
    std::uint64_t pre_seed = 0;
    double pre_ratio = 0, pre_lambda = 0;
    std::size_t pre_max_steps = 0, pre_epochs = 0;
    auto* c_pre = app.add_subcommand("pretrain", "Pre-train an encoder into a run directory");
    c_pre->add_option("--config", pre.config_path, "Config file (sections [model], [train], [data])");
    c_pre->add_option("--preset", pre.preset, "Base recipe: tiny, paper or paper-table-lr")->capture_default_str();
    c_pre->add_option("--out", pre.out_dir, "Run directory")->required();
    auto* o_seed = c_pre->add_option("--seed", pre_seed, "Master seed");
    c_pre->add_flag("--resume", pre.resume, "Continue from <out>/latest.pcme");
    c_pre->add_flag("--no-dual-mask", pre.no_dual_mask, "Single mask (baseline; requires --no-contrastive)");
    c_pre->add_flag("--no-contrastive", pre.no_contrastive, "Drop the co-mask contrastive term");
    c_pre->add_flag("--share-decoder", pre.share_decoder, "One decoder for both masked views");
    c_pre->add_flag("--separate-encoders", pre.separate_encoders, "Independent encoder weights per view");
    auto* o_ratio = c_pre->add_option("--mask-ratio", pre_ratio, "Mask ratio r in (0, 1)");
    auto* o_lambda = c_pre->add_option("--lambda", pre_lambda, "Weight of the contrastive term");
    auto* o_max = c_pre->add_option("--max-steps", pre_max_steps, "Stop after this many optimizer steps (0 = all)");
    auto* o_epochs = c_pre->add_option("--epochs", pre_epochs, "Override the epoch count");
    c_pre->add_flag("--init-only", pre.init_only, "Write the step-0 checkpoint and stop");
    c_pre->add_option("--log-every", pre.log_every, "Progress line interval in steps (0 = quiet)")->capture_default_str();

    ProbeOptions probe;
    auto* c_probe = app.add_subcommand("probe", "Evaluate a checkpoint's encoder on the synthetic classes");
    c_probe->add_option("--ckpt", probe.ckpt, "Checkpoint file")->required();
    c_probe->add_option("--protocol", probe.protocol, "full, linear or mlp3")->capture_default_str();
    c_probe->add_option("--seeds", probe.seeds, "Number of probe seeds")->capture_default_str();
    c_probe->add_flag("--shuffle-labels", probe.shuffle_labels, "Permute training labels (chance-level sanity run)");
    c_probe->add_option("--epochs", probe.epochs, "Probe training epochs")->capture_default_str();
    c_probe->add_option("--train-per-class", probe.train_per_class, "Probe training clouds per class")
        ->capture_default_str();
    c_probe->add_option("--test-per-class", probe.test_per_class, "Probe test clouds per class")->capture_default_str();
    c_probe->add_option("--results-dir", probe.results_dir, "Where results.jsonl goes (default: next to --ckpt)");

    FewShotOptions fs;
    auto* c_fs = app.add_subcommand("fewshot", "Episodic few-shot classification with an MLP-3 head");
    c_fs->add_option("--ckpt", fs.ckpt, "Checkpoint file")->required();
    c_fs->add_option("--way", fs.way, "Classes per episode")->capture_default_str();
    c_fs->add_option("--shot", fs.shot, "Support clouds per class")->capture_default_str();
    c_fs->add_option("--episodes", fs.episodes, "Number of episodes")->capture_default_str();
    c_fs->add_option("--seed", fs.seed, "Episode seed")->capture_default_str();
    c_fs->add_option("--epochs", fs.epochs, "Head training epochs per episode")->capture_default_str();
    c_fs->add_option("--results-dir", fs.results_dir, "Where results.jsonl goes (default: next to --ckpt)");

    SweepOptions sw;
    std::uint64_t sw_seed = 0;
    std::size_t sw_max = 0;
    auto* c_sw = app.add_subcommand("sweep", "Pre-train and linearly probe over a list of mask ratios");
    c_sw->add_option("--preset", sw.preset, "Base recipe")->capture_default_str();
    c_sw->add_option("--config", sw.config_path, "Config file");
    c_sw->add_option("--out", sw.out_dir, "Sweep directory (one run per ratio)")->required();
    c_sw->add_option("--ratios", sw.ratios, "Comma-separated mask ratios")->delimiter(',')->capture_default_str();
    auto* o_sw_seed = c_sw->add_option("--seed", sw_seed, "Master seed");
    auto* o_sw_max = c_sw->add_option("--max-steps", sw_max, "Pre-training steps per ratio");
    c_sw->add_option("--probe-seeds", sw.probe_seeds, "Probe seeds per ratio")->capture_default_str();
    c_sw->add_option("--probe-epochs", sw.probe_epochs, "Probe training epochs")->capture_default_str();

    MaskStatsOptions ms;
    auto* c_ms = app.add_subcommand("maskstats", "Co-mask probability: closed form vs Monte Carlo");
    c_ms->add_option("--n", ms.n, "Tokens per cloud")->capture_default_str();
    c_ms->add_option("--ratio", ms.ratio, "Mask ratio")->capture_default_str();
    c_ms->add_option("--trials", ms.trials, "Monte-Carlo trials")->capture_default_str();
    c_ms->add_option("--mode", ms.mode, "bernoulli, fixed or both")->capture_default_str();
    c_ms->add_option("--seed", ms.seed, "Monte-Carlo seed")->capture_default_str();

    GradcheckOptions gc;
    auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
    c_gc->add_option("--preset", gc.preset, "micro (every element) or tiny (sampled elements)")->capture_default_str();
    c_gc->add_option("--sample", gc.sample, "Elements per tensor (0 = all; tiny defaults to 4)")->capture_default_str();
    c_gc->add_option("--step", gc.step, "Central-difference step")->capture_default_str();
    c_gc->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();
    c_gc->add_option("--seed", gc.seed, "Seed for clouds, weights and masks")->capture_default_str();

    VerifyOptions vf;
    auto* c_vf = app.add_subcommand("verify", "Run every oracle (kernels, co-mask probability, gradients)");
    c_vf->add_option("--seed", vf.seed, "Master seed")->capture_default_str();
    c_vf->add_option("--trials", vf.trials, "Monte-Carlo trials per cell")->capture_default_str();
    c_vf->add_option("--cases", vf.cases, "Random instances per kernel oracle")->capture_default_str();
    c_vf->add_flag("--no-gradients", vf.no_gradients, "Skip the finite-difference oracle");

    std::string cham_a, cham_b;
    auto* c_ch = app.add_subcommand("chamfer", "Symmetric l2 Chamfer distance between two cloud files");
    c_ch->add_option("FILE_A", cham_a, "First cloud (text xyz or binary PCXY)")->required();
    c_ch->add_option("FILE_B", cham_b, "Second cloud")->required();

    ShapeOptions sh;
    auto* c_sh = app.add_subcommand("shape", "Write one synthetic shape to a cloud file");
    c_sh->add_option("--family", sh.family,
                     "sphere, box, cylinder, torus, cone, two-spheres, l-bracket or plane")
        ->capture_default_str();
    c_sh->add_option("--seed", sh.seed, "Shape seed")->capture_default_str();
    c_sh->add_option("--points", sh.points, "Point count")->capture_default_str();
    c_sh->add_option("--out", sh.out_path, "Output file (.xyz text, .pcxy binary)")->required();
    c_sh->add_flag("--raw", sh.raw, "Skip centering and unit-sphere scaling");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
            app.exit(e, out, err);
            return kOk;
        }
        app.exit(e, out, err);
        return kUsage;
    }

    try {
        if (*c_pre) {
            set_if(o_seed, pre.seed, pre_seed);
            set_if(o_ratio, pre.mask_ratio, pre_ratio);
            set_if(o_lambda, pre.lambda, pre_lambda);
            set_if(o_max, pre.max_steps, pre_max_steps);
            set_if(o_epochs, pre.epochs, pre_epochs);
            return cmd_pretrain(pre, out);
        }
        if (*c_probe) return cmd_probe(probe, out);
        if (*c_fs) return cmd_fewshot(fs, out);
        if (*c_sw) {
            set_if(o_sw_seed, sw.seed, sw_seed);
            set_if(o_sw_max, sw.max_steps, sw_max);
            return cmd_sweep(sw, out);
        }
        if (*c_ms) return cmd_maskstats(ms, out);
        if (*c_gc) return cmd_gradcheck(gc, out);
        if (*c_vf) return cmd_verify(vf, out);
        if (*c_ch) return cmd_chamfer(cham_a, cham_b, out);
        if (*c_sh) return cmd_shape(sh, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConfigError& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const VerificationFailure& e) {
        err << "verification failure: " << e.what() << "\n";
        return kVerification;
    } catch (const CheckpointError& e) {
        err << "checkpoint error: " << e.what() << "\n";
        return kRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
    err << "no command given; see --help\n";
    return kUsage;
}

}  // namespace pcmae::cli

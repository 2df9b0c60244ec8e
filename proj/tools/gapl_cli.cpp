// Command-line front end. Talks to the library only through gapl.h.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gapl/gapl.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitSignal = 3;
constexpr int kExitRuntime = 4;

int report_failure(gapl_status s) {
    std::fprintf(stderr, "gapl: %s\n", gapl_last_error());
    return (s == GAPL_ERR_ARGUMENT || s == GAPL_ERR_CONFIG) ? kExitUsage : kExitRuntime;
}

void print_and_free(char* text) {
    if (!text) return;
    std::fputs(text, stdout);
    gapl_string_free(text);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stability-gap lab: train task sequences, measure the gap, probe linear connectivity"};
    app.set_version_flag("--version", gapl_version());
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::uint64_t> seed;
    std::string out, config;
    app.add_option("--seed", seed, "Random seed (gen-data) or single-seed override (train)");
    app.add_option("--out", out, "Output directory");
    app.add_option("--config", config, "Experiment config (JSON)");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a Gaussian-blob dataset as raw byte files");
    std::string kind = "blobs";
    gapl_blobs_options blobs;
    gapl_blobs_options_init(&blobs);
    std::optional<double> mean_scale;
    gen->add_option("--kind", kind, "Generator")->check(CLI::IsMember({"blobs"}));
    gen->add_option("--classes", blobs.n_classes, "Number of classes")->capture_default_str();
    gen->add_option("--per-class", blobs.n_per_class, "Samples per class (80% train)")->capture_default_str();
    gen->add_option("--dim", blobs.dim, "Feature dimension")->capture_default_str();
    gen->add_option("--spread", blobs.spread, "Within-class standard deviation")->capture_default_str();
    gen->add_option("--mean-scale", mean_scale, "Half-width of the class-mean box (default 4 x spread)");

    // train
    auto* train = app.add_subcommand("train", "Run an experiment config");
    std::string train_config;
    unsigned threads = 0;
    train->add_option("config", train_config, "Experiment config (same as --config)");
    train->add_option("--threads", threads, "Seeds trained in parallel (overrides the config)");

    // gap
    auto* gap = app.add_subcommand("gap", "Stability-gap metrics for one or more traces");
    std::vector<std::string> traces;
    gapl_gap_options gap_opts;
    gapl_gap_options_init(&gap_opts);
    gap->add_option("traces", traces, "trace.csv files; several give per-run and median metrics")->required();
    gap->add_option("-K,--baseline-evals", gap_opts.baseline_evals, "Evals averaged for the baseline")
        ->capture_default_str();
    gap->add_option("-W,--recovery-window", gap_opts.recovery_window, "Consecutive evals needed to recover")
        ->capture_default_str();
    gap->add_option("--tolerance", gap_opts.tolerance, "Allowed shortfall from the baseline")->capture_default_str();
    gap->add_option("--window", gap_opts.analysis_window, "Iterations after the boundary")->capture_default_str();
    gap->add_option("--boundary", gap_opts.boundary, "Boundary iteration (default: last task change)");

    // lmc
    auto* lmc = app.add_subcommand("lmc", "Loss along the straight line between two checkpoints");
    std::string ckpt_a, ckpt_b, model, data, sgd_path;
    gapl_lmc_options lmc_opts;
    gapl_lmc_options_init(&lmc_opts);
    lmc->add_option("checkpoint_a", ckpt_a, "Start checkpoint (lambda = 0)")->required();
    lmc->add_option("checkpoint_b", ckpt_b, "End checkpoint (lambda = 1)")->required();
    lmc->add_option("--model", model, "model.json (default: from the run owning checkpoint_a)");
    lmc->add_option("--data", data, "gen-data directory to evaluate on");
    lmc->add_option("--step", lmc_opts.step, "Lambda step")->capture_default_str();
    lmc->add_option("--sgd-path", sgd_path, "Checkpoint directory whose trajectory is overlaid");
    lmc->add_option("--threads", lmc_opts.threads, "Worker threads for the lambda grid")->capture_default_str();

    // report
    auto* rep = app.add_subcommand("report", "SVG figures for a run or seed directory");
    std::string run_dir;
    rep->add_option("run_dir", run_dir, "Directory written by train")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    char* text = nullptr;

    if (*gen) {
        if (out.empty()) {
            std::fprintf(stderr, "gapl gen-data: --out is required\n");
            return kExitUsage;
        }
        if (seed) blobs.seed = *seed;
        if (mean_scale) {
            blobs.mean_scale = *mean_scale;
            blobs.has_mean_scale = 1;
        }
        if (gapl_status s = gapl_gen_data(&blobs, out.c_str(), &text)) return report_failure(s);
        print_and_free(text);
        std::puts("");
        return kExitOk;
    }

    if (*train) {
        if (!train_config.empty() && !config.empty() && train_config != config) {
            std::fprintf(stderr, "gapl train: config given twice\n");
            return kExitUsage;
        }
        const std::string path = train_config.empty() ? config : train_config;
        if (path.empty()) {
            std::fprintf(stderr, "gapl train: a config file is required\n");
            return kExitUsage;
        }
        const std::uint64_t one = seed.value_or(0);
        if (gapl_status s = gapl_train(path.c_str(), out.empty() ? nullptr : out.c_str(), seed ? &one : nullptr,
                                       seed ? 1 : 0, threads, &text))
            return report_failure(s);
        print_and_free(text);
        return kExitOk;
    }

    if (*gap) {
        std::vector<const char*> paths;
        for (const auto& t : traces) paths.push_back(t.c_str());
        int recovered = 1;
        if (gapl_status s = gapl_gap_report(paths.data(), paths.size(), &gap_opts, &text, &recovered))
            return report_failure(s);
        print_and_free(text);
        return recovered ? kExitOk : kExitSignal;
    }

    if (*lmc) {
        lmc_opts.checkpoint_a = ckpt_a.c_str();
        lmc_opts.checkpoint_b = ckpt_b.c_str();
        lmc_opts.model_path = model.empty() ? nullptr : model.c_str();
        lmc_opts.config_path = config.empty() ? nullptr : config.c_str();
        lmc_opts.data_dir = data.empty() ? nullptr : data.c_str();
        lmc_opts.sgd_path_dir = sgd_path.empty() ? nullptr : sgd_path.c_str();
        lmc_opts.out_dir = out.empty() ? nullptr : out.c_str();
        if (gapl_status s = gapl_lmc(&lmc_opts, &text)) return report_failure(s);
        print_and_free(text);
        return kExitOk;
    }

    if (*rep) {
        if (gapl_status s = gapl_report(run_dir.c_str(), out.empty() ? nullptr : out.c_str(), &text))
            return report_failure(s);
        print_and_free(text);
        return kExitOk;
    }
    return kExitUsage;
}

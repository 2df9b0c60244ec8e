#include <doctest.h>

#include <sstream>

#include "gapl/error.hpp"
#include "gapl/experiment.hpp"
#include "gapl/report.hpp"
#include "support.hpp"

using namespace gapl;
using namespace gapl::testing;
using nlohmann::json;

namespace {

json tiny(const std::filesystem::path& out) {
    json j = json::parse(R"({
        "dataset": {"kind": "blobs", "classes": 4, "per_class": 20, "dim": 4, "spread": 1.0},
        "model": {"name": "mlp", "hidden": [8]},
        "train": {"lr": 0.05, "batch_size": 16, "epochs": [20, 5], "eval_every": 5, "dense_window": 10,
                  "eval_tail": 3, "checkpoint_every": 5},
        "analysis": {"K": 2, "W": 2, "window": 100, "lmc_step": 0.25}
    })");
    j["output"] = out.string();
    return j;
}

std::string config_error(const json& j) {
    try {
        ExperimentConfig::from_json(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("config defaults") {
    const ExperimentConfig c = ExperimentConfig::from_json(json::object());
    CHECK(c.dataset.kind == "blobs");
    CHECK(c.model.hidden == std::vector<std::size_t>{128, 64});
    CHECK(c.split.fractions == std::vector<double>{50, 50});
    CHECK(c.split.joint);
    CHECK(c.train.lr == 0.01);
    CHECK(c.train.batch_size == 64);
    CHECK(c.analysis.gap.baseline_evals == 5);
    CHECK(c.analysis.lmc_step == 0.01);
    CHECK(c.seeds == std::vector<std::uint64_t>{1});
    CHECK(c.output == "run");
}

TEST_CASE("config errors name the offending key") {
    CHECK(config_error({{"bogus", 1}}).find("unknown key 'bogus'") != std::string::npos);
    CHECK(config_error({{"train", {{"lr", 0.1}, {"lrr", 1}}}}).find("train") != std::string::npos);
    CHECK(config_error({{"train", {{"lr", "fast"}}}}).find("train.lr") != std::string::npos);
    CHECK(config_error({{"split", {{"fractions", {60, 60}}}}}).find("split.fractions") != std::string::npos);
    CHECK(config_error({{"seeds", {1, 1}}}).find("duplicate") != std::string::npos);
    CHECK(config_error({{"model", {{"name", "resnet"}}}}).find("model.name") != std::string::npos);
    CHECK(config_error({{"model", {{"channels", {4}}}}}).find("model.channels") != std::string::npos);
    CHECK(config_error({{"analysis", {{"W", 0}}}}).find("analysis.W") != std::string::npos);
    CHECK(config_error({{"train", {{"momentum", 1.5}}}}).find("train") != std::string::npos);
    CHECK(config_error({{"dataset", {{"kind", "raw"}}}}).find("dataset") != std::string::npos);
    CHECK(config_error({{"train", {{"epochs", 3}}}}).empty());
}

TEST_CASE("canonical form and hash ignore key order") {
    const json a = json::parse(R"({"train": {"lr": 0.1, "momentum": 0.5}, "seeds": [3, 4]})");
    const json b = json::parse(R"({"seeds": [3, 4], "train": {"momentum": 0.5, "lr": 0.1}})");
    const ExperimentConfig ca = ExperimentConfig::from_json(a), cb = ExperimentConfig::from_json(b);
    CHECK(ca.canonical() == cb.canonical());
    CHECK(ca.hash() == cb.hash());
    CHECK(ca.hash().size() == 64);
    CHECK(ExperimentConfig::from_json(ca.to_json()).canonical() == ca.canonical());
    CHECK(ca.hash() != ExperimentConfig::from_json(json::object()).hash());
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("model json round-trips and checks the digest") {
    const ModelSpec mlp = build_model(ModelConfig{}, {32}, 8);
    CHECK(model_from_json(model_to_json(mlp)) == mlp);
    ModelConfig cnn;
    cnn.name = "smallcnn";
    cnn.hidden = {16};
    const ModelSpec c = build_model(cnn, {1, 8, 8}, 3);
    CHECK(model_from_json(model_to_json(c)) == c);
    json tampered = model_to_json(mlp);
    tampered["digest"] = std::string(64, '0');
    CHECK_THROWS_AS(model_from_json(tampered), SpecMismatchError);
    // Image-shaped input to an MLP gets flattened first.
    CHECK(build_model(ModelConfig{}, {1, 4, 4}, 3).param_count() == 16 * 128 + 128 + 128 * 64 + 64 + 64 * 3 + 3);
}

TEST_CASE("end-to-end run writes the documented layout") {
    TempDir dir("e2e");
    const ExperimentConfig cfg = ExperimentConfig::from_json(tiny(dir.path / "run"));
    const RunSummary s = run_experiment(cfg);
    REQUIRE(s.runs.size() == 1);
    const SeedRun& r = s.runs[0];
    CHECK(r.boundary == 40);
    CHECK(r.trace.size() == 60);
    REQUIRE(r.gap);
    REQUIRE(r.lmc);
    CHECK(r.lmc->size() == 5);
    REQUIRE(r.path);
    CHECK(r.path->iterations.front() == 40);
    CHECK(r.path->iterations.back() == 60);

    const auto seed_dir = dir.path / "run" / "seed-1";
    for (const char* f : {"model.json", "trace.csv", "trace_task0.csv", "trace_task1.csv", "gap.txt", "lmc.csv",
                          "path.csv", "checkpoints/index.csv", "checkpoints/ckpt-000000040.gapl"})
        CHECK_MESSAGE(std::filesystem::exists(seed_dir / f), f);
    // The file holds 9 significant digits; re-serializing what was read is stable.
    const TrainTrace back = read_trace_csv(seed_dir / "trace.csv");
    REQUIRE(back.size() == r.trace.size());
    std::ostringstream a, b;
    write_trace_csv(a, back);
    write_trace_csv(b, r.trace);
    CHECK(a.str() == b.str());
    CHECK(slurp(seed_dir / "gap.txt").rfind("boundary=40\npre_switch_acc=", 0) == 0);
    CHECK(load_model_file(seed_dir / "model.json") == build_model(cfg.model, {4}, 4));

    const json manifest = json::parse(slurp(dir.path / "run" / "manifest.json"));
    CHECK(manifest["config_hash"] == cfg.hash());
    CHECK(manifest["versions"]["checkpoint_format"] == 1);
    const auto files = manifest["files"].get<std::vector<std::string>>();
    CHECK(std::is_sorted(files.begin(), files.end()));
    CHECK(std::find(files.begin(), files.end(), "seed-1/trace.csv") != files.end());
    CHECK(ExperimentConfig::from_file(dir.path / "run" / "config.json").hash() == cfg.hash());
    CHECK(slurp(dir.path / "run" / "gap_summary.txt").find("median.gap_depth=") != std::string::npos);
}

TEST_CASE("in-memory runs match persisted runs; several seeds give several subruns") {
    TempDir dir("seeds");
    json j = tiny(dir.path / "run");
    j["seeds"] = {1, 2, 3, 4, 5};
    j["threads"] = 3;
    const ExperimentConfig cfg = ExperimentConfig::from_json(j);
    const RunSummary disk = run_experiment(cfg);
    CHECK(disk.runs.size() == 5);
    for (int s = 1; s <= 5; ++s) CHECK(std::filesystem::exists(dir.path / "run" / ("seed-" + std::to_string(s))));
    REQUIRE(disk.median);

    RunOptions mem;
    mem.persist = false;
    const RunSummary ram = run_experiment(cfg, mem);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(ram.runs[i].dir.empty());
        CHECK(ram.runs[i].trace == disk.runs[i].trace);
        CHECK(ram.runs[i].gap == disk.runs[i].gap);
    }
    CHECK_FALSE(disk.runs[0].trace == disk.runs[1].trace);
}

TEST_CASE("refuses to overwrite an unrelated directory") {
    TempDir dir("clobber");
    std::filesystem::create_directories(dir.path / "run" / "seed-1");
    std::ofstream(dir.path / "run" / "seed-1" / "notes.txt") << "keep me";
    const ExperimentConfig cfg = ExperimentConfig::from_json(tiny(dir.path / "run"));
    CHECK_THROWS_AS(run_experiment(cfg), IoError);
    CHECK(slurp(dir.path / "run" / "seed-1" / "notes.txt") == "keep me");
}

TEST_CASE("report renders self-contained svg figures") {
    TempDir dir("report");
    const ExperimentConfig cfg = ExperimentConfig::from_json(tiny(dir.path / "run"));
    run_experiment(cfg);
    const auto written = write_report(dir.path / "run", dir.path / "fig");
    CHECK(written.size() == 3);
    for (const auto& p : written) {
        const std::string svg = slurp(p);
        CHECK(svg.rfind("<svg", 0) == 0);
        CHECK(svg.find("</svg>") != std::string::npos);
        CHECK(svg.find("href") == std::string::npos);
        CHECK(svg.find("<script") == std::string::npos);
    }
    // Same inputs, same bytes.
    const auto again = write_report(dir.path / "run", dir.path / "fig2");
    for (std::size_t i = 0; i < written.size(); ++i) CHECK(slurp(written[i]) == slurp(again[i]));

    CHECK_THROWS_AS(accuracy_figure({}), InsufficientTraceError);
    CHECK_THROWS_AS(probe_figure({}), InsufficientTraceError);
}

#include <doctest.h>

#include <cstring>
#include <fstream>

#include "gapl/error.hpp"
#include "gapl/trainer.hpp"
#include "support.hpp"

using namespace gapl;
using namespace gapl::testing;

namespace {

struct Tiny {
    TrainTest data;
    ModelSpec spec = ModelSpec::mlp({8, 16, 4});
    TaskSequence tasks;
    TrainConfig cfg;

    Tiny() {
        BlobsParams bp;
        bp.n_classes = 4;
        bp.n_per_class = 40;  // 32 train per class
        bp.dim = 8;
        bp.spread = 1.0;
        data = gen_blobs(bp);
        tasks = split_tasks(data.train, {50, 50}, true, 11);  // pools of 64 and 128
        cfg.epochs = {30, 10};
        cfg.eval_every = 10;
        cfg.dense_window = 5;
        cfg.eval_tail = 3;
        cfg.checkpoint_every = 10;
        cfg.seed = 2;
    }
};

std::vector<std::uint64_t> eval_iterations(const TrainTrace& t) {
    std::vector<std::uint64_t> out;
    for (const auto& r : t)
        if (r.test_acc) out.push_back(r.iteration);
    return out;
}

}  // namespace

TEST_CASE("sgd with momentum by hand") {
    const SpecDigest d{};
    ParamVector p({1.0, -2.0}, d);
    OptimizerState st = OptimizerState::zeros(2);
    sgd_step(p, ParamVector({0.5, 1.0}, d), st, 0.1, 0.9);
    CHECK(st.velocity == std::vector<double>{0.5, 1.0});
    CHECK(p.values[0] == doctest::Approx(0.95));
    CHECK(p.values[1] == doctest::Approx(-2.1));
    sgd_step(p, ParamVector({0.5, 1.0}, d), st, 0.1, 0.9);
    CHECK(st.velocity[0] == doctest::Approx(0.95));
    CHECK(p.values[0] == doctest::Approx(0.855));

    OptimizerState plain = OptimizerState::zeros(1);
    ParamVector q({1.0}, d);
    sgd_step(q, ParamVector({2.0}, d), plain, 0.25, 0.0);
    CHECK(q.values[0] == 0.5);

    CHECK_THROWS_AS(sgd_step(q, ParamVector({1.0, 2.0}, d), plain, 0.1, 0.0), ShapeError);
    ParamVector huge({1e308}, d);
    CHECK_THROWS_AS(sgd_step(huge, ParamVector({-1e308}, d), plain, 1e10, 0.0), DivergenceError);
}

TEST_CASE("checkpoint files round-trip bit for bit") {
    TempDir dir("ckpt");
    const ModelSpec spec = ModelSpec::mlp({5, 3});
    ParamVector p = init_params(spec, 8);
    p.values[0] = -0.0;
    p.values[1] = 1e-310;  // subnormal
    const auto path = dir.path / checkpoint_name(42);
    CHECK(path.filename() == "ckpt-000000042.gapl");
    write_checkpoint(path, p);
    CHECK(std::filesystem::file_size(path) == 4 + 2 + 32 + 8 + 8 * p.size());
    const ParamVector back = read_checkpoint(path);
    CHECK(back.spec_digest == spec.digest());
    CHECK(std::memcmp(back.values.data(), p.values.data(), 8 * p.size()) == 0);
}

TEST_CASE("corrupt checkpoints raise FormatError with offsets") {
    TempDir dir("ckptbad");
    const ModelSpec spec = ModelSpec::mlp({5, 3});
    const auto good = dir.path / "good.gapl";
    write_checkpoint(good, init_params(spec, 1));
    const std::string bytes = slurp(good);
    auto variant = [&](const std::string& name, std::string b) {
        std::ofstream(dir.path / name, std::ios::binary) << b;
        return dir.path / name;
    };
    std::string magic = bytes;
    magic[0] = 'X';
    std::string version = bytes;
    version[4] = 9;
    try {
        read_checkpoint(variant("magic", magic));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.position == 0);
    }
    try {
        read_checkpoint(variant("version", version));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.position == 4);
    }
    CHECK_THROWS_AS(read_checkpoint(variant("short", bytes.substr(0, bytes.size() - 3))), FormatError);
    CHECK_THROWS_AS(read_checkpoint(variant("header", bytes.substr(0, 10))), FormatError);
    CHECK_THROWS_AS(read_checkpoint(variant("long", bytes + "x")), FormatError);
    CHECK_THROWS_AS(read_checkpoint(dir.path / "absent"), IoError);
}

TEST_CASE("checkpoint store keeps an index and reopens") {
    TempDir dir("store");
    const ModelSpec spec = ModelSpec::mlp({3, 2});
    CheckpointStore store(dir.path / "ck");
    store.save(0, 5, init_params(spec, 1));
    store.save(1, 9, init_params(spec, 2));
    CHECK(slurp(dir.path / "ck" / "index.csv") == "task,iter,file\n0,5,ckpt-000000005.gapl\n1,9,ckpt-000000009.gapl\n");
    const CheckpointStore again = CheckpointStore::open(dir.path / "ck");
    CHECK(again.iterations() == std::vector<std::uint64_t>{5, 9});
    CHECK(again.task_of(9) == 1);
    CHECK(again.load(9) == init_params(spec, 2));
    CHECK_THROWS_AS(again.load(6), MissingCheckpointError);

    CheckpointStore mem;
    mem.save(0, 1, init_params(spec, 3));
    CHECK_FALSE(mem.on_disk());
    CHECK(mem.load(1) == init_params(spec, 3));
}

TEST_CASE("global 1-based iterations, warm start, boundary markers") {
    Tiny t;
    ProbeHooks hooks(t.data.test);
    CheckpointStore store;
    const ExperimentRecord rec = run_sequence(t.spec, t.data.train, t.tasks, t.cfg, hooks, &store);
    REQUIRE(rec.task_traces.size() == 2);
    CHECK(rec.task_traces[0].size() == 30);
    CHECK(rec.task_traces[1].size() == 20);
    CHECK(rec.boundaries == std::vector<std::uint64_t>{30, 50});
    const TrainTrace g = rec.global_trace();
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i].iteration == i + 1);
    CHECK(g[29].task == 0);
    CHECK(g[30].task == 1);
    CHECK(rec.initial_params == init_params(t.spec, stream_rng(2, Stream::Init).next()));
    CHECK(rec.final_params == store.load(50));

    // Task B starting from task A's final parameters reproduces the second half.
    TaskRunState st{store.load(30), OptimizerState::zeros(t.spec.param_count()), 30};
    Rng shuffle = stream_rng(2, Stream::Shuffle);
    BatchIterator skip(t.tasks.pool(0), t.cfg.batch_size, 30, shuffle);
    while (skip.next()) {
    }
    TrainTrace second;
    ProbeHooks h2(t.data.test);
    train_task(t.spec, st, t.data.train, t.tasks.pool(1), 1, t.cfg, shuffle, h2, second);
    CHECK(second == rec.task_traces[1]);
    CHECK(st.params == rec.final_params);
}

TEST_CASE("eval and checkpoint cadence") {
    Tiny t;
    ProbeHooks hooks(t.data.test);
    CheckpointStore store;
    const ExperimentRecord rec = run_sequence(t.spec, t.data.train, t.tasks, t.cfg, hooks, &store);
    const TrainTrace g = rec.global_trace();
    CHECK(eval_iterations(g) == std::vector<std::uint64_t>{10, 20, 28, 29, 30, 31, 32, 33, 34, 35, 40, 48, 49, 50});
    CHECK(store.iterations() == std::vector<std::uint64_t>{10, 20, 30, 31, 32, 33, 34, 35, 40, 50});
    for (const auto& r : g) CHECK(r.checkpoint.has_value() == store.contains(r.iteration));
    CHECK(g[29].checkpoint == "ckpt-000000030.gapl");
}

TEST_CASE("probe fields are consistent with the batch") {
    Tiny t;
    ProbeHooks hooks(t.data.test);
    const ExperimentRecord rec = run_sequence(t.spec, t.data.train, t.tasks, t.cfg, hooks);
    for (const auto& r : rec.global_trace()) {
        CHECK(r.batch_acc_pre >= 0.0);
        CHECK(r.batch_acc_post <= 1.0);
        CHECK(r.batch_loss_pre > 0.0);
        CHECK(std::isfinite(r.batch_loss_post));
    }
}

TEST_CASE("runs are deterministic; seed and velocity reset matter") {
    Tiny t;
    auto run = [&](const TrainConfig& cfg) {
        ProbeHooks hooks(t.data.test);
        return run_sequence(t.spec, t.data.train, t.tasks, cfg, hooks);
    };
    const ExperimentRecord a = run(t.cfg), b = run(t.cfg);
    CHECK(a.global_trace() == b.global_trace());
    CHECK(a.final_params == b.final_params);

    TrainConfig other = t.cfg;
    other.seed = 3;
    CHECK_FALSE(run(other).final_params == a.final_params);

    TrainConfig carry = t.cfg;
    carry.reset_velocity = false;
    const ExperimentRecord c = run(carry);
    CHECK(c.task_traces[0] == a.task_traces[0]);
    CHECK_FALSE(c.final_params == a.final_params);
}

TEST_CASE("divergence names the iteration") {
    Tiny t;
    t.cfg.lr = 1e12;
    t.cfg.momentum = 0.0;
    ProbeHooks hooks(t.data.test);
    try {
        run_sequence(t.spec, t.data.train, t.tasks, t.cfg, hooks);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.iteration >= 1);
        CHECK(std::string(e.what()).find("at iteration " + std::to_string(e.iteration)) != std::string::npos);
        CHECK(std::string(e.what()).find("DivergenceError: DivergenceError") == std::string::npos);
    }
}

TEST_CASE("train config validation") {
    TrainConfig c;
    c.lr = 0;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = {};
    c.momentum = 1.0;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = {};
    c.epochs = {5, 2};
    CHECK(c.epochs_for(0) == 5);
    CHECK(c.epochs_for(4) == 2);
}

#include <doctest.h>

#include <sstream>

#include "gapl/error.hpp"
#include "gapl/instrumentation.hpp"
#include "gap_oracles.hpp"
#include "support.hpp"

using namespace gapl;
using namespace gapl::testing;

TEST_CASE("gap metrics match the hand-worked cases") {
    for (const auto& o : gap_oracles()) {
        CAPTURE(o.name);
        CHECK(compute_gap(o.trace, o.boundary, o.params) == o.expected);
    }
}

TEST_CASE("gap needs enough evals on both sides") {
    const TrainTrace t = synthetic_trace({0.5, 0.5}, {0.25});
    CHECK_THROWS_AS(compute_gap(t, 2, gap_params(3, 1)), InsufficientTraceError);
    CHECK_THROWS_AS(compute_gap(t, 3, gap_params(2, 1)), InsufficientTraceError);
    CHECK_THROWS_AS(compute_gap(t, 2, gap_params(0, 1)), ArgumentError);
    CHECK_THROWS_AS(compute_gap(t, 2, gap_params(1, 0)), ArgumentError);
}

TEST_CASE("gap properties on random traces") {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> pre(3 + rng.below(5)), post(1 + rng.below(30));
        for (auto& a : pre) a = static_cast<double>(rng.below(17)) / 16.0;
        for (auto& a : post) a = static_cast<double>(rng.below(17)) / 16.0;
        const GapParams p = gap_params(1 + rng.below(pre.size()), 1 + rng.below(4), rng.below(3) / 16.0,
                                       1 + rng.below(40));
        const TrainTrace t = synthetic_trace(pre, post);
        const std::uint64_t boundary = pre.size();
        const GapMetrics m = compute_gap(t, boundary, p);

        CHECK(m.gap_depth == m.pre_switch_acc - m.min_acc);
        const std::size_t visible = std::min<std::size_t>(post.size(), p.analysis_window);
        for (std::size_t i = 0; i < visible; ++i) CHECK(post[i] >= m.min_acc);
        CHECK(post[m.min_iteration - 1] == m.min_acc);
        CHECK(m.recovered == m.recovery_iteration.has_value());
        if (m.recovered) {
            const std::size_t r = *m.recovery_iteration;
            CHECK(r - 1 + p.recovery_window <= visible);
            for (std::size_t j = r - 1; j < r - 1 + p.recovery_window; ++j)
                CHECK(post[j] >= m.pre_switch_acc - p.tolerance);
        }

        // Shifting every iteration and the boundary changes nothing.
        TrainTrace shifted = t;
        for (auto& r : shifted) r.iteration += 1000;
        CHECK(compute_gap(shifted, boundary + 1000, p) == m);

        // Records without a test evaluation are ignored.
        TrainTrace padded;
        std::uint64_t it = 0;
        std::uint64_t padded_boundary = 0;
        for (const auto& r : t) {
            TraceRecord filler;
            filler.iteration = ++it;
            filler.task = r.task;
            padded.push_back(filler);
            TraceRecord e = r;
            e.iteration = ++it;
            padded.push_back(e);
            if (r.iteration == boundary) padded_boundary = it;
        }
        GapParams wide = p;
        wide.analysis_window = 2 * p.analysis_window;
        const GapMetrics pm = compute_gap(padded, padded_boundary, wide);
        CHECK(pm.gap_depth == m.gap_depth);
        CHECK(pm.recovered == m.recovered);
        CHECK(pm.min_iteration == 2 * m.min_iteration);
    }
}

TEST_CASE("boundary inference") {
    CHECK(infer_boundary(synthetic_trace({0.5, 0.5, 0.5}, {0.5})) == 3);
    TrainTrace three = synthetic_trace({0.5}, {0.5, 0.5});
    three.push_back(eval_record(4, 2, 0.5));
    CHECK(infer_boundary(three) == 3);
    CHECK_THROWS_AS(infer_boundary(synthetic_trace({0.5, 0.5}, {})), InsufficientTraceError);
}

TEST_CASE("trace csv round-trips") {
    TrainTrace t = synthetic_trace({0.125, 0.25}, {0.75});
    t[0].batch_loss_pre = 2.5;
    t[0].batch_acc_pre = 0.25;
    t[1].test_acc.reset();
    t[1].test_loss.reset();
    t[2].checkpoint = "ckpt-000000003.gapl";
    std::stringstream ss;
    write_trace_csv(ss, t);
    const std::string text = ss.str();
    CHECK(text.rfind("iter,task,batch_loss_pre,batch_acc_pre,batch_loss_post,batch_acc_post,test_loss,test_acc,ckpt\n",
                     0) == 0);
    CHECK(text.find("\n2,0,0,0,0,0,,,\n") != std::string::npos);
    CHECK(read_trace_csv(ss) == t);
}

TEST_CASE("trace csv errors carry the line number") {
    auto fails_at = [](const std::string& text, long long line) {
        std::istringstream in(text);
        try {
            read_trace_csv(in);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.position == line);
            CHECK(std::string(e.what()).find("line " + std::to_string(line)) != std::string::npos);
        }
    };
    const std::string head = "iter,task,batch_loss_pre,batch_acc_pre,batch_loss_post,batch_acc_post,test_loss,test_acc,ckpt\n";
    fails_at("", 1);
    fails_at("iter,task\n", 1);
    fails_at(head + "1,0,1,1,1,1,,,\n2,0,x,1,1,1,,,\n", 3);
    fails_at(head + "1,0,1,1,1,1,,\n", 2);
    fails_at(head + "1,0,1,1.5,1,1,,,\n", 2);
    fails_at(head + "2,0,1,1,1,1,,,\n2,0,1,1,1,1,,,\n", 3);
}

TEST_CASE("evaluation does not depend on the chunk size") {
    BlobsParams bp;
    bp.n_classes = 3;
    bp.n_per_class = 41;
    bp.dim = 5;
    const Dataset test = gen_blobs(bp).test;
    const ModelSpec spec = ModelSpec::mlp({5, 7, 3});
    const ParamVector p = init_params(spec, 5);
    const EvalResult whole = eval_test(spec, p, test, test.size());
    for (std::size_t chunk : {1, 2, 7, 256}) {
        const EvalResult e = eval_test(spec, p, test, chunk);
        CHECK(e.accuracy == whole.accuracy);
        CHECK(e.loss == doctest::Approx(whole.loss).epsilon(1e-12));
    }
    const Tensor logits = forward(spec, p, test.features);
    CHECK(whole.accuracy == accuracy(logits, test.labels));
    CHECK_THROWS_AS(eval_test(spec, p, test, 0), ArgumentError);
}

TEST_CASE("batch probe before and after an update") {
    const ModelSpec spec = ModelSpec::mlp({4, 3});
    Rng rng(1);
    const Tensor x = random_batch({4}, 6, rng);
    const auto y = random_labels(6, 3, rng);
    const ParamVector a = init_params(spec, 1), b = init_params(spec, 2);
    const ProbeResult r = batch_probe(spec, a, b, x, y);
    CHECK(r.loss_pre == doctest::Approx(mean_loss(spec, a, x, y)));
    CHECK(r.loss_post == doctest::Approx(mean_loss(spec, b, x, y)));
    CHECK(r.acc_pre == accuracy(forward(spec, a, x), y));
    CHECK(r.acc_post == accuracy(forward(spec, b, x), y));
}

TEST_CASE("gap summary formatting and medians") {
    GapMetrics m = gap_expect(0.75, 0.5, 3, std::nullopt);
    CHECK(format_gap(m, "x.") ==
          "x.pre_switch_acc=0.75\nx.min_acc=0.5\nx.gap_depth=0.25\nx.min_iteration=3\nx.recovery_iteration=none\n"
          "x.recovered=false\n");
    const GapMetrics runs[] = {gap_expect(0.75, 0.5, 1, 10), gap_expect(0.5, 0.25, 5, std::nullopt),
                               gap_expect(1.0, 0.5, 3, 20)};
    const GapMetrics med = median_gap(runs);
    CHECK(med.pre_switch_acc == 0.75);
    CHECK(med.min_acc == 0.5);
    CHECK(med.gap_depth == 0.25);
    CHECK(med.min_iteration == 3);
    CHECK(med.recovery_iteration == 15);
    CHECK_FALSE(med.recovered);
    CHECK_THROWS_AS(median_gap({}), ArgumentError);
    CHECK(fmt9(0.1) == "0.1");
    CHECK(fmt9(1.0 / 3.0) == "0.333333333");
}

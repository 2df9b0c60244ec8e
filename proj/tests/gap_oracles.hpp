#pragma once

// Hand-worked gap metric cases. Accuracies are binary fractions where a
// comparison against the threshold matters, so the expected values are exact.

#include <optional>
#include <string>
#include <vector>

#include "support.hpp"

namespace gapl::testing {

struct GapOracle {
    std::string name;
    TrainTrace trace;
    std::uint64_t boundary = 0;
    GapParams params;
    GapMetrics expected;
};

inline GapParams gap_params(std::size_t k, std::size_t w, double tol = 0.0, std::uint64_t window = 2000) {
    GapParams p;
    p.baseline_evals = k;
    p.recovery_window = w;
    p.tolerance = tol;
    p.analysis_window = window;
    return p;
}

inline GapMetrics gap_expect(double pre, double min, std::uint64_t min_it, std::optional<std::uint64_t> rec) {
    GapMetrics m;
    m.pre_switch_acc = pre;
    m.min_acc = min;
    m.gap_depth = pre - min;
    m.min_iteration = min_it;
    m.recovery_iteration = rec;
    m.recovered = rec.has_value();
    return m;
}

inline std::vector<GapOracle> gap_oracles() {
    std::vector<GapOracle> out;
    auto add = [&](std::string name, std::vector<double> pre, std::vector<double> post, GapParams p, GapMetrics m) {
        const std::uint64_t boundary = pre.size();
        out.push_back({std::move(name), synthetic_trace(pre, post), boundary, p, m});
    };

    add("worked example", {0.90, 0.90}, {0.70, 0.75, 0.88, 0.91, 0.92, 0.93}, gap_params(2, 2),
        gap_expect(0.90, 0.70, 1, 4));
    add("no drop", {0.5, 0.5}, {0.625, 0.75, 0.875}, gap_params(2, 2), gap_expect(0.5, 0.625, 1, 1));
    add("never recovers", {0.75, 0.75}, {0.25, 0.5, 0.625, 1.0}, gap_params(2, 2),
        gap_expect(0.75, 0.25, 1, std::nullopt));
    add("tied minimum takes the first", {0.75, 0.75}, {0.5, 0.625, 0.5, 0.75, 0.75}, gap_params(2, 2),
        gap_expect(0.75, 0.5, 1, 4));
    add("baseline averages the last K", {0.25, 0.5, 0.75, 1.0}, {0.5, 0.75, 0.875}, gap_params(3, 2),
        gap_expect(0.75, 0.5, 1, 2));
    add("tolerance lowers the bar", {0.75, 0.75}, {0.5, 0.625, 0.625}, gap_params(2, 2, 0.125),
        gap_expect(0.75, 0.5, 1, 2));
    add("window hides the later minimum", {0.75, 0.75}, {0.5, 0.25, 0.75, 0.75, 0.75}, gap_params(2, 2, 0.0, 1),
        gap_expect(0.75, 0.5, 1, std::nullopt));
    add("window cuts the recovery run", {0.75, 0.75}, {0.5, 0.25, 0.75, 0.75, 0.75}, gap_params(2, 2, 0.0, 3),
        gap_expect(0.75, 0.25, 2, std::nullopt));
    add("window just fits the run", {0.75, 0.75}, {0.5, 0.25, 0.75, 0.75, 0.75}, gap_params(2, 2, 0.0, 4),
        gap_expect(0.75, 0.25, 2, 3));
    add("single eval recovery", {0.75, 0.75}, {0.5, 0.75, 0.5}, gap_params(2, 1), gap_expect(0.75, 0.5, 1, 2));
    add("recovery may precede the minimum", {0.75, 0.75}, {0.75, 0.75, 0.25, 0.5}, gap_params(2, 2),
        gap_expect(0.75, 0.25, 3, 1));
    add("interrupted run restarts", {0.75, 0.75}, {0.5, 0.75, 0.5, 0.75, 0.75}, gap_params(2, 2),
        gap_expect(0.75, 0.5, 1, 4));

    {
        // Sparse evals: offsets come from iterations, not eval indices.
        TrainTrace t;
        for (std::uint64_t it = 1; it <= 10; ++it) {
            TraceRecord r;
            r.iteration = it;
            if (it == 9 || it == 10) r = eval_record(it, 0, 0.75);
            t.push_back(r);
        }
        const std::pair<std::uint64_t, double> post[] = {{11, 0.5}, {15, 0.25}, {30, 0.75}, {31, 0.75}};
        for (std::uint64_t it = 11; it <= 31; ++it) {
            TraceRecord r;
            r.iteration = it;
            r.task = 1;
            for (auto [pi, acc] : post)
                if (pi == it) r = eval_record(it, 1, acc);
            t.push_back(r);
        }
        out.push_back({"sparse evals", t, 10, gap_params(2, 2), gap_expect(0.75, 0.25, 5, 20)});
    }
    return out;
}

}  // namespace gapl::testing

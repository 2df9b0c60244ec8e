#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gapl/data.hpp"
#include "gapl/model.hpp"

namespace gapl {

// One SGD iteration. Iterations are global and 1-based: record i describes
// the i-th update of the whole run.
struct TraceRecord {
    std::uint64_t iteration = 0;
    int task = 0;
    // Same mini-batch, before and after its own update.
    double batch_loss_pre = 0.0;
    double batch_acc_pre = 0.0;
    double batch_loss_post = 0.0;
    double batch_acc_post = 0.0;
    // Set on eval ticks only.
    std::optional<double> test_loss;
    std::optional<double> test_acc;
    // Checkpoint file name, set on checkpoint ticks.
    std::optional<std::string> checkpoint;

    bool operator==(const TraceRecord&) const = default;
};

using TrainTrace = std::vector<TraceRecord>;

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Exact mean loss/accuracy over the whole set, evaluated in chunks of
// eval_batch rows and combined by sample count.
EvalResult eval_test(const ModelSpec& spec, const ParamVector& params, const Dataset& test,
                     std::size_t eval_batch = 256);

struct ProbeResult {
    double acc_pre = 0.0, acc_post = 0.0;
    double loss_pre = 0.0, loss_post = 0.0;
};

// Pre-update numbers come from the logits/loss that backward already
// produced for this batch; only the post-update side runs a forward pass.
ProbeResult batch_probe(const ModelSpec& spec, const Tensor& logits_before, double loss_before,
                        const ParamVector& params_after, const Tensor& batch, std::span<const int> labels);
// Convenience form that recomputes the pre-update forward pass.
ProbeResult batch_probe(const ModelSpec& spec, const ParamVector& params_before, const ParamVector& params_after,
                        const Tensor& batch, std::span<const int> labels);

struct GapParams {
    std::size_t baseline_evals = 5;  // K
    std::size_t recovery_window = 5;  // W, consecutive evals
    double tolerance = 0.0;
    std::uint64_t analysis_window = 2000;  // iterations after the boundary
};

struct GapMetrics {
    double pre_switch_acc = 0.0;
    double min_acc = 0.0;
    double gap_depth = 0.0;
    std::uint64_t min_iteration = 0;  // offset from the boundary, >= 1
    std::optional<std::uint64_t> recovery_iteration;  // offset from the boundary
    bool recovered = false;

    bool operator==(const GapMetrics&) const = default;
};

// Uses only records carrying test_acc. The baseline is the mean of the last
// K evals at or before `boundary`; the minimum and the recovery search cover
// evals with offset in [1, analysis_window]. Recovery at eval t requires the
// W evals starting at t to exist inside the window and all reach
// baseline - tolerance.
GapMetrics compute_gap(const TrainTrace& trace, std::uint64_t boundary, const GapParams& params = {});

// First iteration of the last task change, i.e. the iteration count before
// the final task started. Throws InsufficientTraceError for single-task traces.
std::uint64_t infer_boundary(const TrainTrace& trace);

void write_trace_csv(std::ostream& out, const TrainTrace& trace);
void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace);
// Throws FormatError carrying the 1-based line number.
TrainTrace read_trace_csv(std::istream& in);
TrainTrace read_trace_csv(const std::filesystem::path& path);

// Flat "key=value" lines. Absent recovery prints as "none".
std::string format_gap(const GapMetrics& m, const std::string& prefix = "");
// Per-field median over runs; recovered is true only if every run recovered,
// recovery_iteration is the median over recovered runs.
GapMetrics median_gap(std::span<const GapMetrics> runs);

// Formats a double with 9 significant digits, as used by every CSV output.
std::string fmt9(double v);

}  // namespace gapl

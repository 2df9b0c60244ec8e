#include "gapl/instrumentation.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gapl/error.hpp"
#include "gapl/trainer.hpp"

namespace gapl {

std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

EvalResult eval_test(const ModelSpec& spec, const ParamVector& params, const Dataset& test, std::size_t eval_batch) {
    test.validate();
    if (eval_batch == 0) throw ArgumentError("eval_batch must be positive");
    if (test.sample_shape() != spec.input_shape())
        throw ShapeError("test samples " + shape_str(test.sample_shape()) + " do not match model input " +
                         shape_str(spec.input_shape()));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<std::uint32_t> idx;
    for (std::size_t start = 0; start < test.size(); start += eval_batch) {
        const std::size_t end = std::min(test.size(), start + eval_batch);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), static_cast<std::uint32_t>(start));
        const Tensor logits = forward(spec, params, test.gather(idx));
        const auto labels = std::span<const int>(test.labels).subspan(start, end - start);
        loss_sum += cross_entropy_sum(logits, labels);
        correct += count_correct(logits, labels);
    }
    const double n = static_cast<double>(test.size());
    return {loss_sum / n, static_cast<double>(correct) / n};
}

ProbeResult batch_probe(const ModelSpec& spec, const Tensor& logits_before, double loss_before,
                        const ParamVector& params_after, const Tensor& batch, std::span<const int> labels) {
    const Tensor after = forward(spec, params_after, batch);
    ProbeResult r;
    r.acc_pre = accuracy(logits_before, labels);
    r.loss_pre = loss_before;
    r.acc_post = accuracy(after, labels);
    r.loss_post = cross_entropy_sum(after, labels) / static_cast<double>(labels.size());
    return r;
}

ProbeResult batch_probe(const ModelSpec& spec, const ParamVector& params_before, const ParamVector& params_after,
                        const Tensor& batch, std::span<const int> labels) {
    const Tensor before = forward(spec, params_before, batch);
    const double loss_before = cross_entropy_sum(before, labels) / static_cast<double>(labels.size());
    return batch_probe(spec, before, loss_before, params_after, batch, labels);
}

void ProbeHooks::pre_update(TraceRecord& r, const BackwardResult& result, std::span<const int> labels) {
    r.batch_loss_pre = result.loss;
    r.batch_acc_pre = accuracy(result.logits, labels);
    logits_pre_ = result.logits;
    loss_pre_ = result.loss;
}

void ProbeHooks::post_update(TraceRecord& r, const ModelSpec& spec, const ParamVector& after, const Tensor& batch,
                             std::span<const int> labels) {
    const ProbeResult p = batch_probe(spec, logits_pre_, loss_pre_, after, batch, labels);
    r.batch_loss_post = p.loss_post;
    r.batch_acc_post = p.acc_post;
}

void ProbeHooks::eval_tick(TraceRecord& r, const ModelSpec& spec, const ParamVector& params) {
    const EvalResult e = eval_test(spec, params, test_, eval_batch_);
    r.test_loss = e.loss;
    r.test_acc = e.accuracy;
}

GapMetrics compute_gap(const TrainTrace& trace, std::uint64_t boundary, const GapParams& params) {
    if (params.baseline_evals == 0) throw ArgumentError("K must be at least 1");
    if (params.recovery_window == 0) throw ArgumentError("W must be at least 1");
    std::vector<double> pre;
    std::vector<std::pair<std::uint64_t, double>> post;  // (offset, acc)
    for (const auto& r : trace) {
        if (!r.test_acc) continue;
        if (r.iteration <= boundary) {
            pre.push_back(*r.test_acc);
        } else if (r.iteration - boundary <= params.analysis_window) {
            post.emplace_back(r.iteration - boundary, *r.test_acc);
        }
    }
    if (pre.size() < params.baseline_evals)
        throw InsufficientTraceError("need " + std::to_string(params.baseline_evals) +
                                     " evals before the boundary at iteration " + std::to_string(boundary) +
                                     ", found " + std::to_string(pre.size()));
    if (post.empty())
        throw InsufficientTraceError("no evals after the boundary at iteration " + std::to_string(boundary));

    GapMetrics m;
    double sum = 0.0;
    for (std::size_t k = pre.size() - params.baseline_evals; k < pre.size(); ++k) sum += pre[k];
    m.pre_switch_acc = sum / static_cast<double>(params.baseline_evals);

    auto lowest = std::min_element(post.begin(), post.end(),
                                   [](const auto& a, const auto& b) { return a.second < b.second; });
    m.min_acc = lowest->second;
    m.min_iteration = lowest->first;
    m.gap_depth = m.pre_switch_acc - m.min_acc;

    const double threshold = m.pre_switch_acc - params.tolerance;
    for (std::size_t t = 0; t + params.recovery_window <= post.size(); ++t) {
        bool ok = true;
        for (std::size_t j = t; j < t + params.recovery_window && ok; ++j) ok = post[j].second >= threshold;
        if (ok) {
            m.recovery_iteration = post[t].first;
            m.recovered = true;
            break;
        }
    }
    return m;
}

std::uint64_t infer_boundary(const TrainTrace& trace) {
    for (std::size_t k = trace.size(); k-- > 1;)
        if (trace[k].task != trace[k - 1].task) return trace[k - 1].iteration;
    throw InsufficientTraceError("trace contains a single task; pass the boundary explicitly");
}

namespace {

constexpr const char* kTraceHeader =
    "iter,task,batch_loss_pre,batch_acc_pre,batch_loss_post,batch_acc_post,test_loss,test_acc,ckpt";

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

double parse_double(const std::string& s, std::size_t line, const char* field) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw FormatError("line " + std::to_string(line) + ": bad " + field + " '" + s + "'",
                          static_cast<long long>(line));
    return v;
}

template <typename Int>
Int parse_int(const std::string& s, std::size_t line, const char* field) {
    Int v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw FormatError("line " + std::to_string(line) + ": bad " + field + " '" + s + "'",
                          static_cast<long long>(line));
    return v;
}

}  // namespace

void write_trace_csv(std::ostream& out, const TrainTrace& trace) {
    out << kTraceHeader << '\n';
    for (const auto& r : trace) {
        out << r.iteration << ',' << r.task << ',' << fmt9(r.batch_loss_pre) << ',' << fmt9(r.batch_acc_pre) << ','
            << fmt9(r.batch_loss_post) << ',' << fmt9(r.batch_acc_post) << ','
            << (r.test_loss ? fmt9(*r.test_loss) : "") << ',' << (r.test_acc ? fmt9(*r.test_acc) : "") << ','
            << r.checkpoint.value_or("") << '\n';
    }
}

void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    write_trace_csv(out, trace);
    if (!out) throw IoError("write failed for " + path.string());
}

TrainTrace read_trace_csv(std::istream& in) {
    TrainTrace trace;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw FormatError("line 1: empty trace file", 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kTraceHeader) throw FormatError("line 1: unexpected trace header", 1);
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 9)
            throw FormatError("line " + std::to_string(line_no) + ": expected 9 fields, found " +
                                  std::to_string(f.size()),
                              static_cast<long long>(line_no));
        TraceRecord r;
        r.iteration = parse_int<std::uint64_t>(f[0], line_no, "iter");
        r.task = parse_int<int>(f[1], line_no, "task");
        r.batch_loss_pre = parse_double(f[2], line_no, "batch_loss_pre");
        r.batch_acc_pre = parse_double(f[3], line_no, "batch_acc_pre");
        r.batch_loss_post = parse_double(f[4], line_no, "batch_loss_post");
        r.batch_acc_post = parse_double(f[5], line_no, "batch_acc_post");
        if (!f[6].empty()) r.test_loss = parse_double(f[6], line_no, "test_loss");
        if (!f[7].empty()) r.test_acc = parse_double(f[7], line_no, "test_acc");
        if (!f[8].empty()) r.checkpoint = f[8];
        if (r.batch_acc_pre < 0.0 || r.batch_acc_pre > 1.0 || r.batch_acc_post < 0.0 || r.batch_acc_post > 1.0)
            throw FormatError("line " + std::to_string(line_no) + ": batch accuracy outside [0,1]",
                              static_cast<long long>(line_no));
        if (!trace.empty() && r.iteration <= trace.back().iteration)
            throw FormatError("line " + std::to_string(line_no) + ": iteration not increasing",
                              static_cast<long long>(line_no));
        trace.push_back(std::move(r));
    }
    return trace;
}

TrainTrace read_trace_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return read_trace_csv(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.message(), e.position);
    }
}

std::string format_gap(const GapMetrics& m, const std::string& prefix) {
    std::ostringstream out;
    out << prefix << "pre_switch_acc=" << fmt9(m.pre_switch_acc) << '\n'
        << prefix << "min_acc=" << fmt9(m.min_acc) << '\n'
        << prefix << "gap_depth=" << fmt9(m.gap_depth) << '\n'
        << prefix << "min_iteration=" << m.min_iteration << '\n'
        << prefix << "recovery_iteration="
        << (m.recovery_iteration ? std::to_string(*m.recovery_iteration) : std::string("none")) << '\n'
        << prefix << "recovered=" << (m.recovered ? "true" : "false") << '\n';
    return out.str();
}

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

GapMetrics median_gap(std::span<const GapMetrics> runs) {
    if (runs.empty()) throw ArgumentError("median of zero runs");
    std::vector<double> pre, mn, depth, min_it, rec;
    bool all = true;
    for (const auto& r : runs) {
        pre.push_back(r.pre_switch_acc);
        mn.push_back(r.min_acc);
        depth.push_back(r.gap_depth);
        min_it.push_back(static_cast<double>(r.min_iteration));
        if (r.recovery_iteration) rec.push_back(static_cast<double>(*r.recovery_iteration));
        all = all && r.recovered;
    }
    GapMetrics m;
    m.pre_switch_acc = median_of(pre);
    m.min_acc = median_of(mn);
    m.gap_depth = median_of(depth);
    m.min_iteration = static_cast<std::uint64_t>(median_of(min_it));
    if (!rec.empty()) m.recovery_iteration = static_cast<std::uint64_t>(median_of(rec));
    m.recovered = all;
    return m;
}

}  // namespace gapl

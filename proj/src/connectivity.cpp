#include "gapl/connectivity.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include "gapl/error.hpp"
#include "gapl/instrumentation.hpp"

namespace gapl {

ParamVector interpolate(const ParamVector& theta1, const ParamVector& theta2, double lambda) {
    require_combinable(theta1, theta2);
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ArgumentError("lambda must lie in [0,1]");
    const double w1 = 1.0 - lambda;
    const double w2 = 1.0 - w1;
    ParamVector out(std::vector<double>(theta1.size()), theta1.spec_digest);
    for (std::size_t k = 0; k < out.size(); ++k) out.values[k] = w1 * theta1.values[k] + w2 * theta2.values[k];
    return out;
}

std::vector<double> lambda_grid(double step) {
    if (!(step > 0.0 && step <= 0.5)) throw ArgumentError("lambda step must lie in (0, 0.5]");
    std::vector<double> grid;
    const double inv = 1.0 / step;
    const double n = std::round(inv);
    if (std::abs(inv - n) < 1e-9) {
        const auto count = static_cast<std::size_t>(n);
        for (std::size_t i = 0; i <= count; ++i) grid.push_back(static_cast<double>(i) / n);
        return grid;
    }
    for (std::size_t i = 0;; ++i) {
        const double l = static_cast<double>(i) * step;
        if (l >= 1.0 - 1e-12) break;
        grid.push_back(l);
    }
    grid.push_back(1.0);
    return grid;
}

LmcCurve lmc_curve(const ModelSpec& spec, const ParamVector& theta1, const ParamVector& theta2, double step,
                   const Dataset& evalset, unsigned threads, std::size_t eval_batch) {
    require_combinable(theta1, theta2);
    require_bound(spec, theta1);
    LmcCurve curve;
    curve.lambdas = lambda_grid(step);
    const std::size_t n = curve.lambdas.size();
    curve.losses.assign(n, 0.0);
    curve.accuracies.assign(n, 0.0);

    auto eval_point = [&](std::size_t i) {
        const EvalResult r = eval_test(spec, interpolate(theta1, theta2, curve.lambdas[i]), evalset, eval_batch);
        curve.losses[i] = r.loss;
        curve.accuracies[i] = r.accuracy;
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) eval_point(i);
        return curve;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                    try {
                        eval_point(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
    }
    if (failure) std::rethrow_exception(failure);
    return curve;
}

double barrier(const LmcCurve& curve) {
    if (curve.size() < 3 || curve.losses.size() != curve.size())
        throw ArgumentError("barrier needs a curve with at least one interior point");
    const double ends = std::max(curve.losses.front(), curve.losses.back());
    const double interior = *std::max_element(curve.losses.begin() + 1, curve.losses.end() - 1);
    return interior - ends;
}

PathCurve sgd_path_loss(const ModelSpec& spec, const CheckpointStore& store, std::span<const std::uint64_t> iterations,
                        const Dataset& evalset, std::size_t eval_batch) {
    if (iterations.empty()) throw ArgumentError("no trajectory iterations requested");
    std::vector<std::uint64_t> sorted(iterations.begin(), iterations.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::string missing;
    for (auto it : sorted)
        if (!store.contains(it)) missing += (missing.empty() ? "" : ",") + std::to_string(it);
    if (!missing.empty()) throw MissingCheckpointError("missing checkpoints for iterations " + missing);

    PathCurve curve;
    for (auto it : sorted) {
        const ParamVector p = store.load(it);
        const EvalResult r = eval_test(spec, p, evalset, eval_batch);
        curve.iterations.push_back(it);
        curve.losses.push_back(r.loss);
        curve.accuracies.push_back(r.accuracy);
    }
    return curve;
}

PathCurve sgd_path_loss(const ModelSpec& spec, const CheckpointStore& store, std::uint64_t first,
                        std::uint64_t last, const Dataset& evalset, std::size_t eval_batch) {
    if (first > last) throw ArgumentError("trajectory range is empty");
    std::string missing;
    if (!store.contains(first)) missing = std::to_string(first);
    if (last != first && !store.contains(last)) missing += (missing.empty() ? "" : ",") + std::to_string(last);
    if (!missing.empty()) throw MissingCheckpointError("missing checkpoints for iterations " + missing);
    std::vector<std::uint64_t> its;
    for (auto it : store.iterations())
        if (it >= first && it <= last) its.push_back(it);
    return sgd_path_loss(spec, store, its, evalset, eval_batch);
}

namespace {

std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path, const std::string& header) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line) || line != header)
        throw FormatError(path.string() + ": line 1: expected header '" + header + "'", 1);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            const std::string field = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
            if (field.empty() || ec != std::errc() || ptr != field.data() + field.size())
                throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": bad number '" + field + "'",
                                  static_cast<long long>(line_no));
            row.push_back(v);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (row.size() != 3)
            throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": expected 3 fields",
                              static_cast<long long>(line_no));
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_rows(const std::filesystem::path& path, const std::string& header, std::size_t n,
                const std::function<std::string(std::size_t)>& first, const std::vector<double>& a,
                const std::vector<double>& b) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << header << '\n';
    for (std::size_t i = 0; i < n; ++i) out << first(i) << ',' << fmt9(a[i]) << ',' << fmt9(b[i]) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

void write_lmc_csv(const std::filesystem::path& path, const LmcCurve& c) {
    write_rows(path, "lambda,loss,accuracy", c.size(), [&](std::size_t i) { return fmt9(c.lambdas[i]); }, c.losses,
               c.accuracies);
}

LmcCurve read_lmc_csv(const std::filesystem::path& path) {
    LmcCurve c;
    for (const auto& r : read_numeric_csv(path, "lambda,loss,accuracy")) {
        c.lambdas.push_back(r[0]);
        c.losses.push_back(r[1]);
        c.accuracies.push_back(r[2]);
    }
    return c;
}

void write_path_csv(const std::filesystem::path& path, const PathCurve& c) {
    write_rows(path, "iter,loss,accuracy", c.size(), [&](std::size_t i) { return std::to_string(c.iterations[i]); },
               c.losses, c.accuracies);
}

PathCurve read_path_csv(const std::filesystem::path& path) {
    PathCurve c;
    for (const auto& r : read_numeric_csv(path, "iter,loss,accuracy")) {
        c.iterations.push_back(static_cast<std::uint64_t>(r[0]));
        c.losses.push_back(r[1]);
        c.accuracies.push_back(r[2]);
    }
    return c;
}

}  // namespace gapl

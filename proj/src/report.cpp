#include "gapl/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "gapl/error.hpp"

namespace gapl {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", std::abs(v) < 1e-12 ? 0.0 : v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

double nice_step(double span) {
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0})
        if (raw <= m * mag) return m * mag;
    return 10.0 * mag;
}

void widen(double& lo, double& hi) {
    if (!(hi > lo)) {
        const double pad = std::abs(lo) > 0 ? std::abs(lo) * 0.1 : 1.0;
        lo -= pad;
        hi += pad;
    }
}

}  // namespace

void SvgPlot::add_series(std::string name, std::vector<double> xs, std::vector<double> ys, std::string color,
                         bool dashed, double width) {
    if (xs.size() != ys.size()) throw ArgumentError("series '" + name + "' has mismatched x/y lengths");
    series_.push_back({std::move(name), std::move(xs), std::move(ys), std::move(color), dashed, width});
}

void SvgPlot::add_vline(double x, std::string label) { vlines_.push_back({x, std::move(label)}); }

void SvgPlot::set_y_range(double lo, double hi) {
    fixed_y_ = true;
    y_lo_ = lo;
    y_hi_ = hi;
}

std::string SvgPlot::render(int width, int height) const {
    double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
    for (const auto& s : series_)
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
            x_lo = std::min(x_lo, s.xs[i]);
            x_hi = std::max(x_hi, s.xs[i]);
            y_lo = std::min(y_lo, s.ys[i]);
            y_hi = std::max(y_hi, s.ys[i]);
        }
    for (const auto& v : vlines_) {
        x_lo = std::min(x_lo, v.x);
        x_hi = std::max(x_hi, v.x);
    }
    if (!std::isfinite(x_lo)) x_lo = 0, x_hi = 1;
    if (!std::isfinite(y_lo)) y_lo = 0, y_hi = 1;
    if (fixed_y_) y_lo = y_lo_, y_hi = y_hi_;
    widen(x_lo, x_hi);
    widen(y_lo, y_hi);
    if (!fixed_y_) {
        const double pad = 0.05 * (y_hi - y_lo);
        y_lo -= pad;
        y_hi += pad;
    }

    const double left = 64, right = 20, top = 36, bottom = 48;
    const double pw = width - left - right, ph = height - top - bottom;
    auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * pw; };
    auto py = [&](double y) { return top + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph; };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
           std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) + " " + std::to_string(height) +
           "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + num(width / 2.0) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title_) +
           "</text>\n";

    // grid and ticks
    const double xs = nice_step(x_hi - x_lo), ys = nice_step(y_hi - y_lo);
    for (double t = std::ceil(x_lo / xs) * xs; t <= x_hi + 1e-9 * xs; t += xs) {
        out += "<line x1=\"" + num(px(t)) + "\" y1=\"" + num(top) + "\" x2=\"" + num(px(t)) + "\" y2=\"" +
               num(top + ph) + "\" stroke=\"#e6e6e6\"/>\n";
        out += "<text x=\"" + num(px(t)) + "\" y=\"" + num(top + ph + 15) + "\" text-anchor=\"middle\">" +
               tick_label(t) + "</text>\n";
    }
    for (double t = std::ceil(y_lo / ys) * ys; t <= y_hi + 1e-9 * ys; t += ys) {
        out += "<line x1=\"" + num(left) + "\" y1=\"" + num(py(t)) + "\" x2=\"" + num(left + pw) + "\" y2=\"" +
               num(py(t)) + "\" stroke=\"#e6e6e6\"/>\n";
        out += "<text x=\"" + num(left - 6) + "\" y=\"" + num(py(t) + 4) + "\" text-anchor=\"end\">" +
               tick_label(t) + "</text>\n";
    }
    out += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
           "\" fill=\"none\" stroke=\"#333\"/>\n";
    out += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(height - 10.0) + "\" text-anchor=\"middle\">" +
           escape(x_label_) + "</text>\n";
    out += "<text x=\"16\" y=\"" + num(top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
           num(top + ph / 2) + ")\">" + escape(y_label_) + "</text>\n";

    for (const auto& v : vlines_) {
        out += "<line x1=\"" + num(px(v.x)) + "\" y1=\"" + num(top) + "\" x2=\"" + num(px(v.x)) + "\" y2=\"" +
               num(top + ph) + "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
        out += "<text x=\"" + num(px(v.x) + 3) + "\" y=\"" + num(top + 12) + "\" fill=\"#666\">" + escape(v.label) +
               "</text>\n";
    }

    out += "<g clip-path=\"url(#plot)\">\n";
    for (const auto& s : series_) {
        std::string pts;
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
            if (!pts.empty()) pts += ' ';
            pts += num(px(s.xs[i])) + "," + num(py(s.ys[i]));
        }
        out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"" + num(s.width) + "\"" +
               (s.dashed ? " stroke-dasharray=\"6 4\"" : "") + " points=\"" + pts + "\"/>\n";
    }
    out += "</g>\n";
    out += "<defs><clipPath id=\"plot\"><rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) +
           "\" height=\"" + num(ph) + "\"/></clipPath></defs>\n";

    // legend, right edge inside the frame
    const double box_h = 15.0 * static_cast<double>(series_.size()) + 6;
    const double box_y = legend_bottom_ ? top + ph - box_h - 4 : top + 4;
    if (!series_.empty()) {
        out += "<rect x=\"" + num(left + pw - 178) + "\" y=\"" + num(box_y) + "\" width=\"174\" height=\"" +
               num(box_h) + "\" fill=\"white\" fill-opacity=\"0.85\" stroke=\"#ccc\"/>\n";
    }
    double ly = box_y + 15;
    for (const auto& s : series_) {
        const double lx = left + pw - 170;
        out += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" + num(lx + 22) + "\" y2=\"" +
               num(ly - 4) + "\" stroke=\"" + s.color + "\" stroke-width=\"2\"" +
               (s.dashed ? " stroke-dasharray=\"6 4\"" : "") + "/>\n";
        out += "<text x=\"" + num(lx + 28) + "\" y=\"" + num(ly) + "\">" + escape(s.name) + "</text>\n";
        ly += 15;
    }
    out += "</svg>\n";
    return out;
}

namespace {

std::vector<std::uint64_t> boundaries_of(const TrainTrace& trace) {
    std::vector<std::uint64_t> b;
    for (std::size_t k = 1; k < trace.size(); ++k)
        if (trace[k].task != trace[k - 1].task) b.push_back(trace[k - 1].iteration);
    return b;
}

void require_trace(const TrainTrace& trace) {
    if (trace.empty()) throw InsufficientTraceError("trace has no records");
}

}  // namespace

std::string accuracy_figure(const TrainTrace& trace) {
    require_trace(trace);
    std::vector<double> x, y;
    for (const auto& r : trace)
        if (r.test_acc) {
            x.push_back(static_cast<double>(r.iteration));
            y.push_back(*r.test_acc);
        }
    if (x.empty()) throw InsufficientTraceError("trace has no test evaluations");
    SvgPlot plot("Test accuracy", "iteration", "accuracy");
    plot.add_series("test accuracy", x, y, "#1f77b4");
    for (auto b : boundaries_of(trace)) plot.add_vline(static_cast<double>(b), "task switch");
    plot.set_y_range(0.0, 1.0);
    plot.set_legend_bottom();
    return plot.render();
}

std::string probe_figure(const TrainTrace& trace) {
    require_trace(trace);
    const auto bounds = boundaries_of(trace);
    std::uint64_t lo = trace.front().iteration, hi = trace.back().iteration;
    if (!bounds.empty()) {
        lo = std::max<std::uint64_t>(lo, bounds.back() > 100 ? bounds.back() - 100 : 0);
        hi = std::min<std::uint64_t>(hi, bounds.back() + 400);
    }
    std::vector<double> x, pre, post, tx, ty;
    for (const auto& r : trace) {
        if (r.iteration < lo || r.iteration > hi) continue;
        x.push_back(static_cast<double>(r.iteration));
        pre.push_back(r.batch_acc_pre);
        post.push_back(r.batch_acc_post);
        if (r.test_acc) {
            tx.push_back(static_cast<double>(r.iteration));
            ty.push_back(*r.test_acc);
        }
    }
    SvgPlot plot("Batch accuracy before and after each update", "iteration", "accuracy");
    plot.add_series("batch, before update", x, pre, "#d62728", false, 1.0);
    plot.add_series("batch, after update", x, post, "#2ca02c", false, 1.0);
    plot.add_series("test", tx, ty, "#1f77b4", false, 2.0);
    if (!bounds.empty()) plot.add_vline(static_cast<double>(bounds.back()), "task switch");
    plot.set_y_range(0.0, 1.0);
    plot.set_legend_bottom();
    return plot.render();
}

std::string lmc_figure(const LmcCurve& lmc, const PathCurve* path) {
    if (lmc.size() == 0) throw InsufficientTraceError("empty interpolation curve");
    SvgPlot plot("Loss between the warm start and the final model", "position along path", "test loss");
    plot.add_series("linear interpolation", lmc.lambdas, lmc.losses, "#1f77b4", false, 2.0);
    if (path && path->size() > 0) {
        const double first = static_cast<double>(path->iterations.front());
        const double span = std::max(1.0, static_cast<double>(path->iterations.back()) - first);
        std::vector<double> x;
        for (auto it : path->iterations) x.push_back((static_cast<double>(it) - first) / span);
        plot.add_series("SGD trajectory", x, path->losses, "#ff7f0e", true, 1.5);
    }
    return plot.render();
}

namespace {

fs::path write_svg(const fs::path& path, const std::string& svg) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << svg;
    if (!out) throw IoError("write failed for " + path.string());
    return path;
}

struct SeedFigures {
    fs::path out;
    std::string accuracy, probe;
    std::optional<std::string> lmc;
};

SeedFigures render_seed(const fs::path& seed_dir, const fs::path& out) {
    const TrainTrace trace = read_trace_csv(seed_dir / "trace.csv");
    SeedFigures f{out, accuracy_figure(trace), probe_figure(trace), std::nullopt};
    if (fs::exists(seed_dir / "lmc.csv")) {
        const LmcCurve lmc = read_lmc_csv(seed_dir / "lmc.csv");
        std::optional<PathCurve> path;
        if (fs::exists(seed_dir / "path.csv")) path = read_path_csv(seed_dir / "path.csv");
        f.lmc = lmc_figure(lmc, path ? &*path : nullptr);
    }
    return f;
}

}  // namespace

std::vector<fs::path> write_report(const fs::path& run_dir, const fs::path& out_dir) {
    std::vector<SeedFigures> figures;
    if (fs::exists(run_dir / "trace.csv")) {
        figures.push_back(render_seed(run_dir, out_dir.empty() ? run_dir : out_dir));
    } else {
        std::vector<fs::path> seeds;
        if (fs::is_directory(run_dir))
            for (const auto& e : fs::directory_iterator(run_dir))
                if (e.is_directory() && fs::exists(e.path() / "trace.csv")) seeds.push_back(e.path());
        if (seeds.empty()) throw IoError("no trace.csv in " + run_dir.string() + " or its seed directories");
        std::sort(seeds.begin(), seeds.end());
        for (const auto& s : seeds)
            figures.push_back(render_seed(s, out_dir.empty() ? s : out_dir / s.filename()));
    }
    // Everything is rendered before the first file is written.
    std::vector<fs::path> written;
    for (const auto& f : figures) {
        fs::create_directories(f.out);
        written.push_back(write_svg(f.out / "accuracy.svg", f.accuracy));
        written.push_back(write_svg(f.out / "probe.svg", f.probe));
        if (f.lmc) written.push_back(write_svg(f.out / "lmc.svg", *f.lmc));
    }
    return written;
}

}  // namespace gapl

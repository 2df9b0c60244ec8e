#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gapl/connectivity.hpp"
#include "gapl/instrumentation.hpp"

namespace gapl {

// Minimal line-plot renderer. Output depends only on the added data, so equal
// inputs give byte-identical documents.
class SvgPlot {
public:
    SvgPlot(std::string title, std::string x_label, std::string y_label)
        : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

    void add_series(std::string name, std::vector<double> xs, std::vector<double> ys, std::string color,
                    bool dashed = false, double width = 1.5);
    void add_vline(double x, std::string label);
    // Fixes the y range instead of fitting it to the data.
    void set_y_range(double lo, double hi);
    void set_legend_bottom() { legend_bottom_ = true; }

    std::string render(int width = 720, int height = 420) const;

private:
    struct Series {
        std::string name;
        std::vector<double> xs, ys;
        std::string color;
        bool dashed;
        double width;
    };
    struct VLine {
        double x;
        std::string label;
    };
    std::string title_, x_label_, y_label_;
    std::vector<Series> series_;
    std::vector<VLine> vlines_;
    bool fixed_y_ = false;
    bool legend_bottom_ = false;
    double y_lo_ = 0.0, y_hi_ = 1.0;
};

// Test accuracy over all iterations, with a marker at every task boundary.
std::string accuracy_figure(const TrainTrace& trace);
// Batch accuracy before and after each update next to test accuracy, around
// the last boundary.
std::string probe_figure(const TrainTrace& trace);
// Loss along the linear path and, when given, along the SGD trajectory with
// iterations rescaled to [0, 1].
std::string lmc_figure(const LmcCurve& lmc, const PathCurve* path);

// Writes accuracy.svg, probe.svg and, when lmc.csv exists, lmc.svg for a seed
// directory; a run directory is processed seed by seed. Returns written paths.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& run_dir,
                                                const std::filesystem::path& out_dir = {});

}  // namespace gapl

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gapl/data.hpp"
#include "gapl/model.hpp"
#include "gapl/trainer.hpp"

namespace gapl {

// Loss/accuracy along the straight line theta(lambda) between two checkpoints.
struct LmcCurve {
    std::vector<double> lambdas;  // ascending, starts at 0, ends at 1
    std::vector<double> losses;
    std::vector<double> accuracies;

    std::size_t size() const { return lambdas.size(); }
};

// Test loss/accuracy at stored SGD trajectory checkpoints.
struct PathCurve {
    std::vector<std::uint64_t> iterations;  // strictly increasing
    std::vector<double> losses;
    std::vector<double> accuracies;

    std::size_t size() const { return iterations.size(); }
};

// (1 - lambda) theta1 + lambda theta2. The weights are w1 = 1 - lambda and
// w2 = 1 - w1, both exact, so interpolate(a, b, l) and interpolate(b, a, 1 - l)
// agree bit for bit and the endpoints are reproduced exactly.
ParamVector interpolate(const ParamVector& theta1, const ParamVector& theta2, double lambda);

// Grid {0, step, 2 step, ..., 1}; 1 is always the last point. When 1/step is
// an integer n the points are i/n.
std::vector<double> lambda_grid(double step);

// Points are evaluated independently, so `threads` > 1 gives identical output.
LmcCurve lmc_curve(const ModelSpec& spec, const ParamVector& theta1, const ParamVector& theta2, double step,
                   const Dataset& evalset, unsigned threads = 1, std::size_t eval_batch = 256);

// max over interior lambdas of loss - max(loss at 0, loss at 1). Negative when
// the interior stays below both endpoints.
double barrier(const LmcCurve& curve);

// Evaluates exactly the listed iterations; MissingCheckpointError names every
// one the store lacks.
PathCurve sgd_path_loss(const ModelSpec& spec, const CheckpointStore& store, std::span<const std::uint64_t> iterations,
                        const Dataset& evalset, std::size_t eval_batch = 256);
// Every stored checkpoint with first <= iteration <= last; both ends must be stored.
PathCurve sgd_path_loss(const ModelSpec& spec, const CheckpointStore& store, std::uint64_t first,
                        std::uint64_t last, const Dataset& evalset, std::size_t eval_batch = 256);

void write_lmc_csv(const std::filesystem::path& path, const LmcCurve& curve);
LmcCurve read_lmc_csv(const std::filesystem::path& path);
void write_path_csv(const std::filesystem::path& path, const PathCurve& curve);
PathCurve read_path_csv(const std::filesystem::path& path);

}  // namespace gapl

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gapl/connectivity.hpp"
#include "gapl/data.hpp"
#include "gapl/instrumentation.hpp"
#include "gapl/model.hpp"
#include "gapl/trainer.hpp"

namespace gapl {

inline constexpr const char* kVersion = "0.1.0";

struct DatasetConfig {
    std::string kind = "blobs";  // blobs | raw
    BlobsParams blobs;
    // raw
    std::filesystem::path train_features, train_labels, test_features, test_labels;
    Shape sample_shape;
    std::size_t n_classes = 0;
    std::size_t train_count = 0, test_count = 0;
};

struct ModelConfig {
    std::string name = "mlp";  // mlp | smallcnn
    std::vector<std::size_t> hidden = {128, 64};
    std::vector<std::size_t> channels = {8, 16};  // smallcnn only
};

struct SplitConfig {
    std::vector<double> fractions = {50, 50};
    bool joint = true;
    bool stratified = true;
};

struct AnalysisConfig {
    GapParams gap;
    double lmc_step = 0.01;
    std::size_t eval_batch = 256;
};

// Full experiment description. Parsing rejects unknown keys and invalid
// values before anything is computed; missing keys take the defaults below.
struct ExperimentConfig {
    DatasetConfig dataset;
    ModelConfig model;
    SplitConfig split;
    TrainConfig train;
    AnalysisConfig analysis;
    std::filesystem::path output = "run";
    std::vector<std::uint64_t> seeds = {1};
    unsigned threads = 1;

    // Relative raw-data paths resolve against base_dir.
    static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static ExperimentConfig from_file(const std::filesystem::path& path);
    // Every field, defaults included. Paths are written as given after resolution.
    nlohmann::json to_json() const;
    // Sorted keys, no whitespace.
    std::string canonical() const { return to_json().dump(); }
    // SHA-256 hex of canonical().
    std::string hash() const;
};

std::string sha256_hex(const std::string& text);

TrainTest load_datasets(const DatasetConfig& cfg);
ModelSpec build_model(const ModelConfig& cfg, const Shape& sample_shape, std::size_t n_classes);

nlohmann::json model_to_json(const ModelSpec& spec);
ModelSpec model_from_json(const nlohmann::json& j);
ModelSpec load_model_file(const std::filesystem::path& path);

struct SeedRun {
    std::uint64_t seed = 0;
    std::filesystem::path dir;  // empty when nothing was written
    ExperimentRecord record;
    TrainTrace trace;  // global
    std::optional<GapMetrics> gap;
    std::optional<LmcCurve> lmc;
    std::optional<PathCurve> path;
    // Last boundary; theta1 is the checkpoint stored there.
    std::uint64_t boundary = 0;
};

struct RunOptions {
    // Write traces/checkpoints/analysis under config.output. When false,
    // everything stays in memory.
    bool persist = true;
    // Skip LMC/path analysis.
    bool analyze = true;
};

struct RunSummary {
    std::filesystem::path dir;
    std::vector<SeedRun> runs;
    std::optional<GapMetrics> median;
};

// Trains every seed of the configuration. Seed runs are independent and may
// run on config.threads worker threads; each one is sequential internally.
RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// One warm-started sequence for one seed on already-loaded data.
SeedRun run_seed(const ExperimentConfig& config, const ModelSpec& spec, const TrainTest& data, std::uint64_t seed,
                 const std::filesystem::path& dir, bool analyze);

}  // namespace gapl

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gapl/data.hpp"
#include "gapl/instrumentation.hpp"
#include "gapl/model.hpp"

namespace gapl {

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 64;
    // Epochs per task; the last entry repeats for later tasks.
    std::vector<std::size_t> epochs = {100};

    // Evaluation cadence, in iterations within a task. Every iteration of the
    // first `dense_window` iterations of each non-first task and of the last
    // `eval_tail` iterations of every task is evaluated at `eval_every_dense`;
    // elsewhere every `eval_every`.
    std::size_t eval_every = 10;
    std::size_t eval_every_dense = 1;
    std::size_t eval_tail = 20;
    std::size_t dense_window = 400;
    // Checkpoint cadence, same dense window. The last iteration of every task
    // is always checkpointed.
    std::size_t checkpoint_every = 50;
    std::size_t checkpoint_every_dense = 1;

    bool reset_velocity = true;
    std::uint64_t seed = 0;

    // Throws ArgumentError.
    void validate() const;
    std::size_t epochs_for(std::size_t task) const;
};

struct OptimizerState {
    std::vector<double> velocity;

    static OptimizerState zeros(std::size_t n) { return {std::vector<double>(n, 0.0)}; }
};

// v <- momentum v + g;  theta <- theta - lr v. Updates in place.
void sgd_step(ParamVector& params, const ParamVector& grads, OptimizerState& state, double lr, double momentum);

// Binary checkpoint: "GAPL", u16 version, 32-byte spec digest, u64 count,
// then count little-endian f64 values.
inline constexpr std::uint16_t kCheckpointVersion = 1;
void write_checkpoint(const std::filesystem::path& path, const ParamVector& params);
ParamVector read_checkpoint(const std::filesystem::path& path);
std::string checkpoint_name(std::uint64_t iteration);

// Trajectory checkpoints keyed by global iteration. With a directory the
// vectors live on disk next to an index.csv (task,iter,file); without one they
// are kept in memory.
class CheckpointStore {
public:
    CheckpointStore() = default;
    explicit CheckpointStore(std::filesystem::path directory);
    // Reopens a directory written earlier, reading its index.
    static CheckpointStore open(const std::filesystem::path& directory);

    std::string save(int task, std::uint64_t iteration, const ParamVector& params);
    ParamVector load(std::uint64_t iteration) const;
    bool contains(std::uint64_t iteration) const { return entries_.count(iteration) != 0; }
    std::vector<std::uint64_t> iterations() const;
    std::optional<int> task_of(std::uint64_t iteration) const;
    const std::filesystem::path& directory() const { return dir_; }
    bool on_disk() const { return !dir_.empty(); }

private:
    struct Entry {
        int task = 0;
        std::string file;
        std::optional<ParamVector> in_memory;
    };
    void write_index() const;

    std::filesystem::path dir_;
    std::map<std::uint64_t, Entry> entries_;
};

// Measurement callbacks invoked by the training loop for every iteration.
class TrainHooks {
public:
    virtual ~TrainHooks() = default;
    // After backward, before the update; `result.logits` are the batch logits.
    virtual void pre_update(TraceRecord&, const BackwardResult&, std::span<const int> /*labels*/) {}
    virtual void post_update(TraceRecord&, const ModelSpec&, const ParamVector& /*after*/, const Tensor& /*batch*/,
                             std::span<const int> /*labels*/) {}
    virtual void eval_tick(TraceRecord&, const ModelSpec&, const ParamVector&) {}
    virtual void checkpoint_tick(TraceRecord&, const ParamVector&) {}
};

// Standard instrumentation: batch probe before/after each update and a full
// test-set evaluation on eval ticks.
class ProbeHooks : public TrainHooks {
public:
    ProbeHooks(const Dataset& test, std::size_t eval_batch = 256) : test_(test), eval_batch_(eval_batch) {}
    void pre_update(TraceRecord& r, const BackwardResult& result, std::span<const int> labels) override;
    void post_update(TraceRecord& r, const ModelSpec& spec, const ParamVector& after, const Tensor& batch,
                     std::span<const int> labels) override;
    void eval_tick(TraceRecord& r, const ModelSpec& spec, const ParamVector& params) override;

private:
    const Dataset& test_;
    std::size_t eval_batch_;
    Tensor logits_pre_;
    double loss_pre_ = 0.0;
};

struct TaskRunState {
    ParamVector params;
    OptimizerState optimizer;
    std::uint64_t iteration = 0;  // global iterations completed so far
};

// Trains one task's pool for config.epochs_for(task) epochs from `state`,
// appending one record per iteration to `trace`. Batch order comes from
// `shuffle_rng`. Checkpoints go to `store` when given.
void train_task(const ModelSpec& spec, TaskRunState& state, const Dataset& train, std::span<const std::uint32_t> pool,
                int task, const TrainConfig& config, Rng& shuffle_rng, TrainHooks& hooks, TrainTrace& trace,
                CheckpointStore* store = nullptr);

struct ExperimentRecord {
    std::vector<TrainTrace> task_traces;
    // Global iteration count at the end of each task; boundaries[k] is the
    // boundary marker between task k and task k+1.
    std::vector<std::uint64_t> boundaries;
    ParamVector initial_params;
    ParamVector final_params;

    TrainTrace global_trace() const;
};

// Random streams derived from a run seed.
enum class Stream : std::uint64_t { Init = 1, Split = 2, Shuffle = 3 };
Rng stream_rng(std::uint64_t seed, Stream s);

// Warm-started sequence: task k+1 starts from the final parameters of task k.
ExperimentRecord run_sequence(const ModelSpec& spec, const Dataset& train, const TaskSequence& tasks,
                              const TrainConfig& config, TrainHooks& hooks, CheckpointStore* store = nullptr,
                              std::optional<ParamVector> initial = std::nullopt);

}  // namespace gapl

#include "gapl/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gapl/error.hpp"

namespace gapl {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void TrainConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ArgumentError("lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("momentum must be in [0,1)");
    if (batch_size == 0) throw ArgumentError("batch_size must be at least 1");
    if (epochs.empty()) throw ArgumentError("epochs must list at least one value");
    if (eval_every == 0 || eval_every_dense == 0) throw ArgumentError("eval intervals must be positive");
    if (checkpoint_every == 0 || checkpoint_every_dense == 0)
        throw ArgumentError("checkpoint intervals must be positive");
}

std::size_t TrainConfig::epochs_for(std::size_t task) const {
    return task < epochs.size() ? epochs[task] : epochs.back();
}

void sgd_step(ParamVector& params, const ParamVector& grads, OptimizerState& state, double lr, double momentum) {
    if (grads.size() != params.size() || state.velocity.size() != params.size())
        throw ShapeError("sgd_step length mismatch: params " + std::to_string(params.size()) + ", grads " +
                         std::to_string(grads.size()) + ", velocity " + std::to_string(state.velocity.size()));
    bool finite = true;
    for (std::size_t k = 0; k < params.size(); ++k) {
        state.velocity[k] = momentum * state.velocity[k] + grads.values[k];
        params.values[k] -= lr * state.velocity[k];
        finite = finite && std::isfinite(params.values[k]);
    }
    if (!finite) throw DivergenceError("non-finite parameters after SGD step");
}

std::string checkpoint_name(std::uint64_t iteration) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt-%09llu.gapl", static_cast<unsigned long long>(iteration));
    return buf;
}

void write_checkpoint(const std::filesystem::path& path, const ParamVector& params) {
    std::string bytes = "GAPL";
    auto put = [&](const void* p, std::size_t n) { bytes.append(static_cast<const char*>(p), n); };
    const std::uint16_t version = kCheckpointVersion;
    const std::uint64_t count = params.size();
    put(&version, sizeof version);
    put(params.spec_digest.data(), params.spec_digest.size());
    put(&count, sizeof count);
    put(params.values.data(), params.values.size() * sizeof(double));

    // Write to a sibling temp file and rename so readers never see a torn file.
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

ParamVector read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    constexpr std::size_t header = 4 + 2 + 32 + 8;
    if (bytes.size() < header)
        throw FormatError(path.string() + ": truncated header at byte offset " + std::to_string(bytes.size()),
                          static_cast<long long>(bytes.size()));
    if (bytes.compare(0, 4, "GAPL") != 0) throw FormatError(path.string() + ": bad magic at byte offset 0", 0);
    std::uint16_t version = 0;
    std::memcpy(&version, bytes.data() + 4, 2);
    if (version != kCheckpointVersion)
        throw FormatError(path.string() + ": unsupported version " + std::to_string(version) + " at byte offset 4", 4);
    ParamVector p;
    std::memcpy(p.spec_digest.data(), bytes.data() + 6, 32);
    std::uint64_t count = 0;
    std::memcpy(&count, bytes.data() + 38, 8);
    const std::size_t expected = header + count * sizeof(double);
    if (count > (bytes.size() - header) / sizeof(double) || bytes.size() != expected)
        throw FormatError(path.string() + ": payload size mismatch at byte offset " +
                              std::to_string(std::min(bytes.size(), expected)) + " (count " + std::to_string(count) +
                              ")",
                          static_cast<long long>(std::min(bytes.size(), expected)));
    p.values.resize(count);
    std::memcpy(p.values.data(), bytes.data() + header, count * sizeof(double));
    return p;
}

CheckpointStore::CheckpointStore(std::filesystem::path directory) : dir_(std::move(directory)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

CheckpointStore CheckpointStore::open(const std::filesystem::path& directory) {
    CheckpointStore store;
    store.dir_ = directory;
    std::ifstream in(directory / "index.csv");
    if (!in) throw MissingCheckpointError("no checkpoint index in " + directory.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1) {
            if (line != "task,iter,file")
                throw FormatError((directory / "index.csv").string() + ": bad header on line 1", 1);
            continue;
        }
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string task, iter, file;
        if (!std::getline(ss, task, ',') || !std::getline(ss, iter, ',') || !std::getline(ss, file))
            throw FormatError((directory / "index.csv").string() + ": malformed line " + std::to_string(line_no),
                              static_cast<long long>(line_no));
        try {
            store.entries_[std::stoull(iter)] = Entry{std::stoi(task), file, std::nullopt};
        } catch (const std::exception&) {
            throw FormatError((directory / "index.csv").string() + ": bad number on line " + std::to_string(line_no),
                              static_cast<long long>(line_no));
        }
    }
    return store;
}

std::string CheckpointStore::save(int task, std::uint64_t iteration, const ParamVector& params) {
    Entry e{task, checkpoint_name(iteration), std::nullopt};
    if (on_disk()) {
        write_checkpoint(dir_ / e.file, params);
    } else {
        e.in_memory = params;
    }
    entries_[iteration] = std::move(e);
    if (on_disk()) write_index();
    return checkpoint_name(iteration);
}

ParamVector CheckpointStore::load(std::uint64_t iteration) const {
    auto it = entries_.find(iteration);
    if (it == entries_.end())
        throw MissingCheckpointError("no checkpoint for iteration " + std::to_string(iteration));
    if (it->second.in_memory) return *it->second.in_memory;
    return read_checkpoint(dir_ / it->second.file);
}

std::vector<std::uint64_t> CheckpointStore::iterations() const {
    std::vector<std::uint64_t> out;
    for (const auto& [iter, _] : entries_) out.push_back(iter);
    return out;
}

std::optional<int> CheckpointStore::task_of(std::uint64_t iteration) const {
    auto it = entries_.find(iteration);
    if (it == entries_.end()) return std::nullopt;
    return it->second.task;
}

void CheckpointStore::write_index() const {
    std::ofstream out(dir_ / "index.csv", std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint index in " + dir_.string());
    out << "task,iter,file\n";
    for (const auto& [iter, e] : entries_) out << e.task << ',' << iter << ',' << e.file << '\n';
}

namespace {

bool on_cadence(std::size_t step, std::size_t task_len, int task, std::size_t dense_window, std::size_t tail,
                std::size_t dense_every, std::size_t every) {
    const bool dense = (task > 0 && step <= dense_window) || step + tail > task_len;
    return step % (dense ? dense_every : every) == 0;
}

}  // namespace

void train_task(const ModelSpec& spec, TaskRunState& state, const Dataset& train, std::span<const std::uint32_t> pool,
                int task, const TrainConfig& config, Rng& shuffle_rng, TrainHooks& hooks, TrainTrace& trace,
                CheckpointStore* store) {
    config.validate();
    require_bound(spec, state.params);
    if (state.optimizer.velocity.size() != state.params.size())
        state.optimizer = OptimizerState::zeros(state.params.size());
    const std::size_t epochs = config.epochs_for(static_cast<std::size_t>(task));
    if (epochs == 0) return;

    BatchIterator batches({pool.begin(), pool.end()}, config.batch_size, epochs, shuffle_rng);
    const std::size_t task_len = batches.total_batches();
    std::size_t step = 0;
    while (auto idx = batches.next()) {
        ++step;
        const std::uint64_t iteration = state.iteration + 1;
        TraceRecord rec;
        rec.iteration = iteration;
        rec.task = task;
        try {
            const Tensor batch = train.gather(*idx);
            const std::vector<int> labels = train.gather_labels(*idx);
            BackwardResult result = backward(spec, state.params, batch, labels);
            hooks.pre_update(rec, result, labels);
            sgd_step(state.params, result.grads, state.optimizer, config.lr, config.momentum);
            hooks.post_update(rec, spec, state.params, batch, labels);
            if (on_cadence(step, task_len, task, config.dense_window, config.eval_tail, config.eval_every_dense,
                           config.eval_every))
                hooks.eval_tick(rec, spec, state.params);
        } catch (const DivergenceError& e) {
            throw DivergenceError(e.message(), static_cast<long long>(iteration));
        }
        state.iteration = iteration;
        if (step == task_len || on_cadence(step, task_len, task, config.dense_window, 0,
                                           config.checkpoint_every_dense, config.checkpoint_every)) {
            rec.checkpoint = store ? store->save(task, iteration, state.params) : checkpoint_name(iteration);
            hooks.checkpoint_tick(rec, state.params);
        }
        trace.push_back(std::move(rec));
    }
}

TrainTrace ExperimentRecord::global_trace() const {
    TrainTrace out;
    for (const auto& t : task_traces) out.insert(out.end(), t.begin(), t.end());
    return out;
}

Rng stream_rng(std::uint64_t seed, Stream s) { return Rng::derive(seed, static_cast<std::uint64_t>(s)); }

ExperimentRecord run_sequence(const ModelSpec& spec, const Dataset& train, const TaskSequence& tasks,
                              const TrainConfig& config, TrainHooks& hooks, CheckpointStore* store,
                              std::optional<ParamVector> initial) {
    config.validate();
    if (tasks.n_tasks() == 0) throw ArgumentError("task sequence is empty");
    if (tasks.base_size != train.size()) throw ArgumentError("task sequence was built for a different dataset");
    if (train.sample_shape() != spec.input_shape())
        throw ShapeError("dataset samples " + shape_str(train.sample_shape()) + " do not match model input " +
                         shape_str(spec.input_shape()));

    ExperimentRecord rec;
    TaskRunState state;
    state.params = initial ? std::move(*initial) : init_params(spec, stream_rng(config.seed, Stream::Init).next());
    require_bound(spec, state.params);
    rec.initial_params = state.params;
    state.optimizer = OptimizerState::zeros(state.params.size());
    Rng shuffle = stream_rng(config.seed, Stream::Shuffle);

    for (std::size_t k = 0; k < tasks.n_tasks(); ++k) {
        if (k > 0 && config.reset_velocity) state.optimizer = OptimizerState::zeros(state.params.size());
        const auto pool = tasks.pool(k);
        rec.task_traces.emplace_back();
        train_task(spec, state, train, pool, static_cast<int>(k), config, shuffle, hooks, rec.task_traces.back(),
                   store);
        rec.boundaries.push_back(state.iteration);
    }
    rec.final_params = state.params;
    return rec;
}

}  // namespace gapl

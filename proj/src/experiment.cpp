#include "gapl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "gapl/error.hpp"

namespace gapl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Typed, strict view of one config object. Every key read is remembered so
// that finish() can reject the rest.
class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(label() + "expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json* raw(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    double number(const std::string& key, double def) {
        const json* v = raw(key);
        if (!v) return def;
        if (!v->is_number()) throw ConfigError(label(key) + "expected a number");
        return v->get<double>();
    }

    std::uint64_t count(const std::string& key, std::uint64_t def) {
        const json* v = raw(key);
        return v ? as_count(*v, label(key)) : def;
    }

    bool flag(const std::string& key, bool def) {
        const json* v = raw(key);
        if (!v) return def;
        if (!v->is_boolean()) throw ConfigError(label(key) + "expected true or false");
        return v->get<bool>();
    }

    std::string text(const std::string& key, const std::string& def) {
        const json* v = raw(key);
        if (!v) return def;
        if (!v->is_string()) throw ConfigError(label(key) + "expected a string");
        return v->get<std::string>();
    }

    // Accepts a single count as shorthand for a one-element list.
    std::vector<std::uint64_t> counts(const std::string& key, std::vector<std::uint64_t> def) {
        const json* v = raw(key);
        if (!v) return def;
        if (v->is_number()) return {as_count(*v, label(key))};
        if (!v->is_array()) throw ConfigError(label(key) + "expected a list of non-negative integers");
        std::vector<std::uint64_t> out;
        for (const auto& e : *v) out.push_back(as_count(e, label(key)));
        return out;
    }

    std::vector<double> numbers(const std::string& key, std::vector<double> def) {
        const json* v = raw(key);
        if (!v) return def;
        if (!v->is_array()) throw ConfigError(label(key) + "expected a list of numbers");
        std::vector<double> out;
        for (const auto& e : *v) {
            if (!e.is_number()) throw ConfigError(label(key) + "expected a list of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(label() + "unknown key '" + it.key() + "'");
    }

    std::string label(const std::string& key = "") const {
        const std::string path = where_.empty() ? key : (key.empty() ? where_ : where_ + "." + key);
        return path.empty() ? std::string() : path + ": ";
    }

private:
    static std::uint64_t as_count(const json& v, const std::string& label) {
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (d >= 0 && d == std::floor(d) && d < 9.0e15) return static_cast<std::uint64_t>(d);
        }
        throw ConfigError(label + "expected a non-negative integer");
    }

    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

std::vector<std::size_t> to_sizes(const std::vector<std::uint64_t>& v) { return {v.begin(), v.end()}; }

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

DatasetConfig parse_dataset(const json& j, const fs::path& base) {
    Section s(j, "dataset");
    DatasetConfig d;
    d.kind = s.text("kind", "blobs");
    if (d.kind == "blobs") {
        d.blobs.seed = s.count("seed", d.blobs.seed);
        d.blobs.n_classes = s.count("classes", d.blobs.n_classes);
        d.blobs.n_per_class = s.count("per_class", d.blobs.n_per_class);
        d.blobs.dim = s.count("dim", d.blobs.dim);
        d.blobs.spread = s.number("spread", d.blobs.spread);
        if (const json* ms = s.raw("mean_scale"); ms && !ms->is_null()) {
            if (!ms->is_number()) throw ConfigError("dataset.mean_scale: expected a number or null");
            d.blobs.mean_scale = ms->get<double>();
        }
        if (d.blobs.n_classes < 2) throw ConfigError("dataset.classes: need at least 2 classes");
        if (d.blobs.n_classes > 256) throw ConfigError("dataset.classes: at most 256 classes");
        if (d.blobs.n_per_class < 2) throw ConfigError("dataset.per_class: need at least 2 samples per class");
        if (d.blobs.dim < 2) throw ConfigError("dataset.dim: must be at least 2");
        if (!(d.blobs.spread > 0) || !std::isfinite(d.blobs.spread))
            throw ConfigError("dataset.spread: must be positive");
        if (d.blobs.mean_scale && !(*d.blobs.mean_scale >= 0 && std::isfinite(*d.blobs.mean_scale)))
            throw ConfigError("dataset.mean_scale: must be non-negative");
        d.sample_shape = {d.blobs.dim};
        d.n_classes = d.blobs.n_classes;
    } else if (d.kind == "raw") {
        const std::string dir = s.text("dir", "");
        auto file = [&](const char* key, const char* fallback) {
            if (s.has(key)) return resolve(base, s.text(key, ""));
            if (dir.empty()) throw ConfigError(s.label(key) + "required when dataset.dir is not given");
            s.raw(key);
            return resolve(base, dir) / fallback;
        };
        d.train_features = file("train_features", "train_features.bin");
        d.train_labels = file("train_labels", "train_labels.bin");
        d.test_features = file("test_features", "test_features.bin");
        d.test_labels = file("test_labels", "test_labels.bin");
        d.sample_shape = to_sizes(s.counts("shape", {}));
        d.n_classes = s.count("classes", 0);
        d.train_count = s.count("train_count", 0);
        d.test_count = s.count("test_count", 0);
        if (d.sample_shape.empty() || shape_size(d.sample_shape) == 0)
            throw ConfigError("dataset.shape: required, with positive dimensions");
        if (d.n_classes < 2 || d.n_classes > 256) throw ConfigError("dataset.classes: required, between 2 and 256");
        if (d.train_count == 0 || d.test_count == 0)
            throw ConfigError("dataset.train_count/test_count: required and positive");
        for (const auto* p : {&d.train_features, &d.train_labels, &d.test_features, &d.test_labels})
            if (!fs::is_regular_file(*p)) throw ConfigError("dataset: no such file " + p->string());
    } else {
        throw ConfigError("dataset.kind: expected \"blobs\" or \"raw\", got \"" + d.kind + "\"");
    }
    s.finish();
    return d;
}

ModelConfig parse_model(const json& j) {
    Section s(j, "model");
    ModelConfig m;
    m.name = s.text("name", m.name);
    if (m.name != "mlp" && m.name != "smallcnn")
        throw ConfigError("model.name: expected \"mlp\" or \"smallcnn\", got \"" + m.name + "\"");
    m.hidden = to_sizes(s.counts("hidden", {m.hidden.begin(), m.hidden.end()}));
    if (m.name == "smallcnn") {
        m.channels = to_sizes(s.counts("channels", {m.channels.begin(), m.channels.end()}));
        if (m.channels.empty()) throw ConfigError("model.channels: smallcnn needs at least one conv block");
    } else {
        if (s.has("channels")) throw ConfigError("model.channels: only valid for smallcnn");
        m.channels.clear();
    }
    for (auto w : m.hidden)
        if (w == 0) throw ConfigError("model.hidden: widths must be positive");
    for (auto c : m.channels)
        if (c == 0) throw ConfigError("model.channels: counts must be positive");
    s.finish();
    return m;
}

SplitConfig parse_split(const json& j) {
    Section s(j, "split");
    SplitConfig sp;
    sp.fractions = s.numbers("fractions", sp.fractions);
    sp.joint = s.flag("joint", sp.joint);
    sp.stratified = s.flag("stratified", sp.stratified);
    s.finish();
    if (sp.fractions.empty()) throw ConfigError("split.fractions: need at least one task");
    double sum = 0.0;
    for (double f : sp.fractions) {
        if (!(f > 0.0 && f <= 100.0)) throw ConfigError("split.fractions: each fraction must lie in (0, 100]");
        sum += f;
    }
    if (std::abs(sum - 100.0) > 1e-9) throw ConfigError("split.fractions: must sum to 100");
    return sp;
}

TrainConfig parse_train(const json& j) {
    Section s(j, "train");
    TrainConfig t;
    t.lr = s.number("lr", t.lr);
    t.momentum = s.number("momentum", t.momentum);
    t.batch_size = s.count("batch_size", t.batch_size);
    t.epochs = to_sizes(s.counts("epochs", {t.epochs.begin(), t.epochs.end()}));
    t.eval_every = s.count("eval_every", t.eval_every);
    t.eval_every_dense = s.count("eval_every_dense", t.eval_every_dense);
    t.eval_tail = s.count("eval_tail", t.eval_tail);
    t.dense_window = s.count("dense_window", t.dense_window);
    t.checkpoint_every = s.count("checkpoint_every", t.checkpoint_every);
    t.checkpoint_every_dense = s.count("checkpoint_every_dense", t.checkpoint_every_dense);
    t.reset_velocity = s.flag("reset_velocity", t.reset_velocity);
    s.finish();
    try {
        t.validate();
    } catch (const ArgumentError& e) {
        throw ConfigError("train: " + e.message());
    }
    return t;
}

AnalysisConfig parse_analysis(const json& j) {
    Section s(j, "analysis");
    AnalysisConfig a;
    a.gap.baseline_evals = s.count("K", a.gap.baseline_evals);
    a.gap.recovery_window = s.count("W", a.gap.recovery_window);
    a.gap.tolerance = s.number("tolerance", a.gap.tolerance);
    a.gap.analysis_window = s.count("window", a.gap.analysis_window);
    a.lmc_step = s.number("lmc_step", a.lmc_step);
    a.eval_batch = s.count("eval_batch", a.eval_batch);
    s.finish();
    if (a.gap.baseline_evals == 0) throw ConfigError("analysis.K: must be at least 1");
    if (a.gap.recovery_window == 0) throw ConfigError("analysis.W: must be at least 1");
    if (!(a.gap.tolerance >= 0.0) || !std::isfinite(a.gap.tolerance))
        throw ConfigError("analysis.tolerance: must be non-negative");
    if (a.gap.analysis_window == 0) throw ConfigError("analysis.window: must be positive");
    if (!(a.lmc_step > 0.0 && a.lmc_step <= 0.5)) throw ConfigError("analysis.lmc_step: must lie in (0, 0.5]");
    if (a.eval_batch == 0) throw ConfigError("analysis.eval_batch: must be positive");
    return a;
}

json empty_object() { return json::object(); }

std::string iso_utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
    Section top(j, "");
    ExperimentConfig c;
    auto sub = [&](const char* key) {
        const json* v = top.raw(key);
        return v ? *v : empty_object();
    };
    c.dataset = parse_dataset(sub("dataset"), base_dir);
    c.model = parse_model(sub("model"));
    c.split = parse_split(sub("split"));
    c.train = parse_train(sub("train"));
    c.analysis = parse_analysis(sub("analysis"));
    c.output = top.text("output", c.output.string());
    c.seeds = top.counts("seeds", c.seeds);
    c.threads = static_cast<unsigned>(top.count("threads", c.threads));
    top.finish();

    if (c.output.empty()) throw ConfigError("output: must not be empty");
    if (c.seeds.empty()) throw ConfigError("seeds: need at least one seed");
    if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
        throw ConfigError("seeds: duplicate seed");
    if (c.threads == 0) throw ConfigError("threads: must be at least 1");
    // Catches model/data shape incompatibilities now rather than after data loading.
    try {
        (void)build_model(c.model, c.dataset.sample_shape, c.dataset.n_classes);
    } catch (const ShapeError& e) {
        throw ConfigError("model: " + e.message());
    }
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j, fs::absolute(path).parent_path());
}

json ExperimentConfig::to_json() const {
    json d;
    d["kind"] = dataset.kind;
    if (dataset.kind == "blobs") {
        d["seed"] = dataset.blobs.seed;
        d["classes"] = dataset.blobs.n_classes;
        d["per_class"] = dataset.blobs.n_per_class;
        d["dim"] = dataset.blobs.dim;
        d["spread"] = dataset.blobs.spread;
        d["mean_scale"] = dataset.blobs.mean_scale ? json(*dataset.blobs.mean_scale) : json(nullptr);
    } else {
        d["train_features"] = dataset.train_features.string();
        d["train_labels"] = dataset.train_labels.string();
        d["test_features"] = dataset.test_features.string();
        d["test_labels"] = dataset.test_labels.string();
        d["shape"] = dataset.sample_shape;
        d["classes"] = dataset.n_classes;
        d["train_count"] = dataset.train_count;
        d["test_count"] = dataset.test_count;
    }
    json m;
    m["name"] = model.name;
    m["hidden"] = model.hidden;
    if (model.name == "smallcnn") m["channels"] = model.channels;
    json t;
    t["lr"] = train.lr;
    t["momentum"] = train.momentum;
    t["batch_size"] = train.batch_size;
    t["epochs"] = train.epochs;
    t["eval_every"] = train.eval_every;
    t["eval_every_dense"] = train.eval_every_dense;
    t["eval_tail"] = train.eval_tail;
    t["dense_window"] = train.dense_window;
    t["checkpoint_every"] = train.checkpoint_every;
    t["checkpoint_every_dense"] = train.checkpoint_every_dense;
    t["reset_velocity"] = train.reset_velocity;
    json a;
    a["K"] = analysis.gap.baseline_evals;
    a["W"] = analysis.gap.recovery_window;
    a["tolerance"] = analysis.gap.tolerance;
    a["window"] = analysis.gap.analysis_window;
    a["lmc_step"] = analysis.lmc_step;
    a["eval_batch"] = analysis.eval_batch;
    json out;
    out["dataset"] = d;
    out["model"] = m;
    out["split"] = {{"fractions", split.fractions}, {"joint", split.joint}, {"stratified", split.stratified}};
    out["train"] = t;
    out["analysis"] = a;
    out["output"] = output.string();
    out["seeds"] = seeds;
    out["threads"] = threads;
    return out;
}

std::string sha256_hex(const std::string& text) { return digest_hex(sha256_digest(text)); }

std::string ExperimentConfig::hash() const { return sha256_hex(canonical()); }

TrainTest load_datasets(const DatasetConfig& cfg) {
    if (cfg.kind == "blobs") return gen_blobs(cfg.blobs);
    TrainTest tt;
    tt.train = load_raw(cfg.train_features, cfg.train_labels, {cfg.sample_shape, cfg.train_count, cfg.n_classes});
    tt.test = load_raw(cfg.test_features, cfg.test_labels, {cfg.sample_shape, cfg.test_count, cfg.n_classes});
    return tt;
}

ModelSpec build_model(const ModelConfig& cfg, const Shape& sample_shape, std::size_t n_classes) {
    if (cfg.name == "smallcnn") {
        if (sample_shape.size() != 3)
            throw ShapeError("smallcnn needs [channels, height, width] samples, got " + shape_str(sample_shape));
        return ModelSpec::small_cnn(sample_shape, cfg.channels, cfg.hidden, n_classes);
    }
    std::vector<Layer> layers;
    if (sample_shape.size() != 1) layers.emplace_back(layer::Flatten{});
    std::size_t width = shape_size(sample_shape);
    for (auto h : cfg.hidden) {
        layers.emplace_back(layer::Dense{width, h});
        layers.emplace_back(layer::ReLU{});
        width = h;
    }
    layers.emplace_back(layer::Dense{width, n_classes});
    return ModelSpec(std::move(layers), sample_shape, n_classes);
}

json model_to_json(const ModelSpec& spec) {
    json layers = json::array();
    for (const auto& l : spec.layers()) {
        if (const auto* d = std::get_if<layer::Dense>(&l))
            layers.push_back({{"type", "dense"}, {"in", d->in}, {"out", d->out}});
        else if (const auto* c = std::get_if<layer::Conv3x3>(&l))
            layers.push_back({{"type", "conv3x3"}, {"in", c->in_channels}, {"out", c->out_channels}});
        else if (std::holds_alternative<layer::ReLU>(l))
            layers.push_back({{"type", "relu"}});
        else if (std::holds_alternative<layer::MaxPool2x2>(l))
            layers.push_back({{"type", "maxpool2x2"}});
        else
            layers.push_back({{"type", "flatten"}});
    }
    return {{"input_shape", spec.input_shape()},
            {"classes", spec.n_classes()},
            {"layers", layers},
            {"param_count", spec.param_count()},
            {"canonical", spec.canonical()},
            {"digest", digest_hex(spec.digest())}};
}

ModelSpec model_from_json(const json& j) {
    try {
        std::vector<Layer> layers;
        for (const auto& l : j.at("layers")) {
            const std::string type = l.at("type").get<std::string>();
            if (type == "dense")
                layers.emplace_back(layer::Dense{l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>()});
            else if (type == "conv3x3")
                layers.emplace_back(layer::Conv3x3{l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>()});
            else if (type == "relu")
                layers.emplace_back(layer::ReLU{});
            else if (type == "maxpool2x2")
                layers.emplace_back(layer::MaxPool2x2{});
            else if (type == "flatten")
                layers.emplace_back(layer::Flatten{});
            else
                throw FormatError("unknown layer type '" + type + "'");
        }
        ModelSpec spec(std::move(layers), j.at("input_shape").get<Shape>(), j.at("classes").get<std::size_t>());
        if (j.contains("digest") && j.at("digest").get<std::string>() != digest_hex(spec.digest()))
            throw SpecMismatchError("model description does not match its recorded digest");
        return spec;
    } catch (const json::exception& e) {
        throw FormatError(std::string("model description: ") + e.what());
    }
}

ModelSpec load_model_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model description " + path.string());
    try {
        return model_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.message(), e.position);
    }
}

SeedRun run_seed(const ExperimentConfig& config, const ModelSpec& spec, const TrainTest& data, std::uint64_t seed,
                 const fs::path& dir, bool analyze) {
    SeedRun run;
    run.seed = seed;
    run.dir = dir;
    TrainConfig tc = config.train;
    tc.seed = seed;
    const TaskSequence tasks = split_tasks(data.train, config.split.fractions, config.split.joint,
                                           stream_rng(seed, Stream::Split).next(), config.split.stratified);
    ProbeHooks hooks(data.test, config.analysis.eval_batch);
    const bool persist = !dir.empty();
    if (persist) {
        fs::remove_all(dir);
        fs::create_directories(dir);
        write_text(dir / "model.json", model_to_json(spec).dump(2) + "\n");
    }
    CheckpointStore store = persist ? CheckpointStore(dir / "checkpoints") : CheckpointStore();

    run.record = run_sequence(spec, data.train, tasks, tc, hooks, &store);
    run.trace = run.record.global_trace();
    if (persist) {
        write_trace_csv(dir / "trace.csv", run.trace);
        for (std::size_t k = 0; k < run.record.task_traces.size(); ++k)
            write_trace_csv(dir / ("trace_task" + std::to_string(k) + ".csv"), run.record.task_traces[k]);
    }
    const auto& b = run.record.boundaries;
    if (b.size() < 2) return run;

    run.boundary = b[b.size() - 2];
    run.gap = compute_gap(run.trace, run.boundary, config.analysis.gap);
    if (persist) write_text(dir / "gap.txt", "boundary=" + std::to_string(run.boundary) + "\n" + format_gap(*run.gap));
    if (!analyze) return run;

    // theta1 is the warm start of the last task, theta2 its final parameters.
    const ParamVector theta1 = store.load(run.boundary);
    const ParamVector theta2 = store.load(b.back());
    run.lmc = lmc_curve(spec, theta1, theta2, config.analysis.lmc_step, data.test, 1, config.analysis.eval_batch);
    run.path = sgd_path_loss(spec, store, run.boundary, b.back(), data.test, config.analysis.eval_batch);
    if (persist) {
        write_lmc_csv(dir / "lmc.csv", *run.lmc);
        write_path_csv(dir / "path.csv", *run.path);
    }
    return run;
}

namespace {

void list_files(const fs::path& root, const fs::path& sub, std::vector<std::string>& out) {
    const fs::path p = root / sub;
    if (fs::is_regular_file(p)) {
        out.push_back(sub.generic_string());
        return;
    }
    if (!fs::is_directory(p)) return;
    for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root).generic_string());
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    const std::string started = iso_utc_now();
    const TrainTest data = load_datasets(config.dataset);
    const ModelSpec spec = build_model(config.model, data.train.sample_shape(), config.dataset.n_classes);

    RunSummary summary;
    if (options.persist) {
        summary.dir = config.output;
        // Seed directories are replaced wholesale, so only ever replace our own.
        for (auto seed : config.seeds) {
            const fs::path d = summary.dir / ("seed-" + std::to_string(seed));
            if (fs::exists(d) && !fs::is_empty(d) && !fs::exists(d / "model.json"))
                throw IoError("refusing to overwrite " + d.string() + ": not a run directory");
        }
        fs::create_directories(summary.dir);
        write_text(summary.dir / "config.json", config.canonical() + "\n");
    }
    auto seed_dir = [&](std::uint64_t seed) {
        return options.persist ? summary.dir / ("seed-" + std::to_string(seed)) : fs::path();
    };

    const std::size_t n = config.seeds.size();
    summary.runs.resize(n);
    std::vector<std::exception_ptr> failures(n);
    auto work = [&](std::size_t i) {
        try {
            summary.runs[i] = run_seed(config, spec, data, config.seeds[i], seed_dir(config.seeds[i]), options.analyze);
        } catch (...) {
            failures[i] = std::current_exception();
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(n)));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < n;) work(i);
            });
    }
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);

    std::vector<GapMetrics> gaps;
    for (const auto& r : summary.runs)
        if (r.gap) gaps.push_back(*r.gap);
    if (!gaps.empty() && gaps.size() == n) summary.median = median_gap(gaps);

    if (!options.persist) return summary;

    if (!gaps.empty()) {
        std::string doc;
        for (const auto& r : summary.runs)
            if (r.gap) doc += format_gap(*r.gap, "seed-" + std::to_string(r.seed) + ".");
        if (summary.median) doc += format_gap(*summary.median, "median.");
        write_text(summary.dir / "gap_summary.txt", doc);
    }

    std::vector<std::string> files;
    list_files(summary.dir, "config.json", files);
    list_files(summary.dir, "gap_summary.txt", files);
    for (auto seed : config.seeds) list_files(summary.dir, "seed-" + std::to_string(seed), files);
    std::sort(files.begin(), files.end());
    json manifest;
    manifest["config_hash"] = config.hash();
    manifest["files"] = files;
    manifest["versions"] = {{"gapl", kVersion}, {"checkpoint_format", kCheckpointVersion}};
    manifest["timestamps"] = {{"started", started}, {"finished", iso_utc_now()}};
    write_text(summary.dir / "manifest.json", manifest.dump(2) + "\n");
    return summary;
}

}  // namespace gapl

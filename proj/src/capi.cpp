#include "gapl/gapl.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <sstream>
#include <string>

#include "gapl/connectivity.hpp"
#include "gapl/error.hpp"
#include "gapl/experiment.hpp"
#include "gapl/report.hpp"

struct gapl_model {
    gapl::ModelSpec spec;
};
struct gapl_params {
    gapl::ParamVector params;
};
struct gapl_dataset {
    gapl::Dataset data;
};

namespace {

namespace fs = std::filesystem;

thread_local std::string last_error;

gapl_status fail(gapl_status s, const std::string& msg) {
    last_error = msg;
    return s;
}

template <typename F>
gapl_status guarded(F&& f) {
    try {
        f();
        return GAPL_OK;
    } catch (const gapl::Error& e) {
        return fail(static_cast<gapl_status>(e.code()), e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(GAPL_ERR_FORMAT, std::string("FormatError: ") + e.what());
    } catch (const fs::filesystem_error& e) {
        return fail(GAPL_ERR_IO, std::string("IoError: ") + e.what());
    } catch (const std::bad_alloc&) {
        return fail(GAPL_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(GAPL_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(GAPL_ERR_INTERNAL, "unknown error");
    }
}

void need(const void* p, const char* what) {
    if (!p) throw gapl::ArgumentError(std::string(what) + " must not be null");
}

char* dup(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void give(char** out, const std::string& s) {
    if (out) *out = dup(s);
}

gapl::BlobsParams blobs_from(const gapl_blobs_options* o) {
    gapl::BlobsParams p;
    p.seed = o->seed;
    p.n_classes = o->n_classes;
    p.n_per_class = o->n_per_class;
    p.dim = o->dim;
    p.spread = o->spread;
    if (o->has_mean_scale) p.mean_scale = o->mean_scale;
    return p;
}

gapl::GapParams gap_from(const gapl_gap_options* o) {
    gapl::GapParams p;
    p.baseline_evals = o->baseline_evals;
    p.recovery_window = o->recovery_window;
    p.tolerance = o->tolerance;
    p.analysis_window = o->analysis_window;
    return p;
}

void fill_metrics(const gapl::GapMetrics& m, gapl_gap_metrics* out) {
    out->pre_switch_acc = m.pre_switch_acc;
    out->min_acc = m.min_acc;
    out->gap_depth = m.gap_depth;
    out->min_iteration = m.min_iteration;
    out->recovery_iteration = m.recovery_iteration.value_or(0);
    out->recovered = m.recovered ? 1 : 0;
}

// Run directory that owns a checkpoint: <seed dir>/checkpoints/<file>.
fs::path owning_seed_dir(const fs::path& checkpoint) { return fs::absolute(checkpoint).parent_path().parent_path(); }

std::uint64_t file_size_of(const fs::path& p) {
    if (!fs::is_regular_file(p)) throw gapl::IoError("no such file " + p.string());
    return fs::file_size(p);
}

}  // namespace

extern "C" {

const char* gapl_version(void) { return gapl::kVersion; }

const char* gapl_status_name(gapl_status status) {
    if (status == GAPL_OK) return "ok";
    if (status == GAPL_ERR_INTERNAL) return "InternalError";
    if (status >= GAPL_ERR_ARGUMENT && status <= GAPL_ERR_IO)
        return gapl::error_name(static_cast<gapl::ErrorCode>(status));
    return "unknown";
}

const char* gapl_last_error(void) { return last_error.c_str(); }

void gapl_string_free(char* s) { std::free(s); }

gapl_status gapl_model_mlp(const size_t* widths, size_t n_widths, gapl_model** out) {
    return guarded([&] {
        need(widths, "widths");
        need(out, "out");
        *out = new gapl_model{gapl::ModelSpec::mlp({widths, widths + n_widths})};
    });
}

gapl_status gapl_model_small_cnn(const size_t chw[3], const size_t* channels, size_t n_channels,
                                 const size_t* hidden, size_t n_hidden, size_t n_classes, gapl_model** out) {
    return guarded([&] {
        need(chw, "chw");
        need(out, "out");
        if (n_channels) need(channels, "channels");
        if (n_hidden) need(hidden, "hidden");
        std::vector<std::size_t> ch(channels, channels + n_channels), hid(hidden, hidden + n_hidden);
        *out = new gapl_model{gapl::ModelSpec::small_cnn({chw[0], chw[1], chw[2]}, ch, hid, n_classes)};
    });
}

gapl_status gapl_model_load(const char* path, gapl_model** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new gapl_model{gapl::load_model_file(path)};
    });
}

gapl_status gapl_model_save(const gapl_model* model, const char* path) {
    return guarded([&] {
        need(model, "model");
        need(path, "path");
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw gapl::IoError(std::string("cannot write ") + path);
        f << gapl::model_to_json(model->spec).dump(2) << '\n';
        if (!f) throw gapl::IoError(std::string("write failed for ") + path);
    });
}

size_t gapl_model_param_count(const gapl_model* model) { return model ? model->spec.param_count() : 0; }

size_t gapl_model_n_classes(const gapl_model* model) { return model ? model->spec.n_classes() : 0; }

gapl_status gapl_model_digest(const gapl_model* model, char hex[65]) {
    return guarded([&] {
        need(model, "model");
        need(hex, "hex");
        const std::string h = gapl::digest_hex(model->spec.digest());
        std::memcpy(hex, h.c_str(), 65);
    });
}

void gapl_model_free(gapl_model* model) { delete model; }

gapl_status gapl_params_init(const gapl_model* model, uint64_t seed, gapl_params** out) {
    return guarded([&] {
        need(model, "model");
        need(out, "out");
        *out = new gapl_params{gapl::init_params(model->spec, seed)};
    });
}

gapl_status gapl_params_load(const char* checkpoint_path, gapl_params** out) {
    return guarded([&] {
        need(checkpoint_path, "checkpoint_path");
        need(out, "out");
        *out = new gapl_params{gapl::read_checkpoint(checkpoint_path)};
    });
}

gapl_status gapl_params_save(const gapl_params* params, const char* checkpoint_path) {
    return guarded([&] {
        need(params, "params");
        need(checkpoint_path, "checkpoint_path");
        gapl::write_checkpoint(checkpoint_path, params->params);
    });
}

gapl_status gapl_params_interpolate(const gapl_params* a, const gapl_params* b, double lambda, gapl_params** out) {
    return guarded([&] {
        need(a, "a");
        need(b, "b");
        need(out, "out");
        *out = new gapl_params{gapl::interpolate(a->params, b->params, lambda)};
    });
}

size_t gapl_params_size(const gapl_params* params) { return params ? params->params.size() : 0; }

const double* gapl_params_data(const gapl_params* params) { return params ? params->params.values.data() : nullptr; }

void gapl_params_free(gapl_params* params) { delete params; }

void gapl_blobs_options_init(gapl_blobs_options* opts) {
    if (!opts) return;
    const gapl::BlobsParams d;
    opts->seed = d.seed;
    opts->n_classes = d.n_classes;
    opts->n_per_class = d.n_per_class;
    opts->dim = d.dim;
    opts->spread = d.spread;
    opts->mean_scale = 0.0;
    opts->has_mean_scale = 0;
}

gapl_status gapl_dataset_blobs(const gapl_blobs_options* opts, gapl_dataset** train, gapl_dataset** test) {
    return guarded([&] {
        need(opts, "opts");
        need(train, "train");
        need(test, "test");
        gapl::TrainTest tt = gapl::gen_blobs(blobs_from(opts));
        auto* tr = new gapl_dataset{std::move(tt.train)};
        *test = new gapl_dataset{std::move(tt.test)};
        *train = tr;
    });
}

gapl_status gapl_dataset_load_raw(const char* features_path, const char* labels_path, const size_t* shape,
                                  size_t rank, size_t count, size_t n_classes, gapl_dataset** out) {
    return guarded([&] {
        need(features_path, "features_path");
        need(labels_path, "labels_path");
        need(shape, "shape");
        need(out, "out");
        gapl::RawMeta meta{{shape, shape + rank}, count, n_classes};
        *out = new gapl_dataset{gapl::load_raw(features_path, labels_path, meta)};
    });
}

size_t gapl_dataset_size(const gapl_dataset* ds) { return ds ? ds->data.size() : 0; }

void gapl_dataset_free(gapl_dataset* ds) { delete ds; }

gapl_status gapl_evaluate(const gapl_model* model, const gapl_params* params, const gapl_dataset* ds, double* loss,
                          double* accuracy) {
    return guarded([&] {
        need(model, "model");
        need(params, "params");
        need(ds, "dataset");
        gapl::require_bound(model->spec, params->params);
        const gapl::EvalResult r = gapl::eval_test(model->spec, params->params, ds->data);
        if (loss) *loss = r.loss;
        if (accuracy) *accuracy = r.accuracy;
    });
}

void gapl_gap_options_init(gapl_gap_options* opts) {
    if (!opts) return;
    const gapl::GapParams d;
    opts->baseline_evals = d.baseline_evals;
    opts->recovery_window = d.recovery_window;
    opts->tolerance = d.tolerance;
    opts->analysis_window = d.analysis_window;
    opts->boundary = 0;
}

gapl_status gapl_gap_from_trace(const char* trace_path, const gapl_gap_options* opts, gapl_gap_metrics* out) {
    return guarded([&] {
        need(trace_path, "trace_path");
        need(opts, "opts");
        need(out, "out");
        const gapl::TrainTrace trace = gapl::read_trace_csv(fs::path(trace_path));
        const std::uint64_t boundary = opts->boundary ? opts->boundary : gapl::infer_boundary(trace);
        fill_metrics(gapl::compute_gap(trace, boundary, gap_from(opts)), out);
    });
}

gapl_status gapl_gen_data(const gapl_blobs_options* opts, const char* out_dir, char** metadata_json) {
    return guarded([&] {
        need(opts, "opts");
        if (!out_dir || !*out_dir) throw gapl::ArgumentError("an output directory is required");
        const gapl::TrainTest tt = gapl::gen_blobs(blobs_from(opts));
        const gapl::Dataset* sets[] = {&tt.train, &tt.test};
        const gapl::Quantization q = gapl::quantization_range(sets);
        const fs::path dir(out_dir);
        fs::create_directories(dir);
        gapl::save_raw(tt.train, dir / "train_features.bin", dir / "train_labels.bin", q);
        gapl::save_raw(tt.test, dir / "test_features.bin", dir / "test_labels.bin", q);
        nlohmann::json meta;
        meta["shape"] = tt.train.sample_shape();
        meta["classes"] = tt.train.n_classes;
        meta["train_count"] = tt.train.size();
        meta["test_count"] = tt.test.size();
        meta["quantization"] = {{"lo", q.lo}, {"hi", q.hi}};
        meta["files"] = {"train_features.bin", "train_labels.bin", "test_features.bin", "test_labels.bin"};
        give(metadata_json, meta.dump(2));
    });
}

gapl_status gapl_train(const char* config_path, const char* out_dir, const uint64_t* seeds, size_t n_seeds,
                       unsigned threads, char** summary) {
    return guarded([&] {
        need(config_path, "config_path");
        gapl::ExperimentConfig cfg = gapl::ExperimentConfig::from_file(config_path);
        if (out_dir && *out_dir) cfg.output = out_dir;
        if (n_seeds) {
            need(seeds, "seeds");
            cfg.seeds.assign(seeds, seeds + n_seeds);
        }
        if (threads) cfg.threads = threads;
        const gapl::RunSummary run = gapl::run_experiment(cfg);
        std::ostringstream s;
        s << "run_dir=" << run.dir.string() << '\n' << "config_hash=" << cfg.hash() << '\n';
        for (const auto& r : run.runs) {
            const std::string p = "seed-" + std::to_string(r.seed) + ".";
            s << p << "boundary=" << r.boundary << '\n';
            if (r.gap) s << gapl::format_gap(*r.gap, p);
            if (r.lmc) s << p << "barrier=" << gapl::fmt9(gapl::barrier(*r.lmc)) << '\n';
        }
        if (run.median) s << gapl::format_gap(*run.median, "median.");
        give(summary, s.str());
    });
}

gapl_status gapl_gap_report(const char* const* trace_paths, size_t n_traces, const gapl_gap_options* opts,
                            char** document, int* all_recovered) {
    return guarded([&] {
        need(trace_paths, "trace_paths");
        need(opts, "opts");
        if (n_traces == 0) throw gapl::ArgumentError("at least one trace is required");
        std::vector<gapl::GapMetrics> metrics;
        std::vector<std::uint64_t> boundaries;
        for (size_t i = 0; i < n_traces; ++i) {
            need(trace_paths[i], "trace path");
            const gapl::TrainTrace trace = gapl::read_trace_csv(fs::path(trace_paths[i]));
            boundaries.push_back(opts->boundary ? opts->boundary : gapl::infer_boundary(trace));
            metrics.push_back(gapl::compute_gap(trace, boundaries.back(), gap_from(opts)));
        }
        std::ostringstream s;
        if (n_traces == 1) {
            s << "boundary=" << boundaries[0] << '\n' << gapl::format_gap(metrics[0]);
        } else {
            for (size_t i = 0; i < n_traces; ++i) {
                const std::string p = "run" + std::to_string(i + 1) + ".";
                s << p << "trace=" << trace_paths[i] << '\n' << p << "boundary=" << boundaries[i] << '\n';
                s << gapl::format_gap(metrics[i], p);
            }
            s << gapl::format_gap(gapl::median_gap(metrics), "median.");
        }
        bool all = true;
        for (const auto& m : metrics) all = all && m.recovered;
        if (all_recovered) *all_recovered = all ? 1 : 0;
        give(document, s.str());
    });
}

void gapl_lmc_options_init(gapl_lmc_options* opts) {
    if (!opts) return;
    *opts = gapl_lmc_options{};
    opts->step = 0.01;
    opts->threads = 1;
}

gapl_status gapl_lmc(const gapl_lmc_options* opts, char** summary) {
    return guarded([&] {
        need(opts, "opts");
        need(opts->checkpoint_a, "checkpoint_a");
        need(opts->checkpoint_b, "checkpoint_b");
        if (opts->config_path && opts->data_dir)
            throw gapl::ArgumentError("give either a config or a data directory, not both");
        const fs::path a(opts->checkpoint_a), b(opts->checkpoint_b);
        const fs::path seed_dir = owning_seed_dir(a);

        const fs::path model_path = opts->model_path ? fs::path(opts->model_path) : seed_dir / "model.json";
        const gapl::ModelSpec spec = gapl::load_model_file(model_path);
        const gapl::ParamVector theta1 = gapl::read_checkpoint(a);
        const gapl::ParamVector theta2 = gapl::read_checkpoint(b);
        gapl::require_combinable(theta1, theta2);
        gapl::require_bound(spec, theta1);
        // Validates the step before any data is loaded.
        (void)gapl::lambda_grid(opts->step);

        gapl::Dataset evalset;
        if (opts->data_dir) {
            const fs::path d(opts->data_dir);
            const std::uint64_t count = file_size_of(d / "test_labels.bin");
            evalset = gapl::load_raw(d / "test_features.bin", d / "test_labels.bin",
                                     {spec.input_shape(), count, spec.n_classes()});
        } else {
            const fs::path cfg_path = opts->config_path ? fs::path(opts->config_path) : seed_dir.parent_path() / "config.json";
            if (!fs::exists(cfg_path))
                throw gapl::ArgumentError("no evaluation data: pass a config or data directory (" + cfg_path.string() +
                                          " not found)");
            evalset = gapl::load_datasets(gapl::ExperimentConfig::from_file(cfg_path).dataset).test;
        }

        const gapl::LmcCurve curve = gapl::lmc_curve(spec, theta1, theta2, opts->step, evalset, opts->threads);
        std::optional<gapl::PathCurve> path;
        if (opts->sgd_path_dir) {
            const gapl::CheckpointStore store = gapl::CheckpointStore::open(opts->sgd_path_dir);
            const auto its = store.iterations();
            if (its.empty()) throw gapl::MissingCheckpointError("checkpoint index is empty");
            // Endpoints named by file; the whole stored trajectory otherwise.
            std::uint64_t first = its.front(), last = its.back();
            std::optional<std::uint64_t> ia, ib;
            for (auto it : its) {
                if (gapl::checkpoint_name(it) == a.filename().string()) ia = it;
                if (gapl::checkpoint_name(it) == b.filename().string()) ib = it;
            }
            if (ia && ib) first = std::min(*ia, *ib), last = std::max(*ia, *ib);
            path = gapl::sgd_path_loss(spec, store, first, last, evalset);
        }
        const std::string svg = gapl::lmc_figure(curve, path ? &*path : nullptr);

        const fs::path out = opts->out_dir ? fs::path(opts->out_dir) : fs::path(".");
        fs::create_directories(out);
        gapl::write_lmc_csv(out / "lmc.csv", curve);
        if (path) gapl::write_path_csv(out / "path.csv", *path);
        {
            std::ofstream f(out / "lmc.svg", std::ios::trunc | std::ios::binary);
            if (!f) throw gapl::IoError("cannot write " + (out / "lmc.svg").string());
            f << svg;
        }
        std::ostringstream s;
        s << "points=" << curve.size() << '\n'
          << "loss_start=" << gapl::fmt9(curve.losses.front()) << '\n'
          << "loss_end=" << gapl::fmt9(curve.losses.back()) << '\n'
          << "barrier=" << gapl::fmt9(gapl::barrier(curve)) << '\n';
        if (path) {
            const double ends = std::max(curve.losses.front(), curve.losses.back());
            const double peak = *std::max_element(path->losses.begin(), path->losses.end());
            s << "path_points=" << path->size() << '\n'
              << "path_max_loss=" << gapl::fmt9(peak) << '\n'
              << "path_excess=" << gapl::fmt9(peak - ends) << '\n';
        }
        give(summary, s.str());
    });
}

gapl_status gapl_report(const char* run_dir, const char* out_dir, char** written) {
    return guarded([&] {
        need(run_dir, "run_dir");
        const auto files = gapl::write_report(run_dir, out_dir ? fs::path(out_dir) : fs::path());
        std::string list;
        for (const auto& f : files) list += f.string() + '\n';
        give(written, list);
    });
}

}  // extern "C"

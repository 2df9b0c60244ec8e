#include "gapl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "gapl/error.hpp"

namespace gapl {

void Dataset::validate() const {
    if (labels.empty()) throw ArgumentError("dataset is empty");
    if (features.rows() != labels.size())
        throw ArgumentError("dataset has " + std::to_string(features.rows()) + " feature rows but " +
                            std::to_string(labels.size()) + " labels");
    if (n_classes < 2) throw ArgumentError("dataset needs at least two classes");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes)
            throw LabelRangeError("label " + std::to_string(y) + " outside [0," + std::to_string(n_classes) + ")");
}

Tensor Dataset::gather(std::span<const std::uint32_t> indices) const {
    Shape shape = features.shape;
    shape[0] = indices.size();
    Tensor out(shape);
    const std::size_t row = features.row_size();
    for (std::size_t k = 0; k < indices.size(); ++k) {
        auto src = features.row(indices[k]);
        std::copy(src.begin(), src.end(), out.data.begin() + static_cast<std::ptrdiff_t>(k * row));
    }
    return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::uint32_t> indices) const {
    std::vector<int> out(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) out[k] = labels[indices[k]];
    return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(n_classes, 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

TrainTest gen_blobs(const BlobsParams& p) {
    if (p.n_classes < 2) throw ArgumentError("blobs need at least 2 classes");
    if (p.dim < 2) throw ArgumentError("blobs need dim >= 2");
    if (p.n_per_class < 2) throw ArgumentError("blobs need at least 2 samples per class");
    if (!(p.spread > 0.0) || !std::isfinite(p.spread)) throw ArgumentError("spread must be positive");
    if (p.mean_scale && (!(*p.mean_scale >= 0.0) || !std::isfinite(*p.mean_scale)))
        throw ArgumentError("mean_scale must be non-negative");

    Rng rng(p.seed);
    const double box = p.mean_scale.value_or(4.0 * p.spread);
    std::vector<double> means(p.n_classes * p.dim);
    for (double& m : means) m = rng.uniform(-box, box);

    const std::size_t n_train = p.n_per_class * 4 / 5;
    const std::size_t n_test = p.n_per_class - n_train;
    TrainTest out;
    out.train.features = Tensor({p.n_classes * n_train, p.dim});
    out.test.features = Tensor({p.n_classes * n_test, p.dim});
    out.train.n_classes = out.test.n_classes = p.n_classes;
    for (std::size_t c = 0; c < p.n_classes; ++c) {
        const double* mu = means.data() + c * p.dim;
        for (std::size_t s = 0; s < p.n_per_class; ++s) {
            const bool is_train = s < n_train;
            Dataset& ds = is_train ? out.train : out.test;
            const std::size_t r = is_train ? c * n_train + s : c * n_test + (s - n_train);
            auto row = ds.features.row(r);
            for (std::size_t d = 0; d < p.dim; ++d) row[d] = mu[d] + p.spread * rng.normal();
        }
        out.train.labels.insert(out.train.labels.end(), n_train, static_cast<int>(c));
        out.test.labels.insert(out.test.labels.end(), n_test, static_cast<int>(c));
    }
    return out;
}

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

Dataset load_raw(const std::filesystem::path& features, const std::filesystem::path& labels, const RawMeta& meta) {
    if (meta.sample_shape.empty() || shape_size(meta.sample_shape) == 0)
        throw ArgumentError("raw metadata needs a non-empty sample shape");
    if (meta.count == 0) throw ArgumentError("raw metadata count must be positive");
    if (meta.n_classes < 2 || meta.n_classes > 256) throw ArgumentError("raw metadata n_classes must be in [2,256]");
    const std::size_t record = shape_size(meta.sample_shape);

    const auto fbytes = read_bytes(features);
    const auto lbytes = read_bytes(labels);
    if (lbytes.size() < meta.count)
        throw FormatError(labels.string() + ": truncated at byte offset " + std::to_string(lbytes.size()) +
                              ", expected " + std::to_string(meta.count) + " label bytes",
                          static_cast<long long>(lbytes.size()));
    if (lbytes.size() > meta.count)
        throw FormatError(labels.string() + ": unexpected data at byte offset " + std::to_string(meta.count),
                          static_cast<long long>(meta.count));
    if (fbytes.size() < meta.count * record)
        throw FormatError(features.string() + ": truncated at byte offset " + std::to_string(fbytes.size()) +
                              " (record " + std::to_string(fbytes.size() / record) + "), expected " +
                              std::to_string(meta.count * record) + " bytes",
                          static_cast<long long>(fbytes.size()));
    if (fbytes.size() > meta.count * record)
        throw FormatError(features.string() + ": unexpected data at byte offset " +
                              std::to_string(meta.count * record),
                          static_cast<long long>(meta.count * record));

    Dataset ds;
    Shape shape{meta.count};
    shape.insert(shape.end(), meta.sample_shape.begin(), meta.sample_shape.end());
    ds.features = Tensor(shape);
    for (std::size_t k = 0; k < fbytes.size(); ++k) ds.features.data[k] = static_cast<double>(fbytes[k]) / 255.0;
    ds.n_classes = meta.n_classes;
    ds.labels.resize(meta.count);
    for (std::size_t k = 0; k < meta.count; ++k) {
        if (lbytes[k] >= meta.n_classes)
            throw FormatError(labels.string() + ": label " + std::to_string(lbytes[k]) + " at byte offset " +
                                  std::to_string(k) + " is not below n_classes",
                              static_cast<long long>(k));
        ds.labels[k] = lbytes[k];
    }
    return ds;
}

Quantization quantization_range(std::span<const Dataset* const> sets) {
    Quantization q{0.0, 0.0};
    bool first = true;
    for (const Dataset* ds : sets) {
        for (double v : ds->features.data) {
            if (first) {
                q.lo = q.hi = v;
                first = false;
            }
            q.lo = std::min(q.lo, v);
            q.hi = std::max(q.hi, v);
        }
    }
    if (q.hi <= q.lo) q.hi = q.lo + 1.0;
    return q;
}

void save_raw(const Dataset& ds, const std::filesystem::path& features, const std::filesystem::path& labels,
              const Quantization& q) {
    ds.validate();
    if (ds.n_classes > 256) throw ArgumentError("raw format holds at most 256 classes");
    std::vector<unsigned char> fbytes(ds.features.size());
    const double scale = 255.0 / (q.hi - q.lo);
    for (std::size_t k = 0; k < fbytes.size(); ++k) {
        const double v = std::round((ds.features.data[k] - q.lo) * scale);
        fbytes[k] = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
    }
    std::vector<unsigned char> lbytes(ds.labels.begin(), ds.labels.end());
    write_bytes(features, fbytes);
    write_bytes(labels, lbytes);
}

std::vector<std::uint32_t> TaskSequence::pool(std::size_t task) const {
    if (task >= task_indices.size()) throw ArgumentError("task " + std::to_string(task) + " out of range");
    if (!joint) return task_indices[task];
    std::vector<std::uint32_t> out;
    for (std::size_t k = 0; k <= task; ++k) out.insert(out.end(), task_indices[k].begin(), task_indices[k].end());
    return out;
}

namespace {

// Cumulative task boundaries T_1..T_{k-1} in samples.
std::vector<std::size_t> cumulative_targets(const std::vector<double>& fractions, std::size_t n) {
    std::vector<std::size_t> cum;
    std::size_t total = 0;
    for (std::size_t i = 0; i + 1 < fractions.size(); ++i) {
        total += static_cast<std::size_t>(std::llround(fractions[i] * static_cast<double>(n) / 100.0));
        total = std::min(total, n);
        cum.push_back(total);
    }
    return cum;
}

}  // namespace

TaskSequence split_tasks(const Dataset& train, const std::vector<double>& fractions, bool joint,
                         std::uint64_t seed, bool stratified) {
    train.validate();
    if (fractions.empty()) throw ArgumentError("at least one task fraction is required");
    double sum = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0) || f > 100.0 || !std::isfinite(f))
            throw ArgumentError("task fractions must lie in (0, 100]");
        sum += f;
    }
    if (std::abs(sum - 100.0) > 1e-9) throw ArgumentError("task fractions must sum to 100");

    const std::size_t n = train.size();
    const std::size_t k = fractions.size();
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    Rng rng(seed);
    rng.shuffle(std::span(perm));

    const auto cum = cumulative_targets(fractions, n);
    TaskSequence seq;
    seq.fractions = fractions;
    seq.joint = joint;
    seq.base_size = n;
    seq.task_indices.assign(k, {});

    if (!stratified) {
        std::size_t start = 0;
        for (std::size_t t = 0; t < k; ++t) {
            const std::size_t end = t + 1 < k ? cum[t] : n;
            seq.task_indices[t].assign(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                       perm.begin() + static_cast<std::ptrdiff_t>(end));
            start = end;
        }
    } else {
        // Members of each class in permutation order.
        std::vector<std::vector<std::uint32_t>> by_class(train.n_classes);
        for (std::uint32_t idx : perm) by_class[static_cast<std::size_t>(train.labels[idx])].push_back(idx);
        const std::size_t nc = train.n_classes;

        // cut[c][t]: number of class-c members assigned to tasks 0..t-1.
        std::vector<std::vector<std::size_t>> cut(nc, std::vector<std::size_t>(k + 1, 0));
        for (std::size_t c = 0; c < nc; ++c) cut[c][k] = by_class[c].size();
        double cum_fraction = 0.0;
        for (std::size_t t = 0; t + 1 < k; ++t) {
            cum_fraction += fractions[t];
            // Floor of each class's exact share, then largest remainders make up the total.
            std::vector<double> remainder(nc);
            std::size_t assigned = 0;
            for (std::size_t c = 0; c < nc; ++c) {
                const double exact = cum_fraction * static_cast<double>(by_class[c].size()) / 100.0;
                const double fl = std::floor(exact + 1e-9);
                cut[c][t + 1] = static_cast<std::size_t>(fl);
                remainder[c] = exact - fl;
                assigned += cut[c][t + 1];
            }
            std::vector<std::size_t> order(nc);
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
            std::size_t guard = 0;
            while (assigned < cum[t] && guard++ < 4 * n) {
                for (std::size_t c : order) {
                    if (assigned == cum[t]) break;
                    if (cut[c][t + 1] < by_class[c].size()) {
                        ++cut[c][t + 1];
                        ++assigned;
                    }
                }
            }
            guard = 0;
            while (assigned > cum[t] && guard++ < 4 * n) {
                for (auto it = order.rbegin(); it != order.rend(); ++it) {
                    if (assigned == cum[t]) break;
                    if (cut[*it][t + 1] > cut[*it][t]) {
                        --cut[*it][t + 1];
                        --assigned;
                    }
                }
            }
            for (std::size_t c = 0; c < nc; ++c) cut[c][t + 1] = std::max(cut[c][t + 1], cut[c][t]);
        }
        for (std::size_t c = 0; c < nc; ++c)
            for (std::size_t t = 0; t < k; ++t)
                seq.task_indices[t].insert(seq.task_indices[t].end(),
                                           by_class[c].begin() + static_cast<std::ptrdiff_t>(cut[c][t]),
                                           by_class[c].begin() + static_cast<std::ptrdiff_t>(cut[c][t + 1]));
    }
    for (auto& task : seq.task_indices) {
        if (task.empty()) throw ArgumentError("split produced an empty task; increase its fraction");
        std::sort(task.begin(), task.end());
    }
    return seq;
}

BatchIterator::BatchIterator(std::vector<std::uint32_t> pool, std::size_t batch_size, std::size_t epochs, Rng& rng)
    : order_(std::move(pool)), batch_size_(batch_size), epochs_(epochs), rng_(rng) {
    if (order_.empty()) throw ArgumentError("batch pool is empty");
    if (batch_size_ == 0) throw ArgumentError("batch size must be positive");
}

std::size_t BatchIterator::batches_per_epoch() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

std::optional<std::span<const std::uint32_t>> BatchIterator::next() {
    if (epoch_ >= epochs_) return std::nullopt;
    if (!shuffled_) {
        rng_.shuffle(std::span(order_));
        shuffled_ = true;
        pos_ = 0;
    }
    const std::size_t len = std::min(batch_size_, order_.size() - pos_);
    std::span<const std::uint32_t> batch(order_.data() + pos_, len);
    pos_ += len;
    if (pos_ == order_.size()) {
        ++epoch_;
        shuffled_ = false;
    }
    return batch;
}

}  // namespace gapl

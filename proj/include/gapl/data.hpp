#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "gapl/rng.hpp"
#include "gapl/tensor.hpp"

namespace gapl {

// Immutable labelled sample set. features is [N, ...sample shape].
struct Dataset {
    Tensor features;
    std::vector<int> labels;
    std::size_t n_classes = 0;

    std::size_t size() const { return labels.size(); }
    Shape sample_shape() const { return Shape(features.shape.begin() + 1, features.shape.end()); }

    // Throws ArgumentError on empty sets, label/feature count mismatch or labels out of range.
    void validate() const;
    // Rows selected by `indices`, in that order.
    Tensor gather(std::span<const std::uint32_t> indices) const;
    std::vector<int> gather_labels(std::span<const std::uint32_t> indices) const;
    std::vector<std::size_t> class_counts() const;
};

struct BlobsParams {
    std::uint64_t seed = 1;
    std::size_t n_classes = 8;
    std::size_t n_per_class = 250;
    std::size_t dim = 32;
    // Standard deviation of the within-class noise.
    double spread = 8.0;
    // Class means are drawn uniformly from [-mean_scale, +mean_scale]^dim.
    // When unset, the box scales with the noise as [-4 spread, 4 spread].
    std::optional<double> mean_scale;
};

struct TrainTest {
    Dataset train;
    Dataset test;
};

// Gaussian class clusters. Per class, the first floor(0.8 n) draws go to the
// training set and the rest to the test set; both are ordered by class.
TrainTest gen_blobs(const BlobsParams& p);

// Raw record files: labels are one unsigned byte per record, features are
// prod(sample_shape) unsigned bytes per record. Features load as byte / 255.
struct RawMeta {
    Shape sample_shape;
    std::size_t count = 0;
    std::size_t n_classes = 0;
};
Dataset load_raw(const std::filesystem::path& features, const std::filesystem::path& labels, const RawMeta& meta);

// Affine byte quantization x -> round(255 (x - lo) / (hi - lo)), clamped.
struct Quantization {
    double lo = 0.0, hi = 1.0;
};
Quantization quantization_range(std::span<const Dataset* const> sets);
void save_raw(const Dataset& ds, const std::filesystem::path& features, const std::filesystem::path& labels,
              const Quantization& q);

// A-B / A-B* protocol. Index sets are disjoint; when `joint` is set, task k
// trains on the union of tasks 0..k.
struct TaskSequence {
    std::vector<std::vector<std::uint32_t>> task_indices;
    std::vector<double> fractions;
    bool joint = false;
    std::size_t base_size = 0;

    std::size_t n_tasks() const { return task_indices.size(); }
    std::vector<std::uint32_t> pool(std::size_t task) const;
};

// Tasks 0..k-2 get round(f_i N / 100) samples, the last task the remainder.
// Stratified splits additionally keep every class within one sample of its
// proportional share in every task.
TaskSequence split_tasks(const Dataset& train, const std::vector<double>& fractions, bool joint,
                         std::uint64_t seed, bool stratified = true);

// Per-epoch Fisher-Yates reshuffle of `pool`, cut into batches of
// `batch_size`; the short final batch of each epoch is kept.
class BatchIterator {
public:
    BatchIterator(std::vector<std::uint32_t> pool, std::size_t batch_size, std::size_t epochs, Rng& rng);

    // Empty optional once all epochs are consumed.
    std::optional<std::span<const std::uint32_t>> next();
    std::size_t batches_per_epoch() const;
    std::size_t total_batches() const { return batches_per_epoch() * epochs_; }
    std::size_t epoch() const { return epoch_; }

private:
    std::vector<std::uint32_t> order_;
    std::size_t batch_size_;
    std::size_t epochs_;
    Rng& rng_;
    std::size_t epoch_ = 0;
    std::size_t pos_ = 0;
    bool shuffled_ = false;
};

}  // namespace gapl

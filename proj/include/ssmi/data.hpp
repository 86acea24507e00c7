#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssmi/errors.hpp"
#include "ssmi/rng.hpp"

namespace ssmi {

enum class Split { train, held_out };

struct SyntheticSample {
    std::vector<double> raw_visual;     // [d_raw]
    std::vector<std::uint32_t> tokens;  // caption, length T; ids < vocab
    Split split = Split::train;
};

struct DatasetSpec {
    std::size_t size = 512;
    std::size_t d_raw = 16;
    std::size_t seq_len = 6;  // caption length T
    std::size_t vocab = 4;
    std::uint64_t seed = 7;
    double noise_sigma = 0.0;

    void validate() const;
    bool operator==(const DatasetSpec&) const = default;
};

struct Dataset {
    DatasetSpec spec;
    std::vector<SyntheticSample> samples;
    std::vector<std::size_t> train_idx, held_out_idx;
    // Projection directions w_t, one per caption position (row-major T x d_raw).
    std::vector<double> directions;

    std::vector<const SyntheticSample*> split_ptrs(Split s) const;
};

// Standard normal CDF via the Abramowitz-Stegun 7.1.26 rational erf
// approximation (|error| < 1.5e-7). This approximation, not libm erf, defines
// the token generator so every implementation buckets identically.
double standard_normal_cdf(double z);

// raw_visual ~ seeded standard normal; tokens[t] is the equal-probability
// standard-normal bucket of <w_t, raw_visual>. The first min(T, d_raw)
// directions are orthonormalized so captions carry independent positions;
// any excess directions are only normalized. Last 10% of samples (by index)
// form the held-out split.
Dataset generate(const DatasetSpec& spec);

// raw_visual' = raw_visual + sigma * seeded standard normal; tokens stay clean.
SyntheticSample add_noise(const SyntheticSample& s, double sigma, std::uint64_t seed);

// Seeded Fisher-Yates shuffle per epoch; iteration order is a pure function
// of (seed, epoch). One epoch emits every index exactly once, including a
// final short batch.
class BatchIterator {
public:
    BatchIterator(const Dataset& ds, std::vector<std::size_t> indices, std::size_t batch_size,
                  std::uint64_t seed);
    // All samples (reproducibility audits); training uses the train split.
    BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed);

    std::vector<const SyntheticSample*> next();
    std::size_t epoch() const { return epoch_; }

private:
    void reshuffle();
    const Dataset& ds_;
    std::vector<std::size_t> indices_;
    std::size_t batch_size_;
    Rng rng_;
    std::size_t pos_ = 0;
    std::size_t epoch_ = 0;
};

// Dataset round-trip through the named-tensor container (see container.hpp).
void export_dataset(const Dataset& ds, const std::string& path);
Dataset import_dataset(const std::string& path);

}  // namespace ssmi

#include "ssmi/data.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "ssmi/container.hpp"

namespace ssmi {

void DatasetSpec::validate() const {
    if (size < 1) throw ContractError("dataset spec: size must be >= 1");
    if (d_raw < 1 || seq_len < 1 || vocab < 1) {
        throw ContractError("dataset spec: d_raw, seq_len, vocab must be >= 1");
    }
    if (noise_sigma < 0.0) throw ContractError("dataset spec: noise_sigma must be >= 0");
}

std::vector<const SyntheticSample*> Dataset::split_ptrs(Split s) const {
    std::vector<const SyntheticSample*> out;
    const auto& idx = s == Split::train ? train_idx : held_out_idx;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(&samples[i]);
    return out;
}

double standard_normal_cdf(double z) {
    // erf via A&S 7.1.26; the constants below are the definition of the
    // bucketing, shared across implementations.
    const double x = std::abs(z) / std::sqrt(2.0);
    const double t = 1.0 / (1.0 + 0.3275911 * x);
    const double poly =
        t * (0.254829592 +
             t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    const double erf_abs = 1.0 - poly * std::exp(-x * x);
    return 0.5 * (1.0 + (z < 0 ? -erf_abs : erf_abs));
}

namespace {

// Rows of `dirs` (T x d_raw): first min(T, d_raw) rows orthonormalized by
// modified Gram-Schmidt, the rest normalized only.
void prepare_directions(std::vector<double>& dirs, std::size_t t_len, std::size_t d_raw) {
    auto row_dot = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d_raw; ++k) s += dirs[i * d_raw + k] * dirs[j * d_raw + k];
        return s;
    };
    const std::size_t ortho = std::min(t_len, d_raw);
    for (std::size_t i = 0; i < t_len; ++i) {
        if (i < ortho) {
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t j = 0; j < i; ++j) {
                    const double proj = row_dot(j, i);
                    for (std::size_t k = 0; k < d_raw; ++k)
                        dirs[i * d_raw + k] -= proj * dirs[j * d_raw + k];
                }
            }
        }
        const double norm = std::sqrt(row_dot(i, i));
        for (std::size_t k = 0; k < d_raw; ++k) dirs[i * d_raw + k] /= norm;
    }
}

std::uint32_t bucket(double z, std::size_t vocab) {
    const double u = standard_normal_cdf(z);
    auto b = static_cast<long long>(std::floor(u * static_cast<double>(vocab)));
    b = std::max(0ll, std::min(b, static_cast<long long>(vocab) - 1));
    return static_cast<std::uint32_t>(b);
}

}  // namespace

Dataset generate(const DatasetSpec& spec) {
    spec.validate();
    Dataset ds;
    ds.spec = spec;

    Rng root(spec.seed);
    Rng rdir = root.fork(1), rsample = root.fork(2);

    ds.directions.resize(spec.seq_len * spec.d_raw);
    for (auto& x : ds.directions) x = rdir.normal();
    prepare_directions(ds.directions, spec.seq_len, spec.d_raw);

    ds.samples.resize(spec.size);
    const std::size_t held = spec.size >= 2 ? std::max<std::size_t>(1, spec.size / 10) : 0;
    const std::size_t train_count = spec.size - held;
    for (std::size_t i = 0; i < spec.size; ++i) {
        SyntheticSample& s = ds.samples[i];
        s.raw_visual.resize(spec.d_raw);
        for (auto& x : s.raw_visual) x = rsample.normal();
        s.tokens.resize(spec.seq_len);
        for (std::size_t t = 0; t < spec.seq_len; ++t) {
            double z = 0.0;
            for (std::size_t k = 0; k < spec.d_raw; ++k)
                z += ds.directions[t * spec.d_raw + k] * s.raw_visual[k];
            s.tokens[t] = bucket(z, spec.vocab);
        }
        s.split = i < train_count ? Split::train : Split::held_out;
        (s.split == Split::train ? ds.train_idx : ds.held_out_idx).push_back(i);
    }
    return ds;
}

SyntheticSample add_noise(const SyntheticSample& s, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw ContractError("add_noise: sigma must be >= 0");
    SyntheticSample out = s;
    if (sigma == 0.0) return out;
    Rng rng(seed);
    for (auto& x : out.raw_visual) x += sigma * rng.normal();
    return out;
}

BatchIterator::BatchIterator(const Dataset& ds, std::vector<std::size_t> indices,
                             std::size_t batch_size, std::uint64_t seed)
    : ds_(ds), indices_(std::move(indices)), batch_size_(batch_size), rng_(seed) {
    if (batch_size_ < 1) throw ContractError("batches: batch_size must be >= 1");
    if (indices_.empty()) throw ContractError("batches: empty index set");
    reshuffle();
}

BatchIterator::BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed)
    : BatchIterator(ds,
                    [&] {
                        std::vector<std::size_t> all(ds.samples.size());
                        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
                        return all;
                    }(),
                    batch_size, seed) {}

void BatchIterator::reshuffle() {
    for (std::size_t i = indices_.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng_.below(i));
        std::swap(indices_[i - 1], indices_[j]);
    }
    pos_ = 0;
}

std::vector<const SyntheticSample*> BatchIterator::next() {
    if (pos_ >= indices_.size()) {
        ++epoch_;
        reshuffle();
    }
    const std::size_t take = std::min(batch_size_, indices_.size() - pos_);
    std::vector<const SyntheticSample*> batch;
    batch.reserve(take);
    for (std::size_t i = 0; i < take; ++i) batch.push_back(&ds_.samples[indices_[pos_ + i]]);
    pos_ += take;
    return batch;
}

void export_dataset(const Dataset& ds, const std::string& path) {
    Container c;
    nlohmann::json meta;
    meta["kind"] = "ssmi-dataset";
    meta["spec"] = {{"size", ds.spec.size},       {"d_raw", ds.spec.d_raw},
                    {"seq_len", ds.spec.seq_len}, {"vocab", ds.spec.vocab},
                    {"seed", ds.spec.seed},       {"noise_sigma", ds.spec.noise_sigma}};
    c.meta_json = meta.dump();

    NamedArray raw{"raw_visual", {ds.spec.size, ds.spec.d_raw}, {}};
    NamedArray tok{"tokens", {ds.spec.size, ds.spec.seq_len}, {}};
    NamedArray dirs{"directions", {ds.spec.seq_len, ds.spec.d_raw}, ds.directions};
    raw.data.reserve(ds.spec.size * ds.spec.d_raw);
    tok.data.reserve(ds.spec.size * ds.spec.seq_len);
    for (const auto& s : ds.samples) {
        raw.data.insert(raw.data.end(), s.raw_visual.begin(), s.raw_visual.end());
        for (auto id : s.tokens) tok.data.push_back(static_cast<double>(id));
    }
    c.tensors = {std::move(raw), std::move(tok), std::move(dirs)};
    write_container(path, c);
}

Dataset import_dataset(const std::string& path) {
    Container c = read_container(path);
    nlohmann::json meta = nlohmann::json::parse(c.meta_json, nullptr, false);
    if (meta.is_discarded() || meta.value("kind", "") != "ssmi-dataset") {
        throw FormatError(8, "metadata is not an ssmi-dataset record");
    }
    DatasetSpec spec;
    const auto& js = meta.at("spec");
    spec.size = js.at("size").get<std::size_t>();
    spec.d_raw = js.at("d_raw").get<std::size_t>();
    spec.seq_len = js.at("seq_len").get<std::size_t>();
    spec.vocab = js.at("vocab").get<std::size_t>();
    spec.seed = js.at("seed").get<std::uint64_t>();
    spec.noise_sigma = js.at("noise_sigma").get<double>();

    const NamedArray* raw = nullptr;
    const NamedArray* tok = nullptr;
    const NamedArray* dirs = nullptr;
    for (const auto& t : c.tensors) {
        if (t.name == "raw_visual") raw = &t;
        if (t.name == "tokens") tok = &t;
        if (t.name == "directions") dirs = &t;
    }
    if (!raw || !tok || !dirs) throw FormatError(8, "dataset container missing tensors");

    Dataset ds;
    ds.spec = spec;
    ds.directions = dirs->data;
    ds.samples.resize(spec.size);
    const std::size_t held = spec.size >= 2 ? std::max<std::size_t>(1, spec.size / 10) : 0;
    const std::size_t train_count = spec.size - held;
    for (std::size_t i = 0; i < spec.size; ++i) {
        SyntheticSample& s = ds.samples[i];
        s.raw_visual.assign(raw->data.begin() + i * spec.d_raw,
                            raw->data.begin() + (i + 1) * spec.d_raw);
        s.tokens.resize(spec.seq_len);
        for (std::size_t t = 0; t < spec.seq_len; ++t) {
            s.tokens[t] = static_cast<std::uint32_t>(tok->data[i * spec.seq_len + t]);
        }
        s.split = i < train_count ? Split::train : Split::held_out;
        (s.split == Split::train ? ds.train_idx : ds.held_out_idx).push_back(i);
    }
    return ds;
}

}  // namespace ssmi

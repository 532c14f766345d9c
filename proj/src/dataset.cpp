#include "oxyspec/dataset.hpp"

#include "oxyspec/binary_io.hpp"
#include "oxyspec/error.hpp"
#include "oxyspec/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <thread>

namespace oxyspec {

namespace {

constexpr char kDatasetMagic[4] = {'O', 'X', 'D', 'S'};
constexpr std::size_t kMaxAttempts = 1000;

std::vector<std::size_t> permutation(std::size_t n, Rng& rng)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i)
        std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
}

// FNV-1a over the raw bytes of every value fed in.
class Digest {
public:
    template <typename T>
    Digest& add(const T& v)
    {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const unsigned char*>(&v);
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
        return *this;
    }
    Digest& add(const Range& r) { return add(r.lo).add(r.hi); }
    std::uint64_t value() const noexcept { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::uint64_t generation_digest(std::size_t n, const GenerationConfig& cfg, std::uint64_t seed)
{
    Digest d;
    d.add(std::uint64_t{n}).add(seed);
    for (const auto& p : cfg.priors.layers)
        d.add(p.oxygenation).add(p.blood_volume_fraction).add(p.thickness)
            .add(p.scatter_amplitude).add(p.scatter_power).add(p.anisotropy)
            .add(p.refractive_index);
    d.add(cfg.grid_nx).add(cfg.grid_ny).add(cfg.voxel_size);
    const auto& t = cfg.transport;
    d.add(t.n_photons).add(t.roulette_threshold).add(t.roulette_survival_factor)
        .add(t.max_path_length).add(static_cast<int>(t.lateral));
    for (double w : cfg.camera.wavelengths)
        d.add(w);
    for (Eigen::Index i = 0; i < cfg.camera.response.size(); ++i)
        d.add(cfg.camera.response.data()[i]);
    for (double v : cfg.camera.light)
        d.add(v);
    for (double v : cfg.camera.transmission)
        d.add(v);
    return d.value();
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn)
{
    workers = static_cast<unsigned>(std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++)
                fn(i);
        });
}

void add_noise_and_renormalize(std::span<float> row, double snr_db, Rng& rng)
{
    for (auto& v : row)
        v = static_cast<float>(v + noise_sigma(v, snr_db) * rng.normal());
    auc_normalize_inplace(row);
}

} // namespace

LabeledSample Dataset::sample(std::size_t i) const
{
    LabeledSample s;
    const auto r = row(i);
    s.spectrum.values.assign(r.begin(), r.end());
    s.spectrum.normalized = true;
    s.oxygenation = labels[i];
    s.domain = domains[i];
    return s;
}

void Dataset::push_back(std::span<const float> f, float label, Domain domain)
{
    if (f.size() != feature_count)
        throw ShapeError("dataset: sample has " + std::to_string(f.size()) + " features, expected " +
                         std::to_string(feature_count));
    features.insert(features.end(), f.begin(), f.end());
    labels.push_back(label);
    domains.push_back(domain);
}

void Dataset::push_back(const LabeledSample& s)
{
    std::vector<float> f(s.spectrum.values.begin(), s.spectrum.values.end());
    push_back(f, static_cast<float>(s.oxygenation), s.domain);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const
{
    Dataset out;
    out.feature_count = feature_count;
    out.provenance = provenance;
    out.features.reserve(indices.size() * feature_count);
    out.labels.reserve(indices.size());
    out.domains.reserve(indices.size());
    for (auto i : indices) {
        if (i >= size())
            throw DomainError("dataset: subset index out of range");
        const auto r = row(i);
        out.features.insert(out.features.end(), r.begin(), r.end());
        out.labels.push_back(labels[i]);
        out.domains.push_back(domains[i]);
    }
    return out;
}

Eigen::MatrixXd Dataset::feature_matrix() const
{
    Eigen::MatrixXd m(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(feature_count));
    for (std::size_t i = 0; i < size(); ++i)
        for (std::size_t j = 0; j < feature_count; ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                features[i * feature_count + j];
    return m;
}

void Dataset::validate() const
{
    if (feature_count == 0)
        throw DataError("dataset: feature_count must be > 0");
    if (empty())
        throw DataError("dataset: empty");
    if (features.size() != size() * feature_count || domains.size() != size())
        throw DataError("dataset: ragged storage");
    for (auto d : domains)
        if (d != Domain::simulated && d != Domain::real)
            throw DataError("dataset: invalid domain label");
}

bool Dataset::identical(const Dataset& o) const noexcept
{
    auto same_bytes = [](const auto& a, const auto& b) {
        return a.size() == b.size() &&
               (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(a[0])) == 0);
    };
    return feature_count == o.feature_count && provenance == o.provenance &&
           same_bytes(features, o.features) && same_bytes(labels, o.labels) &&
           same_bytes(domains, o.domains);
}

bool generate_sample(const GenerationConfig& cfg, std::uint64_t seed, std::size_t index,
                     std::size_t attempt, std::span<float> features, float& label)
{
    const std::uint64_t tissue_seed = derive_seed(seed, stream_id("sample"), index, attempt);
    const auto tissue = sample_tissue(cfg.priors, tissue_seed);
    const auto grid = VoxelGrid::for_tissue(tissue, cfg.grid_nx, cfg.grid_ny, cfg.voxel_size);
    auto transport = cfg.transport;
    transport.workers = 1;
    const auto spectrum = simulate_spectrum(tissue, grid, transport,
                                            derive_seed(tissue_seed, stream_id("transport")),
                                            cfg.camera.wavelengths);
    if (spectrum.any_degenerate())
        return false;
    auto bands = adapt_to_camera(spectrum, cfg.camera);
    if (!(band_area(bands.values) > 0.0))
        return false;
    bands = auc_normalize(bands);
    if (features.size() != bands.values.size())
        throw ShapeError("generate_sample: feature buffer does not match camera bands");
    for (std::size_t b = 0; b < bands.values.size(); ++b)
        features[b] = static_cast<float>(bands.values[b]);
    label = static_cast<float>(label_oxygenation(tissue, spectrum.penetration_depth));
    return true;
}

GenerationReport generate_dataset(std::size_t n, const GenerationConfig& cfg, std::uint64_t seed)
{
    if (n < 1)
        throw ConfigError("generate_dataset: n must be >= 1");
    cfg.priors.validate();
    cfg.transport.validate();
    cfg.camera.validate();

    const std::size_t bands = cfg.camera.bands();
    GenerationReport report;
    auto& ds = report.dataset;
    ds.feature_count = bands;
    ds.features.resize(n * bands);
    ds.labels.resize(n);
    ds.domains.assign(n, Domain::simulated);
    ds.provenance = generation_digest(n, cfg, seed);

    std::vector<std::size_t> drops(n, 0);
    std::atomic<std::size_t> done{0};
    parallel_for(n, cfg.workers, [&](std::size_t i) {
        std::size_t attempt = 0;
        while (!generate_sample(cfg, seed, i, attempt, ds.row(i), ds.labels[i])) {
            if (++attempt >= kMaxAttempts)
                throw NumericError("generate_dataset: sample " + std::to_string(i) +
                                   " degenerate after " + std::to_string(kMaxAttempts) +
                                   " draws");
        }
        drops[i] = attempt;
        const auto finished = ++done;
        if (cfg.progress)
            cfg.progress(finished);
    });
    report.dropped = std::accumulate(drops.begin(), drops.end(), std::size_t{0});
    return report;
}

void SplitSpec::validate() const
{
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("split: train fraction must lie in (0,1)");
    if (strat_bins < 1)
        throw ConfigError("split: strat_bins must be >= 1");
}

Split stratified_split(const Dataset& ds, const SplitSpec& spec)
{
    spec.validate();
    ds.validate();
    std::vector<std::vector<std::size_t>> bins(static_cast<std::size_t>(spec.strat_bins));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (!ds.labeled(i))
            throw DataError("stratified_split: sample " + std::to_string(i) + " is unlabeled");
        const double label = std::clamp(static_cast<double>(ds.labels[i]), 0.0, 1.0);
        const auto b = std::min(static_cast<std::size_t>(label * spec.strat_bins),
                                bins.size() - 1);
        bins[b].push_back(i);
    }
    Split split;
    for (std::size_t b = 0; b < bins.size(); ++b) {
        auto& members = bins[b];
        if (members.empty())
            continue;
        if (members.size() < 2)
            throw DataError("stratified_split: oxygenation bin " + std::to_string(b) +
                            " holds a single sample");
        Rng rng(derive_seed(spec.seed, stream_id("split"), b));
        const auto order = permutation(members.size(), rng);
        auto n_train = static_cast<std::size_t>(
            std::llround(spec.train_fraction * static_cast<double>(members.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
        for (std::size_t k = 0; k < order.size(); ++k)
            (k < n_train ? split.train_indices : split.val_indices).push_back(members[order[k]]);
    }
    std::sort(split.train_indices.begin(), split.train_indices.end());
    std::sort(split.val_indices.begin(), split.val_indices.end());
    split.train = ds.subset(split.train_indices);
    split.val = ds.subset(split.val_indices);
    return split;
}

Split random_split(const Dataset& ds, double train_fraction, std::uint64_t seed)
{
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("split: train fraction must lie in (0,1)");
    if (ds.size() < 2)
        throw DataError("random_split: need at least two samples");
    Rng rng(derive_seed(seed, stream_id("random_split")));
    const auto order = permutation(ds.size(), rng);
    auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(ds.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, ds.size() - 1);
    Split split;
    split.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(split.train_indices.begin(), split.train_indices.end());
    std::sort(split.val_indices.begin(), split.val_indices.end());
    split.train = ds.subset(split.train_indices);
    split.val = ds.subset(split.val_indices);
    return split;
}

void augment_noise_inplace(Dataset& ds, double snr_db, std::uint64_t epoch_seed)
{
    if (std::isinf(snr_db) && snr_db > 0)
        return;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        Rng rng(derive_seed(epoch_seed, stream_id("augment"), i));
        add_noise_and_renormalize(ds.row(i), snr_db, rng);
    }
}

Dataset augment_noise(const Dataset& ds, double snr_db, std::uint64_t epoch_seed)
{
    Dataset out = ds;
    augment_noise_inplace(out, snr_db, epoch_seed);
    return out;
}

DistortionSpec DistortionSpec::identity()
{
    DistortionSpec s;
    s.drift_tilt = 0.0;
    s.drift_wave_amplitude = 0.0;
    s.drift_jitter = 0.0;
    s.crosstalk = 0.0;
    s.noise_snr_db = std::numeric_limits<double>::infinity();
    return s;
}

Eigen::MatrixXd DistortionSpec::mixing(std::size_t bands) const
{
    const auto n = static_cast<Eigen::Index>(bands);
    Eigen::MatrixXd m;
    if (crosstalk_matrix.size() > 0) {
        m = crosstalk_matrix;
    } else {
        if (!(crosstalk >= 0.0 && crosstalk <= 1.0))
            throw ConfigError("distortion: crosstalk must lie in [0,1]");
        m = Eigen::MatrixXd::Identity(n, n) * (1.0 - crosstalk);
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool left = i > 0;
            const bool right = i + 1 < n;
            const int neighbours = int(left) + int(right);
            if (neighbours == 0) {
                m(i, i) = 1.0;
                continue;
            }
            if (left)
                m(i, i - 1) = crosstalk / neighbours;
            if (right)
                m(i, i + 1) = crosstalk / neighbours;
        }
    }
    if (m.rows() != n || m.cols() != n)
        throw ConfigError("distortion: crosstalk matrix must be bands x bands");
    for (Eigen::Index i = 0; i < n; ++i) {
        if ((m.row(i).array() < 0.0).any() || std::abs(m.row(i).sum() - 1.0) > 1e-9)
            throw ConfigError("distortion: crosstalk matrix must be row-stochastic (row " +
                              std::to_string(i) + ")");
    }
    return m;
}

void DistortionSpec::validate(std::size_t bands) const
{
    if (!std::isfinite(drift_tilt) || !std::isfinite(drift_wave_amplitude) ||
        !std::isfinite(drift_jitter) || drift_jitter < 0.0)
        throw ConfigError("distortion: drift parameters must be finite, jitter >= 0");
    if (!(drift_wave_period > 0.0))
        throw ConfigError("distortion: drift wave period must be > 0");
    if (!(noise_snr_db > 0.0))
        throw ConfigError("distortion: noise SNR must be > 0 dB");
    mixing(bands);
}

PseudoRealSet make_pseudo_real(const Dataset& ds, const DistortionSpec& spec)
{
    ds.validate();
    spec.validate(ds.feature_count);
    const auto bands = ds.feature_count;
    const auto mix = spec.mixing(bands);

    PseudoRealSet out;
    out.data = ds;
    out.hidden_labels = ds.labels;
    std::fill(out.data.labels.begin(), out.data.labels.end(),
              std::numeric_limits<float>::quiet_NaN());
    std::fill(out.data.domains.begin(), out.data.domains.end(), Domain::real);

    Eigen::VectorXd v(static_cast<Eigen::Index>(bands));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        Rng rng(derive_seed(spec.seed, stream_id("distortion"), i));
        const double tilt = spec.drift_tilt + spec.drift_jitter * rng.normal();
        const auto src = ds.row(i);
        for (std::size_t b = 0; b < bands; ++b) {
            const double x = bands > 1 ? static_cast<double>(b) / (bands - 1) - 0.5 : 0.0;
            // exp keeps the drift strictly positive.
            const double drift =
                std::exp(tilt * x + spec.drift_wave_amplitude *
                                        std::sin(2.0 * std::numbers::pi * b / spec.drift_wave_period));
            v(static_cast<Eigen::Index>(b)) = src[b] * drift;
        }
        const Eigen::VectorXd mixed = mix * v;
        auto dst = out.data.row(i);
        for (std::size_t b = 0; b < bands; ++b) {
            double value = mixed(static_cast<Eigen::Index>(b));
            if (std::isfinite(spec.noise_snr_db))
                value += noise_sigma(value, spec.noise_snr_db) * rng.normal();
            dst[b] = static_cast<float>(value);
        }
        auc_normalize_inplace(dst);
    }
    return out;
}

BalancedSampler::BalancedSampler(std::size_t sim_count, std::size_t real_count, std::size_t batch,
                                 std::uint64_t seed)
    : sim_count_(sim_count), real_count_(real_count), half_(batch / 2), seed_(seed)
{
    if (batch == 0 || batch % 2 != 0)
        throw ConfigError("balanced sampler: batch size must be even and > 0");
    if (sim_count == 0 || real_count == 0)
        throw ConfigError("balanced sampler: both pools must be nonempty");
    batches_ = (std::max(sim_count, real_count) + half_ - 1) / half_;
}

std::vector<BalancedBatch> BalancedSampler::epoch(std::size_t epoch_index) const
{
    const std::size_t slots = batches_ * half_;
    const std::size_t larger = std::max(sim_count_, real_count_);
    auto fill = [&](std::size_t count, std::uint64_t stream) {
        Rng rng(derive_seed(seed_, stream, epoch_index));
        std::vector<std::size_t> order;
        if (count == larger) {
            order = permutation(count, rng);
            while (order.size() < slots)
                order.push_back(rng.below(count));
        } else {
            order.reserve(slots);
            for (std::size_t k = 0; k < slots; ++k)
                order.push_back(rng.below(count));
        }
        return order;
    };
    const auto sim = fill(sim_count_, stream_id("balanced_sim"));
    const auto real = fill(real_count_, stream_id("balanced_real"));
    std::vector<BalancedBatch> out(batches_);
    for (std::size_t b = 0; b < batches_; ++b) {
        out[b].sim.assign(sim.begin() + static_cast<std::ptrdiff_t>(b * half_),
                          sim.begin() + static_cast<std::ptrdiff_t>((b + 1) * half_));
        out[b].real.assign(real.begin() + static_cast<std::ptrdiff_t>(b * half_),
                           real.begin() + static_cast<std::ptrdiff_t>((b + 1) * half_));
    }
    return out;
}

std::vector<std::uint8_t> serialize_dataset(const Dataset& ds)
{
    ds.validate();
    binio::Writer w;
    w.put_bytes(std::string_view(kDatasetMagic, 4));
    w.put(kDatasetVersion);
    w.put(static_cast<std::uint64_t>(ds.size()));
    w.put(static_cast<std::uint32_t>(ds.feature_count));
    w.put(std::uint32_t{0});
    w.put(ds.provenance);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        w.put_array(ds.row(i));
        w.put(ds.labels[i]);
        w.put(static_cast<std::uint32_t>(ds.domains[i]));
    }
    w.put_crc();
    return w.bytes();
}

Dataset deserialize_dataset(std::span<const std::uint8_t> bytes)
{
    binio::Reader r(bytes, "dataset");
    if (r.get_bytes(4) != std::string_view(kDatasetMagic, 4))
        throw FormatError("dataset: bad magic (not an OXDS file)");
    const auto version = r.get<std::uint32_t>();
    if (version != kDatasetVersion)
        throw FormatError("dataset: unsupported version " + std::to_string(version));
    const auto n = r.get<std::uint64_t>();
    const auto bands = r.get<std::uint32_t>();
    const auto flags = r.get<std::uint32_t>();
    if (flags != 0)
        throw FormatError("dataset: unknown flags");
    if (bands == 0 || bands > 4096)
        throw FormatError("dataset: implausible band count " + std::to_string(bands));
    const std::uint64_t record = (std::uint64_t{bands} + 2) * 4;
    if (n == 0 || n > (r.remaining() / record))
        throw FormatError("dataset: record count does not match file size");
    Dataset ds;
    ds.provenance = r.get<std::uint64_t>();
    ds.feature_count = bands;
    ds.features.resize(n * bands);
    ds.labels.resize(n);
    ds.domains.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        r.get_array(ds.row(i));
        ds.labels[i] = r.get<float>();
        const auto domain = r.get<std::uint32_t>();
        if (domain > 1)
            throw FormatError("dataset: invalid domain label " + std::to_string(domain));
        ds.domains[i] = static_cast<Domain>(domain);
    }
    r.check_crc();
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path)
{
    binio::write_file(path, serialize_dataset(ds));
}

Dataset load_dataset(const std::filesystem::path& path)
{
    return deserialize_dataset(binio::read_file(path));
}

void export_dataset_csv(const Dataset& ds, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path.string() + "'");
    for (std::size_t b = 0; b < ds.feature_count; ++b)
        out << "band_" << b << ',';
    out << "oxygenation,domain\n";
    out.precision(9);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (float v : ds.row(i))
            out << v << ',';
        out << ds.labels[i] << ',' << static_cast<int>(ds.domains[i]) << '\n';
    }
}

} // namespace oxyspec

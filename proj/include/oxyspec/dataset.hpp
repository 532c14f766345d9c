#pragma once

#include "oxyspec/optics.hpp"
#include "oxyspec/spectral.hpp"
#include "oxyspec/transport.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace oxyspec {

/// Row-major float32 feature matrix plus per-row label and domain.
/// Unlabeled rows carry a NaN label.
struct Dataset {
    std::size_t feature_count = kDefaultBands;
    std::vector<float> features;
    std::vector<float> labels;
    std::vector<Domain> domains;
    std::uint64_t provenance = 0;

    std::size_t size() const noexcept { return labels.size(); }
    bool empty() const noexcept { return labels.empty(); }

    std::span<const float> row(std::size_t i) const
    {
        return {features.data() + i * feature_count, feature_count};
    }
    std::span<float> row(std::size_t i)
    {
        return {features.data() + i * feature_count, feature_count};
    }

    bool labeled(std::size_t i) const noexcept { return labels[i] == labels[i]; }

    LabeledSample sample(std::size_t i) const;
    void push_back(std::span<const float> features, float label, Domain domain);
    void push_back(const LabeledSample& sample);

    Dataset subset(std::span<const std::size_t> indices) const;

    /// Features as a double matrix (rows = samples), for analysis code.
    Eigen::MatrixXd feature_matrix() const;

    /// Throws DataError on ragged or empty content.
    void validate() const;

    /// Bitwise equality, NaN labels included.
    bool identical(const Dataset& other) const noexcept;
};

/// Everything generate_dataset needs beyond count and seed.
struct GenerationConfig {
    PriorConfig priors;
    int grid_nx = 20;
    int grid_ny = 20;
    double voxel_size = 0.01;
    TransportConfig transport;
    CameraModel camera = make_camera_model();
    /// Samples simulated concurrently. Results do not depend on it.
    unsigned workers = 1;
    /// Optional progress callback, called with the number of finished samples.
    std::function<void(std::size_t)> progress;
};

struct GenerationReport {
    Dataset dataset;
    std::size_t dropped = 0; ///< degenerate draws that were resampled
};

/// Samples, simulates, labels, adapts (noise-free) and normalizes n tissues.
GenerationReport generate_dataset(std::size_t n, const GenerationConfig& cfg, std::uint64_t seed);

/// One sample exactly as generate_dataset builds sample `index`.
/// Returns false when the draw was degenerate.
bool generate_sample(const GenerationConfig& cfg, std::uint64_t seed, std::size_t index,
                     std::size_t attempt, std::span<float> features, float& label);

struct SplitSpec {
    double train_fraction = 0.8;
    int strat_bins = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Split {
    Dataset train;
    Dataset val;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;
};

/// Per-oxygenation-bin partition. Bins with a single sample are an error.
Split stratified_split(const Dataset& ds, const SplitSpec& spec);

/// Unstratified random partition, for unlabeled pools.
Split random_split(const Dataset& ds, double train_fraction, std::uint64_t seed);

/// Fresh per-band Gaussian noise at the given SNR, then re-normalization.
/// An infinite SNR returns the input unchanged.
Dataset augment_noise(const Dataset& ds, double snr_db, std::uint64_t epoch_seed);

/// In-place form used by the training loop.
void augment_noise_inplace(Dataset& ds, double snr_db, std::uint64_t epoch_seed);

struct DistortionSpec {
    double drift_tilt = 1.0;         ///< log-slope of the multiplicative drift across bands
    double drift_wave_amplitude = 0.1; ///< fixed ripple, log scale
    double drift_wave_period = 7.0;  ///< bands
    double drift_jitter = 0.05;      ///< per-sample std of the tilt
    double crosstalk = 0.3;          ///< share leaked to neighboring bands
    /// Explicit crosstalk matrix; when non-empty it replaces `crosstalk`.
    Eigen::MatrixXd crosstalk_matrix;
    double noise_snr_db = 35.0;      ///< infinity disables the extra noise
    std::uint64_t seed = 0;

    static DistortionSpec identity();

    /// The band mixing matrix, validated to be row-stochastic.
    Eigen::MatrixXd mixing(std::size_t bands) const;
    void validate(std::size_t bands) const;
};

struct PseudoRealSet {
    Dataset data;                     ///< labels hidden (NaN), domain real
    std::vector<float> hidden_labels; ///< for test-time oracles only
};

/// Desk-scale stand-in for clinical spectra: drift, crosstalk and noise
/// applied to simulated spectra.
PseudoRealSet make_pseudo_real(const Dataset& ds, const DistortionSpec& spec);

struct BalancedBatch {
    std::vector<std::size_t> sim;
    std::vector<std::size_t> real;
};

/// Exactly balanced sim/real index batches. The larger pool is covered once
/// per epoch in random order (topped up with random extras to fill the last
/// batch); the smaller pool is resampled with replacement.
class BalancedSampler {
public:
    BalancedSampler(std::size_t sim_count, std::size_t real_count, std::size_t batch,
                    std::uint64_t seed);

    std::size_t batches_per_epoch() const noexcept { return batches_; }
    std::vector<BalancedBatch> epoch(std::size_t epoch_index) const;

private:
    std::size_t sim_count_;
    std::size_t real_count_;
    std::size_t half_;
    std::size_t batches_;
    std::uint64_t seed_;
};

/// Binary layout, little-endian:
///   header  "OXDS" | u32 version | u64 n | u32 bands | u32 flags | u64 provenance  (32 bytes)
///   records n x (bands x f32 features | f32 oxygenation | u32 domain)
///   trailer u32 CRC-32 over header and records
inline constexpr std::size_t kDatasetHeaderBytes = 32;
inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> serialize_dataset(const Dataset& ds);
Dataset deserialize_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// band_0..band_N,oxygenation,domain
void export_dataset_csv(const Dataset& ds, const std::filesystem::path& path);

} // namespace oxyspec

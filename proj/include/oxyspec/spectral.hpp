#pragma once

#include "oxyspec/optics.hpp"
#include "oxyspec/random.hpp"
#include "oxyspec/transport.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace oxyspec {

inline constexpr std::size_t kDefaultBands = 16;

enum class BandShape { gaussian, flat };

struct CameraConfig {
    int bands = static_cast<int>(kDefaultBands);
    double fwhm = 15.0;           ///< nm
    double first_center = 460.0;  ///< nm
    double last_center = 600.0;   ///< nm
    BandShape shape = BandShape::gaussian;
    std::vector<double> wavelengths = default_wavelengths();
    std::filesystem::path response_csv;     ///< wavelength_nm,band_0,...
    std::filesystem::path light_csv;        ///< wavelength_nm,value
    std::filesystem::path transmission_csv; ///< wavelength_nm,value
    std::filesystem::path correction_csv;   ///< bands x bands, no header
};

/// Spectral response s(b, lambda), light source L(lambda), optics
/// transmission T(lambda) and the vendor correction matrix.
struct CameraModel {
    std::vector<double> wavelengths;
    Eigen::MatrixXd response; ///< bands x wavelengths
    std::vector<double> light;
    std::vector<double> transmission;
    Eigen::MatrixXd correction; ///< bands x bands

    std::size_t bands() const noexcept { return static_cast<std::size_t>(response.rows()); }

    /// Response-weighted centroid wavelength of each band.
    std::vector<double> band_centers() const;

    void validate() const;
};

CameraModel make_camera_model(const CameraConfig& config = {});

struct BandSpectrum {
    std::vector<double> values;
    bool normalized = false;

    bool operator==(const BandSpectrum&) const = default;
};

/// 0 = simulated, 1 = real.
enum class Domain : std::uint8_t { simulated = 0, real = 1 };

struct LabeledSample {
    BandSpectrum spectrum;
    double oxygenation = 0.0;
    Domain domain = Domain::simulated;
};

/// Penetration-weighted oxygenation: for each wavelength, each layer
/// contributes its share of [0, p(lambda)]; the label is the mean over
/// wavelengths.
double label_oxygenation(const TissueSample& tissue, std::span<const double> penetration);

/// Trapezoid quadrature weights on an arbitrary increasing grid.
std::vector<double> trapezoid_weights(std::span<const double> grid);

/// Standard deviation of the additive band noise at the given SNR for a
/// band whose noiseless value is `signal`.
double noise_sigma(double signal, double snr_db) noexcept;

/// Band reflectance from a continuous spectrum, with optional per-band
/// Gaussian noise w(b) at the given SNR. Not normalized.
BandSpectrum adapt_to_camera(std::span<const double> wavelengths,
                             std::span<const double> reflectance, const CameraModel& cam,
                             std::optional<double> noise_snr_db = std::nullopt,
                             Rng* rng = nullptr);

BandSpectrum adapt_to_camera(const SimulatedSpectrum& spectrum, const CameraModel& cam,
                             std::optional<double> noise_snr_db = std::nullopt,
                             Rng* rng = nullptr);

/// Trapezoid area over the band index axis with unit spacing.
double band_area(std::span<const double> values) noexcept;

/// Scales the spectrum to unit band_area; throws DomainError for area <= 0.
BandSpectrum auc_normalize(const BandSpectrum& spectrum);

/// In-place variant over a raw buffer, used on hot paths.
void auc_normalize_inplace(std::span<float> values);
void auc_normalize_inplace(std::span<double> values);

} // namespace oxyspec

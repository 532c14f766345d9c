#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace oxyspec {

/// Physiological parameters of one tissue layer.
struct LayerParams {
    double oxygenation = 0.0;           ///< S, fraction of oxygenated hemoglobin
    double blood_volume_fraction = 0.0; ///< vhb, fraction
    double thickness = 1.0;             ///< mm
    double scatter_amplitude = 20.0;    ///< reduced scattering at 500 nm, 1/cm
    double scatter_power = 1.0;         ///< Mie exponent
    double anisotropy = 0.9;            ///< Henyey-Greenstein g
    double refractive_index = 1.4;

    bool operator==(const LayerParams&) const = default;

    /// Throws ConfigError when a field breaks its physical bounds.
    void validate() const;
};

inline constexpr std::size_t kLayerCount = 3;

/// Serosa, muscularis and submucosa, outermost first.
struct TissueSample {
    std::array<LayerParams, kLayerCount> layers{};
    std::uint64_t seed = 0;

    double total_thickness() const noexcept;
    bool operator==(const TissueSample&) const = default;
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;

    bool operator==(const Range&) const = default;
};

/// Uniform prior ranges for every LayerParams field.
struct LayerPrior {
    Range oxygenation{0.0, 1.0};
    Range blood_volume_fraction{0.0, 0.30};
    Range thickness{0.2, 2.0};
    Range scatter_amplitude{5.0, 50.0};
    Range scatter_power{0.3, 3.0};
    Range anisotropy{0.80, 0.95};
    Range refractive_index{1.33, 1.54};

    /// Every range a point: lo == hi == value.
    static LayerPrior point(const LayerParams& value);

    bool operator==(const LayerPrior&) const = default;
};

struct PriorConfig {
    std::array<LayerPrior, kLayerCount> layers{};

    /// Same prior for all three layers.
    static PriorConfig shared(const LayerPrior& prior);

    /// Throws ConfigError naming the offending field when lo > hi or a bound
    /// leaves the physically meaningful interval.
    void validate() const;
};

/// Draws every parameter independently and uniformly from its range.
/// Deterministic for a given seed.
TissueSample sample_tissue(const PriorConfig& priors, std::uint64_t seed);

/// Molar extinction coefficients of oxy- and deoxyhemoglobin,
/// decadic, 1/(cm mol/L).
class ExtinctionTable {
public:
    ExtinctionTable(std::vector<double> wavelengths, std::vector<double> eps_hbo2,
                    std::vector<double> eps_hb);

    /// The bundled 400-700 nm table at 2 nm spacing.
    static const ExtinctionTable& builtin();

    static ExtinctionTable from_csv(std::string_view text);
    static ExtinctionTable load_csv(const std::filesystem::path& path);

    const std::vector<double>& wavelengths() const noexcept { return wavelengths_; }
    const std::vector<double>& eps_hbo2() const noexcept { return eps_hbo2_; }
    const std::vector<double>& eps_hb() const noexcept { return eps_hb_; }

    double min_wavelength() const noexcept { return wavelengths_.front(); }
    double max_wavelength() const noexcept { return wavelengths_.back(); }

    struct Coefficients {
        double hbo2;
        double hb;
    };

    /// Linear interpolation; throws DomainError outside the table.
    Coefficients at(double wavelength_nm) const;

private:
    std::vector<double> wavelengths_;
    std::vector<double> eps_hbo2_;
    std::vector<double> eps_hb_;
};

struct OpticalProperties {
    double mu_a = 0.0; ///< 1/cm
    double mu_s = 0.0; ///< 1/cm
    double g = 0.0;
    double n = 1.0;

    bool operator==(const OpticalProperties&) const = default;
};

/// Whole-blood hemoglobin: 150 g/L over 64,500 g/mol.
inline constexpr double kHemeMolarConcentration = 150.0 / 64500.0;

/// Absorption from the blood fraction and hemoglobin mixture, scattering from
/// a power law in wavelength referenced to 500 nm.
OpticalProperties optical_properties(const LayerParams& layer, double wavelength_nm,
                                     const ExtinctionTable& table = ExtinctionTable::builtin());

} // namespace oxyspec

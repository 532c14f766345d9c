#pragma once

#include "oxyspec/image.hpp"
#include "oxyspec/optics.hpp"
#include "oxyspec/spectral.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <span>

namespace oxyspec {

/// Bands x 4 design matrix: HbO2, Hb, constant offset, linear band slope.
/// The hemoglobin columns are the camera-weighted extinction spectra, both
/// divided by one common factor so the columns are of order one.
struct EndmemberMatrix {
    static constexpr int kHbO2 = 0;
    static constexpr int kHb = 1;
    static constexpr int kOffset = 2;
    static constexpr int kSlope = 3;
    static constexpr int kColumns = 4;

    Eigen::MatrixXd columns;

    std::size_t bands() const noexcept { return static_cast<std::size_t>(columns.rows()); }
    /// Throws ConfigError unless bands >= 4, 4 columns and full column rank.
    void validate() const;
};

EndmemberMatrix make_endmembers(const CameraModel& camera,
                                const ExtinctionTable& table = ExtinctionTable::builtin());

/// Least squares with x >= 0 on the columns flagged in `constrained` and no
/// bound on the rest (Lawson-Hanson active set).
Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                     std::span<const bool> constrained, double tolerance = 1e-10);

struct UnmixResult {
    double so2 = 0.5;
    bool degenerate = false;
    Eigen::Vector4d concentrations = Eigen::Vector4d::Zero();
};

/// Correction matrix, absorbance -ln r, constrained least squares, then
/// c_HbO2 / (c_HbO2 + c_Hb). Non-positive corrected reflectance throws
/// DomainError; two vanishing concentrations give 0.5 flagged degenerate.
UnmixResult unmix_so2(std::span<const double> spectrum, const EndmemberMatrix& em,
                      const Eigen::MatrixXd& correction);
UnmixResult unmix_so2(std::span<const float> spectrum, const EndmemberMatrix& em,
                      const Eigen::MatrixXd& correction);

/// Per-pixel unmix_so2. Pixels that fail are set to 0 and flagged, not fatal.
OxygenationMap unmix_map(const Hypercube& cube, const EndmemberMatrix& em,
                         const Eigen::MatrixXd& correction);

/// band,hbo2,hb,offset,slope
void save_endmembers_csv(const EndmemberMatrix& em, const std::filesystem::path& path);
EndmemberMatrix load_endmembers_csv(const std::filesystem::path& path);

} // namespace oxyspec

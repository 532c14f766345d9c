#pragma once

#include "oxyspec/image.hpp"
#include "oxyspec/nn.hpp"
#include "oxyspec/unmixing.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace oxyspec {

inline constexpr int kMosaicSize = 4;

struct Frame {
    Hypercube cube;
    Hypercube dark;
    std::vector<double> light_reference;
    bool demosaicked = false;
    bool dark_subtracted = false;
    bool light_corrected = false;
    bool normalized = false;
    /// Pixels whose spectrum area was not positive; left at zero.
    std::vector<std::uint8_t> degenerate;

    std::size_t degenerate_count() const noexcept;
};

/// Bilinear interpolation of each band over its sparse 4x4 mosaic lattice.
/// Band b sits at rows y % 4 == b / 4 and columns x % 4 == b % 4; edges
/// replicate the nearest lattice sample.
Hypercube demosaic(const Image& mosaic, int pattern = kMosaicSize);

/// Raw 4x4 mosaic: dark subtraction (clamped at 0), demosaicking, division by
/// the light reference, per-pixel AUC normalization.
Frame calibrate_frame(const Image& raw, const Image& dark, std::span<const double> light_reference);

/// Cube that is already demosaicked: the same steps minus demosaicking.
Frame calibrate_frame(const Hypercube& raw, const Hypercube& dark,
                      std::span<const double> light_reference);

/// Square window centered on a sampling point.
struct Roi {
    int x = 0;
    int y = 0;
    int size = 20;

    int x0() const noexcept { return x - size / 2; }
    int y0() const noexcept { return y - size / 2; }
};

/// Mean over the ROI. Throws ShapeError when the window leaves the image.
double roi_oxygenation(const Image& map, const Roi& roi);

enum class SiteKind : std::uint8_t { well_perfused, anastomosis, ischemic };

std::string_view to_string(SiteKind kind);
SiteKind parse_site_kind(std::string_view text);

struct RoiMeasurement {
    std::string frame_id;
    SiteKind site = SiteKind::well_perfused;
    int x = 0;
    int y = 0;
    double lactate = 0.0; ///< mmol/L
};

/// frame_id,site_kind,x,y,lactate_mmol_per_l
std::vector<RoiMeasurement> load_manifest(const std::filesystem::path& path);
void save_manifest(std::span<const RoiMeasurement> rows, const std::filesystem::path& path);

struct LactatePoint {
    double oxygenation = 0.0; ///< fraction
    double lactate = 0.0;     ///< mmol/L
};

/// lactate = A exp(B o2), fitted by least squares on ln(lactate).
struct LactateFit {
    double a = 0.0;           ///< mmol/L
    double b = 0.0;           ///< per unit oxygenation
    double mae = 0.0;         ///< mmol/L, natural scale
    double mae_std = 0.0;     ///< population std of the absolute errors
    double r_squared = 0.0;   ///< of the log-space regression
    double correlation = 0.0; ///< Pearson, oxygenation vs raw lactate
    std::size_t n_points = 0;

    double predict(double oxygenation) const noexcept;
};

/// Throws FitError for fewer than 3 points or non-positive lactate and
/// NumericError when the oxygenation values have no spread.
LactateFit fit_lactate_exponential(std::span<const LactatePoint> points);

/// Evenly spaced (o2, lactate) samples of the fitted curve, for plotting.
std::vector<LactatePoint> fit_curve(const LactateFit& fit, double lo, double hi, int samples);

struct Rgb {
    std::uint8_t r, g, b;
    bool operator==(const Rgb&) const = default;
};

/// Perceptually ordered map from dark purple (0) to bright yellow (1).
Rgb palette_color(double value);

/// Writes an 8-bit RGB PNG and, next to it, the raw float map as .npy
/// (same stem). Values must lie in [0, 1]. Returns the sidecar path.
std::filesystem::path render_oxygenation_map(const Image& map, const std::filesystem::path& png);

/// Decoded RGB pixels of a PNG, row-major (for tests and tooling).
std::vector<Rgb> read_png_rgb(const std::filesystem::path& png, int& height, int& width);

struct BenchmarkReport {
    std::string method;
    int iterations = 0;
    int warmup = 0;
    int threads = 1;
    int height = 0;
    int width = 0;
    int bands = 0;
    double mean_ms = 0.0;
    double std_ms = 0.0; ///< population std over iterations
    double fps = 0.0;    ///< 1000 / mean_ms
    std::vector<double> samples_ms;
};

/// Times `run` on one frame: `warmup` untimed calls, then `iterations` timed.
BenchmarkReport benchmark_inference(const std::string& method, const Hypercube& frame,
                                    const std::function<void(const Hypercube&)>& run,
                                    int iterations = 1000, int warmup = 3);

/// Network path: per-pixel normalization plus batched eval forward.
BenchmarkReport benchmark_network(const std::string& method, const nn::Network<float>& net,
                                  const Hypercube& frame, int iterations = 1000, int warmup = 3);

/// Unmixing path: correction, absorbance and constrained least squares per pixel.
BenchmarkReport benchmark_unmixing(const EndmemberMatrix& em, const Eigen::MatrixXd& correction,
                                   const Hypercube& frame, int iterations = 1000, int warmup = 3);

/// Reflectance cube from the linear absorbance model with random
/// concentrations per pixel (hemoglobin in [0, 1], offset in [0, 0.5],
/// slope in [-0.1, 0.1]). Shared input for timing comparisons.
Hypercube synthetic_frame(const EndmemberMatrix& em, int height, int width, std::uint64_t seed);

/// One `key=value` per line; records separated by a blank line.
std::string format_report(const BenchmarkReport& report);
std::vector<BenchmarkReport> parse_reports(std::string_view text);

} // namespace oxyspec

#include "oxyspec/spectral.hpp"

#include "oxyspec/csv.hpp"
#include "oxyspec/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace oxyspec {

namespace {

// Linear resampling of (x, y) onto `grid`; the source must cover the grid.
std::vector<double> resample(const std::vector<double>& x, const std::vector<double>& y,
                             std::span<const double> grid, const std::string& what)
{
    if (x.size() < 2)
        throw DataError(what + ": need at least two rows");
    for (std::size_t i = 1; i < x.size(); ++i)
        if (!(x[i] > x[i - 1]))
            throw DataError(what + ": wavelengths must be strictly increasing");
    if (x.front() > grid.front() || x.back() < grid.back())
        throw DataError(what + ": curve covers [" + std::to_string(x.front()) + ", " +
                        std::to_string(x.back()) + "] nm, need [" + std::to_string(grid.front()) +
                        ", " + std::to_string(grid.back()) + "]");
    std::vector<double> out;
    out.reserve(grid.size());
    for (double g : grid) {
        auto hi = static_cast<std::size_t>(std::lower_bound(x.begin(), x.end(), g) - x.begin());
        if (hi == 0) {
            out.push_back(y.front());
            continue;
        }
        const std::size_t lo = hi - 1;
        const double t = (g - x[lo]) / (x[hi] - x[lo]);
        out.push_back(y[lo] + t * (y[hi] - y[lo]));
    }
    return out;
}

std::vector<double> load_curve(const std::filesystem::path& path, std::span<const double> grid,
                               const std::string& what)
{
    const auto table = csv::read_file(path);
    const auto wl = table.column("wavelength_nm");
    const auto val = table.column("value");
    std::vector<double> x, y;
    for (const auto& row : table.rows) {
        x.push_back(csv::to_double(row[wl]));
        y.push_back(csv::to_double(row[val]));
    }
    return resample(x, y, grid, what + " '" + path.string() + "'");
}

template <typename T>
void normalize_buffer(std::span<T> values)
{
    double area = 0.0;
    for (T v : values)
        area += v;
    if (!values.empty())
        area -= 0.5 * (static_cast<double>(values.front()) + values.back());
    if (!(area > 0.0) || !std::isfinite(area))
        throw DomainError("auc normalization: non-positive spectrum area");
    for (auto& v : values)
        v = static_cast<T>(v / area);
}

} // namespace

std::vector<double> CameraModel::band_centers() const
{
    std::vector<double> centers;
    for (Eigen::Index b = 0; b < response.rows(); ++b) {
        double num = 0.0, den = 0.0;
        for (Eigen::Index k = 0; k < response.cols(); ++k) {
            num += response(b, k) * wavelengths[static_cast<std::size_t>(k)];
            den += response(b, k);
        }
        centers.push_back(num / den);
    }
    return centers;
}

void CameraModel::validate() const
{
    const auto n = static_cast<Eigen::Index>(wavelengths.size());
    if (response.rows() < 1 || response.cols() != n)
        throw ShapeError("camera: response must be bands x " + std::to_string(n));
    if (light.size() != wavelengths.size() || transmission.size() != wavelengths.size())
        throw ShapeError("camera: light/transmission length must match the wavelength grid");
    if (correction.rows() != response.rows() || correction.cols() != response.rows())
        throw ShapeError("camera: correction matrix must be bands x bands");
    for (Eigen::Index b = 0; b < response.rows(); ++b) {
        if ((response.row(b).array() < 0.0).any())
            throw ConfigError("camera: negative spectral response in band " + std::to_string(b));
        if (!(response.row(b).sum() > 0.0))
            throw ConfigError("camera: band " + std::to_string(b) + " has zero response");
    }
    for (std::size_t k = 0; k < wavelengths.size(); ++k)
        if (!(light[k] > 0.0) || !(transmission[k] > 0.0))
            throw ConfigError("camera: light source and transmission must be > 0");
    for (double c : band_centers())
        if (c < 460.0 - 1e-9 || c > 600.0 + 1e-9)
            throw ConfigError("camera: band center " + std::to_string(c) +
                              " nm outside [460, 600]");
}

CameraModel make_camera_model(const CameraConfig& config)
{
    if (config.bands < 1)
        throw ConfigError("camera: band count must be >= 1");
    if (!(config.fwhm > 0.0))
        throw ConfigError("camera: fwhm must be > 0");
    if (config.wavelengths.size() < 2)
        throw ConfigError("camera: wavelength grid needs at least two points");

    CameraModel cam;
    cam.wavelengths = config.wavelengths;
    const auto nb = config.bands;
    const auto nw = static_cast<Eigen::Index>(cam.wavelengths.size());

    if (!config.response_csv.empty()) {
        const auto table = csv::read_file(config.response_csv);
        const auto wl = table.column("wavelength_nm");
        std::vector<double> x;
        for (const auto& row : table.rows)
            x.push_back(csv::to_double(row[wl]));
        cam.response.resize(nb, nw);
        for (int b = 0; b < nb; ++b) {
            const auto col = table.column("band_" + std::to_string(b));
            std::vector<double> y;
            for (const auto& row : table.rows)
                y.push_back(csv::to_double(row[col]));
            const auto curve = resample(x, y, cam.wavelengths,
                                        "response '" + config.response_csv.string() + "'");
            for (Eigen::Index k = 0; k < nw; ++k)
                cam.response(b, k) = curve[static_cast<std::size_t>(k)];
        }
    } else {
        cam.response.resize(nb, nw);
        const double c = 4.0 * std::numbers::ln2 / (config.fwhm * config.fwhm);
        for (int b = 0; b < nb; ++b) {
            const double center =
                nb == 1 ? 0.5 * (config.first_center + config.last_center)
                        : config.first_center +
                              b * (config.last_center - config.first_center) / (nb - 1);
            for (Eigen::Index k = 0; k < nw; ++k) {
                const double d = cam.wavelengths[static_cast<std::size_t>(k)] - center;
                cam.response(b, k) =
                    config.shape == BandShape::flat ? 1.0 : std::exp(-c * d * d);
            }
        }
    }

    cam.light = config.light_csv.empty()
                    ? std::vector<double>(cam.wavelengths.size(), 1.0)
                    : load_curve(config.light_csv, cam.wavelengths, "light source");
    cam.transmission = config.transmission_csv.empty()
                           ? std::vector<double>(cam.wavelengths.size(), 1.0)
                           : load_curve(config.transmission_csv, cam.wavelengths, "transmission");

    if (config.correction_csv.empty()) {
        cam.correction = Eigen::MatrixXd::Identity(nb, nb);
    } else {
        const auto rows = csv::numeric_rows(csv::read_file(config.correction_csv, false));
        if (rows.size() != static_cast<std::size_t>(nb))
            throw DataError("correction matrix: expected " + std::to_string(nb) + " rows");
        cam.correction.resize(nb, nb);
        for (int i = 0; i < nb; ++i) {
            if (rows[i].size() != static_cast<std::size_t>(nb))
                throw DataError("correction matrix: expected " + std::to_string(nb) + " columns");
            for (int j = 0; j < nb; ++j)
                cam.correction(i, j) = rows[i][j];
        }
    }
    cam.validate();
    return cam;
}

double label_oxygenation(const TissueSample& tissue, std::span<const double> penetration)
{
    if (penetration.empty())
        throw DomainError("label_oxygenation: empty penetration depth array");
    const double total = tissue.total_thickness();
    double sum = 0.0;
    for (double p : penetration) {
        if (!(p > 0.0))
            throw DomainError("label_oxygenation: penetration depth must be > 0");
        for (const auto& layer : tissue.layers)
            if (!(layer.thickness > 0.0))
                throw DomainError("label_oxygenation: layer thickness must be > 0");
        const double depth = std::min(p, total);
        double top = 0.0;
        double s_lambda = 0.0;
        for (const auto& layer : tissue.layers) {
            const double overlap = std::max(0.0, std::min(depth, top + layer.thickness) - top);
            s_lambda += overlap / depth * layer.oxygenation;
            top += layer.thickness;
        }
        sum += s_lambda;
    }
    const double label = sum / static_cast<double>(penetration.size());
    // Round-off may leave the mean a hair outside the layer range.
    double lo = 1.0, hi = 0.0;
    for (const auto& layer : tissue.layers) {
        lo = std::min(lo, layer.oxygenation);
        hi = std::max(hi, layer.oxygenation);
    }
    return std::clamp(label, lo, hi);
}

std::vector<double> trapezoid_weights(std::span<const double> grid)
{
    std::vector<double> w(grid.size(), 0.0);
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const double h = 0.5 * (grid[k + 1] - grid[k]);
        w[k] += h;
        w[k + 1] += h;
    }
    return w;
}

double noise_sigma(double signal, double snr_db) noexcept
{
    return std::abs(signal) * std::pow(10.0, -snr_db / 20.0);
}

BandSpectrum adapt_to_camera(std::span<const double> wavelengths,
                             std::span<const double> reflectance, const CameraModel& cam,
                             std::optional<double> noise_snr_db, Rng* rng)
{
    if (wavelengths.size() != cam.wavelengths.size() || reflectance.size() != wavelengths.size())
        throw ShapeError("adapt_to_camera: spectrum grid does not match camera grid");
    for (std::size_t k = 0; k < wavelengths.size(); ++k)
        if (std::abs(wavelengths[k] - cam.wavelengths[k]) > 1e-9)
            throw ShapeError("adapt_to_camera: spectrum grid does not match camera grid");
    if (noise_snr_db && rng == nullptr)
        throw ConfigError("adapt_to_camera: noise requested without an RNG stream");

    const auto weights = trapezoid_weights(wavelengths);
    BandSpectrum out;
    out.values.resize(cam.bands());
    for (std::size_t b = 0; b < cam.bands(); ++b) {
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < wavelengths.size(); ++k) {
            const double kernel = cam.light[k] * cam.transmission[k] *
                                  cam.response(static_cast<Eigen::Index>(b),
                                               static_cast<Eigen::Index>(k)) *
                                  weights[k];
            num += reflectance[k] * kernel;
            den += kernel;
        }
        if (!(den > 0.0))
            throw ConfigError("adapt_to_camera: zero response integral in band " +
                              std::to_string(b));
        double w = 0.0;
        if (noise_snr_db)
            w = noise_sigma(num, *noise_snr_db) * rng->normal();
        out.values[b] = (w + num) / den;
    }
    return out;
}

BandSpectrum adapt_to_camera(const SimulatedSpectrum& spectrum, const CameraModel& cam,
                             std::optional<double> noise_snr_db, Rng* rng)
{
    return adapt_to_camera(spectrum.wavelengths, spectrum.reflectance, cam, noise_snr_db, rng);
}

double band_area(std::span<const double> values) noexcept
{
    if (values.empty())
        return 0.0;
    double area = 0.0;
    for (double v : values)
        area += v;
    return area - 0.5 * (values.front() + values.back());
}

BandSpectrum auc_normalize(const BandSpectrum& spectrum)
{
    BandSpectrum out = spectrum;
    auc_normalize_inplace(std::span<double>(out.values));
    out.normalized = true;
    return out;
}

void auc_normalize_inplace(std::span<float> values) { normalize_buffer(values); }
void auc_normalize_inplace(std::span<double> values) { normalize_buffer(values); }

} // namespace oxyspec

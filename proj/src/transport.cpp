#include "oxyspec/transport.hpp"

#include "oxyspec/error.hpp"
#include "oxyspec/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

namespace oxyspec {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kAmbientIndex = 1.0;
constexpr std::uint64_t kPhotonsPerBatch = 4096;

// Per-layer coefficients in 1/mm plus the layer's depth interval.
struct Slab {
    double mu_a;
    double mu_s;
    double g;
    double n;
    double z_top;
    double z_bottom;
};

struct Tally {
    WeightBalance balance;
    std::vector<double> track; // weight * path length per depth slice, mm
};

// Unpolarized Fresnel reflectance leaving a medium of index n_in into n_out.
double fresnel_reflectance(double n_in, double n_out, double cos_in)
{
    if (n_in == n_out)
        return 0.0;
    const double sin_in = std::sqrt(std::max(0.0, 1.0 - cos_in * cos_in));
    const double sin_out = n_in / n_out * sin_in;
    if (sin_out >= 1.0)
        return 1.0;
    const double cos_out = std::sqrt(1.0 - sin_out * sin_out);
    const double rs = (n_in * cos_in - n_out * cos_out) / (n_in * cos_in + n_out * cos_out);
    const double rp = (n_in * cos_out - n_out * cos_in) / (n_in * cos_out + n_out * cos_in);
    return 0.5 * (rs * rs + rp * rp);
}

// Henyey-Greenstein deflection applied in place to the unit direction.
void scatter(double& ux, double& uy, double& uz, double g, Rng& rng)
{
    double cos_t;
    if (std::abs(g) < 1e-9) {
        cos_t = 2.0 * rng.uniform() - 1.0;
    } else {
        const double f = (1.0 - g * g) / (1.0 - g + 2.0 * g * rng.uniform());
        cos_t = std::clamp((1.0 + g * g - f * f) / (2.0 * g), -1.0, 1.0);
    }
    const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
    const double phi = 2.0 * std::numbers::pi * rng.uniform();
    const double cos_p = std::cos(phi);
    const double sin_p = std::sin(phi);
    if (std::abs(uz) > 0.99999) {
        ux = sin_t * cos_p;
        uy = sin_t * sin_p;
        uz = std::copysign(cos_t, uz);
        return;
    }
    const double denom = std::sqrt(1.0 - uz * uz);
    const double nx = sin_t * (ux * uz * cos_p - uy * sin_p) / denom + ux * cos_t;
    const double ny = sin_t * (uy * uz * cos_p + ux * sin_p) / denom + uy * cos_t;
    const double nz = -sin_t * cos_p * denom + uz * cos_t;
    const double norm = 1.0 / std::sqrt(nx * nx + ny * ny + nz * nz);
    ux = nx * norm;
    uy = ny * norm;
    uz = nz * norm;
}

// Integral of w(s) over a sub-segment, from the weights at its two ends.
inline double track_integral(double w_start, double w_end, double mu_a, double len)
{
    return mu_a * len < 1e-9 ? 0.5 * (w_start + w_end) * len : (w_start - w_end) / mu_a;
}

// Adds the weighted track length of one straight segment to the depth slices
// it crosses. Weight decays as w0 * exp(-mu_a s) along the segment and ends at
// w_end.
void deposit(std::vector<double>& track, double dz, double z0, double uz, double len, double w0,
             double w_end, double mu_a)
{
    const int slices = static_cast<int>(track.size());
    auto slice_of = [&](double z) {
        return std::clamp(static_cast<int>(std::floor(z / dz)), 0, slices - 1);
    };
    int j = slice_of(z0);
    if (std::abs(uz) < 1e-12 || len <= 0.0) {
        track[j] += track_integral(w0, w_end, mu_a, len);
        return;
    }
    const double next_z = uz > 0 ? (j + 1) * dz : j * dz;
    const double first = std::max(0.0, (next_z - z0) / uz);
    if (first >= len) {
        track[j] += track_integral(w0, w_end, mu_a, len);
        return;
    }
    double w = w0 * std::exp(-mu_a * first);
    track[j] += track_integral(w0, w, mu_a, first);
    const double full = dz / std::abs(uz);
    const double full_decay = std::exp(-mu_a * full);
    double s = first;
    const int step = uz > 0 ? 1 : -1;
    j += step;
    while (s + full < len && j >= 0 && j < slices) {
        const double w_next = w * full_decay;
        track[j] += track_integral(w, w_next, mu_a, full);
        w = w_next;
        s += full;
        j += step;
    }
    if (j >= 0 && j < slices && s < len)
        track[j] += track_integral(w, w_end, mu_a, len - s);
}

void run_photon(std::uint64_t photon, std::uint64_t seed, std::span<const Slab> slabs,
                const VoxelGrid& grid, const TransportConfig& cfg, Tally& tally)
{
    Rng rng(derive_seed(seed, photon));
    auto& bal = tally.balance;
    const double lx = grid.lateral_x();
    const double ly = grid.lateral_y();
    const double dz = grid.voxel_size;
    const std::size_t last = slabs.size() - 1;

    double x = rng.uniform() * lx;
    double y = rng.uniform() * ly;
    double z = 0.0;
    double ux = 0.0, uy = 0.0, uz = 1.0;
    double w = 1.0;
    bal.launched += 1.0;

    const double n0 = slabs[0].n;
    const double r_sp = (kAmbientIndex - n0) * (kAmbientIndex - n0) /
                        ((kAmbientIndex + n0) * (kAmbientIndex + n0));
    bal.specular += r_sp;
    w -= r_sp;

    std::size_t li = 0;
    double tau = -std::log(rng.uniform_open0());
    double path = 0.0;

    while (true) {
        const Slab& L = slabs[li];
        const double s_scatter = L.mu_s > 0.0 ? tau / L.mu_s : kInf;
        const double s_bound = uz > 0.0   ? (L.z_bottom - z) / uz
                               : uz < 0.0 ? (L.z_top - z) / uz
                                          : kInf;
        const bool hits_boundary = s_bound <= s_scatter;
        double s = hits_boundary ? s_bound : s_scatter;
        const bool cut = path + s > cfg.max_path_length;
        if (cut)
            s = std::max(0.0, cfg.max_path_length - path);

        const double w_after = w * std::exp(-L.mu_a * s);
        deposit(tally.track, dz, z, uz, s, w, w_after, L.mu_a);
        bal.absorbed += w - w_after;
        w = w_after;
        path += s;
        x += ux * s;
        y += uy * s;
        if (cut) {
            bal.terminated += w;
            return;
        }
        if (hits_boundary)
            z = uz > 0.0 ? L.z_bottom : L.z_top;
        else
            z += uz * s;

        if (x < 0.0 || x >= lx || y < 0.0 || y >= ly) {
            if (cfg.lateral == LateralBoundary::open) {
                bal.lateral_escape += w;
                return;
            }
            x -= lx * std::floor(x / lx);
            y -= ly * std::floor(y / ly);
        }

        if (hits_boundary) {
            if (L.mu_s > 0.0)
                tau = std::max(0.0, tau - s * L.mu_s);
            if (uz < 0.0 && li == 0) {
                const double r = fresnel_reflectance(L.n, kAmbientIndex, -uz);
                if (r >= 1.0 || (r > 0.0 && rng.uniform() < r)) {
                    uz = -uz;
                } else {
                    bal.diffuse_reflected += w;
                    return;
                }
            } else if (uz > 0.0 && li == last) {
                bal.transmitted += w;
                return;
            } else {
                li = uz > 0.0 ? li + 1 : li - 1;
            }
            continue;
        }

        scatter(ux, uy, uz, L.g, rng);
        tau = -std::log(rng.uniform_open0());

        if (w < cfg.roulette_threshold) {
            const double m = cfg.roulette_survival_factor;
            if (rng.uniform() * m < 1.0) {
                bal.terminated -= w * (m - 1.0);
                w *= m;
            } else {
                bal.terminated += w;
                return;
            }
        }
    }
}

} // namespace

VoxelGrid VoxelGrid::for_tissue(const TissueSample& tissue, int nx, int ny, double voxel_size)
{
    VoxelGrid grid;
    grid.nx = nx;
    grid.ny = ny;
    grid.voxel_size = voxel_size;
    double depth = 0.0;
    for (const auto& layer : tissue.layers) {
        depth += layer.thickness;
        grid.layer_boundaries.push_back(depth);
    }
    // Float sums like 0.3 + 0.7 must not push D one voxel too far.
    const double voxels = depth / voxel_size;
    const double rounded = std::round(voxels);
    const double d = std::abs(voxels - rounded) < 1e-9 ? rounded : std::ceil(voxels);
    grid.layer_boundaries.back() = std::max(1.0, d) * voxel_size;
    grid.validate();
    return grid;
}

int VoxelGrid::depth_voxels() const noexcept
{
    return static_cast<int>(std::lround(total_depth() / voxel_size));
}

std::size_t VoxelGrid::layer_of_voxel(int z_index) const
{
    if (z_index < 0 || z_index >= depth_voxels())
        throw DomainError("voxel index outside grid");
    const double center = (z_index + 0.5) * voxel_size;
    const auto it = std::upper_bound(layer_boundaries.begin(), layer_boundaries.end(), center);
    return std::min(static_cast<std::size_t>(it - layer_boundaries.begin()),
                    layer_boundaries.size() - 1);
}

void VoxelGrid::validate() const
{
    if (nx < 1 || ny < 1)
        throw ConfigError("voxel grid: nx and ny must be >= 1");
    if (!(voxel_size > 0.0))
        throw ConfigError("voxel grid: voxel_size must be > 0");
    if (layer_boundaries.empty())
        throw ConfigError("voxel grid: no layers");
    double prev = 0.0;
    for (double b : layer_boundaries) {
        if (!(b > prev))
            throw ConfigError("voxel grid: layer boundaries must be strictly increasing");
        prev = b;
    }
    if (depth_voxels() < 1)
        throw ConfigError("voxel grid: depth must be at least one voxel");
}

void TransportConfig::validate() const
{
    if (n_photons < 1)
        throw ConfigError("transport: n_photons must be >= 1");
    if (!(roulette_threshold > 0.0 && roulette_threshold < 1.0))
        throw ConfigError("transport: roulette_threshold must lie in (0,1)");
    if (!(roulette_survival_factor > 1.0))
        throw ConfigError("transport: roulette_survival_factor must be > 1");
    if (!(max_path_length > 0.0))
        throw ConfigError("transport: max_path_length must be > 0");
}

double WeightBalance::relative_residual() const noexcept
{
    return launched > 0.0 ? std::abs(launched - accounted()) / launched : 0.0;
}

void WeightBalance::merge(const WeightBalance& o) noexcept
{
    launched += o.launched;
    specular += o.specular;
    diffuse_reflected += o.diffuse_reflected;
    transmitted += o.transmitted;
    lateral_escape += o.lateral_escape;
    absorbed += o.absorbed;
    terminated += o.terminated;
}

double penetration_depth(std::span<const double> fluence, double incident, double voxel_size,
                         double total_depth)
{
    const double threshold = incident / std::numbers::e;
    double z_prev = 0.0;
    double f_prev = incident;
    for (std::size_t j = 0; j < fluence.size(); ++j) {
        const double z = (static_cast<double>(j) + 0.5) * voxel_size;
        const double f = fluence[j];
        if (f < threshold) {
            const double t = (f_prev - threshold) / (f_prev - f);
            return std::clamp(z_prev + t * (z - z_prev), std::numeric_limits<double>::min(),
                              total_depth);
        }
        z_prev = z;
        f_prev = f;
    }
    return total_depth;
}

WavelengthResult simulate_optics(std::span<const OpticalProperties> layers, const VoxelGrid& grid,
                                 const TransportConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    grid.validate();
    if (layers.size() != grid.layer_boundaries.size())
        throw ShapeError("transport: " + std::to_string(layers.size()) +
                         " optical layers for a grid with " +
                         std::to_string(grid.layer_boundaries.size()));

    std::vector<Slab> slabs;
    bool any_interaction = false;
    double top = 0.0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& op = layers[i];
        if (!(op.mu_a >= 0.0 && op.mu_s >= 0.0))
            throw DomainError("transport: optical coefficients must be >= 0");
        // 1/cm to 1/mm
        slabs.push_back({op.mu_a / 10.0, op.mu_s / 10.0, op.g, op.n, top,
                         grid.layer_boundaries[i]});
        top = grid.layer_boundaries[i];
        any_interaction = any_interaction || op.mu_a > 0.0 || op.mu_s > 0.0;
    }

    const auto slices = static_cast<std::size_t>(grid.depth_voxels());
    const std::uint64_t batches = (cfg.n_photons + kPhotonsPerBatch - 1) / kPhotonsPerBatch;
    std::vector<Tally> tallies(batches);

    std::atomic<std::uint64_t> next{0};
    auto worker = [&] {
        for (std::uint64_t b = next++; b < batches; b = next++) {
            Tally& t = tallies[b];
            t.track.assign(slices, 0.0);
            const std::uint64_t end = std::min(cfg.n_photons, (b + 1) * kPhotonsPerBatch);
            for (std::uint64_t p = b * kPhotonsPerBatch; p < end; ++p)
                run_photon(p, seed, slabs, grid, cfg, t);
        }
    };
    const unsigned workers =
        static_cast<unsigned>(std::clamp<std::uint64_t>(cfg.workers, 1, batches));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < workers; ++i)
            pool.emplace_back(worker);
    }

    // Ordered reduction keeps the result independent of the worker count.
    WavelengthResult result;
    result.fluence.assign(slices, 0.0);
    for (const auto& t : tallies) {
        result.balance.merge(t.balance);
        for (std::size_t j = 0; j < slices; ++j)
            result.fluence[j] += t.track[j];
    }
    const double launched = result.balance.launched;
    for (auto& f : result.fluence)
        f /= grid.voxel_size * launched;

    if (cfg.verify_conservation && result.balance.relative_residual() > 1e-6)
        throw NumericError("transport: weight balance residual " +
                           std::to_string(result.balance.relative_residual()));

    result.reflectance = result.balance.diffuse_reflected / launched;
    result.degenerate = !any_interaction;
    const double incident = (launched - result.balance.specular) / launched;
    result.penetration_depth = result.degenerate
                                   ? grid.total_depth()
                                   : penetration_depth(result.fluence, incident, grid.voxel_size,
                                                       grid.total_depth());
    return result;
}

WavelengthResult simulate_wavelength(const TissueSample& tissue, const VoxelGrid& grid,
                                     double wavelength_nm, const TransportConfig& cfg,
                                     std::uint64_t seed, const ExtinctionTable& table)
{
    std::vector<OpticalProperties> optics;
    for (const auto& layer : tissue.layers)
        optics.push_back(optical_properties(layer, wavelength_nm, table));
    return simulate_optics(optics, grid, cfg, seed);
}

std::vector<double> default_wavelengths()
{
    std::vector<double> w;
    for (int nm = 440; nm <= 640; nm += 4)
        w.push_back(nm);
    return w;
}

bool SimulatedSpectrum::any_degenerate() const noexcept
{
    return std::find(degenerate.begin(), degenerate.end(), true) != degenerate.end();
}

std::uint64_t wavelength_seed(std::uint64_t seed, std::size_t k) noexcept
{
    return derive_seed(seed, stream_id("wavelength"), k);
}

SimulatedSpectrum simulate_spectrum(const TissueSample& tissue, const VoxelGrid& grid,
                                    const TransportConfig& cfg, std::uint64_t seed,
                                    std::span<const double> wavelengths,
                                    const ExtinctionTable& table)
{
    SimulatedSpectrum out;
    if (wavelengths.empty())
        out.wavelengths = default_wavelengths();
    else
        out.wavelengths.assign(wavelengths.begin(), wavelengths.end());
    for (std::size_t k = 1; k < out.wavelengths.size(); ++k)
        if (!(out.wavelengths[k] > out.wavelengths[k - 1]))
            throw ConfigError("simulate_spectrum: wavelengths must be strictly increasing");
    out.n_photons = cfg.n_photons;
    out.seed = seed;
    for (std::size_t k = 0; k < out.wavelengths.size(); ++k) {
        const auto r =
            simulate_wavelength(tissue, grid, out.wavelengths[k], cfg, wavelength_seed(seed, k), table);
        out.reflectance.push_back(r.reflectance);
        out.penetration_depth.push_back(r.penetration_depth);
        out.degenerate.push_back(r.degenerate);
    }
    return out;
}

} // namespace oxyspec

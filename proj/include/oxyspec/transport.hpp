#pragma once

#include "oxyspec/optics.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace oxyspec {

/// Voxelized slab of nx * ny * D cubes. Layers are horizontal, so only the
/// depth axis carries structure; the lateral axes bound the source patch.
struct VoxelGrid {
    int nx = 20;
    int ny = 20;
    double voxel_size = 0.01; ///< mm
    /// Depth of the bottom of each layer in mm, strictly increasing. The last
    /// entry is the bottom of the grid, depth_voxels() * voxel_size.
    std::vector<double> layer_boundaries;

    /// Layer bottoms at the cumulative sampled thicknesses; the total depth is
    /// rounded up to D = ceil(sum / voxel_size) voxels.
    static VoxelGrid for_tissue(const TissueSample& tissue, int nx = 20, int ny = 20,
                                double voxel_size = 0.01);

    int depth_voxels() const noexcept;
    double total_depth() const noexcept { return layer_boundaries.back(); }
    double lateral_x() const noexcept { return nx * voxel_size; }
    double lateral_y() const noexcept { return ny * voxel_size; }
    std::size_t layer_of_voxel(int z_index) const;

    void validate() const;
};

enum class LateralBoundary {
    periodic, ///< photons leaving one side re-enter on the opposite side
    open,     ///< photons leaving the side are lost and tallied separately
};

struct TransportConfig {
    std::uint64_t n_photons = 100'000;
    double roulette_threshold = 1e-4;
    double roulette_survival_factor = 10.0;
    double max_path_length = 1000.0; ///< mm
    LateralBoundary lateral = LateralBoundary::periodic;
    unsigned workers = 1;
    /// Throw NumericError when the weight balance residual exceeds 1e-6 relative.
    bool verify_conservation = true;

    void validate() const;
};

/// Where the launched photon weight ended up. All values are absolute weight
/// sums (one unit per launched photon).
struct WeightBalance {
    double launched = 0.0;
    double specular = 0.0;
    double diffuse_reflected = 0.0;
    double transmitted = 0.0;
    double lateral_escape = 0.0;
    double absorbed = 0.0;
    /// Weight removed by roulette minus weight added to roulette survivors,
    /// plus weight of photons cut at max_path_length.
    double terminated = 0.0;

    double accounted() const noexcept
    {
        return specular + diffuse_reflected + transmitted + lateral_escape + absorbed + terminated;
    }
    double relative_residual() const noexcept;
    void merge(const WeightBalance& other) noexcept;
};

struct WavelengthResult {
    double reflectance = 0.0;       ///< diffuse, fraction of launched weight
    double penetration_depth = 0.0; ///< mm
    bool degenerate = false;        ///< no absorber and no scatterer anywhere
    WeightBalance balance;
    /// Fluence per depth slice, relative to the incident irradiance.
    std::vector<double> fluence;
};

/// Core engine: explicit per-layer optical properties (one per grid layer).
WavelengthResult simulate_optics(std::span<const OpticalProperties> layers, const VoxelGrid& grid,
                                 const TransportConfig& cfg, std::uint64_t seed);

WavelengthResult simulate_wavelength(const TissueSample& tissue, const VoxelGrid& grid,
                                     double wavelength_nm, const TransportConfig& cfg,
                                     std::uint64_t seed,
                                     const ExtinctionTable& table = ExtinctionTable::builtin());

/// Depth where the fluence profile first drops below (1/e) of the incident
/// fluence, interpolated linearly between slice centers.
double penetration_depth(std::span<const double> fluence, double incident, double voxel_size,
                         double total_depth);

/// 440 to 640 nm in steps of 4 nm (51 points).
std::vector<double> default_wavelengths();

struct SimulatedSpectrum {
    std::vector<double> wavelengths;
    std::vector<double> reflectance;
    std::vector<double> penetration_depth;
    std::vector<bool> degenerate;
    std::uint64_t n_photons = 0;
    std::uint64_t seed = 0;

    bool any_degenerate() const noexcept;
};

/// Seed of the substream used for wavelength index k.
std::uint64_t wavelength_seed(std::uint64_t seed, std::size_t k) noexcept;

SimulatedSpectrum simulate_spectrum(const TissueSample& tissue, const VoxelGrid& grid,
                                    const TransportConfig& cfg, std::uint64_t seed,
                                    std::span<const double> wavelengths = {},
                                    const ExtinctionTable& table = ExtinctionTable::builtin());

} // namespace oxyspec

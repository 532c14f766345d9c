#include "support.hpp"

#include "oxyspec/error.hpp"
#include "oxyspec/random.hpp"
#include "oxyspec/transport.hpp"

#include <limits>
#include <numeric>

using namespace oxyspec;

namespace {

VoxelGrid slab(double depth_mm)
{
    VoxelGrid g;
    g.layer_boundaries = {depth_mm};
    return g;
}

double sample_std(const std::vector<double>& v)
{
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0.0;
    for (double x : v)
        ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (v.size() - 1));
}

} // namespace

TEST_CASE("absorbing slab follows Beer-Lambert")
{
    const OpticalProperties layer{10.0, 0.0, 0.0, 1.0};
    TransportConfig cfg;
    cfg.n_photons = 20'000;
    const auto r = simulate_optics(std::span(&layer, 1), slab(5.0), cfg, 3);
    CHECK(r.penetration_depth == doctest::Approx(1.0).epsilon(0.05));
    CHECK(r.reflectance == 0.0);
    // Without scattering nothing comes back and nothing is specular.
    CHECK(r.balance.specular == 0.0);
    CHECK(r.balance.absorbed / r.balance.launched == doctest::Approx(1.0 - std::exp(-5.0)).epsilon(0.02));
}

TEST_CASE("no absorber: reflected plus transmitted is everything")
{
    const OpticalProperties layers[] = {{0.0, 100.0, 0.8, 1.0}, {0.0, 50.0, 0.9, 1.0}};
    VoxelGrid g;
    g.layer_boundaries = {0.3, 0.8};
    TransportConfig cfg;
    cfg.n_photons = 5'000;
    const auto r = simulate_optics(layers, g, cfg, 11);
    const auto& b = r.balance;
    CHECK((b.diffuse_reflected + b.transmitted + b.specular) / b.launched ==
          doctest::Approx(1.0).epsilon(1e-3));
    CHECK(b.absorbed == 0.0);
}

TEST_CASE("same tissue and seed reproduce bit for bit")
{
    const auto tissue = sample_tissue(PriorConfig{}, 5);
    const auto grid = VoxelGrid::for_tissue(tissue);
    TransportConfig cfg;
    cfg.n_photons = 2'000;
    const auto a = simulate_wavelength(tissue, grid, 550.0, cfg, 17);
    const auto b = simulate_wavelength(tissue, grid, 550.0, cfg, 17);
    CHECK(a.reflectance == b.reflectance);
    CHECK(a.penetration_depth == b.penetration_depth);
    CHECK(a.fluence == b.fluence);
}

TEST_CASE("worker count does not change results")
{
    const auto tissue = sample_tissue(PriorConfig{}, 6);
    const auto grid = VoxelGrid::for_tissue(tissue);
    TransportConfig cfg;
    cfg.n_photons = 3'000;
    cfg.workers = 1;
    const auto a = simulate_wavelength(tissue, grid, 520.0, cfg, 2);
    cfg.workers = 4;
    const auto b = simulate_wavelength(tissue, grid, 520.0, cfg, 2);
    CHECK(a.reflectance == b.reflectance);
    CHECK(a.penetration_depth == b.penetration_depth);
    CHECK(a.balance.absorbed == b.balance.absorbed);
}

TEST_CASE("spectrum on the default grid")
{
    const auto wl = default_wavelengths();
    REQUIRE(wl.size() == 51);
    CHECK(wl.front() == 440.0);
    CHECK(wl.back() == 640.0);
    for (std::size_t k = 1; k < wl.size(); ++k)
        CHECK(wl[k] - wl[k - 1] == doctest::Approx(4.0));

    const auto tissue = sample_tissue(PriorConfig{}, 9);
    const auto grid = VoxelGrid::for_tissue(tissue);
    TransportConfig cfg;
    cfg.n_photons = 200;
    const auto s = simulate_spectrum(tissue, grid, cfg, 21);
    REQUIRE(s.reflectance.size() == 51);
    for (std::size_t k : {0UL, 17UL, 50UL}) {
        const auto one = simulate_wavelength(tissue, grid, wl[k], cfg, wavelength_seed(21, k));
        CHECK(one.reflectance == s.reflectance[k]);
        CHECK(one.penetration_depth == s.penetration_depth[k]);
    }
}

TEST_CASE("Monte Carlo error shrinks with the square root of the photon count")
{
    const OpticalProperties layer{2.0, 100.0, 0.9, 1.4};
    const auto grid = slab(2.0);
    TransportConfig cfg;
    std::vector<double> small, large;
    for (int rep = 0; rep < 30; ++rep) {
        cfg.n_photons = 1'000;
        small.push_back(simulate_optics(std::span(&layer, 1), grid, cfg, derive_seed(1, rep)).reflectance);
        cfg.n_photons = 2'000;
        large.push_back(simulate_optics(std::span(&layer, 1), grid, cfg, derive_seed(2, rep)).reflectance);
    }
    const double ratio = sample_std(small) / sample_std(large);
    CHECK(ratio == doctest::Approx(std::sqrt(2.0)).epsilon(0.2));
}

TEST_CASE("more absorption never raises reflectance")
{
    // Paired seeds; each photon's weight lies in [0, 1], so the standard error
    // of a reflectance estimate r is at most sqrt(r / N).
    TransportConfig cfg;
    cfg.n_photons = 100'000;
    double total_drop = 0.0;
    for (std::uint64_t t = 0; t < 20; ++t) {
        const auto tissue = sample_tissue(PriorConfig{}, 1000 + t);
        std::vector<OpticalProperties> base;
        for (const auto& l : tissue.layers)
            base.push_back(optical_properties(l, 560.0));
        auto scaled = base;
        const std::size_t which = t % kLayerCount;
        scaled[which].mu_a = scaled[which].mu_a * 2.0 + 1.0;
        const auto grid = VoxelGrid::for_tissue(tissue);
        const auto seed = derive_seed(77, t);
        const double r0 = simulate_optics(base, grid, cfg, seed).reflectance;
        const double r1 = simulate_optics(scaled, grid, cfg, seed).reflectance;
        const double se = std::sqrt((r0 + r1) / static_cast<double>(cfg.n_photons));
        INFO("tissue " << t << " r0 " << r0 << " r1 " << r1);
        CHECK(r1 <= r0 + 3.0 * se);
        total_drop += r0 - r1;
    }
    CHECK(total_drop > 0.0);
}

TEST_CASE("penetration depth shrinks as absorption grows")
{
    TransportConfig cfg;
    cfg.n_photons = 20'000;
    double previous = std::numeric_limits<double>::infinity();
    for (double mu_a : {2.5, 5.0, 10.0, 20.0}) {
        const OpticalProperties layer{mu_a, 0.0, 0.0, 1.0};
        const double p = simulate_optics(std::span(&layer, 1), slab(8.0), cfg, 4).penetration_depth;
        CHECK(p < previous);
        previous = p;
    }
}

TEST_CASE("penetration depth from a fluence profile")
{
    // Slice centers at 0.005, 0.015, ...; exact exponential profile.
    std::vector<double> f;
    for (int i = 0; i < 300; ++i)
        f.push_back(std::exp(-(i + 0.5) * 0.01 / 0.7));
    CHECK(penetration_depth(f, 1.0, 0.01, 3.0) == doctest::Approx(0.7).epsilon(1e-3));
    // Never reaching 1/e reports the full depth.
    const std::vector<double> flat(10, 1.0);
    CHECK(penetration_depth(flat, 1.0, 0.01, 0.1) == doctest::Approx(0.1));
}

TEST_CASE("transport config validation")
{
    TransportConfig cfg;
    cfg.n_photons = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.roulette_threshold = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.roulette_survival_factor = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

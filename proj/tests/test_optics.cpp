#include "support.hpp"

#include "oxyspec/error.hpp"
#include "oxyspec/optics.hpp"

#include <algorithm>
#include <numbers>

using namespace oxyspec;

TEST_CASE("point prior yields exactly that tissue")
{
    LayerParams p;
    p.oxygenation = 0.42;
    p.blood_volume_fraction = 0.07;
    p.thickness = 0.8;
    p.scatter_amplitude = 17.0;
    p.scatter_power = 1.3;
    p.anisotropy = 0.88;
    p.refractive_index = 1.37;
    const auto priors = PriorConfig::shared(LayerPrior::point(p));
    for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
        const auto t = sample_tissue(priors, seed);
        for (const auto& layer : t.layers)
            CHECK(layer == p);
    }
}

TEST_CASE("sampling is deterministic per seed")
{
    const PriorConfig priors;
    CHECK(sample_tissue(priors, 7) == sample_tissue(priors, 7));
    CHECK_FALSE(sample_tissue(priors, 7) == sample_tissue(priors, 8));
}

TEST_CASE("oxygenation draws are uniform on [0,1]")
{
    const PriorConfig priors;
    constexpr int n = 10'000;
    std::vector<double> s;
    s.reserve(n);
    for (int i = 0; i < n; ++i)
        s.push_back(sample_tissue(priors, static_cast<std::uint64_t>(i)).layers[0].oxygenation);

    double mean = 0.0;
    for (double v : s)
        mean += v;
    mean /= n;
    CHECK(std::abs(mean - 0.5) <= 0.02);

    // One-sample Kolmogorov-Smirnov against U(0,1); critical value at alpha = 0.01.
    std::sort(s.begin(), s.end());
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
        d = std::max(d, (i + 1.0) / n - s[i]);
        d = std::max(d, s[i] - static_cast<double>(i) / n);
    }
    CHECK(d < 1.628 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("invalid prior range names the field")
{
    PriorConfig priors;
    priors.layers[1].thickness = {2.0, 1.0};
    try {
        priors.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("thickness") != std::string::npos);
    }
}

TEST_CASE("optical properties")
{
    LayerParams p;
    SUBCASE("no blood, no absorption")
    {
        p.blood_volume_fraction = 0.0;
        for (double wl = 440; wl <= 640; wl += 4)
            CHECK(optical_properties(p, wl).mu_a == 0.0);
    }
    SUBCASE("absorption from the 500 nm table row")
    {
        p.oxygenation = 1.0;
        p.blood_volume_fraction = 0.1;
        // Row "500,20932.8,20862" of the bundled table.
        const double expected = 0.1 * (150.0 / 64500.0) * std::numbers::ln10 * 20932.8;
        CHECK(optical_properties(p, 500.0).mu_a == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("scattering power law")
    {
        p.anisotropy = 0.9;
        p.scatter_amplitude = 20.0;
        p.scatter_power = 1.0;
        const auto o = optical_properties(p, 500.0);
        CHECK(o.mu_s == doctest::Approx(200.0).epsilon(1e-12));
        CHECK(o.g == 0.9);
    }
    SUBCASE("outside the table")
    {
        CHECK_THROWS_AS(optical_properties(p, 300.0), DomainError);
    }
}

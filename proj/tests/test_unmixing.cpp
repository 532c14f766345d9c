#include "support.hpp"

#include "oxyspec/error.hpp"
#include "oxyspec/random.hpp"
#include "oxyspec/unmixing.hpp"

#include <Eigen/Dense>

using namespace oxyspec;

namespace {

/// Continuous Beer-Lambert spectrum on the camera grid, band-integrated.
std::vector<double> forward_spectrum(const CameraModel& cam, double so2, double k)
{
    const auto& table = ExtinctionTable::builtin();
    std::vector<double> r;
    for (double wl : cam.wavelengths) {
        const auto e = table.at(wl);
        r.push_back(std::exp(-k * (so2 * e.hbo2 + (1.0 - so2) * e.hb)));
    }
    return adapt_to_camera(cam.wavelengths, r, cam).values;
}

/// Exhaustive search over which constrained variables sit at zero.
Eigen::VectorXd brute_force_nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                 const std::vector<bool>& constrained)
{
    const int n = static_cast<int>(a.cols());
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_x = Eigen::VectorXd::Zero(n);
    for (int mask = 0; mask < (1 << n); ++mask) {
        std::vector<int> free;
        bool skip = false;
        for (int j = 0; j < n; ++j) {
            const bool zero = mask & (1 << j);
            if (zero && !constrained[j])
                skip = true;
            if (!zero)
                free.push_back(j);
        }
        if (skip)
            continue;
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
        if (!free.empty()) {
            Eigen::MatrixXd sub(a.rows(), static_cast<Eigen::Index>(free.size()));
            for (std::size_t j = 0; j < free.size(); ++j)
                sub.col(static_cast<Eigen::Index>(j)) = a.col(free[j]);
            const Eigen::VectorXd xs = sub.colPivHouseholderQr().solve(b);
            for (std::size_t j = 0; j < free.size(); ++j)
                x[free[j]] = xs[static_cast<Eigen::Index>(j)];
        }
        bool feasible = true;
        for (int j = 0; j < n; ++j)
            if (constrained[j] && x[j] < -1e-12)
                feasible = false;
        const double res = (a * x - b).squaredNorm();
        if (feasible && res < best - 1e-15) {
            best = res;
            best_x = x;
        }
    }
    return best_x;
}

} // namespace

TEST_CASE("endmember matrix")
{
    const auto em = make_endmembers(make_camera_model());
    CHECK(em.bands() == 16);
    CHECK(em.columns.leftCols(2).maxCoeff() == doctest::Approx(1.0));
    CHECK(em.columns.leftCols(2).minCoeff() > 0.0);
    CHECK(em.columns.col(EndmemberMatrix::kOffset).isOnes());
    CHECK(em.columns(0, EndmemberMatrix::kSlope) == doctest::Approx(-0.5));
    CHECK(em.columns(15, EndmemberMatrix::kSlope) == doctest::Approx(0.5));
    EndmemberMatrix bad = em;
    bad.columns.col(1) = bad.columns.col(0);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("constrained least squares against exhaustive search")
{
    Rng rng(13);
    const std::vector<bool> constrained{true, true, false, false};
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::MatrixXd a(16, 4);
        Eigen::VectorXd b(16);
        for (Eigen::Index i = 0; i < a.size(); ++i)
            a.data()[i] = rng.normal();
        for (Eigen::Index i = 0; i < b.size(); ++i)
            b[i] = rng.normal();
        const std::vector<bool> flags = constrained;
        bool c[4] = {flags[0], flags[1], flags[2], flags[3]};
        const auto x = nnls(a, b, std::span<const bool>(c, 4));
        const auto ref = brute_force_nnls(a, b, constrained);
        CHECK((a * x - b).squaredNorm() == doctest::Approx((a * ref - b).squaredNorm()).epsilon(1e-9));
        CHECK((x - ref).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(x[0] >= 0.0);
        CHECK(x[1] >= 0.0);
    }
}

TEST_CASE("oxygenation from forward-model spectra")
{
    const auto cam = make_camera_model();
    const auto em = make_endmembers(cam);
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(16, 16);

    SUBCASE("continuous construction, optically thin")
    {
        for (double s : {0.0, 0.25, 0.5, 0.6, 0.75, 1.0}) {
            const auto spec = forward_spectrum(cam, s, 0.5e-5);
            CHECK(std::abs(unmix_so2(spec, em, id).so2 - s) <= 0.01);
        }
    }
    SUBCASE("exact endmember model")
    {
        for (double s : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            for (double total : {0.2, 1.0, 3.0}) {
                Eigen::Vector4d c(total * s, total * (1.0 - s), 0.3, -0.05);
                const Eigen::VectorXd absorbance = em.columns * c;
                std::vector<double> r;
                for (Eigen::Index b = 0; b < absorbance.size(); ++b)
                    r.push_back(std::exp(-absorbance[b]));
                const auto out = unmix_so2(r, em, id);
                CHECK(out.so2 == doctest::Approx(s).scale(1.0).epsilon(1e-9));
                CHECK_FALSE(out.degenerate);
            }
        }
    }
    SUBCASE("scale invariance")
    {
        const auto spec = forward_spectrum(cam, 0.6, 0.5e-5);
        const double ref = unmix_so2(spec, em, id).so2;
        for (double c : {0.01, 0.5, 7.0}) {
            auto scaled = spec;
            for (auto& v : scaled)
                v *= c;
            CHECK(unmix_so2(scaled, em, id).so2 == doctest::Approx(ref).epsilon(1e-9));
        }
    }
    SUBCASE("no hemoglobin signal")
    {
        const std::vector<double> flat(16, 0.4);
        const auto out = unmix_so2(flat, em, id);
        CHECK(out.degenerate);
        CHECK(out.so2 == 0.5);
    }
    SUBCASE("non-positive reflectance")
    {
        std::vector<double> bad(16, 0.4);
        bad[3] = 0.0;
        CHECK_THROWS_AS(unmix_so2(bad, em, id), DomainError);
    }
}

TEST_CASE("unmixing maps")
{
    const auto cam = make_camera_model();
    const auto em = make_endmembers(cam);
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(16, 16);

    SUBCASE("constant cube")
    {
        const auto spec = forward_spectrum(cam, 0.3, 0.5e-5);
        Hypercube cube(6, 9, 16);
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 9; ++x)
                for (int b = 0; b < 16; ++b)
                    cube.at(y, x, b) = static_cast<float>(spec[b]);
        const auto map = unmix_map(cube, em, id);
        for (float v : map.values.data)
            CHECK(v == map.values.data[0]);
    }
    SUBCASE("ramp phantom")
    {
        const int w = 41, h = 5;
        Hypercube cube(h, w, 16);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const auto spec = forward_spectrum(cam, static_cast<double>(x) / (w - 1), (0.2 + 0.1 * y) * 1e-5);
                for (int b = 0; b < 16; ++b)
                    cube.at(y, x, b) = static_cast<float>(spec[b] * (0.5 + 0.1 * y));
            }
        const auto map = unmix_map(cube, em, id);
        double mad = 0.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                mad += std::abs(map.values.at(y, x) - static_cast<double>(x) / (w - 1));
        CHECK(mad / (w * h) <= 0.02);
    }
    SUBCASE("bad pixels are flagged, not fatal")
    {
        Hypercube cube(2, 2, 16, 0.3f);
        cube.at(1, 1, 4) = -1.0f;
        const auto map = unmix_map(cube, em, id);
        CHECK(map.degenerate[3] == 1);
        CHECK(map.values.data[3] == 0.0f);
    }
}

TEST_CASE("endmember CSV round trip")
{
    testing::TempDir dir("endmembers");
    const auto em = make_endmembers(make_camera_model());
    save_endmembers_csv(em, dir / "em.csv");
    const auto loaded = load_endmembers_csv(dir / "em.csv");
    CHECK((loaded.columns - em.columns).cwiseAbs().maxCoeff() < 1e-12);
}

#include "support.hpp"

#include "oxyspec/clinical.hpp"
#include "oxyspec/error.hpp"
#include "oxyspec/random.hpp"

#include <Eigen/Dense>

using namespace oxyspec;

namespace {

std::vector<LactatePoint> exponential_points(double a, double b, int n, double noise_sd, Rng& rng)
{
    std::vector<LactatePoint> pts;
    for (int i = 0; i < n; ++i) {
        const double o2 = static_cast<double>(i) / (n - 1);
        pts.push_back({o2, a * std::exp(b * o2 + noise_sd * rng.normal())});
    }
    return pts;
}

} // namespace

TEST_CASE("frame calibration")
{
    const std::vector<double> light(16, 2.0);
    SUBCASE("raw equal to dark gives flagged zeros")
    {
        Image raw(8, 8, 100.0f);
        const auto f = calibrate_frame(raw, raw, light);
        CHECK(f.degenerate_count() == 64);
        for (float v : f.cube.data)
            CHECK(v == 0.0f);
        CHECK(f.demosaicked);
    }
    SUBCASE("constant mosaic demosaics to a constant cube")
    {
        Image mosaic(13, 10, 7.5f);
        const auto cube = demosaic(mosaic);
        CHECK(cube.bands == 16);
        for (float v : cube.data)
            CHECK(std::abs(v - 7.5f) <= 1e-6f);
    }
    SUBCASE("demosaicking recovers a band's lattice samples")
    {
        Image mosaic(12, 12);
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 12; ++x)
                mosaic.at(y, x) = static_cast<float>(10 * (y % 4) + (x % 4) + y * 0.01);
        const auto cube = demosaic(mosaic);
        for (int b = 0; b < 16; ++b)
            for (int y = b / 4; y < 12; y += 4)
                for (int x = b % 4; x < 12; x += 4)
                    CHECK(cube.at(y, x, b) == mosaic.at(y, x));
    }
    SUBCASE("cube path skips demosaicking")
    {
        Hypercube raw(3, 4, 16), dark(3, 4, 16, 1.0f);
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 4; ++x)
                for (int b = 0; b < 16; ++b)
                    raw.at(y, x, b) = 1.0f + static_cast<float>(b + 1);
        const auto f = calibrate_frame(raw, dark, light);
        CHECK_FALSE(f.demosaicked);
        CHECK(f.normalized);
        CHECK(f.degenerate_count() == 0);
        std::vector<double> px(16);
        for (int b = 0; b < 16; ++b)
            px[b] = f.cube.at(2, 3, b);
        CHECK(band_area(px) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(f.cube.at(0, 0, 5) / f.cube.at(0, 0, 0) == doctest::Approx(6.0).epsilon(1e-6));
    }
    SUBCASE("scaling raw, dark and light together changes nothing")
    {
        Image raw(8, 12), dark(8, 12, 3.0f);
        Rng rng(8);
        for (auto& v : raw.data)
            v = static_cast<float>(10.0 + 50.0 * rng.uniform());
        std::vector<double> ref(16);
        for (int b = 0; b < 16; ++b)
            ref[b] = 1.0 + 0.1 * b;
        const auto a = calibrate_frame(raw, dark, ref);
        for (auto& v : raw.data)
            v *= 4.0f;
        for (auto& v : dark.data)
            v *= 4.0f;
        for (auto& v : ref)
            v *= 4.0;
        const auto b = calibrate_frame(raw, dark, ref);
        for (std::size_t i = 0; i < a.cube.data.size(); ++i)
            CHECK(b.cube.data[i] == doctest::Approx(a.cube.data[i]).epsilon(1e-5));
    }
    SUBCASE("bad light reference")
    {
        Image raw(8, 8, 1.0f);
        std::vector<double> bad = light;
        bad[2] = 0.0;
        CHECK_THROWS_AS(calibrate_frame(raw, raw, bad), CalibrationError);
        CHECK_THROWS_AS(calibrate_frame(raw, raw, std::vector<double>(15, 1.0)), ShapeError);
    }
}

TEST_CASE("region of interest")
{
    SUBCASE("constant map")
    {
        Image map(40, 40, 0.42f);
        CHECK(roi_oxygenation(map, {20, 20, 20}) == doctest::Approx(0.42).epsilon(1e-7));
    }
    SUBCASE("checkerboard")
    {
        Image map(40, 40);
        for (int y = 0; y < 40; ++y)
            for (int x = 0; x < 40; ++x)
                map.at(y, x) = static_cast<float>((x + y) % 2);
        CHECK(roi_oxygenation(map, {17, 23, 20}) == 0.5);
    }
    SUBCASE("random map against a direct sum")
    {
        Image map(50, 60);
        Rng rng(4);
        for (auto& v : map.data)
            v = static_cast<float>(rng.uniform());
        for (int trial = 0; trial < 20; ++trial) {
            const int cx = 10 + static_cast<int>(rng.below(41));
            const int cy = 10 + static_cast<int>(rng.below(31));
            double sum = 0.0;
            for (int y = cy - 10; y < cy + 10; ++y)
                for (int x = cx - 10; x < cx + 10; ++x)
                    sum += map.at(y, x);
            CHECK(std::abs(roi_oxygenation(map, {cx, cy, 20}) - sum / 400.0) <= 1e-12);
        }
    }
    SUBCASE("window outside the map")
    {
        Image map(40, 40, 0.5f);
        CHECK_THROWS_AS(roi_oxygenation(map, {5, 20, 20}), ShapeError);
        CHECK_THROWS_AS(roi_oxygenation(map, {20, 35, 20}), ShapeError);
    }
}

TEST_CASE("exponential lactate fit")
{
    SUBCASE("noise-free points are fitted exactly")
    {
        Rng rng(1);
        const auto pts = exponential_points(1.5, -5.0, 12, 0.0, rng);
        const auto fit = fit_lactate_exponential(pts);
        CHECK(fit.a == doctest::Approx(1.5).epsilon(1e-9));
        CHECK(fit.b == doctest::Approx(-5.0).epsilon(1e-9));
        CHECK(fit.mae < 1e-9);
        CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(fit.correlation < 0.0);
    }
    SUBCASE("matches an independent log-space regression")
    {
        Rng rng(2);
        const auto pts = exponential_points(4.0, -1.8, 33, 0.1, rng);
        Eigen::MatrixXd design(33, 2);
        Eigen::VectorXd y(33);
        for (int i = 0; i < 33; ++i) {
            design(i, 0) = 1.0;
            design(i, 1) = pts[i].oxygenation;
            y[i] = std::log(pts[i].lactate);
        }
        const Eigen::Vector2d beta = design.colPivHouseholderQr().solve(y);
        const auto fit = fit_lactate_exponential(pts);
        CHECK(fit.a == doctest::Approx(std::exp(beta[0])).epsilon(1e-10));
        CHECK(fit.b == doctest::Approx(beta[1]).epsilon(1e-10));
        const double ss_res = (design * beta - y).squaredNorm();
        const double ss_tot = (y.array() - y.mean()).square().sum();
        CHECK(fit.r_squared == doctest::Approx(1.0 - ss_res / ss_tot).epsilon(1e-10));
    }
    SUBCASE("log-normal noise")
    {
        Rng rng(3);
        const auto pts = exponential_points(1.5, -5.0, 33, 0.1, rng);
        const auto fit = fit_lactate_exponential(pts);
        CHECK(std::abs(fit.a / 1.5 - 1.0) <= 0.1);
        CHECK(std::abs(fit.b / -5.0 - 1.0) <= 0.1);
        CHECK(fit.r_squared > 0.9);
        CHECK(fit.correlation < 0.0);
    }
    SUBCASE("order independent")
    {
        Rng rng(5);
        auto pts = exponential_points(3.0, -1.0, 20, 0.2, rng);
        const auto a = fit_lactate_exponential(pts);
        std::reverse(pts.begin(), pts.end());
        const auto b = fit_lactate_exponential(pts);
        CHECK(a.a == b.a);
        CHECK(a.mae == b.mae);
        auto twice = pts;
        twice.insert(twice.end(), pts.begin(), pts.end());
        const auto c = fit_lactate_exponential(twice);
        CHECK(c.a == doctest::Approx(a.a).epsilon(1e-12));
        CHECK(c.b == doctest::Approx(a.b).epsilon(1e-12));
    }
    SUBCASE("errors")
    {
        std::vector<LactatePoint> two{{0.3, 2.0}, {0.6, 1.0}};
        CHECK_THROWS_AS(fit_lactate_exponential(two), FitError);
        std::vector<LactatePoint> bad{{0.3, 2.0}, {0.6, 0.0}, {0.7, 1.0}};
        CHECK_THROWS_AS(fit_lactate_exponential(bad), FitError);
        std::vector<LactatePoint> flat{{0.5, 2.0}, {0.5, 1.0}, {0.5, 3.0}};
        CHECK_THROWS_AS(fit_lactate_exponential(flat), NumericError);
    }
    SUBCASE("curve samples")
    {
        LactateFit fit;
        fit.a = 2.0;
        fit.b = -1.0;
        const auto curve = fit_curve(fit, 0.0, 1.0, 11);
        CHECK(curve.size() == 11);
        CHECK(curve.front().lactate == 2.0);
        CHECK(curve.back().lactate == doctest::Approx(2.0 * std::exp(-1.0)));
    }
}

TEST_CASE("rendering")
{
    CHECK(palette_color(0.0) == Rgb{68, 1, 84});
    CHECK(palette_color(1.0) == Rgb{253, 231, 37});
    CHECK(palette_color(-3.0) == palette_color(0.0));

    testing::TempDir dir("render");
    SUBCASE("constant map gives a uniform image and an exact sidecar")
    {
        Image map(9, 14, 0.625f);
        const auto sidecar = render_oxygenation_map(map, dir / "map.png");
        int h = 0, w = 0;
        const auto px = read_png_rgb(dir / "map.png", h, w);
        CHECK(h == 9);
        CHECK(w == 14);
        for (const auto& c : px)
            CHECK(c == palette_color(0.625));
        CHECK(sidecar == dir / "map.npy");
        const auto back = load_npy_image(sidecar);
        CHECK(back.data == map.data);
    }
    SUBCASE("random map sidecar is bit exact")
    {
        Image map(16, 16);
        Rng rng(6);
        for (auto& v : map.data)
            v = static_cast<float>(rng.uniform());
        render_oxygenation_map(map, dir / "r.png");
        CHECK(load_npy_image(dir / "r.npy").data == map.data);
    }
    SUBCASE("values outside [0,1] are rejected")
    {
        Image map(2, 2, 1.5f);
        CHECK_THROWS_AS(render_oxygenation_map(map, dir / "bad.png"), DomainError);
    }
}

TEST_CASE("manifest round trip")
{
    testing::TempDir dir("manifest");
    const std::vector<RoiMeasurement> rows{
        {"f01", SiteKind::well_perfused, 30, 40, 1.25},
        {"f02", SiteKind::anastomosis, 100, 12, 2.5},
        {"f03", SiteKind::ischemic, 64, 64, 7.75},
    };
    save_manifest(rows, dir / "m.csv");
    const auto back = load_manifest(dir / "m.csv");
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].frame_id == rows[i].frame_id);
        CHECK(back[i].site == rows[i].site);
        CHECK(back[i].x == rows[i].x);
        CHECK(back[i].y == rows[i].y);
        CHECK(back[i].lactate == rows[i].lactate);
    }
    CHECK_THROWS(parse_site_kind("necrotic"));
}

TEST_CASE("benchmark harness")
{
    const auto em = make_endmembers(make_camera_model());
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(16, 16);

    SUBCASE("single iteration")
    {
        const auto frame = synthetic_frame(em, 8, 8, 1);
        const auto r = benchmark_unmixing(em, id, frame, 1, 0);
        CHECK(r.iterations == 1);
        CHECK(r.samples_ms.size() == 1);
        CHECK(r.std_ms == 0.0);
        CHECK(r.fps == doctest::Approx(1000.0 / r.mean_ms));
    }
    SUBCASE("time scales with the pixel count")
    {
        const auto small = synthetic_frame(em, 32, 64, 2);
        const auto large = synthetic_frame(em, 64, 64, 2);
        const auto a = benchmark_unmixing(em, id, small, 5, 1);
        const auto b = benchmark_unmixing(em, id, large, 5, 1);
        const double ratio = b.mean_ms / a.mean_ms;
        INFO("ratio " << ratio);
        CHECK(ratio > 2.0 * 0.7);
        CHECK(ratio < 2.0 * 1.3);
    }
    SUBCASE("reports survive formatting")
    {
        const auto frame = synthetic_frame(em, 4, 4, 3);
        std::vector<BenchmarkReport> reports{benchmark_unmixing(em, id, frame, 3, 1)};
        nn::Network<float> net(nn::NetworkSpec::fcn(), 1);
        reports.push_back(benchmark_network("fcn", net, frame, 2, 0));
        const auto text = format_report(reports[0]) + "\n" + format_report(reports[1]);
        const auto back = parse_reports(text);
        REQUIRE(back.size() == 2);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(back[i].method == reports[i].method);
            CHECK(back[i].iterations == reports[i].iterations);
            CHECK(back[i].height == 4);
            CHECK(back[i].bands == 16);
            CHECK(back[i].mean_ms == doctest::Approx(reports[i].mean_ms).epsilon(1e-6));
        }
    }
}

#include "oxyspec/clinical.hpp"

#include "oxyspec/csv.hpp"
#include "oxyspec/error.hpp"
#include "oxyspec/random.hpp"
#include "oxyspec/spectral.hpp"

#include <png.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace oxyspec {

namespace {

// Matplotlib's viridis at 17 evenly spaced stops.
constexpr std::array<Rgb, 17> kPalette{{
    {68, 1, 84},    {72, 24, 106},  {71, 45, 123},  {66, 64, 134},  {59, 82, 139},
    {51, 99, 141},  {44, 114, 142}, {38, 130, 142}, {33, 145, 140}, {31, 160, 136},
    {40, 174, 128}, {63, 188, 115}, {94, 201, 98},  {132, 212, 75}, {173, 220, 48},
    {216, 226, 25}, {253, 231, 37},
}};

void check_light(std::span<const double> light, int bands)
{
    if (light.size() != static_cast<std::size_t>(bands))
        throw ShapeError("calibration: light reference has " + std::to_string(light.size()) +
                         " bands, frame has " + std::to_string(bands));
    for (std::size_t b = 0; b < light.size(); ++b)
        if (!(light[b] > 0.0) || !std::isfinite(light[b]))
            throw CalibrationError("calibration: light reference must be > 0 (band " +
                                   std::to_string(b) + ")");
}

// Light division and per-pixel AUC normalization of a dark-subtracted cube.
Frame finish_calibration(Hypercube cube, Hypercube dark, std::span<const double> light,
                         bool demosaicked)
{
    Frame f;
    f.light_reference.assign(light.begin(), light.end());
    f.degenerate.assign(cube.pixels(), 0);
    std::vector<double> px(static_cast<std::size_t>(cube.bands));
    for (std::size_t p = 0; p < cube.pixels(); ++p) {
        float* v = cube.data.data() + p * cube.bands;
        for (int b = 0; b < cube.bands; ++b)
            px[b] = v[b] / light[b];
        if (!(band_area(px) > 0.0)) {
            f.degenerate[p] = 1;
            std::fill(v, v + cube.bands, 0.0f);
            continue;
        }
        auc_normalize_inplace(std::span<double>(px));
        for (int b = 0; b < cube.bands; ++b)
            v[b] = static_cast<float>(px[b]);
    }
    f.cube = std::move(cube);
    f.dark = std::move(dark);
    f.demosaicked = demosaicked;
    f.dark_subtracted = f.light_corrected = f.normalized = true;
    return f;
}

int lattice_pair(int pos, int offset, int last, int pattern, double& t)
{
    if (pos <= offset) {
        t = 0.0;
        return offset;
    }
    if (pos >= last) {
        t = 0.0;
        return last;
    }
    const int lo = offset + (pos - offset) / pattern * pattern;
    t = static_cast<double>(pos - lo) / pattern;
    return lo;
}

} // namespace

std::size_t Frame::degenerate_count() const noexcept
{
    return static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), 1));
}

Hypercube demosaic(const Image& mosaic, int pattern)
{
    mosaic.validate();
    if (pattern < 1)
        throw ConfigError("demosaic: pattern size must be >= 1");
    if (mosaic.height < pattern || mosaic.width < pattern)
        throw ShapeError("demosaic: frame smaller than one mosaic tile");
    const int bands = pattern * pattern;
    Hypercube cube(mosaic.height, mosaic.width, bands);
    for (int b = 0; b < bands; ++b) {
        const int oy = b / pattern, ox = b % pattern;
        const int last_y = oy + (mosaic.height - 1 - oy) / pattern * pattern;
        const int last_x = ox + (mosaic.width - 1 - ox) / pattern * pattern;
        for (int y = 0; y < mosaic.height; ++y) {
            double ty;
            const int y0 = lattice_pair(y, oy, last_y, pattern, ty);
            const int y1 = ty > 0.0 ? y0 + pattern : y0;
            for (int x = 0; x < mosaic.width; ++x) {
                double tx;
                const int x0 = lattice_pair(x, ox, last_x, pattern, tx);
                const int x1 = tx > 0.0 ? x0 + pattern : x0;
                const double top = (1 - tx) * mosaic.at(y0, x0) + tx * mosaic.at(y0, x1);
                const double bottom = (1 - tx) * mosaic.at(y1, x0) + tx * mosaic.at(y1, x1);
                cube.at(y, x, b) = static_cast<float>((1 - ty) * top + ty * bottom);
            }
        }
    }
    return cube;
}

Frame calibrate_frame(const Image& raw, const Image& dark, std::span<const double> light_reference)
{
    raw.validate();
    dark.validate();
    if (raw.height != dark.height || raw.width != dark.width)
        throw ShapeError("calibration: dark frame does not match raw frame");
    check_light(light_reference, kMosaicSize * kMosaicSize);
    Image sub(raw.height, raw.width);
    for (std::size_t i = 0; i < raw.data.size(); ++i)
        sub.data[i] = std::max(0.0f, raw.data[i] - dark.data[i]);
    return finish_calibration(demosaic(sub), demosaic(dark), light_reference, true);
}

Frame calibrate_frame(const Hypercube& raw, const Hypercube& dark,
                      std::span<const double> light_reference)
{
    raw.validate();
    dark.validate();
    if (raw.height != dark.height || raw.width != dark.width || raw.bands != dark.bands)
        throw ShapeError("calibration: dark cube does not match raw cube");
    check_light(light_reference, raw.bands);
    Hypercube sub = raw;
    for (std::size_t i = 0; i < sub.data.size(); ++i)
        sub.data[i] = std::max(0.0f, raw.data[i] - dark.data[i]);
    return finish_calibration(std::move(sub), dark, light_reference, false);
}

double roi_oxygenation(const Image& map, const Roi& roi)
{
    map.validate();
    if (roi.size < 1)
        throw ShapeError("roi: size must be >= 1");
    if (roi.x0() < 0 || roi.y0() < 0 || roi.x0() + roi.size > map.width ||
        roi.y0() + roi.size > map.height)
        throw ShapeError("roi centered at (" + std::to_string(roi.x) + ", " +
                         std::to_string(roi.y) + ") leaves the " + std::to_string(map.width) +
                         "x" + std::to_string(map.height) + " map");
    double sum = 0.0;
    for (int y = roi.y0(); y < roi.y0() + roi.size; ++y)
        for (int x = roi.x0(); x < roi.x0() + roi.size; ++x)
            sum += map.at(y, x);
    return sum / (static_cast<double>(roi.size) * roi.size);
}

std::string_view to_string(SiteKind kind)
{
    switch (kind) {
    case SiteKind::well_perfused: return "well_perfused";
    case SiteKind::anastomosis: return "anastomosis";
    case SiteKind::ischemic: return "ischemic";
    }
    return "unknown";
}

SiteKind parse_site_kind(std::string_view text)
{
    for (auto k : {SiteKind::well_perfused, SiteKind::anastomosis, SiteKind::ischemic})
        if (text == to_string(k))
            return k;
    throw DataError("unknown site kind '" + std::string(text) +
                    "' (expected well_perfused, anastomosis or ischemic)");
}

std::vector<RoiMeasurement> load_manifest(const std::filesystem::path& path)
{
    const auto table = csv::read_file(path);
    const auto c_id = table.column("frame_id"), c_site = table.column("site_kind"),
               c_x = table.column("x"), c_y = table.column("y"),
               c_l = table.column("lactate_mmol_per_l");
    std::vector<RoiMeasurement> out;
    for (const auto& row : table.rows) {
        RoiMeasurement m;
        m.frame_id = row[c_id];
        m.site = parse_site_kind(row[c_site]);
        m.x = static_cast<int>(csv::to_int(row[c_x]));
        m.y = static_cast<int>(csv::to_int(row[c_y]));
        m.lactate = csv::to_double(row[c_l]);
        if (!(m.lactate > 0.0))
            throw DataError("manifest '" + path.string() + "': lactate must be > 0");
        out.push_back(std::move(m));
    }
    return out;
}

void save_manifest(std::span<const RoiMeasurement> rows, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path.string() + "'");
    out << "frame_id,site_kind,x,y,lactate_mmol_per_l\n";
    out.precision(17);
    for (const auto& m : rows)
        out << m.frame_id << ',' << to_string(m.site) << ',' << m.x << ',' << m.y << ','
            << m.lactate << '\n';
}

double LactateFit::predict(double oxygenation) const noexcept
{
    return a * std::exp(b * oxygenation);
}

LactateFit fit_lactate_exponential(std::span<const LactatePoint> input)
{
    if (input.size() < 3)
        throw FitError("lactate fit: need at least 3 points, got " + std::to_string(input.size()));
    std::vector<LactatePoint> pts(input.begin(), input.end());
    for (const auto& p : pts)
        if (!(p.lactate > 0.0) || !std::isfinite(p.lactate) || !std::isfinite(p.oxygenation))
            throw FitError("lactate fit: lactate must be finite and > 0");
    // Fixed summation order makes the result independent of input order.
    std::sort(pts.begin(), pts.end(), [](const LactatePoint& l, const LactatePoint& r) {
        return l.oxygenation != r.oxygenation ? l.oxygenation < r.oxygenation
                                              : l.lactate < r.lactate;
    });
    const double n = static_cast<double>(pts.size());
    double mx = 0.0, my = 0.0, ml = 0.0;
    for (const auto& p : pts) {
        mx += p.oxygenation;
        my += std::log(p.lactate);
        ml += p.lactate;
    }
    mx /= n;
    my /= n;
    ml /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0, sll = 0.0, sxl = 0.0;
    for (const auto& p : pts) {
        const double dx = p.oxygenation - mx, dy = std::log(p.lactate) - my,
                     dl = p.lactate - ml;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sll += dl * dl;
        sxl += dx * dl;
    }
    if (!(sxx > 1e-24 * n))
        throw NumericError("lactate fit: oxygenation values have no spread (singular fit)");

    LactateFit fit;
    fit.n_points = pts.size();
    fit.b = sxy / sxx;
    fit.a = std::exp(my - fit.b * mx);
    double ss_res = 0.0;
    std::vector<double> abs_err;
    for (const auto& p : pts) {
        const double r = std::log(p.lactate) - (my + fit.b * (p.oxygenation - mx));
        ss_res += r * r;
        abs_err.push_back(std::abs(p.lactate - fit.predict(p.oxygenation)));
    }
    fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    for (double e : abs_err)
        fit.mae += e;
    fit.mae /= n;
    for (double e : abs_err)
        fit.mae_std += (e - fit.mae) * (e - fit.mae);
    fit.mae_std = std::sqrt(fit.mae_std / n);
    fit.correlation = sll > 0.0 ? sxl / std::sqrt(sxx * sll) : 0.0;
    return fit;
}

std::vector<LactatePoint> fit_curve(const LactateFit& fit, double lo, double hi, int samples)
{
    if (samples < 2)
        throw ConfigError("fit curve: need at least 2 samples");
    std::vector<LactatePoint> out;
    for (int i = 0; i < samples; ++i) {
        const double o2 = lo + (hi - lo) * i / (samples - 1);
        out.push_back({o2, fit.predict(o2)});
    }
    return out;
}

Rgb palette_color(double value)
{
    const double v = std::clamp(value, 0.0, 1.0) * (kPalette.size() - 1);
    const auto i = std::min(static_cast<std::size_t>(v), kPalette.size() - 2);
    const double t = v - static_cast<double>(i);
    auto mix = [t](std::uint8_t a, std::uint8_t b) {
        return static_cast<std::uint8_t>(std::lround(a + t * (b - a)));
    };
    const auto& lo = kPalette[i];
    const auto& hi = kPalette[i + 1];
    return {mix(lo.r, hi.r), mix(lo.g, hi.g), mix(lo.b, hi.b)};
}

std::filesystem::path render_oxygenation_map(const Image& map, const std::filesystem::path& png)
{
    map.validate();
    for (float v : map.data)
        if (!(v >= 0.0f && v <= 1.0f))
            throw DomainError("render: map values must lie in [0, 1]");
    std::vector<std::uint8_t> rgb(map.data.size() * 3);
    for (std::size_t i = 0; i < map.data.size(); ++i) {
        const auto c = palette_color(map.data[i]);
        rgb[3 * i] = c.r;
        rgb[3 * i + 1] = c.g;
        rgb[3 * i + 2] = c.b;
    }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(map.width);
    image.height = static_cast<png_uint_32>(map.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, png.string().c_str(), 0, rgb.data(), 0, nullptr))
        throw DataError("cannot write '" + png.string() + "': " + image.message);
    auto sidecar = png;
    sidecar.replace_extension(".npy");
    save_npy(sidecar, map);
    return sidecar;
}

std::vector<Rgb> read_png_rgb(const std::filesystem::path& png, int& height, int& width)
{
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, png.string().c_str()))
        throw FormatError("cannot read png '" + png.string() + "': " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr))
        throw FormatError("cannot decode png '" + png.string() + "': " + image.message);
    height = static_cast<int>(image.height);
    width = static_cast<int>(image.width);
    std::vector<Rgb> out(buf.size() / 3);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = {buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]};
    return out;
}

BenchmarkReport benchmark_inference(const std::string& method, const Hypercube& frame,
                                    const std::function<void(const Hypercube&)>& run,
                                    int iterations, int warmup)
{
    if (iterations < 1 || warmup < 0)
        throw ConfigError("benchmark: iterations must be >= 1 and warmup >= 0");
    frame.validate();
    BenchmarkReport r;
    r.method = method;
    r.iterations = iterations;
    r.warmup = warmup;
    r.threads = 1;
    r.height = frame.height;
    r.width = frame.width;
    r.bands = frame.bands;
    for (int i = 0; i < warmup; ++i)
        run(frame);
    r.samples_ms.reserve(static_cast<std::size_t>(iterations));
    for (int i = 0; i < iterations; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        run(frame);
        const auto t1 = std::chrono::steady_clock::now();
        r.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    for (double s : r.samples_ms)
        r.mean_ms += s;
    r.mean_ms /= iterations;
    for (double s : r.samples_ms)
        r.std_ms += (s - r.mean_ms) * (s - r.mean_ms);
    r.std_ms = std::sqrt(r.std_ms / iterations);
    r.fps = 1000.0 / r.mean_ms;
    return r;
}

BenchmarkReport benchmark_network(const std::string& method, const nn::Network<float>& net,
                                  const Hypercube& frame, int iterations, int warmup)
{
    volatile float sink = 0.0f;
    return benchmark_inference(
        method, frame,
        [&](const Hypercube& f) { sink = sink + nn::infer_map(net, f, true).values.data[0]; },
        iterations, warmup);
}

BenchmarkReport benchmark_unmixing(const EndmemberMatrix& em, const Eigen::MatrixXd& correction,
                                   const Hypercube& frame, int iterations, int warmup)
{
    volatile float sink = 0.0f;
    return benchmark_inference(
        "unmixing", frame,
        [&](const Hypercube& f) { sink = sink + unmix_map(f, em, correction).values.data[0]; },
        iterations, warmup);
}

Hypercube synthetic_frame(const EndmemberMatrix& em, int height, int width, std::uint64_t seed)
{
    em.validate();
    if (height < 1 || width < 1)
        throw ShapeError("synthetic_frame: empty frame");
    const int bands = static_cast<int>(em.bands());
    Hypercube cube(height, width, bands);
    Rng rng(seed);
    Eigen::Vector4d c;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            c << rng.uniform(), rng.uniform(), 0.5 * rng.uniform(), 0.2 * rng.uniform() - 0.1;
            const Eigen::VectorXd absorbance = em.columns * c;
            auto px = cube.pixel(y, x);
            for (int b = 0; b < bands; ++b)
                px[b] = static_cast<float>(std::exp(-absorbance[b]));
        }
    }
    return cube;
}

std::string format_report(const BenchmarkReport& r)
{
    std::ostringstream out;
    out.precision(10);
    out << "method=" << r.method << '\n'
        << "iterations=" << r.iterations << '\n'
        << "warmup=" << r.warmup << '\n'
        << "threads=" << r.threads << '\n'
        << "height=" << r.height << '\n'
        << "width=" << r.width << '\n'
        << "bands=" << r.bands << '\n'
        << "mean_ms=" << r.mean_ms << '\n'
        << "std_ms=" << r.std_ms << '\n'
        << "fps=" << r.fps << '\n';
    return out.str();
}

std::vector<BenchmarkReport> parse_reports(std::string_view text)
{
    std::vector<BenchmarkReport> out;
    std::map<std::string, std::string> kv;
    auto flush = [&] {
        if (kv.empty())
            return;
        static const char* required[] = {"method", "iterations", "warmup", "threads", "height",
                                         "width",  "bands",      "mean_ms", "std_ms", "fps"};
        for (const char* k : required)
            if (!kv.count(k))
                throw FormatError(std::string("benchmark report: missing key '") + k + "'");
        if (kv.size() != std::size(required))
            throw FormatError("benchmark report: unknown key");
        BenchmarkReport r;
        r.method = kv["method"];
        r.iterations = static_cast<int>(csv::to_int(kv["iterations"]));
        r.warmup = static_cast<int>(csv::to_int(kv["warmup"]));
        r.threads = static_cast<int>(csv::to_int(kv["threads"]));
        r.height = static_cast<int>(csv::to_int(kv["height"]));
        r.width = static_cast<int>(csv::to_int(kv["width"]));
        r.bands = static_cast<int>(csv::to_int(kv["bands"]));
        r.mean_ms = csv::to_double(kv["mean_ms"]);
        r.std_ms = csv::to_double(kv["std_ms"]);
        r.fps = csv::to_double(kv["fps"]);
        out.push_back(std::move(r));
        kv.clear();
    };
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        auto line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        pos = end + 1;
        if (line.empty()) {
            flush();
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos || eq == 0)
            throw FormatError("benchmark report: expected key=value, got '" + std::string(line) + "'");
        const std::string key(line.substr(0, eq));
        if (kv.count(key))
            throw FormatError("benchmark report: duplicate key '" + key + "'");
        kv[key] = std::string(line.substr(eq + 1));
    }
    flush();
    return out;
}

} // namespace oxyspec

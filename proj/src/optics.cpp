#include "oxyspec/optics.hpp"

#include "oxyspec/csv.hpp"
#include "oxyspec/error.hpp"
#include "oxyspec/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace oxyspec {

namespace detail {
extern const char* const kBuiltinExtinctionCsv;
}

namespace {

void check_fraction(double v, const char* name)
{
    if (!(v >= 0.0 && v <= 1.0))
        throw ConfigError(std::string("layer ") + name + " must lie in [0,1], got " +
                          std::to_string(v));
}

void check_range(const Range& r, const std::string& name, double min, double max)
{
    if (!(r.lo <= r.hi))
        throw ConfigError("prior '" + name + "': lo (" + std::to_string(r.lo) + ") > hi (" +
                          std::to_string(r.hi) + ")");
    if (!(r.lo >= min && r.hi <= max))
        throw ConfigError("prior '" + name + "': range [" + std::to_string(r.lo) + ", " +
                          std::to_string(r.hi) + "] leaves [" + std::to_string(min) + ", " +
                          std::to_string(max) + "]");
}

double draw(Rng& rng, const Range& r)
{
    // A point prior must reproduce its value exactly.
    return r.lo == r.hi ? r.lo : rng.uniform(r.lo, r.hi);
}

} // namespace

void LayerParams::validate() const
{
    check_fraction(oxygenation, "oxygenation");
    check_fraction(blood_volume_fraction, "blood_volume_fraction");
    if (!(thickness > 0.0))
        throw ConfigError("layer thickness must be > 0");
    if (!(scatter_amplitude >= 0.0))
        throw ConfigError("layer scatter_amplitude must be >= 0");
    if (!(anisotropy > -1.0 && anisotropy < 1.0))
        throw ConfigError("layer anisotropy must lie in (-1,1)");
    if (!(refractive_index >= 1.0))
        throw ConfigError("layer refractive_index must be >= 1");
    if (!std::isfinite(scatter_power))
        throw ConfigError("layer scatter_power must be finite");
}

double TissueSample::total_thickness() const noexcept
{
    double total = 0.0;
    for (const auto& layer : layers)
        total += layer.thickness;
    return total;
}

LayerPrior LayerPrior::point(const LayerParams& v)
{
    LayerPrior p;
    p.oxygenation = {v.oxygenation, v.oxygenation};
    p.blood_volume_fraction = {v.blood_volume_fraction, v.blood_volume_fraction};
    p.thickness = {v.thickness, v.thickness};
    p.scatter_amplitude = {v.scatter_amplitude, v.scatter_amplitude};
    p.scatter_power = {v.scatter_power, v.scatter_power};
    p.anisotropy = {v.anisotropy, v.anisotropy};
    p.refractive_index = {v.refractive_index, v.refractive_index};
    return p;
}

PriorConfig PriorConfig::shared(const LayerPrior& prior)
{
    PriorConfig cfg;
    cfg.layers.fill(prior);
    return cfg;
}

void PriorConfig::validate() const
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& p = layers[i];
        const std::string prefix = "layer" + std::to_string(i + 1) + ".";
        check_range(p.oxygenation, prefix + "oxygenation", 0.0, 1.0);
        check_range(p.blood_volume_fraction, prefix + "blood_volume_fraction", 0.0, 1.0);
        check_range(p.thickness, prefix + "thickness", 0.0, inf);
        if (!(p.thickness.lo > 0.0))
            throw ConfigError("prior '" + prefix + "thickness': lower bound must be > 0");
        check_range(p.scatter_amplitude, prefix + "scatter_amplitude", 0.0, inf);
        check_range(p.scatter_power, prefix + "scatter_power", -inf, inf);
        check_range(p.anisotropy, prefix + "anisotropy", -1.0, 1.0);
        if (!(p.anisotropy.lo > -1.0 && p.anisotropy.hi < 1.0))
            throw ConfigError("prior '" + prefix + "anisotropy': must lie strictly inside (-1,1)");
        check_range(p.refractive_index, prefix + "refractive_index", 1.0, inf);
    }
}

TissueSample sample_tissue(const PriorConfig& priors, std::uint64_t seed)
{
    priors.validate();
    Rng rng(derive_seed(seed, stream_id("tissue")));
    TissueSample tissue;
    tissue.seed = seed;
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        const auto& p = priors.layers[i];
        auto& layer = tissue.layers[i];
        layer.oxygenation = draw(rng, p.oxygenation);
        layer.blood_volume_fraction = draw(rng, p.blood_volume_fraction);
        layer.thickness = draw(rng, p.thickness);
        layer.scatter_amplitude = draw(rng, p.scatter_amplitude);
        layer.scatter_power = draw(rng, p.scatter_power);
        layer.anisotropy = draw(rng, p.anisotropy);
        layer.refractive_index = draw(rng, p.refractive_index);
    }
    return tissue;
}

ExtinctionTable::ExtinctionTable(std::vector<double> wavelengths, std::vector<double> eps_hbo2,
                                 std::vector<double> eps_hb)
    : wavelengths_(std::move(wavelengths)), eps_hbo2_(std::move(eps_hbo2)),
      eps_hb_(std::move(eps_hb))
{
    if (wavelengths_.size() < 2 || eps_hbo2_.size() != wavelengths_.size() ||
        eps_hb_.size() != wavelengths_.size())
        throw DataError("extinction table: need >= 2 rows with matching columns");
    for (std::size_t i = 0; i < wavelengths_.size(); ++i) {
        if (i > 0 && !(wavelengths_[i] > wavelengths_[i - 1]))
            throw DataError("extinction table: wavelengths must be strictly increasing");
        if (!(eps_hbo2_[i] > 0.0) || !(eps_hb_[i] > 0.0))
            throw DataError("extinction table: coefficients must be > 0");
    }
    if (wavelengths_.front() > 440.0 || wavelengths_.back() < 640.0)
        throw DataError("extinction table: must cover 440-640 nm");
}

ExtinctionTable ExtinctionTable::from_csv(std::string_view text)
{
    const auto table = csv::parse(text);
    const auto wl = table.column("wavelength_nm");
    const auto oxy = table.column("eps_hbo2");
    const auto deoxy = table.column("eps_hb");
    std::vector<double> w, o, d;
    for (const auto& row : table.rows) {
        w.push_back(csv::to_double(row[wl]));
        o.push_back(csv::to_double(row[oxy]));
        d.push_back(csv::to_double(row[deoxy]));
    }
    return ExtinctionTable(std::move(w), std::move(o), std::move(d));
}

ExtinctionTable ExtinctionTable::load_csv(const std::filesystem::path& path)
{
    return from_csv(csv::read_text(path));
}

const ExtinctionTable& ExtinctionTable::builtin()
{
    static const ExtinctionTable table = from_csv(detail::kBuiltinExtinctionCsv);
    return table;
}

ExtinctionTable::Coefficients ExtinctionTable::at(double wavelength_nm) const
{
    if (!(wavelength_nm >= wavelengths_.front() && wavelength_nm <= wavelengths_.back()))
        throw DomainError("wavelength " + std::to_string(wavelength_nm) +
                          " nm outside extinction table [" + std::to_string(wavelengths_.front()) +
                          ", " + std::to_string(wavelengths_.back()) + "]");
    auto hi = static_cast<std::size_t>(
        std::upper_bound(wavelengths_.begin(), wavelengths_.end(), wavelength_nm) -
        wavelengths_.begin());
    if (hi >= wavelengths_.size())
        hi = wavelengths_.size() - 1;
    const std::size_t lo = hi - 1;
    const double t = (wavelength_nm - wavelengths_[lo]) / (wavelengths_[hi] - wavelengths_[lo]);
    return {eps_hbo2_[lo] + t * (eps_hbo2_[hi] - eps_hbo2_[lo]),
            eps_hb_[lo] + t * (eps_hb_[hi] - eps_hb_[lo])};
}

OpticalProperties optical_properties(const LayerParams& layer, double wavelength_nm,
                                     const ExtinctionTable& table)
{
    const auto eps = table.at(wavelength_nm);
    const double s = layer.oxygenation;
    OpticalProperties op;
    op.mu_a = layer.blood_volume_fraction * kHemeMolarConcentration * std::numbers::ln10 *
              (s * eps.hbo2 + (1.0 - s) * eps.hb);
    op.mu_s = layer.scatter_amplitude * std::pow(wavelength_nm / 500.0, -layer.scatter_power) /
              (1.0 - layer.anisotropy);
    op.g = layer.anisotropy;
    op.n = layer.refractive_index;
    return op;
}

} // namespace oxyspec

#include "oxyspec/config.hpp"

#include "oxyspec/csv.hpp"
#include "oxyspec/error.hpp"
#include "oxyspec/random.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <functional>
#include <map>
#include <sstream>

namespace oxyspec {

namespace {

using Setter = std::function<void(PipelineConfig&, const std::string&)>;

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value)
{
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(trim(item));
    return out;
}

double as_double(const std::string& key, const std::string& value)
{
    if (value == "inf" || value == "infinity")
        return std::numeric_limits<double>::infinity();
    try {
        return csv::to_double(value);
    } catch (const DataError&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
    }
}

long long as_int(const std::string& key, const std::string& value)
{
    try {
        return csv::to_int(value);
    } catch (const DataError&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + value + "'");
    }
}

long long as_positive(const std::string& key, const std::string& value)
{
    const auto v = as_int(key, value);
    if (v < 1)
        throw ConfigError("config key '" + key + "': must be >= 1");
    return v;
}

bool as_bool(const std::string& key, const std::string& value)
{
    if (value == "true" || value == "1" || value == "yes")
        return true;
    if (value == "false" || value == "0" || value == "no")
        return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + value + "'");
}

Range as_range(const std::string& key, const std::string& value)
{
    const auto parts = split_list(value);
    if (parts.size() == 1) {
        const double v = as_double(key, parts[0]);
        return {v, v};
    }
    if (parts.size() != 2)
        throw ConfigError("config key '" + key + "': expected 'lo, hi' or a single value");
    return {as_double(key, parts[0]), as_double(key, parts[1])};
}

std::vector<int> as_int_list(const std::string& key, const std::string& value)
{
    std::vector<int> out;
    for (const auto& p : split_list(value))
        out.push_back(static_cast<int>(as_positive(key, p)));
    if (out.empty())
        throw ConfigError("config key '" + key + "': empty list");
    return out;
}

using PriorField = Range LayerPrior::*;
const std::pair<const char*, PriorField> kPriorFields[] = {
    {"oxygenation", &LayerPrior::oxygenation},
    {"blood_volume_fraction", &LayerPrior::blood_volume_fraction},
    {"thickness", &LayerPrior::thickness},
    {"scatter_amplitude", &LayerPrior::scatter_amplitude},
    {"scatter_power", &LayerPrior::scatter_power},
    {"anisotropy", &LayerPrior::anisotropy},
    {"refractive_index", &LayerPrior::refractive_index},
};

std::map<std::string, Setter> make_schema(const std::filesystem::path& base)
{
    std::map<std::string, Setter> s;
    auto path_setter = [base](std::filesystem::path CameraConfig::*field) {
        return [base, field](PipelineConfig& c, const std::string& v) {
            std::filesystem::path p(v);
            if (p.is_relative())
                p = base / p;
            if (!std::filesystem::exists(p))
                throw ConfigError("config: file '" + p.string() + "' does not exist");
            c.camera.*field = p;
        };
    };

    s["general.seed"] = [](PipelineConfig& c, const std::string& v) {
        const auto x = as_int("general.seed", v);
        if (x < 0)
            throw ConfigError("config key 'general.seed': must be >= 0");
        c.seed = static_cast<std::uint64_t>(x);
    };
    s["general.threads"] = [](PipelineConfig& c, const std::string& v) {
        c.threads = static_cast<unsigned>(as_positive("general.threads", v));
    };

    for (const auto& [name, field] : kPriorFields) {
        const std::string fname = name;
        const auto f = field;
        s["prior." + fname] = [fname, f](PipelineConfig& c, const std::string& v) {
            const auto r = as_range("prior." + fname, v);
            for (auto& layer : c.priors.layers)
                layer.*f = r;
        };
        for (std::size_t i = 0; i < kLayerCount; ++i) {
            const std::string key = "prior.layer" + std::to_string(i + 1) + "." + fname;
            s[key] = [key, f, i](PipelineConfig& c, const std::string& v) {
                c.priors.layers[i].*f = as_range(key, v);
            };
        }
    }

    s["grid.nx"] = [](PipelineConfig& c, const std::string& v) { c.grid_nx = static_cast<int>(as_positive("grid.nx", v)); };
    s["grid.ny"] = [](PipelineConfig& c, const std::string& v) { c.grid_ny = static_cast<int>(as_positive("grid.ny", v)); };
    s["grid.voxel_size"] = [](PipelineConfig& c, const std::string& v) { c.voxel_size = as_double("grid.voxel_size", v); };

    s["transport.photons"] = [](PipelineConfig& c, const std::string& v) {
        c.transport.n_photons = static_cast<std::uint64_t>(as_positive("transport.photons", v));
    };
    s["transport.roulette_threshold"] = [](PipelineConfig& c, const std::string& v) {
        c.transport.roulette_threshold = as_double("transport.roulette_threshold", v);
    };
    s["transport.roulette_survival_factor"] = [](PipelineConfig& c, const std::string& v) {
        c.transport.roulette_survival_factor = as_double("transport.roulette_survival_factor", v);
    };
    s["transport.max_path_length"] = [](PipelineConfig& c, const std::string& v) {
        c.transport.max_path_length = as_double("transport.max_path_length", v);
    };
    s["transport.lateral"] = [](PipelineConfig& c, const std::string& v) {
        if (v == "periodic")
            c.transport.lateral = LateralBoundary::periodic;
        else if (v == "open")
            c.transport.lateral = LateralBoundary::open;
        else
            throw ConfigError("config key 'transport.lateral': expected periodic or open");
    };
    s["transport.verify_conservation"] = [](PipelineConfig& c, const std::string& v) {
        c.transport.verify_conservation = as_bool("transport.verify_conservation", v);
    };

    s["camera.bands"] = [](PipelineConfig& c, const std::string& v) { c.camera.bands = static_cast<int>(as_positive("camera.bands", v)); };
    s["camera.fwhm"] = [](PipelineConfig& c, const std::string& v) { c.camera.fwhm = as_double("camera.fwhm", v); };
    s["camera.first_center"] = [](PipelineConfig& c, const std::string& v) { c.camera.first_center = as_double("camera.first_center", v); };
    s["camera.last_center"] = [](PipelineConfig& c, const std::string& v) { c.camera.last_center = as_double("camera.last_center", v); };
    s["camera.shape"] = [](PipelineConfig& c, const std::string& v) {
        if (v == "gaussian")
            c.camera.shape = BandShape::gaussian;
        else if (v == "flat")
            c.camera.shape = BandShape::flat;
        else
            throw ConfigError("config key 'camera.shape': expected gaussian or flat");
    };
    s["camera.wavelengths"] = [](PipelineConfig& c, const std::string& v) {
        const auto parts = split_list(v);
        if (parts.size() != 3)
            throw ConfigError("config key 'camera.wavelengths': expected 'first, last, step' in nm");
        const double lo = as_double("camera.wavelengths", parts[0]);
        const double hi = as_double("camera.wavelengths", parts[1]);
        const double step = as_double("camera.wavelengths", parts[2]);
        if (!(step > 0.0) || !(hi > lo))
            throw ConfigError("config key 'camera.wavelengths': need last > first and step > 0");
        c.camera.wavelengths.clear();
        const auto n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
        for (int k = 0; k <= n; ++k)
            c.camera.wavelengths.push_back(lo + k * step);
    };
    s["camera.response_csv"] = path_setter(&CameraConfig::response_csv);
    s["camera.light_csv"] = path_setter(&CameraConfig::light_csv);
    s["camera.transmission_csv"] = path_setter(&CameraConfig::transmission_csv);
    s["camera.correction_csv"] = path_setter(&CameraConfig::correction_csv);

    s["dataset.count"] = [](PipelineConfig& c, const std::string& v) { c.count = static_cast<std::size_t>(as_positive("dataset.count", v)); };
    s["dataset.real_count"] = [](PipelineConfig& c, const std::string& v) { c.real_count = static_cast<std::size_t>(as_positive("dataset.real_count", v)); };
    s["dataset.real_test_count"] = [](PipelineConfig& c, const std::string& v) { c.real_test_count = static_cast<std::size_t>(as_positive("dataset.real_test_count", v)); };
    s["dataset.train_fraction"] = [](PipelineConfig& c, const std::string& v) { c.train_fraction = as_double("dataset.train_fraction", v); };
    s["dataset.strat_bins"] = [](PipelineConfig& c, const std::string& v) { c.strat_bins = static_cast<int>(as_positive("dataset.strat_bins", v)); };

    s["distortion.drift_tilt"] = [](PipelineConfig& c, const std::string& v) { c.distortion.drift_tilt = as_double("distortion.drift_tilt", v); };
    s["distortion.drift_wave_amplitude"] = [](PipelineConfig& c, const std::string& v) { c.distortion.drift_wave_amplitude = as_double("distortion.drift_wave_amplitude", v); };
    s["distortion.drift_wave_period"] = [](PipelineConfig& c, const std::string& v) { c.distortion.drift_wave_period = as_double("distortion.drift_wave_period", v); };
    s["distortion.drift_jitter"] = [](PipelineConfig& c, const std::string& v) { c.distortion.drift_jitter = as_double("distortion.drift_jitter", v); };
    s["distortion.crosstalk"] = [](PipelineConfig& c, const std::string& v) { c.distortion.crosstalk = as_double("distortion.crosstalk", v); };
    s["distortion.noise_snr_db"] = [](PipelineConfig& c, const std::string& v) { c.distortion.noise_snr_db = as_double("distortion.noise_snr_db", v); };
    s["distortion.crosstalk_csv"] = [base](PipelineConfig& c, const std::string& v) {
        std::filesystem::path p(v);
        if (p.is_relative())
            p = base / p;
        if (!std::filesystem::exists(p))
            throw ConfigError("config: file '" + p.string() + "' does not exist");
        const auto rows = csv::numeric_rows(csv::read_file(p, false));
        Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                          rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != static_cast<std::size_t>(m.cols()))
                throw ConfigError("config key 'distortion.crosstalk_csv': ragged matrix");
            for (std::size_t j = 0; j < rows[i].size(); ++j)
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
        c.distortion.crosstalk_matrix = m;
    };

    s["network.variant"] = [](PipelineConfig& c, const std::string& v) {
        nn::NetworkSpec::variant(v);
        c.variant = v;
    };
    s["network.fcn_hidden"] = [](PipelineConfig& c, const std::string& v) { c.fcn_hidden = as_int_list("network.fcn_hidden", v); };
    s["network.cnn_channels"] = [](PipelineConfig& c, const std::string& v) { c.cnn_channels = as_int_list("network.cnn_channels", v); };
    s["network.kernel"] = [](PipelineConfig& c, const std::string& v) { c.kernel = static_cast<int>(as_positive("network.kernel", v)); };
    s["network.dropout"] = [](PipelineConfig& c, const std::string& v) { c.dropout = as_double("network.dropout", v); };

    s["train.lr_generator"] = [](PipelineConfig& c, const std::string& v) { c.train.lr_generator = as_double("train.lr_generator", v); };
    s["train.lr_discriminator"] = [](PipelineConfig& c, const std::string& v) { c.train.lr_discriminator = as_double("train.lr_discriminator", v); };
    s["train.adversarial_weight"] = [](PipelineConfig& c, const std::string& v) { c.train.adversarial_weight = as_double("train.adversarial_weight", v); };
    s["train.weight_decay"] = [](PipelineConfig& c, const std::string& v) { c.train.weight_decay = as_double("train.weight_decay", v); };
    s["train.batch"] = [](PipelineConfig& c, const std::string& v) { c.train.batch = static_cast<int>(as_positive("train.batch", v)); };
    s["train.epochs"] = [](PipelineConfig& c, const std::string& v) { c.train.epochs = static_cast<int>(as_positive("train.epochs", v)); };
    s["train.scheduler_factor"] = [](PipelineConfig& c, const std::string& v) { c.train.scheduler_factor = as_double("train.scheduler_factor", v); };
    s["train.scheduler_patience"] = [](PipelineConfig& c, const std::string& v) { c.train.scheduler_patience = static_cast<int>(as_positive("train.scheduler_patience", v)); };
    s["train.scheduler_threshold"] = [](PipelineConfig& c, const std::string& v) { c.train.scheduler_threshold = as_double("train.scheduler_threshold", v); };
    s["train.augment_snr_db"] = [](PipelineConfig& c, const std::string& v) { c.train.augment_snr_db = as_double("train.augment_snr_db", v); };

    s["bench.iterations"] = [](PipelineConfig& c, const std::string& v) { c.bench_iterations = static_cast<int>(as_positive("bench.iterations", v)); };
    s["bench.warmup"] = [](PipelineConfig& c, const std::string& v) {
        const auto w = as_int("bench.warmup", v);
        if (w < 0)
            throw ConfigError("config key 'bench.warmup': must be >= 0");
        c.bench_warmup = static_cast<int>(w);
    };
    s["bench.height"] = [](PipelineConfig& c, const std::string& v) { c.bench_height = static_cast<int>(as_positive("bench.height", v)); };
    s["bench.width"] = [](PipelineConfig& c, const std::string& v) { c.bench_width = static_cast<int>(as_positive("bench.width", v)); };
    return s;
}

} // namespace

std::uint64_t PipelineConfig::simulation_seed() const noexcept { return derive_seed(seed, stream_id("simulation")); }
std::uint64_t PipelineConfig::real_simulation_seed() const noexcept { return derive_seed(seed, stream_id("real_simulation")); }
std::uint64_t PipelineConfig::real_test_seed() const noexcept { return derive_seed(seed, stream_id("real_test")); }
std::uint64_t PipelineConfig::split_seed() const noexcept { return derive_seed(seed, stream_id("split")); }
std::uint64_t PipelineConfig::training_seed() const noexcept { return derive_seed(seed, stream_id("training")); }
std::uint64_t PipelineConfig::distortion_seed() const noexcept { return derive_seed(seed, stream_id("distortion")); }
std::uint64_t PipelineConfig::bench_seed() const noexcept { return derive_seed(seed, stream_id("bench")); }

GenerationConfig PipelineConfig::generation() const
{
    GenerationConfig g;
    g.priors = priors;
    g.grid_nx = grid_nx;
    g.grid_ny = grid_ny;
    g.voxel_size = voxel_size;
    g.transport = transport;
    g.camera = make_camera_model(camera);
    g.workers = threads;
    return g;
}

SplitSpec PipelineConfig::split() const
{
    SplitSpec s;
    s.train_fraction = train_fraction;
    s.strat_bins = strat_bins;
    s.seed = split_seed();
    return s;
}

DistortionSpec PipelineConfig::distortion_spec() const
{
    auto d = distortion;
    d.seed = distortion_seed();
    return d;
}

nn::TrainConfig PipelineConfig::train_config() const
{
    auto t = train;
    t.seed = training_seed();
    return t;
}

nn::NetworkSpec PipelineConfig::network(std::string_view variant_name) const
{
    const std::string name(variant_name.empty() ? std::string_view(variant) : variant_name);
    auto spec = nn::NetworkSpec::variant(name, camera.bands);
    spec.layers.clear();
    const bool conv = name == "cnn" || name == "da-cnn";
    for (int size : conv ? cnn_channels : fcn_hidden) {
        spec.layers.push_back(conv ? nn::LayerSpec::conv1d(size, kernel) : nn::LayerSpec::dense(size));
        spec.layers.push_back(nn::LayerSpec::relu());
        spec.layers.push_back(nn::LayerSpec::batchnorm());
        spec.layers.push_back(nn::LayerSpec::dropout(dropout));
    }
    spec.layers.push_back(nn::LayerSpec::linear_output());
    try {
        spec.validate();
    } catch (const ShapeError& e) {
        throw ConfigError(std::string("network: ") + e.what());
    }
    return spec;
}

void PipelineConfig::validate() const
{
    priors.validate();
    transport.validate();
    if (!(voxel_size > 0.0))
        throw ConfigError("config key 'grid.voxel_size': must be > 0");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("config key 'dataset.train_fraction': must lie in (0,1)");
    distortion.validate(static_cast<std::size_t>(camera.bands));
    train.validate();
    if (!(dropout >= 0.0 && dropout < 1.0))
        throw ConfigError("config key 'network.dropout': must lie in [0,1)");
    network();
}

PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir)
{
    boost::property_tree::ptree tree;
    std::istringstream in{std::string(text)};
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    const auto schema = make_schema(base_dir);
    PipelineConfig cfg;
    for (const auto& [section, body] : tree) {
        if (body.empty())
            throw ConfigError("config: key '" + section + "' must be inside a section");
        for (const auto& [key, value] : body) {
            const auto full = section + "." + key;
            const auto it = schema.find(full);
            if (it == schema.end())
                throw ConfigError("config: unknown key '" + full + "'");
            it->second(cfg, trim(value.data()));
        }
    }
    cfg.validate();
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path)
{
    std::string text;
    try {
        text = csv::read_text(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    return parse_config(text, path.parent_path().empty() ? "." : path.parent_path());
}

std::string default_config_text()
{
    return R"(; Full schema with default values. Ranges are "lo, hi" or a single value.
[general]
seed = 0
threads = 1

; Uniform priors shared by all three layers; [prior.layer1] .. [prior.layer3]
; accept the same keys and override a single layer.
[prior]
oxygenation = 0, 1
blood_volume_fraction = 0, 0.3
thickness = 0.2, 2.0
scatter_amplitude = 5, 50
scatter_power = 0.3, 3.0
anisotropy = 0.8, 0.95
refractive_index = 1.33, 1.54

[grid]
nx = 20
ny = 20
voxel_size = 0.01

[transport]
photons = 100000
roulette_threshold = 0.0001
roulette_survival_factor = 10
max_path_length = 1000
lateral = periodic
verify_conservation = true

; response_csv, light_csv, transmission_csv and correction_csv are optional.
[camera]
bands = 16
fwhm = 15
first_center = 460
last_center = 600
shape = gaussian
wavelengths = 440, 640, 4

[dataset]
count = 10000
real_count = 1875
real_test_count = 115
train_fraction = 0.8
strat_bins = 10

; crosstalk_csv (bands x bands, no header) replaces the neighbour crosstalk.
[distortion]
drift_tilt = 1.0
drift_wave_amplitude = 0.1
drift_wave_period = 7
drift_jitter = 0.05
crosstalk = 0.3
noise_snr_db = 35

[network]
variant = fcn
fcn_hidden = 64, 128, 256
cnn_channels = 16, 32
kernel = 2
dropout = 0.2

[train]
lr_generator = 0.001
lr_discriminator = 0.000001
adversarial_weight = 0.25
weight_decay = 0.000001
batch = 512
epochs = 100
scheduler_factor = 10
scheduler_patience = 10
scheduler_threshold = 0.01
augment_snr_db = 40

[bench]
iterations = 1000
warmup = 3
height = 272
width = 512
)";
}

} // namespace oxyspec

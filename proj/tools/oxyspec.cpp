#include "oxyspec/clinical.hpp"
#include "oxyspec/config.hpp"
#include "oxyspec/csv.hpp"
#include "oxyspec/dataset.hpp"
#include "oxyspec/error.hpp"
#include "oxyspec/image.hpp"
#include "oxyspec/nn.hpp"
#include "oxyspec/unmixing.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using namespace oxyspec;

namespace {

struct Common {
    fs::path config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    fs::path out;
};

void log(const std::string& msg) { std::cerr << "[oxyspec] " << msg << '\n'; }

PipelineConfig resolve(const Common& c)
{
    PipelineConfig cfg = c.config.empty() ? parse_config(default_config_text()) : load_config(c.config);
    if (c.seed)
        cfg.seed = *c.seed;
    if (c.threads)
        cfg.threads = *c.threads;
    return cfg;
}

// Writes through a sibling temporary so a failed command leaves nothing behind.
template <typename Fn>
void write_atomic(const fs::path& path, Fn&& write)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".partial";
    try {
        write(tmp);
        fs::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
}

void write_text(const fs::path& path, const std::string& text)
{
    write_atomic(path, [&](const fs::path& tmp) {
        std::ofstream f(tmp, std::ios::binary);
        f << text;
        if (!f)
            throw DataError("cannot write " + tmp.string());
    });
}

fs::path with_suffix(const fs::path& base, const std::string& suffix)
{
    fs::path p = base;
    p.replace_extension();
    p += suffix;
    return p;
}

struct Method {
    std::string name;
    std::optional<nn::Network<float>> net;
    EndmemberMatrix em;
    Eigen::MatrixXd correction;

    OxygenationMap map(const Hypercube& cube) const
    {
        return net ? nn::infer_map(*net, cube, true) : unmix_map(cube, em, correction);
    }
};

Method load_method(const std::string& spec, const PipelineConfig& cfg)
{
    Method m;
    if (spec == "unmixing") {
        const auto camera = make_camera_model(cfg.camera);
        m.name = "unmixing";
        m.em = make_endmembers(camera);
        m.correction = camera.correction;
    } else {
        m.net = nn::load_model(spec);
        m.name = m.net->spec().name;
    }
    return m;
}

std::vector<float> method_predictions(const Method& m, const Dataset& ds)
{
    if (m.net)
        return nn::predict(*m.net, ds);
    std::vector<float> out(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        try {
            out[i] = static_cast<float>(unmix_so2(ds.row(i), m.em, m.correction).so2);
        } catch (const DomainError&) {
            out[i] = 0.0f;
        }
    }
    return out;
}

// --- simulate ------------------------------------------------------------

struct SimulateArgs {
    std::optional<std::size_t> count;
    bool pseudo_real = false;
    bool test = false;
};

int cmd_simulate(const Common& c, const SimulateArgs& a)
{
    auto cfg = resolve(c);
    if (c.out.empty())
        throw ConfigError("simulate: --out is required");
    if (a.test && !a.pseudo_real)
        throw ConfigError("simulate: --test requires --pseudo-real");
    const std::size_t n = a.count.value_or(a.test ? cfg.real_test_count : a.pseudo_real ? cfg.real_count : cfg.count);
    auto gen = cfg.generation();
    const auto start = std::chrono::steady_clock::now();
    std::size_t last = 0;
    gen.progress = [&](std::size_t done) {
        if (done == n || done >= last + std::max<std::size_t>(n / 10, 1)) {
            last = done;
            log("simulated " + std::to_string(done) + "/" + std::to_string(n));
        }
    };
    const auto seed = a.test ? cfg.real_test_seed() : a.pseudo_real ? cfg.real_simulation_seed() : cfg.simulation_seed();
    auto report = generate_dataset(n, gen, seed);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log("dropped degenerate draws: " + std::to_string(report.dropped));
    log("elapsed " + std::to_string(secs) + " s");

    if (a.pseudo_real) {
        auto pr = make_pseudo_real(report.dataset, cfg.distortion_spec());
        const auto labels_path = with_suffix(c.out, ".labels.npy");
        write_atomic(c.out, [&](const fs::path& tmp) { save_dataset(pr.data, tmp); });
        write_atomic(labels_path, [&](const fs::path& tmp) {
            const std::size_t shape[] = {pr.hidden_labels.size()};
            save_npy(tmp, shape, pr.hidden_labels);
        });
        log("hidden labels: " + labels_path.string());
    } else {
        write_atomic(c.out, [&](const fs::path& tmp) { save_dataset(report.dataset, tmp); });
    }
    std::cout << c.out.string() << '\n';
    return 0;
}

// --- train ---------------------------------------------------------------

struct TrainArgs {
    fs::path data;
    fs::path real;
    std::string variant;
    fs::path history;
    std::optional<int> epochs;
};

int cmd_train(const Common& c, const TrainArgs& a)
{
    auto cfg = resolve(c);
    const std::string variant = a.variant.empty() ? cfg.variant : a.variant;
    const auto spec = cfg.network(variant);
    const bool adversarial = spec.discriminator;
    if (adversarial && a.real.empty())
        throw ConfigError("train: variant " + variant + " needs a real-domain dataset (--real)");
    if (c.out.empty())
        throw ConfigError("train: --out is required");
    auto tc = cfg.train_config();
    if (a.epochs)
        tc.epochs = *a.epochs;
    tc.validate();

    const auto sim = load_dataset(a.data);
    const auto split = stratified_split(sim, cfg.split());
    log("train " + std::to_string(split.train.size()) + " / val " + std::to_string(split.val.size()));

    std::string history;
    auto on_epoch = [&](const nn::EpochRecord& r) {
        history += nn::format_record(r);
        history += '\n';
        log("epoch " + std::to_string(r.epoch) + " val " + std::to_string(r.val_loss));
    };

    nn::TrainResult result = [&] {
        if (!adversarial)
            return nn::train_regressor(spec, tc, split.train, split.val, on_epoch);
        const auto real = load_dataset(a.real);
        const auto real_split = random_split(real, cfg.train_fraction, cfg.split_seed());
        return nn::train_adversarial(spec, tc, split.train, split.val, real_split.train,
                                     real_split.val, on_epoch);
    }();

    const fs::path history_path = a.history.empty() ? with_suffix(c.out, ".history.jsonl") : a.history;
    write_atomic(c.out, [&](const fs::path& tmp) { nn::save_model(result.network, tmp); });
    write_text(history_path, history);
    std::cout << "best_epoch=" << result.history.best_epoch << '\n'
              << "val_mse=" << result.history.epochs.at(result.history.best_epoch - 1).val_loss << '\n';
    return 0;
}

// --- evaluate ------------------------------------------------------------

struct EvaluateArgs {
    std::string model;
    fs::path data;
    fs::path labels;
    fs::path manifest;
    fs::path frames;
    fs::path curve;
    int roi = 20;
};

int cmd_evaluate(const Common& c, const EvaluateArgs& a)
{
    auto cfg = resolve(c);
    const auto method = load_method(a.model, cfg);
    std::ostringstream report;
    report.precision(10);
    report << "method=" << method.name << '\n';

    if (!a.data.empty()) {
        const auto ds = load_dataset(a.data);
        std::vector<float> labels = ds.labels;
        if (!a.labels.empty()) {
            labels = load_npy(a.labels).data;
            if (labels.size() != ds.size())
                throw ShapeError("evaluate: label count does not match the dataset");
        }
        const auto pred = method_predictions(method, ds);
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (std::isnan(labels[i]))
                continue;
            const double d = static_cast<double>(pred[i]) - labels[i];
            sum += d * d;
            ++n;
        }
        if (n == 0)
            throw DataError("evaluate: dataset has no labels; pass --labels");
        report << "samples=" << n << '\n' << "mse=" << sum / static_cast<double>(n) << '\n';
    } else if (!a.manifest.empty()) {
        if (a.frames.empty())
            throw ConfigError("evaluate: --manifest needs --frames");
        const auto rows = load_manifest(a.manifest);
        std::map<std::string, Image> maps;
        std::vector<LactatePoint> points;
        for (const auto& row : rows) {
            auto it = maps.find(row.frame_id);
            if (it == maps.end()) {
                const auto cube = load_npy_cube(a.frames / (row.frame_id + ".npy"));
                it = maps.emplace(row.frame_id, method.map(cube).values).first;
            }
            const double o2 = roi_oxygenation(it->second, Roi{row.x, row.y, a.roi});
            points.push_back({o2, row.lactate});
        }
        const auto fit = fit_lactate_exponential(points);
        report << "points=" << fit.n_points << '\n'
               << "a=" << fit.a << '\n'
               << "b=" << fit.b << '\n'
               << "mae=" << fit.mae << '\n'
               << "mae_std=" << fit.mae_std << '\n'
               << "r_squared=" << fit.r_squared << '\n'
               << "correlation=" << fit.correlation << '\n';

        std::ostringstream curve;
        curve << "oxygenation,lactate_fit\n";
        for (const auto& p : fit_curve(fit, 0.0, 1.0, 101))
            curve << p.oxygenation << ',' << p.lactate << '\n';
        std::ostringstream measured;
        measured << "oxygenation,lactate\n";
        for (const auto& p : points)
            measured << p.oxygenation << ',' << p.lactate << '\n';
        const fs::path curve_path = !a.curve.empty() ? a.curve
                                    : !c.out.empty() ? with_suffix(c.out, ".curve.csv")
                                                     : fs::path("fit_curve.csv");
        write_text(curve_path, curve.str());
        write_text(with_suffix(curve_path, ".points.csv"), measured.str());
    } else {
        throw ConfigError("evaluate: pass --data or --manifest");
    }

    std::cout << report.str();
    if (!c.out.empty())
        write_text(c.out, report.str());
    return 0;
}

// --- infer ---------------------------------------------------------------

struct InferArgs {
    std::string model;
    fs::path frame;
    fs::path raw;
    fs::path dark;
    fs::path light;
};

int cmd_infer(const Common& c, const InferArgs& a)
{
    auto cfg = resolve(c);
    if (c.out.empty())
        throw ConfigError("infer: --out is required");
    const auto method = load_method(a.model, cfg);

    Hypercube cube;
    if (!a.frame.empty()) {
        cube = load_npy_cube(a.frame);
    } else if (!a.raw.empty()) {
        if (a.dark.empty() || a.light.empty())
            throw ConfigError("infer: --raw needs --dark and --light");
        const auto light_f = load_npy(a.light).data;
        const std::vector<double> light(light_f.begin(), light_f.end());
        const auto raw = load_npy(a.raw);
        Frame frame = raw.shape.size() == 2
                          ? calibrate_frame(load_npy_image(a.raw), load_npy_image(a.dark), light)
                          : calibrate_frame(load_npy_cube(a.raw), load_npy_cube(a.dark), light);
        if (frame.degenerate_count() > 0)
            log("pixels without signal: " + std::to_string(frame.degenerate_count()));
        cube = std::move(frame.cube);
    } else {
        throw ConfigError("infer: pass --frame or --raw/--dark/--light");
    }

    const auto map = method.map(cube);
    if (map.degenerate_count() > 0)
        log("degenerate pixels: " + std::to_string(map.degenerate_count()));
    if (c.out.has_parent_path())
        fs::create_directories(c.out.parent_path());
    const auto sidecar = render_oxygenation_map(map.values, c.out);
    std::cout << c.out.string() << '\n' << sidecar.string() << '\n';
    return 0;
}

// --- bench ---------------------------------------------------------------

struct BenchArgs {
    std::vector<std::string> models;
    std::optional<int> iterations;
    std::optional<int> warmup;
};

int cmd_bench(const Common& c, const BenchArgs& a)
{
    auto cfg = resolve(c);
    const int iterations = a.iterations.value_or(cfg.bench_iterations);
    const int warmup = a.warmup.value_or(cfg.bench_warmup);
    const auto camera = make_camera_model(cfg.camera);
    const auto em = make_endmembers(camera);
    const auto frame = synthetic_frame(em, cfg.bench_height, cfg.bench_width, cfg.bench_seed());

    std::string table;
    std::vector<std::string> seen;
    for (const auto& spec : a.models) {
        if (std::find(seen.begin(), seen.end(), spec) != seen.end())
            continue;
        seen.push_back(spec);
        const auto method = load_method(spec, cfg);
        log("timing " + method.name + " over " + std::to_string(iterations) + " iterations");
        auto r = method.net ? benchmark_network(method.name, *method.net, frame, iterations, warmup)
                            : benchmark_unmixing(method.em, method.correction, frame, iterations, warmup);
        std::fprintf(stderr, "%-10s %9.3f +- %7.3f ms  %8.2f fps\n", r.method.c_str(), r.mean_ms,
                     r.std_ms, r.fps);
        if (!table.empty())
            table += '\n';
        table += format_report(r);
    }
    std::cout << table;
    if (!c.out.empty())
        write_text(c.out, table);
    return 0;
}

int exit_code(const std::exception& e)
{
    if (dynamic_cast<const ConfigError*>(&e))
        return 2;
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const DomainError*>(&e))
        return 3;
    if (dynamic_cast<const NumericError*>(&e))
        return 4;
    return 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Tissue oxygenation from multispectral reflectance"};
    app.require_subcommand(1);

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "INI configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "Global seed");
        sub->add_option("--threads", common.threads, "Worker cap")->check(CLI::PositiveNumber);
        sub->add_option("--out", common.out, "Output path");
    };

    SimulateArgs sim_args;
    auto* sim = app.add_subcommand("simulate", "Generate a labeled spectra dataset");
    add_common(sim);
    sim->add_option("--count", sim_args.count, "Number of samples");
    sim->add_flag("--pseudo-real", sim_args.pseudo_real,
                  "Distort the spectra into an unlabeled target domain; labels go to <out>.labels.npy");
    sim->add_flag("--test", sim_args.test, "With --pseudo-real: the held-out test partition (own seed stream)");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train a regressor");
    add_common(train);
    train->add_option("--data", train_args.data, "Simulated dataset")->required()->check(CLI::ExistingFile);
    train->add_option("--real", train_args.real, "Real-domain dataset (da-* variants)")->check(CLI::ExistingFile);
    train->add_option("--variant", train_args.variant, "fcn, cnn, da-fcn or da-cnn");
    train->add_option("--history", train_args.history, "Per-epoch JSON lines");
    train->add_option("--epochs", train_args.epochs, "Override the epoch count");

    EvaluateArgs eval_args;
    auto* evaluate = app.add_subcommand("evaluate", "Score a model or linear unmixing");
    add_common(evaluate);
    evaluate->add_option("--model", eval_args.model, "Model file or 'unmixing'")->required();
    evaluate->add_option("--data", eval_args.data, "Dataset file")->check(CLI::ExistingFile);
    evaluate->add_option("--labels", eval_args.labels, "Labels .npy overriding the stored ones")->check(CLI::ExistingFile);
    evaluate->add_option("--manifest", eval_args.manifest, "ROI manifest CSV")->check(CLI::ExistingFile);
    evaluate->add_option("--frames", eval_args.frames, "Directory of calibrated <frame_id>.npy cubes")->check(CLI::ExistingDirectory);
    evaluate->add_option("--curve", eval_args.curve, "Fit curve CSV");
    evaluate->add_option("--roi", eval_args.roi, "ROI side in pixels")->check(CLI::PositiveNumber);

    InferArgs infer_args;
    auto* infer = app.add_subcommand("infer", "Render an oxygenation map");
    add_common(infer);
    infer->add_option("--model", infer_args.model, "Model file or 'unmixing'")->required();
    infer->add_option("--frame", infer_args.frame, "Calibrated H x W x bands .npy")->check(CLI::ExistingFile);
    infer->add_option("--raw", infer_args.raw, "Raw mosaic (H x W) or cube .npy")->check(CLI::ExistingFile);
    infer->add_option("--dark", infer_args.dark, "Dark frame, same shape as --raw")->check(CLI::ExistingFile);
    infer->add_option("--light", infer_args.light, "Per-band light reference .npy")->check(CLI::ExistingFile);

    BenchArgs bench_args;
    auto* bench = app.add_subcommand("bench", "Time inference on one shared frame");
    add_common(bench);
    bench->add_option("--model", bench_args.models, "Model file or 'unmixing' (repeatable)")->required();
    bench->add_option("--iterations", bench_args.iterations)->check(CLI::PositiveNumber);
    bench->add_option("--warmup", bench_args.warmup)->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed())
            return cmd_simulate(common, sim_args);
        if (train->parsed())
            return cmd_train(common, train_args);
        if (evaluate->parsed())
            return cmd_evaluate(common, eval_args);
        if (infer->parsed())
            return cmd_infer(common, infer_args);
        return cmd_bench(common, bench_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    }
}

#include "oxyspec/clinical.hpp"
#include "oxyspec/dataset.hpp"
#include "oxyspec/error.hpp"
#include "oxyspec/nn.hpp"
#include "oxyspec/spectral.hpp"
#include "oxyspec/transport.hpp"
#include "oxyspec/unmixing.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace oxyspec;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::tuple dataset_to_numpy(const Dataset& ds)
{
    FloatArray features({ds.size(), ds.feature_count});
    std::copy(ds.features.begin(), ds.features.end(), features.mutable_data());
    FloatArray labels(ds.size());
    std::copy(ds.labels.begin(), ds.labels.end(), labels.mutable_data());
    py::array_t<std::uint8_t> domains(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i)
        domains.mutable_data()[i] = static_cast<std::uint8_t>(ds.domains[i]);
    return py::make_tuple(features, labels, domains);
}

Dataset dataset_from_numpy(const FloatArray& features, const FloatArray& labels)
{
    if (features.ndim() != 2 || labels.ndim() != 1 || features.shape(0) != labels.shape(0))
        throw ShapeError("features must be (n, bands) and labels (n,)");
    Dataset ds;
    ds.feature_count = static_cast<std::size_t>(features.shape(1));
    const auto n = static_cast<std::size_t>(features.shape(0));
    for (std::size_t i = 0; i < n; ++i)
        ds.push_back(std::span<const float>(features.data() + i * ds.feature_count, ds.feature_count),
                     labels.data()[i], Domain::simulated);
    return ds;
}

Hypercube cube_from_numpy(const FloatArray& a)
{
    if (a.ndim() != 3)
        throw ShapeError("cube must be (height, width, bands)");
    Hypercube cube(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
    std::copy(a.data(), a.data() + a.size(), cube.data.begin());
    return cube;
}

FloatArray image_to_numpy(const Image& img)
{
    FloatArray out({img.height, img.width});
    std::copy(img.data.begin(), img.data.end(), out.mutable_data());
    return out;
}

struct Unmixer {
    CameraModel camera = make_camera_model();
    EndmemberMatrix em = make_endmembers(camera);
};

const Unmixer& default_unmixer()
{
    static const Unmixer u;
    return u;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Bindings for the oxyspec core library";

    static py::exception<DataError> base(m, "OxyspecError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p)
                std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            base(e.what());
        } catch (const DataError& e) {
            base(e.what());
        } catch (const DomainError& e) {
            base(e.what());
        } catch (const NumericError& e) {
            base(e.what());
        }
    });

    m.def("default_wavelengths", &default_wavelengths, "Simulation grid in nm (440 to 640, step 4)");

    m.def(
        "extinction",
        [](double wavelength) {
            const auto c = ExtinctionTable::builtin().at(wavelength);
            return py::make_tuple(c.hbo2, c.hb);
        },
        py::arg("wavelength_nm"), "Molar extinction (HbO2, Hb) in cm^-1/M");

    m.def(
        "simulate_spectrum",
        [](std::uint64_t tissue_seed, std::uint64_t photons, std::uint64_t seed) {
            const auto tissue = sample_tissue(PriorConfig{}, tissue_seed);
            TransportConfig cfg;
            cfg.n_photons = photons;
            const auto s = simulate_spectrum(tissue, VoxelGrid::for_tissue(tissue), cfg, seed);
            py::dict out;
            out["wavelengths"] = s.wavelengths;
            out["reflectance"] = s.reflectance;
            out["penetration_depth"] = s.penetration_depth;
            return out;
        },
        py::arg("tissue_seed"), py::arg("photons") = 1000, py::arg("seed") = 0,
        "Monte Carlo spectrum of a tissue drawn from the default prior");

    m.def(
        "generate_dataset",
        [](std::size_t n, std::uint64_t photons, std::uint64_t seed, unsigned workers) {
            GenerationConfig cfg;
            cfg.transport.n_photons = photons;
            cfg.workers = workers;
            Dataset ds;
            {
                py::gil_scoped_release release;
                ds = generate_dataset(n, cfg, seed).dataset;
            }
            return dataset_to_numpy(ds);
        },
        py::arg("n"), py::arg("photons") = 100, py::arg("seed") = 0, py::arg("workers") = 1,
        "Simulated, camera-adapted, normalized spectra: (features, labels, domains)");

    m.def(
        "load_dataset", [](const std::filesystem::path& p) { return dataset_to_numpy(load_dataset(p)); },
        py::arg("path"));
    m.def(
        "save_dataset",
        [](const std::filesystem::path& p, const FloatArray& features, const FloatArray& labels) {
            save_dataset(dataset_from_numpy(features, labels), p);
        },
        py::arg("path"), py::arg("features"), py::arg("labels"));

    m.def(
        "auc_normalize",
        [](const DoubleArray& spectrum) {
            std::vector<double> v(spectrum.data(), spectrum.data() + spectrum.size());
            auc_normalize_inplace(std::span<double>(v));
            return v;
        },
        py::arg("spectrum"), "Divide a band spectrum by its trapezoid area");

    m.def(
        "unmix",
        [](const DoubleArray& spectrum) {
            const auto& u = default_unmixer();
            return unmix_so2(std::span<const double>(spectrum.data(), static_cast<std::size_t>(spectrum.size())),
                             u.em, u.camera.correction)
                .so2;
        },
        py::arg("spectrum"), "Oxygenation of one 16-band spectrum by constrained linear unmixing");

    m.def(
        "fit_lactate",
        [](const DoubleArray& o2, const DoubleArray& lactate) {
            if (o2.size() != lactate.size())
                throw ShapeError("o2 and lactate must have the same length");
            std::vector<LactatePoint> pts;
            for (py::ssize_t i = 0; i < o2.size(); ++i)
                pts.push_back({o2.data()[i], lactate.data()[i]});
            const auto f = fit_lactate_exponential(pts);
            py::dict out;
            out["a"] = f.a;
            out["b"] = f.b;
            out["mae"] = f.mae;
            out["mae_std"] = f.mae_std;
            out["r_squared"] = f.r_squared;
            out["correlation"] = f.correlation;
            out["n_points"] = f.n_points;
            return out;
        },
        py::arg("o2"), py::arg("lactate"), "lactate = a * exp(b * o2), least squares in log space");

    py::class_<nn::Network<float>>(m, "Model")
        .def_static(
            "load", [](const std::filesystem::path& p) { return nn::load_model(p); }, py::arg("path"))
        .def_static(
            "create",
            [](const std::string& variant, std::uint64_t seed) {
                return nn::Network<float>(nn::NetworkSpec::variant(variant), seed);
            },
            py::arg("variant") = "fcn", py::arg("seed") = 0, "Freshly initialized network")
        .def("save", [](const nn::Network<float>& net, const std::filesystem::path& p) { nn::save_model(net, p); })
        .def_property_readonly("variant", [](const nn::Network<float>& net) { return net.spec().name; })
        .def(
            "predict",
            [](const nn::Network<float>& net, const FloatArray& features) {
                return nn::predict(net, dataset_from_numpy(features, FloatArray(features.shape(0))));
            },
            py::arg("features"), "Eval-mode prediction per row of an (n, bands) array")
        .def(
            "infer_map",
            [](const nn::Network<float>& net, const FloatArray& cube) {
                return image_to_numpy(nn::infer_map(net, cube_from_numpy(cube)).values);
            },
            py::arg("cube"), "Oxygenation map of an (height, width, bands) cube");
}

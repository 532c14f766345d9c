#include "support.hpp"

#include "oxyspec/binary_io.hpp"
#include "oxyspec/dataset.hpp"
#include "oxyspec/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

using namespace oxyspec;

namespace {

GenerationConfig cheap_generation(std::uint64_t photons = 20)
{
    GenerationConfig g;
    g.transport.n_photons = photons;
    return g;
}

/// Synthetic labeled rows: label uniform, features arbitrary but normalized.
Dataset uniform_dataset(std::size_t n, std::uint64_t seed)
{
    Dataset ds;
    Rng rng(seed);
    std::vector<float> f(kDefaultBands);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : f)
            v = static_cast<float>(0.5 + rng.uniform());
        auc_normalize_inplace(f);
        ds.push_back(f, static_cast<float>((i + 0.5) / n), Domain::simulated);
    }
    return ds;
}

std::size_t bin_of(float label, int bins)
{
    return std::min<std::size_t>(static_cast<std::size_t>(label * bins), bins - 1);
}

/// Plain logistic regression by gradient descent on standardized features.
double logistic_accuracy(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train,
                         const Eigen::MatrixXd& x_test, const Eigen::VectorXd& y_test)
{
    const Eigen::RowVectorXd mean = x_train.colwise().mean();
    const Eigen::RowVectorXd sd =
        ((x_train.rowwise() - mean).array().square().colwise().mean()).sqrt().max(1e-12);
    auto standardize = [&](const Eigen::MatrixXd& x) {
        Eigen::MatrixXd z = (x.rowwise() - mean).array().rowwise() / sd.array();
        z.conservativeResize(Eigen::NoChange, z.cols() + 1);
        z.col(z.cols() - 1).setOnes();
        return z;
    };
    const auto z = standardize(x_train);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(z.cols());
    for (int it = 0; it < 3000; ++it) {
        const Eigen::VectorXd p = (1.0 + (-(z * w).array()).exp()).inverse().matrix();
        w -= 0.5 * z.transpose() * (p - y_train) / static_cast<double>(z.rows());
    }
    const Eigen::VectorXd logits = standardize(x_test) * w;
    int correct = 0;
    for (Eigen::Index i = 0; i < logits.size(); ++i)
        correct += (logits[i] > 0.0) == (y_test[i] > 0.5);
    return static_cast<double>(correct) / static_cast<double>(logits.size());
}

} // namespace

TEST_CASE("single point-prior sample")
{
    LayerParams p;
    p.oxygenation = 0.6;
    p.blood_volume_fraction = 0.05;
    p.thickness = 0.3;
    auto g = cheap_generation(50);
    g.priors = PriorConfig::shared(LayerPrior::point(p));
    const auto report = generate_dataset(1, g, 4);
    REQUIRE(report.dataset.size() == 1);
    std::vector<float> f(kDefaultBands);
    float label = 0.0f;
    REQUIRE(generate_sample(g, 4, 0, 0, f, label));
    CHECK(report.dataset.labels[0] == label);
    CHECK(std::equal(f.begin(), f.end(), report.dataset.row(0).begin()));
    // Homogeneous oxygenation gives that value whatever the penetration.
    CHECK(label == doctest::Approx(0.6f));
}

TEST_CASE("generation is independent of the worker count")
{
    auto g = cheap_generation();
    g.workers = 1;
    const auto a = generate_dataset(12, g, 8).dataset;
    g.workers = 3;
    const auto b = generate_dataset(12, g, 8).dataset;
    CHECK(a.identical(b));
    CHECK(serialize_dataset(a) == serialize_dataset(b));
}

TEST_CASE("labels cover every decile")
{
    auto g = cheap_generation(2);
    const auto ds = generate_dataset(10'000, g, 12).dataset;
    std::vector<int> hist(10, 0);
    float lo = 1.0f, hi = 0.0f;
    for (float l : ds.labels) {
        ++hist[bin_of(l, 10)];
        lo = std::min(lo, l);
        hi = std::max(hi, l);
    }
    for (int h : hist)
        CHECK(h > 0);
    CHECK(lo >= 0.0f);
    CHECK(hi <= 1.0f);
}

TEST_CASE("stratified split")
{
    const auto ds = uniform_dataset(1000, 3);
    const SplitSpec spec{0.8, 10, 99};
    const auto s = stratified_split(ds, spec);
    CHECK(s.train.size() == 800);
    CHECK(s.val.size() == 200);
    std::vector<int> tr(10, 0), va(10, 0);
    for (float l : s.train.labels)
        ++tr[bin_of(l, 10)];
    for (float l : s.val.labels)
        ++va[bin_of(l, 10)];
    for (int b = 0; b < 10; ++b) {
        CHECK(std::abs(tr[b] - 80) <= 1);
        CHECK(std::abs(va[b] - 20) <= 1);
    }
    std::set<std::size_t> all(s.train_indices.begin(), s.train_indices.end());
    all.insert(s.val_indices.begin(), s.val_indices.end());
    CHECK(all.size() == 1000);

    const auto again = stratified_split(ds, spec);
    CHECK(again.train_indices == s.train_indices);
    CHECK(again.val_indices == s.val_indices);
}

TEST_CASE("stratification keeps per-bin label means aligned")
{
    Dataset ds;
    Rng rng(21);
    const std::vector<float> f(kDefaultBands, 1.0f / 15.0f);
    for (int i = 0; i < 10'000; ++i)
        ds.push_back(f, static_cast<float>(rng.uniform()), Domain::simulated);
    const auto s = stratified_split(ds, SplitSpec{0.8, 10, 5});
    std::vector<double> ts(10, 0), tn(10, 0), vs(10, 0), vn(10, 0);
    for (float l : s.train.labels) {
        ts[bin_of(l, 10)] += l;
        ++tn[bin_of(l, 10)];
    }
    for (float l : s.val.labels) {
        vs[bin_of(l, 10)] += l;
        ++vn[bin_of(l, 10)];
    }
    for (int b = 0; b < 10; ++b)
        CHECK(std::abs(ts[b] / tn[b] - vs[b] / vn[b]) < 0.02);
}

TEST_CASE("split edge cases")
{
    auto ds = uniform_dataset(10, 1);
    ds.labels[9] = 0.95f; // alone in the top decile
    ds.labels[8] = 0.55f;
    CHECK_THROWS_AS(stratified_split(ds, SplitSpec{0.8, 10, 1}), DataError);
    CHECK_THROWS_AS(stratified_split(uniform_dataset(10, 1), SplitSpec{1.0, 10, 1}), ConfigError);
}

TEST_CASE("noise augmentation")
{
    const auto ds = uniform_dataset(10'000, 7);
    SUBCASE("infinite SNR is the identity")
    {
        CHECK(augment_noise(ds, std::numeric_limits<double>::infinity(), 3).identical(ds));
    }
    SUBCASE("different epochs draw different noise, labels untouched")
    {
        const auto a = augment_noise(ds, 40.0, 1);
        const auto b = augment_noise(ds, 40.0, 2);
        CHECK(a.features != b.features);
        CHECK(a.labels == ds.labels);
        CHECK(b.labels == ds.labels);
    }
    SUBCASE("40 dB is a one percent perturbation")
    {
        // Renormalization is undone by comparing shapes after rescaling.
        const auto a = augment_noise(ds, 40.0, 9);
        double ss = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto x = ds.row(i);
            const auto y = a.row(i);
            double scale = 0.0;
            for (std::size_t b = 0; b < x.size(); ++b)
                scale += static_cast<double>(y[b]) / x[b];
            scale /= static_cast<double>(x.size());
            for (std::size_t b = 0; b < x.size(); ++b) {
                const double d = static_cast<double>(y[b]) / (scale * x[b]) - 1.0;
                ss += d * d;
                ++n;
            }
        }
        const double rms = std::sqrt(ss / static_cast<double>(n));
        CHECK(rms == doctest::Approx(0.01).epsilon(0.05));
    }
}

TEST_CASE("pseudo-real distortion")
{
    const auto ds = uniform_dataset(500, 11);
    SUBCASE("identity distortion only relabels the domain")
    {
        const auto pr = make_pseudo_real(ds, DistortionSpec::identity());
        for (std::size_t i = 0; i < ds.size(); ++i) {
            CHECK(pr.data.domains[i] == Domain::real);
            CHECK(std::isnan(pr.data.labels[i]));
            CHECK(pr.hidden_labels[i] == ds.labels[i]);
            for (std::size_t b = 0; b < kDefaultBands; ++b)
                CHECK(pr.data.row(i)[b] == doctest::Approx(ds.row(i)[b]).epsilon(1e-6));
        }
    }
    SUBCASE("default distortion stays normalized")
    {
        const auto pr = make_pseudo_real(ds, DistortionSpec{});
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto r = pr.data.row(i);
            const std::vector<double> v(r.begin(), r.end());
            // float32 storage bounds the achievable precision.
            CHECK(band_area(v) == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
    SUBCASE("non-stochastic crosstalk matrix is rejected")
    {
        DistortionSpec spec;
        spec.crosstalk_matrix = Eigen::MatrixXd::Identity(16, 16) * 2.0;
        CHECK_THROWS_AS(make_pseudo_real(ds, spec), ConfigError);
    }
}

TEST_CASE("a linear probe separates simulated from pseudo-real spectra")
{
    // Desk-scale photon count: the gap has to show through Monte Carlo noise.
    const auto ds = generate_dataset(400, cheap_generation(100), 31).dataset;
    const auto split = random_split(ds, 0.5, 4);
    DistortionSpec spec;
    spec.seed = 17;
    const auto real_a = make_pseudo_real(split.train, spec).data;
    spec.seed = 18;
    const auto real_b = make_pseudo_real(split.val, spec).data;

    auto stack = [](const Dataset& sim, const Dataset& real, Eigen::MatrixXd& x, Eigen::VectorXd& y) {
        const auto half = static_cast<Eigen::Index>(sim.size());
        x.resize(half + static_cast<Eigen::Index>(real.size()), static_cast<Eigen::Index>(sim.feature_count));
        x.topRows(half) = sim.feature_matrix();
        x.bottomRows(static_cast<Eigen::Index>(real.size())) = real.feature_matrix();
        y.resize(x.rows());
        y.head(half).setZero();
        y.tail(static_cast<Eigen::Index>(real.size())).setOnes();
    };
    // Train on the simulated half A versus distorted half B, test on the swap,
    // so no spectrum appears on both sides of the probe.
    Eigen::MatrixXd xtr, xte;
    Eigen::VectorXd ytr, yte;
    stack(split.train, real_b, xtr, ytr);
    stack(split.val, real_a, xte, yte);
    CHECK(logistic_accuracy(xtr, ytr, xte, yte) >= 0.9);
}

TEST_CASE("balanced sampler")
{
    SUBCASE("equal pools")
    {
        const BalancedSampler s(1024, 1024, 512, 3);
        const auto epoch = s.epoch(0);
        REQUIRE(epoch.size() == 4);
        std::vector<int> sim(1024, 0), real(1024, 0);
        for (const auto& b : epoch) {
            CHECK(b.sim.size() == 256);
            CHECK(b.real.size() == 256);
            for (auto i : b.sim)
                ++sim[i];
            for (auto i : b.real)
                ++real[i];
        }
        CHECK(std::all_of(sim.begin(), sim.end(), [](int c) { return c == 1; }));
        CHECK(std::all_of(real.begin(), real.end(), [](int c) { return c == 1; }));
    }
    SUBCASE("small real pool is revisited about ten times")
    {
        const std::size_t n_sim = 20'480, n_real = 2'048;
        const BalancedSampler s(n_sim, n_real, 512, 8);
        std::vector<double> count(n_real, 0.0);
        for (const auto& b : s.epoch(1)) {
            CHECK(b.sim.size() == b.real.size());
            for (auto i : b.real)
                count[i] += 1.0;
        }
        double mean = 0.0, var = 0.0;
        for (double c : count)
            mean += c;
        mean /= n_real;
        for (double c : count)
            var += (c - mean) * (c - mean);
        var /= n_real - 1;
        CHECK(mean == doctest::Approx(10.0));
        // Multinomial resampling: variance n p (1 - p) close to 10.
        CHECK(var == doctest::Approx(10.0).epsilon(0.15));
        for (double c : count)
            CHECK(c <= 10.0 + 8.0 * std::sqrt(10.0));
    }
}

TEST_CASE("dataset file format")
{
    testing::TempDir dir("dataset");
    auto ds = generate_dataset(5, cheap_generation(), 2).dataset;
    ds.push_back(ds.row(0), std::numeric_limits<float>::quiet_NaN(), Domain::real);
    const auto path = dir / "d.oxds";
    save_dataset(ds, path);

    SUBCASE("round trip")
    {
        CHECK(load_dataset(path).identical(ds));
    }
    SUBCASE("size arithmetic")
    {
        // header + records + CRC trailer
        CHECK(std::filesystem::file_size(path) == 32 + ds.size() * (16 + 2) * 4 + 4);
    }
    SUBCASE("corruption")
    {
        auto bytes = binio::read_file(path);
        for (std::size_t pos : {0UL, 4UL, 40UL, bytes.size() - 1}) {
            auto bad = bytes;
            bad[pos] ^= 0x5A;
            CHECK_THROWS_AS(deserialize_dataset(bad), FormatError);
        }
        bytes.resize(bytes.size() - 7);
        CHECK_THROWS_AS(deserialize_dataset(bytes), FormatError);
    }
}

#pragma once

// Central finite differences against analytic backprop, in double precision.

#include "oxyspec/nn.hpp"
#include "oxyspec/random.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gradcheck {

using oxyspec::Rng;
using oxyspec::nn::LayerKind;
using oxyspec::nn::LayerSpec;
using oxyspec::nn::Mat;
using oxyspec::nn::Mode;
using oxyspec::nn::Shape;
using Layer = oxyspec::nn::Layer<double>;
using Cache = oxyspec::nn::LayerCache<double>;

struct Result {
    std::string label;
    double max_rel = 0.0; ///< worst element-wise relative error
    std::size_t checked = 0;
};

inline constexpr double kStep = 1e-6;

inline void track(Result& r, double analytic, double numeric)
{
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
    r.max_rel = std::max(r.max_rel, std::abs(analytic - numeric) / scale);
    ++r.checked;
}

inline Mat<double> random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0)
{
    Mat<double> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = scale * rng.normal();
    return m;
}

/// Keeps ReLU inputs away from the kink so the finite difference is valid.
inline void avoid_kink(Mat<double>& x, Rng& rng)
{
    for (Eigen::Index i = 0; i < x.size(); ++i)
        while (std::abs(x.data()[i]) < 1e-2)
            x.data()[i] = rng.normal();
}

/// Loss = sum(G .* layer(x)); checks d/dx and d/dparams.
inline Result check_layer(Layer& layer, Mat<double> x, const Mat<double>& g)
{
    Result r;
    auto loss = [&](const Mat<double>& input) {
        Cache c;
        return layer.forward(input, c, Mode::train, nullptr).cwiseProduct(g).sum();
    };
    for (auto& grad : layer.grads)
        grad.setZero();
    Cache cache;
    layer.forward(x, cache, Mode::train, nullptr);
    const Mat<double> dx = layer.backward(g, cache);

    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double keep = x.data()[i];
        x.data()[i] = keep + kStep;
        const double up = loss(x);
        x.data()[i] = keep - kStep;
        const double down = loss(x);
        x.data()[i] = keep;
        track(r, dx.data()[i], (up - down) / (2.0 * kStep));
    }
    for (std::size_t p = 0; p < layer.params.size(); ++p) {
        auto& w = layer.params[p];
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            const double keep = w.data()[i];
            w.data()[i] = keep + kStep;
            const double up = loss(x);
            w.data()[i] = keep - kStep;
            const double down = loss(x);
            w.data()[i] = keep;
            track(r, layer.grads[p].data()[i], (up - down) / (2.0 * kStep));
        }
    }
    return r;
}

/// One random configuration of the given layer kind.
inline Result random_layer_check(LayerKind kind, Rng& rng)
{
    const int batch = 2 + static_cast<int>(rng.below(5));
    Shape in{1 + static_cast<int>(rng.below(4)), 2 + static_cast<int>(rng.below(7))};
    LayerSpec spec;
    switch (kind) {
    case LayerKind::dense: spec = LayerSpec::dense(1 + static_cast<int>(rng.below(6))); in = {in.flat(), 1}; break;
    case LayerKind::conv1d: spec = LayerSpec::conv1d(1 + static_cast<int>(rng.below(5)), 2); break;
    case LayerKind::relu: spec = LayerSpec::relu(); break;
    case LayerKind::batchnorm: spec = LayerSpec::batchnorm(); break;
    case LayerKind::dropout: spec = LayerSpec::dropout(0.2 + 0.3 * rng.uniform()); break;
    case LayerKind::linear_output: spec = LayerSpec::linear_output(); in = {in.flat(), 1}; break;
    }
    Layer layer(spec, in);
    layer.initialize(rng);
    if (kind == LayerKind::batchnorm) {
        layer.params[0] = random_matrix(in.channels, 1, rng).array().abs() + 0.5;
        layer.params[1] = random_matrix(in.channels, 1, rng);
    }
    if (kind == LayerKind::dropout) {
        Mat<double> mask(in.flat(), batch);
        const double keep = 1.0 / (1.0 - spec.rate);
        for (Eigen::Index i = 0; i < mask.size(); ++i)
            mask.data()[i] = rng.uniform() >= spec.rate ? keep : 0.0;
        layer.fixed_mask = mask;
    }
    auto x = random_matrix(in.flat(), batch, rng);
    if (kind == LayerKind::relu)
        avoid_kink(x, rng);
    const auto g = random_matrix(layer.out.flat(), batch, rng);
    auto r = check_layer(layer, x, g);
    r.label = std::string(oxyspec::nn::to_string(kind)) + " in=" + std::to_string(in.channels) + "x" +
              std::to_string(in.length) + " batch=" + std::to_string(batch);
    return r;
}

/// Whole network: MSE on the prediction, BN in train mode, fixed dropout masks.
inline Result check_network(const oxyspec::nn::NetworkSpec& spec, int batch, std::uint64_t seed)
{
    Rng rng(seed);
    oxyspec::nn::Network<double> net(spec, seed);
    for (auto& layer : net.layers()) {
        if (layer.spec.kind == LayerKind::dropout) {
            Mat<double> mask(layer.in.flat(), batch);
            const double keep = 1.0 / (1.0 - layer.spec.rate);
            for (Eigen::Index i = 0; i < mask.size(); ++i)
                mask.data()[i] = rng.uniform() >= layer.spec.rate ? keep : 0.0;
            layer.fixed_mask = mask;
        }
    }
    const auto x = random_matrix(spec.input_width, batch, rng);
    const auto y = random_matrix(1, batch, rng);
    auto loss = [&] {
        const auto pass = net.forward(x, Mode::train, nullptr, false);
        return (pass.prediction - y).squaredNorm() / batch;
    };
    net.zero_grad();
    const auto pass = net.forward(x, Mode::train, nullptr, false);
    const Mat<double> d_pred = 2.0 * (pass.prediction - y) / batch;
    net.backward(pass, d_pred);

    Result r;
    r.label = spec.name + " batch=" + std::to_string(batch);
    for (auto& ref : net.generator_parameters()) {
        for (Eigen::Index i = 0; i < ref.value->size(); ++i) {
            double& w = ref.value->data()[i];
            const double keep = w;
            w = keep + kStep;
            const double up = loss();
            w = keep - kStep;
            const double down = loss();
            w = keep;
            track(r, ref.grad->data()[i], (up - down) / (2.0 * kStep));
        }
    }
    return r;
}

} // namespace gradcheck

#include "oxyspec/nn.hpp"

#include "oxyspec/binary_io.hpp"
#include "oxyspec/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oxyspec::nn {

namespace {

constexpr char kModelMagic[4] = {'O', 'X', 'N', 'N'};
constexpr std::size_t kInferenceChunk = 1024;

// Per-row vector from per-channel values; each channel spans `length` rows.
template <typename T>
Vec<T> expand(const Vec<T>& per_channel, int length)
{
    if (length == 1)
        return per_channel;
    Vec<T> out(per_channel.size() * length);
    for (Eigen::Index c = 0; c < per_channel.size(); ++c)
        out.segment(c * length, length).setConstant(per_channel(c));
    return out;
}

// Per-channel sums of a per-row vector.
template <typename T>
Vec<T> fold(const Vec<T>& per_row, int length)
{
    if (length == 1)
        return per_row;
    Vec<T> out(per_row.size() / length);
    for (Eigen::Index c = 0; c < out.size(); ++c)
        out(c) = per_row.segment(c * length, length).sum();
    return out;
}

// softplus(z) - y z, the BCE of sigmoid(z) against label y.
double bce_logit(double z, double y)
{
    return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z)
{
    if (z >= 0)
        return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void require_finite(double loss, const char* what)
{
    if (!std::isfinite(loss))
        throw NumericError(std::string("training aborted: non-finite ") + what + " loss");
}

Mat<float> gather(const Dataset& ds, std::span<const std::size_t> idx)
{
    Mat<float> x(static_cast<Eigen::Index>(ds.feature_count), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
        const auto r = ds.row(idx[j]);
        std::copy(r.begin(), r.end(), x.col(static_cast<Eigen::Index>(j)).data());
    }
    return x;
}

Mat<float> gather_labels(const Dataset& ds, std::span<const std::size_t> idx)
{
    Mat<float> y(1, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j)
        y(0, static_cast<Eigen::Index>(j)) = ds.labels[idx[j]];
    return y;
}

Eigen::Map<const Mat<float>> feature_view(const Dataset& ds, std::size_t begin, std::size_t count)
{
    return {ds.features.data() + begin * ds.feature_count,
            static_cast<Eigen::Index>(ds.feature_count), static_cast<Eigen::Index>(count)};
}

void check_dataset(const Dataset& ds, const NetworkSpec& spec, const char* what, bool need_labels)
{
    if (ds.empty())
        throw ConfigError(std::string(what) + " dataset is empty");
    ds.validate();
    if (ds.feature_count != static_cast<std::size_t>(spec.input_width))
        throw ShapeError(std::string(what) + " dataset has " + std::to_string(ds.feature_count) +
                         " bands, network expects " + std::to_string(spec.input_width));
    if (need_labels)
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (!ds.labeled(i))
                throw DataError(std::string(what) + " dataset has unlabeled rows");
}

} // namespace

std::string_view to_string(LayerKind kind)
{
    switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::relu: return "relu";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::dropout: return "dropout";
    case LayerKind::linear_output: return "linear_output";
    }
    return "unknown";
}

// ---- spec ------------------------------------------------------------------

std::vector<Shape> NetworkSpec::shapes() const
{
    std::vector<Shape> out;
    Shape s{1, input_width};
    for (const auto& l : layers) {
        switch (l.kind) {
        case LayerKind::dense:
        case LayerKind::linear_output: s = {l.size, 1}; break;
        case LayerKind::conv1d: s = {l.size, s.length - l.kernel + 1}; break;
        default: break;
        }
        out.push_back(s);
    }
    return out;
}

void NetworkSpec::validate() const
{
    if (input_width < 1)
        throw ConfigError("network: input width must be >= 1");
    if (layers.empty() || layers.back().kind != LayerKind::linear_output)
        throw ConfigError("network: the last layer must be the linear output head");
    Shape s{1, input_width};
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const auto where = "network layer " + std::to_string(i) + " (" +
                           std::string(to_string(l.kind)) + ")";
        switch (l.kind) {
        case LayerKind::dense:
            if (l.size < 1)
                throw ConfigError(where + ": nodes must be >= 1");
            s = {l.size, 1};
            break;
        case LayerKind::linear_output:
            if (i + 1 != layers.size())
                throw ConfigError(where + ": output head must be last");
            if (l.size != 1)
                throw ConfigError(where + ": output head has a single unit");
            s = {1, 1};
            break;
        case LayerKind::conv1d:
            if (l.size < 1)
                throw ConfigError(where + ": channels must be >= 1");
            if (l.kernel < 1 || l.kernel > s.length)
                throw ShapeError(where + ": kernel width " + std::to_string(l.kernel) +
                                 " does not fit input length " + std::to_string(s.length));
            s = {l.size, s.length - l.kernel + 1};
            break;
        case LayerKind::dropout:
            if (!(l.rate >= 0.0 && l.rate < 1.0))
                throw ConfigError(where + ": rate must lie in [0,1)");
            break;
        case LayerKind::relu:
        case LayerKind::batchnorm: break;
        default: throw ConfigError(where + ": unknown layer kind");
        }
    }
}

namespace {

void add_block(std::vector<LayerSpec>& layers, LayerSpec affine)
{
    layers.push_back(affine);
    layers.push_back(LayerSpec::relu());
    layers.push_back(LayerSpec::batchnorm());
    layers.push_back(LayerSpec::dropout(0.2));
}

} // namespace

NetworkSpec NetworkSpec::fcn(int input_width)
{
    NetworkSpec s;
    s.name = "fcn";
    s.input_width = input_width;
    for (int nodes : {64, 128, 256})
        add_block(s.layers, LayerSpec::dense(nodes));
    s.layers.push_back(LayerSpec::linear_output());
    return s;
}

NetworkSpec NetworkSpec::cnn(int input_width)
{
    NetworkSpec s;
    s.name = "cnn";
    s.input_width = input_width;
    for (int channels : {16, 32})
        add_block(s.layers, LayerSpec::conv1d(channels, 2));
    s.layers.push_back(LayerSpec::linear_output());
    return s;
}

NetworkSpec NetworkSpec::da_fcn(int input_width)
{
    auto s = fcn(input_width);
    s.name = "da-fcn";
    s.discriminator = true;
    return s;
}

NetworkSpec NetworkSpec::da_cnn(int input_width)
{
    auto s = cnn(input_width);
    s.name = "da-cnn";
    s.discriminator = true;
    return s;
}

NetworkSpec NetworkSpec::variant(std::string_view name, int input_width)
{
    if (name == "fcn")
        return fcn(input_width);
    if (name == "cnn")
        return cnn(input_width);
    if (name == "da-fcn")
        return da_fcn(input_width);
    if (name == "da-cnn")
        return da_cnn(input_width);
    throw ConfigError("unknown network variant '" + std::string(name) +
                      "' (expected fcn, cnn, da-fcn or da-cnn)");
}

// ---- layers ----------------------------------------------------------------

template <typename T>
Layer<T>::Layer(const LayerSpec& s, Shape input) : spec(s), in(input), out(input)
{
    switch (spec.kind) {
    case LayerKind::dense:
    case LayerKind::linear_output:
        out = {spec.size, 1};
        params = {Mat<T>::Zero(spec.size, in.flat()), Mat<T>::Zero(spec.size, 1)};
        break;
    case LayerKind::conv1d:
        if (spec.kernel < 1 || spec.kernel > in.length)
            throw ShapeError("conv1d: kernel wider than input");
        out = {spec.size, in.length - spec.kernel + 1};
        params = {Mat<T>::Zero(spec.size, in.channels * spec.kernel), Mat<T>::Zero(spec.size, 1)};
        break;
    case LayerKind::batchnorm:
        params = {Mat<T>::Ones(in.channels, 1), Mat<T>::Zero(in.channels, 1)};
        buffers = {Mat<T>::Zero(in.channels, 1), Mat<T>::Ones(in.channels, 1)};
        break;
    default: break;
    }
    for (const auto& p : params)
        grads.push_back(Mat<T>::Zero(p.rows(), p.cols()));
}

template <typename T>
void Layer<T>::initialize(Rng& rng)
{
    if (spec.kind != LayerKind::dense && spec.kind != LayerKind::linear_output &&
        spec.kind != LayerKind::conv1d)
        return;
    const double bound = 1.0 / std::sqrt(static_cast<double>(params[0].cols()));
    for (auto& p : params)
        for (Eigen::Index i = 0; i < p.size(); ++i)
            p.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
std::size_t Layer<T>::parameter_count() const noexcept
{
    std::size_t n = 0;
    for (const auto& p : params)
        n += static_cast<std::size_t>(p.size());
    return n;
}

template <typename T>
Mat<T> Layer<T>::forward(const Mat<T>& x, LayerCache<T>& cache, Mode mode, Rng* rng) const
{
    if (x.rows() != in.flat())
        throw ShapeError("layer " + std::string(to_string(spec.kind)) + ": input has " +
                         std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(in.flat()));
    const Eigen::Index n = x.cols();
    switch (spec.kind) {
    case LayerKind::dense:
    case LayerKind::linear_output: {
        cache.input = x;
        Mat<T> y(out.flat(), n);
        y.noalias() = params[0] * x;
        y.colwise() += params[1].col(0);
        return y;
    }
    case LayerKind::conv1d: {
        const int C = in.channels, L = in.length, K = spec.kernel, O = out.channels,
                  Lo = out.length;
        Mat<T>& col = cache.input;
        col.resize(C * K, Lo * n);
        for (Eigen::Index s = 0; s < n; ++s)
            for (int t = 0; t < Lo; ++t)
                for (int c = 0; c < C; ++c)
                    for (int k = 0; k < K; ++k)
                        col(c * K + k, s * Lo + t) = x(c * L + t + k, s);
        Mat<T> Y(O, Lo * n);
        Y.noalias() = params[0] * col;
        Y.colwise() += params[1].col(0);
        Mat<T> y(O * Lo, n);
        for (Eigen::Index s = 0; s < n; ++s)
            Eigen::Map<Mat<T>>(y.col(s).data(), Lo, O) = Y.middleCols(s * Lo, Lo).transpose();
        return y;
    }
    case LayerKind::relu:
        cache.aux = (x.array() > T(0)).template cast<T>();
        return x.cwiseMax(T(0));
    case LayerKind::batchnorm: {
        if (mode == Mode::eval) {
            cache.stats.resize(0, 0);
            cache.aux = x;
            return infer(x);
        }
        const int C = in.channels, L = in.length;
        const T N = T(static_cast<double>(L) * static_cast<double>(n));
        const Vec<T> mean = fold<T>(x.rowwise().sum(), L) / N;
        Mat<T>& xhat = cache.aux;
        xhat = x.colwise() - expand<T>(mean, L);
        const Vec<T> var = fold<T>(xhat.array().square().rowwise().sum().matrix(), L) / N;
        Vec<T> inv(C);
        for (int c = 0; c < C; ++c)
            inv(c) = T(1.0 / std::sqrt(static_cast<double>(var(c)) + kBatchNormEps));
        xhat.array().colwise() *= expand<T>(inv, L).array();
        cache.stats.resize(3, C);
        cache.stats.row(0) = mean.transpose();
        cache.stats.row(1) = var.transpose();
        cache.stats.row(2) = inv.transpose();
        Mat<T> y = xhat;
        y.array().colwise() *= expand<T>(params[0].col(0), L).array();
        y.colwise() += expand<T>(params[1].col(0), L);
        return y;
    }
    case LayerKind::dropout: {
        if (mode == Mode::eval || spec.rate == 0.0) {
            cache.aux.resize(0, 0);
            return x;
        }
        if (fixed_mask) {
            if (fixed_mask->rows() != x.rows() || fixed_mask->cols() != n)
                throw ShapeError("dropout: fixed mask shape mismatch");
            cache.aux = *fixed_mask;
        } else {
            if (rng == nullptr)
                throw ConfigError("dropout: train mode needs an RNG stream");
            const T keep = T(1.0 / (1.0 - spec.rate));
            cache.aux.resize(x.rows(), n);
            for (Eigen::Index i = 0; i < cache.aux.size(); ++i)
                cache.aux.data()[i] = rng->uniform() >= spec.rate ? keep : T(0);
        }
        return x.cwiseProduct(cache.aux);
    }
    }
    throw ConfigError("unknown layer kind");
}

template <typename T>
Mat<T> Layer<T>::infer(const Mat<T>& x) const
{
    if (x.rows() != in.flat())
        throw ShapeError("layer " + std::string(to_string(spec.kind)) + ": input has " +
                         std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(in.flat()));
    switch (spec.kind) {
    case LayerKind::relu: return x.cwiseMax(T(0));
    case LayerKind::dropout: return x;
    case LayerKind::batchnorm: {
        Vec<T> scale, shift;
        eval_affine(scale, shift);
        Mat<T> y = x;
        y.array().colwise() *= scale.array();
        y.colwise() += shift;
        return y;
    }
    default: {
        LayerCache<T> scratch;
        return forward(x, scratch, Mode::eval, nullptr);
    }
    }
}

template <typename T>
void Layer<T>::eval_affine(Vec<T>& scale, Vec<T>& shift) const
{
    Vec<T> s(in.channels), t(in.channels);
    for (int c = 0; c < in.channels; ++c) {
        s(c) = T(params[0](c, 0) / std::sqrt(static_cast<double>(buffers[1](c, 0)) + kBatchNormEps));
        t(c) = params[1](c, 0) - buffers[0](c, 0) * s(c);
    }
    scale = expand<T>(s, in.length);
    shift = expand<T>(t, in.length);
}

template <typename T>
Mat<T> Layer<T>::backward(const Mat<T>& dy, const LayerCache<T>& cache)
{
    if (dy.rows() != out.flat())
        throw ShapeError("layer backward: gradient shape mismatch");
    const Eigen::Index n = dy.cols();
    switch (spec.kind) {
    case LayerKind::dense:
    case LayerKind::linear_output:
        grads[0].noalias() += dy * cache.input.transpose();
        grads[1] += dy.rowwise().sum();
        return params[0].transpose() * dy;
    case LayerKind::conv1d: {
        const int C = in.channels, L = in.length, K = spec.kernel, O = out.channels,
                  Lo = out.length;
        Mat<T> dY(O, Lo * n);
        for (Eigen::Index s = 0; s < n; ++s)
            dY.middleCols(s * Lo, Lo) =
                Eigen::Map<const Mat<T>>(dy.col(s).data(), Lo, O).transpose();
        grads[0].noalias() += dY * cache.input.transpose();
        grads[1] += dY.rowwise().sum();
        const Mat<T> dcol = params[0].transpose() * dY;
        Mat<T> dx = Mat<T>::Zero(C * L, n);
        for (Eigen::Index s = 0; s < n; ++s)
            for (int t = 0; t < Lo; ++t)
                for (int c = 0; c < C; ++c)
                    for (int k = 0; k < K; ++k)
                        dx(c * L + t + k, s) += dcol(c * K + k, s * Lo + t);
        return dx;
    }
    case LayerKind::relu: return dy.cwiseProduct(cache.aux);
    case LayerKind::dropout:
        if (cache.aux.size() == 0)
            return dy;
        return dy.cwiseProduct(cache.aux);
    case LayerKind::batchnorm: {
        const int C = in.channels, L = in.length;
        const Vec<T> gamma = params[0].col(0);
        Vec<T> inv(C);
        Mat<T> xhat;
        if (cache.stats.size() == 0) {
            // Eval-mode forward: running statistics are constants.
            for (int c = 0; c < C; ++c)
                inv(c) = T(1.0 / std::sqrt(static_cast<double>(buffers[1](c, 0)) + kBatchNormEps));
            xhat = cache.aux.colwise() - expand<T>(buffers[0].col(0), L);
            xhat.array().colwise() *= expand<T>(inv, L).array();
            grads[0].col(0) += fold<T>(dy.cwiseProduct(xhat).rowwise().sum(), L);
            grads[1].col(0) += fold<T>(dy.rowwise().sum(), L);
            Mat<T> dx = dy;
            dx.array().colwise() *= expand<T>(gamma.cwiseProduct(inv), L).array();
            return dx;
        }
        const T N = T(static_cast<double>(L) * static_cast<double>(n));
        inv = cache.stats.row(2).transpose();
        const Vec<T> sum_g = fold<T>(dy.rowwise().sum(), L);
        const Vec<T> sum_gx = fold<T>(dy.cwiseProduct(cache.aux).rowwise().sum(), L);
        grads[0].col(0) += sum_gx;
        grads[1].col(0) += sum_g;
        Mat<T> dx = dy * N;
        dx.colwise() -= expand<T>(sum_g, L);
        dx -= (cache.aux.array().colwise() * expand<T>(sum_gx, L).array()).matrix();
        dx.array().colwise() *= expand<T>((gamma.cwiseProduct(inv) / N).eval(), L).array();
        return dx;
    }
    }
    throw ConfigError("unknown layer kind");
}

template <typename T>
void Layer<T>::update_running_stats(const LayerCache<T>& cache)
{
    if (spec.kind != LayerKind::batchnorm || cache.stats.size() == 0)
        return;
    const double N = static_cast<double>(in.length) * static_cast<double>(cache.aux.cols());
    const double unbias = N > 1 ? N / (N - 1) : 1.0;
    const T m = T(kBatchNormMomentum);
    for (int c = 0; c < in.channels; ++c) {
        buffers[0](c, 0) = (T(1) - m) * buffers[0](c, 0) + m * cache.stats(0, c);
        buffers[1](c, 0) = (T(1) - m) * buffers[1](c, 0) + m * T(cache.stats(1, c) * unbias);
    }
}

// ---- network ---------------------------------------------------------------

template <typename T>
Network<T>::Network(NetworkSpec spec, Uninitialized) : spec_(std::move(spec))
{
    spec_.validate();
    Shape s{1, spec_.input_width};
    for (const auto& l : spec_.layers) {
        layers_.emplace_back(l, s);
        s = layers_.back().out;
    }
    if (spec_.discriminator)
        discriminator_.emplace(LayerSpec::linear_output(), Shape{feature_width(), 1});
}

template <typename T>
Network<T>::Network(NetworkSpec spec, std::uint64_t init_seed)
    : Network(std::move(spec), Uninitialized{})
{
    Rng rng(derive_seed(init_seed, stream_id("init")));
    for (auto& l : layers_)
        l.initialize(rng);
    if (discriminator_)
        discriminator_->initialize(rng);
}

template <typename T>
int Network<T>::feature_width() const noexcept
{
    return layers_.back().in.flat();
}

template <typename T>
Layer<T>& Network<T>::discriminator()
{
    if (!discriminator_)
        throw ConfigError("network '" + spec_.name + "' has no discriminator");
    return *discriminator_;
}

template <typename T>
const Layer<T>& Network<T>::discriminator() const
{
    if (!discriminator_)
        throw ConfigError("network '" + spec_.name + "' has no discriminator");
    return *discriminator_;
}

template <typename T>
ForwardPass<T> Network<T>::forward(const Mat<T>& x, Mode mode, Rng* dropout_rng, bool update_stats)
{
    if (x.rows() != spec_.input_width)
        throw ShapeError("network: input has " + std::to_string(x.rows()) +
                         " features, expected " + std::to_string(spec_.input_width));
    ForwardPass<T> pass;
    pass.caches.resize(layers_.size());
    Mat<T> a = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (i + 1 == layers_.size())
            pass.features = a;
        a = layers_[i].forward(a, pass.caches[i], mode, dropout_rng);
    }
    pass.prediction = std::move(a);
    if (mode == Mode::train && update_stats)
        for (std::size_t i = 0; i < layers_.size(); ++i)
            layers_[i].update_running_stats(pass.caches[i]);
    return pass;
}

template <typename T>
ForwardPass<T> Network<T>::evaluate(const Mat<T>& x) const
{
    if (x.rows() != spec_.input_width)
        throw ShapeError("network: input has " + std::to_string(x.rows()) +
                         " features, expected " + std::to_string(spec_.input_width));
    ForwardPass<T> pass;
    Mat<T> a = x;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i)
        a = layers_[i].infer(a);
    pass.prediction = layers_.back().infer(a);
    pass.features = std::move(a);
    return pass;
}

template <typename T>
Mat<T> Network<T>::predict(const Mat<T>& x) const
{
    if (x.rows() != spec_.input_width)
        throw ShapeError("network: input has " + std::to_string(x.rows()) +
                         " features, expected " + std::to_string(spec_.input_width));
    // Eval-mode batchnorm is affine; fold it into the next dense layer when
    // there is one, otherwise apply it in place.
    Mat<T> a = x;
    Vec<T> scale, shift;
    bool pending = false;
    auto flush = [&] {
        if (!pending)
            return;
        a.array().colwise() *= scale.array();
        a.colwise() += shift;
        pending = false;
    };
    for (const auto& l : layers_) {
        switch (l.spec.kind) {
        case LayerKind::dropout: break;
        case LayerKind::batchnorm:
            flush();
            l.eval_affine(scale, shift);
            pending = true;
            break;
        case LayerKind::relu:
            flush();
            a.array() = a.array().max(T(0));
            break;
        case LayerKind::dense:
        case LayerKind::linear_output: {
            Mat<T> y(l.out.flat(), a.cols());
            if (pending) {
                const Mat<T> w = l.params[0] * scale.asDiagonal();
                const Vec<T> b = l.params[1].col(0) + l.params[0] * shift;
                y.noalias() = w * a;
                y.colwise() += b;
                pending = false;
            } else {
                y.noalias() = l.params[0] * a;
                y.colwise() += l.params[1].col(0);
            }
            a = std::move(y);
            break;
        }
        case LayerKind::conv1d:
            flush();
            a = l.infer(a);
            break;
        }
    }
    flush();
    return a;
}

template <typename T>
Mat<T> Network<T>::backward(const ForwardPass<T>& pass, const Mat<T>& d_prediction,
                            const Mat<T>* d_features)
{
    if (pass.caches.size() != layers_.size())
        throw ConfigError("network backward: forward pass has no caches");
    Mat<T> g = layers_.back().backward(d_prediction, pass.caches.back());
    if (d_features) {
        if (d_features->rows() != g.rows() || d_features->cols() != g.cols())
            throw ShapeError("network backward: feature gradient shape mismatch");
        g += *d_features;
    }
    for (std::size_t i = layers_.size() - 1; i-- > 0;)
        g = layers_[i].backward(g, pass.caches[i]);
    return g;
}

template <typename T>
Mat<T> Network<T>::discriminate(const Mat<T>& features) const
{
    return discriminator().infer(features);
}

template <typename T>
Mat<T> Network<T>::discriminator_backward(const Mat<T>& features, const Mat<T>& d_logits,
                                          bool accumulate)
{
    auto& d = discriminator();
    if (!accumulate)
        return d.params[0].transpose() * d_logits;
    LayerCache<T> cache;
    cache.input = features;
    return d.backward(d_logits, cache);
}

template <typename T>
void Network<T>::zero_grad()
{
    for (auto& l : layers_)
        for (auto& g : l.grads)
            g.setZero();
    if (discriminator_)
        for (auto& g : discriminator_->grads)
            g.setZero();
}

template <typename T>
std::vector<ParamRef<T>> Network<T>::generator_parameters()
{
    std::vector<ParamRef<T>> out;
    for (auto& l : layers_)
        for (std::size_t k = 0; k < l.params.size(); ++k)
            out.push_back({&l.params[k], &l.grads[k]});
    return out;
}

template <typename T>
std::vector<ParamRef<T>> Network<T>::discriminator_parameters()
{
    std::vector<ParamRef<T>> out;
    auto& d = discriminator();
    for (std::size_t k = 0; k < d.params.size(); ++k)
        out.push_back({&d.params[k], &d.grads[k]});
    return out;
}

template <typename T>
std::size_t Network<T>::dense_parameter_count() const noexcept
{
    std::size_t n = 0;
    for (const auto& l : layers_)
        if (l.spec.kind != LayerKind::batchnorm)
            n += l.parameter_count();
    return n;
}

template <typename T>
std::size_t Network<T>::batchnorm_parameter_count() const noexcept
{
    std::size_t n = 0;
    for (const auto& l : layers_)
        if (l.spec.kind == LayerKind::batchnorm)
            n += l.parameter_count();
    return n;
}

template <typename T>
std::size_t Network<T>::discriminator_parameter_count() const noexcept
{
    return discriminator_ ? discriminator_->parameter_count() : 0;
}

template <typename T>
std::size_t Network<T>::stored_value_count() const noexcept
{
    std::size_t n = discriminator_parameter_count();
    for (const auto& l : layers_) {
        n += l.parameter_count();
        for (const auto& b : l.buffers)
            n += static_cast<std::size_t>(b.size());
    }
    return n;
}

template <typename T>
std::vector<T> Network<T>::generator_vector() const
{
    std::vector<T> out;
    for (const auto& l : layers_)
        for (const auto& p : l.params)
            out.insert(out.end(), p.data(), p.data() + p.size());
    return out;
}

template <typename T>
std::vector<T> Network<T>::discriminator_vector() const
{
    std::vector<T> out;
    if (discriminator_)
        for (const auto& p : discriminator_->params)
            out.insert(out.end(), p.data(), p.data() + p.size());
    return out;
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const
{
    Network<U> out(spec_, typename Network<U>::Uninitialized{});
    auto copy_layer = [](const Layer<T>& from, Layer<U>& to) {
        for (std::size_t k = 0; k < from.params.size(); ++k)
            to.params[k] = from.params[k].template cast<U>();
        for (std::size_t k = 0; k < from.buffers.size(); ++k)
            to.buffers[k] = from.buffers[k].template cast<U>();
    };
    for (std::size_t i = 0; i < layers_.size(); ++i)
        copy_layer(layers_[i], out.layers_[i]);
    if (discriminator_)
        copy_layer(*discriminator_, *out.discriminator_);
    return out;
}

template struct Layer<float>;
template struct Layer<double>;
template class Network<float>;
template class Network<double>;
template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;
template Network<double> Network<double>::cast<double>() const;

// ---- optimization ----------------------------------------------------------

template <typename T>
void Adam<T>::step(const std::vector<ParamRef<T>>& params)
{
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(Mat<T>::Zero(p.value->rows(), p.value->cols()));
            v_.push_back(Mat<T>::Zero(p.value->rows(), p.value->cols()));
        }
    }
    if (m_.size() != params.size())
        throw ConfigError("adam: parameter list changed between steps");
    ++t_;
    const T lr = T(cfg_.lr);
    const T b1 = T(cfg_.beta1), b2 = T(cfg_.beta2);
    const T step_size = T(cfg_.lr / (1.0 - std::pow(cfg_.beta1, static_cast<double>(t_))));
    const T bc2_sqrt = T(std::sqrt(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_))));
    const T eps = T(cfg_.eps);
    const T decay = T(1) - lr * T(cfg_.weight_decay);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& w = *params[k].value;
        const auto& g = *params[k].grad;
        if (cfg_.weight_decay != 0.0)
            w *= decay;
        m_[k] = b1 * m_[k] + (T(1) - b1) * g;
        v_[k] = b2 * v_[k] + (T(1) - b2) * g.cwiseProduct(g);
        w.array() -= step_size * m_[k].array() / (v_[k].array().sqrt() / bc2_sqrt + eps);
    }
}

template class Adam<float>;
template class Adam<double>;

PlateauScheduler::PlateauScheduler(double lr, double factor, int patience, double threshold)
    : lr_(lr), factor_(factor), patience_(patience), threshold_(threshold),
      best_(std::numeric_limits<double>::infinity())
{
    if (!(lr > 0.0) || !(factor > 1.0) || patience < 1 || !(threshold >= 0.0))
        throw ConfigError("scheduler: need lr > 0, factor > 1, patience >= 1, threshold >= 0");
}

bool PlateauScheduler::step(double loss)
{
    if (loss < best_ * (1.0 - threshold_)) {
        best_ = loss;
        bad_ = 0;
        return false;
    }
    if (++bad_ >= patience_) {
        lr_ /= factor_;
        bad_ = 0;
        return true;
    }
    return false;
}

void TrainConfig::validate() const
{
    if (!(lr_generator > 0.0) || !(lr_discriminator > 0.0))
        throw ConfigError("train: learning rates must be > 0");
    if (!(adversarial_weight >= 0.0))
        throw ConfigError("train: adversarial weight must be >= 0");
    if (!(weight_decay >= 0.0))
        throw ConfigError("train: weight decay must be >= 0");
    if (batch < 2)
        throw ConfigError("train: batch size must be >= 2");
    if (epochs < 1)
        throw ConfigError("train: epochs must be >= 1");
    if (!(scheduler_factor > 1.0) || scheduler_patience < 1 || !(scheduler_threshold >= 0.0))
        throw ConfigError("train: invalid scheduler settings");
    if (!(augment_snr_db > 0.0))
        throw ConfigError("train: augmentation SNR must be > 0 dB");
}

std::string format_record(const EpochRecord& r)
{
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["val_loss"] = r.val_loss;
    j["lr"] = r.lr;
    j["regression_loss"] = r.regression_loss;
    j["adversarial_loss"] = r.adversarial_loss;
    j["discriminator_loss"] = r.discriminator_loss;
    if (std::isnan(r.discriminator_accuracy))
        j["discriminator_accuracy"] = nullptr;
    else
        j["discriminator_accuracy"] = r.discriminator_accuracy;
    return j.dump();
}

template <typename T>
Trainer<T>::Trainer(Network<T> net, const TrainConfig& cfg)
    : net_(std::move(net)), cfg_(cfg),
      gen_opt_({cfg.lr_generator, 0.9, 0.999, 1e-8, cfg.weight_decay}),
      disc_opt_({cfg.lr_discriminator, 0.9, 0.999, 1e-8, cfg.weight_decay})
{
    cfg_.validate();
}

template <typename T>
double Trainer<T>::regression_step(const Mat<T>& x, const Mat<T>& y, Rng& dropout_rng)
{
    if (y.rows() != 1 || y.cols() != x.cols())
        throw ShapeError("regression step: label count does not match batch");
    net_.zero_grad();
    const auto pass = net_.forward(x, Mode::train, &dropout_rng);
    const Mat<T> diff = pass.prediction - y;
    const double loss = static_cast<double>(diff.squaredNorm()) / static_cast<double>(x.cols());
    require_finite(loss, "regression");
    const Mat<T> d = diff * T(2.0 / static_cast<double>(x.cols()));
    net_.backward(pass, d);
    gen_opt_.step(net_.generator_parameters());
    return loss;
}

template <typename T>
StepLosses Trainer<T>::adversarial_step(const Mat<T>& x_sim, const Mat<T>& y_sim,
                                        const Mat<T>& x_real, Rng& sim_rng, Rng& real_rng)
{
    if (!net_.has_discriminator())
        throw ConfigError("adversarial step: network has no discriminator");
    if (y_sim.rows() != 1 || y_sim.cols() != x_sim.cols())
        throw ShapeError("adversarial step: label count does not match batch");
    const double lambda = cfg_.adversarial_weight;
    const auto ns = x_sim.cols(), nr = x_real.cols();
    const double N = static_cast<double>(ns + nr);
    StepLosses out;

    net_.zero_grad();
    const auto ps = net_.forward(x_sim, Mode::train, &sim_rng);
    const auto pr = net_.forward(x_real, Mode::train, &real_rng);

    // Discriminator on detached features; sim = 0, real = 1.
    {
        const Mat<T> zs = net_.discriminate(ps.features);
        const Mat<T> zr = net_.discriminate(pr.features);
        double loss = 0.0, correct = 0.0;
        Mat<T> ds(1, ns), dr(1, nr);
        for (Eigen::Index j = 0; j < ns; ++j) {
            const double z = zs(0, j);
            loss += bce_logit(z, 0.0);
            correct += z <= 0.0;
            ds(0, j) = T(sigmoid(z) / N);
        }
        for (Eigen::Index j = 0; j < nr; ++j) {
            const double z = zr(0, j);
            loss += bce_logit(z, 1.0);
            correct += z > 0.0;
            dr(0, j) = T((sigmoid(z) - 1.0) / N);
        }
        out.discriminator = loss / N;
        out.discriminator_accuracy = correct / N;
        require_finite(out.discriminator, "discriminator");
        if (!cfg_.freeze_discriminator) {
            net_.discriminator_backward(ps.features, ds, true);
            net_.discriminator_backward(pr.features, dr, true);
            disc_opt_.step(net_.discriminator_parameters());
        }
    }

    // Generator: regression on the simulated half plus flipped-label BCE.
    const Mat<T> diff = ps.prediction - y_sim;
    out.regression = static_cast<double>(diff.squaredNorm()) / static_cast<double>(ns);
    require_finite(out.regression, "regression");
    const Mat<T> d_pred = diff * T(2.0 / static_cast<double>(ns));

    const Mat<T> zs = net_.discriminate(ps.features);
    const Mat<T> zr = net_.discriminate(pr.features);
    Mat<T> gs(1, ns), gr(1, nr);
    double adv = 0.0;
    for (Eigen::Index j = 0; j < ns; ++j) {
        adv += bce_logit(zs(0, j), 1.0);
        gs(0, j) = T(lambda * (sigmoid(zs(0, j)) - 1.0) / N);
    }
    for (Eigen::Index j = 0; j < nr; ++j) {
        adv += bce_logit(zr(0, j), 0.0);
        gr(0, j) = T(lambda * sigmoid(zr(0, j)) / N);
    }
    out.adversarial = adv / N;
    require_finite(out.adversarial, "adversarial");

    if (lambda != 0.0) {
        const Mat<T> fs = net_.discriminator_backward(ps.features, gs, false);
        const Mat<T> fr = net_.discriminator_backward(pr.features, gr, false);
        net_.backward(ps, d_pred, &fs);
        net_.backward(pr, Mat<T>::Zero(1, nr), &fr);
    } else {
        net_.backward(ps, d_pred);
    }
    gen_opt_.step(net_.generator_parameters());
    out.total = out.regression + lambda * out.adversarial + out.discriminator;
    return out;
}

template class Trainer<float>;
template class Trainer<double>;

// ---- training loops --------------------------------------------------------

TrainResult train_regressor(const NetworkSpec& spec, const TrainConfig& cfg, const Dataset& train,
                            const Dataset& val, const EpochCallback& on_epoch)
{
    cfg.validate();
    spec.validate();
    check_dataset(train, spec, "training", true);
    check_dataset(val, spec, "validation", true);

    // Validation noise is drawn once, not per epoch.
    const auto val_noisy = augment_noise(val, cfg.augment_snr_db, derive_seed(cfg.seed, stream_id("augment_val")));
    Trainer<float> trainer(Network<float>(spec, cfg.seed), cfg);
    PlateauScheduler scheduler(cfg.lr_generator, cfg.scheduler_factor, cfg.scheduler_patience,
                               cfg.scheduler_threshold);
    TrainResult result{trainer.network(), {}};
    double best = std::numeric_limits<double>::infinity();
    const std::size_t batch = static_cast<std::size_t>(cfg.batch);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto data = augment_noise(train, cfg.augment_snr_db,
                                        derive_seed(cfg.seed, stream_id("augment"), epoch));
        Rng shuffle(derive_seed(cfg.seed, stream_id("shuffle"), epoch));
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), shuffle);
        Rng dropout(derive_seed(cfg.seed, stream_id("dropout"), epoch));

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = trainer.lr();
        double sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const auto count = std::min(batch, order.size() - start);
            if (count < 2)
                continue; // batchnorm needs at least two samples
            const std::span<const std::size_t> idx(order.data() + start, count);
            const double loss =
                trainer.regression_step(gather(data, idx), gather_labels(data, idx), dropout);
            sum += loss * static_cast<double>(count);
            seen += count;
        }
        rec.train_loss = rec.regression_loss = sum / static_cast<double>(seen);
        rec.val_loss = evaluate_mse(trainer.network(), val_noisy);
        require_finite(rec.val_loss, "validation");
        if (rec.val_loss < best) {
            best = rec.val_loss;
            result.network = trainer.network();
            result.history.best_epoch = epoch;
        }
        if (scheduler.step(rec.val_loss))
            trainer.set_lr(scheduler.lr());
        result.history.epochs.push_back(rec);
        if (on_epoch)
            on_epoch(rec);
    }
    return result;
}

TrainResult train_adversarial(const NetworkSpec& spec, const TrainConfig& cfg,
                              const Dataset& sim_train, const Dataset& sim_val,
                              const Dataset& real_train, const Dataset& real_val,
                              const EpochCallback& on_epoch)
{
    cfg.validate();
    spec.validate();
    if (!spec.discriminator)
        throw ConfigError("adversarial training needs a network with a discriminator ('" +
                          spec.name + "' has none)");
    check_dataset(sim_train, spec, "simulated training", true);
    check_dataset(sim_val, spec, "simulated validation", true);
    check_dataset(real_train, spec, "real training", false);
    check_dataset(real_val, spec, "real validation", false);

    Trainer<float> trainer(Network<float>(spec, cfg.seed), cfg);
    PlateauScheduler scheduler(cfg.lr_generator, cfg.scheduler_factor, cfg.scheduler_patience,
                               cfg.scheduler_threshold);
    const auto sim_val_noisy =
        augment_noise(sim_val, cfg.augment_snr_db, derive_seed(cfg.seed, stream_id("augment_val")));
    const BalancedSampler sampler(sim_train.size(), real_train.size(),
                                  static_cast<std::size_t>(cfg.batch),
                                  derive_seed(cfg.seed, stream_id("balanced")));
    TrainResult result{trainer.network(), {}};
    double best = std::numeric_limits<double>::infinity();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto sim = augment_noise(sim_train, cfg.augment_snr_db,
                                       derive_seed(cfg.seed, stream_id("augment"), epoch));
        Rng sim_dropout(derive_seed(cfg.seed, stream_id("dropout"), epoch));
        Rng real_dropout(derive_seed(cfg.seed, stream_id("dropout_real"), epoch));

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = trainer.lr();
        const auto batches = sampler.epoch(static_cast<std::size_t>(epoch));
        for (const auto& b : batches) {
            const auto losses = trainer.adversarial_step(
                gather(sim, b.sim), gather_labels(sim, b.sim), gather(real_train, b.real),
                sim_dropout, real_dropout);
            rec.train_loss += losses.total;
            rec.regression_loss += losses.regression;
            rec.adversarial_loss += losses.adversarial;
            rec.discriminator_loss += losses.discriminator;
        }
        const double nb = static_cast<double>(batches.size());
        rec.train_loss /= nb;
        rec.regression_loss /= nb;
        rec.adversarial_loss /= nb;
        rec.discriminator_loss /= nb;
        rec.val_loss = evaluate_mse(trainer.network(), sim_val_noisy);
        require_finite(rec.val_loss, "validation");
        rec.discriminator_accuracy =
            discriminator_balanced_accuracy(trainer.network(), sim_val, real_val);
        if (rec.val_loss < best) {
            best = rec.val_loss;
            result.network = trainer.network();
            result.history.best_epoch = epoch;
        }
        if (scheduler.step(rec.val_loss))
            trainer.set_lr(scheduler.lr());
        result.history.epochs.push_back(rec);
        if (on_epoch)
            on_epoch(rec);
    }
    return result;
}

std::vector<float> predict(const Network<float>& net, const Dataset& ds)
{
    if (ds.feature_count != static_cast<std::size_t>(net.spec().input_width))
        throw ShapeError("predict: dataset band count does not match the network");
    std::vector<float> out(ds.size());
    for (std::size_t start = 0; start < ds.size(); start += kInferenceChunk) {
        const auto count = std::min(kInferenceChunk, ds.size() - start);
        const Mat<float> p = net.predict(feature_view(ds, start, count));
        std::copy(p.data(), p.data() + count, out.begin() + static_cast<std::ptrdiff_t>(start));
    }
    return out;
}

double evaluate_mse(const Network<float>& net, const Dataset& ds, std::span<const float> labels)
{
    if (ds.empty())
        throw ConfigError("evaluate: empty dataset");
    if (labels.empty())
        labels = ds.labels;
    if (labels.size() != ds.size())
        throw ShapeError("evaluate: label count does not match dataset");
    const auto p = predict(net, ds);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (labels[i] != labels[i])
            throw DataError("evaluate: dataset has unlabeled rows");
        const double d = static_cast<double>(p[i]) - labels[i];
        sum += d * d;
    }
    return sum / static_cast<double>(p.size());
}

Eigen::MatrixXd hidden_features(const Network<float>& net, const Dataset& ds)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(ds.size()), net.feature_width());
    for (std::size_t start = 0; start < ds.size(); start += kInferenceChunk) {
        const auto count = std::min(kInferenceChunk, ds.size() - start);
        const auto pass = net.evaluate(feature_view(ds, start, count));
        out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) =
            pass.features.transpose().cast<double>();
    }
    return out;
}

double discriminator_balanced_accuracy(const Network<float>& net, const Dataset& sim,
                                       const Dataset& real)
{
    if (sim.empty() || real.empty())
        throw ConfigError("discriminator accuracy: both pools must be nonempty");
    auto rate = [&](const Dataset& ds, bool want_real) {
        std::size_t hits = 0;
        for (std::size_t start = 0; start < ds.size(); start += kInferenceChunk) {
            const auto count = std::min(kInferenceChunk, ds.size() - start);
            const auto pass = net.evaluate(feature_view(ds, start, count));
            const Mat<float> z = net.discriminate(pass.features);
            for (Eigen::Index j = 0; j < z.cols(); ++j)
                hits += (z(0, j) > 0.0f) == want_real;
        }
        return static_cast<double>(hits) / static_cast<double>(ds.size());
    };
    return 0.5 * (rate(sim, false) + rate(real, true));
}

OxygenationMap infer_map(const Network<float>& net, const Hypercube& cube, bool normalize)
{
    cube.validate();
    if (cube.bands != net.spec().input_width)
        throw ShapeError("infer_map: cube has " + std::to_string(cube.bands) +
                         " bands, network expects " + std::to_string(net.spec().input_width));
    OxygenationMap out{Image(cube.height, cube.width), std::vector<std::uint8_t>(cube.pixels(), 0)};
    const auto B = static_cast<Eigen::Index>(cube.bands);
    Mat<float> x;
    for (std::size_t start = 0; start < cube.pixels(); start += kInferenceChunk) {
        const auto count = std::min(kInferenceChunk, cube.pixels() - start);
        x = Eigen::Map<const Mat<float>>(cube.data.data() + start * cube.bands, B,
                                         static_cast<Eigen::Index>(count));
        if (normalize) {
            for (Eigen::Index j = 0; j < x.cols(); ++j) {
                auto col = x.col(j);
                const float area = col.sum() - 0.5f * (col(0) + col(B - 1));
                if (!(area > 0.0f) || !std::isfinite(area)) {
                    out.degenerate[start + static_cast<std::size_t>(j)] = 1;
                    col.setZero();
                } else {
                    col /= area;
                }
            }
        }
        const Mat<float> p = net.predict(x);
        for (std::size_t j = 0; j < count; ++j) {
            const float v = p(0, static_cast<Eigen::Index>(j));
            auto& dst = out.values.data[start + j];
            if (out.degenerate[start + j] || !std::isfinite(v)) {
                out.degenerate[start + j] = 1;
                dst = 0.0f;
            } else {
                dst = std::clamp(v, 0.0f, 1.0f);
            }
        }
    }
    return out;
}

// ---- persistence -----------------------------------------------------------

std::vector<std::uint8_t> serialize_model(const Network<float>& net)
{
    const auto& spec = net.spec();
    binio::Writer w;
    w.put_bytes(std::string_view(kModelMagic, 4));
    w.put(kModelVersion);
    w.put(static_cast<std::uint32_t>(spec.input_width));
    w.put(static_cast<std::uint32_t>(spec.layers.size()));
    w.put(static_cast<std::uint32_t>(spec.discriminator ? 1 : 0));
    w.put(static_cast<std::uint64_t>(net.stored_value_count()));
    for (const auto& l : spec.layers) {
        w.put(static_cast<std::uint32_t>(l.kind));
        w.put(static_cast<std::uint32_t>(l.size));
        w.put(static_cast<std::uint32_t>(l.kernel));
        w.put(static_cast<float>(l.rate));
    }
    auto put_layer = [&](const Layer<float>& l) {
        for (const auto& p : l.params)
            w.put_array(std::span<const float>(p.data(), static_cast<std::size_t>(p.size())));
        for (const auto& b : l.buffers)
            w.put_array(std::span<const float>(b.data(), static_cast<std::size_t>(b.size())));
    };
    for (const auto& l : net.layers())
        put_layer(l);
    if (net.has_discriminator())
        put_layer(net.discriminator());
    w.put_crc();
    return w.bytes();
}

Network<float> deserialize_model(std::span<const std::uint8_t> bytes)
{
    binio::Reader r(bytes, "model");
    if (r.get_bytes(4) != std::string_view(kModelMagic, 4))
        throw FormatError("model: bad magic (not an OXNN file)");
    const auto version = r.get<std::uint32_t>();
    if (version != kModelVersion)
        throw FormatError("model: unsupported version " + std::to_string(version));
    NetworkSpec spec;
    spec.input_width = static_cast<int>(r.get<std::uint32_t>());
    const auto count = r.get<std::uint32_t>();
    const auto flags = r.get<std::uint32_t>();
    if (flags > 1)
        throw FormatError("model: unknown flags");
    spec.discriminator = flags & 1;
    const auto values = r.get<std::uint64_t>();
    if (count == 0 || count > 1024 || spec.input_width < 1 || spec.input_width > 4096)
        throw FormatError("model: implausible layer table");
    for (std::uint32_t i = 0; i < count; ++i) {
        LayerSpec l;
        const auto kind = r.get<std::uint32_t>();
        if (kind > static_cast<std::uint32_t>(LayerKind::linear_output))
            throw FormatError("model: unknown layer kind " + std::to_string(kind));
        l.kind = static_cast<LayerKind>(kind);
        l.size = static_cast<int>(r.get<std::uint32_t>());
        l.kernel = static_cast<int>(r.get<std::uint32_t>());
        l.rate = std::round(static_cast<double>(r.get<float>()) * 1e6) / 1e6;
        if (l.size > (1 << 20) || l.kernel > (1 << 20))
            throw FormatError("model: implausible layer size");
        spec.layers.push_back(l);
    }
    try {
        spec.validate();
    } catch (const std::exception& e) {
        throw FormatError(std::string("model: invalid layer table: ") + e.what());
    }
    for (const char* name : {"fcn", "cnn", "da-fcn", "da-cnn"}) {
        auto known = NetworkSpec::variant(name, spec.input_width);
        known.name.clear();
        if (known == spec)
            spec.name = name;
    }
    if (spec.name.empty())
        spec.name = "custom";

    Network<float> net(spec, 0);
    if (values != net.stored_value_count())
        throw FormatError("model: value count does not match the layer table");
    auto get_layer = [&](Layer<float>& l) {
        for (auto& p : l.params)
            r.get_array(std::span<float>(p.data(), static_cast<std::size_t>(p.size())));
        for (auto& b : l.buffers)
            r.get_array(std::span<float>(b.data(), static_cast<std::size_t>(b.size())));
    };
    for (auto& l : net.layers())
        get_layer(l);
    if (net.has_discriminator())
        get_layer(net.discriminator());
    r.check_crc();
    return net;
}

void save_model(const Network<float>& net, const std::filesystem::path& path)
{
    binio::write_file(path, serialize_model(net));
}

Network<float> load_model(const std::filesystem::path& path)
{
    return deserialize_model(binio::read_file(path));
}

Network<float> load_model(const std::filesystem::path& path, const NetworkSpec& expected)
{
    auto net = load_model(path);
    auto a = net.spec();
    auto b = expected;
    a.name.clear();
    b.name.clear();
    if (!(a == b))
        throw FormatError("model '" + path.string() + "': topology is '" + net.spec().name +
                          "', expected '" + expected.name + "'");
    return net;
}

} // namespace oxyspec::nn

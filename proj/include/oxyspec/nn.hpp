#pragma once

#include "oxyspec/dataset.hpp"
#include "oxyspec/image.hpp"
#include "oxyspec/random.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace oxyspec::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class LayerKind : std::uint8_t {
    dense = 0,
    conv1d = 1,
    relu = 2,
    batchnorm = 3,
    dropout = 4,
    linear_output = 5,
};

std::string_view to_string(LayerKind kind);

enum class Mode { train, eval };

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    int size = 0;   ///< dense/linear_output: nodes; conv1d: output channels
    int kernel = 0; ///< conv1d kernel width
    double rate = 0.0;

    static LayerSpec dense(int nodes) { return {LayerKind::dense, nodes, 0, 0.0}; }
    static LayerSpec conv1d(int channels, int kernel) { return {LayerKind::conv1d, channels, kernel, 0.0}; }
    static LayerSpec relu() { return {LayerKind::relu, 0, 0, 0.0}; }
    static LayerSpec batchnorm() { return {LayerKind::batchnorm, 0, 0, 0.0}; }
    static LayerSpec dropout(double rate) { return {LayerKind::dropout, 0, 0, rate}; }
    static LayerSpec linear_output() { return {LayerKind::linear_output, 1, 0, 0.0}; }

    bool operator==(const LayerSpec&) const = default;
};

/// Activations are laid out as (channels * length) x batch, channel-major.
struct Shape {
    int channels = 1;
    int length = 1;
    int flat() const noexcept { return channels * length; }
    bool operator==(const Shape&) const = default;
};

struct NetworkSpec {
    std::string name;
    int input_width = kDefaultBands;
    /// Hidden layers followed by exactly one linear_output head.
    std::vector<LayerSpec> layers;
    bool discriminator = false;

    /// Throws ConfigError on invalid sizes, ShapeError when a kernel exceeds
    /// its input length.
    void validate() const;
    /// Output shape of every layer, in order.
    std::vector<Shape> shapes() const;

    static NetworkSpec fcn(int input_width = kDefaultBands);
    static NetworkSpec cnn(int input_width = kDefaultBands);
    static NetworkSpec da_fcn(int input_width = kDefaultBands);
    static NetworkSpec da_cnn(int input_width = kDefaultBands);
    /// "fcn", "cnn", "da-fcn" or "da-cnn".
    static NetworkSpec variant(std::string_view name, int input_width = kDefaultBands);

    bool operator==(const NetworkSpec&) const = default;
};

template <typename T>
struct LayerCache {
    Mat<T> input;   ///< dense/conv: input or im2col matrix
    Mat<T> aux;     ///< relu/dropout: mask; batchnorm: normalized input
    Mat<T> stats;   ///< batchnorm: [mean; biased var; inverse std] per channel
};

template <typename T>
struct ParamRef {
    Mat<T>* value;
    Mat<T>* grad;
};

/// One layer with its parameters and accumulated gradients.
template <typename T>
struct Layer {
    LayerSpec spec;
    Shape in;
    Shape out;
    std::vector<Mat<T>> params;  ///< dense: W, b; conv1d: W (out x in*k), b; batchnorm: gamma, beta
    std::vector<Mat<T>> grads;
    std::vector<Mat<T>> buffers; ///< batchnorm: running mean, running var
    /// Replaces the random dropout mask (for gradient checks).
    std::optional<Mat<T>> fixed_mask;

    static constexpr double kBatchNormEps = 1e-5;
    static constexpr double kBatchNormMomentum = 0.1;

    Layer(const LayerSpec& spec, Shape in);

    void initialize(Rng& rng);
    Mat<T> forward(const Mat<T>& x, LayerCache<T>& cache, Mode mode, Rng* rng) const;
    /// Returns the input gradient and adds parameter gradients into `grads`.
    Mat<T> backward(const Mat<T>& dy, const LayerCache<T>& cache);
    /// Eval-mode forward without a cache.
    Mat<T> infer(const Mat<T>& x) const;
    /// Batchnorm in eval mode as a per-row affine map y = scale * x + shift.
    void eval_affine(Vec<T>& scale, Vec<T>& shift) const;
    /// Folds the batch statistics in `cache` into the running statistics.
    void update_running_stats(const LayerCache<T>& cache);
    std::size_t parameter_count() const noexcept;
};

template <typename T>
struct ForwardPass {
    Mat<T> prediction; ///< 1 x batch
    Mat<T> features;   ///< last hidden activations, F x batch
    std::vector<LayerCache<T>> caches;
};

template <typename T>
class Network {
public:
    explicit Network(NetworkSpec spec, std::uint64_t init_seed = 0);

    const NetworkSpec& spec() const noexcept { return spec_; }
    std::vector<Layer<T>>& layers() noexcept { return layers_; }
    const std::vector<Layer<T>>& layers() const noexcept { return layers_; }
    bool has_discriminator() const noexcept { return discriminator_.has_value(); }
    Layer<T>& discriminator();
    const Layer<T>& discriminator() const;
    int feature_width() const noexcept;

    /// x is width x batch. Train mode draws dropout masks from `dropout_rng`
    /// and, when `update_stats`, folds batch statistics into the running ones.
    ForwardPass<T> forward(const Mat<T>& x, Mode mode, Rng* dropout_rng = nullptr,
                           bool update_stats = true);
    /// Eval-mode prediction; never mutates the network.
    Mat<T> predict(const Mat<T>& x) const;
    /// Eval-mode prediction and last-hidden features, without caches.
    ForwardPass<T> evaluate(const Mat<T>& x) const;

    /// Backpropagates d(loss)/d(prediction) plus an optional extra gradient on
    /// the features; accumulates generator gradients and returns d/dx.
    Mat<T> backward(const ForwardPass<T>& pass, const Mat<T>& d_prediction,
                    const Mat<T>* d_features = nullptr);

    /// Discriminator logits (1 x batch) for a feature matrix.
    Mat<T> discriminate(const Mat<T>& features) const;
    /// Gradient of the discriminator w.r.t. its input; accumulates
    /// discriminator parameter gradients only when `accumulate`.
    Mat<T> discriminator_backward(const Mat<T>& features, const Mat<T>& d_logits,
                                  bool accumulate);

    void zero_grad();
    std::vector<ParamRef<T>> generator_parameters();
    std::vector<ParamRef<T>> discriminator_parameters();

    /// Affine weights and biases, excluding batchnorm and discriminator.
    std::size_t dense_parameter_count() const noexcept;
    std::size_t batchnorm_parameter_count() const noexcept;
    std::size_t discriminator_parameter_count() const noexcept;
    /// Every stored float: parameters of all parts plus running statistics.
    std::size_t stored_value_count() const noexcept;

    /// Flattened copies, in a fixed order, for checksums and tests.
    std::vector<T> generator_vector() const;
    std::vector<T> discriminator_vector() const;

    template <typename U>
    Network<U> cast() const;

private:
    template <typename>
    friend class Network;
    struct Uninitialized {};
    Network(NetworkSpec spec, Uninitialized);

    NetworkSpec spec_;
    std::vector<Layer<T>> layers_;
    std::optional<Layer<T>> discriminator_;
};

extern template class Network<float>;
extern template class Network<double>;
extern template struct Layer<float>;
extern template struct Layer<double>;

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0; ///< decoupled
};

/// Adam with decoupled weight decay. State is keyed by parameter position,
/// so the same parameter list must be passed on every step.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
    void step(const std::vector<ParamRef<T>>& params);
    void set_lr(double lr) noexcept { cfg_.lr = lr; }
    double lr() const noexcept { return cfg_.lr; }
    std::uint64_t steps() const noexcept { return t_; }

private:
    AdamConfig cfg_;
    std::uint64_t t_ = 0;
    std::vector<Mat<T>> m_;
    std::vector<Mat<T>> v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

/// Reduce-on-plateau: a loss counts as an improvement when it is below
/// best * (1 - threshold). After `patience` consecutive non-improving epochs
/// the rate is divided by `factor` and the count restarts.
class PlateauScheduler {
public:
    PlateauScheduler(double lr, double factor = 10.0, int patience = 10, double threshold = 0.01);
    /// Returns true when this epoch triggered a reduction.
    bool step(double loss);
    double lr() const noexcept { return lr_; }
    int bad_epochs() const noexcept { return bad_; }

private:
    double lr_;
    double factor_;
    int patience_;
    double threshold_;
    double best_;
    int bad_ = 0;
};

struct TrainConfig {
    double lr_generator = 1e-3;
    double lr_discriminator = 1e-6;
    double adversarial_weight = 0.25;
    double weight_decay = 1e-6;
    int batch = 512;
    int epochs = 100;
    double scheduler_factor = 10.0;
    int scheduler_patience = 10;
    double scheduler_threshold = 0.01;
    /// Per-epoch noise augmentation of the simulated training data; infinity disables it.
    double augment_snr_db = 40.0;
    /// Keeps the discriminator fixed (used to check the reduction to plain training).
    bool freeze_discriminator = false;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;           ///< 1-based
    double train_loss = 0.0; ///< plain: MSE; adversarial: L_r + lambda L_a + L_D
    double val_loss = 0.0;   ///< MSE on the once-augmented simulated validation set
    double lr = 0.0;         ///< generator rate used during the epoch
    double regression_loss = 0.0;
    double adversarial_loss = 0.0;
    double discriminator_loss = 0.0;
    /// Balanced accuracy on the validation pools (adversarial only, else NaN).
    double discriminator_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
};

/// JSON object on one line.
std::string format_record(const EpochRecord& record);

struct StepLosses {
    double regression = 0.0;
    double adversarial = 0.0;
    double discriminator = 0.0;
    double total = 0.0; ///< regression + lambda * adversarial + discriminator
    double discriminator_accuracy = 0.0;
};

/// Owns a network and its optimizers; exposes the individual update steps.
template <typename T>
class Trainer {
public:
    Trainer(Network<T> net, const TrainConfig& cfg);

    Network<T>& network() noexcept { return net_; }
    const Network<T>& network() const noexcept { return net_; }
    void set_lr(double lr) noexcept { gen_opt_.set_lr(lr); }
    double lr() const noexcept { return gen_opt_.lr(); }

    /// One MSE step; x is width x batch. Returns the loss before the update.
    double regression_step(const Mat<T>& x, const Mat<T>& y, Rng& dropout_rng);

    /// Discriminator step on detached features, then generator step on
    /// L_r(sim) + lambda * BCE against flipped domain labels.
    StepLosses adversarial_step(const Mat<T>& x_sim, const Mat<T>& y_sim, const Mat<T>& x_real,
                                Rng& sim_dropout_rng, Rng& real_dropout_rng);

private:
    Network<T> net_;
    TrainConfig cfg_;
    Adam<T> gen_opt_;
    Adam<T> disc_opt_;
};

extern template class Trainer<float>;
extern template class Trainer<double>;

struct TrainResult {
    Network<float> network;
    TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Plain MSE training with per-epoch noise augmentation and plateau
/// scheduling; returns the parameters of the best validation epoch.
TrainResult train_regressor(const NetworkSpec& spec, const TrainConfig& cfg,
                            const Dataset& train, const Dataset& val,
                            const EpochCallback& on_epoch = {});

/// Domain-adversarial training over balanced sim/real batches.
TrainResult train_adversarial(const NetworkSpec& spec, const TrainConfig& cfg,
                              const Dataset& sim_train, const Dataset& sim_val,
                              const Dataset& real_train, const Dataset& real_val,
                              const EpochCallback& on_epoch = {});

/// Eval-mode MSE of a network on a dataset; `labels` overrides the stored ones.
double evaluate_mse(const Network<float>& net, const Dataset& ds,
                    std::span<const float> labels = {});

/// Eval-mode predictions, one per row.
std::vector<float> predict(const Network<float>& net, const Dataset& ds);

/// Balanced accuracy of the network's discriminator (sim = 0, real = 1).
double discriminator_balanced_accuracy(const Network<float>& net, const Dataset& sim,
                                       const Dataset& real);

/// Last-hidden features in eval mode, rows = samples.
Eigen::MatrixXd hidden_features(const Network<float>& net, const Dataset& ds);

/// Per-pixel oxygenation from an eval-mode network. With `normalize`, every
/// pixel is AUC-normalized first; pixels with non-positive area are marked
/// degenerate and set to 0. Output is clamped to [0, 1].
OxygenationMap infer_map(const Network<float>& net, const Hypercube& cube, bool normalize = true);

/// Binary layout, little-endian:
///   header  "OXNN" | u32 version | u32 input width | u32 layer count | u32 flags | u64 value count  (28 bytes)
///   layers  count x (u32 kind | u32 size | u32 kernel | f32 rate)                                 (16 bytes each)
///   values  f32 x value count: per layer params then running statistics, then discriminator
///   trailer u32 CRC-32
inline constexpr std::uint32_t kModelVersion = 1;
inline constexpr std::size_t kModelHeaderBytes = 28;
inline constexpr std::size_t kModelLayerBytes = 16;

std::vector<std::uint8_t> serialize_model(const Network<float>& net);
Network<float> deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const Network<float>& net, const std::filesystem::path& path);
Network<float> load_model(const std::filesystem::path& path);
/// Throws FormatError when the stored topology differs from `expected`.
Network<float> load_model(const std::filesystem::path& path, const NetworkSpec& expected);

} // namespace oxyspec::nn

#pragma once

#include "oxyspec/dataset.hpp"
#include "oxyspec/nn.hpp"
#include "oxyspec/optics.hpp"
#include "oxyspec/spectral.hpp"
#include "oxyspec/transport.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace oxyspec {

/// Everything the pipeline needs, read from an INI file. Unknown sections
/// and keys are errors; file paths are resolved against the config file's
/// directory and must exist.
struct PipelineConfig {
    std::uint64_t seed = 0;
    unsigned threads = 1;

    PriorConfig priors;
    int grid_nx = 20;
    int grid_ny = 20;
    double voxel_size = 0.01;
    TransportConfig transport;
    CameraConfig camera;

    std::size_t count = 10'000;
    std::size_t real_count = 1'875;
    std::size_t real_test_count = 115;
    double train_fraction = 0.8;
    int strat_bins = 10;

    DistortionSpec distortion;

    std::string variant = "fcn";
    std::vector<int> fcn_hidden{64, 128, 256};
    std::vector<int> cnn_channels{16, 32};
    int kernel = 2;
    double dropout = 0.2;
    nn::TrainConfig train;

    int bench_iterations = 1000;
    int bench_warmup = 3;
    int bench_height = 272;
    int bench_width = 512;

    /// Named substreams of the global seed.
    std::uint64_t simulation_seed() const noexcept;
    std::uint64_t real_simulation_seed() const noexcept;
    std::uint64_t real_test_seed() const noexcept;
    std::uint64_t split_seed() const noexcept;
    std::uint64_t training_seed() const noexcept;
    std::uint64_t distortion_seed() const noexcept;
    std::uint64_t bench_seed() const noexcept;

    GenerationConfig generation() const;
    SplitSpec split() const;
    DistortionSpec distortion_spec() const;
    nn::TrainConfig train_config() const;
    nn::NetworkSpec network(std::string_view variant_name = {}) const;

    /// Cross-field checks; throws ConfigError naming the offending key.
    void validate() const;
};

PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = ".");
PipelineConfig load_config(const std::filesystem::path& path);

/// The full schema with default values, as an INI document.
std::string default_config_text();

} // namespace oxyspec

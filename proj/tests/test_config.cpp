#include "support.hpp"

#include "oxyspec/config.hpp"
#include "oxyspec/error.hpp"

#include <set>

using namespace oxyspec;

TEST_CASE("default document parses to the defaults")
{
    const auto cfg = parse_config(default_config_text());
    const PipelineConfig def;
    CHECK(cfg.seed == def.seed);
    CHECK(cfg.count == def.count);
    CHECK(cfg.grid_nx == def.grid_nx);
    CHECK(cfg.transport.n_photons == def.transport.n_photons);
    CHECK(cfg.fcn_hidden == def.fcn_hidden);
    CHECK(cfg.train.batch == def.train.batch);
    CHECK(cfg.train.adversarial_weight == def.train.adversarial_weight);
    CHECK(cfg.distortion.crosstalk == def.distortion.crosstalk);
    CHECK(cfg.bench_width == def.bench_width);
    CHECK(cfg.network("fcn") == nn::NetworkSpec::fcn());
    CHECK(cfg.network("cnn") == nn::NetworkSpec::cnn());
    CHECK(cfg.network("da-fcn") == nn::NetworkSpec::da_fcn());
}

TEST_CASE("errors name the offending key")
{
    SUBCASE("unknown key")
    {
        try {
            parse_config("[train]\nbatch_size = 3\n");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("train.batch_size") != std::string::npos);
        }
    }
    SUBCASE("invalid prior range")
    {
        try {
            parse_config("[prior.layer1]\noxygenation = 0.2, 1.4\n");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("oxygenation") != std::string::npos);
        }
    }
    SUBCASE("bad value")
    {
        CHECK_THROWS_AS(parse_config("[dataset]\ncount = many\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[network]\nvariant = rnn\n"), ConfigError);
    }
    SUBCASE("missing files")
    {
        CHECK_THROWS_AS(load_config("/nonexistent/oxyspec.ini"), ConfigError);
        CHECK_THROWS_AS(parse_config("[camera]\nresponse_csv = nowhere.csv\n"), ConfigError);
    }
}

TEST_CASE("per-layer prior override")
{
    const auto cfg = parse_config("[prior]\nblood_volume_fraction = 0.02, 0.03\n[prior.layer2]\noxygenation = 0.4\n");
    for (const auto& l : cfg.priors.layers)
        CHECK(l.blood_volume_fraction.hi == 0.03);
    CHECK(cfg.priors.layers[1].oxygenation.lo == 0.4);
    CHECK(cfg.priors.layers[1].oxygenation.hi == 0.4);
    CHECK(cfg.priors.layers[0].oxygenation.lo == PriorConfig{}.layers[0].oxygenation.lo);
}

TEST_CASE("substreams are distinct and follow the seed")
{
    PipelineConfig cfg;
    cfg.seed = 11;
    const std::set<std::uint64_t> seeds{cfg.simulation_seed(), cfg.real_simulation_seed(), cfg.real_test_seed(),
                                        cfg.split_seed(),      cfg.training_seed(),
                                        cfg.distortion_seed(), cfg.bench_seed()};
    CHECK(seeds.size() == 7);
    CHECK(cfg.split().seed == cfg.split_seed());
    CHECK(cfg.train_config().seed == cfg.training_seed());
    PipelineConfig other = cfg;
    other.seed = 12;
    CHECK(other.simulation_seed() != cfg.simulation_seed());
}

TEST_CASE("shipped configurations")
{
    const std::filesystem::path dir = OXYSPEC_SOURCE_DIR "/configs";
    const auto full = load_config(dir / "full.ini");
    CHECK(full.count == 640'000);
    CHECK(full.transport.n_photons == 100'000);
    const auto desk = load_config(dir / "desk.ini");
    CHECK(desk.count == 10'000);
    CHECK(desk.real_count == 1'875);
    CHECK(desk.real_test_count == 115);
    CHECK(full.real_count == 120'000);
    CHECK(full.real_test_count == 7'328);
}

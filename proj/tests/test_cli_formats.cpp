#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "seedsr/checkpoint.hpp"
#include "seedsr/pipeline.hpp"
#include "seedsr/runconfig.hpp"
#include "seedsr/stf.hpp"

using namespace seedsr;
namespace fs = std::filesystem;

namespace {

const char* kTmp = "/tmp/seedsr_test_formats";

Tensor random_tensor(std::vector<int> dims, uint64_t seed) {
    Philox rng(seed);
    return rng.normal_tensor(std::move(dims));
}

}  // namespace

TEST_CASE("stf round trip is bitwise exact") {
    fs::create_directories(kTmp);
    Tensor t = random_tensor({3, 5, 2}, 1);
    const std::string path = std::string(kTmp) + "/t.stf";
    save_stf(path, t);
    Tensor back = load_stf(path);
    REQUIRE(back.dims() == t.dims());
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(back[i] == t[i]);
}

TEST_CASE("stf f32 files widen exactly") {
    fs::create_directories(kTmp);
    Tensor t = random_tensor({4, 4}, 2);
    const std::string path = std::string(kTmp) + "/t32.stf";
    save_stf(path, t, /*as_f32=*/true);
    Tensor back = load_stf(path);
    for (int64_t i = 0; i < t.numel(); ++i) {
        CHECK(back[i] == static_cast<double>(static_cast<float>(t[i])));
    }
}

TEST_CASE("stf rejects truncation and bad magic") {
    fs::create_directories(kTmp);
    Tensor t = random_tensor({8, 8}, 3);
    const std::string path = std::string(kTmp) + "/trunc.stf";
    save_stf(path, t);
    const auto full = fs::file_size(path);
    fs::resize_file(path, full - 17);
    CHECK_THROWS_AS(load_stf(path), FormatError);

    const std::string bad = std::string(kTmp) + "/bad.stf";
    std::ofstream f(bad, std::ios::binary);
    f << "NOPE then some garbage";
    f.close();
    CHECK_THROWS_AS(load_stf(bad), FormatError);

    CHECK_THROWS_AS(load_stf(std::string(kTmp) + "/does_not_exist.stf"), MissingArtifactError);
}

TEST_CASE("run config parsing applies sections and rejects unknowns with line numbers") {
    RunConfig base = preset_desk();
    const std::string good =
        "# comment\n"
        "[run]\n"
        "seed = 99\n"
        "[train]\n"
        "lr = 0.001\n"
        "steps = 50   # trailing comment\n"
        "[metrics]\n"
        "overlap_basis = gt\n";
    RunConfig cfg = parse_run_config(good, base);
    CHECK(cfg.seed == 99);
    CHECK(cfg.train.lr == doctest::Approx(0.001));
    CHECK(cfg.train.steps == 50);
    CHECK(cfg.overlap_basis == OverlapBasis::gt);

    auto expect_line = [&](const std::string& text, const char* frag) {
        try {
            parse_run_config(text, base);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find(frag) != std::string::npos);
            CHECK(std::string(e.what()).find("line") != std::string::npos);
        }
    };
    expect_line("[train]\nlearning_rate = 1\n", "unknown key");
    expect_line("[nonsense]\n", "unknown section");
    expect_line("[train]\nlr 0.1\n", "expected key = value");
    expect_line("lr = 0.1\n", "before any [section]");
    expect_line("[train]\nlr = banana\n", "expected number");
    expect_line("[model]\nuse_ref = maybe\n", "true/false");
    expect_line("[model]\nenc_channels = 1,2,3\n", "4 comma-separated");
}

TEST_CASE("config echo parses back to itself") {
    RunConfig cfg = preset_desk();
    cfg.seed = 4242;
    cfg.train.steps = 123;
    cfg.model.use_ref = false;
    const std::string echo = config_echo(cfg);
    RunConfig back = parse_run_config(echo, preset_desk());
    CHECK(config_echo(back) == echo);
}

TEST_CASE("presets") {
    const RunConfig paper = preset_paper();
    CHECK(paper.model.hr_c == 3840);
    CHECK(paper.sched_T == 500);
    CHECK(paper.sampler.t_inf == 470);
    CHECK(paper.train.batch == 128);
    CHECK(paper.train.lr == doctest::Approx(5e-4));
    CHECK_THROWS_AS(preset_by_name("giant"), ConfigError);
}

TEST_CASE("checkpoint round trip preserves parameters and forward outputs") {
    DenoiserConfig cfg = desk_config();
    DenoiserParams params = init_params(cfg, 2718);
    const std::string dir = std::string(kTmp) + "/ckpt";
    fs::remove_all(dir);
    save_checkpoint(dir, params, cfg);
    DenoiserConfig cfg2;
    DenoiserParams back = load_checkpoint(dir, &cfg2);
    CHECK(cfg2.hr_hw == cfg.hr_hw);
    CHECK(cfg2.enc_channels == cfg.enc_channels);
    REQUIRE(back.tensors.size() == params.tensors.size());
    for (const auto& [k, t] : params.tensors) {
        const Tensor& u = back.tensors.at(k);
        for (int64_t i = 0; i < t.numel(); ++i) CHECK(u[i] == t[i]);
    }

    Philox rng(5);
    Tensor x = rng.normal_tensor({32, 32, 16});
    ConditioningBundle cond;
    cond.e_r = rng.normal_tensor({32, 32, 16});
    cond.e_l = rng.normal_tensor({8, 8, 8});
    Tensor a = denoiser_forward_value(params, cfg, x, 11, cond);
    Tensor b = denoiser_forward_value(back, cfg2, x, 11, cond);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);

    CHECK_THROWS_AS(load_checkpoint(std::string(kTmp) + "/no_ckpt"), MissingArtifactError);
}

TEST_CASE("shapes text lists one row per layer") {
    const std::string text = shapes_text(paper_config());
    CHECK(text.find("concat (120,120,7744)\n") != std::string::npos);
    CHECK(text.find("output_conv_block (120,120,3840)\n") != std::string::npos);
}

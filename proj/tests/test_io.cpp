#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "uegan/config.hpp"
#include "uegan/network.hpp"
#include "uegan/raster_io.hpp"

using namespace uegan;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("uegan-io-" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_raw(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("PGM masks: all-255 loads as ones, binarization at 128") {
    TempDir tmp;
    write_raw(tmp.file("ones.pgm"), std::string("P5\n2 2\n255\n") +
                                        std::string(4, static_cast<char>(255)));
    Mask m = load_mask_pgm(tmp.file("ones.pgm"));
    REQUIRE(m.h == 2);
    REQUIRE(m.w == 2);
    for (uint8_t v : m.v) CHECK(v == 1);

    std::string gray = "P5\n3 1\n255\n";
    gray += static_cast<char>(127);
    gray += static_cast<char>(128);
    gray += static_cast<char>(200);
    write_raw(tmp.file("gray.pgm"), gray);
    Mask g = load_mask_pgm(tmp.file("gray.pgm"));
    CHECK(g.v[0] == 0);
    CHECK(g.v[1] == 1);
    CHECK(g.v[2] == 1);
}

TEST_CASE("PPM pixels scale to [0,1] per channel") {
    TempDir tmp;
    std::string ppm = "P6\n1 1\n255\n";
    ppm += static_cast<char>(255);
    ppm += static_cast<char>(0);
    ppm += static_cast<char>(0);
    write_raw(tmp.file("red.ppm"), ppm);
    Tensor t = load_ppm(tmp.file("red.ppm"));
    CHECK(t.at(0, 0, 0, 0) == doctest::Approx(1.f));
    CHECK(t.at(0, 1, 0, 0) == doctest::Approx(0.f));
    CHECK(t.at(0, 2, 0, 0) == doctest::Approx(0.f));
}

TEST_CASE("mask and image round-trips are lossless") {
    TempDir tmp;
    Rng rng(1);
    Mask m(7, 9);
    for (auto& v : m.v) v = rng.bernoulli(0.4) ? 1 : 0;
    save_pgm(tmp.file("m.pgm"), m);
    Mask back = load_mask_pgm(tmp.file("m.pgm"));
    CHECK(back.v == m.v);

    Tensor img(1, 3, 5, 4);
    for (auto& v : img.data) v = static_cast<float>(rng.randint(0, 255)) / 255.f;
    save_ppm(tmp.file("i.ppm"), img);
    Tensor back_img = load_ppm(tmp.file("i.ppm"));
    REQUIRE(back_img.same_shape(img));
    for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(back_img.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));
}

TEST_CASE("PNM comments are skipped; malformed files report byte offsets") {
    TempDir tmp;
    write_raw(tmp.file("c.pgm"), std::string("P5\n# width and height\n2 1\n255\n") +
                                     std::string(2, static_cast<char>(9)));
    Mask m = load_mask_pgm(tmp.file("c.pgm"));
    CHECK(m.w == 2);

    write_raw(tmp.file("bad_magic.pgm"), "P7\n2 2\n255\n....");
    CHECK_THROWS_AS(load_mask_pgm(tmp.file("bad_magic.pgm")), ParseError);

    write_raw(tmp.file("truncated.pgm"), "P5\n4 4\n255\nxy");
    try {
        load_mask_pgm(tmp.file("truncated.pgm"));
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.byte_offset > 0);
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }

    write_raw(tmp.file("maxval.pgm"), "P5\n2 2\n65535\n\0\0\0\0");
    CHECK_THROWS_AS(load_mask_pgm(tmp.file("maxval.pgm")), ParseError);
}

TEST_CASE("raster PGM autoscale maps min/max to 0/255") {
    TempDir tmp;
    Raster r(1, 3);
    r.v = {0.2f, 0.5f, 0.8f};
    save_pgm(tmp.file("a.pgm"), r, true);
    Raster back = load_raster_pgm(tmp.file("a.pgm"));
    CHECK(back.v[0] == doctest::Approx(0.f));
    CHECK(back.v[2] == doctest::Approx(1.f));
}

TEST_CASE("config: serialize -> parse -> serialize is identity") {
    RunConfig cfg;
    cfg.steps = 17;
    cfg.model.base_channels = 4;
    cfg.adv_weight = 0.25;
    cfg.seed = 1234567;
    std::string s1 = serialize_run_config(cfg);
    RunConfig parsed = parse_run_config(s1);
    std::string s2 = serialize_run_config(parsed);
    CHECK(s1 == s2);
    CHECK(parsed.steps == 17);
    CHECK(parsed.model.base_channels == 4);
    CHECK(parsed.adv_weight == 0.25);
    CHECK(parsed.seed == 1234567);
}

TEST_CASE("config parser rejects unknown keys and bad values") {
    CHECK_THROWS_AS(parse_run_config("no_such_key = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("steps = banana\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("steps\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("image_size = 60\n"), ConfigError);  // not 16-divisible
    RunConfig ok = parse_run_config("# comment\n\nsteps = 3\nuse_uam = false\n");
    CHECK(ok.steps == 3);
    CHECK_FALSE(ok.model.use_uam);
}

TEST_CASE("config file round-trip") {
    TempDir tmp;
    RunConfig cfg;
    cfg.val_count = 7;
    save_run_config(tmp.file("c.txt"), cfg);
    RunConfig back = load_run_config(tmp.file("c.txt"));
    CHECK(back.val_count == 7);
    CHECK(serialize_run_config(back) == serialize_run_config(cfg));
    CHECK_THROWS_AS(load_run_config(tmp.file("missing.txt")), ConfigError);
}

TEST_CASE("checkpoints reload bit-identically into a matching model") {
    TempDir tmp;
    ModelConfig mc;
    mc.base_channels = 2;
    mc.depth = 2;
    auto ps = build_generator<float>(mc, 99);
    save_checkpoint(tmp.file("m.uegt"), ps);

    auto raw = load_checkpoint(tmp.file("m.uegt"));
    REQUIRE(raw.size() == ps.items.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        CHECK(raw[i].first == ps.items[i].first);
        CHECK(raw[i].second.data == ps.items[i].second->data);
    }

    auto fresh = build_generator<float>(mc, 7);  // different init
    load_checkpoint_into(tmp.file("m.uegt"), fresh);
    for (std::size_t i = 0; i < fresh.items.size(); ++i)
        CHECK(fresh.items[i].second->data == ps.items[i].second->data);

    // mismatched model shape is rejected
    ModelConfig other = mc;
    other.base_channels = 4;
    auto wrong = build_generator<float>(other, 1);
    CHECK_THROWS_AS(load_checkpoint_into(tmp.file("m.uegt"), wrong), ConfigError);

    write_raw(tmp.file("bad.uegt"), "NOPE");
    CHECK_THROWS_AS(load_checkpoint(tmp.file("bad.uegt")), ParseError);
}

#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "t2v/config.hpp"
#include "t2v/image_io.hpp"

using namespace t2v;

namespace {

int run(const std::string& args) {
    std::string cmd = std::string(T2V_BIN) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream(path, std::ios::trunc) << text;
}

const char* kSmokeConfig =
    "# smoke run\n"
    "train.total_steps = 10\n"
    "train.batch_size_image = 2\n"
    "train.batch_size_video = 2\n"
    "train.f_video = 2\n"
    "data.height = 16\n"
    "data.width = 16\n"
    "sched.steps = 20\n"
    "unet.base_channels = 8\n"
    "unet.time_dim = 16\n"
    "text.n_p = 8\n"
    "text.n_c = 16\n"
    "text.layers = 1\n"
    "text.heads = 2\n"
    "st.heads = 2\n"
    "codec.train_steps = 40\n"
    "codec.frames = 24\n"
    "codec.heldout = 4\n"
    "out.dir = smoke_run\n";

}  // namespace

TEST_CASE("config: defaults, comments, unknown keys with line numbers") {
    Config d = Config::defaults();
    CHECK(d.get_u64("train.total_steps") == 2000);
    CHECK(d.get_double("train.lr") == doctest::Approx(1e-4));
    // every registered key has a documented default
    for (const auto& spec : Config::registry()) {
        CHECK_FALSE(spec.doc.empty());
        CHECK_NOTHROW(d.get(spec.key));
    }

    write_file("cfg_ok.cfg", "# comment\ntrain.lr = 0.5   # inline comment\n\nsched.steps=7\n");
    Config c = Config::from_file("cfg_ok.cfg");
    CHECK(c.get_double("train.lr") == doctest::Approx(0.5));
    CHECK(c.get_u64("sched.steps") == 7);

    write_file("cfg_bad.cfg", "train.lr = 0.1\nnot.a.key = 3\n");
    try {
        Config::from_file("cfg_bad.cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.line == 2);
        CHECK(std::string(e.what()).find("not.a.key") != std::string::npos);
    }

    write_file("cfg_bad2.cfg", "just some words\n");
    CHECK_THROWS_AS(Config::from_file("cfg_bad2.cfg"), ConfigError);
    CHECK_THROWS_AS(Config::from_file("no_such_file.cfg"), ConfigError);

    write_file("cfg_badval.cfg", "train.lr = fast\n");
    Config bv = Config::from_file("cfg_badval.cfg");
    CHECK_THROWS_AS(bv.get_double("train.lr"), ConfigError);

    for (const char* f : {"cfg_ok.cfg", "cfg_bad.cfg", "cfg_bad2.cfg", "cfg_badval.cfg"}) std::remove(f);
}

TEST_CASE("config hash changes iff an effective value changes") {
    Config a = Config::defaults();
    Config b = Config::defaults();
    CHECK(a.effective_hash() == b.effective_hash());
    b.set("train.lr", "0.00010001");
    CHECK(a.effective_hash() != b.effective_hash());
    b.set("train.lr", a.get("train.lr"));
    CHECK(a.effective_hash() == b.effective_hash());
}

TEST_CASE("export_frames: exact PPM bytes") {
    // all black 2x2
    VideoClip black(Tensor::zeros({1, 2, 2, 3}));
    export_frames(black, "ppm_out");
    std::string data = read_file("ppm_out/frame_000.ppm");
    std::string header = "P6\n2 2\n255\n";
    REQUIRE(data.size() == header.size() + 12);
    CHECK(data.substr(0, header.size()) == header);
    for (size_t i = header.size(); i < data.size(); ++i) CHECK(data[i] == '\0');

    // all white
    VideoClip white(Tensor::ones({1, 2, 2, 3}));
    export_frames(white, "ppm_out");
    data = read_file("ppm_out/frame_000.ppm");
    for (size_t i = header.size(); i < data.size(); ++i) CHECK((unsigned char)data[i] == 255);

    // mid gray rounds half up
    VideoClip gray(Tensor::full({1, 2, 2, 3}, 0.5f));
    export_frames(gray, "ppm_out");
    data = read_file("ppm_out/frame_000.ppm");
    for (size_t i = header.size(); i < data.size(); ++i) CHECK((unsigned char)data[i] == 128);

    CHECK_THROWS(export_frames(gray, "ppm_out", "gif"));

    // round trip through the reader
    Tensor back = read_ppm("ppm_out/frame_000.ppm");
    CHECK(back.shape() == Shape{2, 2, 3});
    CHECK(back.values()[0] == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("t2v binary: usage and config errors exit 2") {
    CHECK(run("") == 2);
    CHECK(run("train --config missing_file.cfg") == 2);
    CHECK(run("frobnicate") == 2);
    write_file("bad_key.cfg", "wrong.key = 1\n");
    CHECK(run("train --config bad_key.cfg") == 2);
    std::remove("bad_key.cfg");
    CHECK(run("eval --ckpt nowhere.bin --suite invariants") == 2);
}

TEST_CASE("t2v binary: smoke train, deterministic sampling, eval suites") {
    write_file("smoke.cfg", kSmokeConfig);
    REQUIRE(run("train --config smoke.cfg") == 0);

    // exactly one CSV row per step
    std::string csv = read_file("smoke_run/loss.csv");
    size_t rows = 0;
    std::stringstream ss(csv);
    std::string line;
    while (std::getline(ss, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 10);
    CHECK(csv.substr(0, 2) == "0,");
    CHECK(csv.find("image") != std::string::npos);
    CHECK(csv.find("video") != std::string::npos);

    // sampling twice gives byte-identical frames and a manifest
    std::string sample_args =
        " --ckpt smoke_run/checkpoint.bin --prompt \"a red square moving right\""
        " --seed 9 --frames 3 --steps 5 --guidance 2.0";
    REQUIRE(run("sample" + sample_args + " --out samp_a") == 0);
    REQUIRE(run("sample" + sample_args + " --out samp_b") == 0);
    for (const char* f : {"frame_000.ppm", "frame_001.ppm", "frame_002.ppm"})
        CHECK(read_file(std::string("samp_a/") + f) == read_file(std::string("samp_b/") + f));

    auto manifest = nlohmann::json::parse(read_file("samp_a/manifest.json"));
    CHECK(manifest["prompt"] == "a red square moving right");
    CHECK(manifest["seed"] == 9);
    CHECK(manifest["config_hash"].get<std::string>().size() == 16);
    CHECK(manifest["frame_files"].size() == 3);

    // invariants suite passes on any checkpoint of this architecture
    CHECK(run("eval --ckpt smoke_run/checkpoint.bin --suite invariants") == 0);
    CHECK(run("eval --ckpt smoke_run/checkpoint.bin --suite nonsense") == 2);

    // a corrupted checkpoint is a usage error
    {
        std::string bytes = read_file("smoke_run/checkpoint.bin");
        bytes[bytes.size() / 2] ^= 0x10;
        write_file("smoke_run/corrupt.bin", bytes);
        CHECK(run("eval --ckpt smoke_run/corrupt.bin --suite invariants") == 2);
        CHECK(run("sample --ckpt smoke_run/corrupt.bin --prompt x --out samp_c") == 2);
    }

    std::remove("smoke.cfg");
    std::filesystem::remove_all("smoke_run");
    std::filesystem::remove_all("samp_a");
    std::filesystem::remove_all("samp_b");
    std::filesystem::remove_all("ppm_out");
}

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dynimp/config.hpp"
#include "dynimp/io.hpp"
#include "support.hpp"

using namespace dynimp;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "dynimp_io_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

bool same_windows(const Dataset& a, const Dataset& b) {
    if (a.windows.size() != b.windows.size()) return false;
    for (std::size_t i = 0; i < a.windows.size(); ++i) {
        const auto& x = a.windows[i];
        const auto& y = b.windows[i];
        if (!bitwise_equal(x.values, y.values) || !(x.mask == y.mask) || x.label_id != y.label_id) return false;
    }
    return true;
}

struct EnvGuard {
    std::string name;
    EnvGuard(const std::string& n, const std::string& v) : name(n) { ::setenv(n.c_str(), v.c_str(), 1); }
    ~EnvGuard() { ::unsetenv(name.c_str()); }
};

}  // namespace

TEST_CASE("hex reals round-trip") {
    for (double v : {0.0, -0.0, 1.0 / 3.0, 1e-310, -7.25e200, 0.1}) {
        CHECK(testing::same_bits(parse_hex(format_hex(v)), v));
    }
    CHECK_THROWS(parse_hex("zz"));
}

TEST_CASE("dataset round-trip is bit-exact") {
    SyntheticSpec spec;
    spec.users = 1;
    spec.minutes = 240;
    auto d = generate_synthetic(spec);
    apply_scaling(d, fit_scaling(d, ScalingMode::zscore));
    d = inject_missingness(d, 0.3, 4).first;

    std::stringstream ss;
    write_dataset(ss, d);
    const auto back = read_dataset(ss);
    CHECK(same_windows(d, back));
    CHECK(back.scaling == d.scaling);
    CHECK(back.feature_names == d.feature_names);
    CHECK(back.label_names == d.label_names);
    CHECK(back.window_length == d.window_length);

    const auto path = scratch("ds.txt");
    save_dataset(path, d);
    CHECK(same_windows(load_dataset(path), d));

    SUBCASE("wrong header is rejected") {
        std::istringstream bad("dynimp-dataset 2\n");
        CHECK_THROWS(read_dataset(bad));
        std::istringstream other("dynimp-checkpoint 1\n");
        CHECK_THROWS(read_dataset(other));
    }
    SUBCASE("missing file is named") {
        try {
            load_dataset(scratch("nope.txt"));
            FAIL("expected throw");
        } catch (const std::exception& e) {
            CHECK(std::string(e.what()).find("nope.txt") != std::string::npos);
        }
    }
}

TEST_CASE("checkpoint round-trip is bit-exact, including optimizer state") {
    Rng rng(2);
    std::vector<Window> ws;
    for (int i = 0; i < 6; ++i) ws.push_back(testing::random_window(rng, 5, 3, 0.2, false));
    DynImpConfig cfg;
    cfg.hidden = 4;
    cfg.epochs = 2;
    cfg.batch = 3;
    Checkpoint ck{make_model(3, cfg, 9), {}};
    ck.model.feature_means = {0.1, 0.2, 0.3};
    train(ck.model, ws);
    ck.scaling.mode = ScalingMode::minmax;
    ck.scaling.location = {0, 1, 2};
    ck.scaling.spread = {1, 1, 0.5};
    ck.scaling.constant = {0, 1, 0};

    std::stringstream ss;
    write_checkpoint(ss, ck);
    const auto back = read_checkpoint(ss);
    const auto a = ck.model.tensors();
    const auto b = back.model.tensors();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(bitwise_equal(*a[i], *b[i]));
    CHECK(back.model.optimizer == ck.model.optimizer);
    CHECK(back.model.epochs_completed == 2);
    CHECK(back.model.seed == ck.model.seed);
    CHECK(back.model.feature_means == ck.model.feature_means);
    CHECK(back.model.config.hidden == 4);
    CHECK(back.model.config.padding == ck.model.config.padding);
    CHECK(back.scaling == ck.scaling);

    std::istringstream bad("dynimp-checkpoint 7\n");
    CHECK_THROWS(read_checkpoint(bad));
}

TEST_CASE("config precedence: defaults < file < environment < flags") {
    RunConfig c;
    CHECK(c.get("hidden") == "32");
    const auto file = scratch("run.conf");
    {
        std::ofstream out(file);
        out << "# comment\nhidden = 8\nepochs=3  # trailing\nk = 2\n";
    }
    c.merge_file(file);
    CHECK(c.get_size("hidden") == 8);
    CHECK(c.get_size("epochs") == 3);
    {
        EnvGuard g("DYNIMP_HIDDEN", "12");
        c.merge_environment();
    }
    CHECK(c.get_size("hidden") == 12);
    CHECK(c.get_size("k") == 2);
    c.set("hidden", "16");
    CHECK(c.get_size("hidden") == 16);
    CHECK(c.dynimp_config().hidden == 16);
    CHECK(c.dynimp_config().neighbors == 2);
}

TEST_CASE("config rejects unknown keys everywhere") {
    RunConfig c;
    CHECK_THROWS(c.set("hiden", "3"));
    CHECK_THROWS(c.merge_text("hiden = 3"));
    CHECK_THROWS(c.merge_text("no equals sign"));
    {
        EnvGuard g("DYNIMP_HIDEN", "3");
        CHECK_THROWS(c.merge_environment());
    }
    const auto m = scratch("bad.json");
    {
        std::ofstream out(m);
        out << R"({"config": {"hiden": "3"}})";
    }
    CHECK_THROWS(c.merge_manifest(m));
}

TEST_CASE("config from a run manifest") {
    const auto m = scratch("manifest.json");
    {
        std::ofstream out(m);
        out << R"({"format": "dynimp-manifest 1", "config": {"hidden": "5", "loss": "mse"}})";
    }
    RunConfig c;
    c.merge_file(m);
    CHECK(c.get_size("hidden") == 5);
    CHECK(c.dynimp_config().loss == LossMode::mse);
}

TEST_CASE("config text round-trips") {
    RunConfig c;
    c.set("levels", "0.1,0.5");
    RunConfig d;
    d.merge_text(c.to_text());
    CHECK(d.values() == c.values());
    CHECK(d.get_reals("levels") == std::vector<double>{0.1, 0.5});
}

TEST_CASE("config validation") {
    RunConfig c;
    CHECK_NOTHROW(c.validate());
    for (auto [k, v] : std::vector<std::pair<std::string, std::string>>{{"keep_prob", "0"},
                                                                         {"keep_prob", "1.5"},
                                                                         {"hidden", "0"},
                                                                         {"hidden", "-1"},
                                                                         {"k", "0"},
                                                                         {"padding", "median"},
                                                                         {"loss", "hinge"},
                                                                         {"levels", "1.0"},
                                                                         {"methods", "mean,foo"},
                                                                         {"coupling", "2"},
                                                                         {"grad_check", "maybe"},
                                                                         {"window_length", "1"}}) {
        RunConfig bad;
        bad.set(k, v);
        CAPTURE(k);
        CAPTURE(v);
        CHECK_THROWS(bad.validate());
    }
}

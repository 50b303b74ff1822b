#include <doctest.h>

#include <cmath>
#include <vector>

#include "dynimp/dynimp_model.hpp"
#include "support.hpp"

using namespace dynimp;
using testing::kNaN;

namespace {

DynImpConfig small_config() {
    DynImpConfig c;
    c.hidden = 4;
    c.epochs = 3;
    c.batch = 4;
    return c;
}

std::vector<Window> scaled_synthetic(std::size_t users, std::size_t minutes, double coupling, std::uint64_t seed = 1) {
    SyntheticSpec spec;
    spec.users = users;
    spec.minutes = minutes;
    spec.coupling = coupling;
    spec.seed = seed;
    auto d = generate_synthetic(spec);
    apply_scaling(d, fit_scaling(d, ScalingMode::minmax));
    return d.windows;
}

}  // namespace

TEST_CASE("corruption") {
    Rng rng(4);
    const auto w = testing::random_window(rng, 6, 3, 0.3, false);
    SUBCASE("keep probability 1 is the identity") {
        const auto c = corrupt(w.values, w.mask, {1.0, 99});
        CHECK(bitwise_equal(c.values, w.values));
        CHECK(c.effective_mask == w.mask);
    }
    SUBCASE("tiny keep probability drops everything to 0") {
        const auto c = corrupt(w.values, w.mask, {1e-300, 5});
        for (double v : c.values.flat()) CHECK(v == 0.0);
        CHECK(c.effective_mask.count_observed() == 0);
    }
    SUBCASE("keep fraction at p = 0.8 within +-4 sigma over 10 000 cells") {
        Tensor2 x(100, 100, 0.5);
        const auto c = corrupt(x, MaskMatrix(100, 100, true), {0.8, 17});
        const auto kept = c.effective_mask.count_observed();
        CHECK(kept >= 7840);
        CHECK(kept <= 8160);
    }
    SUBCASE("dropped cells are a subset of observed cells; kept cells unchanged") {
        const auto c = corrupt(w.values, w.mask, {0.5, 3});
        for (std::size_t t = 0; t < 6; ++t) {
            for (std::size_t f = 0; f < 3; ++f) {
                if (c.effective_mask(t, f)) {
                    CHECK(w.mask(t, f));
                    CHECK(c.values(t, f) == w.values(t, f));
                }
            }
        }
    }
    SUBCASE("invalid probability") {
        CHECK_THROWS(corrupt(w.values, w.mask, {0.0, 1}));
        CHECK_THROWS(corrupt(w.values, w.mask, {1.5, 1}));
    }
}

TEST_CASE("forward pass") {
    auto cfg = small_config();
    SUBCASE("zero-initialised model outputs 0.5 everywhere") {
        auto m = make_model(3, cfg, 1);
        for (auto* t : m.tensors()) t->fill(0.0);
        Window w{Tensor2(5, 3, 0.2), MaskMatrix(5, 3, true), 0};
        const auto fp = forward(m, w, {0.8, 3});
        for (double z : fp.reconstruction.flat()) CHECK(z == 0.5);
    }
    SUBCASE("p = 1 on a full window: input is x itself and output repeats") {
        auto m = make_model(3, cfg, 2);
        Rng rng(2);
        auto w = testing::random_window(rng, 5, 3, 0.0, false);
        const auto a = forward(m, w, {1.0, 1});
        const auto b = forward(m, w, {1.0, 2});
        CHECK(bitwise_equal(a.input, w.values));
        CHECK(bitwise_equal(a.reconstruction, b.reconstruction));
    }
    SUBCASE("bce rejects unscaled observed cells") {
        auto m = make_model(1, cfg, 3);
        Window w{Tensor2(3, 1, {0.2, 4.0, 0.5}), MaskMatrix(3, 1, true), 0};
        CHECK_THROWS(forward(m, w, {}));
        w.mask.set(1, 0, false);
        CHECK_NOTHROW(forward(m, w, {}));
    }
    SUBCASE("feature count mismatch") {
        auto m = make_model(2, cfg, 3);
        Window w{Tensor2(3, 3, 0.5), MaskMatrix(3, 3, true), 0};
        CHECK_THROWS(forward(m, w, {}));
    }
}

TEST_CASE("reconstruction loss") {
    MaskMatrix one(1, 1, true);
    CHECK(reconstruction_loss(Tensor2(1, 1, 0.5), Tensor2(1, 1, 1.0), one, LossMode::bce) ==
          doctest::Approx(0.6931).epsilon(1e-4));
    CHECK(reconstruction_loss(Tensor2(1, 1, 1.0), Tensor2(1, 1, 1.0), one, LossMode::bce) < 1e-6);
    CHECK(reconstruction_loss(Tensor2(1, 1, 0.0), Tensor2(1, 1, 0.0), one, LossMode::bce) < 1e-6);
    CHECK(reconstruction_loss(Tensor2(1, 1, 0.3), Tensor2(1, 1, 0.3), one, LossMode::mse) == 0.0);

    SUBCASE("only masked-in cells count; NaN targets elsewhere are ignored") {
        Tensor2 z(1, 2, {0.5, 0.5});
        Tensor2 x(1, 2, {1.0, kNaN});
        MaskMatrix m(1, 2, true);
        m.set(0, 1, false);
        CHECK(reconstruction_loss(z, x, m, LossMode::bce) == doctest::Approx(std::log(2.0)));
        const auto g = reconstruction_loss_grad(z, x, m, LossMode::bce);
        CHECK(g(0, 1) == 0.0);
        CHECK(g(0, 0) == doctest::Approx(-2.0));
    }
    SUBCASE("gradient matches finite differences") {
        Rng rng(6);
        Tensor2 z(3, 2), x(3, 2);
        for (auto& v : z.flat()) v = rng.uniform(0.05, 0.95);
        for (auto& v : x.flat()) v = rng.uniform();
        MaskMatrix m(3, 2, true);
        m.set(1, 1, false);
        for (auto mode : {LossMode::bce, LossMode::mse}) {
            const auto g = reconstruction_loss_grad(z, x, m, mode);
            for (std::size_t i = 0; i < z.size(); ++i) {
                const double num = testing::central_difference(
                    [&] { return reconstruction_loss(z, x, m, mode); }, &z.flat()[i], 1e-7);
                CHECK(g.flat()[i] == doctest::Approx(num).epsilon(1e-6));
            }
        }
    }
    CHECK_THROWS(reconstruction_loss(Tensor2(1, 1, 0.5), Tensor2(1, 1, 1.0), MaskMatrix(1, 1, false), LossMode::bce));
}

TEST_CASE("full-pipeline gradient check on random small instances") {
    for (auto padding : {ImputerKind::zero, ImputerKind::mean, ImputerKind::interp, ImputerKind::knn}) {
        for (auto loss : {LossMode::bce, LossMode::mse}) {
            DynImpConfig cfg;
            cfg.padding = padding;
            cfg.loss = loss;
            cfg.neighbors = 2;
            const auto suite = grad_check_random_instances(6, cfg, 1e-5, 1e-4, 0, 42);
            CHECK(suite.reports.size() == 6);
            CHECK(suite.passed());
            CHECK(suite.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("window_gradient skips windows with nothing observed") {
    auto m = make_model(2, small_config(), 1);
    Window w{Tensor2(3, 2, kNaN), MaskMatrix(3, 2, false), 0};
    ModelGradients g(m);
    CHECK_FALSE(window_gradient(m, w, {0.8, 1}, g).has_value());
    for (const auto* t : g.tensors()) {
        for (double v : t->flat()) CHECK(v == 0.0);
    }
}

TEST_CASE("training") {
    const auto windows = scaled_synthetic(2, 240, 0.9);
    SUBCASE("zero epochs leave the model unchanged") {
        auto cfg = small_config();
        cfg.epochs = 0;
        auto m = make_model(windows[0].features(), cfg, 5);
        const auto before = m;
        const auto log = train(m, windows);
        CHECK(log.empty());
        CHECK(m.encoder == before.encoder);
        CHECK(m.decoder == before.decoder);
        CHECK(m.optimizer == before.optimizer);
    }
    SUBCASE("same seed -> identical loss logs and weights") {
        auto cfg = small_config();
        auto a = make_model(windows[0].features(), cfg, 9);
        auto b = make_model(windows[0].features(), cfg, 9);
        const auto la = train(a, windows);
        const auto lb = train(b, windows);
        REQUIRE(la.size() == 3);
        for (std::size_t i = 0; i < la.size(); ++i) CHECK(testing::same_bits(la[i].mean_loss, lb[i].mean_loss));
        CHECK(a.encoder == b.encoder);
        CHECK(a.epochs_completed == 3);
    }
    SUBCASE("serial and OpenMP batch gradients train identically") {
        auto cfg = small_config();
        cfg.parallel = false;
        auto a = make_model(windows[0].features(), cfg, 9);
        cfg.parallel = true;
        auto b = make_model(windows[0].features(), cfg, 9);
        train(a, windows);
        train(b, windows);
        CHECK(a.encoder == b.encoder);
        CHECK(a.decoder == b.decoder);
    }
    SUBCASE("training in two halves equals one run") {
        auto cfg = small_config();
        cfg.epochs = 4;
        auto whole = make_model(windows[0].features(), cfg, 3);
        train(whole, windows);
        cfg.epochs = 2;
        auto split = make_model(windows[0].features(), cfg, 3);
        train(split, windows);
        train(split, windows);
        CHECK(split.encoder == whole.encoder);
        CHECK(split.optimizer == whole.optimizer);
    }
    SUBCASE("a huge learning rate diverges with an epoch/batch diagnostic") {
        auto cfg = small_config();
        cfg.loss = LossMode::mse;
        cfg.adam.lr = 1e308;
        auto m = make_model(windows[0].features(), cfg, 3);
        try {
            train(m, windows);
            FAIL("expected divergence");
        } catch (const TrainingDiverged& e) {
            CHECK(std::string(e.what()).find("epoch") != std::string::npos);
            CHECK(std::string(e.what()).find("batch") != std::string::npos);
        }
    }
}

TEST_CASE("training reduces the loss on coupled data") {
    const auto windows = scaled_synthetic(2, 480, 0.9, 4);
    DynImpConfig cfg;
    cfg.hidden = 16;
    cfg.epochs = 50;
    auto m = make_model(windows[0].features(), cfg, 4);
    m.feature_means = observed_feature_means(windows);
    const auto log = train(m, windows);
    REQUIRE(log.size() == 50);
    CHECK(log.back().mean_loss < log.front().mean_loss);
}

TEST_CASE("impute") {
    auto cfg = small_config();
    const auto windows = scaled_synthetic(1, 120, 0.9);
    auto m = make_model(windows[0].features(), cfg, 6);
    train(m, windows);
    SUBCASE("fully observed window passes through unchanged") {
        const auto out = impute(m, windows[0]);
        CHECK(bitwise_equal(out.values, windows[0].values));
    }
    SUBCASE("missing column is filled by decoder outputs in (0, 1)") {
        auto w = windows[1];
        for (std::size_t t = 0; t < w.length(); ++t) {
            w.mask.set(t, 2, false);
            w.values(t, 2) = kNaN;
        }
        const auto out = impute(m, w);
        const auto fp = forward(m, w, {1.0, 0});
        for (std::size_t t = 0; t < w.length(); ++t) {
            CHECK(out.values(t, 2) > 0.0);
            CHECK(out.values(t, 2) < 1.0);
            CHECK(out.values(t, 2) == fp.reconstruction(t, 2));
            CHECK(out.values(t, 0) == w.values(t, 0));
        }
    }
    SUBCASE("window with nothing observed falls back to mean padding and stays finite") {
        Window w{Tensor2(4, windows[0].features(), kNaN), MaskMatrix(4, windows[0].features(), false), 0};
        const auto out = impute(m, w);
        for (double v : out.values.flat()) CHECK(std::isfinite(v));
    }
}

TEST_CASE("configuration checks") {
    DynImpConfig c;
    CHECK_NOTHROW(c.validate());
    c.keep_prob = 0.0;
    CHECK_THROWS(c.validate());
    c = {};
    c.hidden = 0;
    CHECK_THROWS(c.validate());
    c = {};
    c.adam.lr = -1;
    CHECK_THROWS(c.validate());
    CHECK(parse_loss_mode("mse") == LossMode::mse);
    CHECK_THROWS(parse_loss_mode("hinge"));
}

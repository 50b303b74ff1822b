#include <doctest.h>

#include <cmath>
#include <vector>

#include "dynimp/neural_core.hpp"
#include "support.hpp"

using namespace dynimp;
using testing::central_difference;
using testing::rel_err;

namespace {

void randomize(std::span<Tensor2* const> ts, Rng& rng, double scale) {
    for (auto* t : ts) {
        for (auto& v : t->flat()) v = scale * rng.normal();
    }
}

Tensor2 random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Tensor2 m(r, c);
    for (auto& v : m.flat()) v = rng.normal();
    return m;
}

/// L = sum_t <g_t, h_t> for fixed random g: dL/dh_t = g_t.
double sequence_objective(const LstmParams& p, const Tensor2& xs, const Tensor2& g) {
    const auto seq = lstm_sequence_forward(p, xs);
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g.flat()[i] * seq.hidden.flat()[i];
    return s;
}

}  // namespace

TEST_CASE("sigmoid is stable and symmetric") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(1000.0) == 1.0);
    CHECK(sigmoid(-1000.0) == 0.0);
    CHECK(sigmoid(2.0) + sigmoid(-2.0) == doctest::Approx(1.0));
}

TEST_CASE("LSTM cell with zero parameters") {
    LstmParams p(3, 2);
    const std::vector<double> x{0.3, -1.2, 4.0};
    SUBCASE("zero state: gates 0.5, candidate 0, state 0") {
        const auto step = lstm_cell_forward(p, x, LstmState::zeros(2));
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(step.cache.input[j] == 0.5);
            CHECK(step.cache.forget[j] == 0.5);
            CHECK(step.cache.output[j] == 0.5);
            CHECK(step.cache.candidate[j] == 0.0);
            CHECK(step.state.c[j] == 0.0);
            CHECK(step.state.h[j] == 0.0);
        }
    }
    SUBCASE("previous c = 1: c = 0.5, h = 0.5 tanh 0.5") {
        LstmState prev{{0.0, 0.0}, {1.0, 1.0}};
        const auto step = lstm_cell_forward(p, x, prev);
        CHECK(step.state.c[0] == 0.5);
        CHECK(step.state.h[0] == doctest::Approx(0.2311).epsilon(1e-4));
        CHECK(step.state.h[1] == 0.5 * std::tanh(0.5));
    }
}

TEST_CASE("LSTM cell against a hand-written evaluation") {
    Rng rng(3);
    LstmParams p(2, 3);
    randomize(p.tensors(), rng, 0.5);
    const std::vector<double> x{0.4, -0.7};
    LstmState prev{{0.1, -0.2, 0.3}, {0.5, -0.5, 0.2}};
    const auto step = lstm_cell_forward(p, x, prev);
    const std::size_t H = 3;
    for (std::size_t j = 0; j < H; ++j) {
        auto pre = [&](std::size_t gate) {
            const auto r = gate * H + j;
            double a = p.bias(r, 0);
            for (std::size_t d = 0; d < 2; ++d) a += p.w_input(r, d) * x[d];
            for (std::size_t k = 0; k < H; ++k) a += p.w_recurrent(r, k) * prev.h[k];
            return a;
        };
        const double i = 1 / (1 + std::exp(-pre(0)));
        const double f = 1 / (1 + std::exp(-pre(1)));
        const double g = std::tanh(pre(2));
        const double o = 1 / (1 + std::exp(-pre(3)));
        const double c = prev.c[j] * f + g * i;
        CHECK(step.state.c[j] == doctest::Approx(c).epsilon(1e-13));
        CHECK(step.state.h[j] == doctest::Approx(o * std::tanh(c)).epsilon(1e-13));
    }
}

TEST_CASE("LSTM sequence") {
    Rng rng(8);
    LstmParams p(2, 3);
    randomize(p.tensors(), rng, 0.5);
    const auto xs = random_matrix(3, 2, rng);

    SUBCASE("matches manual chaining of cells") {
        const auto seq = lstm_sequence_forward(p, xs);
        auto state = LstmState::zeros(3);
        for (std::size_t t = 0; t < 3; ++t) {
            state = lstm_cell_forward(p, xs.row(t), state).state;
            for (std::size_t j = 0; j < 3; ++j) CHECK(seq.hidden(t, j) == state.h[j]);
        }
    }
    SUBCASE("T = 1 equals one cell call") {
        Tensor2 one(1, 2, {xs(0, 0), xs(0, 1)});
        const auto seq = lstm_sequence_forward(p, one);
        const auto step = lstm_cell_forward(p, one.row(0), LstmState::zeros(3));
        for (std::size_t j = 0; j < 3; ++j) CHECK(seq.hidden(0, j) == step.state.h[j]);
    }
    SUBCASE("zero parameters -> zero hidden states") {
        const auto seq = lstm_sequence_forward(LstmParams(2, 3), xs);
        for (double v : seq.hidden.flat()) CHECK(v == 0.0);
    }
    SUBCASE("pure: two forwards are bit-identical") {
        CHECK(bitwise_equal(lstm_sequence_forward(p, xs).hidden, lstm_sequence_forward(p, xs).hidden));
    }
}

TEST_CASE("LSTM backward against central differences (H = 2, D = 2, T = 3)") {
    Rng rng(12);
    for (int rep = 0; rep < 5; ++rep) {
        LstmParams p(2, 2);
        randomize(p.tensors(), rng, 0.6);
        auto xs = random_matrix(3, 2, rng);
        const auto g = random_matrix(3, 2, rng);
        const auto seq = lstm_sequence_forward(p, xs);
        const auto grads = lstm_backward(p, seq.caches, g);

        auto objective = [&] { return sequence_objective(p, xs, g); };
        auto ps = p.tensors();
        auto gs = grads.params.tensors();
        for (std::size_t ti = 0; ti < ps.size(); ++ti) {
            for (std::size_t i = 0; i < ps[ti]->size(); ++i) {
                const double num = central_difference(objective, &ps[ti]->flat()[i], 1e-5);
                CHECK(rel_err(gs[ti]->flat()[i], num) < 1e-5);
            }
        }
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double num = central_difference(objective, &xs.flat()[i], 1e-5);
            CHECK(rel_err(grads.inputs.flat()[i], num) < 1e-5);
        }
    }
}

TEST_CASE("LSTM backward: zero upstream gradient, output-gate bias identity, accumulate variant") {
    Rng rng(4);
    LstmParams p(2, 2);
    randomize(p.tensors(), rng, 0.5);
    const auto xs = random_matrix(4, 2, rng);
    const auto seq = lstm_sequence_forward(p, xs);

    const auto zero = lstm_backward(p, seq.caches, Tensor2(4, 2, 0.0));
    for (const auto* t : zero.params.tensors()) {
        for (double v : t->flat()) CHECK(v == 0.0);
    }

    const auto g = random_matrix(4, 2, rng);
    const auto grads = lstm_backward(p, seq.caches, g);
    // dL/db_o[j] = sum_t dL/dh_t[j] * tanh(c_t[j]) * o_t[j] (1 - o_t[j]) when only h feeds the loss
    // directly; recurrent paths add their own terms, so compare to a finite difference per step set.
    for (std::size_t j = 0; j < 2; ++j) {
        auto objective = [&] { return sequence_objective(p, xs, g); };
        const double num = central_difference(objective, &p.b(LstmParams::output_gate, j), 1e-5);
        CHECK(rel_err(grads.params.b(LstmParams::output_gate, j), num) < 1e-6);
    }
    // single-step check of the per-step output-gate formula
    Tensor2 x1(1, 2, {xs(0, 0), xs(0, 1)});
    const auto s1 = lstm_sequence_forward(p, x1);
    Tensor2 g1(1, 2, {g(0, 0), g(0, 1)});
    const auto gr1 = lstm_backward(p, s1.caches, g1);
    for (std::size_t j = 0; j < 2; ++j) {
        const auto& c = s1.caches[0];
        const double manual = g1(0, j) * c.tanh_c[j] * c.output[j] * (1 - c.output[j]);
        CHECK(gr1.params.b(LstmParams::output_gate, j) == doctest::Approx(manual).epsilon(1e-12));
    }

    LstmParams acc(2, 2);
    lstm_backward_accumulate(p, seq.caches, g, acc);
    lstm_backward_accumulate(p, seq.caches, g, acc);
    auto a = acc.tensors();
    auto b = grads.params.tensors();
    for (std::size_t ti = 0; ti < a.size(); ++ti) {
        for (std::size_t i = 0; i < a[ti]->size(); ++i) CHECK(a[ti]->flat()[i] == doctest::Approx(2 * b[ti]->flat()[i]));
    }
}

TEST_CASE("dense layer") {
    SUBCASE("identity weights") {
        DenseParams p(3, 3);
        for (std::size_t i = 0; i < 3; ++i) p.weight(i, i) = 1.0;
        const std::vector<double> x{0.1, -2, 7};
        CHECK(dense_forward(p, x, Activation::identity) == x);
    }
    SUBCASE("zero weights, bias c, sigmoid") {
        DenseParams p(2, 2);
        p.bias(0, 0) = 0.7;
        p.bias(1, 0) = -1.3;
        const auto y = dense_forward(p, std::vector<double>{5, 5}, Activation::sigmoid);
        CHECK(y[0] == sigmoid(0.7));
        CHECK(y[1] == sigmoid(-1.3));
    }
    SUBCASE("random 3x4 against central differences") {
        Rng rng(21);
        for (auto act : {Activation::identity, Activation::sigmoid, Activation::tanh}) {
            DenseParams p(4, 3);
            randomize(p.tensors(), rng, 0.7);
            std::vector<double> x(4);
            for (auto& v : x) v = rng.normal();
            std::vector<double> g(3);
            for (auto& v : g) v = rng.normal();
            auto objective = [&] {
                const auto y = dense_forward(p, x, act);
                double s = 0;
                for (std::size_t i = 0; i < 3; ++i) s += g[i] * y[i];
                return s;
            };
            const auto y = dense_forward(p, x, act);
            DenseParams grads(4, 3);
            std::vector<double> dx(4, 0.0);
            dense_backward(p, x, y, g, act, grads, dx);
            auto ps = p.tensors();
            auto gs = grads.tensors();
            for (std::size_t ti = 0; ti < 2; ++ti) {
                for (std::size_t i = 0; i < ps[ti]->size(); ++i) {
                    const double num = central_difference(objective, &ps[ti]->flat()[i], 1e-6);
                    CHECK(rel_err(gs[ti]->flat()[i], num) < 1e-6);
                }
            }
            for (std::size_t i = 0; i < 4; ++i) {
                const double num = central_difference(objective, &x[i], 1e-6);
                CHECK(rel_err(dx[i], num) < 1e-6);
            }
        }
    }
}

TEST_CASE("grad_check utility") {
    SUBCASE("quadratic loss of a linear model is near exact") {
        std::vector<double> w{0.5, -1.5, 2.0};
        const std::vector<double> x{1.0, 2.0, -0.5};
        auto loss = [&] {
            double z = 0;
            for (std::size_t i = 0; i < 3; ++i) z += w[i] * x[i];
            return 0.5 * (z - 1.0) * (z - 1.0);
        };
        double z = 0;
        for (std::size_t i = 0; i < 3; ++i) z += w[i] * x[i];
        std::vector<double> analytic{(z - 1) * x[0], (z - 1) * x[1], (z - 1) * x[2]};
        std::vector<double*> refs{&w[0], &w[1], &w[2]};
        const auto report = grad_check(loss, refs, analytic, 1e-5, 1e-9);
        CHECK(report.passed());
        CHECK(report.max_rel_error < 1e-9);
        CHECK(report.checked == 3);
        CHECK(w == std::vector<double>{0.5, -1.5, 2.0});
    }
    SUBCASE("a wrong gradient is reported") {
        double w = 2.0;
        std::vector<double*> refs{&w};
        const std::vector<double> wrong{1.0};  // true derivative of w^2 is 4
        const auto report = grad_check([&] { return w * w; }, refs, wrong, 1e-5, 1e-4);
        CHECK_FALSE(report.passed());
        CHECK(report.max_rel_error == doctest::Approx(0.75).epsilon(1e-6));
    }
    SUBCASE("eps = 0 is a precondition error") {
        double w = 1.0;
        std::vector<double*> refs{&w};
        const std::vector<double> g{2.0};
        CHECK_THROWS(grad_check([&] { return w * w; }, refs, g, 0.0, 1e-4));
    }
}

TEST_CASE("parameter helpers") {
    Tensor2 a(2, 2, {3, 0, 0, 0});
    Tensor2 b(1, 1, {4});
    std::vector<Tensor2*> ts{&a, &b};
    std::vector<const Tensor2*> cts{&a, &b};
    CHECK(total_size(cts) == 5);
    CHECK(global_norm(cts) == 5.0);
    const auto flat = flatten(cts);
    CHECK(flat == std::vector<double>{3, 0, 0, 0, 4});
    CHECK(clip_global_norm(ts, 2.5) == 5.0);
    CHECK(a(0, 0) == doctest::Approx(1.5));
    CHECK(b(0, 0) == doctest::Approx(2.0));
    CHECK(clip_global_norm(ts, 10.0) == doctest::Approx(2.5));
    CHECK(a(0, 0) == doctest::Approx(1.5));
    unflatten(flat, ts);
    CHECK(a(0, 0) == 3.0);
}

TEST_CASE("Adam") {
    SUBCASE("zero gradient: parameters fixed, moments decay") {
        Tensor2 w(1, 2, {1.0, -1.0});
        Tensor2 g(1, 2, 0.0);
        std::vector<Tensor2*> ps{&w};
        std::vector<const Tensor2*> gs{&g};
        auto st = AdamState::zeros_like(std::vector<const Tensor2*>{&w});
        st.first[0].fill(0.5);
        st.second[0].fill(0.25);
        adam_step(ps, gs, st, {});
        CHECK(st.first[0](0, 0) == doctest::Approx(0.45));
        CHECK(st.second[0](0, 0) == doctest::Approx(0.24975));
        w = Tensor2(1, 2, {1.0, -1.0});
        st = AdamState::zeros_like(std::vector<const Tensor2*>{&w});
        adam_step(ps, gs, st, {});
        CHECK(w(0, 0) == 1.0);
        CHECK(w(0, 1) == -1.0);
    }
    SUBCASE("constant gradient: step size tends to lr") {
        Tensor2 w(1, 1, {0.0});
        Tensor2 g(1, 1, {3.0});
        std::vector<Tensor2*> ps{&w};
        std::vector<const Tensor2*> gs{&g};
        auto st = AdamState::zeros_like(std::vector<const Tensor2*>{&w});
        AdamHyper h;
        h.lr = 0.01;
        double prev = 0.0;
        double step = 0.0;
        for (int i = 0; i < 2000; ++i) {
            adam_step(ps, gs, st, h);
            step = prev - w(0, 0);
            prev = w(0, 0);
        }
        CHECK(step == doctest::Approx(0.01).epsilon(1e-6));
    }
    SUBCASE("first step moves each parameter by lr against the gradient sign") {
        Tensor2 w(1, 2, {0.0, 0.0});
        Tensor2 g(1, 2, {0.2, -50.0});
        std::vector<Tensor2*> ps{&w};
        std::vector<const Tensor2*> gs{&g};
        auto st = AdamState::zeros_like(std::vector<const Tensor2*>{&w});
        adam_step(ps, gs, st, {});
        CHECK(w(0, 0) == doctest::Approx(-1e-3).epsilon(1e-6));
        CHECK(w(0, 1) == doctest::Approx(1e-3).epsilon(1e-6));
    }
    SUBCASE("deterministic") {
        Tensor2 w1(1, 1, {0.3}), w2(1, 1, {0.3});
        Tensor2 g(1, 1, {0.7});
        auto s1 = AdamState::zeros_like(std::vector<const Tensor2*>{&w1});
        auto s2 = s1;
        std::vector<Tensor2*> p1{&w1}, p2{&w2};
        std::vector<const Tensor2*> gs{&g};
        adam_step(p1, gs, s1, {});
        adam_step(p2, gs, s2, {});
        CHECK(testing::same_bits(w1(0, 0), w2(0, 0)));
        CHECK(s1 == s2);
    }
}

TEST_CASE("fan-in initialisation") {
    Rng rng(1);
    LstmParams p(3, 5);
    init_uniform_fan_in(p, rng);
    const double bound = 1.0 / std::sqrt(8.0);
    for (double v : p.w_input.flat()) CHECK(std::abs(v) <= bound);
    for (std::size_t j = 0; j < 5; ++j) CHECK(p.b(LstmParams::forget_gate, j) == 1.0);
    for (std::size_t j = 0; j < 5; ++j) {
        CHECK(std::abs(p.b(LstmParams::input_gate, j)) <= bound);
        CHECK(std::abs(p.b(LstmParams::output_gate, j)) <= bound);
    }
}

#include <doctest.h>

#include <cmath>
#include <cstring>

#include "gradcheck.hpp"
#include "ssmi/tensor.hpp"

using namespace ssmi;

namespace {

TensorPtr randt(Rng& rng, std::vector<std::size_t> shape, bool rg = false) {
    return randn(std::move(shape), rng, 1.0, rg);
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("matmul basics") {
    auto m = tensor({2, 2}, {1, 2, 3, 4});
    auto r = matmul(eye(2), m);
    CHECK(r->data == std::vector<double>{1, 2, 3, 4});

    auto a = tensor({1, 2}, {1, 2});
    auto b = tensor({2, 1}, {3, 4});
    CHECK(value(matmul(a, b)) == 11.0);

    CHECK_THROWS_AS(matmul(tensor({2, 3}, std::vector<double>(6, 0.0)),
                           tensor({2, 2}, std::vector<double>(4, 0.0))),
                    DimensionError);
}

TEST_CASE("matmul against triple-loop oracle") {
    Rng rng(11);
    auto a = randt(rng, {3, 4});
    auto b = randt(rng, {4, 2});
    auto c = matmul(a, b);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 4; ++k) s += a->data[i * 4 + k] * b->data[k * 2 + j];
            CHECK(std::abs(c->data[i * 2 + j] - s) < 1e-12);
        }
    }
}

TEST_CASE("elementwise identities and broadcast oracle") {
    Rng rng(12);
    auto x = randt(rng, {2, 3});
    auto zero = zeros({2, 3});
    auto one = full({2, 3}, 1.0);
    CHECK(add(x, zero)->data == x->data);
    CHECK(mul(x, one)->data == x->data);

    auto v = randt(rng, {3});
    auto y = add(x, v);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(y->data[i * 3 + j] == x->data[i * 3 + j] + v->data[j]);

    CHECK_THROWS_AS(add(x, randt(rng, {2})), DimensionError);
}

TEST_CASE("softmax examples and properties") {
    auto s = softmax_last(tensor({2}, {0, 0}));
    CHECK(s->data[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s->data[1] == doctest::Approx(0.5).epsilon(1e-15));

    auto big = softmax_last(tensor({2}, {1000, 0}));
    CHECK(big->data[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(big->data[1] == doctest::Approx(0.0).epsilon(1e-12));

    auto x = tensor({3}, {1, 2, 3});
    auto sm = softmax_last(x);
    double z = 0.0;
    for (double v : x->data) z += std::exp(v - 3.0);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::abs(sm->data[i] - std::exp(x->data[i] - 3.0) / z) < 1e-12);
    }

    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        auto r = softmax_last(randt(rng, {4, 5}));
        for (std::size_t i = 0; i < 4; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < 5; ++j) {
                row += r->data[i * 5 + j];
                CHECK(r->data[i * 5 + j] > 0.0);
                CHECK(r->data[i * 5 + j] < 1.0);
            }
            CHECK(std::abs(row - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("mse examples and loop oracle") {
    auto p = tensor({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(value(mse(p, p)) == 0.0);

    auto q = tensor({2, 3}, {2, 3, 4, 5, 6, 7});
    CHECK(value(mse(q, p)) == 3.0);

    Rng rng(14);
    auto a = randt(rng, {4, 3});
    auto b = randt(rng, {4, 3});
    double s = 0.0;
    for (std::size_t i = 0; i < 12; ++i) {
        const double d = a->data[i] - b->data[i];
        s += d * d;
    }
    CHECK(std::abs(value(mse(a, b)) - s / 4.0) < 1e-12);

    CHECK_THROWS_AS(mse(a, randt(rng, {3, 4})), DimensionError);
}

TEST_CASE("cross entropy examples and direct-formula oracle") {
    auto uniform = zeros({1, 4});
    CHECK(value(cross_entropy(uniform, {2})) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    auto hot = zeros({1, 4});
    hot->data[1] = 1000.0;
    CHECK(value(cross_entropy(hot, {1})) == doctest::Approx(0.0).epsilon(1e-12));

    Rng rng(15);
    auto logits = randt(rng, {3, 5});
    std::vector<std::uint32_t> ids{4, 0, 2};
    double expect = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
        double mx = logits->data[r * 5];
        for (std::size_t j = 1; j < 5; ++j) mx = std::max(mx, logits->data[r * 5 + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < 5; ++j) z += std::exp(logits->data[r * 5 + j] - mx);
        expect += mx + std::log(z) - logits->data[r * 5 + ids[r]];
    }
    expect /= 3.0;
    CHECK(std::abs(value(cross_entropy(logits, ids)) - expect) < 1e-10);

    CHECK_THROWS_AS(cross_entropy(logits, {0, 1, 7}), IndexError);
}

TEST_CASE("backward basics") {
    tape().clear();
    Rng rng(16);
    auto x = randt(rng, {2, 3}, true);
    backward(sum(x));
    CHECK(x->grad == std::vector<double>(6, 1.0));

    tape().clear();
    auto y = tensor({1}, {3.0}, true);
    backward(sum(mul(y, y)));
    CHECK(y->grad[0] == doctest::Approx(6.0).epsilon(1e-15));

    tape().clear();
    CHECK_THROWS_AS(backward(x), ContractError);
    tape().clear();
}

TEST_CASE("gradient accumulation doubles across reuse") {
    tape().clear();
    Rng rng(17);
    auto x = randt(rng, {3, 3}, true);
    auto f = [&] { return sum(mul(matmul(x, x), full({3, 3}, 0.5))); };
    backward(f());
    auto g1 = x->grad;
    x->zero_grad();
    tape().clear();
    backward(add(f(), f()));
    for (std::size_t i = 0; i < g1.size(); ++i) {
        CHECK(x->grad[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-12));
    }
    tape().clear();
}

TEST_CASE("finite-difference check across every differentiable op") {
    Rng rng(42);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = 1 + rng.below(5);
        const std::size_t k = 1 + rng.below(5);
        const std::size_t n = 1 + rng.below(5);
        const int which = static_cast<int>(rng.below(10));
        switch (which) {
            case 0: {
                auto a = randt(rng, {m, k}, true);
                auto b = randt(rng, {k, n}, true);
                auto fn = [&] { auto y = matmul(a, b); return sum(mul(y, y)); };
                worst = std::max(worst, testing::gradcheck_max_rel_error({a, b}, fn));
                break;
            }
            case 1: {
                auto a = randt(rng, {m, n}, true);
                auto b = randt(rng, {n}, true);
                auto kind = static_cast<Elementwise>(rng.below(3));
                auto fn = [&] {
                    auto y = elementwise(a, b, kind);
                    return sum(mul(y, y));
                };
                worst = std::max(worst, testing::gradcheck_max_rel_error({a, b}, fn));
                break;
            }
            case 2: {
                auto a = randt(rng, {m, n}, true);
                auto fn = [&] { auto y = softmax_last(a); return sum(mul(y, y)); };
                worst = std::max(worst, testing::gradcheck_max_rel_error({a}, fn));
                break;
            }
            case 3: {
                auto a = randt(rng, {n, n}, true);
                auto fn = [&] { auto y = causal_softmax(a); return sum(mul(y, y)); };
                worst = std::max(worst, testing::gradcheck_max_rel_error({a}, fn));
                break;
            }
            case 4: {
                auto a = randt(rng, {m, n}, true);
                auto fn = [&] { auto y = gelu(a); return sum(mul(y, y)); };
                worst = std::max(worst, testing::gradcheck_max_rel_error({a}, fn));
                break;
            }
            case 5: {
                auto a = randt(rng, {m, n}, true);
                auto fn = [&] {
                    auto y = matmul(transpose(a), a);
                    return sum(mul(y, y));
                };
                worst = std::max(worst, testing::gradcheck_max_rel_error({a}, fn));
                break;
            }
            case 6: {
                auto a = randt(rng, {m, 2 * n}, true);
                auto fn = [&] {
                    auto left = slice_cols(a, 0, n);
                    auto right = slice_cols(a, n, n);
                    auto y = concat_cols({mul(left, right), left});
                    return sum(mul(y, y));
                };
                worst = std::max(worst, testing::gradcheck_max_rel_error({a}, fn));
                break;
            }
            case 7: {
                auto table = randt(rng, {4, n}, true);
                std::vector<std::uint32_t> ids;
                for (std::size_t i = 0; i < m; ++i)
                    ids.push_back(static_cast<std::uint32_t>(rng.below(4)));
                auto fn = [&] {
                    auto y = gather_rows(table, ids);
                    return sum(mul(y, y));
                };
                worst = std::max(worst, testing::gradcheck_max_rel_error({table}, fn));
                break;
            }
            case 8: {
                auto a = randt(rng, {m, n}, true);
                auto b = randt(rng, {m, n});
                auto fn = [&] { return mse(a, b); };
                worst = std::max(worst, testing::gradcheck_max_rel_error({a}, fn));
                break;
            }
            case 9: {
                auto a = randt(rng, {m, 3}, true);
                std::vector<std::uint32_t> ids;
                for (std::size_t i = 0; i < m; ++i)
                    ids.push_back(static_cast<std::uint32_t>(rng.below(3)));
                auto fn = [&] { return cross_entropy(a, ids); };
                worst = std::max(worst, testing::gradcheck_max_rel_error({a}, fn));
                break;
            }
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("adam examples") {
    SUBCASE("fresh zero gradient leaves parameter unchanged") {
        auto p = tensor({1}, {2.5}, true);
        Adam opt({p}, 0.1);
        p->ensure_grad();
        opt.step();
        CHECK(p->data[0] == 2.5);
    }
    SUBCASE("first step moves by about lr") {
        auto p = tensor({1}, {1.0}, true);
        Adam opt({p}, 0.1);
        p->ensure_grad();
        p->grad[0] = 1.0;
        opt.step();
        CHECK(p->data[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
        CHECK(p->grad.empty());  // gradients cleared
    }
    SUBCASE("missing gradient is a contract error") {
        auto p = tensor({1}, {1.0}, true);
        Adam opt({p}, 0.1);
        CHECK_THROWS_AS(opt.step(), ContractError);
    }
    SUBCASE("hand-executed two-step recurrence") {
        auto p = tensor({1}, {0.0}, true);
        Adam opt({p}, 0.1);
        double m = 0, v = 0, x = 0;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double grads[2] = {0.7, -0.3};
        for (int t = 1; t <= 2; ++t) {
            const double g = grads[t - 1];
            m = b1 * m + (1 - b1) * g;
            v = b2 * v + (1 - b2) * g * g;
            x -= 0.1 * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
            p->ensure_grad();
            p->grad[0] = g;
            opt.step();
        }
        CHECK(p->data[0] == doctest::Approx(x).epsilon(1e-15));
    }
}

TEST_CASE("adam determinism over 100 steps") {
    auto run = [] {
        Rng rng(99);
        auto p = randn({4, 4}, rng, 1.0, true);
        Adam opt({p}, 1e-2);
        for (int step = 0; step < 100; ++step) {
            tape().clear();
            auto target = eye(4);
            backward(mse(matmul(p, p), target));
            opt.clip_grad_norm(1.0);
            opt.step();
        }
        tape().clear();
        return p->data;
    };
    CHECK(bits_equal(run(), run()));
}

TEST_CASE("clip_grad_norm bounds the global norm") {
    Rng rng(7);
    auto a = randn({3, 3}, rng, 1.0, true);
    auto b = randn({2}, rng, 1.0, true);
    Adam opt({a, b}, 1e-3);
    tape().clear();
    backward(sum(mul(matmul(a, a), matmul(a, a))));
    b->ensure_grad();
    for (auto& g : b->grad) g = 5.0;
    opt.clip_grad_norm(1.0);
    double sq = 0.0;
    for (double g : a->grad) sq += g * g;
    for (double g : b->grad) sq += g * g;
    CHECK(std::sqrt(sq) <= 1.0 + 1e-9);
    tape().clear();
}

TEST_CASE("deterministic op streams") {
    auto run = [] {
        Rng rng(123);
        auto a = randn({3, 3}, rng, 1.0, true);
        auto b = randn({3, 3}, rng, 1.0);
        tape().clear();
        auto loss = sum(mul(gelu(matmul(a, b)), softmax_last(b)));
        backward(loss);
        auto out = a->grad;
        out.insert(out.end(), loss->data.begin(), loss->data.end());
        tape().clear();
        return out;
    };
    CHECK(bits_equal(run(), run()));
}

TEST_CASE("non-finite results are rejected") {
    auto big = full({2}, 1e308);
    CHECK_THROWS_AS(add(big, big), Error);
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ldavae/autodiff.hpp"
#include "test_util.hpp"

using namespace ldavae;
using namespace ldavae::autodiff;
using testutil::check_gradients;
using testutil::random_tensor;
using testutil::weighted_sum;

TEST_CASE("forward primitives match hand values", "[autodiff]") {
    Graph g;

    SECTION("sigmoid(0) = 0.5") {
        Node* n = g.sigmoid(g.constant(Tensor::scalar(0.0)));
        REQUIRE(n->value[0] == Catch::Approx(0.5));
    }
    SECTION("matmul by identity") {
        Node* a = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
        Node* eye = g.constant(Tensor({2, 2}, {1, 0, 0, 1}));
        Node* c = g.matmul(a, eye);
        REQUIRE(c->value.data == std::vector<double>{1, 2, 3, 4});
    }
    SECTION("softmax of equal logits is uniform") {
        Node* s = g.softmax_rows(g.constant(Tensor({1, 2}, {0.0, 0.0})));
        REQUIRE(s->value[0] == Catch::Approx(0.5));
        REQUIRE(s->value[1] == Catch::Approx(0.5));
    }
    SECTION("softmax rows sum to one within 1e-12") {
        Rng rng(7);
        Node* s = g.softmax_rows(g.constant(random_tensor({5, 9}, rng, -30.0, 30.0)));
        for (std::size_t i = 0; i < 5; ++i) {
            double total = 0.0;
            for (std::size_t j = 0; j < 9; ++j) {
                const double p = s->value.at(i, j);
                REQUIRE(p > 0.0);
                REQUIRE(p < 1.0);
                total += p;
            }
            REQUIRE(std::fabs(total - 1.0) < 1e-12);
        }
    }
    SECTION("shape mismatch names the primitive") {
        Node* a = g.constant(Tensor({1, 2}));
        Node* b = g.constant(Tensor({1, 3}));
        REQUIRE_THROWS_WITH(g.add(a, b), Catch::Matchers::ContainsSubstring("add"));
        REQUIRE_THROWS_WITH(g.matmul(a, a), Catch::Matchers::ContainsSubstring("matmul"));
        REQUIRE_THROWS_WITH(g.mul(a, b),
                            Catch::Matchers::ContainsSubstring("elementwise_mul"));
    }
}

TEST_CASE("backward on simple graphs", "[autodiff]") {
    SECTION("loss = sum(x) gives all-ones gradient") {
        Variable x(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
        Graph g;
        g.backward(g.sum(g.leaf(x)));
        for (double v : x.grad.data) REQUIRE(v == Catch::Approx(1.0));
    }
    SECTION("loss = sum(x ⊙ x) at [1,2] gives [2,4]") {
        Variable x(Tensor({1, 2}, {1.0, 2.0}));
        Graph g;
        Node* xs = g.leaf(x);
        g.backward(g.sum(g.mul(xs, xs)));
        REQUIRE(x.grad[0] == Catch::Approx(2.0));
        REQUIRE(x.grad[1] == Catch::Approx(4.0));
    }
    SECTION("non-scalar loss is rejected") {
        Variable x(Tensor({1, 2}, {1.0, 2.0}));
        Graph g;
        Node* n = g.leaf(x);
        REQUIRE_THROWS_AS(g.backward(n), std::invalid_argument);
    }
    SECTION("backward twice accumulates exactly 2x") {
        Variable x(Tensor({1, 3}, {0.3, -0.2, 0.9}));
        Graph g;
        Node* loss = g.sum(g.sigmoid(g.leaf(x)));
        g.backward(loss);
        const Tensor once = x.grad;
        g.backward(loss);
        for (std::size_t i = 0; i < once.numel(); ++i)
            REQUIRE(x.grad[i] == Catch::Approx(2.0 * once[i]));
    }
}

TEST_CASE("finite differences validate every primitive", "[autodiff][gradcheck]") {
    Rng rng(20240601);
    const int reps = 5;

    auto vary = [&](std::vector<std::size_t> shape) {
        return Variable(random_tensor(std::move(shape), rng));
    };

    for (int r = 0; r < reps; ++r) {
        SECTION("rep " + std::to_string(r)) {
            Variable a = vary({3, 4});
            Variable b = vary({3, 4});
            Variable c = vary({4, 2});
            Variable pos(random_tensor({2, 5}, rng, 0.1, 2.0));

            REQUIRE(check_gradients({&a, &b}, [&](Graph& g) {
                return weighted_sum(g, g.add(g.leaf(a), g.leaf(b)), rng);
            }));
            REQUIRE(check_gradients({&a, &b}, [&](Graph& g) {
                return weighted_sum(g, g.sub(g.leaf(a), g.leaf(b)), rng);
            }));
            REQUIRE(check_gradients({&a, &b}, [&](Graph& g) {
                return weighted_sum(g, g.mul(g.leaf(a), g.leaf(b)), rng);
            }));
            REQUIRE(check_gradients({&a, &c}, [&](Graph& g) {
                return weighted_sum(g, g.matmul(g.leaf(a), g.leaf(c)), rng);
            }));
            REQUIRE(check_gradients({&a}, [&](Graph& g) {
                return weighted_sum(g, g.sigmoid(g.leaf(a)), rng);
            }));
            REQUIRE(check_gradients({&a}, [&](Graph& g) {
                return weighted_sum(g, g.tanh_(g.leaf(a)), rng);
            }));
            REQUIRE(check_gradients({&a}, [&](Graph& g) {
                return weighted_sum(g, g.exp_(g.leaf(a)), rng);
            }));
            REQUIRE(check_gradients({&pos}, [&](Graph& g) {
                return weighted_sum(g, g.log_(g.leaf(pos)), rng);
            }));
            REQUIRE(check_gradients({&a}, [&](Graph& g) {
                return weighted_sum(g, g.affine(g.leaf(a), -1.7, 0.4), rng);
            }));
            REQUIRE(check_gradients({&a}, [&](Graph& g) {
                return weighted_sum(g, g.softmax_rows(g.leaf(a)), rng);
            }));
            REQUIRE(check_gradients({&a, &b}, [&](Graph& g) {
                return weighted_sum(g, g.concat(g.leaf(a), g.leaf(b), 0), rng);
            }));
            REQUIRE(check_gradients({&a, &b}, [&](Graph& g) {
                return weighted_sum(g, g.concat(g.leaf(a), g.leaf(b), 1), rng);
            }));
            REQUIRE(check_gradients({&a}, [&](Graph& g) {
                return weighted_sum(g, g.slice(g.leaf(a), 1, 1, 2), rng);
            }));
            REQUIRE(check_gradients({&a}, [&](Graph& g) {
                return weighted_sum(g, g.slice(g.leaf(a), 0, 0, 2), rng);
            }));
            REQUIRE(check_gradients({&a}, [&](Graph& g) { return g.sum(g.leaf(a)); }));
            REQUIRE(check_gradients({&a}, [&](Graph& g) { return g.mean(g.leaf(a)); }));

            Variable rowvec = vary({1, 4});
            REQUIRE(check_gradients({&a, &rowvec}, [&](Graph& g) {
                return weighted_sum(g, g.add_rowvec(g.leaf(a), g.leaf(rowvec)), rng);
            }));
            REQUIRE(check_gradients({&rowvec}, [&](Graph& g) {
                return weighted_sum(g, g.repeat_rows(g.leaf(rowvec), 3), rng);
            }));

            // relu and clamp away from their kinks
            Variable away(random_tensor({2, 3}, rng, 0.2, 1.0));
            REQUIRE(check_gradients({&away}, [&](Graph& g) {
                return weighted_sum(g, g.relu(g.leaf(away)), rng);
            }));
            REQUIRE(check_gradients({&away}, [&](Graph& g) {
                return weighted_sum(g, g.clamp(g.leaf(away), 0.05, 0.9999), rng);
            }));

            // fused NLL over probability rows
            Variable logits = vary({4, 6});
            std::vector<long> targets{2, -1, 0, 5};
            REQUIRE(check_gradients({&logits}, [&](Graph& g) {
                return g.nll_rows(g.softmax_rows(g.leaf(logits)), targets);
            }));

            // a three-layer random composition
            Variable w1 = vary({4, 5});
            Variable w2 = vary({5, 3});
            Variable in = vary({2, 4});
            REQUIRE(check_gradients({&w1, &w2, &in}, [&](Graph& g) {
                Node* h1 = g.tanh_(g.matmul(g.leaf(in), g.leaf(w1)));
                Node* h2 = g.sigmoid(g.matmul(h1, g.leaf(w2)));
                return weighted_sum(g, h2, rng);
            }));

            // shared subexpression accumulates additively
            Variable shared = vary({2, 2});
            REQUIRE(check_gradients({&shared}, [&](Graph& g) {
                Node* s = g.tanh_(g.leaf(shared));
                return g.sum(g.add(g.mul(s, s), s));
            }));
        }
    }
}

TEST_CASE("adam_step", "[autodiff]") {
    SECTION("zero gradient from fresh state leaves params unchanged") {
        Tensor p({1, 3}, {1.0, -2.0, 3.0});
        const Tensor before = p;
        Tensor gzero({1, 3});
        Tensor m({1, 3}), v({1, 3});
        adam_step(p, gzero, m, v, 1, 0.1);
        REQUIRE(p.data == before.data);
    }
    SECTION("moments decay under zero gradient") {
        Tensor p({1, 1}, {0.0});
        Tensor gzero({1, 1});
        Tensor m({1, 1}, {1.0}), v({1, 1}, {1.0});
        adam_step(p, gzero, m, v, 5, 0.0);
        REQUIRE(m[0] == Catch::Approx(0.9));
        REQUIRE(v[0] == Catch::Approx(0.999));
    }
    SECTION("lr = 0 is the identity update") {
        Tensor p({1, 2}, {1.0, 2.0});
        const Tensor before = p;
        Tensor grad({1, 2}, {0.5, -0.25});
        Tensor m({1, 2}), v({1, 2});
        adam_step(p, grad, m, v, 1, 0.0);
        REQUIRE(p.data == before.data);
    }
    SECTION("constant gradient drives step size to lr * sign(g)") {
        Tensor p({1, 2}, {0.0, 0.0});
        Tensor grad({1, 2}, {3.7, -0.002});
        Tensor m({1, 2}), v({1, 2});
        const double lr = 0.01;
        Tensor prev = p;
        double step0 = 0.0, step1 = 0.0;
        for (long t = 1; t <= 2000; ++t) {
            prev = p;
            adam_step(p, grad, m, v, t, lr);
            step0 = p[0] - prev[0];
            step1 = p[1] - prev[1];
        }
        REQUIRE(step0 == Catch::Approx(-lr).epsilon(1e-3));
        REQUIRE(step1 == Catch::Approx(lr).epsilon(1e-3));
    }
    SECTION("shape mismatch throws") {
        Tensor p({1, 2});
        Tensor g({1, 3});
        Tensor m({1, 2}), v({1, 2});
        REQUIRE_THROWS_AS(adam_step(p, g, m, v, 1, 0.1), std::invalid_argument);
    }
}

TEST_CASE("gradient clipping caps the global norm", "[autodiff]") {
    Variable a(Tensor({1, 2}, {0.0, 0.0}));
    Variable b(Tensor({1, 1}, {0.0}));
    a.grad = Tensor({1, 2}, {3.0, 4.0});
    b.grad = Tensor({1, 1}, {12.0});
    AdamOptimizer opt({&a, &b}, 0.1);
    opt.clip_grad_norm(6.5);  // current norm: 13
    const double norm = std::sqrt(a.grad[0] * a.grad[0] + a.grad[1] * a.grad[1] +
                                  b.grad[0] * b.grad[0]);
    REQUIRE(norm == Catch::Approx(6.5));
}

#include <cmath>
#include <string_view>
#include <vector>

#include "doctest.h"
#include "samlab/errors.hpp"
#include "samlab/rng.hpp"
#include "samlab/tensor.hpp"

using namespace samlab;

TEST_CASE("matmul identity and hand cases") {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor prod = matmul(eye, eye);
    CHECK(prod.data == std::vector<double>{1, 0, 0, 1});

    Tensor ones({2, 1}, {1, 1});
    Tensor r = matmul(a, ones);
    CHECK(r.data == std::vector<double>{3, 7});

    Tensor zero({2, 2});
    CHECK(matmul(zero, a).data == std::vector<double>{0, 0, 0, 0});

    Tensor bad({3, 2});
    CHECK_THROWS_AS(matmul(a, bad), ConfigError);
}

TEST_CASE("elementwise ops") {
    Tape t;
    auto x = t.leaf(Tensor({1, 3}, {-1, 0, 2}));
    CHECK(t.value(t.relu(x)).data == std::vector<double>{0, 0, 2});

    auto zero = t.leaf(Tensor({1, 3}));
    CHECK(t.value(t.add(x, zero)).data == t.value(x).data);

    auto y = t.leaf(Tensor({1, 2}, {1, 2}));
    CHECK(t.value(t.scale(y, 3.0)).data == std::vector<double>{3, 6});

    CHECK_THROWS_AS(t.add(x, y), ConfigError);
    CHECK_THROWS_AS(t.mul(x, y), ConfigError);
}

TEST_CASE("log_softmax rows") {
    Tensor uniform({1, 3}, {0, 0, 0});
    Tensor lsm = log_softmax(uniform);
    for (double v : lsm.data) CHECK(v == doctest::Approx(-std::log(3.0)).epsilon(1e-15));

    // extreme logits must not overflow
    Tensor extreme({1, 2}, {1000, 0});
    Tensor stable = log_softmax(extreme);
    CHECK(stable.data[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(stable.data[1] == doctest::Approx(-1000.0).epsilon(1e-12));
    CHECK(stable.all_finite());

    Tensor two({1, 2}, {1, 2});
    Tensor lsm2 = log_softmax(two);
    const double denom = std::exp(1.0) + std::exp(2.0);
    CHECK(lsm2.data[0] == doctest::Approx(std::log(std::exp(1.0) / denom)).epsilon(1e-14));
    CHECK(lsm2.data[1] == doctest::Approx(std::log(std::exp(2.0) / denom)).epsilon(1e-14));

    CHECK_THROWS_AS(log_softmax(Tensor({2, 1})), ConfigError);
}

TEST_CASE("log_softmax rows exponentiate to probability vectors") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor logits({4, 5});
        for (double& v : logits.data) v = rng.uniform(-30.0, 30.0);
        Tensor lsm = log_softmax(logits);
        for (std::size_t i = 0; i < 4; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 5; ++j) {
                const double p = std::exp(lsm.at(i, j));
                CHECK(p >= 0.0);
                CHECK(p <= 1.0);
                sum += p;
            }
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("backward basics") {
    Tape t;
    auto x = t.leaf(Tensor::scalar(3.0));
    auto y = t.mul(x, x);
    t.backward(y);
    CHECK(t.grad(x).data[0] == doctest::Approx(6.0).epsilon(1e-15));

    // constant leaf untouched by the root's subgraph keeps a zero gradient
    Tape t2;
    auto c = t2.leaf(Tensor::scalar(5.0));
    auto z = t2.leaf(Tensor::scalar(2.0));
    auto root = t2.mul(z, z);
    t2.backward(root);
    CHECK(t2.grad(c).data[0] == 0.0);

    Tape t3;
    auto v = t3.leaf(Tensor({1, 2}, {1, 2}));
    CHECK_THROWS_AS(t3.backward(v), ConfigError);
}

TEST_CASE("adjoint linearity: backward of a sum equals sum of backwards") {
    const Tensor input({2, 2}, {0.3, -1.2, 0.7, 2.0});
    auto build = [&](Tape& t, Tape::NodeId x) {
        auto s1 = t.mean_all(t.mul(x, x));
        auto s2 = t.mean_all(t.relu(x));
        return std::pair{s1, s2};
    };
    Tape sum_tape;
    auto xs = sum_tape.leaf(input);
    auto [a, b] = build(sum_tape, xs);
    sum_tape.backward(sum_tape.add(a, b));

    Tape t1;
    auto x1 = t1.leaf(input);
    t1.backward(build(t1, x1).first);
    Tape t2;
    auto x2 = t2.leaf(input);
    t2.backward(build(t2, x2).second);

    for (std::size_t i = 0; i < input.size(); ++i) {
        CHECK(sum_tape.grad(xs).data[i] ==
              doctest::Approx(t1.grad(x1).data[i] + t2.grad(x2).data[i]).epsilon(1e-15));
    }
}

namespace {

// finite-difference check of one tape op, scalarized through mean_all
double op_fd_error(std::string_view op, Rng& rng) {
    const std::size_t m = 3, n = 4;
    Tensor a({m, n});
    Tensor b({m, n});
    Tensor c({n, m});
    Tensor v({n});
    for (double& x : a.data) x = rng.uniform(-2.0, 2.0);
    for (double& x : b.data) x = rng.uniform(-2.0, 2.0);
    for (double& x : c.data) x = rng.uniform(-2.0, 2.0);
    for (double& x : v.data) x = rng.uniform(-2.0, 2.0);
    if (op == "relu") {
        // keep inputs away from the kink, where central differences lie
        for (double& x : a.data) {
            if (std::abs(x) < 0.1) x += x >= 0 ? 0.2 : -0.2;
        }
    }

    auto eval = [&](std::span<const double> flat, std::vector<double>* grad_out) {
        Tensor aa = a, bb = b, cc = c, vv = v;
        auto it = flat.begin();
        std::copy_n(it, aa.size(), aa.data.begin());
        it += static_cast<std::ptrdiff_t>(aa.size());
        std::copy_n(it, bb.size(), bb.data.begin());
        it += static_cast<std::ptrdiff_t>(bb.size());
        std::copy_n(it, cc.size(), cc.data.begin());
        it += static_cast<std::ptrdiff_t>(cc.size());
        std::copy_n(it, vv.size(), vv.data.begin());

        Tape t;
        auto na = t.leaf(aa);
        auto nb = t.leaf(bb);
        auto nc = t.leaf(cc);
        auto nv = t.leaf(vv);
        Tape::NodeId out;
        if (op == "matmul") {
            out = t.matmul(na, nc);
        } else if (op == "add") {
            out = t.add(na, nb);
        } else if (op == "mul") {
            out = t.mul(na, nb);
        } else if (op == "relu") {
            out = t.relu(na);
        } else if (op == "scale") {
            out = t.scale(na, 1.7);
        } else if (op == "add_row_vector") {
            out = t.add_row_vector(na, nv);
        } else {
            out = t.log_softmax(na);
        }
        auto root = t.mean_all(out);
        if (grad_out) {
            t.backward(root);
            grad_out->clear();
            for (const Tape::NodeId id : {na, nb, nc, nv}) {
                const Tensor& g = t.grad(id);
                grad_out->insert(grad_out->end(), g.data.begin(), g.data.end());
            }
        }
        return t.value(root).data[0];
    };

    std::vector<double> flat;
    for (const Tensor* t : {&a, &b, &c, &v}) {
        flat.insert(flat.end(), t->data.begin(), t->data.end());
    }
    return grad_check([&](std::span<const double> p) { return eval(p, nullptr); },
                      [&](std::span<const double> p) {
                          std::vector<double> g;
                          eval(p, &g);
                          return g;
                      },
                      flat, 1e-6);
}

} // namespace

TEST_CASE("every registered op matches central finite differences") {
    Rng rng(92);
    for (std::string_view op : {"matmul", "add", "mul", "relu", "scale",
                                "add_row_vector", "log_softmax"}) {
        double worst = 0.0;
        for (int trial = 0; trial < 15; ++trial) {
            worst = std::max(worst, op_fd_error(op, rng));
        }
        INFO("op = " << op);
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("grad_check on closed forms") {
    // quadratic form: gradient 2x
    std::vector<double> x = {0.5, -1.5, 2.0};
    const double err = grad_check(
        [](std::span<const double> p) {
            double s = 0.0;
            for (double v : p) s += v * v;
            return s;
        },
        [](std::span<const double> p) {
            std::vector<double> g(p.size());
            for (std::size_t i = 0; i < p.size(); ++i) g[i] = 2.0 * p[i];
            return g;
        },
        x, 1e-6);
    CHECK(err < 1e-9);

    // central differences are exact on linear functions up to rounding
    const double lin_err = grad_check(
        [](std::span<const double> p) { return 3.0 * p[0] - 2.0 * p[1]; },
        [](std::span<const double>) { return std::vector<double>{3.0, -2.0, 0.0}; }, x,
        1e-6);
    CHECK(lin_err < 1e-9);

    CHECK_THROWS_AS(grad_check([](std::span<const double>) { return 1.0; },
                               [](std::span<const double>) {
                                   return std::vector<double>{0.0, 0.0, 0.0};
                               },
                               x, 0.0),
                    ConfigError);
}

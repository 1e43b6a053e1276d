#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "samlab/errors.hpp"
#include "samlab/mlp.hpp"
#include "samlab/rng.hpp"

using namespace samlab;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    return fs::temp_directory_path() / name;
}

} // namespace

TEST_CASE("spec validation") {
    CHECK_THROWS_AS((MlpSpec{{4}}.validate()), ConfigError);
    CHECK_THROWS_AS((MlpSpec{{4, 0, 2}}.validate()), ConfigError);
    CHECK_THROWS_AS((MlpSpec{{4, 1}}.validate()), ConfigError); // K must be >= 2
    MlpSpec ok{{4, 8, 3}};
    ok.validate();
    CHECK(ok.param_count() == 4 * 8 + 8 + 8 * 3 + 3);
}

TEST_CASE("init is seeded, bounded, zero-biased") {
    MlpSpec spec{{6, 10, 3}, 42};
    ModelParams a = ModelParams::init(spec);
    ModelParams b = ModelParams::init(spec);
    CHECK(std::equal(a.flat().begin(), a.flat().end(), b.flat().begin()));

    spec.seed = 43;
    ModelParams c = ModelParams::init(spec);
    CHECK(!std::equal(a.flat().begin(), a.flat().end(), c.flat().begin()));

    for (std::size_t l = 0; l < a.num_layers(); ++l) {
        const double bound = std::sqrt(6.0 / static_cast<double>(a.layer_in(l)));
        for (double w : a.weight(l)) CHECK(std::abs(w) <= bound);
        for (double bb : a.bias(l)) CHECK(bb == 0.0);
    }
}

TEST_CASE("forward of the zero network is uniform") {
    MlpSpec spec{{3, 5, 4}, 0};
    ModelParams zero(spec);
    Tensor batch({2, 3}, {1, -2, 0.5, 0, 0, 0});
    Tensor logits = forward(zero, batch);
    for (double v : logits.data) CHECK(v == 0.0);
    Tensor probs = softmax(logits);
    for (double v : probs.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("single-layer forward matches hand computation") {
    MlpSpec spec{{2, 2}, 0};
    ModelParams p(spec);
    // W = [[1, 2], [3, -1]], b = [0.5, -0.5]
    p.weight(0)[0] = 1;
    p.weight(0)[1] = 2;
    p.weight(0)[2] = 3;
    p.weight(0)[3] = -1;
    p.bias(0)[0] = 0.5;
    p.bias(0)[1] = -0.5;
    Tensor x({1, 2}, {2, 1});
    Tensor logits = forward(p, x);
    CHECK(logits.data[0] == doctest::Approx(1 * 2 + 2 * 1 + 0.5).epsilon(1e-15));
    CHECK(logits.data[1] == doctest::Approx(3 * 2 - 1 * 1 - 0.5).epsilon(1e-15));

    Tensor wrong({1, 3});
    CHECK_THROWS_AS(forward(p, wrong), ConfigError);
}

TEST_CASE("forward is batch-order equivariant") {
    MlpSpec spec{{4, 8, 3}, 5};
    ModelParams p = ModelParams::init(spec);
    Rng rng(3);
    Tensor batch({6, 4});
    for (double& v : batch.data) v = rng.normal();
    Tensor logits = forward(p, batch);

    // reversed rows produce exactly reversed logits
    Tensor reversed({6, 4});
    for (std::size_t i = 0; i < 6; ++i) {
        std::copy_n(&batch.data[(5 - i) * 4], 4, &reversed.data[i * 4]);
    }
    Tensor rlogits = forward(p, reversed);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(rlogits.at(i, j) == logits.at(5 - i, j));
        }
    }
}

TEST_CASE("taped forward agrees with the plain forward") {
    MlpSpec spec{{5, 7, 7, 3}, 21};
    ModelParams p = ModelParams::init(spec);
    Rng rng(4);
    Tensor batch({4, 5});
    for (double& v : batch.data) v = rng.normal();
    Tensor plain = forward(p, batch);
    Tape tape;
    TapedMlp taped = forward_on_tape(tape, p, batch);
    const Tensor& recorded = tape.value(taped.logits);
    REQUIRE(recorded.shape == plain.shape);
    for (std::size_t i = 0; i < plain.size(); ++i) {
        CHECK(recorded.data[i] == doctest::Approx(plain.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("checkpoint save/load round-trips bitwise") {
    MlpSpec spec{{3, 6, 2}, 77};
    ModelParams p = ModelParams::init(spec);
    const fs::path path = temp_file("samlab_ckpt_test.json");
    p.save(path);
    ModelParams q = ModelParams::load(path);
    CHECK(q.spec() == p.spec());
    REQUIRE(q.dim() == p.dim());
    for (std::size_t i = 0; i < p.dim(); ++i) CHECK(q.flat()[i] == p.flat()[i]);
    fs::remove(path);
}

TEST_CASE("checkpoint load failures") {
    const fs::path path = temp_file("samlab_ckpt_bad.json");
    {
        std::ofstream out(path);
        out << "{\"layer_sizes\": [3, 2], \"activation\": \"relu\""; // truncated
    }
    CHECK_THROWS_AS(ModelParams::load(path), ParseError);

    MlpSpec spec{{3, 6, 2}, 1};
    ModelParams p = ModelParams::init(spec);
    p.save(path);
    MlpSpec other{{4, 6, 2}, 1};
    CHECK_THROWS_AS(ModelParams::load(path, &other), ConfigError);
    CHECK_THROWS_AS(ModelParams::load(temp_file("samlab_missing.json")), ParseError);
    fs::remove(path);
}

TEST_CASE("two-layer mlp cross-entropy gradient matches finite differences") {
    Rng rng(15);
    const MlpSpec spec{{4, 10, 3}, 33};
    const ModelParams base = ModelParams::init(spec);
    Tensor batch({5, 4});
    for (double& v : batch.data) v = rng.normal();
    const std::vector<int> labels = {0, 2, 1, 1, 0};

    auto value_at = [&](std::span<const double> flat) {
        ModelParams p = base;
        std::copy(flat.begin(), flat.end(), p.flat().begin());
        Tensor lp = log_softmax(forward(p, batch));
        double sum = 0.0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            sum -= lp.at(i, static_cast<std::size_t>(labels[i]));
        }
        return sum / static_cast<double>(labels.size());
    };
    auto grad_at = [&](std::span<const double> flat) {
        ModelParams p = base;
        std::copy(flat.begin(), flat.end(), p.flat().begin());
        Tape tape;
        TapedMlp taped = forward_on_tape(tape, p, batch);
        auto lp = tape.log_softmax(taped.logits);
        // mean cross-entropy as a tape scalar: pick out true-label entries
        Tensor mask({5, 3});
        for (std::size_t i = 0; i < labels.size(); ++i) {
            mask.at(i, static_cast<std::size_t>(labels[i])) = -3.0; // 15 cells / 5 rows
        }
        auto loss = tape.mean_all(tape.mul(lp, tape.leaf(mask)));
        tape.backward(loss);
        return flat_gradient(tape, taped, p);
    };
    CHECK(grad_check(value_at, grad_at, base.flat(), 1e-6) < 1e-5);
}

TEST_CASE("flat and structured views alias the same storage") {
    MlpSpec spec{{2, 3, 2}, 9};
    ModelParams p = ModelParams::init(spec);
    std::vector<double> before(p.flat().begin(), p.flat().end());
    p.weight(1)[0] = 123.0;
    CHECK(p.flat()[2 * 3 + 3] == 123.0); // layer 0 holds 2*3 weights + 3 biases
    p.flat()[0] = -7.0;
    CHECK(p.weight(0)[0] == -7.0);
    (void)before;
}

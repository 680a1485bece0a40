#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "micap/gradcheck.hpp"
#include "micap/nn.hpp"
#include "micap/ops.hpp"

using namespace micap;

namespace {

Tensor rand_mat(Rng& rng, int r, int c, double s = 1.0) {
    return Tensor::randn(rng, {r, c}, s);
}

}  // namespace

TEST_CASE("matmul forward matches hand loop", "[tensor]") {
    Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from_data({3, 2}, {7, 8, 9, 10, 11, 12});
    Tensor c = matmul(a, b);
    // independent scalar-loop evaluation
    double expect[2][2] = {};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 3; ++k)
                expect[i][j] += a.at(i, k) * b.at(k, j);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) REQUIRE(c.at(i, j) == Catch::Approx(expect[i][j]));
    REQUIRE_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("softmax rows sum to one and handle extreme logits", "[tensor]") {
    Rng rng(7);
    Tensor a = Tensor::from_data({2, 3}, {1000.0, 1000.0, 1000.0, -900.0, 0.0, 900.0});
    Tensor s = softmax_rows(a);
    REQUIRE(s.all_finite());
    for (int i = 0; i < 2; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 3; ++j) sum += s.at(i, j);
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
    }
    REQUIRE(s.at(0, 0) == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("softmax fully masked row is an error", "[tensor]") {
    Tensor a = Tensor::from_data({2, 2}, {0.0, 1.0, 2.0, 3.0});
    Mask m = Mask::padding(2, {0, 0});
    REQUIRE_THROWS_WITH(softmax_rows(a, m), Catch::Matchers::ContainsSubstring("fully masked"));
}

TEST_CASE("layer_norm examples", "[tensor]") {
    Tensor gain = Tensor::filled({4}, 1.0);
    Tensor bias = Tensor::zeros({4});

    SECTION("constant row maps to zeros") {
        Tensor x = Tensor::from_data({1, 4}, {1, 1, 1, 1});
        Tensor y = layer_norm(x, gain, bias);
        for (int j = 0; j < 4; ++j) REQUIRE(y.at(0, j) == Catch::Approx(0.0).margin(1e-9));
    }
    SECTION("symmetric pair maps to -1, 1 up to epsilon") {
        Tensor g2 = Tensor::filled({2}, 1.0);
        Tensor b2 = Tensor::zeros({2});
        Tensor x = Tensor::from_data({1, 2}, {-3.0, 3.0});
        Tensor y = layer_norm(x, g2, b2);
        REQUIRE(y.at(0, 0) == Catch::Approx(-1.0).margin(1e-5));
        REQUIRE(y.at(0, 1) == Catch::Approx(1.0).margin(1e-5));
    }
    SECTION("row 1,2,3,4 matches direct formula evaluation") {
        Tensor x = Tensor::from_data({1, 4}, {1, 2, 3, 4});
        Tensor y = layer_norm(x, gain, bias);
        // scalar formula oracle: mu = 2.5, var = 1.25
        double mu = 2.5, var = 1.25, eps = 1e-5;
        for (int j = 0; j < 4; ++j) {
            double expect = ((j + 1) - mu) / std::sqrt(var + eps);
            REQUIRE(y.at(0, j) == Catch::Approx(expect).epsilon(1e-12));
        }
    }
    SECTION("unit gain rows have mean 0 and variance 1") {
        Rng rng(3);
        Tensor g = Tensor::filled({16}, 1.0);
        Tensor b = Tensor::zeros({16});
        Tensor x = Tensor::randn(rng, {8, 16}, 10.0);
        Tensor y = layer_norm(x, g, b);
        for (int i = 0; i < 8; ++i) {
            double mean = 0.0;
            for (int j = 0; j < 16; ++j) mean += y.at(i, j);
            mean /= 16;
            double var = 0.0;
            for (int j = 0; j < 16; ++j) var += (y.at(i, j) - mean) * (y.at(i, j) - mean);
            var /= 16;
            REQUIRE(std::abs(mean) < 1e-9);
            REQUIRE(std::abs(var - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("grad_check on primitive ops", "[tensor][grad]") {
    Rng rng(11);

    SECTION("sum of squares is quadratic-exact") {
        auto op = [](const std::vector<Tensor>& in) { return sum_all(mul(in[0], in[0])); };
        REQUIRE(grad_check(op, {rand_mat(rng, 3, 4)}) < 1e-7);
    }
    SECTION("matmul + mean") {
        auto op = [](const std::vector<Tensor>& in) { return mean_all(matmul(in[0], in[1])); };
        REQUIRE(grad_check(op, {rand_mat(rng, 3, 4), rand_mat(rng, 4, 2)}) < 1e-6);
    }
    SECTION("softmax") {
        auto op = [](const std::vector<Tensor>& in) {
            return sum_all(mul(softmax_rows(in[0]), in[1]));
        };
        REQUIRE(grad_check(op, {rand_mat(rng, 3, 5), rand_mat(rng, 3, 5)}) < 1e-6);
    }
    SECTION("layer_norm") {
        auto op = [](const std::vector<Tensor>& in) {
            return sum_all(mul(layer_norm_rows(in[0], in[1], in[2]), in[3]));
        };
        REQUIRE(grad_check(op, {rand_mat(rng, 3, 6), Tensor::randn(rng, {6}, 1.0),
                                Tensor::randn(rng, {6}, 1.0), rand_mat(rng, 3, 6)}) < 1e-6);
    }
    SECTION("gelu and tanh") {
        auto op = [](const std::vector<Tensor>& in) {
            return sum_all(mul(gelu(in[0]), tanh_op(in[1])));
        };
        REQUIRE(grad_check(op, {rand_mat(rng, 2, 5), rand_mat(rng, 2, 5)}) < 1e-6);
    }
    SECTION("l2 row normalize") {
        auto op = [](const std::vector<Tensor>& in) {
            return sum_all(mul(l2_normalize_rows(in[0]), in[1]));
        };
        REQUIRE(grad_check(op, {rand_mat(rng, 3, 4), rand_mat(rng, 3, 4)}) < 1e-6);
    }
    SECTION("gather/concat/slice/transpose/reindex composition") {
        auto op = [](const std::vector<Tensor>& in) {
            Tensor g = gather_rows(in[0], {2, 0, 1, 0});
            Tensor cat = concat_rows({g, in[1]});
            Tensor t = transpose(slice_rows(cat, 1, 4));
            std::vector<int64_t> idx;
            for (int64_t i = static_cast<int64_t>(t.size()) - 1; i >= 0; --i) idx.push_back(i);
            return mean_all(mul(reindex(t, idx, {t.cols(), t.rows()}),
                                reindex(t, idx, {t.cols(), t.rows()})));
        };
        REQUIRE(grad_check(op, {rand_mat(rng, 3, 4), rand_mat(rng, 2, 4)}) < 1e-6);
    }
    SECTION("cross entropy") {
        auto op = [](const std::vector<Tensor>& in) {
            return cross_entropy_mean(in[0], {1, 0, 2}, {1, 1, 0});
        };
        REQUIRE(grad_check(op, {rand_mat(rng, 3, 4)}) < 1e-6);
    }
    SECTION("non-scalar op is a contract error") {
        auto op = [](const std::vector<Tensor>& in) { return add(in[0], in[0]); };
        REQUIRE_THROWS_AS(grad_check(op, {rand_mat(rng, 2, 2)}), ContractError);
    }
}

TEST_CASE("forward ops keep finite values finite", "[tensor]") {
    Rng rng(5);
    Tensor a = rand_mat(rng, 4, 4, 50.0);
    Tensor g = Tensor::filled({4}, 1.0);
    Tensor b = Tensor::zeros({4});
    REQUIRE(softmax_rows(a).all_finite());
    REQUIRE(layer_norm(a, g, b).all_finite());
    REQUIRE(gelu(a).all_finite());
    REQUIRE(tanh_op(a).all_finite());
}

TEST_CASE("ops are deterministic across repeat runs", "[tensor]") {
    auto run = [] {
        Rng rng(99);
        Tensor a = rand_mat(rng, 5, 5);
        Tensor b = rand_mat(rng, 5, 5);
        return softmax_rows(matmul(gelu(a), b)).values();
    };
    REQUIRE(run() == run());
}

TEST_CASE("dropout: zero rate is identity, scaling preserves mean", "[tensor]") {
    Rng rng(1);
    Tensor a = Tensor::filled({10, 10}, 1.0);
    Rng drop_rng(2);
    REQUIRE(dropout(a, 0.0, drop_rng).values() == a.values());
    Tensor d = dropout(a, 0.5, drop_rng);
    for (double v : d.values()) REQUIRE((v == 0.0 || v == 2.0));
    REQUIRE_THROWS_AS(dropout(a, 1.0, drop_rng), ConfigError);
}

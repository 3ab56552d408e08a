#include <cmath>
#include <numeric>

#include "doctest.h"
#include "sdrl/errors.hpp"
#include "sdrl/sensor_dropout.hpp"

using namespace sdrl;
using namespace sdrl::sd;

TEST_CASE("enumeration covers all non-empty configs in binary order") {
    auto one = enumerate_configs(1);
    REQUIRE(one.size() == 1);
    CHECK(one[0].flags == std::vector<std::uint8_t>{1});
    CHECK(one[0].index == 1);

    auto two = enumerate_configs(2);
    REQUIRE(two.size() == 3);
    CHECK(two[0].flags == std::vector<std::uint8_t>{0, 1});
    CHECK(two[1].flags == std::vector<std::uint8_t>{1, 0});
    CHECK(two[2].flags == std::vector<std::uint8_t>{1, 1});

    CHECK(enumerate_configs(3).size() == 7);

    CHECK_THROWS_AS(enumerate_configs(0), ConfigError);
    CHECK_THROWS_AS(enumerate_configs(17), ConfigError);
}

TEST_CASE("rescale factor arithmetic") {
    const std::vector<int> desk = {10, 19, 256};
    auto configs = enumerate_configs(3);
    CHECK(rescale_factor(configs.back(), desk) == 1.0);

    // (1,1,0): alpha = 285/29
    const DropConfig& no_image = configs[5];
    REQUIRE(no_image.flags == std::vector<std::uint8_t>{1, 1, 0});
    CHECK(rescale_factor(no_image, desk) == doctest::Approx(285.0 / 29.0).epsilon(1e-15));

    // full-scale dims from the simulator spec sheet, image only
    const std::vector<int> full = {10, 19, 12288};
    const DropConfig& image_only = configs[0];
    REQUIRE(image_only.flags == std::vector<std::uint8_t>{0, 0, 1});
    CHECK(rescale_factor(image_only, full) == doctest::Approx(12317.0 / 12288.0).epsilon(1e-15));

    DropConfig all_off;
    all_off.flags = {0, 0, 0};
    CHECK_THROWS_AS(rescale_factor(all_off, desk), ConfigError);
}

TEST_CASE("rescale factor never increases as flags turn on") {
    const std::vector<int> dims = {4, 9, 25, 2};
    for (const auto& c : enumerate_configs(4)) {
        const double base = rescale_factor(c, dims);
        CHECK(base >= 1.0);
        for (int i = 0; i < 4; ++i) {
            if (c.flags[i]) continue;
            DropConfig more = c;
            more.flags[i] = 1;
            CHECK(rescale_factor(more, dims) <= base + 1e-15);
        }
    }
}

TEST_CASE("apply_mask block arithmetic") {
    const std::vector<int> dims = {2, 2, 2};
    auto configs = enumerate_configs(3);

    std::vector<double> input = {1, 2, 3, 4, 5, 6};
    auto all_on = apply_mask(input, configs.back(), dims);
    CHECK(all_on == input);

    // (0,1,0) keeps the middle block scaled by 3
    const DropConfig& mid = configs[1];
    REQUIRE(mid.flags == std::vector<std::uint8_t>{0, 1, 0});
    auto masked = apply_mask(input, mid, dims);
    CHECK(masked == std::vector<double>{0, 0, 9, 12, 0, 0});

    CHECK_THROWS_AS(apply_mask(std::vector<double>{1, 2, 3}, mid, dims), ConfigError);
}

TEST_CASE("uniform input sum is preserved for every config") {
    for (int m = 1; m <= 4; ++m) {
        std::vector<int> dims;
        for (int i = 0; i < m; ++i) dims.push_back(3 + 5 * i);
        const int total = std::accumulate(dims.begin(), dims.end(), 0);
        const double v = 1.75;
        std::vector<double> input(total, v);
        for (const auto& c : enumerate_configs(m)) {
            auto masked = apply_mask(input, c, dims);
            const double sum = std::accumulate(masked.begin(), masked.end(), 0.0);
            CHECK(sum == doctest::Approx(v * total).epsilon(1e-12));
        }
    }
}

TEST_CASE("apply_mask is linear in the input") {
    RandomStream rng(4);
    const std::vector<int> dims = {3, 4, 5};
    const auto configs = enumerate_configs(3);
    for (const auto& c : configs) {
        std::vector<double> x(12), y(12);
        for (auto& v : x) v = rng.uniform(-2, 2);
        for (auto& v : y) v = rng.uniform(-2, 2);
        const double a = rng.uniform(-3, 3);
        std::vector<double> combo(12);
        for (int i = 0; i < 12; ++i) combo[i] = a * x[i] + y[i];
        auto lhs = apply_mask(combo, c, dims);
        auto mx = apply_mask(x, c, dims);
        auto my = apply_mask(y, c, dims);
        for (int i = 0; i < 12; ++i)
            CHECK(lhs[i] == doctest::Approx(a * mx[i] + my[i]).epsilon(1e-12));
    }
}

TEST_CASE("mask multipliers are blockwise constant and zero off") {
    const std::vector<int> dims = {2, 3};
    auto configs = enumerate_configs(2);
    auto mask = mask_multipliers(configs[1], dims);  // (1,0)
    const double alpha = 5.0 / 2.0;
    CHECK(mask == std::vector<double>{alpha, alpha, 0, 0, 0});
}

TEST_CASE("sampling respects the distribution") {
    auto dist = DropDistribution::one_hot(3, 3);
    RandomStream rng(11);
    for (int i = 0; i < 100; ++i) CHECK(sample_config(dist, rng).index == 3);

    auto uni = DropDistribution::uniform(3);
    RandomStream rng2(12);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) ++counts[sample_config(uni, rng2).index - 1];
    const double p = 1.0 / 7.0;
    const double sigma = std::sqrt(n * p * (1 - p));
    for (int j = 0; j < 7; ++j) CHECK(std::abs(counts[j] - n * p) < 3.0 * sigma);
}

TEST_CASE("sampling never yields the all-off configuration") {
    auto dist = DropDistribution::uniform(2);
    RandomStream rng(13);
    for (int i = 0; i < 1000000; ++i) {
        const auto& c = sample_config(dist, rng);
        CHECK((c.flags[0] | c.flags[1]) == 1);
    }
}

TEST_CASE("marginal on-probabilities") {
    auto uni = DropDistribution::uniform(3);
    for (double p : marginal_on_prob(uni)) CHECK(p == doctest::Approx(4.0 / 7.0).epsilon(1e-15));

    auto all_on = DropDistribution::all_on(3);
    for (double p : marginal_on_prob(all_on)) CHECK(p == 1.0);

    auto dist = DropDistribution(2, {0.5, 0.25, 0.25});
    auto marg = marginal_on_prob(dist);
    CHECK(marg[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(marg[1] == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("uniform marginals equal 2^(M-1)/(2^M - 1)") {
    for (int m = 1; m <= 4; ++m) {
        auto dist = DropDistribution::uniform(m);
        const double expect = std::pow(2.0, m - 1) / (std::pow(2.0, m) - 1.0);
        for (double p : marginal_on_prob(dist)) CHECK(p == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("set_probabilities validates and swaps the law") {
    auto dist = DropDistribution::uniform(3);
    CHECK_THROWS_AS(dist.set_probabilities({0.5, 0.5}), ConfigError);
    CHECK_THROWS_AS(dist.set_probabilities({-0.1, 0.4, 0.2, 0.2, 0.1, 0.1, 0.1}), ConfigError);
    CHECK_THROWS_AS(dist.set_probabilities({0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3}), ConfigError);

    std::vector<double> one_hot(7, 0.0);
    one_hot[6] = 1.0;
    dist.set_probabilities(one_hot);
    RandomStream rng(9);
    const auto& c = sample_config(dist, rng);
    CHECK(c.all_on());
    // with the all-on one-hot law the layer is a no-op
    const std::vector<int> dims = {2, 2, 2};
    std::vector<double> x = {1, 2, 3, 4, 5, 6};
    CHECK(apply_mask(x, c, dims) == x);

    dist.set_probabilities(std::vector<double>(7, 1.0 / 7.0));
    CHECK(dist.probabilities()[0] == doctest::Approx(1.0 / 7.0));
}

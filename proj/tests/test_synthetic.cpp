// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "heartdarts/error.hpp"
#include "heartdarts/synthetic.hpp"
#include "support/signals.hpp"

using namespace heartdarts;
namespace oc = heartdarts::oracle;

TEST_SUITE("synthetic") {
    TEST_CASE("shape, labels and splits") {
        const auto ds = make_synthetic_dataset({3, 20, 300, 2, 0.3});
        CHECK(ds.leads == 2);
        CHECK(ds.window_len == 300);
        CHECK(ds.beats.size() == 100);
        const auto st = dataset_stats(ds);
        for (auto v : st.class_totals()) CHECK(v == 20);
        CHECK(ds.count(Split::test) == 20);
        CHECK(ds.count(Split::search_val) == 16);
        CHECK(ds.count(Split::search_train) == 64);
        for (const auto& b : ds.beats)
            for (double v : b.window) CHECK(static_cast<double>(static_cast<float>(v)) == v);
    }

    TEST_CASE("templates are distinct") {
        for (std::size_t a = 0; a < 5; ++a)
            for (std::size_t b = a + 1; b < 5; ++b) {
                const auto x = synthetic_template(static_cast<AamiClass>(a), 300, 0);
                const auto y = synthetic_template(static_cast<AamiClass>(b), 300, 0);
                CHECK(oc::rmse(x, y) > 0.05);
            }
    }

    TEST_CASE("noise-free beats are perfectly separable by nearest template") {
        for (std::size_t leads : {1, 2}) {
            const auto ds = make_synthetic_dataset({5, 50, 300, leads, 0.0});
            CHECK(oc::nearest_template_accuracy(ds) == 1.0);
        }
    }

    TEST_CASE("noise 0.3 stays learnable by nearest template") {
        const auto ds = make_synthetic_dataset({6, 400, 300, 1, 0.3});
        CHECK(oc::nearest_template_accuracy(ds) >= 0.95);
    }

    TEST_CASE("same seed gives identical bytes, other seeds differ") {
        const SyntheticConfig c{9, 30, 128, 1, 0.3};
        CHECK(encode_dataset(make_synthetic_dataset(c)) == encode_dataset(make_synthetic_dataset(c)));
        auto d = c;
        d.seed = 10;
        CHECK(encode_dataset(make_synthetic_dataset(c)) != encode_dataset(make_synthetic_dataset(d)));
    }

    TEST_CASE("invalid configurations") {
        CHECK_THROWS_AS(make_synthetic_dataset({0, 10, 63, 1, 0.3}), InputError);
        CHECK_NOTHROW(make_synthetic_dataset({0, 10, 64, 1, 0.3}));
        CHECK_THROWS_AS(make_synthetic_dataset({0, 10, 64, 0, 0.3}), InputError);
        CHECK_THROWS_AS(make_synthetic_dataset({0, 0, 64, 1, 0.3}), InputError);
    }
}

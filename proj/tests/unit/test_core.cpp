#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gdpo/core.hpp"
#include "gdpo/error.hpp"
#include "gdpo/rng.hpp"

using namespace gdpo;

namespace {

// Values from tests/oracles/divergence_oracle.py (mpmath, 50 digits).
constexpr double kKlHalfVsQuarter = 0.14384103622589046372;
constexpr double kJsUniformTable4 = 0.37667658373743119623;
constexpr double kJsMajorityTable4 = 0.51514438980827287207;
constexpr double kJsReverseTable4 = 0.64733018274251382016;

const std::vector<double> table4{0.06, 0.56, 0.24, 0.08, 0.06};

std::vector<double> random_simplex(Rng& rng, std::size_t k, bool allow_zeros) {
    std::vector<double> v(k);
    double s = 0.0;
    for (double& x : v) {
        x = rng.gamma(0.7);
        if (allow_zeros && rng.uniform() < 0.2) {
            x = 0.0;
        }
        s += x;
    }
    if (s == 0.0) {
        v[0] = s = 1.0;
    }
    for (double& x : v) {
        x /= s;
    }
    return v;
}

}  // namespace

TEST_CASE("kl_divergence fixed values") {
    CHECK(kl_divergence(std::vector{0.5, 0.5}, std::vector{0.5, 0.5}) == 0.0);
    CHECK(kl_divergence(std::vector{0.5, 0.5}, std::vector{0.25, 0.75}) ==
          doctest::Approx(kKlHalfVsQuarter).epsilon(1e-12));
    const double disjoint = kl_divergence(std::vector{1.0, 0.0}, std::vector{0.0, 1.0});
    CHECK(std::isfinite(disjoint));
    CHECK(disjoint > 20.0);
    CHECK(disjoint <= std::log(1.0 / DivergenceConfig::zero_floor) + 1e-9);
}

TEST_CASE("kl_divergence properties") {
    Rng rng(11);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 2 + rng.index(6);
        const auto p = random_simplex(rng, k, true);
        const auto q = random_simplex(rng, k, true);
        const double d = kl_divergence(p, q);
        CHECK(std::isfinite(d));
        CHECK(d >= -1e-12);
        CHECK(kl_divergence(p, p) < 1e-10);
    }
    CHECK_THROWS_AS(kl_divergence(std::vector{0.5, 0.5}, std::vector{1.0}), DataError);
    CHECK_THROWS_AS(kl_divergence(std::vector{NAN, 1.0}, std::vector{0.5, 0.5}), NumericError);
}

TEST_CASE("js_distance fixed values") {
    CHECK(js_distance(table4, table4) == 0.0);
    CHECK(js_distance(std::vector{1.0, 0.0}, std::vector{0.0, 1.0}) == doctest::Approx(1.0).epsilon(1e-15));
    const std::vector<double> u(5, 0.2);
    CHECK(std::abs(js_distance(u, table4) - kJsUniformTable4) < 1e-12);
}

TEST_CASE("js_distance properties") {
    Rng rng(12);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 2 + rng.index(6);
        const auto p = random_simplex(rng, k, true);
        const auto q = random_simplex(rng, k, true);
        const auto r = random_simplex(rng, k, true);
        const double pq = js_distance(p, q);
        CHECK(pq >= 0.0);
        CHECK(pq <= 1.0);
        CHECK(pq == doctest::Approx(js_distance(q, p)).epsilon(1e-12));
        CHECK(js_distance(p, p) < 1e-7);
        // The square root of JS divergence is a metric.
        CHECK(js_distance(p, r) <= pq + js_distance(q, r) + 1e-12);
    }
}

TEST_CASE("total_variation") {
    CHECK(total_variation(std::vector{1.0, 0.0}, std::vector{0.0, 1.0}) == 1.0);
    CHECK(total_variation(table4, table4) == 0.0);
    CHECK(total_variation(std::vector{0.5, 0.5}, std::vector{0.25, 0.75}) == doctest::Approx(0.25));
}

TEST_CASE("mle_belief_distribution") {
    const auto d = mle_belief_distribution(std::vector<std::int64_t>{7126, 2874});
    CHECK(d[0] == doctest::Approx(0.7126).epsilon(1e-15));
    CHECK(d[1] == doctest::Approx(0.2874).epsilon(1e-15));
    const auto e = mle_belief_distribution(std::vector<std::int64_t>{3, 3, 3});
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(e[i] == doctest::Approx(1.0 / 3.0));
    }
    try {
        mle_belief_distribution(std::vector<std::int64_t>{0, 0});
        FAIL("expected an error");
    } catch (const DataError& err) {
        CHECK(std::string(err.what()) == "empty evidence");
    }
    CHECK_THROWS_AS(mle_belief_distribution(std::vector<std::int64_t>{-1, 2}), DataError);
}

TEST_CASE("mle sums to one on random counts") {
    Rng rng(13);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::int64_t> counts(2 + rng.index(5));
        for (auto& c : counts) {
            c = static_cast<std::int64_t>(rng.index(1000));
        }
        counts[0] += 1;
        const auto d = mle_belief_distribution(counts);
        const double s = std::accumulate(d.probs().begin(), d.probs().end(), 0.0);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("reference baselines on the opinion example") {
    const BeliefDistribution target(table4);
    const auto b = reference_baselines(target, 0.1);
    CHECK(b.majority == BeliefDistribution::point_mass(5, 1));
    const std::vector<double> noise{0.16, 0.46, 0.24, 0.08, 0.06};
    const std::vector<double> reverse{0.56, 0.06, 0.06, 0.08, 0.24};
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(b.noise[i] == doctest::Approx(noise[i]).epsilon(1e-12));
        CHECK(b.reverse[i] == doctest::Approx(reverse[i]).epsilon(1e-12));
        CHECK(b.uniform[i] == doctest::Approx(0.2));
    }
    CHECK(std::abs(js_distance(b.majority, target) - kJsMajorityTable4) < 1e-12);
    CHECK(std::abs(js_distance(b.reverse, target) - kJsReverseTable4) < 1e-12);

    const auto u = reference_baselines(BeliefDistribution::uniform(4), 0.05);
    CHECK(u.reverse == BeliefDistribution::uniform(4));
    CHECK(u.majority == BeliefDistribution::point_mass(4, 0));
    CHECK_THROWS_AS(reference_baselines(target, 0.6), DataError);
}

TEST_CASE("reverse baseline is a permutation of the target") {
    Rng rng(14);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = random_simplex(rng, 2 + rng.index(6), false);
        const auto b = reference_baselines(BeliefDistribution(p), 0.0);
        std::vector<double> a(p), r(b.reverse.probs().begin(), b.reverse.probs().end());
        std::sort(a.begin(), a.end());
        std::sort(r.begin(), r.end());
        CHECK(a == r);
        CHECK(b.reverse[argmax_first(p)] == *std::min_element(p.begin(), p.end()));
    }
}

TEST_CASE("argmax/argmin tie-break") {
    CHECK(argmax_first(std::vector{0.3, 0.4, 0.4}) == 1);
    CHECK(argmin_first(table4) == 0);
}

TEST_CASE("belief sets and distributions validate") {
    CHECK_THROWS_AS(BeliefSet({{make_belief_class(1), {"a"}}}), DataError);
    CHECK_THROWS_AS(BeliefSet({{make_belief_class(1), {"a"}}, {make_belief_class(1), {"b"}}}), DataError);
    CHECK_THROWS_AS(BeliefSet({{make_belief_class(1), {"a"}}, {make_belief_class(2), {"a"}}}), DataError);
    CHECK_THROWS_AS(make_belief_class(6), DataError);
    CHECK_THROWS_AS(BeliefDistribution({0.5, 0.6}), DataError);
    CHECK_THROWS_AS(BeliefDistribution({1.5, -0.5}), DataError);
    CHECK(make_belief_class(3).name() == "B[3]");
}

TEST_CASE("rng determinism and ranges") {
    Rng a(5), b(5);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    Rng r(6);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(r.index(7) < 7);
    }
    CHECK(mix_seed(1, 2) != mix_seed(2, 1));
}

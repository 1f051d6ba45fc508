#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "conclab/distributions.hpp"

using namespace conclab;
using namespace conclab::distributions;

TEST_CASE("sampling respects supports") {
    RngStream rng(7, 0);
    const ProductDistribution rad(3, CoordinateLaw::rademacher());
    for (int rep = 0; rep < 200; ++rep) {
        RngStream s = rng.substream(rep);
        for (double v : rad.sample(s)) CHECK((v == 1.0 || v == -1.0));
    }
    const double delta = 0.3;
    const ProductDistribution bern(4, CoordinateLaw::centered_bernoulli(delta));
    for (int rep = 0; rep < 200; ++rep) {
        RngStream s = rng.substream(1000 + rep);
        for (double v : bern.sample(s))
            CHECK((v == Catch::Approx(-delta) || v == Catch::Approx(1.0 - delta)));
    }
}

TEST_CASE("sample means vanish within 4 standard errors") {
    const std::size_t reps = 100000;
    const CoordinateLaw laws[] = {CoordinateLaw::rademacher(), CoordinateLaw::standard_gaussian(),
                                  CoordinateLaw::centered_bernoulli(0.2),
                                  CoordinateLaw::two_point_symmetric(5.0)};
    int law_index = 0;
    for (const CoordinateLaw& law : laws) {
        RngStream rng(31, static_cast<std::uint64_t>(law_index++));
        KahanSum sum;
        for (std::size_t i = 0; i < reps; ++i) {
            RngStream s = rng.substream(i);
            sum.add(law.sample(s));
        }
        const double mean = sum.value() / static_cast<double>(reps);
        const double se = std::sqrt(law.variance() / static_cast<double>(reps));
        CAPTURE(law_index, mean, se);
        CHECK(std::abs(mean - law.mean()) <= 4.0 * se);
    }
}

TEST_CASE("enumerate_support: small exact cases") {
    const ProductDistribution rad(2, CoordinateLaw::rademacher());
    const auto atoms = rad.enumerate_support();
    REQUIRE(atoms.size() == 4);
    for (const auto& [x, p] : atoms) CHECK(p == Catch::Approx(0.25));

    const ProductDistribution degenerate(5, CoordinateLaw::finite_support({{0.0, 1.0}}));
    CHECK(degenerate.enumerate_support().size() == 1);

    // probabilities rebuild via the per-coordinate product
    const double d = 0.3;
    const ProductDistribution bern(3, CoordinateLaw::centered_bernoulli(d));
    const auto bern_atoms = bern.enumerate_support();
    REQUIRE(bern_atoms.size() == 8);
    KahanSum total;
    for (const auto& [x, p] : bern_atoms) {
        double expected = 1.0;
        for (double v : x) expected *= (v > 0.0 ? d : 1.0 - d);
        CHECK(p == Catch::Approx(expected).epsilon(1e-12));
        total.add(p);
    }
    CHECK(std::abs(total.value() - 1.0) <= 1e-10);
}

TEST_CASE("enumerate_support: capacity errors") {
    const ProductDistribution gauss(2, CoordinateLaw::standard_gaussian());
    CHECK_THROWS_AS(gauss.enumerate_support(), capacity_error);
    const ProductDistribution big(21, CoordinateLaw::rademacher());
    CHECK_THROWS_AS(big.enumerate_support(), capacity_error);
}

TEST_CASE("psi_alpha_norm: degenerate, Rademacher analytic, Gaussian closed form") {
    CHECK(psi_alpha_norm(CoordinateLaw::finite_support({{0.0, 1.0}}), 2.0) == 0.0);
    // Rademacher at alpha=2 solves e^{1/t^2} = 2, i.e. t = 1/sqrt(log 2)
    const double analytic = 1.0 / std::sqrt(std::log(2.0));
    CHECK(psi_alpha_norm(CoordinateLaw::rademacher(), 2.0) == Catch::Approx(analytic).epsilon(1e-8));
    CHECK(psi_alpha_norm(CoordinateLaw::standard_gaussian(), 2.0) ==
          Catch::Approx(std::sqrt(8.0 / 3.0)));
    CHECK_THROWS_AS(psi_alpha_norm(CoordinateLaw::rademacher(), 0.5), input_error);
    CHECK_THROWS_AS(psi_alpha_norm(CoordinateLaw::standard_gaussian(), 3.0), domain_error);
}

TEST_CASE("two-point law has psi_2 at most sqrt(2) for r >= 4") {
    for (double r : {4.0, 5.0, 8.0, 20.0}) {
        const double psi2 = psi_alpha_norm(CoordinateLaw::two_point_symmetric(r), 2.0);
        CAPTURE(r, psi2);
        CHECK(psi2 <= std::sqrt(2.0) + 1e-9);
    }
}

TEST_CASE("psi norm scales linearly and solves E exp = 2") {
    const CoordinateLaw base = CoordinateLaw::finite_support({{-1.5, 0.25}, {0.5, 0.5}, {2.0, 0.25}});
    const double t0 = psi_alpha_norm(base, 2.0);
    for (double c : {0.5, 2.0, 10.0}) {
        const double tc = psi_alpha_norm(base.scaled(c), 2.0);
        CHECK(tc == Catch::Approx(c * t0).epsilon(1e-7));
    }
    for (double alpha : {1.0, 2.0}) {
        const double t = psi_alpha_norm(base, alpha);
        KahanSum mean;
        for (const Atom& a : base.atoms())
            mean.add(a.prob * std::exp(std::pow(std::abs(a.value) / t, alpha)));
        CHECK(mean.value() == Catch::Approx(2.0).margin(1e-7));
    }
}

TEST_CASE("empirical psi bracket covers the exact value") {
    RngStream rng(17, 0);
    const CoordinateLaw law = CoordinateLaw::rademacher();
    const PsiNormBracket b = psi_alpha_norm_mc(law, 2.0, 20000, rng);
    const double exact = psi_alpha_norm(law, 2.0);
    CHECK(b.lo <= exact);
    CHECK(b.hi >= exact);
    CHECK(b.hi - b.lo <= 0.2);
}

TEST_CASE("bernoulli psi2 closed form") {
    // high-precision evaluation of (1-2d)/(4 log((1-d)/d)) at d = 1/4
    const double expected = 0.5 / (4.0 * std::log(3.0));
    CHECK(bernoulli_psi2_squared(0.25) == Catch::Approx(expected).epsilon(1e-14));
    CHECK(bernoulli_psi2_squared(0.25) == Catch::Approx(0.1137804).margin(5e-7));

    // d -> 0 limit behaves as 1/(4 |log d|)
    const double d = 1e-6;
    const double ratio = bernoulli_psi2_squared(d) * 4.0 * std::abs(std::log(d));
    CHECK(std::abs(ratio - 1.0) <= 0.02);

    // monotone along the grid: the value shrinks as delta decreases to 0
    // (equivalently, grows in delta on (0, 1/4]); grid evaluation
    double prev = bernoulli_psi2_squared(0.25);
    for (double x = 0.1; x >= 1e-6; x /= 2.5) {
        const double cur = bernoulli_psi2_squared(x);
        CHECK(cur < prev);
        prev = cur;
    }
    CHECK_THROWS_AS(bernoulli_psi2_squared(0.3), input_error);
    CHECK_THROWS_AS(bernoulli_psi2_squared(0.0), input_error);
}

TEST_CASE("closed form tracks the exact psi2 norm within a factor 4") {
    for (double d : {0.25, 0.1, 0.01}) {
        const double closed = bernoulli_psi2_squared(d);
        const double exact = psi_alpha_norm(CoordinateLaw::centered_bernoulli(d), 2.0);
        const double ratio = exact * exact / closed;
        CAPTURE(d, ratio);
        CHECK(ratio <= 4.0);
        CHECK(ratio >= 0.25);
    }
}

TEST_CASE("counterexample max moments") {
    const double r = 6.0;
    const double p = std::exp(-r);
    const MaxMoments single = counterexample_max_moments(r, 1);
    CHECK(single.l1 == Catch::Approx(r * p + (1.0 - p)).epsilon(1e-14));
    CHECK(single.l2 >= single.l1);  // Jensen

    // Monte Carlo oracle at (r, n) = (4, 10)
    const std::size_t reps = 200000;
    const std::size_t n = 10;
    const CoordinateLaw law = CoordinateLaw::two_point_symmetric(4.0);
    RngStream rng(55, 0);
    KahanSum sum, sum_sq;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        RngStream s = rng.substream(rep);
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = law.sample(s);
            m = std::max(m, v * v);
        }
        sum.add(m);
        sum_sq.add(m * m);
    }
    const double mc = sum.value() / static_cast<double>(reps);
    const double var = sum_sq.value() / static_cast<double>(reps) - mc * mc;
    const double se = std::sqrt(var / static_cast<double>(reps));
    const MaxMoments exact = counterexample_max_moments(4.0, n);
    CHECK(std::abs(exact.l1 - mc) <= 3.0 * se);

    for (double rr : {4.0, 8.0})
        for (std::size_t nn : {1u, 10u, 100u}) {
            const MaxMoments m = counterexample_max_moments(rr, nn);
            CHECK(m.l2 >= m.l1 - 1e-12);
        }
}

TEST_CASE("tail regularity violation") {
    CHECK(tail_regularity_violation(20.0, 2.0));
    // documented edge: A barely above 1 flags every law with positive tail mass
    CHECK(tail_regularity_violation(4.0, 1.0 + 1e-9));
    CHECK_THROWS_AS(tail_regularity_violation(5.0, 1.0), input_error);

    // geometric-tail finite proxy: survival halves fast enough that
    // A S(A t) <= S(t) everywhere once A is large
    std::vector<Atom> atoms;
    double mass = 0.0;
    for (int k = 0; k < 12; ++k) {
        const double p = std::pow(2.0, -(k + 1));
        atoms.push_back({0.1 * (k + 1), p});
        mass += p;
    }
    atoms.push_back({0.0, 1.0 - mass});
    CHECK_FALSE(tail_regularity_violation_for_law(CoordinateLaw::finite_support(atoms), 64.0));
}

TEST_CASE("law validation") {
    CHECK_THROWS_AS(CoordinateLaw::finite_support({{1.0, 0.5}, {2.0, 0.6}}), input_error);
    CHECK_THROWS_AS(CoordinateLaw::finite_support({{1.0, -0.1}, {2.0, 1.1}}), input_error);
    CHECK_THROWS_AS(CoordinateLaw::centered_bernoulli(1.5), input_error);
    CHECK_THROWS_AS(CoordinateLaw::two_point_symmetric(2.0), input_error);
    CHECK(CoordinateLaw::two_point_symmetric(4.0).symmetric());
    CHECK(CoordinateLaw::rademacher().symmetric());
    CHECK_FALSE(CoordinateLaw::centered_bernoulli(0.2).symmetric());
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "pwm/mcstats.hpp"
#include "pwm/numeraire.hpp"
#include "pwm/refinement.hpp"

using namespace pwm;

TEST_CASE("mean with standard error") {
    SUBCASE("constant samples have zero SE") {
        std::vector<double> s(100, 3.5);
        Estimate e = mean_with_se(s);
        CHECK(e.mean == 3.5);
        CHECK(e.se == 0.0);
    }
    SUBCASE("two samples, hand formula") {
        std::vector<double> s{0.0, 2.0};
        Estimate e = mean_with_se(s);
        CHECK(e.mean == doctest::Approx(1.0));
        CHECK(e.se == doctest::Approx(1.0));
    }
    SUBCASE("Bernoulli mean is near one half") {
        std::mt19937_64 rng(13);
        std::bernoulli_distribution bd(0.5);
        std::vector<double> s(10000);
        for (double& v : s) v = bd(rng) ? 1.0 : 0.0;
        Estimate e = mean_with_se(s);
        CHECK(std::abs(e.mean - 0.5) <= 3.0 * e.se);
        CHECK(e.se == doctest::Approx(0.005).epsilon(0.05));
    }
    SUBCASE("bad input") {
        CHECK_THROWS_AS(mean_with_se(std::vector<double>{1.0}), InputError);
        CHECK_THROWS_AS(mean_with_se(std::vector<double>{1.0, std::nan("")}), InputError);
        CHECK_THROWS_AS(
            mean_with_se(std::vector<double>{1.0, std::numeric_limits<double>::infinity()}),
            InputError);
    }
    SUBCASE("pairwise summation is order-fixed") {
        std::vector<double> s(1000);
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = 1e-8 * static_cast<double>(i) + 1.0;
        CHECK(pairwise_sum(s) == pairwise_sum(s));  // same bits on repeat
    }
}

TEST_CASE("inverse normal quantile") {
    CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963985).epsilon(1e-8));
    CHECK(inverse_normal_cdf(0.99865010196837) == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(bonferroni_z(3.0, 1) == doctest::Approx(3.0));
    CHECK(bonferroni_z(3.0, 10) > 3.0);
}

TEST_CASE("supermartingale hypothesis test") {
    SUBCASE("a constant process passes with zero margin") {
        std::vector<std::vector<double>> v(50, std::vector<double>{1.0, 1.0, 1.0});
        SupermartingaleTest t = supermartingale_test(v, {0.0, 0.5, 1.0});
        CHECK(t.pass);
        CHECK(t.worst_margin == 0.0);
    }
    SUBCASE("a deterministic upward drift fails") {
        std::vector<std::vector<double>> v(50);
        for (auto& row : v) row = {1.0, 1.5, 2.0};
        SupermartingaleTest t = supermartingale_test(v, {0.0, 0.5, 1.0});
        CHECK_FALSE(t.pass);
        CHECK(t.worst_margin > 0.0);
    }
    SUBCASE("mean-zero noise passes at 3 sigma") {
        std::mt19937_64 rng(19);
        std::normal_distribution<double> nd(0.0, 1.0);
        std::vector<std::vector<double>> v(4000, std::vector<double>(3));
        for (auto& row : v) {
            row[0] = 1.0;
            row[1] = row[0] + 0.1 * nd(rng);
            row[2] = row[1] + 0.1 * nd(rng);
        }
        SupermartingaleTest t = supermartingale_test(v, {0.0, 0.5, 1.0});
        CHECK(t.pass);
    }
}

TEST_CASE("refinement fits") {
    SUBCASE("exact first-order decay") {
        std::vector<double> dts{0.25, 0.125, 0.0625, 0.03125};
        std::vector<double> errs{0.04, 0.02, 0.01, 0.005};
        RefinementDiagnostic d = fit_refinement("linear", dts, errs);
        CHECK(d.order == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(d.pass);
    }
    SUBCASE("all-zero errors short-circuit to exact") {
        std::vector<double> dts{0.25, 0.125};
        std::vector<double> errs{0.0, 0.0};
        RefinementDiagnostic d = fit_refinement("flat", dts, errs);
        CHECK(d.exact);
        CHECK(d.pass);
    }
    SUBCASE("flat error fails the order bound") {
        std::vector<double> dts{0.25, 0.125, 0.0625};
        std::vector<double> errs{0.01, 0.011, 0.009};
        RefinementDiagnostic d = fit_refinement("stuck", dts, errs);
        CHECK_FALSE(d.pass);
    }
}

TEST_CASE("refinement study on market scenarios") {
    SUBCASE("zero-vol zero-drift is exact everywhere") {
        RefinementSpec spec;
        spec.model.initial_prices = {1.0, 1.0};
        spec.model.dynamics.drift = {0.0, 0.0};
        spec.model.dynamics.cov = Mat::Zero(2, 2);
        spec.step_counts = {8, 16, 32};
        spec.n_paths = 4;
        RefinementReport rep = refinement_study(spec);
        CHECK(rep.pass);
        for (const auto& d : rep.diagnostics) CHECK(d.exact);
    }
    SUBCASE("deterministic drift market is flagged non-viable") {
        // drift with zero covariance leaves alpha outside range(c)
        RefinementSpec spec;
        spec.model.initial_prices = {1.0, 1.0};
        spec.model.dynamics.kind = EpochDynamics::Kind::constant;
        spec.model.dynamics.drift = {0.3, -0.2};
        spec.model.dynamics.cov = Mat::Zero(2, 2);
        spec.model.scheme = Scheme::euler;
        spec.step_counts = {8, 16};
        spec.n_paths = 2;
        CHECK_THROWS_AS(refinement_study(spec), NonViableError);
    }
    SUBCASE("deterministic wealth-variant gap decays at order one, closed form") {
        const double a = 0.3;
        std::vector<double> dts, errs;
        for (std::size_t steps : {8, 16, 32, 64}) {
            const double dt = 1.0 / static_cast<double>(steps);
            const double dr = std::exp(a * dt) - 1.0;
            double mult = 1.0;
            double logw = 0.0;
            double gap = 0.0;
            for (std::size_t j = 0; j < steps; ++j) {
                mult *= 1.0 + dr;
                logw += dr - 0.5 * dr * dr;
                gap = std::max(gap, std::abs(mult - std::exp(logw)));
            }
            dts.push_back(dt);
            errs.push_back(gap);
        }
        // on a noise-free path the dt^2 terms of log(1+dr) and dr - dr^2/2
        // cancel, so the gap decays one order faster than in the
        // stochastic case
        RefinementDiagnostic d = fit_refinement("closed_form_gap", dts, errs);
        CHECK(d.order == doctest::Approx(2.0).epsilon(0.1));
        CHECK(d.pass);
    }
    SUBCASE("GBM diagnostics decay with order at least 0.8") {
        RefinementSpec spec;
        spec.model.initial_prices = {1.0, 1.0};
        spec.model.dynamics.drift = {0.08, 0.04};
        spec.model.dynamics.cov = (Mat(2, 2) << 0.04, 0.009, 0.009, 0.0225).finished();
        spec.step_counts = {16, 32, 64, 128};
        spec.n_paths = 32;
        spec.seed = 5;
        RefinementReport rep = refinement_study(spec);
        CHECK(rep.pass);
        for (const auto& d : rep.diagnostics) {
            if (!d.exact) CHECK(d.order >= 0.8);
        }
        // halving ratios for the wealth-gap diagnostic land near 1/2
        const auto& gap = rep.diagnostics.back();
        REQUIRE(gap.rows.size() == 4);
        for (std::size_t i = 1; i < gap.rows.size(); ++i) {
            const double ratio = gap.rows[i].error / gap.rows[i - 1].error;
            CHECK(ratio >= 0.3);
            CHECK(ratio <= 0.7);
        }
    }
}

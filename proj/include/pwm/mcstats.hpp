#pragma once

#include <span>
#include <string>
#include <vector>

#include "pwm/common.hpp"

namespace pwm {

struct Estimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
    double t = 0.0;
};

// Unbiased sample mean with standard error; pairwise summation keeps the
// result independent of how the samples were produced. Throws on
// NaN/inf samples or n < 2.
Estimate mean_with_se(std::span<const double> samples, double t = 0.0);

// One-sided upper-tail z for a target level with Bonferroni correction
// across n_tests comparisons.
double bonferroni_z(double base_z, std::size_t n_tests);

// Inverse standard normal CDF (Acklam's rational approximation, ~1e-9).
double inverse_normal_cdf(double p);

// Supermartingale hypothesis test on checkpoint values of an ensemble:
// paired differences E[X(t) - X(s)] <= z SE for all ordered checkpoint
// pairs, plus the same test within 4 quantile buckets of X(s).
struct SupermartingaleTest {
    struct Row {
        double s = 0.0;
        double t = 0.0;
        int bucket = -1;  // -1: unconditional
        double mean_diff = 0.0;
        double se = 0.0;
        double margin = 0.0;  // mean_diff - z_eff * se; pass iff <= 0
        bool pass = true;
    };
    std::vector<Row> rows;
    double worst_margin = 0.0;
    bool pass = true;
};
// values[p][k]: path p's statistic at checkpoint k.
SupermartingaleTest supermartingale_test(const std::vector<std::vector<double>>& values,
                                         const std::vector<double>& checkpoint_times,
                                         double level_z = 3.0);

// dt-convergence study: sup-norm error per dt and the least-squares slope
// of log2(err) against log2(dt). PASS iff order >= 0.8, or every error is
// already at roundoff level.
struct RefinementRow {
    double dt = 0.0;
    double error = 0.0;
};
struct RefinementDiagnostic {
    std::string name;
    std::vector<RefinementRow> rows;
    double order = 0.0;
    bool exact = false;
    bool pass = false;
};
RefinementDiagnostic fit_refinement(std::string name, std::span<const double> dts,
                                    std::span<const double> errors, double min_order = 0.8);

}  // namespace pwm

#include "pwm/mcstats.hpp"

#include <algorithm>
#include <cmath>

namespace pwm {

Estimate mean_with_se(std::span<const double> samples, double t) {
    if (samples.size() < 2) throw InputError("need at least two samples");
    for (double v : samples) {
        if (!std::isfinite(v)) throw InputError("non-finite sample");
    }
    const auto n = static_cast<double>(samples.size());
    const double mean = pairwise_sum(samples) / n;
    std::vector<double> sq(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double d = samples[i] - mean;
        sq[i] = d * d;
    }
    const double var = pairwise_sum(sq) / (n - 1.0);
    Estimate e;
    e.mean = mean;
    e.se = std::sqrt(var / n);
    e.n = samples.size();
    e.t = t;
    return e;
}

double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw InputError("quantile argument outside (0,1)");
    // Acklam's rational approximation with one Halley refinement.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley step against erfc for full double accuracy.
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return x;
}

double bonferroni_z(double base_z, std::size_t n_tests) {
    if (n_tests <= 1) return base_z;
    const double alpha = 0.5 * std::erfc(base_z / std::sqrt(2.0));
    return inverse_normal_cdf(1.0 - alpha / static_cast<double>(n_tests));
}

SupermartingaleTest supermartingale_test(const std::vector<std::vector<double>>& values,
                                         const std::vector<double>& checkpoint_times,
                                         double level_z) {
    const std::size_t np = values.size();
    if (np < 2) throw InputError("need at least two paths");
    const std::size_t nk = checkpoint_times.size();
    for (const auto& row : values) {
        if (row.size() != nk) throw InputError("checkpoint count mismatch");
    }
    constexpr int kBuckets = 4;
    const std::size_t n_pairs = nk * (nk - 1) / 2;
    const double z = bonferroni_z(level_z, n_pairs * (1 + kBuckets));

    SupermartingaleTest out;
    std::vector<double> diffs(np);
    std::vector<std::size_t> order(np);
    for (std::size_t s = 0; s < nk; ++s) {
        for (std::size_t t = s + 1; t < nk; ++t) {
            for (std::size_t p = 0; p < np; ++p) diffs[p] = values[p][t] - values[p][s];
            Estimate e = mean_with_se(diffs);
            SupermartingaleTest::Row row;
            row.s = checkpoint_times[s];
            row.t = checkpoint_times[t];
            row.mean_diff = e.mean;
            row.se = e.se;
            row.margin = e.mean - z * e.se;
            row.pass = row.margin <= 0.0;
            out.worst_margin = std::max(out.worst_margin, row.margin);
            out.pass = out.pass && row.pass;
            out.rows.push_back(row);

            // Conditional variant: bucket paths by the quartile of X(s).
            for (std::size_t p = 0; p < np; ++p) order[p] = p;
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return values[a][s] < values[b][s];
            });
            for (int bkt = 0; bkt < kBuckets; ++bkt) {
                const std::size_t lo = np * static_cast<std::size_t>(bkt) / kBuckets;
                const std::size_t hi = np * static_cast<std::size_t>(bkt + 1) / kBuckets;
                if (hi - lo < 2) continue;
                std::vector<double> bucket_diffs;
                bucket_diffs.reserve(hi - lo);
                for (std::size_t q = lo; q < hi; ++q) {
                    bucket_diffs.push_back(values[order[q]][t] - values[order[q]][s]);
                }
                Estimate be = mean_with_se(bucket_diffs);
                SupermartingaleTest::Row brow;
                brow.s = checkpoint_times[s];
                brow.t = checkpoint_times[t];
                brow.bucket = bkt;
                brow.mean_diff = be.mean;
                brow.se = be.se;
                brow.margin = be.mean - z * be.se;
                brow.pass = brow.margin <= 0.0;
                out.worst_margin = std::max(out.worst_margin, brow.margin);
                out.pass = out.pass && brow.pass;
                out.rows.push_back(brow);
            }
        }
    }
    return out;
}

RefinementDiagnostic fit_refinement(std::string name, std::span<const double> dts,
                                    std::span<const double> errors, double min_order) {
    if (dts.size() != errors.size() || dts.size() < 2) throw InputError("bad refinement table");
    RefinementDiagnostic out;
    out.name = std::move(name);
    bool all_tiny = true;
    for (std::size_t i = 0; i < dts.size(); ++i) {
        out.rows.push_back({dts[i], errors[i]});
        if (errors[i] > 1e-13) all_tiny = false;
    }
    if (all_tiny) {
        out.exact = true;
        out.pass = true;
        return out;
    }
    // least-squares slope of log2(err) vs log2(dt)
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const auto n = static_cast<double>(dts.size());
    for (std::size_t i = 0; i < dts.size(); ++i) {
        const double x = std::log2(dts[i]);
        const double y = std::log2(std::max(errors[i], 1e-300));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    out.order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    out.pass = out.order >= min_order;
    return out;
}

}  // namespace pwm

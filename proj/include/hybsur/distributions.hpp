#pragma once

#include <cmath>
#include <limits>

#include "hybsur/common.hpp"

namespace hybsur {

inline constexpr double kLogTwoPi = 1.8378770664093454836;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double normal_lpdf(double x, double loc, double scale) {
    const double z = (x - loc) / scale;
    return -0.5 * kLogTwoPi - std::log(scale) - 0.5 * z * z;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

/// Inverse standard normal CDF (Acklam's rational approximation plus one
/// Halley refinement step; |error| < 1e-15 over (0, 1)).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error(detail::concat("normal_quantile: p = ", p, " outside (0, 1)"));
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
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley step on Phi(x) - p = 0.
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

/// Log-normal log-density in location/scale form: y must be positive.
inline double lognormal_lpdf(double y, double mu, double sigma) {
    if (!(y > 0.0)) return kNegInf;
    const double z = (std::log(y) - mu) / sigma;
    return -0.5 * kLogTwoPi - std::log(sigma) - std::log(y) - 0.5 * z * z;
}

/// Half-normal on x >= 0 with the given scale.
inline double halfnormal_lpdf(double x, double scale) {
    if (x < 0.0) return kNegInf;
    return std::log(2.0) + normal_lpdf(x, 0.0, scale);
}

/// Normal truncated to [lo, hi]; includes the log truncation-mass normalizer.
inline double truncnormal_lpdf(double x, double loc, double scale, double lo, double hi) {
    if (x < lo || x > hi) return kNegInf;
    const double mass = normal_cdf((hi - loc) / scale) - normal_cdf((lo - loc) / scale);
    return normal_lpdf(x, loc, scale) - std::log(mass);
}

inline double truncnormal_cdf(double x, double loc, double scale, double lo, double hi) {
    if (x <= lo) return 0.0;
    if (x >= hi) return 1.0;
    const double flo = normal_cdf((lo - loc) / scale);
    const double fhi = normal_cdf((hi - loc) / scale);
    return (normal_cdf((x - loc) / scale) - flo) / (fhi - flo);
}

inline double logistic(double z) {
    if (z >= 0.0) {
        const double e = std::exp(-z);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

/// Negative binomial log-pmf, mean/precision parameterization:
/// E[n] = mu, Var[n] = mu + mu^2/phi.
inline double negbin_log_pmf(long n, double mu, double phi) {
    if (n < 0) return kNegInf;
    if (!(mu > 0.0) || !(phi > 0.0))
        throw std::domain_error("negbin_log_pmf: mu and phi must be positive");
    const double nd = static_cast<double>(n);
    return std::lgamma(nd + phi) - std::lgamma(nd + 1.0) - std::lgamma(phi) +
           nd * (std::log(mu) - std::log(mu + phi)) + phi * (std::log(phi) - std::log(mu + phi));
}

/// Numerically stable log(sum(exp(v))).
inline double log_sum_exp(const Vec& v) {
    if (v.size() == 0) return kNegInf;
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::exp(v[i] - m);
    return m + std::log(acc);
}

inline double log_mean_exp(const Vec& v) {
    return log_sum_exp(v) - std::log(static_cast<double>(v.size()));
}

} // namespace hybsur

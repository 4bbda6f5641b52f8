#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hybsur/common.hpp"

namespace hybsur {

// ---------------------------------------------------------------------------
// Univariate Legendre polynomials, unnormalized convention P_n(1) = 1.
//
// The Bonnet recurrence is numerically stable for any real argument; the
// polynomials are orthogonal only on [-1, 1], which is where scaled inputs
// live during training.  Prediction is allowed to leave that interval.
// ---------------------------------------------------------------------------

/// Fill values[0..max_degree] with P_0(x)..P_max(x).  No domain check.
inline void legendre_series(int max_degree, double x, double* values) {
    values[0] = 1.0;
    if (max_degree == 0) return;
    values[1] = x;
    for (int n = 1; n < max_degree; ++n)
        values[n + 1] = ((2 * n + 1) * x * values[n] - n * values[n - 1]) / (n + 1);
}

/// Fill derivs[0..max_degree] with P'_0(x)..P'_max(x) given the values table.
/// Uses P'_{n+1} = (2n+1) P_n + P'_{n-1}, stable at the interval endpoints.
inline void legendre_deriv_series(int max_degree, const double* values, double* derivs) {
    derivs[0] = 0.0;
    if (max_degree == 0) return;
    derivs[1] = 1.0;
    for (int n = 1; n < max_degree; ++n)
        derivs[n + 1] = (2 * n + 1) * values[n] + derivs[n - 1];
}

/// P_degree(x) with the domain check from the training path: x may stray from
/// [-1, 1] by at most 1e-9 (and is clamped back); anything further is an error.
inline double legendre_eval(int degree, double x) {
    if (degree < 0) throw std::invalid_argument("legendre_eval: negative degree");
    if (std::abs(x) > 1.0 + 1e-9)
        throw std::domain_error(detail::concat("legendre_eval: x = ", x, " outside [-1, 1]"));
    x = std::clamp(x, -1.0, 1.0);
    std::vector<double> v(static_cast<std::size_t>(degree) + 1);
    legendre_series(degree, x, v.data());
    return v[static_cast<std::size_t>(degree)];
}

// ---------------------------------------------------------------------------
// Total-degree multi-index set
// ---------------------------------------------------------------------------

/// Total-degree truncated multi-index set in graded lexicographic order
/// (ascending total degree, lexicographic within a degree).  The ordering is
/// the coefficient indexing contract: it must never change between runs.
class MultiIndexSet {
public:
    MultiIndexSet() = default;

    static MultiIndexSet total_degree(int dims, int max_degree) {
        if (dims < 1) throw std::invalid_argument("MultiIndexSet: dims must be >= 1");
        if (max_degree < 0) throw std::invalid_argument("MultiIndexSet: max_degree must be >= 0");
        MultiIndexSet set;
        set.dims_ = dims;
        set.max_degree_ = max_degree;
        for (int total = 0; total <= max_degree; ++total) {
            std::vector<int> tuple(static_cast<std::size_t>(dims), 0);
            emit_degree(set.indices_, tuple, 0, total);
        }
        return set;
    }

    int dims() const { return dims_; }
    int max_degree() const { return max_degree_; }
    std::size_t size() const { return indices_.size(); }
    const std::vector<std::vector<int>>& indices() const { return indices_; }
    const std::vector<int>& operator[](std::size_t i) const { return indices_[i]; }

private:
    static void emit_degree(std::vector<std::vector<int>>& out, std::vector<int>& tuple,
                            std::size_t pos, int remaining) {
        if (pos + 1 == tuple.size()) {
            tuple[pos] = remaining;
            out.push_back(tuple);
            return;
        }
        for (int k = 0; k <= remaining; ++k) {
            tuple[pos] = k;
            emit_degree(out, tuple, pos + 1, remaining - k);
        }
    }

    int dims_ = 0;
    int max_degree_ = 0;
    std::vector<std::vector<int>> indices_;
};

inline MultiIndexSet build_index_set(int dims, int max_degree) {
    return MultiIndexSet::total_degree(dims, max_degree);
}

// ---------------------------------------------------------------------------
// Affine input scaling onto [-1, 1]
// ---------------------------------------------------------------------------

struct Bounds {
    double lo = -1.0;
    double hi = 1.0;
};

class ScalingSpec {
public:
    ScalingSpec() = default;

    explicit ScalingSpec(std::vector<Bounds> bounds) : bounds_(std::move(bounds)) {
        for (std::size_t k = 0; k < bounds_.size(); ++k)
            if (!(bounds_[k].lo < bounds_[k].hi))
                throw std::invalid_argument(
                    detail::concat("ScalingSpec: bounds[", k, "] need lo < hi, got [",
                                   bounds_[k].lo, ", ", bounds_[k].hi, "]"));
    }

    int dims() const { return static_cast<int>(bounds_.size()); }
    const std::vector<Bounds>& bounds() const { return bounds_; }
    const Bounds& bound(int k) const { return bounds_[static_cast<std::size_t>(k)]; }

    double scale_component(int k, double x) const {
        const Bounds& b = bounds_[static_cast<std::size_t>(k)];
        if (x == b.lo) return -1.0;
        if (x == b.hi) return 1.0;
        return (2.0 * x - b.lo - b.hi) / (b.hi - b.lo);
    }

    double unscale_component(int k, double u) const {
        const Bounds& b = bounds_[static_cast<std::size_t>(k)];
        return 0.5 * (b.lo + b.hi) + 0.5 * u * (b.hi - b.lo);
    }

    /// Checked map onto [-1,1]^dims; out-of-bounds beyond the 1e-9 tolerance
    /// names the offending component.
    Vec scale(const Vec& raw) const {
        check_dims(raw);
        Vec u(raw.size());
        for (int k = 0; k < raw.size(); ++k) {
            const Bounds& b = bounds_[static_cast<std::size_t>(k)];
            const double tol = 1e-9 * std::max({1.0, std::abs(b.lo), std::abs(b.hi)});
            if (raw[k] < b.lo - tol || raw[k] > b.hi + tol)
                throw std::domain_error(detail::concat(
                    "scale_point: component ", k, " = ", raw[k], " outside bounds [", b.lo,
                    ", ", b.hi, "]"));
            u[k] = std::clamp(scale_component(k, raw[k]), -1.0, 1.0);
        }
        return u;
    }

    /// Unchecked map; used when extrapolating beyond the design bounds.
    Vec scale_unchecked(const Vec& raw) const {
        check_dims(raw);
        Vec u(raw.size());
        for (int k = 0; k < raw.size(); ++k) u[k] = scale_component(k, raw[k]);
        return u;
    }

    Vec unscale(const Vec& u) const {
        check_dims(u);
        Vec raw(u.size());
        for (int k = 0; k < u.size(); ++k) raw[k] = unscale_component(k, u[k]);
        return raw;
    }

    bool inside(const Vec& raw) const {
        check_dims(raw);
        for (int k = 0; k < raw.size(); ++k) {
            const Bounds& b = bounds_[static_cast<std::size_t>(k)];
            if (raw[k] < b.lo || raw[k] > b.hi) return false;
        }
        return true;
    }

private:
    void check_dims(const Vec& v) const {
        if (v.size() != dims())
            throw std::invalid_argument(detail::concat("ScalingSpec: expected ", dims(),
                                                       " components, got ", v.size()));
    }

    std::vector<Bounds> bounds_;
};

inline Vec scale_point(const Vec& raw, const ScalingSpec& spec) { return spec.scale(raw); }

// ---------------------------------------------------------------------------
// PCE evaluation
// ---------------------------------------------------------------------------

/// Row of basis values (psi_0(u), ..., psi_{d-1}(u)) at a scaled point.
inline Vec basis_row(const Vec& scaled_point, const MultiIndexSet& set) {
    if (scaled_point.size() != set.dims())
        throw std::invalid_argument(detail::concat("basis_row: point has ", scaled_point.size(),
                                                   " dims, index set has ", set.dims()));
    const int deg = set.max_degree();
    const int stride = deg + 1;
    std::vector<double> table(static_cast<std::size_t>(set.dims() * stride));
    for (int k = 0; k < set.dims(); ++k)
        legendre_series(deg, scaled_point[k], table.data() + k * stride);
    Vec psi(static_cast<Eigen::Index>(set.size()));
    for (std::size_t i = 0; i < set.size(); ++i) {
        double v = 1.0;
        const auto& alpha = set[i];
        for (int k = 0; k < set.dims(); ++k)
            v *= table[static_cast<std::size_t>(k * stride + alpha[static_cast<std::size_t>(k)])];
        psi[static_cast<Eigen::Index>(i)] = v;
    }
    return psi;
}

/// Basis matrix for several scaled points (rows of `pts`).
inline Mat basis_matrix(const Mat& pts, const MultiIndexSet& set) {
    Mat out(pts.rows(), static_cast<Eigen::Index>(set.size()));
    for (Eigen::Index r = 0; r < pts.rows(); ++r)
        out.row(r) = basis_row(pts.row(r).transpose(), set).transpose();
    return out;
}

/// Surrogate evaluation: sum_i c_i prod_k P_{alpha_ik}(u_k).
inline double pce_eval(const Vec& coeffs, const Vec& scaled_point, const MultiIndexSet& set) {
    if (static_cast<std::size_t>(coeffs.size()) != set.size())
        throw std::invalid_argument(detail::concat("pce_eval: ", coeffs.size(),
                                                   " coefficients for ", set.size(),
                                                   " basis terms"));
    return basis_row(scaled_point, set).dot(coeffs);
}

} // namespace hybsur

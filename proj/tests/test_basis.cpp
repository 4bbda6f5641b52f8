#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "hybsur/basis.hpp"

using namespace hybsur;

namespace {

// Independent oracle: explicit binomial-sum formula
// P_n(x) = 2^-n sum_k (-1)^k C(n,k) C(2n-2k,n) x^(n-2k).
double binom(int n, int k) {
    double v = 1.0;
    for (int i = 1; i <= k; ++i) v *= static_cast<double>(n - k + i) / i;
    return v;
}

double legendre_sum_formula(int n, double x) {
    double acc = 0.0;
    for (int k = 0; k <= n / 2; ++k)
        acc += ((k % 2) ? -1.0 : 1.0) * binom(n, k) * binom(2 * n - 2 * k, n) *
               std::pow(x, n - 2 * k);
    return std::ldexp(acc, -n);
}

// 64-node Gauss-Legendre rule via Newton iterations.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.resize(static_cast<std::size_t>(n));
    weights.resize(static_cast<std::size_t>(n));
    std::vector<double> p(static_cast<std::size_t>(n) + 1), dp(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            legendre_series(n, x, p.data());
            legendre_deriv_series(n, p.data(), dp.data());
            const double step = p[static_cast<std::size_t>(n)] / dp[static_cast<std::size_t>(n)];
            x -= step;
            if (std::abs(step) < 1e-15) break;
        }
        legendre_series(n, x, p.data());
        legendre_deriv_series(n, p.data(), dp.data());
        nodes[static_cast<std::size_t>(i)] = x;
        weights[static_cast<std::size_t>(i)] =
            2.0 / ((1.0 - x * x) * dp[static_cast<std::size_t>(n)] * dp[static_cast<std::size_t>(n)]);
    }
}

} // namespace

TEST_CASE("legendre_eval matches hand values") {
    CHECK(legendre_eval(0, 0.37) == 1.0);
    CHECK(legendre_eval(2, 0.0) == Catch::Approx(-0.5).margin(1e-15));
    CHECK(legendre_eval(3, 0.5) == Catch::Approx(-0.4375).margin(1e-15));
    CHECK(legendre_eval(1, -1.0) == -1.0);
}

TEST_CASE("legendre recurrence matches the binomial-sum formula up to degree 10") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> ux(-1.0, 1.0);
    for (int rep = 0; rep < 100; ++rep) {
        const double x = ux(rng);
        for (int n = 0; n <= 10; ++n)
            REQUIRE(legendre_eval(n, x) == Catch::Approx(legendre_sum_formula(n, x)).margin(1e-12));
    }
}

TEST_CASE("legendre_eval domain handling") {
    CHECK_NOTHROW(legendre_eval(4, 1.0 + 1e-10));
    CHECK_THROWS_AS(legendre_eval(4, 1.0 + 1e-6), std::domain_error);
    CHECK_THROWS_AS(legendre_eval(4, -1.5), std::domain_error);
    CHECK_THROWS_AS(legendre_eval(-1, 0.0), std::invalid_argument);
}

TEST_CASE("legendre orthogonality under 64-node Gauss-Legendre quadrature") {
    std::vector<double> nodes, weights;
    gauss_legendre(64, nodes, weights);
    for (int m = 0; m <= 8; ++m) {
        for (int n = 0; n <= 8; ++n) {
            double integral = 0.0;
            for (std::size_t q = 0; q < nodes.size(); ++q)
                integral += weights[q] * legendre_eval(m, nodes[q]) * legendre_eval(n, nodes[q]);
            if (m == n)
                CHECK(integral == Catch::Approx(2.0 / (2 * n + 1)).margin(1e-10));
            else
                CHECK(std::abs(integral) < 1e-10);
        }
    }
}

TEST_CASE("legendre derivative series is consistent with finite differences") {
    std::vector<double> p(11), dp(11);
    for (double x : {-0.93, -0.4, 0.0, 0.51, 0.99}) {
        legendre_series(10, x, p.data());
        legendre_deriv_series(10, p.data(), dp.data());
        const double h = 1e-7;
        for (int n = 0; n <= 10; ++n) {
            const double fd = (legendre_sum_formula(n, x + h) - legendre_sum_formula(n, x - h)) / (2 * h);
            CHECK(dp[static_cast<std::size_t>(n)] == Catch::Approx(fd).margin(1e-5));
        }
    }
}

TEST_CASE("index set cardinalities") {
    CHECK(build_index_set(2, 5).size() == 21);
    CHECK(build_index_set(3, 5).size() == 56);
    const auto constant = build_index_set(1, 0);
    REQUIRE(constant.size() == 1);
    CHECK(constant[0] == std::vector<int>{0});

    auto binomial = [](int n, int k) {
        long v = 1;
        for (int i = 1; i <= k; ++i) v = v * (n - k + i) / i;
        return static_cast<std::size_t>(v);
    };
    for (int dims = 1; dims <= 3; ++dims)
        for (int deg = 0; deg <= 6; ++deg)
            CHECK(build_index_set(dims, deg).size() == binomial(deg + dims, dims));
}

TEST_CASE("index set is graded lexicographic without duplicates") {
    const auto set = build_index_set(3, 4);
    for (std::size_t i = 0; i < set.size(); ++i) {
        int total = 0;
        for (int v : set[i]) {
            total += v;
            CHECK(v >= 0);
        }
        CHECK(total <= set.max_degree());
        if (i > 0) {
            int prev_total = 0;
            for (int v : set[i - 1]) prev_total += v;
            const bool graded_lex =
                prev_total < total || (prev_total == total && set[i - 1] < set[i]);
            CHECK(graded_lex);
        }
    }
    // fixed positions used by the coefficient indexing contract
    const auto two = build_index_set(2, 5);
    CHECK(two[0] == std::vector<int>({0, 0}));
    CHECK(two[1] == std::vector<int>({0, 1}));
    CHECK(two[2] == std::vector<int>({1, 0}));
}

TEST_CASE("scale_point maps bounds onto [-1, 1]") {
    ScalingSpec one({{1.0, 200.0}});
    CHECK(scale_point(Vec::Constant(1, 100.5), one)[0] == Catch::Approx(0.0).margin(1e-15));
    CHECK(scale_point(Vec::Constant(1, 1.0), one)[0] == -1.0);

    ScalingSpec omega({{0.6, 1.4}});
    CHECK(scale_point(Vec::Constant(1, 1.4), omega)[0] == 1.0);

    CHECK_THROWS_AS(scale_point(Vec::Constant(1, 0.9), one), std::domain_error);
    CHECK_THROWS_AS(ScalingSpec({{2.0, 1.0}}), std::invalid_argument);
}

TEST_CASE("scaling round-trip is identity to 1e-12 relative error") {
    ScalingSpec spec({{1.0, 200.0}, {0.6, 1.4}, {-3.5, 12.0}});
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
        Vec raw(3);
        for (int k = 0; k < 3; ++k) {
            const auto& b = spec.bound(k);
            raw[k] = b.lo + u(rng) * (b.hi - b.lo);
        }
        const Vec back = spec.unscale(spec.scale(raw));
        for (int k = 0; k < 3; ++k)
            CHECK(back[k] == Catch::Approx(raw[k]).epsilon(1e-12));
    }
}

TEST_CASE("pce_eval basics") {
    const auto set = build_index_set(2, 3);
    Vec coeffs = Vec::Zero(static_cast<Eigen::Index>(set.size()));
    coeffs[0] = 1.0;
    Vec pt(2);
    pt << 0.3, 0.9;
    CHECK(pce_eval(coeffs, pt, set) == 1.0);

    // unit coefficient on the (1, 0) term picks out the first input
    coeffs.setZero();
    coeffs[2] = 1.0;
    CHECK(pce_eval(coeffs, pt, set) == Catch::Approx(0.3).margin(1e-15));

    CHECK_THROWS_AS(pce_eval(Vec::Zero(3), pt, set), std::invalid_argument);
    CHECK_THROWS_AS(pce_eval(coeffs, Vec::Zero(3), set), std::invalid_argument);
}

TEST_CASE("pce_eval matches naive term-by-term summation") {
    const auto set = build_index_set(3, 3);
    std::mt19937_64 rng(99);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> ux(-1.0, 1.0);
    Vec coeffs(static_cast<Eigen::Index>(set.size()));
    for (Eigen::Index i = 0; i < coeffs.size(); ++i) coeffs[i] = gauss(rng);
    for (int rep = 0; rep < 20; ++rep) {
        Vec pt(3);
        for (int k = 0; k < 3; ++k) pt[k] = ux(rng);
        double naive = 0.0;
        for (std::size_t i = 0; i < set.size(); ++i) {
            double term = coeffs[static_cast<Eigen::Index>(i)];
            for (int k = 0; k < 3; ++k)
                term *= legendre_eval(set[i][static_cast<std::size_t>(k)], pt[k]);
            naive += term;
        }
        CHECK(pce_eval(coeffs, pt, set) == Catch::Approx(naive).margin(1e-12));
    }
}

TEST_CASE("pce_eval is linear in the coefficients") {
    const auto set = build_index_set(2, 4);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> ux(-1.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        Vec c1(static_cast<Eigen::Index>(set.size())), c2(static_cast<Eigen::Index>(set.size()));
        for (Eigen::Index i = 0; i < c1.size(); ++i) {
            c1[i] = gauss(rng);
            c2[i] = gauss(rng);
        }
        Vec pt(2);
        pt << ux(rng), ux(rng);
        const double a = gauss(rng), b = gauss(rng);
        const double lhs = pce_eval(a * c1 + b * c2, pt, set);
        const double rhs = a * pce_eval(c1, pt, set) + b * pce_eval(c2, pt, set);
        CHECK(lhs == Catch::Approx(rhs).margin(1e-12));
    }
}

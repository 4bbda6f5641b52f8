#pragma once

#include <array>
#include <fstream>
#include <random>
#include <string>

#include "hybsur/datasets.hpp"
#include "hybsur/distributions.hpp"
#include "hybsur/train.hpp"

namespace hybsur {

// ---------------------------------------------------------------------------
// Sobol' sequence (unscrambled, zero point included, dims <= 3)
// ---------------------------------------------------------------------------

/// First n points of the unscrambled Sobol' sequence, Gray-code construction
/// with the Joe-Kuo direction numbers for dimensions 2 and 3.  Point 1 is the
/// origin.
inline Mat sobol_points(int dims, int n) {
    if (dims < 1 || dims > 3)
        throw std::invalid_argument(detail::concat(
            "sobol_points: shipped direction numbers cover dims 1..3, got ", dims));
    if (n < 1) throw std::invalid_argument("sobol_points: n must be positive");
    constexpr int kBits = 32;

    // per-dimension direction integers v[k], k = 1..32, scaled by 2^32
    std::array<std::array<std::uint64_t, kBits + 1>, 3> v{};
    for (int k = 1; k <= kBits; ++k) v[0][static_cast<std::size_t>(k)] = 1ull << (32 - k);
    struct JoeKuo {
        int s;
        unsigned a;
        std::array<std::uint64_t, 2> m;
    };
    const JoeKuo params[2] = {{1, 0, {1, 0}}, {2, 1, {1, 3}}};
    for (int d = 1; d < dims; ++d) {
        const auto& jk = params[d - 1];
        std::array<std::uint64_t, kBits + 1> m{};
        for (int k = 1; k <= jk.s; ++k) m[static_cast<std::size_t>(k)] = jk.m[static_cast<std::size_t>(k - 1)];
        for (int k = jk.s + 1; k <= kBits; ++k) {
            std::uint64_t val = m[static_cast<std::size_t>(k - jk.s)] ^
                                (m[static_cast<std::size_t>(k - jk.s)] << jk.s);
            for (int i = 1; i < jk.s; ++i)
                if ((jk.a >> (jk.s - 1 - i)) & 1u) val ^= m[static_cast<std::size_t>(k - i)] << i;
            m[static_cast<std::size_t>(k)] = val;
        }
        for (int k = 1; k <= kBits; ++k)
            v[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)] =
                m[static_cast<std::size_t>(k)] << (32 - k);
    }

    Mat pts = Mat::Zero(n, dims);
    std::array<std::uint64_t, 3> state{};
    for (int i = 1; i < n; ++i) {
        unsigned c = 1;
        std::uint64_t gray = static_cast<std::uint64_t>(i - 1);
        while (gray & 1ull) {
            gray >>= 1;
            ++c;
        }
        for (int d = 0; d < dims; ++d) {
            state[static_cast<std::size_t>(d)] ^= v[static_cast<std::size_t>(d)][c];
            pts(i, d) = static_cast<double>(state[static_cast<std::size_t>(d)]) / 4294967296.0;
        }
    }
    return pts;
}

// ---------------------------------------------------------------------------
// Case study 1: log-trend simulator with a periodic misspecification
// ---------------------------------------------------------------------------

inline double cs1_simulator(double x, double omega) {
    if (!(x > 0.0))
        throw std::domain_error(detail::concat("cs1_simulator: x = ", x, " must be positive"));
    return omega * std::log(x) + 0.01 * x + 1.0;
}

/// Noise-free real-world process: the simulator at omega = 1 plus a periodic
/// term the simulator does not know about.
inline double cs1_truth(double x) { return cs1_simulator(x, 1.0) + std::sin(0.05 * x); }

/// Synthetic-truth settings for the generated case studies.
struct SyntheticTruthConfig {
    Vec omega_true;     // latent input(s) of the real-world process
    double noise = 0.2; // Normal sd (case study 1) or NegBinomial precision (2.1)
};

/// One case study bundle: training data, evaluation splits and both
/// surrogate specifications (joint and data-driven).
struct CaseData {
    std::string name;
    SimulationDataset sim;
    RealDataset real;
    std::vector<EvaluationSet> evals;
    SurrogateSpec joint_spec;
    SurrogateSpec dd_spec;

    const EvaluationSet& eval(const std::string& label, EvalKind kind) const {
        for (const auto& e : evals)
            if (e.split_label == label && e.kind == kind) return e;
        throw std::invalid_argument(detail::concat("CaseData: no split '", label, "'"));
    }
};

namespace detail {

/// Evenly spaced points strictly inside [lo, hi] (midpoint convention), kept
/// disjoint from the evenly spaced training grid.
inline Vec midspaced(int n, double lo, double hi) {
    Vec x(n);
    for (int i = 0; i < n; ++i) x[i] = lo + (hi - lo) * (i + 0.5) / n;
    return x;
}

inline Mat as_column(const Vec& v) {
    Mat m(v.size(), 1);
    m.col(0) = v;
    return m;
}

} // namespace detail

/// Case study 1 datasets.  `real_hi` selects the train/test split of the real
/// data: 100 for the base setup, 140 for the modified-split variant.
inline CaseData make_cs1_datasets(std::uint64_t seed, double real_hi = 100.0) {
    CaseData cd;
    cd.name = real_hi == 100.0 ? "cs1" : "cs1_2";
    const double x_lo = 1.0, x_hi = 200.0;
    const double w_lo = 0.6, w_hi = 1.4;

    const int n_sim = 100;
    const Mat u = sobol_points(2, n_sim);
    cd.sim.x.resize(n_sim, 1);
    cd.sim.omega.resize(n_sim, 1);
    cd.sim.y.resize(n_sim);
    for (int i = 0; i < n_sim; ++i) {
        cd.sim.x(i, 0) = x_lo + u(i, 0) * (x_hi - x_lo);
        cd.sim.omega(i, 0) = w_lo + u(i, 1) * (w_hi - w_lo);
        cd.sim.y[i] = cs1_simulator(cd.sim.x(i, 0), cd.sim.omega(i, 0));
    }

    const SyntheticTruthConfig truth{Vec::Constant(1, 1.0), 0.2};
    const int n_real = 30;
    std::mt19937_64 rng_real(derive_seed(seed, 1));
    std::normal_distribution<double> noise_real(0.0, truth.noise);
    cd.real.x.resize(n_real, 1);
    cd.real.y.resize(n_real);
    for (int i = 0; i < n_real; ++i) {
        cd.real.x(i, 0) = x_lo + (real_hi - x_lo) * i / (n_real - 1);
        cd.real.y[i] = cs1_truth(cd.real.x(i, 0)) + noise_real(rng_real);
    }

    const int n_eval = 100;
    const Vec x_oos = detail::midspaced(n_eval, x_lo, real_hi);
    const Vec x_ood = detail::midspaced(n_eval, real_hi, x_hi);
    std::mt19937_64 rng_oos(derive_seed(seed, 2));
    std::mt19937_64 rng_ood(derive_seed(seed, 3));
    std::normal_distribution<double> noise_oos(0.0, truth.noise);
    std::normal_distribution<double> noise_ood(0.0, truth.noise);
    Vec mu_oos(n_eval), y_oos(n_eval), mu_ood(n_eval), y_ood(n_eval);
    for (int i = 0; i < n_eval; ++i) {
        mu_oos[i] = cs1_truth(x_oos[i]);
        y_oos[i] = mu_oos[i] + noise_oos(rng_oos);
        mu_ood[i] = cs1_truth(x_ood[i]);
        y_ood[i] = mu_ood[i] + noise_ood(rng_ood);
    }

    auto add_split = [&cd](const Vec& x, const Vec& y, const Vec& mu, const std::string& label) {
        cd.evals.push_back({detail::as_column(x), y, EvalKind::Noisy, label});
        cd.evals.push_back({detail::as_column(x), mu, EvalKind::Truth, label});
    };
    add_split(x_oos, y_oos, mu_oos, "OOS");
    add_split(x_ood, y_ood, mu_ood, "OOD");

    // combined splits: 1:1 takes both sets; 5:1 takes every fifth OOD point
    auto concat = [](const Vec& a, const Vec& b) {
        Vec out(a.size() + b.size());
        out << a, b;
        return out;
    };
    add_split(concat(x_oos, x_ood), concat(y_oos, y_ood), concat(mu_oos, mu_ood), "OOS/OOD-1:1");
    const int n_fifth = n_eval / 5;
    Vec x5(n_fifth), y5(n_fifth), mu5(n_fifth);
    for (int i = 0; i < n_fifth; ++i) {
        x5[i] = x_ood[5 * i];
        y5[i] = y_ood[5 * i];
        mu5[i] = mu_ood[5 * i];
    }
    add_split(concat(x_oos, x5), concat(y_oos, y5), concat(mu_oos, mu5), "OOS/OOD-5:1");

    cd.joint_spec.x_names = {"x"};
    cd.joint_spec.omega_names = {"omega"};
    cd.joint_spec.max_degree = 5;
    cd.joint_spec.scaling = ScalingSpec({{x_lo, x_hi}, {w_lo, w_hi}});
    cd.joint_spec.family = {Family::Normal, 0.0};
    cd.joint_spec.prior.coeff = {0.0, 5.0};
    cd.joint_spec.prior.sigma = {0.5};
    cd.joint_spec.prior.omega = {{0.9, 0.05, w_lo, w_hi}};

    cd.dd_spec.x_names = {"x"};
    cd.dd_spec.max_degree = 5;
    cd.dd_spec.scaling = ScalingSpec({{x_lo, x_hi}});
    cd.dd_spec.family = {Family::Normal, 0.0};
    cd.dd_spec.prior.coeff = {0.0, 5.0};
    cd.dd_spec.prior.sigma = {0.5};
    return cd;
}

// ---------------------------------------------------------------------------
// SIR model
// ---------------------------------------------------------------------------

struct SirConfig {
    double xi = 1.0;      // contact rate
    double gamma = 0.5;   // recovery rate
    double population = 1000.0;
    double s0 = 990.0;
    double i0 = 10.0;
    double r0 = 0.0;
    double t0 = 0.0;
    double max_step = 0.01;
    Vec t_grid;

    void validate() const {
        if (!(population > 0.0)) throw std::invalid_argument("SirConfig: population <= 0");
        if (std::abs(s0 + i0 + r0 - population) > 1e-9 * population)
            throw std::invalid_argument("SirConfig: s0 + i0 + r0 != population");
        if (s0 < 0 || i0 < 0 || r0 < 0)
            throw std::invalid_argument("SirConfig: negative initial compartment");
        if (xi < 0.0 || gamma < 0.0) throw std::invalid_argument("SirConfig: negative rate");
        if (!(max_step > 0.0)) throw std::invalid_argument("SirConfig: max_step <= 0");
        if (t_grid.size() == 0) throw std::invalid_argument("SirConfig: empty time grid");
        for (Eigen::Index i = 0; i < t_grid.size(); ++i) {
            if (t_grid[i] < t0) throw std::invalid_argument("SirConfig: grid point before t0");
            if (i > 0 && t_grid[i] <= t_grid[i - 1])
                throw std::invalid_argument("SirConfig: time grid must be strictly increasing");
        }
    }
};

struct SirSolution {
    Vec t, s, i, r;
};

struct SirSolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Classical fixed-step RK4 with internal step min(grid spacing, max_step),
/// linearly interpolated onto the requested grid.  S + I + R is conserved to
/// rounding because the right-hand sides sum to zero.
inline SirSolution sir_solve(const SirConfig& cfg) {
    cfg.validate();
    double h = cfg.max_step;
    for (Eigen::Index i = 1; i < cfg.t_grid.size(); ++i)
        h = std::min(h, cfg.t_grid[i] - cfg.t_grid[i - 1]);

    const double inv_p = 1.0 / cfg.population;
    auto deriv = [&](const std::array<double, 3>& y) {
        const double infection = cfg.xi * y[0] * y[1] * inv_p;
        const double recovery = cfg.gamma * y[1];
        return std::array<double, 3>{-infection, infection - recovery, recovery};
    };
    auto rk4_step = [&](std::array<double, 3> y, double step) {
        const auto k1 = deriv(y);
        std::array<double, 3> y2{y[0] + 0.5 * step * k1[0], y[1] + 0.5 * step * k1[1],
                                 y[2] + 0.5 * step * k1[2]};
        const auto k2 = deriv(y2);
        std::array<double, 3> y3{y[0] + 0.5 * step * k2[0], y[1] + 0.5 * step * k2[1],
                                 y[2] + 0.5 * step * k2[2]};
        const auto k3 = deriv(y3);
        std::array<double, 3> y4{y[0] + step * k3[0], y[1] + step * k3[1], y[2] + step * k3[2]};
        const auto k4 = deriv(y4);
        for (int c = 0; c < 3; ++c)
            y[static_cast<std::size_t>(c)] +=
                step / 6.0 *
                (k1[static_cast<std::size_t>(c)] + 2 * k2[static_cast<std::size_t>(c)] +
                 2 * k3[static_cast<std::size_t>(c)] + k4[static_cast<std::size_t>(c)]);
        return y;
    };

    SirSolution sol;
    sol.t = cfg.t_grid;
    sol.s.resize(cfg.t_grid.size());
    sol.i.resize(cfg.t_grid.size());
    sol.r.resize(cfg.t_grid.size());

    std::array<double, 3> y{cfg.s0, cfg.i0, cfg.r0};
    double t = cfg.t0;
    Eigen::Index next = 0;
    auto emit_until = [&](double t_prev, const std::array<double, 3>& y_prev, double t_now,
                          const std::array<double, 3>& y_now) {
        while (next < cfg.t_grid.size() && cfg.t_grid[next] <= t_now + 1e-12) {
            const double w =
                t_now > t_prev ? (cfg.t_grid[next] - t_prev) / (t_now - t_prev) : 1.0;
            sol.s[next] = std::max(0.0, y_prev[0] + w * (y_now[0] - y_prev[0]));
            sol.i[next] = std::max(0.0, y_prev[1] + w * (y_now[1] - y_prev[1]));
            sol.r[next] = std::max(0.0, y_prev[2] + w * (y_now[2] - y_prev[2]));
            ++next;
        }
    };
    emit_until(t, y, t, y);
    const double t_end = cfg.t_grid[cfg.t_grid.size() - 1];
    while (next < cfg.t_grid.size()) {
        const double step = std::min(h, t_end - t + 1e-12);
        const auto y_next = rk4_step(y, step);
        if (!std::isfinite(y_next[0]) || !std::isfinite(y_next[1]) || !std::isfinite(y_next[2]))
            throw SirSolverError(detail::concat("sir_solve: non-finite state at t = ", t + step));
        emit_until(t, y, t + step, y_next);
        y = y_next;
        t += step;
    }
    return sol;
}

// ---------------------------------------------------------------------------
// Negative binomial sampling (gamma-Poisson mixture)
// ---------------------------------------------------------------------------

template <typename RNG>
long negbin_sample(double mu, double phi, RNG& rng) {
    if (!(mu > 0.0) || !(phi > 0.0))
        throw std::domain_error("negbin_sample: mu and phi must be positive");
    std::gamma_distribution<double> gamma(phi, mu / phi);
    const double rate = gamma(rng);
    if (rate <= 0.0) return 0;
    std::poisson_distribution<long> pois(rate);
    return pois(rng);
}

// ---------------------------------------------------------------------------
// Case study 2.1: synthetic SIR with misspecified recovery rate
// ---------------------------------------------------------------------------

inline CaseData make_cs21_datasets(std::uint64_t seed) {
    CaseData cd;
    cd.name = "cs2_1";
    const double t_lo = 1.0, t_hi = 14.0;
    const double xi_lo = 1.0, xi_hi = 3.0;
    const double gamma_sim = 0.55;
    const SyntheticTruthConfig truth{(Vec(1) << 1.6).finished(), 5.0};
    const double gamma_real = 0.7;

    auto solve_at = [&](double xi, double gamma, const Vec& grid) {
        SirConfig cfg;
        cfg.xi = xi;
        cfg.gamma = gamma;
        cfg.population = 1000.0;
        cfg.i0 = 10.0;
        cfg.r0 = 0.0;
        cfg.s0 = cfg.population - cfg.i0;
        cfg.t0 = 0.0;
        cfg.t_grid = grid;
        return sir_solve(cfg);
    };

    const int n_sim = 100;
    const Mat u = sobol_points(2, n_sim);
    cd.sim.x.resize(n_sim, 1);
    cd.sim.omega.resize(n_sim, 1);
    cd.sim.y.resize(n_sim);
    for (int i = 0; i < n_sim; ++i) {
        cd.sim.x(i, 0) = t_lo + u(i, 0) * (t_hi - t_lo);
        cd.sim.omega(i, 0) = xi_lo + u(i, 1) * (xi_hi - xi_lo);
        const auto sol = solve_at(cd.sim.omega(i, 0), gamma_sim, Vec::Constant(1, cd.sim.x(i, 0)));
        cd.sim.y[i] = sol.i[0];
    }

    const int n_real = 30;
    const double real_hi = 7.5;
    Vec t_real(n_real);
    for (int i = 0; i < n_real; ++i) t_real[i] = t_lo + (real_hi - t_lo) * i / (n_real - 1);
    const auto sol_real = solve_at(truth.omega_true[0], gamma_real, t_real);
    std::mt19937_64 rng_real(derive_seed(seed, 11));
    cd.real.x = detail::as_column(t_real);
    cd.real.y.resize(n_real);
    for (int i = 0; i < n_real; ++i)
        cd.real.y[i] =
            static_cast<double>(negbin_sample(std::max(sol_real.i[i], 1e-8), truth.noise, rng_real));

    const int n_eval = 100;
    const Vec t_oos = detail::midspaced(n_eval, t_lo, real_hi);
    const Vec t_ood = detail::midspaced(n_eval, real_hi, t_hi);
    const auto sol_oos = solve_at(truth.omega_true[0], gamma_real, t_oos);
    const auto sol_ood = solve_at(truth.omega_true[0], gamma_real, t_ood);
    std::mt19937_64 rng_oos(derive_seed(seed, 12));
    std::mt19937_64 rng_ood(derive_seed(seed, 13));
    Vec y_oos(n_eval), y_ood(n_eval);
    for (int i = 0; i < n_eval; ++i) {
        y_oos[i] = static_cast<double>(
            negbin_sample(std::max(sol_oos.i[i], 1e-8), truth.noise, rng_oos));
        y_ood[i] = static_cast<double>(
            negbin_sample(std::max(sol_ood.i[i], 1e-8), truth.noise, rng_ood));
    }
    cd.evals.push_back({detail::as_column(t_oos), y_oos, EvalKind::Noisy, "OOS"});
    cd.evals.push_back({detail::as_column(t_oos), sol_oos.i, EvalKind::Truth, "OOS"});
    cd.evals.push_back({detail::as_column(t_ood), y_ood, EvalKind::Noisy, "OOD"});
    cd.evals.push_back({detail::as_column(t_ood), sol_ood.i, EvalKind::Truth, "OOD"});

    cd.joint_spec.x_names = {"t"};
    cd.joint_spec.omega_names = {"xi"};
    cd.joint_spec.max_degree = 5;
    cd.joint_spec.scaling = ScalingSpec({{t_lo, t_hi}, {xi_lo, xi_hi}});
    cd.joint_spec.family = {Family::LogNormal, 1.0};
    cd.joint_spec.prior.coeff = {0.0, 5.0};
    cd.joint_spec.prior.sigma = {0.5};
    cd.joint_spec.prior.omega = {{2.0, 0.5, xi_lo, xi_hi}};

    cd.dd_spec.x_names = {"t"};
    cd.dd_spec.max_degree = 5;
    cd.dd_spec.scaling = ScalingSpec({{t_lo, t_hi}});
    cd.dd_spec.family = {Family::LogNormal, 1.0};
    cd.dd_spec.prior.coeff = {0.0, 5.0};
    cd.dd_spec.prior.sigma = {0.5};
    return cd;
}

// ---------------------------------------------------------------------------
// Case study 2.2: COVID-19 ingestion and datasets
// ---------------------------------------------------------------------------

struct IngestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CovidData {
    RealDataset train;        // first train_days rows
    EvaluationSet test;       // last test_days rows, Noisy
    Vec all_t;                // day index mapped onto [0.1, 1.3]
    Vec all_infected;         // cases per 1e5 inhabitants
    double first_infected = 0.0;
};

namespace detail {

inline long days_from_civil(int y, int mo, int d) {
    // Howard Hinnant's algorithm; days since 1970-01-01
    y -= mo <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = static_cast<unsigned>((153 * (mo + (mo > 2 ? -3 : 9)) + 2) / 5 + d - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

} // namespace detail

/// Read a `date,confirmed,recovered` CSV (ISO dates, one row per day) and turn
/// it into the training window plus the held-out test window.  Day k of n is
/// mapped onto t = 0.1 + (k-1) * 1.2 / (n-1).
inline CovidData covid_ingest(const std::string& csv_path, double population = 60421760.0,
                              int train_days = 60, int test_days = 14) {
    std::ifstream in(csv_path);
    if (!in) throw IngestError(detail::concat("covid_ingest: cannot open ", csv_path));
    std::string line;
    if (!std::getline(in, line)) throw IngestError("covid_ingest: empty file");
    auto strip = [](std::string s) {
        while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
        return s;
    };
    if (strip(line) != "date,confirmed,recovered")
        throw IngestError(detail::concat("covid_ingest: unexpected header '", strip(line), "'"));

    std::vector<double> infected;
    std::vector<long> day_numbers;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        line = strip(line);
        if (line.empty()) continue;
        int y, mo, d;
        long long confirmed, recovered;
        if (std::sscanf(line.c_str(), "%d-%d-%d,%lld,%lld", &y, &mo, &d, &confirmed, &recovered) !=
            5)
            throw IngestError(detail::concat("covid_ingest: malformed row ", row, ": '", line, "'"));
        if (confirmed < 0 || recovered < 0)
            throw IngestError(detail::concat("covid_ingest: negative count in row ", row));
        const double inf = static_cast<double>(confirmed - recovered);
        if (inf < 0.0)
            throw IngestError(detail::concat(
                "covid_ingest: recovered exceeds confirmed in row ", row));
        day_numbers.push_back(detail::days_from_civil(y, mo, d));
        infected.push_back(inf / population * 1e5);
    }
    const int n = static_cast<int>(infected.size());
    if (n != train_days + test_days)
        throw IngestError(detail::concat("covid_ingest: expected ", train_days + test_days,
                                         " daily rows, found ", n));
    for (int k = 1; k < n; ++k)
        if (day_numbers[static_cast<std::size_t>(k)] !=
            day_numbers[static_cast<std::size_t>(k - 1)] + 1)
            throw IngestError(detail::concat("covid_ingest: dates not contiguous at row ", k + 2));

    CovidData cv;
    cv.all_t.resize(n);
    cv.all_infected.resize(n);
    for (int k = 0; k < n; ++k) {
        cv.all_t[k] = 0.1 + 1.2 * k / (n - 1);
        cv.all_infected[k] = infected[static_cast<std::size_t>(k)];
    }
    cv.first_infected = cv.all_infected[0];
    cv.train.x = detail::as_column(cv.all_t.head(train_days));
    cv.train.y = cv.all_infected.head(train_days);
    cv.test.inputs = detail::as_column(cv.all_t.tail(test_days));
    cv.test.targets = cv.all_infected.tail(test_days);
    cv.test.kind = EvalKind::Noisy;
    cv.test.split_label = "OOD";
    return cv;
}

/// Case study 2.2: real COVID training window plus SIR simulation data on the
/// rescaled per-1e5 population.
inline CaseData make_cs22_datasets(const std::string& csv_path) {
    CaseData cd;
    cd.name = "cs2_2";
    const auto cv = covid_ingest(csv_path);
    cd.real = cv.train;
    cd.evals.push_back(cv.test);

    const double t_lo = 0.1, t_hi = 1.3;
    const double xi_lo = 1.0, xi_hi = 3.0;
    const double ga_lo = 0.1, ga_hi = 1.0;
    const int n_sim = 1000;
    const Mat u = sobol_points(3, n_sim);
    cd.sim.x.resize(n_sim, 1);
    cd.sim.omega.resize(n_sim, 2);
    cd.sim.y.resize(n_sim);
    const double pop = 1e5;
    for (int i = 0; i < n_sim; ++i) {
        cd.sim.x(i, 0) = t_lo + u(i, 0) * (t_hi - t_lo);
        cd.sim.omega(i, 0) = xi_lo + u(i, 1) * (xi_hi - xi_lo);
        cd.sim.omega(i, 1) = ga_lo + u(i, 2) * (ga_hi - ga_lo);
        SirConfig cfg;
        cfg.xi = cd.sim.omega(i, 0);
        cfg.gamma = cd.sim.omega(i, 1);
        cfg.population = pop;
        cfg.i0 = cv.first_infected;
        cfg.r0 = 0.0;
        cfg.s0 = pop - cfg.i0;
        cfg.t0 = t_lo;
        cfg.t_grid = Vec::Constant(1, cd.sim.x(i, 0));
        cd.sim.y[i] = sir_solve(cfg).i[0];
    }

    cd.joint_spec.x_names = {"t"};
    cd.joint_spec.omega_names = {"xi", "gamma"};
    cd.joint_spec.max_degree = 5;
    cd.joint_spec.scaling = ScalingSpec({{t_lo, t_hi}, {xi_lo, xi_hi}, {ga_lo, ga_hi}});
    cd.joint_spec.family = {Family::LogNormal, 1.0};
    cd.joint_spec.prior.coeff = {0.0, 5.0};
    cd.joint_spec.prior.sigma = {0.5};
    // real-world rates sit below the simulated design ranges; the surrogate is
    // evaluated beyond the [-1, 1] box there, which Legendre polynomials allow
    cd.joint_spec.prior.omega = {{0.3, 0.1, 0.1, 1.3}, {0.2, 0.1, 0.1, 1.0}};

    cd.dd_spec.x_names = {"t"};
    cd.dd_spec.max_degree = 5;
    cd.dd_spec.scaling = ScalingSpec({{t_lo, t_hi}});
    cd.dd_spec.family = {Family::LogNormal, 1.0};
    cd.dd_spec.prior.coeff = {0.0, 5.0};
    cd.dd_spec.prior.sigma = {0.5};
    return cd;
}

} // namespace hybsur

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "hybsur/datagen.hpp"

using namespace hybsur;

namespace {

double star_discrepancy_1d(Vec x) {
    std::sort(x.data(), x.data() + x.size());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        d = std::max(d, (i + 1) / n - x[i]);
        d = std::max(d, x[i] - i / n);
    }
    return d;
}

std::string write_temp_csv(const std::string& name, const std::string& content) {
    const std::string path = std::string("/tmp/hybsur_test_") + name;
    std::ofstream out(path);
    out << content;
    return path;
}

std::string synthetic_covid_csv(int n_days, long offset_delta = 0) {
    std::string s = "date,confirmed,recovered\n";
    // simple rising wave starting 2020-02-24
    int y = 2020, mo = 2, d = 24;
    auto advance = [&]() {
        static const int mdays[] = {31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
        if (++d > mdays[mo - 1]) {
            d = 1;
            ++mo;
        }
    };
    long confirmed = 229, recovered = 1;
    for (int k = 0; k < n_days; ++k) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d,%ld,%ld\n", y, mo, d,
                      confirmed + (k == 5 ? offset_delta : 0), recovered);
        s += buf;
        confirmed += 100 + 3 * k;
        recovered += 20 + k;
        advance();
    }
    return s;
}

} // namespace

TEST_CASE("sobol sequence matches the standard direction-number tables") {
    // frozen oracle values from an independent generator implementation
    const Mat p1 = sobol_points(1, 8);
    const double exp1[] = {0.0, 0.5, 0.75, 0.25, 0.375, 0.875, 0.625, 0.125};
    for (int i = 0; i < 8; ++i) CHECK(p1(i, 0) == exp1[i]);

    const Mat p2 = sobol_points(2, 8);
    const double exp2[][2] = {{0.0, 0.0},     {0.5, 0.5},     {0.75, 0.25},  {0.25, 0.75},
                              {0.375, 0.375}, {0.875, 0.875}, {0.625, 0.125}, {0.125, 0.625}};
    for (int i = 0; i < 8; ++i) {
        CHECK(p2(i, 0) == exp2[i][0]);
        CHECK(p2(i, 1) == exp2[i][1]);
    }

    const Mat p3 = sobol_points(3, 8);
    const double exp3[][3] = {{0.0, 0.0, 0.0},       {0.5, 0.5, 0.5},
                              {0.75, 0.25, 0.25},    {0.25, 0.75, 0.75},
                              {0.375, 0.375, 0.625}, {0.875, 0.875, 0.125},
                              {0.625, 0.125, 0.875}, {0.125, 0.625, 0.375}};
    for (int i = 0; i < 8; ++i)
        for (int d = 0; d < 3; ++d) CHECK(p3(i, d) == exp3[i][d]);

    CHECK_THROWS_AS(sobol_points(4, 10), std::invalid_argument);
    CHECK_THROWS_AS(sobol_points(0, 10), std::invalid_argument);
}

TEST_CASE("sobol beats iid uniforms in one-dimensional star discrepancy") {
    const int n = 256;
    for (int dim = 1; dim <= 3; ++dim) {
        const Mat pts = sobol_points(dim, n);
        for (int d = 0; d < dim; ++d) {
            const double sobol_d = star_discrepancy_1d(pts.col(d));
            std::vector<double> uniform_d;
            for (int rep = 0; rep < 20; ++rep) {
                std::mt19937_64 rng(derive_seed(500, static_cast<std::uint64_t>(20 * d + rep)));
                std::uniform_real_distribution<double> u(0.0, 1.0);
                Vec x(n);
                for (int i = 0; i < n; ++i) x[i] = u(rng);
                uniform_d.push_back(star_discrepancy_1d(x));
            }
            std::nth_element(uniform_d.begin(), uniform_d.begin() + 10, uniform_d.end());
            CHECK(sobol_d < uniform_d[10]);
        }
    }
}

TEST_CASE("case study 1 simulator and truth values") {
    CHECK(cs1_simulator(1.0, 1.0) == Catch::Approx(1.01).margin(1e-12));
    CHECK(cs1_simulator(100.0, 1.0) == Catch::Approx(6.6051701859880914).margin(1e-7));
    CHECK(cs1_simulator(100.0, 0.6) == Catch::Approx(4.7631021115928551).margin(1e-7));
    CHECK(cs1_truth(100.0) == Catch::Approx(5.6462459113249540).margin(1e-7));
    CHECK(cs1_truth(1.0) == Catch::Approx(1.0599791692706784).margin(1e-7));
    // where the periodic term vanishes the truth equals the simulator
    const double x0 = 20.0 * M_PI;
    CHECK(cs1_truth(x0) == Catch::Approx(cs1_simulator(x0, 1.0)).margin(1e-12));
    CHECK_THROWS_AS(cs1_simulator(0.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(cs1_truth(-2.0), std::domain_error);
}

TEST_CASE("case study 1 misspecification has unit amplitude") {
    double worst = 0.0;
    for (int i = 0; i <= 10000; ++i) {
        const double x = 1.0 + 199.0 * i / 10000.0;
        worst = std::max(worst, std::abs(cs1_truth(x) - cs1_simulator(x, 1.0)));
    }
    CHECK(worst == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("case study 1 dataset recipe") {
    const auto cd = make_cs1_datasets(7);
    CHECK(cd.sim.size() == 100);
    CHECK(cd.real.size() == 30);

    // simulation inputs stay inside their design bounds (closed intervals)
    for (int i = 0; i < 100; ++i) {
        CHECK((cd.sim.x(i, 0) >= 1.0 && cd.sim.x(i, 0) <= 200.0));
        CHECK((cd.sim.omega(i, 0) >= 0.6 && cd.sim.omega(i, 0) <= 1.4));
        CHECK(cd.sim.y[i] == Catch::Approx(cs1_simulator(cd.sim.x(i, 0), cd.sim.omega(i, 0))));
    }

    // noise level: sample sd of residuals within the chi-squared 99% band
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const auto c = make_cs1_datasets(seed);
        Vec resid(c.real.size());
        for (Eigen::Index i = 0; i < c.real.size(); ++i)
            resid[i] = c.real.y[i] - cs1_truth(c.real.x(i, 0));
        const double mean = resid.mean();
        const double sd =
            std::sqrt((resid.array() - mean).square().sum() / (resid.size() - 1));
        CHECK((sd >= 0.12 && sd <= 0.30));
    }

    // determinism and seed sensitivity
    const auto again = make_cs1_datasets(7);
    CHECK(again.real.y == cd.real.y);
    CHECK(again.sim.y == cd.sim.y);
    const auto other = make_cs1_datasets(8);
    CHECK(other.real.y != cd.real.y);

    // split structure
    CHECK(cd.eval("OOS", EvalKind::Noisy).size() == 100);
    CHECK(cd.eval("OOD", EvalKind::Truth).size() == 100);
    CHECK(cd.eval("OOS/OOD-1:1", EvalKind::Noisy).size() == 200);
    CHECK(cd.eval("OOS/OOD-5:1", EvalKind::Noisy).size() == 120);
    const auto& oos = cd.eval("OOS", EvalKind::Noisy);
    CHECK(oos.inputs.minCoeff() >= 1.0);
    CHECK(oos.inputs.maxCoeff() <= 100.0);
    const auto& ood = cd.eval("OOD", EvalKind::Noisy);
    CHECK(ood.inputs.minCoeff() >= 100.0);
    CHECK(ood.inputs.maxCoeff() <= 200.0);

    // modified split variant
    const auto cd2 = make_cs1_datasets(7, 140.0);
    CHECK(cd2.real.x.col(0).maxCoeff() == Catch::Approx(140.0));
    CHECK(cd2.eval("OOD", EvalKind::Noisy).inputs.minCoeff() >= 140.0);
}

TEST_CASE("sir solver matches the analytic decoupled solution at xi = 0") {
    SirConfig cfg;
    cfg.xi = 0.0;
    cfg.gamma = 0.5;
    cfg.population = 1000.0;
    cfg.i0 = 100.0;
    cfg.r0 = 0.0;
    cfg.s0 = 900.0;
    cfg.t_grid = (Vec(2) << 1.0, 2.0).finished();
    const auto sol = sir_solve(cfg);
    CHECK(sol.i[1] == Catch::Approx(100.0 * std::exp(-1.0)).margin(1e-4));
    CHECK(sol.i[0] == Catch::Approx(100.0 * std::exp(-0.5)).margin(1e-4));
}

TEST_CASE("sir solver conserves the population and is monotone where expected") {
    for (double xi : {0.5, 1.6, 3.0}) {
        for (double gamma : {0.1, 0.55, 0.9}) {
            SirConfig cfg;
            cfg.xi = xi;
            cfg.gamma = gamma;
            cfg.population = 1000.0;
            cfg.i0 = 10.0;
            cfg.r0 = 0.0;
            cfg.s0 = 990.0;
            cfg.t_grid = Vec::LinSpaced(57, 0.25, 14.0);
            const auto sol = sir_solve(cfg);
            for (Eigen::Index i = 0; i < sol.t.size(); ++i) {
                CHECK(std::abs(sol.s[i] + sol.i[i] + sol.r[i] - 1000.0) <= 1e-8 * 1000.0);
                CHECK(sol.s[i] >= 0.0);
                CHECK(sol.i[i] >= 0.0);
                if (i > 0) {
                    CHECK(sol.s[i] <= sol.s[i - 1] + 1e-10);
                    CHECK(sol.r[i] >= sol.r[i - 1] - 1e-10);
                }
            }
        }
    }
    SirConfig bad;
    bad.s0 = 1.0; // does not sum to population
    bad.t_grid = Vec::Constant(1, 1.0);
    CHECK_THROWS_AS(sir_solve(bad), std::invalid_argument);
}

TEST_CASE("sir solver shows fourth-order step convergence") {
    auto i_end = [](double h) {
        SirConfig cfg;
        cfg.xi = 1.6;
        cfg.gamma = 0.7;
        cfg.population = 1000.0;
        cfg.i0 = 10.0;
        cfg.r0 = 0.0;
        cfg.s0 = 990.0;
        cfg.max_step = h;
        cfg.t_grid = Vec::Constant(1, 14.0);
        return sir_solve(cfg).i[0];
    };
    const double d1 = std::abs(i_end(0.2) - i_end(0.1));
    const double d2 = std::abs(i_end(0.1) - i_end(0.05));
    REQUIRE(d1 > 0.0);
    CHECK(d2 < d1 / 15.0 + 1e-12);
}

TEST_CASE("negative binomial sampling moments") {
    std::mt19937_64 rng(2025);
    const int n = 100000;
    Vec draws(n);
    for (int i = 0; i < n; ++i)
        draws[i] = static_cast<double>(negbin_sample(5.0, 5.0, rng));
    const double mean = draws.mean();
    const double var = (draws.array() - mean).square().mean();
    CHECK(std::abs(mean - 5.0) < 0.05);
    CHECK(std::abs(var - 10.0) < 0.4);

    // Poisson limit as the precision grows
    Vec pois(n);
    for (int i = 0; i < n; ++i)
        pois[i] = static_cast<double>(negbin_sample(5.0, 1e6, rng));
    const double pvar = (pois.array() - pois.mean()).square().mean();
    CHECK(std::abs(pvar - 5.0) < 0.5);

    CHECK_THROWS_AS(negbin_sample(-1.0, 5.0, rng), std::domain_error);
}

TEST_CASE("case study 2.1 dataset recipe") {
    const auto cd = make_cs21_datasets(3);
    CHECK(cd.sim.size() == 100);
    CHECK(cd.real.size() == 30);
    CHECK(cd.joint_spec.family.kind == Family::LogNormal);
    CHECK(cd.joint_spec.family.offset == 1.0);

    for (Eigen::Index i = 0; i < cd.sim.size(); ++i) {
        CHECK(cd.sim.y[i] >= 0.0);
        CHECK(cd.sim.y[i] <= 1000.0);
    }
    CHECK(cd.real.x(0, 0) == Catch::Approx(1.0));
    CHECK(cd.real.x(29, 0) == Catch::Approx(7.5));
    for (Eigen::Index i = 0; i < cd.real.size(); ++i) CHECK(cd.real.y[i] >= 0.0);

    const auto again = make_cs21_datasets(3);
    CHECK(again.real.y == cd.real.y);
    CHECK(again.sim.y == cd.sim.y);

    // the misspecification between simulated and real recovery rates is 0.15:
    // recover it from the generated truth by matching SIR solutions
    const auto& truth = cd.eval("OOS", EvalKind::Truth);
    SirConfig cfg;
    cfg.xi = 1.6;
    cfg.gamma = 0.7;
    cfg.population = 1000.0;
    cfg.i0 = 10.0;
    cfg.r0 = 0.0;
    cfg.s0 = 990.0;
    cfg.t_grid = truth.inputs.col(0);
    const auto sol = sir_solve(cfg);
    CHECK((truth.targets - sol.i).cwiseAbs().maxCoeff() < 1e-9);
    SirConfig sim_cfg = cfg;
    sim_cfg.gamma = 0.55; // the simulator's fixed recovery rate
    CHECK(std::abs(cfg.gamma - sim_cfg.gamma) == Catch::Approx(0.15));
}

TEST_CASE("covid ingestion parses, validates and rescales") {
    const auto path = write_temp_csv("covid_ok.csv", synthetic_covid_csv(74));
    const auto cv = covid_ingest(path, 60421760.0, 60, 14);
    CHECK(cv.train.size() == 60);
    CHECK(cv.test.size() == 14);
    CHECK(cv.test.kind == EvalKind::Noisy);
    CHECK(cv.all_t[0] == Catch::Approx(0.1).margin(1e-15));
    CHECK(cv.all_t[73] == Catch::Approx(1.3).margin(1e-12));
    CHECK(cv.all_t[1] - cv.all_t[0] == Catch::Approx(1.2 / 73.0).margin(1e-15));
    CHECK(cv.first_infected == Catch::Approx(228.0 / 60421760.0 * 1e5).margin(1e-12));

    // definition of the rescaling: an exact ten-thousandth of the population
    const std::string exact = "date,confirmed,recovered\n2020-02-24,6042176,0\n" +
                              synthetic_covid_csv(74).substr(std::string("date,confirmed,recovered\n2020-02-24,229,1\n").size());
    const auto path2 = write_temp_csv("covid_exact.csv", exact);
    const auto cv2 = covid_ingest(path2, 60421760.0, 60, 14);
    CHECK(cv2.all_infected[0] == 10000.0);
}

TEST_CASE("covid ingestion error paths") {
    // wrong row count
    const auto short_path = write_temp_csv("covid_short.csv", synthetic_covid_csv(50));
    CHECK_THROWS_AS(covid_ingest(short_path), IngestError);

    // missing day
    std::string gap = synthetic_covid_csv(74);
    const auto row_start = gap.find("2020-03-01");
    gap.erase(row_start, gap.find('\n', row_start) - row_start + 1);
    gap += "2020-05-08,216000,97000\n";
    const auto gap_path = write_temp_csv("covid_gap.csv", gap);
    CHECK_THROWS_WITH(covid_ingest(gap_path), Catch::Matchers::ContainsSubstring("contiguous"));

    // recovered exceeding confirmed
    std::string neg = synthetic_covid_csv(74);
    const auto p = neg.find("2020-02-24,229,1");
    neg.replace(p, std::string("2020-02-24,229,1").size(), "2020-02-24,229,9999");
    const auto neg_path = write_temp_csv("covid_neg.csv", neg);
    CHECK_THROWS_WITH(covid_ingest(neg_path), Catch::Matchers::ContainsSubstring("row 2"));

    // malformed row
    std::string bad = synthetic_covid_csv(74);
    const auto q = bad.find("2020-03-01");
    bad.replace(q, 10, "not-a-date");
    const auto bad_path = write_temp_csv("covid_bad.csv", bad);
    CHECK_THROWS_WITH(covid_ingest(bad_path), Catch::Matchers::ContainsSubstring("malformed"));

    // wrong header
    const auto hdr_path = write_temp_csv("covid_hdr.csv", "day,cases,cured\n");
    CHECK_THROWS_AS(covid_ingest(hdr_path), IngestError);
}

TEST_CASE("the shipped covid file loads and case study 2.2 assembles") {
    const auto cd = make_cs22_datasets("data/covid_italy.csv");
    CHECK(cd.sim.size() == 1000);
    CHECK(cd.real.size() == 60);
    CHECK(cd.evals.size() == 1);
    CHECK(cd.evals[0].size() == 14);
    CHECK(cd.joint_spec.omega_names.size() == 2);
    CHECK(static_cast<std::size_t>(cd.joint_spec.index_set().size()) == 56);
    for (Eigen::Index i = 0; i < cd.real.size(); ++i) CHECK(cd.real.y[i] > 0.0);
    for (Eigen::Index i = 0; i < cd.sim.size(); ++i) CHECK(cd.sim.y[i] >= 0.0);

    const auto again = make_cs22_datasets("data/covid_italy.csv");
    CHECK(again.sim.y == cd.sim.y);
}

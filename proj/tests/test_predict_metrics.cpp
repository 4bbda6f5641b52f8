#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "hybsur/metrics.hpp"
#include "hybsur/predict.hpp"

using namespace hybsur;

namespace {

Mat grid_inputs(int n, double lo, double hi) {
    Mat x(n, 1);
    for (int i = 0; i < n; ++i) x(i, 0) = lo + (hi - lo) * i / std::max(1, n - 1);
    return x;
}

PredictiveDraws constant_pred(const Mat& inputs, double loc, double sigma, int n_draws,
                              LikelihoodFamily fam, std::uint64_t seed) {
    return make_predictive_draws(inputs, Mat::Constant(n_draws, inputs.rows(), loc),
                                 Vec::Constant(n_draws, sigma), fam, SourceTag::DataDriven, seed);
}

} // namespace

TEST_CASE("degenerate noise collapses predictive draws onto the mean") {
    const Mat x = grid_inputs(5, 0.0, 1.0);
    const auto p = constant_pred(x, 1.7, 1e-12, 200, {Family::Normal, 0.0}, 4);
    CHECK((p.y_draws - p.mu_draws).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("lognormal predictive mean uses exp(mu + sigma^2/2)") {
    const Mat x = grid_inputs(3, 0.0, 1.0);
    const auto p = constant_pred(x, 0.0, 1.0, 10, {Family::LogNormal, 0.0}, 9);
    CHECK(p.mu_draws(0, 0) == Catch::Approx(std::exp(0.5)).margin(1e-12));

    // the +1 training offset is subtracted so predictions live on the
    // original count scale
    const auto q = constant_pred(x, 0.0, 1.0, 10, {Family::LogNormal, 1.0}, 9);
    CHECK(q.mu_draws(0, 0) == Catch::Approx(std::exp(0.5) - 1.0).margin(1e-12));
}

TEST_CASE("sampled observation noise has the configured scale") {
    const Mat x = grid_inputs(1, 0.0, 0.0);
    const auto p = constant_pred(x, 0.4, 0.2, 10000, {Family::Normal, 0.0}, 123);
    const double mean = p.y_draws.col(0).mean();
    const double sd = std::sqrt((p.y_draws.col(0).array() - mean).square().mean());
    CHECK(sd == Catch::Approx(0.2).epsilon(0.03));
}

TEST_CASE("predictive mean consistency between y and mu draws") {
    const Mat x = grid_inputs(4, 0.0, 1.0);
    for (auto fam : {LikelihoodFamily{Family::Normal, 0.0}, LikelihoodFamily{Family::LogNormal, 1.0}}) {
        const int s = 20000;
        const auto p = constant_pred(x, 0.3, 0.4, s, fam, 77);
        for (int j = 0; j < 4; ++j) {
            const double ybar = p.y_draws.col(j).mean();
            const double mubar = p.mu_draws.col(j).mean();
            const double ysd = std::sqrt((p.y_draws.col(j).array() - ybar).square().mean());
            CHECK(std::abs(ybar - mubar) < 4.0 * ysd / std::sqrt(static_cast<double>(s)));
        }
    }
}

TEST_CASE("mixture endpoints reproduce their components exactly") {
    const Mat x = grid_inputs(6, 0.0, 2.0);
    const auto sim = constant_pred(x, 1.0, 0.5, 40, {Family::Normal, 0.0}, 1);
    const auto dd = constant_pred(x, -1.0, 0.3, 60, {Family::Normal, 0.0}, 2);
    Vec y = Vec::Constant(6, 0.2);

    const auto mix1 = mixture_predictive(sim, dd, 1.0, 50, 3);
    CHECK((log_predictive_density(mix1, y) - log_predictive_density(sim, y)).cwiseAbs().maxCoeff() ==
          0.0);
    for (int lbl : mix1.subsample.component_labels) CHECK(lbl == 0);

    const auto mix0 = mixture_predictive(sim, dd, 0.0, 50, 3);
    CHECK((log_predictive_density(mix0, y) - log_predictive_density(dd, y)).cwiseAbs().maxCoeff() ==
          0.0);
    for (int lbl : mix0.subsample.component_labels) CHECK(lbl == 1);

    // subsample proportions follow beta
    const auto mix04 = mixture_predictive(sim, dd, 0.4, 100, 3);
    int n_sim = 0;
    for (int lbl : mix04.subsample.component_labels) n_sim += (lbl == 0);
    CHECK(n_sim == 40);
}

TEST_CASE("mixture density evaluates the weighted sum directly") {
    const Mat x = grid_inputs(1, 0.0, 0.0);
    // components Normal(0,1) and Normal(1,1), observed y = 0, beta = 0.4
    const auto a = constant_pred(x, 0.0, 1.0, 1, {Family::Normal, 0.0}, 5);
    const auto b = constant_pred(x, 1.0, 1.0, 1, {Family::Normal, 0.0}, 6);
    const auto mix = mixture_predictive(a, b, 0.4, 10, 7);
    const double dens = std::exp(log_predictive_density(mix, Vec::Zero(1))[0]);
    CHECK(dens == Catch::Approx(0.4 * 0.3989422804014327 + 0.6 * 0.24197072451914337)
                      .margin(1e-9));
}

TEST_CASE("mixture log-density dominates the weighted component bounds pointwise") {
    const Mat x = grid_inputs(7, -1.0, 1.0);
    std::mt19937_64 rng(44);
    std::normal_distribution<double> g(0.0, 1.0);
    Mat loc_a(30, 7), loc_b(50, 7);
    for (Eigen::Index i = 0; i < loc_a.size(); ++i) loc_a.data()[i] = g(rng);
    for (Eigen::Index i = 0; i < loc_b.size(); ++i) loc_b.data()[i] = 1.0 + 0.5 * g(rng);
    const auto a = make_predictive_draws(x, loc_a, Vec::Constant(30, 0.8),
                                         {Family::Normal, 0.0}, SourceTag::SimulationBased, 8);
    const auto b = make_predictive_draws(x, loc_b, Vec::Constant(50, 0.6),
                                         {Family::Normal, 0.0}, SourceTag::DataDriven, 9);
    const double beta = 0.35;
    const auto mix = mixture_predictive(a, b, beta, 80, 10);
    Vec y = Vec::Constant(7, 0.3);
    const Vec lmix = log_predictive_density(mix, y);
    const Vec la = log_predictive_density(a, y);
    const Vec lb = log_predictive_density(b, y);
    for (int j = 0; j < 7; ++j) {
        CHECK(lmix[j] >= std::log(beta) + la[j] - 1e-12);
        CHECK(lmix[j] >= std::log1p(-beta) + lb[j] - 1e-12);
    }
}

TEST_CASE("mixture density integrates to one") {
    const Mat x = grid_inputs(3, 0.0, 1.0);
    const auto a = constant_pred(x, 0.5, 0.7, 25, {Family::Normal, 0.0}, 11);
    const auto b = constant_pred(x, -0.8, 0.4, 35, {Family::Normal, 0.0}, 12);
    const auto mix = mixture_predictive(a, b, 0.45, 60, 13);
    for (int j = 0; j < 3; ++j) {
        const int n = 4000;
        const double lo = -12.0, hi = 12.0, h = (hi - lo) / n;
        double acc = 0.0;
        for (int i = 0; i <= n; ++i) {
            Vec y = Vec::Constant(3, lo + i * h);
            const double w = (i == 0 || i == n) ? 0.5 : 1.0;
            acc += w * std::exp(log_predictive_density(mix, y)[j]);
        }
        CHECK(acc * h == Catch::Approx(1.0).margin(1e-3));
    }
}

TEST_CASE("elpd reference values") {
    const Mat x1 = grid_inputs(1, 0.0, 0.0);
    EvaluationSet ev;
    ev.inputs = x1;
    ev.targets = Vec::Constant(1, 0.7);
    ev.kind = EvalKind::Noisy;
    ev.split_label = "unit";
    // single draw centred on the observation with unit scale
    const auto p = constant_pred(x1, 0.7, 1.0, 1, {Family::Normal, 0.0}, 3);
    CHECK(elpd(p, ev) == Catch::Approx(-0.9189385332046727).margin(1e-12));

    // two points whose per-point log densities are exactly -1 and -2
    const Mat x2 = grid_inputs(2, 0.0, 1.0);
    Mat loc(1, 2);
    const double halflog2pi = 0.9189385332046727;
    loc(0, 0) = std::sqrt(2.0 * (1.0 - halflog2pi));
    loc(0, 1) = std::sqrt(2.0 * (2.0 - halflog2pi));
    const auto q = make_predictive_draws(x2, loc, Vec::Constant(1, 1.0), {Family::Normal, 0.0},
                                         SourceTag::DataDriven, 4);
    EvaluationSet ev2;
    ev2.inputs = x2;
    ev2.targets = Vec::Zero(2);
    ev2.kind = EvalKind::Noisy;
    CHECK(elpd(q, ev2) == Catch::Approx(-1.5).margin(1e-12));

    EvaluationSet wrong = ev;
    wrong.kind = EvalKind::Truth;
    CHECK_THROWS_AS(elpd(p, wrong), std::invalid_argument);
}

TEST_CASE("elpd matches a naive double-loop re-implementation") {
    const int n_pts = 50, n_draws = 100;
    const Mat x = grid_inputs(n_pts, -2.0, 3.0);
    std::mt19937_64 rng(321);
    std::normal_distribution<double> g(0.0, 1.0);
    Mat loc(n_draws, n_pts);
    Vec sig(n_draws);
    for (Eigen::Index i = 0; i < loc.size(); ++i) loc.data()[i] = g(rng);
    for (int s = 0; s < n_draws; ++s) sig[s] = 0.3 + 0.1 * std::abs(g(rng));
    const auto p = make_predictive_draws(x, loc, sig, {Family::Normal, 0.0},
                                         SourceTag::DataDriven, 5);
    EvaluationSet ev;
    ev.inputs = x;
    ev.targets = Vec(n_pts);
    for (int j = 0; j < n_pts; ++j) ev.targets[j] = g(rng);
    ev.kind = EvalKind::Noisy;

    long double total = 0.0L;
    for (int j = 0; j < n_pts; ++j) {
        long double acc = 0.0L;
        for (int s = 0; s < n_draws; ++s)
            acc += expl(static_cast<long double>(
                normal_lpdf(ev.targets[j], loc(s, j), sig[s])));
        total += logl(acc / n_draws);
    }
    CHECK(elpd(p, ev) == Catch::Approx(static_cast<double>(total / n_pts)).margin(1e-12));
}

TEST_CASE("elpd is invariant to permutations and stable under extreme draws") {
    const int n_pts = 20, n_draws = 100;
    const Mat x = grid_inputs(n_pts, 0.0, 1.0);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 1.0);
    Mat loc(n_draws, n_pts);
    for (Eigen::Index i = 0; i < loc.size(); ++i) loc.data()[i] = g(rng);
    const auto p = make_predictive_draws(x, loc, Vec::Constant(n_draws, 0.5),
                                         {Family::Normal, 0.0}, SourceTag::DataDriven, 6);
    EvaluationSet ev;
    ev.inputs = x;
    ev.targets = Vec::Zero(n_pts);
    ev.kind = EvalKind::Noisy;
    const double base = elpd(p, ev);

    // permute draws
    std::vector<Eigen::Index> perm(n_draws);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Mat loc_perm(n_draws, n_pts);
    for (int s = 0; s < n_draws; ++s) loc_perm.row(s) = loc.row(perm[static_cast<std::size_t>(s)]);
    const auto pp = make_predictive_draws(x, loc_perm, Vec::Constant(n_draws, 0.5),
                                          {Family::Normal, 0.0}, SourceTag::DataDriven, 6);
    CHECK(elpd(pp, ev) == Catch::Approx(base).margin(1e-12));

    // injecting one pathological draw moves the per-point elpd by less than
    // log(S/(S-1))
    Mat loc_bad(n_draws + 1, n_pts);
    loc_bad.topRows(n_draws) = loc;
    loc_bad.row(n_draws).setConstant(140.0); // log-density ~ -1e4 at y = 0, sigma = 0.5
    const auto pb = make_predictive_draws(x, loc_bad, Vec::Constant(n_draws + 1, 0.5),
                                          {Family::Normal, 0.0}, SourceTag::DataDriven, 6);
    CHECK(std::abs(elpd(pb, ev) - base) < std::log(100.0 / 99.0) + 1e-9);
}

TEST_CASE("rmse reference values and properties") {
    const Mat x1 = grid_inputs(1, 0.0, 0.0);
    Mat mu(2, 1);
    mu << 1.0, 3.0;
    auto p = make_predictive_draws(x1, mu, Vec::Constant(2, 0.1), {Family::Normal, 0.0},
                                   SourceTag::DataDriven, 7);
    EvaluationSet truth;
    truth.inputs = x1;
    truth.targets = Vec::Constant(1, 2.0);
    truth.kind = EvalKind::Truth;
    CHECK(rmse(p, truth) == Catch::Approx(1.0).margin(1e-14));

    // exact draws give zero
    Mat mu0 = Mat::Constant(5, 1, 2.0);
    auto p0 = make_predictive_draws(x1, mu0, Vec::Constant(5, 0.1), {Family::Normal, 0.0},
                                    SourceTag::DataDriven, 8);
    CHECK(rmse(p0, truth) == 0.0);

    CHECK_THROWS_AS(rmse(p, EvaluationSet{x1, Vec::Constant(1, 2.0), EvalKind::Noisy, ""}),
                    std::invalid_argument);
}

TEST_CASE("rmse matches naive re-computation and is affine-equivariant") {
    const int n_pts = 20, n_draws = 100;
    const Mat x = grid_inputs(n_pts, 0.0, 5.0);
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g(0.0, 1.0);
    Mat mu(n_draws, n_pts);
    for (Eigen::Index i = 0; i < mu.size(); ++i) mu.data()[i] = g(rng);
    Vec truth_vals(n_pts);
    for (int j = 0; j < n_pts; ++j) truth_vals[j] = g(rng);

    auto p = make_predictive_draws(x, mu, Vec::Constant(n_draws, 0.2), {Family::Normal, 0.0},
                                   SourceTag::DataDriven, 9);
    EvaluationSet ev{x, truth_vals, EvalKind::Truth, "t"};

    double naive = 0.0;
    for (int j = 0; j < n_pts; ++j) {
        double acc = 0.0;
        for (int s = 0; s < n_draws; ++s) acc += std::pow(mu(s, j) - truth_vals[j], 2);
        naive += std::sqrt(acc / n_draws);
    }
    naive /= n_pts;
    CHECK(rmse(p, ev) == Catch::Approx(naive).margin(1e-12));

    // affine equivariance: rmse(a x + b, a t + b) = |a| rmse(x, t)
    const double a = -2.3, b = 0.9;
    auto pa = make_predictive_draws(x, (a * mu).array() + b, Vec::Constant(n_draws, 0.2),
                                    {Family::Normal, 0.0}, SourceTag::DataDriven, 9);
    EvaluationSet eva{x, (a * truth_vals).array() + b, EvalKind::Truth, "t"};
    CHECK(rmse(pa, eva) == Catch::Approx(std::abs(a) * rmse(p, ev)).epsilon(1e-12));

    // global ordering differs in general but stays a valid sensitivity toggle
    const double global = rmse(p, ev, RmseOrdering::GlobalRoot);
    double naive_global = 0.0;
    for (int j = 0; j < n_pts; ++j)
        for (int s = 0; s < n_draws; ++s) naive_global += std::pow(mu(s, j) - truth_vals[j], 2);
    CHECK(global == Catch::Approx(std::sqrt(naive_global / (n_pts * n_draws))).margin(1e-12));
}

TEST_CASE("mixture rmse interpolates the component mean squared deviations") {
    const Mat x = grid_inputs(4, 0.0, 1.0);
    const auto a = constant_pred(x, 1.0, 0.1, 30, {Family::Normal, 0.0}, 1);
    const auto b = constant_pred(x, 3.0, 0.1, 30, {Family::Normal, 0.0}, 2);
    EvaluationSet truth{x, Vec::Zero(4), EvalKind::Truth, "t"};
    const auto mix = mixture_predictive(a, b, 0.25, 40, 3);
    // per point: sqrt(0.25 * 1 + 0.75 * 9) = sqrt(7)
    CHECK(rmse(mix, truth) == Catch::Approx(std::sqrt(7.0)).margin(1e-12));
    // endpoints collapse to the components
    CHECK(rmse(mixture_predictive(a, b, 1.0, 40, 3), truth) ==
          Catch::Approx(rmse(a, truth)).margin(1e-15));
    CHECK(rmse(mixture_predictive(a, b, 0.0, 40, 3), truth) ==
          Catch::Approx(rmse(b, truth)).margin(1e-15));
}

TEST_CASE("grid alignment errors") {
    const Mat x = grid_inputs(5, 0.0, 1.0);
    const auto p = constant_pred(x, 0.0, 1.0, 10, {Family::Normal, 0.0}, 1);
    Mat other = x;
    other(2, 0) += 0.5;
    CHECK_THROWS_AS(predictive_density(p, other, Vec::Zero(5)), std::invalid_argument);
    CHECK_NOTHROW(predictive_density(p, x, Vec::Zero(5)));

    const auto dd = constant_pred(grid_inputs(5, 0.0, 0.9), 0.0, 1.0, 10, {Family::Normal, 0.0}, 2);
    CHECK_THROWS_AS(mixture_predictive(p, dd, 0.5, 10, 1), std::invalid_argument);
}

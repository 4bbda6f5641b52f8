#pragma once

#include <random>

#include "hybsur/train.hpp"

namespace hybsur {

enum class SourceTag { SimulationBased, DataDriven, PowerScaled, Mixture };

/// Per-draw predictions at a set of test inputs.  `loc_draws` holds the raw
/// surrogate outputs (the family's location parameter); `mu_draws` the
/// predictive means on the observation scale; `y_draws` sampled posterior
/// predictive observations.
struct PredictiveDraws {
    Mat test_inputs; // N x dim_x
    Mat loc_draws;   // S x N
    Vec sigma_draws; // S
    Mat y_draws;     // S x N
    Mat mu_draws;    // S x N
    LikelihoodFamily family;
    SourceTag source_tag = SourceTag::PowerScaled;
    std::vector<bool> beyond_bounds;  // per test input: outside the design box
    std::vector<int> component_labels; // mixture subsample only: 0 = sim, 1 = dd

    Eigen::Index n_draws() const { return loc_draws.rows(); }
    Eigen::Index n_inputs() const { return loc_draws.cols(); }
};

namespace detail {

inline void fill_observation_draws(PredictiveDraws& p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    const Eigen::Index s_count = p.loc_draws.rows(), n = p.loc_draws.cols();
    p.y_draws.resize(s_count, n);
    p.mu_draws.resize(s_count, n);
    for (Eigen::Index s = 0; s < s_count; ++s) {
        const double sigma = p.sigma_draws[s];
        for (Eigen::Index j = 0; j < n; ++j) {
            const double loc = p.loc_draws(s, j);
            if (!std::isfinite(loc))
                throw std::runtime_error("predictive_draws: non-finite surrogate output");
            const double eps = g(rng);
            if (p.family.kind == Family::Normal) {
                p.mu_draws(s, j) = loc;
                p.y_draws(s, j) = loc + sigma * eps;
            } else {
                p.mu_draws(s, j) = std::exp(loc + 0.5 * sigma * sigma) - p.family.offset;
                p.y_draws(s, j) = std::exp(loc + sigma * eps) - p.family.offset;
            }
        }
    }
}

inline std::vector<bool> flag_beyond_bounds(const Mat& test_x, const ScalingSpec& scaling,
                                            int dim_x) {
    std::vector<bool> flags(static_cast<std::size_t>(test_x.rows()), false);
    for (Eigen::Index j = 0; j < test_x.rows(); ++j)
        for (int k = 0; k < dim_x; ++k) {
            const auto& b = scaling.bound(k);
            if (test_x(j, k) < b.lo || test_x(j, k) > b.hi) {
                flags[static_cast<std::size_t>(j)] = true;
                break;
            }
        }
    return flags;
}

} // namespace detail

/// Assemble predictive draws from raw location/scale draws (used by tests and
/// by re-scoring persisted fits).
inline PredictiveDraws make_predictive_draws(const Mat& test_inputs, const Mat& loc_draws,
                                             const Vec& sigma_draws, LikelihoodFamily family,
                                             SourceTag tag, std::uint64_t seed) {
    if (loc_draws.cols() != test_inputs.rows() || loc_draws.rows() != sigma_draws.size())
        throw std::invalid_argument("make_predictive_draws: shape mismatch");
    PredictiveDraws p;
    p.test_inputs = test_inputs;
    p.loc_draws = loc_draws;
    p.sigma_draws = sigma_draws;
    p.family = family;
    p.source_tag = tag;
    p.beyond_bounds.assign(static_cast<std::size_t>(test_inputs.rows()), false);
    detail::fill_observation_draws(p, seed);
    return p;
}

/// Predictions from a paired two-step fit: one row per retained posterior
/// triple (c, omega_r, sigma_r).
inline PredictiveDraws predictive_draws(const HybridFit& fit, const Mat& test_x,
                                        std::uint64_t seed) {
    const auto& spec = fit.spec();
    if (test_x.cols() != spec.dim_x())
        throw std::invalid_argument("predictive_draws: test input width != known input dims");
    const SurrogateBasis basis = spec.basis();
    detail::SplitBasisData split;
    split.build(test_x, basis);

    PredictiveDraws p;
    p.test_inputs = test_x;
    p.family = spec.family;
    p.source_tag =
        fit.weighting().beta >= 1.0 ? SourceTag::SimulationBased : SourceTag::PowerScaled;
    p.beyond_bounds = detail::flag_beyond_bounds(test_x, spec.scaling, spec.dim_x());

    const Eigen::Index s_count = fit.n_pairs();
    p.loc_draws.resize(s_count, test_x.rows());
    p.sigma_draws.resize(s_count);
    Vec pw;
    for (Eigen::Index s = 0; s < s_count; ++s) {
        const Vec c = fit.coeffs(s);
        const Vec omega = fit.omega(s);
        Vec u(spec.dim_w());
        for (int k = 0; k < spec.dim_w(); ++k)
            u[k] = spec.scaling.scale_component(spec.dim_x() + k, omega[k]);
        split.latent_factors(u, pw, nullptr);
        p.loc_draws.row(s) = (split.px * c.cwiseProduct(pw)).transpose();
        p.sigma_draws[s] = fit.sigma(s);
    }
    detail::fill_observation_draws(p, seed);
    return p;
}

/// Predictions from a data-driven posterior (draws of (c_R, sigma_R)).
inline PredictiveDraws predictive_draws(const PosteriorDraws& dd, const SurrogateSpec& spec,
                                        const Mat& test_x, std::uint64_t seed) {
    if (dd.stage_tag != StageTag::DataDriven)
        throw std::invalid_argument("predictive_draws: expected data-driven draws");
    if (spec.dim_w() != 0)
        throw std::invalid_argument("predictive_draws: data-driven spec has latent inputs");
    if (test_x.cols() != spec.dim_x())
        throw std::invalid_argument("predictive_draws: test input width != known input dims");
    const SurrogateBasis basis = spec.basis();
    Mat scaled(test_x.rows(), test_x.cols());
    for (Eigen::Index j = 0; j < test_x.rows(); ++j)
        scaled.row(j) = basis.scaling.scale_unchecked(test_x.row(j).transpose()).transpose();
    const Mat psi = basis_matrix(scaled, basis.set); // N x d

    const Mat pooled = dd.pooled();
    const Eigen::Index d = static_cast<Eigen::Index>(basis.set.size());
    if (pooled.cols() != d + 1)
        throw std::invalid_argument("predictive_draws: draw width disagrees with spec");

    PredictiveDraws p;
    p.test_inputs = test_x;
    p.family = spec.family;
    p.source_tag = SourceTag::DataDriven;
    p.beyond_bounds = detail::flag_beyond_bounds(test_x, spec.scaling, spec.dim_x());
    p.loc_draws = pooled.leftCols(d) * psi.transpose(); // S x N
    p.sigma_draws = pooled.col(d);
    detail::fill_observation_draws(p, seed);
    return p;
}

// ---------------------------------------------------------------------------
// Posterior predictive mixture
// ---------------------------------------------------------------------------

/// Two-component posterior-predictive mixture.  The exact density
/// representation keeps both components so scoring evaluates
/// beta * p_sim + (1 - beta) * p_dd directly; the labeled subsample mirrors
/// the plotting convention where draw counts reflect the weights.
struct MixturePredictive {
    double beta = 0.5;
    PredictiveDraws sim;
    PredictiveDraws dd;
    PredictiveDraws subsample;
};

inline MixturePredictive mixture_predictive(const PredictiveDraws& sim_pred,
                                            const PredictiveDraws& dd_pred, double beta,
                                            int total_draws, std::uint64_t seed) {
    if (!(beta >= 0.0 && beta <= 1.0))
        throw std::domain_error("mixture_predictive: beta outside [0, 1]");
    if (total_draws < 1) throw std::invalid_argument("mixture_predictive: total_draws < 1");
    if (sim_pred.test_inputs.rows() != dd_pred.test_inputs.rows() ||
        (sim_pred.test_inputs - dd_pred.test_inputs).cwiseAbs().maxCoeff() > 1e-12)
        throw std::invalid_argument("mixture_predictive: component test grids disagree");

    MixturePredictive mix;
    mix.beta = beta;
    mix.sim = sim_pred;
    mix.dd = dd_pred;

    const int n_sim = static_cast<int>(std::llround(beta * total_draws));
    const int n_dd = total_draws - n_sim;
    std::mt19937_64 rng(seed);
    auto pick = [&rng](Eigen::Index avail, int want) {
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(avail));
        for (Eigen::Index i = 0; i < avail; ++i) idx[static_cast<std::size_t>(i)] = i;
        std::vector<Eigen::Index> out;
        if (want <= avail) {
            for (int i = 0; i < want; ++i) { // partial Fisher-Yates
                std::uniform_int_distribution<Eigen::Index> u(i, avail - 1);
                std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(u(rng))]);
                out.push_back(idx[static_cast<std::size_t>(i)]);
            }
        } else {
            std::uniform_int_distribution<Eigen::Index> u(0, avail - 1);
            for (int i = 0; i < want; ++i) out.push_back(u(rng));
        }
        return out;
    };
    const auto sim_rows = pick(sim_pred.n_draws(), n_sim);
    const auto dd_rows = pick(dd_pred.n_draws(), n_dd);

    PredictiveDraws& sub = mix.subsample;
    sub.test_inputs = sim_pred.test_inputs;
    sub.family = sim_pred.family;
    sub.source_tag = SourceTag::Mixture;
    sub.beyond_bounds = sim_pred.beyond_bounds;
    const Eigen::Index n = sim_pred.n_inputs();
    sub.loc_draws.resize(total_draws, n);
    sub.y_draws.resize(total_draws, n);
    sub.mu_draws.resize(total_draws, n);
    sub.sigma_draws.resize(total_draws);
    Eigen::Index r = 0;
    for (auto i : sim_rows) {
        sub.loc_draws.row(r) = sim_pred.loc_draws.row(i);
        sub.y_draws.row(r) = sim_pred.y_draws.row(i);
        sub.mu_draws.row(r) = sim_pred.mu_draws.row(i);
        sub.sigma_draws[r] = sim_pred.sigma_draws[i];
        sub.component_labels.push_back(0);
        ++r;
    }
    for (auto i : dd_rows) {
        sub.loc_draws.row(r) = dd_pred.loc_draws.row(i);
        sub.y_draws.row(r) = dd_pred.y_draws.row(i);
        sub.mu_draws.row(r) = dd_pred.mu_draws.row(i);
        sub.sigma_draws[r] = dd_pred.sigma_draws[i];
        sub.component_labels.push_back(1);
        ++r;
    }
    return mix;
}

// ---------------------------------------------------------------------------
// Predictive log-density (the ELPD inner average)
// ---------------------------------------------------------------------------

/// Per-test-point log of the draw-averaged predictive density,
/// log( (1/S) sum_s p(y_j | loc_sj, sigma_s) ), via stable log-mean-exp.
inline Vec log_predictive_density(const PredictiveDraws& pred, const Vec& y_obs) {
    if (y_obs.size() != pred.n_inputs())
        throw std::invalid_argument("log_predictive_density: observation/input count mismatch");
    Vec out(y_obs.size());
    Vec per_draw(pred.n_draws());
    for (Eigen::Index j = 0; j < y_obs.size(); ++j) {
        for (Eigen::Index s = 0; s < pred.n_draws(); ++s)
            per_draw[s] = log_lik(pred.family, y_obs[j], pred.loc_draws(s, j), pred.sigma_draws[s]);
        out[j] = log_mean_exp(per_draw);
    }
    return out;
}

/// Mixture rule: log(beta * p_sim + (1-beta) * p_dd), exact at the endpoints.
inline Vec log_predictive_density(const MixturePredictive& mix, const Vec& y_obs) {
    if (mix.beta == 1.0) return log_predictive_density(mix.sim, y_obs);
    if (mix.beta == 0.0) return log_predictive_density(mix.dd, y_obs);
    const Vec ls = log_predictive_density(mix.sim, y_obs);
    const Vec lr = log_predictive_density(mix.dd, y_obs);
    Vec out(y_obs.size());
    Vec two(2);
    for (Eigen::Index j = 0; j < y_obs.size(); ++j) {
        two << std::log(mix.beta) + ls[j], std::log1p(-mix.beta) + lr[j];
        out[j] = log_sum_exp(two);
    }
    return out;
}

/// Alignment-checked variant matching the operation contract.
template <typename Pred>
Vec predictive_density(const Pred& pred, const Mat& test_x, const Vec& y_obs) {
    const Mat& grid = [&]() -> const Mat& {
        if constexpr (std::is_same_v<Pred, MixturePredictive>)
            return pred.sim.test_inputs;
        else
            return pred.test_inputs;
    }();
    if (grid.rows() != test_x.rows() || (grid - test_x).cwiseAbs().maxCoeff() > 1e-9)
        throw std::invalid_argument("predictive_density: test grid mismatch");
    return log_predictive_density(pred, y_obs);
}

} // namespace hybsur

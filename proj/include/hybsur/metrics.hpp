#pragma once

#include "hybsur/predict.hpp"

namespace hybsur {

namespace detail {

inline void check_eval_alignment(const Mat& grid, const EvaluationSet& eval) {
    eval.validate();
    if (eval.size() == 0) throw std::invalid_argument("metrics: empty evaluation set");
    if (grid.rows() != eval.inputs.rows() ||
        (grid - eval.inputs).cwiseAbs().maxCoeff() > 1e-9)
        throw std::invalid_argument(concat("metrics: prediction grid disagrees with split '",
                                           eval.split_label, "'"));
}

} // namespace detail

/// ELPD normalized by the number of test points (higher is better).
inline double elpd(const PredictiveDraws& pred, const EvaluationSet& eval) {
    if (eval.kind != EvalKind::Noisy)
        throw std::invalid_argument("elpd: needs a Noisy evaluation set");
    detail::check_eval_alignment(pred.test_inputs, eval);
    return log_predictive_density(pred, eval.targets).mean();
}

inline double elpd(const MixturePredictive& mix, const EvaluationSet& eval) {
    if (eval.kind != EvalKind::Noisy)
        throw std::invalid_argument("elpd: needs a Noisy evaluation set");
    detail::check_eval_alignment(mix.sim.test_inputs, eval);
    return log_predictive_density(mix, eval.targets).mean();
}

/// Root placement for the posterior-averaged RMSE.  The default takes the
/// root of the per-point draw average before averaging over points; the
/// conventional global ordering is available for sensitivity checks only.
enum class RmseOrdering { RootInsidePointAverage, GlobalRoot };

namespace detail {

inline Vec mean_squared_deviation(const Mat& mu_draws, const Vec& truth) {
    Vec msd(truth.size());
    for (Eigen::Index j = 0; j < truth.size(); ++j)
        msd[j] = (mu_draws.col(j).array() - truth[j]).square().mean();
    return msd;
}

inline double rmse_from_msd(const Vec& msd, RmseOrdering ordering) {
    if (ordering == RmseOrdering::GlobalRoot) return std::sqrt(msd.mean());
    return msd.cwiseSqrt().mean();
}

} // namespace detail

/// Posterior-averaged RMSE of the predictive mean draws against noise-free
/// truth values (lower is better).
inline double rmse(const PredictiveDraws& pred, const EvaluationSet& eval,
                   RmseOrdering ordering = RmseOrdering::RootInsidePointAverage) {
    if (eval.kind != EvalKind::Truth)
        throw std::invalid_argument("rmse: needs a Truth evaluation set");
    detail::check_eval_alignment(pred.test_inputs, eval);
    return detail::rmse_from_msd(detail::mean_squared_deviation(pred.mu_draws, eval.targets),
                                 ordering);
}

/// Mixture RMSE: the per-point mean squared deviation under the mixture is
/// the beta-weighted average of the component values (exact, no subsampling).
inline double rmse(const MixturePredictive& mix, const EvaluationSet& eval,
                   RmseOrdering ordering = RmseOrdering::RootInsidePointAverage) {
    if (eval.kind != EvalKind::Truth)
        throw std::invalid_argument("rmse: needs a Truth evaluation set");
    detail::check_eval_alignment(mix.sim.test_inputs, eval);
    const Vec msd_sim = detail::mean_squared_deviation(mix.sim.mu_draws, eval.targets);
    const Vec msd_dd = detail::mean_squared_deviation(mix.dd.mu_draws, eval.targets);
    const Vec msd = mix.beta * msd_sim + (1.0 - mix.beta) * msd_dd;
    return detail::rmse_from_msd(msd, ordering);
}

} // namespace hybsur

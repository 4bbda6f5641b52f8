#pragma once

#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hybsur/basis.hpp"
#include "hybsur/datasets.hpp"
#include "hybsur/distributions.hpp"

namespace hybsur {

// ---------------------------------------------------------------------------
// Weighting schedule
// ---------------------------------------------------------------------------

/// Power-scaling exponents (alpha_s, alpha_r) derived from the weighting
/// factor beta.  Only compute_scaling constructs valid instances.
struct WeightingConfig {
    double beta = 0.5;
    double alpha_s = 1.0;
    double alpha_r = 1.0;
};

/// Piecewise schedule mapping beta in [0,1] onto likelihood exponents:
/// below 0.5 the real data keeps full weight and the simulation side is
/// scaled by beta/(1-beta); above 0.5 the roles flip with (1-beta)/beta.
inline WeightingConfig compute_scaling(double beta) {
    if (!(beta >= 0.0 && beta <= 1.0))
        throw std::domain_error(detail::concat("compute_scaling: beta = ", beta,
                                               " outside [0, 1]"));
    WeightingConfig w;
    w.beta = beta;
    if (beta < 0.5) {
        w.alpha_s = beta / (1.0 - beta);
        w.alpha_r = 1.0;
    } else {
        w.alpha_s = 1.0;
        w.alpha_r = (1.0 - beta) / beta;
    }
    return w;
}

// ---------------------------------------------------------------------------
// Likelihood family and priors
// ---------------------------------------------------------------------------

enum class Family { Normal, LogNormal };

/// Observation model family.  `offset` is added to observed outputs before
/// density evaluation (1 for the epidemic setups so that zero counts stay in
/// the log-normal support, 0 otherwise).
struct LikelihoodFamily {
    Family kind = Family::Normal;
    double offset = 0.0;
};

struct NormalPrior {
    double loc = 0.0;
    double scale = 5.0;
};

struct HalfNormalPrior {
    double scale = 0.5;
};

struct TruncatedNormalPrior {
    double loc = 0.0;
    double scale = 1.0;
    double lower = -1.0;
    double upper = 1.0;
};

/// Priors of the probabilistic model: independent normals on the surrogate
/// coefficients, half-normal on the lumped error scale, and (when latent
/// inputs exist) an independent truncated normal per latent component.
/// `coeff_scales`, when non-empty, overrides coeff.scale per term; it carries
/// the orthonormal-basis equivalent prior (see SurrogateSpec).
struct PriorSpec {
    NormalPrior coeff;
    HalfNormalPrior sigma;
    std::vector<TruncatedNormalPrior> omega;
    Vec coeff_scales;

    double coeff_scale(Eigen::Index i) const {
        return coeff_scales.size() > 0 ? coeff_scales[i] : coeff.scale;
    }

    void validate() const {
        if (!(coeff.scale > 0.0) || !(sigma.scale > 0.0))
            throw std::invalid_argument("PriorSpec: scales must be positive");
        for (Eigen::Index i = 0; i < coeff_scales.size(); ++i)
            if (!(coeff_scales[i] > 0.0))
                throw std::invalid_argument("PriorSpec: coefficient scales must be positive");
        for (std::size_t k = 0; k < omega.size(); ++k) {
            if (!(omega[k].scale > 0.0))
                throw std::invalid_argument("PriorSpec: omega scale must be positive");
            if (!(omega[k].lower < omega[k].upper))
                throw std::invalid_argument(
                    detail::concat("PriorSpec: omega[", k, "] truncation needs lower < upper"));
        }
    }
};

/// One point of the (constrained) parameter space.
struct ParameterState {
    Vec coeffs;
    Vec omega_r; // empty when the model has no latent inputs
    double sigma = 1.0;
};

// ---------------------------------------------------------------------------
// Log-density building blocks (constrained space)
// ---------------------------------------------------------------------------

/// Sum of prior log-densities; -inf (not an error) outside the support so
/// samplers can treat out-of-support proposals as rejections.
inline double log_prior(const ParameterState& state, const PriorSpec& prior) {
    if (static_cast<std::size_t>(state.omega_r.size()) != prior.omega.size())
        throw std::invalid_argument("log_prior: omega dimension disagrees with prior spec");
    if (prior.coeff_scales.size() > 0 && prior.coeff_scales.size() != state.coeffs.size())
        throw std::invalid_argument("log_prior: coefficient scale count disagrees");
    double lp = 0.0;
    for (Eigen::Index i = 0; i < state.coeffs.size(); ++i)
        lp += normal_lpdf(state.coeffs[i], prior.coeff.loc, prior.coeff_scale(i));
    lp += halfnormal_lpdf(state.sigma, prior.sigma.scale);
    for (std::size_t k = 0; k < prior.omega.size(); ++k) {
        const auto& p = prior.omega[k];
        lp += truncnormal_lpdf(state.omega_r[static_cast<Eigen::Index>(k)], p.loc, p.scale,
                               p.lower, p.upper);
    }
    return lp;
}

/// Pointwise observation log-density.  For LogNormal, `mu` is the log-scale
/// location (the surrogate output lives on log scale).
inline double log_lik(const LikelihoodFamily& family, double y, double mu, double sigma) {
    switch (family.kind) {
    case Family::Normal:
        return normal_lpdf(y, mu, sigma);
    case Family::LogNormal: {
        const double shifted = y + family.offset;
        if (!(shifted > 0.0))
            throw std::domain_error(detail::concat(
                "log_lik: LogNormal observation y = ", y, " with offset ", family.offset,
                " is not positive after shifting"));
        return lognormal_lpdf(shifted, mu, sigma);
    }
    }
    return kNegInf;
}

/// Index-set + scaling pair defining the surrogate's input space.  The first
/// `dim_x` input components are the known inputs, the rest the latent ones.
struct SurrogateBasis {
    MultiIndexSet set;
    ScalingSpec scaling;
    int dim_x = 0;
    int dim_w = 0;

    void validate() const {
        if (set.dims() != dim_x + dim_w || scaling.dims() != set.dims())
            throw std::invalid_argument("SurrogateBasis: dimension bookkeeping disagrees");
    }
};

namespace detail {

inline double surrogate_mu(const Vec& coeffs, const Vec& x, const Vec& omega,
                           const SurrogateBasis& basis) {
    Vec raw(basis.dim_x + basis.dim_w);
    raw.head(basis.dim_x) = x;
    raw.tail(basis.dim_w) = omega;
    return pce_eval(coeffs, basis.scaling.scale_unchecked(raw), basis.set);
}

} // namespace detail

/// Power-scaled joint log-density (joint training target, constrained space):
/// alpha_r * real log-likelihood + alpha_s * simulation log-likelihood + priors.
/// A data term whose exponent is exactly zero is skipped entirely.
inline double log_posterior_power_scaled(const ParameterState& state,
                                         const SimulationDataset& sim, const RealDataset& real,
                                         const WeightingConfig& w, const PriorSpec& prior,
                                         const LikelihoodFamily& family,
                                         const SurrogateBasis& basis) {
    if (w.alpha_s > 0.0 && sim.size() == 0)
        throw std::invalid_argument("log_posterior_power_scaled: empty simulation data with alpha_s > 0");
    if (w.alpha_r > 0.0 && real.size() == 0)
        throw std::invalid_argument("log_posterior_power_scaled: empty real data with alpha_r > 0");
    double lp = log_prior(state, prior);
    if (!std::isfinite(lp)) return kNegInf;
    if (!(state.sigma > 0.0)) return kNegInf;
    if (w.alpha_s > 0.0) {
        double ll = 0.0;
        for (Eigen::Index i = 0; i < sim.size(); ++i) {
            const double mu = detail::surrogate_mu(state.coeffs, sim.x.row(i).transpose(),
                                                   sim.omega.row(i).transpose(), basis);
            ll += log_lik(family, sim.y[i], mu, state.sigma);
        }
        lp += w.alpha_s * ll;
    }
    if (w.alpha_r > 0.0) {
        double ll = 0.0;
        for (Eigen::Index j = 0; j < real.size(); ++j) {
            const double mu = detail::surrogate_mu(state.coeffs, real.x.row(j).transpose(),
                                                   state.omega_r, basis);
            ll += log_lik(family, real.y[j], mu, state.sigma);
        }
        lp += w.alpha_r * ll;
    }
    return lp;
}

/// Second-step inference log-density for fixed surrogate coefficients: the
/// full real-data likelihood plus the ORIGINAL prior p(omega_r, sigma).  The
/// first-step posterior of (omega'_r, sigma') never enters here.
inline double log_posterior_inference(const Vec& omega_r, double sigma, const Vec& coeffs_fixed,
                                      const RealDataset& real, const PriorSpec& prior,
                                      const LikelihoodFamily& family,
                                      const SurrogateBasis& basis) {
    if (!(sigma > 0.0)) return kNegInf;
    double lp = halfnormal_lpdf(sigma, prior.sigma.scale);
    for (std::size_t k = 0; k < prior.omega.size(); ++k) {
        const auto& p = prior.omega[k];
        lp += truncnormal_lpdf(omega_r[static_cast<Eigen::Index>(k)], p.loc, p.scale, p.lower,
                               p.upper);
    }
    if (!std::isfinite(lp)) return kNegInf;
    for (Eigen::Index j = 0; j < real.size(); ++j) {
        const double mu =
            detail::surrogate_mu(coeffs_fixed, real.x.row(j).transpose(), omega_r, basis);
        lp += log_lik(family, real.y[j], mu, sigma);
    }
    return lp;
}

// ---------------------------------------------------------------------------
// Unconstrained sampling targets
//
// Samplers operate on z in R^D.  sigma is sampled as log(sigma); each latent
// input is mapped onto its truncation interval by a scaled logistic.  The
// log-Jacobian of the transform is added to the density and both density and
// gradient are smooth on all of R^D.
// ---------------------------------------------------------------------------

namespace detail {

struct OmegaTransform {
    double lower = 0.0, span = 1.0;       // prior truncation interval
    double basis_lo = 0.0, basis_hi = 1.0; // scaling interval of the basis

    double constrain(double z, double& dlogjac_dz, double& logjac) const {
        const double s = logistic(z);
        logjac = std::log(span) + std::log(s) + std::log1p(-s);
        dlogjac_dz = 1.0 - 2.0 * s;
        return lower + span * s;
    }
    double dconstrain_dz(double z) const {
        const double s = logistic(z);
        return span * s * (1.0 - s);
    }
    double to_unit(double omega) const {
        return (2.0 * omega - basis_lo - basis_hi) / (basis_hi - basis_lo);
    }
    double dunit_domega() const { return 2.0 / (basis_hi - basis_lo); }
};

/// Basis evaluation split into a fixed known-input part and a latent part.
/// For each basis term i, psi_i(x_j, omega) = px(j, i) * pw_i(omega), so the
/// latent factors are shared across all data rows.
struct SplitBasisData {
    Mat px;                          // N x d, known-input factor products
    std::vector<std::vector<int>> w_orders; // per basis term, orders of latent dims
    int deg = 0;
    int dim_w = 0;

    void build(const Mat& x_rows, const SurrogateBasis& basis) {
        const auto& set = basis.set;
        const Eigen::Index n = x_rows.rows();
        const Eigen::Index d = static_cast<Eigen::Index>(set.size());
        deg = set.max_degree();
        dim_w = basis.dim_w;
        px.resize(n, d);
        w_orders.assign(set.size(), std::vector<int>(static_cast<std::size_t>(dim_w), 0));
        const int stride = deg + 1;
        std::vector<double> table(static_cast<std::size_t>(basis.dim_x * stride));
        for (Eigen::Index j = 0; j < n; ++j) {
            for (int k = 0; k < basis.dim_x; ++k) {
                const double u = basis.scaling.scale_component(k, x_rows(j, k));
                legendre_series(deg, u, table.data() + k * stride);
            }
            for (std::size_t i = 0; i < set.size(); ++i) {
                double v = 1.0;
                for (int k = 0; k < basis.dim_x; ++k)
                    v *= table[static_cast<std::size_t>(k * stride + set[i][static_cast<std::size_t>(k)])];
                px(j, static_cast<Eigen::Index>(i)) = v;
                for (int k = 0; k < dim_w; ++k)
                    w_orders[i][static_cast<std::size_t>(k)] =
                        set[i][static_cast<std::size_t>(basis.dim_x + k)];
            }
        }
    }

    /// Latent factor products pw (and, when grads != nullptr, the per-latent-dim
    /// derivative products d pw / d u_k) at scaled latent coordinates u.
    void latent_factors(const Vec& u, Vec& pw, std::vector<Vec>* grads) const {
        const int stride = deg + 1;
        std::vector<double> val(static_cast<std::size_t>(dim_w * stride));
        std::vector<double> der(static_cast<std::size_t>(dim_w * stride));
        for (int k = 0; k < dim_w; ++k) {
            legendre_series(deg, u[k], val.data() + k * stride);
            if (grads) legendre_deriv_series(deg, val.data() + k * stride, der.data() + k * stride);
        }
        const Eigen::Index d = px.cols();
        pw.resize(d);
        if (grads) {
            grads->assign(static_cast<std::size_t>(dim_w), Vec(d));
        }
        for (Eigen::Index i = 0; i < d; ++i) {
            const auto& ord = w_orders[static_cast<std::size_t>(i)];
            double v = 1.0;
            for (int k = 0; k < dim_w; ++k) v *= val[static_cast<std::size_t>(k * stride + ord[static_cast<std::size_t>(k)])];
            pw[i] = v;
            if (grads) {
                for (int k = 0; k < dim_w; ++k) {
                    double g = der[static_cast<std::size_t>(k * stride + ord[static_cast<std::size_t>(k)])];
                    for (int l = 0; l < dim_w; ++l)
                        if (l != k) g *= val[static_cast<std::size_t>(l * stride + ord[static_cast<std::size_t>(l)])];
                    (*grads)[static_cast<std::size_t>(k)][i] = g;
                }
            }
        }
    }
};

/// Output transform of the observation model: identity for Normal,
/// log(y + offset) for LogNormal with per-observation support checks.
inline Vec transform_outputs(const Vec& y, const LikelihoodFamily& family, const char* which) {
    if (family.kind == Family::Normal) return y;
    Vec t(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double shifted = y[i] + family.offset;
        if (!(shifted > 0.0))
            throw std::domain_error(detail::concat(
                "LogNormal likelihood: ", which, " observation ", i, " (y = ", y[i],
                ") is not positive after the +", family.offset, " offset"));
        t[i] = std::log(shifted);
    }
    return t;
}

} // namespace detail

/// Joint surrogate posterior over (c, omega_r, sigma) with power-scaled data
/// terms.  Also covers the data-driven model (no latent dims, no simulation
/// data, alpha_r = 1) and the simulation-only end point (beta = 1).
class JointSurrogateModel {
public:
    JointSurrogateModel(SurrogateBasis basis, LikelihoodFamily family, PriorSpec prior,
                        WeightingConfig w, const SimulationDataset* sim, const RealDataset* real)
        : basis_(std::move(basis)), family_(family), prior_(std::move(prior)), w_(w) {
        basis_.validate();
        prior_.validate();
        if (static_cast<int>(prior_.omega.size()) != basis_.dim_w)
            throw std::invalid_argument("JointSurrogateModel: latent prior count != latent dims");
        d_ = static_cast<int>(basis_.set.size());
        use_sim_ = w_.alpha_s > 0.0;
        use_real_ = w_.alpha_r > 0.0;
        if (use_sim_) {
            if (!sim || sim->size() == 0)
                throw std::invalid_argument("JointSurrogateModel: empty simulation data with alpha_s > 0");
            sim->validate();
            Mat scaled(sim->size(), basis_.set.dims());
            for (Eigen::Index i = 0; i < sim->size(); ++i) {
                Vec raw(basis_.set.dims());
                raw.head(basis_.dim_x) = sim->x.row(i).transpose();
                raw.tail(basis_.dim_w) = sim->omega.row(i).transpose();
                scaled.row(i) = basis_.scaling.scale_unchecked(raw).transpose();
            }
            sim_psi_ = basis_matrix(scaled, basis_.set);
            sim_target_ = detail::transform_outputs(sim->y, family_, "simulation");
            if (family_.kind == Family::LogNormal) sim_const_ = -sim_target_.sum();
        }
        if (use_real_) {
            if (!real || real->size() == 0)
                throw std::invalid_argument("JointSurrogateModel: empty real data with alpha_r > 0");
            real->validate();
            real_split_.build(real->x, basis_);
            real_target_ = detail::transform_outputs(real->y, family_, "real");
            if (family_.kind == Family::LogNormal) real_const_ = -real_target_.sum();
        }
        for (int k = 0; k < basis_.dim_w; ++k) {
            const auto& p = prior_.omega[static_cast<std::size_t>(k)];
            detail::OmegaTransform t;
            t.lower = p.lower;
            t.span = p.upper - p.lower;
            t.basis_lo = basis_.scaling.bound(basis_.dim_x + k).lo;
            t.basis_hi = basis_.scaling.bound(basis_.dim_x + k).hi;
            omega_tf_.push_back(t);
        }
    }

    int n_params() const { return d_ + basis_.dim_w + 1; }
    int n_coeffs() const { return d_; }
    int dim_w() const { return basis_.dim_w; }
    const SurrogateBasis& basis() const { return basis_; }
    const LikelihoodFamily& family() const { return family_; }
    const PriorSpec& prior() const { return prior_; }
    const WeightingConfig& weighting() const { return w_; }

    Vec constrain(const Vec& z) const {
        Vec theta(n_params());
        theta.head(d_) = z.head(d_);
        for (int k = 0; k < basis_.dim_w; ++k) {
            double dj, lj;
            theta[d_ + k] = omega_tf_[static_cast<std::size_t>(k)].constrain(z[d_ + k], dj, lj);
        }
        theta[n_params() - 1] = std::exp(z[n_params() - 1]);
        return theta;
    }

    Vec unconstrain(const Vec& theta) const {
        Vec z(n_params());
        z.head(d_) = theta.head(d_);
        for (int k = 0; k < basis_.dim_w; ++k) {
            const auto& t = omega_tf_[static_cast<std::size_t>(k)];
            double frac = (theta[d_ + k] - t.lower) / t.span;
            frac = std::clamp(frac, 1e-12, 1.0 - 1e-12);
            z[d_ + k] = logit(frac);
        }
        z[n_params() - 1] = std::log(theta[n_params() - 1]);
        return z;
    }

    double log_density(const Vec& z) const { return evaluate(z, nullptr); }

    Vec gradient(const Vec& z) const {
        Vec g = Vec::Zero(n_params());
        evaluate(z, &g);
        return g;
    }

    /// Chain initialization: coefficients from Normal(0, 0.5), transformed
    /// parameters jittered around their prior medians.
    Vec initial_draw(std::mt19937_64& rng) const {
        std::normal_distribution<double> coeff_init(0.0, 0.5);
        std::normal_distribution<double> jitter(0.0, 0.1);
        Vec z(n_params());
        for (int i = 0; i < d_; ++i) z[i] = coeff_init(rng);
        for (int k = 0; k < basis_.dim_w; ++k) {
            const auto& p = prior_.omega[static_cast<std::size_t>(k)];
            const double span = p.upper - p.lower;
            const double med = std::clamp(p.loc, p.lower + 0.01 * span, p.upper - 0.01 * span);
            z[d_ + k] = logit((med - p.lower) / span) + jitter(rng);
        }
        // median of a half-normal with unit scale
        z[n_params() - 1] = std::log(prior_.sigma.scale * 0.6744897501960817) + jitter(rng);
        return z;
    }

    std::vector<std::string> parameter_names(const std::vector<std::string>& omega_names) const {
        std::vector<std::string> names;
        for (int i = 0; i < d_; ++i) names.push_back(detail::concat("c", i));
        for (int k = 0; k < basis_.dim_w; ++k)
            names.push_back(k < static_cast<int>(omega_names.size())
                                ? omega_names[static_cast<std::size_t>(k)]
                                : detail::concat("omega", k));
        names.push_back("sigma");
        return names;
    }

private:
    // One pass computing the log-density and, when grad != nullptr, its
    // gradient in z-space.
    double evaluate(const Vec& z, Vec* grad) const {
        const int m = basis_.dim_w;
        const Vec c = z.head(d_);
        const double zsig = z[d_ + m];
        const double sigma = std::exp(zsig);

        double lp = 0.0;
        double dlp_dsigma = 0.0;
        Vec dlp_domega = Vec::Zero(m);

        // transforms + priors for omega
        Vec omega(m), u_omega(m);
        for (int k = 0; k < m; ++k) {
            const auto& t = omega_tf_[static_cast<std::size_t>(k)];
            double dj, lj;
            omega[k] = t.constrain(z[d_ + k], dj, lj);
            u_omega[k] = t.to_unit(omega[k]);
            lp += lj;
            if (grad) (*grad)[d_ + k] += dj;
            const auto& p = prior_.omega[static_cast<std::size_t>(k)];
            lp += truncnormal_lpdf(omega[k], p.loc, p.scale, p.lower, p.upper);
            dlp_domega[k] += -(omega[k] - p.loc) / (p.scale * p.scale);
        }

        // sigma transform + prior
        lp += zsig; // log-Jacobian of sigma = exp(z)
        lp += halfnormal_lpdf(sigma, prior_.sigma.scale);
        dlp_dsigma += -sigma / (prior_.sigma.scale * prior_.sigma.scale);

        // coefficient prior
        for (int i = 0; i < d_; ++i) {
            const double sc = prior_.coeff_scale(i);
            lp += normal_lpdf(c[i], prior_.coeff.loc, sc);
            if (grad) (*grad)[i] += -(c[i] - prior_.coeff.loc) / (sc * sc);
        }

        const double inv_var = 1.0 / (sigma * sigma);

        if (use_sim_) {
            const Vec mu = sim_psi_ * c;
            const Vec r = sim_target_ - mu;
            const double ss = r.squaredNorm();
            const double n = static_cast<double>(sim_target_.size());
            const double ll = -n * (0.5 * kLogTwoPi + std::log(sigma)) - 0.5 * ss * inv_var;
            lp += w_.alpha_s * ll;
            dlp_dsigma += w_.alpha_s * (-n / sigma + ss * inv_var / sigma);
            if (grad) grad->head(d_) += (w_.alpha_s * inv_var) * (sim_psi_.transpose() * r);
        }

        if (use_real_) {
            Vec pw;
            std::vector<Vec> dpw;
            real_split_.latent_factors(u_omega, pw, grad ? &dpw : nullptr);
            const Vec cw = c.cwiseProduct(pw);
            const Vec mu = real_split_.px * cw;
            const Vec r = real_target_ - mu;
            const double ss = r.squaredNorm();
            const double n = static_cast<double>(real_target_.size());
            double ll = -n * (0.5 * kLogTwoPi + std::log(sigma)) - 0.5 * ss * inv_var;
            lp += w_.alpha_r * ll;
            dlp_dsigma += w_.alpha_r * (-n / sigma + ss * inv_var / sigma);
            if (grad) {
                const Vec pxr = real_split_.px.transpose() * r; // d
                grad->head(d_) += (w_.alpha_r * inv_var) * pxr.cwiseProduct(pw);
                for (int k = 0; k < m; ++k) {
                    const double dll_du =
                        inv_var * r.dot(real_split_.px * c.cwiseProduct(dpw[static_cast<std::size_t>(k)]));
                    dlp_domega[k] += w_.alpha_r * dll_du *
                                     omega_tf_[static_cast<std::size_t>(k)].dunit_domega();
                }
            }
        }

        lp += lognormal_shift_constant();

        if (grad) {
            for (int k = 0; k < m; ++k)
                (*grad)[d_ + k] += dlp_domega[k] * omega_tf_[static_cast<std::size_t>(k)].dconstrain_dz(z[d_ + k]);
            (*grad)[d_ + m] = dlp_dsigma * sigma + 1.0;
        }
        return lp;
    }

    double lognormal_shift_constant() const {
        if (family_.kind != Family::LogNormal) return 0.0;
        // -sum log(y+offset) terms, power-scaled like their likelihoods
        double c = 0.0;
        if (use_sim_) c += w_.alpha_s * sim_const_;
        if (use_real_) c += w_.alpha_r * real_const_;
        return c;
    }

    SurrogateBasis basis_;
    LikelihoodFamily family_;
    PriorSpec prior_;
    WeightingConfig w_;
    int d_ = 0;
    bool use_sim_ = false;
    bool use_real_ = false;
    Mat sim_psi_;
    Vec sim_target_;
    detail::SplitBasisData real_split_;
    Vec real_target_;
    double sim_const_ = 0.0;
    double real_const_ = 0.0;

    std::vector<detail::OmegaTransform> omega_tf_;
};

/// Refinement target over (omega_r, sigma) for one fixed coefficient draw
/// c^(s).  Structurally this only ever sees the original PriorSpec, never the
/// first-step posterior of the intermediate (omega'_r, sigma').
class RefinementModel {
public:
    RefinementModel(SurrogateBasis basis, LikelihoodFamily family, PriorSpec prior,
                    Vec coeffs_fixed, const RealDataset& real)
        : basis_(std::move(basis)), family_(family), prior_(std::move(prior)),
          coeffs_(std::move(coeffs_fixed)) {
        basis_.validate();
        prior_.validate();
        if (static_cast<std::size_t>(coeffs_.size()) != basis_.set.size())
            throw std::invalid_argument("RefinementModel: coefficient count != basis size");
        real.validate();
        split_.build(real.x, basis_);
        target_ = detail::transform_outputs(real.y, family_, "real");
        if (family_.kind == Family::LogNormal) shift_const_ = -target_.sum();
        for (int k = 0; k < basis_.dim_w; ++k) {
            const auto& p = prior_.omega[static_cast<std::size_t>(k)];
            detail::OmegaTransform t;
            t.lower = p.lower;
            t.span = p.upper - p.lower;
            t.basis_lo = basis_.scaling.bound(basis_.dim_x + k).lo;
            t.basis_hi = basis_.scaling.bound(basis_.dim_x + k).hi;
            omega_tf_.push_back(t);
        }
    }

    int n_params() const { return basis_.dim_w + 1; }

    Vec constrain(const Vec& z) const {
        const int m = basis_.dim_w;
        Vec theta(m + 1);
        for (int k = 0; k < m; ++k) {
            double dj, lj;
            theta[k] = omega_tf_[static_cast<std::size_t>(k)].constrain(z[k], dj, lj);
        }
        theta[m] = std::exp(z[m]);
        return theta;
    }

    Vec unconstrain(const Vec& theta) const {
        const int m = basis_.dim_w;
        Vec z(m + 1);
        for (int k = 0; k < m; ++k) {
            const auto& t = omega_tf_[static_cast<std::size_t>(k)];
            double frac = (theta[k] - t.lower) / t.span;
            frac = std::clamp(frac, 1e-12, 1.0 - 1e-12);
            z[k] = logit(frac);
        }
        z[m] = std::log(theta[m]);
        return z;
    }

    double log_density(const Vec& z) const { return evaluate(z, nullptr); }

    Vec gradient(const Vec& z) const {
        Vec g = Vec::Zero(n_params());
        evaluate(z, &g);
        return g;
    }

    Vec initial_draw(std::mt19937_64& rng) const {
        std::normal_distribution<double> jitter(0.0, 0.1);
        const int m = basis_.dim_w;
        Vec z(m + 1);
        for (int k = 0; k < m; ++k) {
            const auto& p = prior_.omega[static_cast<std::size_t>(k)];
            const double span = p.upper - p.lower;
            const double med = std::clamp(p.loc, p.lower + 0.01 * span, p.upper - 0.01 * span);
            z[k] = logit((med - p.lower) / span) + jitter(rng);
        }
        z[m] = std::log(prior_.sigma.scale * 0.6744897501960817) + jitter(rng);
        return z;
    }

private:
    double evaluate(const Vec& z, Vec* grad) const {
        const int m = basis_.dim_w;
        const double zsig = z[m];
        const double sigma = std::exp(zsig);

        double lp = zsig + halfnormal_lpdf(sigma, prior_.sigma.scale) + shift_const_;
        double dlp_dsigma = -sigma / (prior_.sigma.scale * prior_.sigma.scale);
        Vec dlp_domega = Vec::Zero(m);
        Vec omega(m), u_omega(m);
        for (int k = 0; k < m; ++k) {
            const auto& t = omega_tf_[static_cast<std::size_t>(k)];
            double dj, lj;
            omega[k] = t.constrain(z[k], dj, lj);
            u_omega[k] = t.to_unit(omega[k]);
            lp += lj;
            if (grad) (*grad)[k] += dj;
            const auto& p = prior_.omega[static_cast<std::size_t>(k)];
            lp += truncnormal_lpdf(omega[k], p.loc, p.scale, p.lower, p.upper);
            dlp_domega[k] += -(omega[k] - p.loc) / (p.scale * p.scale);
        }

        Vec pw;
        std::vector<Vec> dpw;
        split_.latent_factors(u_omega, pw, grad ? &dpw : nullptr);
        const Vec mu = split_.px * coeffs_.cwiseProduct(pw);
        const Vec r = target_ - mu;
        const double ss = r.squaredNorm();
        const double n = static_cast<double>(target_.size());
        const double inv_var = 1.0 / (sigma * sigma);
        lp += -n * (0.5 * kLogTwoPi + std::log(sigma)) - 0.5 * ss * inv_var;
        dlp_dsigma += -n / sigma + ss * inv_var / sigma;
        if (grad) {
            for (int k = 0; k < m; ++k) {
                const double dll_du =
                    inv_var * r.dot(split_.px * coeffs_.cwiseProduct(dpw[static_cast<std::size_t>(k)]));
                dlp_domega[k] += dll_du * omega_tf_[static_cast<std::size_t>(k)].dunit_domega();
            }
            for (int k = 0; k < m; ++k)
                (*grad)[k] += dlp_domega[k] * omega_tf_[static_cast<std::size_t>(k)].dconstrain_dz(z[k]);
            (*grad)[m] = dlp_dsigma * sigma + 1.0;
        }
        return lp;
    }

    SurrogateBasis basis_;
    LikelihoodFamily family_;
    PriorSpec prior_;
    Vec coeffs_;
    detail::SplitBasisData split_;
    Vec target_;
    double shift_const_ = 0.0;
    std::vector<detail::OmegaTransform> omega_tf_;
};

/// Collapsed form of the joint power-scaled posterior.  Conditional on
/// (omega_r, sigma) the coefficients are exactly Gaussian (power-scaled
/// Normal and LogNormal likelihoods are both Gaussian in the transformed
/// outputs), so c is integrated out analytically and MCMC only has to cover
/// the low-dimensional (omega_r, sigma) marginal.  Coefficient draws are then
/// exact samples from their Gaussian conditional, which reproduces the joint
/// posterior without ever walking the ill-conditioned coefficient ridge.
class CollapsedJointModel {
public:
    CollapsedJointModel(SurrogateBasis basis, LikelihoodFamily family, PriorSpec prior,
                        WeightingConfig w, const SimulationDataset* sim, const RealDataset* real)
        : basis_(std::move(basis)), family_(family), prior_(std::move(prior)), w_(w) {
        basis_.validate();
        prior_.validate();
        if (static_cast<int>(prior_.omega.size()) != basis_.dim_w)
            throw std::invalid_argument("CollapsedJointModel: latent prior count != latent dims");
        d_ = static_cast<int>(basis_.set.size());
        use_sim_ = w_.alpha_s > 0.0;
        use_real_ = w_.alpha_r > 0.0;
        if (use_sim_) {
            if (!sim || sim->size() == 0)
                throw std::invalid_argument(
                    "CollapsedJointModel: empty simulation data with alpha_s > 0");
            sim->validate();
            Mat scaled(sim->size(), basis_.set.dims());
            for (Eigen::Index i = 0; i < sim->size(); ++i) {
                Vec raw(basis_.set.dims());
                raw.head(basis_.dim_x) = sim->x.row(i).transpose();
                raw.tail(basis_.dim_w) = sim->omega.row(i).transpose();
                scaled.row(i) = basis_.scaling.scale_unchecked(raw).transpose();
            }
            const Mat psi = basis_matrix(scaled, basis_.set);
            const Vec t = detail::transform_outputs(sim->y, family_, "simulation");
            gram_sim_ = psi.transpose() * psi;
            proj_sim_ = psi.transpose() * t;
            ss_sim_ = t.squaredNorm();
            n_sim_ = static_cast<double>(t.size());
            if (family_.kind == Family::LogNormal) const_sim_ = -t.sum();
        }
        if (use_real_) {
            if (!real || real->size() == 0)
                throw std::invalid_argument("CollapsedJointModel: empty real data with alpha_r > 0");
            real->validate();
            split_.build(real->x, basis_);
            const Vec t = detail::transform_outputs(real->y, family_, "real");
            gram_x_ = split_.px.transpose() * split_.px;
            proj_x_ = split_.px.transpose() * t;
            ss_real_ = t.squaredNorm();
            n_real_ = static_cast<double>(t.size());
            if (family_.kind == Family::LogNormal) const_real_ = -t.sum();
        }
        for (int k = 0; k < basis_.dim_w; ++k) {
            const auto& p = prior_.omega[static_cast<std::size_t>(k)];
            detail::OmegaTransform t;
            t.lower = p.lower;
            t.span = p.upper - p.lower;
            t.basis_lo = basis_.scaling.bound(basis_.dim_x + k).lo;
            t.basis_hi = basis_.scaling.bound(basis_.dim_x + k).hi;
            omega_tf_.push_back(t);
        }
    }

    int n_params() const { return basis_.dim_w + 1; } // the (omega_r, sigma) marginal
    int n_coeffs() const { return d_; }
    int dim_w() const { return basis_.dim_w; }

    Vec constrain(const Vec& z) const {
        const int m = basis_.dim_w;
        Vec theta(m + 1);
        for (int k = 0; k < m; ++k) {
            double dj, lj;
            theta[k] = omega_tf_[static_cast<std::size_t>(k)].constrain(z[k], dj, lj);
        }
        theta[m] = std::exp(z[m]);
        return theta;
    }

    double log_density(const Vec& z) const {
        const int m = basis_.dim_w;
        const double zsig = z[m];
        const double sigma = std::exp(zsig);
        double lp = zsig + halfnormal_lpdf(sigma, prior_.sigma.scale);
        Vec omega(m), u_omega(m);
        for (int k = 0; k < m; ++k) {
            const auto& t = omega_tf_[static_cast<std::size_t>(k)];
            double dj, lj;
            omega[k] = t.constrain(z[k], dj, lj);
            u_omega[k] = t.to_unit(omega[k]);
            lp += lj;
            const auto& p = prior_.omega[static_cast<std::size_t>(k)];
            lp += truncnormal_lpdf(omega[k], p.loc, p.scale, p.lower, p.upper);
        }
        if (!std::isfinite(lp)) return kNegInf;
        return lp + marginal_loglik(u_omega, sigma);
    }

    /// Exact draw of the coefficients given constrained (omega_r, sigma).
    Vec draw_coeffs(const Vec& omega, double sigma, std::mt19937_64& rng) const {
        Eigen::LLT<Mat> llt;
        Vec mean;
        factorize(scaled_omega(omega), sigma, llt, mean);
        std::normal_distribution<double> g(0.0, 1.0);
        Vec xi(d_);
        for (int i = 0; i < d_; ++i) xi[i] = g(rng);
        // c = mean + L^-T xi has covariance Lambda^-1
        return mean + llt.matrixU().solve(xi);
    }

    Vec coeff_mean(const Vec& omega, double sigma) const {
        Eigen::LLT<Mat> llt;
        Vec mean;
        factorize(scaled_omega(omega), sigma, llt, mean);
        return mean;
    }

    /// Gaussian log-density of c given (omega_r, sigma); together with
    /// log_density this reconstructs the full joint target up to a
    /// state-independent constant.
    double conditional_coeff_lpdf(const Vec& c, const Vec& omega, double sigma) const {
        Eigen::LLT<Mat> llt;
        Vec mean;
        factorize(scaled_omega(omega), sigma, llt, mean);
        const Mat l = llt.matrixL();
        double logdet = 0.0;
        for (int i = 0; i < d_; ++i) logdet += 2.0 * std::log(l(i, i));
        const Vec r = c - mean;
        const Vec lr = l.transpose() * r;
        return -0.5 * d_ * kLogTwoPi + 0.5 * logdet - 0.5 * lr.squaredNorm();
    }

    Vec initial_draw(std::mt19937_64& rng) const {
        std::normal_distribution<double> jitter(0.0, 0.1);
        const int m = basis_.dim_w;
        Vec z(m + 1);
        for (int k = 0; k < m; ++k) {
            const auto& p = prior_.omega[static_cast<std::size_t>(k)];
            const double span = p.upper - p.lower;
            const double med = std::clamp(p.loc, p.lower + 0.01 * span, p.upper - 0.01 * span);
            z[k] = logit((med - p.lower) / span) + jitter(rng);
        }
        z[m] = std::log(prior_.sigma.scale * 0.6744897501960817) + jitter(rng);
        return z;
    }

private:
    Vec scaled_omega(const Vec& omega) const {
        Vec u(basis_.dim_w);
        for (int k = 0; k < basis_.dim_w; ++k)
            u[k] = omega_tf_[static_cast<std::size_t>(k)].to_unit(omega[k]);
        return u;
    }

    // posterior precision Lambda = Psi' W Psi / sigma^2 + P0 and mean, with
    // P0 the diagonal prior precision
    void factorize(const Vec& u_omega, double sigma, Eigen::LLT<Mat>& llt, Vec& mean) const {
        const double inv_var = 1.0 / (sigma * sigma);
        Mat lambda = Mat::Zero(d_, d_);
        Vec b(d_);
        for (int i = 0; i < d_; ++i) {
            const double s2 = prior_.coeff_scale(i) * prior_.coeff_scale(i);
            lambda(i, i) = 1.0 / s2;
            b[i] = prior_.coeff.loc / s2;
        }
        if (use_sim_) {
            lambda.noalias() += (w_.alpha_s * inv_var) * gram_sim_;
            b.noalias() += (w_.alpha_s * inv_var) * proj_sim_;
        }
        if (use_real_) {
            Vec pw;
            split_.latent_factors(u_omega, pw, nullptr);
            lambda.noalias() +=
                (w_.alpha_r * inv_var) * gram_x_.cwiseProduct(pw * pw.transpose());
            b.noalias() += (w_.alpha_r * inv_var) * proj_x_.cwiseProduct(pw);
        }
        llt.compute(lambda);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("CollapsedJointModel: coefficient precision not PD");
        mean = llt.solve(b);
    }

    double marginal_loglik(const Vec& u_omega, double sigma) const {
        const double inv_var = 1.0 / (sigma * sigma);
        const double per_point = -0.5 * kLogTwoPi - std::log(sigma);

        Mat lambda = Mat::Zero(d_, d_);
        Vec b(d_);
        double lp = 0.0;
        for (int i = 0; i < d_; ++i) {
            const double s2 = prior_.coeff_scale(i) * prior_.coeff_scale(i);
            lambda(i, i) = 1.0 / s2;
            b[i] = prior_.coeff.loc / s2;
            lp += -0.5 * prior_.coeff.loc * prior_.coeff.loc / s2 - 0.5 * std::log(s2);
        }
        if (use_sim_) {
            lambda.noalias() += (w_.alpha_s * inv_var) * gram_sim_;
            b.noalias() += (w_.alpha_s * inv_var) * proj_sim_;
            lp += w_.alpha_s * (n_sim_ * per_point - 0.5 * ss_sim_ * inv_var + const_sim_);
        }
        if (use_real_) {
            Vec pw;
            split_.latent_factors(u_omega, pw, nullptr);
            lambda.noalias() +=
                (w_.alpha_r * inv_var) * gram_x_.cwiseProduct(pw * pw.transpose());
            b.noalias() += (w_.alpha_r * inv_var) * proj_x_.cwiseProduct(pw);
            lp += w_.alpha_r * (n_real_ * per_point - 0.5 * ss_real_ * inv_var + const_real_);
        }
        Eigen::LLT<Mat> llt(lambda);
        if (llt.info() != Eigen::Success) return kNegInf;
        const Mat l = llt.matrixL();
        double logdet = 0.0;
        for (int i = 0; i < d_; ++i) logdet += 2.0 * std::log(l(i, i));
        const Vec mean = llt.solve(b);
        return lp + 0.5 * b.dot(mean) - 0.5 * logdet;
    }

    SurrogateBasis basis_;
    LikelihoodFamily family_;
    PriorSpec prior_;
    WeightingConfig w_;
    int d_ = 0;
    bool use_sim_ = false;
    bool use_real_ = false;
    Mat gram_sim_;
    Vec proj_sim_;
    double ss_sim_ = 0.0, n_sim_ = 0.0, const_sim_ = 0.0;
    detail::SplitBasisData split_;
    Mat gram_x_;
    Vec proj_x_;
    double ss_real_ = 0.0, n_real_ = 0.0, const_real_ = 0.0;
    std::vector<detail::OmegaTransform> omega_tf_;
};

} // namespace hybsur

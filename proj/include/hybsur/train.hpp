#pragma once

#include <memory>
#include <utility>

#include "hybsur/model.hpp"
#include "hybsur/sampler.hpp"

namespace hybsur {

// ---------------------------------------------------------------------------
// Surrogate specification
// ---------------------------------------------------------------------------

/// Everything needed to pose one surrogate model: named inputs (known x
/// components first, latent omega components after), the basis degree and
/// input scaling, the observation family and the priors.
struct SurrogateSpec {
    std::vector<std::string> x_names;
    std::vector<std::string> omega_names;
    int max_degree = 5;
    ScalingSpec scaling; // x dims then omega dims
    LikelihoodFamily family;
    PriorSpec prior;
    // Interpret coeff priors as acting on the orthonormal Legendre basis
    // (the standard PCE convention): term i then carries an effective scale
    // of coeff.scale times prod_k sqrt(2 alpha_ik + 1) on the unnormalized
    // basis this library evaluates.
    bool orthonormal_prior = false;

    int dim_x() const { return static_cast<int>(x_names.size()); }
    int dim_w() const { return static_cast<int>(omega_names.size()); }
    int dims() const { return dim_x() + dim_w(); }

    MultiIndexSet index_set() const { return build_index_set(dims(), max_degree); }

    SurrogateBasis basis() const {
        SurrogateBasis b;
        b.set = index_set();
        b.scaling = scaling;
        b.dim_x = dim_x();
        b.dim_w = dim_w();
        return b;
    }

    /// Prior with the per-term coefficient scales resolved.
    PriorSpec effective_prior() const {
        PriorSpec p = prior;
        if (orthonormal_prior && p.coeff_scales.size() == 0) {
            const auto set = index_set();
            p.coeff_scales.resize(static_cast<Eigen::Index>(set.size()));
            for (std::size_t i = 0; i < set.size(); ++i) {
                double norm = 1.0;
                for (int v : set[i]) norm *= std::sqrt(2.0 * v + 1.0);
                p.coeff_scales[static_cast<Eigen::Index>(i)] = p.coeff.scale * norm;
            }
        }
        return p;
    }

    std::vector<std::string> parameter_names() const {
        std::vector<std::string> names;
        const std::size_t d = index_set().size();
        for (std::size_t i = 0; i < d; ++i) names.push_back(detail::concat("c", i));
        for (const auto& n : omega_names) names.push_back(n);
        names.push_back("sigma");
        return names;
    }

    void validate() const {
        if (x_names.empty()) throw std::invalid_argument("SurrogateSpec: needs at least one known input");
        if (scaling.dims() != dims())
            throw std::invalid_argument("SurrogateSpec: scaling dims != named input dims");
        if (static_cast<int>(prior.omega.size()) != dim_w())
            throw std::invalid_argument("SurrogateSpec: one omega prior per latent input required");
        prior.validate();
    }
};

// ---------------------------------------------------------------------------
// Convergence gate
// ---------------------------------------------------------------------------

struct GateConfig {
    double rhat_threshold = 1.05;
    bool enforce = true;
};

struct ConvergenceReport {
    std::vector<std::pair<std::string, double>> rhat; // degenerate reported as +inf
    double rhat_max = 0.0;

    bool passes(double threshold) const { return rhat_max <= threshold; }
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(std::string msg, ConvergenceReport rep)
        : std::runtime_error(std::move(msg)), report(std::move(rep)) {}
    ConvergenceReport report;
};

inline ConvergenceReport convergence_report(const PosteriorDraws& draws) {
    ConvergenceReport rep;
    const auto rhats = split_rhat(draws);
    for (std::size_t p = 0; p < rhats.size(); ++p) {
        const double v =
            rhats[p].has_value() ? *rhats[p] : std::numeric_limits<double>::infinity();
        rep.rhat.emplace_back(draws.parameter_names[p], v);
        rep.rhat_max = std::max(rep.rhat_max, v);
    }
    return rep;
}

namespace detail {

inline ConvergenceReport apply_gate(const PosteriorDraws& draws, const GateConfig& gate,
                                    const char* stage) {
    const auto rep = convergence_report(draws);
    if (gate.enforce && !rep.passes(gate.rhat_threshold))
        throw ConvergenceError(concat(stage, ": split R-hat ", rep.rhat_max,
                                      " exceeds the ", gate.rhat_threshold, " gate"),
                               rep);
    return rep;
}

inline TargetFunction make_target(std::shared_ptr<const JointSurrogateModel> m,
                                  std::vector<std::string> names) {
    TargetFunction t;
    t.dim = m->n_params();
    t.log_density = [m](const Vec& z) { return m->log_density(z); };
    t.gradient = [m](const Vec& z) { return m->gradient(z); };
    t.constrain = [m](const Vec& z) { return m->constrain(z); };
    t.names = std::move(names);
    return t;
}

inline TargetFunction make_target(std::shared_ptr<const RefinementModel> m,
                                  std::vector<std::string> names) {
    TargetFunction t;
    t.dim = m->n_params();
    t.log_density = [m](const Vec& z) { return m->log_density(z); };
    t.gradient = [m](const Vec& z) { return m->gradient(z); };
    t.constrain = [m](const Vec& z) { return m->constrain(z); };
    t.names = std::move(names);
    return t;
}

inline TargetFunction make_target(std::shared_ptr<const CollapsedJointModel> m,
                                  std::vector<std::string> names) {
    TargetFunction t;
    t.dim = m->n_params();
    t.log_density = [m](const Vec& z) { return m->log_density(z); };
    t.constrain = [m](const Vec& z) { return m->constrain(z); };
    t.names = std::move(names);
    return t;
}

/// Run the collapsed (omega, sigma) marginal and complete every draw with an
/// exact conditional coefficient draw; the assembled rows follow the full
/// joint target.
inline PosteriorDraws run_collapsed(const CollapsedJointModel& model,
                                    std::shared_ptr<const CollapsedJointModel> shared,
                                    const SurrogateSpec& spec, const ChainConfig& cfg,
                                    StageTag tag) {
    std::vector<std::string> marg_names(spec.omega_names);
    marg_names.push_back("sigma");
    const auto target = make_target(shared, marg_names);
    const auto marg = run_chains(
        target, cfg, [&model](std::mt19937_64& rng) { return model.initial_draw(rng); }, tag);

    const int m = model.dim_w();
    const Eigen::Index d = model.n_coeffs();
    PosteriorDraws out;
    out.stage_tag = tag;
    out.parameter_names = spec.parameter_names();
    out.accept_rates = marg.accept_rates;
    for (int c = 0; c < marg.n_chains(); ++c) {
        const Mat& src = marg.chains[static_cast<std::size_t>(c)];
        Mat dst(src.rows(), d + m + 1);
        std::mt19937_64 rng(derive_seed(cfg.seed, 0xC0EFFull + static_cast<std::uint64_t>(c)));
        for (Eigen::Index r = 0; r < src.rows(); ++r) {
            const Vec omega = src.row(r).head(m).transpose();
            const double sigma = src(r, m);
            dst.row(r).head(d) = model.draw_coeffs(omega, sigma, rng).transpose();
            dst.row(r).segment(d, m) = omega.transpose();
            dst(r, d + m) = sigma;
        }
        out.chains.push_back(std::move(dst));
    }
    out.validate();
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Chain presets
// ---------------------------------------------------------------------------

enum class ChainPreset { Desk, Paper };

struct TrainPresets {
    ChainConfig stage1;
    ChainConfig stage2;
    int thin_to = 200;
};

/// Desk-scale preset: cheap enough for a laptop sweep while keeping the
/// convergence gates meaningful.
inline TrainPresets desk_preset(std::uint64_t seed) {
    TrainPresets p;
    p.stage1.n_chains = 4;
    p.stage1.warmup = 500;
    p.stage1.draws_per_chain = 250;
    p.stage1.kernel = Kernel::Hmc; // low-dimensional collapsed marginal
    p.stage1.max_leapfrog = 8;
    p.stage1.seed = derive_seed(seed, 0xA11CE);
    p.stage2.n_chains = 1;
    p.stage2.warmup = 200;
    p.stage2.draws_per_chain = 50;
    p.stage2.kernel = Kernel::Hmc; // analytic gradients; mixes the correlated
    p.stage2.max_leapfrog = 8;     // latent-rate targets within the short budget
    p.stage2.seed = derive_seed(seed, 0xB0B);
    p.thin_to = 200;
    return p;
}

/// Full-scale preset: stage 2 runs the same 4 x (1000 + 250) setting as
/// stage 1 and keeps the last sample of the fourth chain; all stage-1 draws
/// are retained for refinement.
inline TrainPresets paper_preset(std::uint64_t seed) {
    TrainPresets p;
    p.stage1.n_chains = 4;
    p.stage1.warmup = 1000;
    p.stage1.draws_per_chain = 250;
    p.stage1.kernel = Kernel::Hmc;
    p.stage1.max_leapfrog = 8;
    p.stage1.seed = derive_seed(seed, 0xA11CE);
    p.stage2 = p.stage1;
    p.stage2.seed = derive_seed(seed, 0xB0B);
    p.thin_to = 1000;
    return p;
}

inline TrainPresets make_presets(ChainPreset preset, std::uint64_t seed) {
    return preset == ChainPreset::Desk ? desk_preset(seed) : paper_preset(seed);
}

// ---------------------------------------------------------------------------
// Training pipelines
// ---------------------------------------------------------------------------

/// Data-driven surrogate: posterior over (c_R, sigma_R) from real data only.
/// Sampled in collapsed form: MCMC covers the sigma marginal and the
/// coefficients are exact conjugate draws.
inline PosteriorDraws train_data_driven(const RealDataset& real, const SurrogateSpec& spec,
                                        const ChainConfig& cfg, const GateConfig& gate = {}) {
    spec.validate();
    if (spec.dim_w() != 0)
        throw std::invalid_argument("train_data_driven: spec must not declare latent inputs");
    if (real.size() < 1) throw std::invalid_argument("train_data_driven: empty real dataset");
    auto model = std::make_shared<const CollapsedJointModel>(
        spec.basis(), spec.family, spec.effective_prior(), compute_scaling(0.0), nullptr, &real);
    auto draws = detail::run_collapsed(*model, model, spec, cfg, StageTag::DataDriven);
    detail::apply_gate(draws, gate, "train_data_driven");
    return draws;
}

/// Stage 1 of the power-scaling pipeline: joint draws of (c, omega'_r, sigma')
/// from the likelihood-tempered target at the given beta, sampled in
/// collapsed form (exact Gaussian conditional for c).
inline PosteriorDraws train_power_scaled(const SimulationDataset& sim, const RealDataset& real,
                                         double beta, const SurrogateSpec& spec,
                                         const ChainConfig& cfg, const GateConfig& gate = {}) {
    spec.validate();
    const auto w = compute_scaling(beta);
    auto model = std::make_shared<const CollapsedJointModel>(spec.basis(), spec.family,
                                                             spec.effective_prior(), w, &sim,
                                                             &real);
    auto draws = detail::run_collapsed(*model, model, spec, cfg, StageTag::JointTraining);
    detail::apply_gate(draws, gate, "train_power_scaled");
    return draws;
}

enum class FitMethod { PowerScaling, PredictiveWeightingComponents };

/// Paired two-step fit: stage-1 joint draws plus, for each retained
/// coefficient draw c^(s), the final state (omega_r^(s), sigma_r^(s)) of an
/// inner refinement chain conditioned on that c^(s).  Rows are paired
/// index-for-index and the container is immutable after construction.
class HybridFit {
public:
    HybridFit(FitMethod method, WeightingConfig weighting, SurrogateSpec spec,
              PosteriorDraws joint, std::vector<Eigen::Index> retained, PosteriorDraws refined)
        : method_(method), weighting_(weighting), spec_(std::move(spec)),
          joint_(std::move(joint)), retained_(std::move(retained)), refined_(std::move(refined)) {
        if (joint_.stage_tag != StageTag::JointTraining)
            throw std::invalid_argument("HybridFit: joint draws must carry the JointTraining tag");
        if (refined_.stage_tag != StageTag::Refinement)
            throw std::invalid_argument("HybridFit: refined draws must carry the Refinement tag");
        if (refined_.total_draws() != static_cast<Eigen::Index>(retained_.size()))
            throw std::invalid_argument(
                "HybridFit: refined row count must equal the retained joint draw count");
        joint_pooled_ = joint_.pooled();
        refined_pooled_ = refined_.pooled();
        for (Eigen::Index idx : retained_)
            if (idx < 0 || idx >= joint_pooled_.rows())
                throw std::invalid_argument("HybridFit: retained index out of range");
        d_ = static_cast<Eigen::Index>(spec_.index_set().size());
        if (joint_pooled_.cols() != d_ + spec_.dim_w() + 1)
            throw std::invalid_argument("HybridFit: joint draw width disagrees with spec");
        if (refined_pooled_.cols() != spec_.dim_w() + 1)
            throw std::invalid_argument("HybridFit: refined draw width disagrees with spec");
    }

    FitMethod method() const { return method_; }
    const WeightingConfig& weighting() const { return weighting_; }
    const SurrogateSpec& spec() const { return spec_; }
    const PosteriorDraws& joint_draws() const { return joint_; }
    const PosteriorDraws& refined_draws() const { return refined_; }
    const std::vector<Eigen::Index>& retained_indices() const { return retained_; }

    Eigen::Index n_pairs() const { return refined_pooled_.rows(); }
    Vec coeffs(Eigen::Index s) const {
        return joint_pooled_.row(retained_[static_cast<std::size_t>(s)]).head(d_).transpose();
    }
    Vec omega(Eigen::Index s) const {
        return refined_pooled_.row(s).head(spec_.dim_w()).transpose();
    }
    double sigma(Eigen::Index s) const { return refined_pooled_(s, refined_pooled_.cols() - 1); }

private:
    FitMethod method_;
    WeightingConfig weighting_;
    SurrogateSpec spec_;
    PosteriorDraws joint_;
    std::vector<Eigen::Index> retained_;
    PosteriorDraws refined_;
    Mat joint_pooled_;
    Mat refined_pooled_;
    Eigen::Index d_ = 0;
};

/// Stage 2: thin the joint c-draws to `thin_to` (evenly strided), run one
/// inner chain per retained draw on the fixed-c inference target initialized
/// at the paired stage-1 state, and keep the final state of the final chain.
/// Inner runs failing with a NaN target are dropped; more than 5% dropped
/// aborts the refinement.
inline HybridFit refine_inference(const PosteriorDraws& joint, const RealDataset& real,
                                  const SurrogateSpec& spec, const ChainConfig& cfg2, int thin_to,
                                  const WeightingConfig& weighting,
                                  FitMethod method = FitMethod::PowerScaling,
                                  const GateConfig& gate = {}) {
    spec.validate();
    if (joint.stage_tag != StageTag::JointTraining)
        throw std::invalid_argument("refine_inference: joint draws must be stage-1 output");
    const Eigen::Index s1 = joint.total_draws();
    if (thin_to < 1 || thin_to > s1)
        throw std::invalid_argument("refine_inference: thin_to must be in [1, joint draw count]");

    const Mat pooled = joint.pooled();
    const Eigen::Index d = static_cast<Eigen::Index>(spec.index_set().size());
    const int m = spec.dim_w();
    std::vector<Eigen::Index> retained;
    retained.reserve(static_cast<std::size_t>(thin_to));
    for (int i = 0; i < thin_to; ++i)
        retained.push_back(static_cast<Eigen::Index>(
            (static_cast<long long>(i) * s1) / thin_to));

    const SurrogateBasis basis = spec.basis();
    Mat refined(thin_to, m + 1);
    std::vector<char> ok(static_cast<std::size_t>(thin_to), 0);
    std::vector<double> accepts(static_cast<std::size_t>(thin_to), 0.0);

    auto run_one = [&](int i) {
        const Eigen::Index row = retained[static_cast<std::size_t>(i)];
        const Vec c = pooled.row(row).head(d).transpose();
        auto model = std::make_shared<const RefinementModel>(basis, spec.family,
                                                             spec.effective_prior(), c, real);
        std::vector<std::string> names(spec.omega_names);
        names.push_back("sigma");
        const auto target = detail::make_target(model, names);
        Vec theta0(m + 1);
        theta0.head(m) = pooled.row(row).segment(d, m).transpose();
        theta0[m] = pooled(row, d + m);
        ChainConfig inner = cfg2;
        inner.seed = derive_seed(cfg2.seed, static_cast<std::uint64_t>(i));
        inner.threads = 1;
        try {
            const auto draws =
                run_chains(target, inner, model->unconstrain(theta0), StageTag::Refinement);
            const Mat& last_chain = draws.chains.back();
            refined.row(i) = last_chain.row(last_chain.rows() - 1);
            accepts[static_cast<std::size_t>(i)] = draws.accept_rates.back();
            ok[static_cast<std::size_t>(i)] = 1;
        } catch (const SamplerError&) {
            ok[static_cast<std::size_t>(i)] = 0;
        }
    };

    const int nthreads = detail::resolve_threads(cfg2.threads, thin_to);
    if (nthreads <= 1) {
        for (int i = 0; i < thin_to; ++i) run_one(i);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back([&] {
                for (int i = next.fetch_add(1); i < thin_to; i = next.fetch_add(1)) run_one(i);
            });
        for (auto& th : pool) th.join();
    }

    std::vector<Eigen::Index> kept_rows;
    for (int i = 0; i < thin_to; ++i)
        if (ok[static_cast<std::size_t>(i)]) kept_rows.push_back(i);
    const int dropped = thin_to - static_cast<int>(kept_rows.size());
    if (dropped > 0.05 * thin_to)
        throw std::runtime_error(detail::concat("refine_inference: ", dropped, " of ", thin_to,
                                                " inner chains diverged"));

    Mat refined_kept(static_cast<Eigen::Index>(kept_rows.size()), m + 1);
    std::vector<Eigen::Index> retained_kept;
    double accept_sum = 0.0;
    for (std::size_t k = 0; k < kept_rows.size(); ++k) {
        refined_kept.row(static_cast<Eigen::Index>(k)) = refined.row(kept_rows[k]);
        retained_kept.push_back(retained[static_cast<std::size_t>(kept_rows[k])]);
        accept_sum += accepts[static_cast<std::size_t>(kept_rows[k])];
    }

    PosteriorDraws refined_draws;
    refined_draws.stage_tag = StageTag::Refinement;
    refined_draws.parameter_names = spec.omega_names;
    refined_draws.parameter_names.push_back("sigma");
    refined_draws.chains.push_back(std::move(refined_kept));
    refined_draws.accept_rates.push_back(kept_rows.empty() ? 0.0
                                                          : accept_sum / kept_rows.size());

    // pooled diagnostic: exchangeable final states grouped into pseudo-chains
    const Eigen::Index group = 50;
    const Eigen::Index n_groups = refined_draws.total_draws() / group;
    if (n_groups >= 2) {
        PosteriorDraws pseudo;
        pseudo.parameter_names = refined_draws.parameter_names;
        pseudo.stage_tag = StageTag::Refinement;
        const Mat& all = refined_draws.chains.front();
        for (Eigen::Index g = 0; g < n_groups; ++g)
            pseudo.chains.push_back(all.middleRows(g * group, group));
        detail::apply_gate(pseudo, gate, "refine_inference");
    }

    return HybridFit(method, weighting, spec, joint, std::move(retained_kept),
                     std::move(refined_draws));
}

/// The simulation-based two-step pipeline is, by construction, power-scaling
/// at beta = 1 followed by refinement.  Identical seeds give identical draws.
inline HybridFit train_simulation_based(const SimulationDataset& sim, const RealDataset& real,
                                        const SurrogateSpec& spec, const ChainConfig& cfg,
                                        const ChainConfig& cfg2, int thin_to,
                                        FitMethod method = FitMethod::PowerScaling,
                                        const GateConfig& gate = {}) {
    const auto joint = train_power_scaled(sim, real, 1.0, spec, cfg, gate);
    return refine_inference(joint, real, spec, cfg2, thin_to, compute_scaling(1.0), method, gate);
}

} // namespace hybsur

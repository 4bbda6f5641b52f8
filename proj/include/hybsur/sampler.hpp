#pragma once

#include <atomic>
#include <functional>
#include <optional>
#include <random>
#include <thread>

#include "hybsur/common.hpp"
#include "hybsur/distributions.hpp"

namespace hybsur {

enum class StageTag { JointTraining, Refinement, DataDriven };
enum class Adaptation { None, DiagonalScale };
enum class Kernel { RandomWalk, Hmc };

/// MCMC run shape.  Defaults are the full-scale preset (4 chains, 1000
/// warmup, 250 draws); cheaper desk presets are built in train.hpp.
struct ChainConfig {
    int n_chains = 4;
    int warmup = 1000;
    int draws_per_chain = 250;
    std::uint64_t seed = 0;
    Adaptation adaptation = Adaptation::DiagonalScale;
    Kernel kernel = Kernel::RandomWalk;
    double target_accept = 0.0; // 0 = kernel default (0.234 random walk, 0.65 gradient)
    int max_leapfrog = 16;
    int threads = 0; // 0 = min(hardware, HYBRID_SURROGATE_THREADS)

    double resolved_target_accept() const {
        if (target_accept > 0.0) return target_accept;
        return kernel == Kernel::RandomWalk ? 0.234 : 0.65;
    }
};

/// A log-density to sample from.  `gradient` is optional (finite differences
/// are substituted for the gradient kernel when absent); `constrain` maps the
/// unconstrained state to the reported parameterization (identity if absent).
struct TargetFunction {
    int dim = 0;
    std::function<double(const Vec&)> log_density;
    std::function<Vec(const Vec&)> gradient;
    std::function<Vec(const Vec&)> constrain;
    std::vector<std::string> names;
};

struct SamplerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Posterior sample container: one matrix (draws x parameters, constrained
/// space) per chain, plus provenance.
struct PosteriorDraws {
    std::vector<std::string> parameter_names;
    std::vector<Mat> chains;
    StageTag stage_tag = StageTag::JointTraining;
    std::vector<double> accept_rates;

    int n_chains() const { return static_cast<int>(chains.size()); }
    Eigen::Index n_draws() const { return chains.empty() ? 0 : chains.front().rows(); }
    Eigen::Index n_params() const { return static_cast<Eigen::Index>(parameter_names.size()); }
    Eigen::Index total_draws() const { return n_draws() * n_chains(); }

    /// Chain-major pooled matrix (chain 0 draws first).
    Mat pooled() const {
        Mat out(total_draws(), n_params());
        Eigen::Index r = 0;
        for (const Mat& c : chains) {
            out.middleRows(r, c.rows()) = c;
            r += c.rows();
        }
        return out;
    }

    int parameter_index(const std::string& name) const {
        for (std::size_t i = 0; i < parameter_names.size(); ++i)
            if (parameter_names[i] == name) return static_cast<int>(i);
        throw std::invalid_argument(detail::concat("PosteriorDraws: no parameter named ", name));
    }

    void validate() const {
        for (const Mat& c : chains) {
            if (c.cols() != n_params())
                throw std::invalid_argument("PosteriorDraws: column/name count disagree");
            if (!c.allFinite())
                throw std::invalid_argument("PosteriorDraws: non-finite draw");
        }
    }
};

using InitFn = std::function<Vec(std::mt19937_64&)>;

namespace detail {

inline int resolve_threads(int requested, int jobs) {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    int cap = env_thread_cap();
    int t = requested > 0 ? requested : hw;
    if (cap > 0) t = std::min(t, cap);
    return std::max(1, std::min(t, jobs));
}

/// Streaming mean/variance accumulator for the adaptation windows.
struct Welford {
    Eigen::Index n = 0;
    Vec mean, m2;

    void reset(int dim) {
        n = 0;
        mean = Vec::Zero(dim);
        m2 = Vec::Zero(dim);
    }
    void add(const Vec& x) {
        ++n;
        const Vec delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta.cwiseProduct(x - mean);
    }
    /// Regularized variance estimate (shrunk toward unity for short windows).
    Vec variance() const {
        const double nn = static_cast<double>(n);
        Vec v = m2 / std::max(1.0, nn - 1.0);
        const double w = nn / (nn + 5.0);
        return (w * v).array() + (1.0 - w) * 1e-3;
    }
};

struct DualAveraging {
    double mu = 0.0, log_eps = 0.0, log_eps_bar = 0.0, h_bar = 0.0;
    double gamma = 0.05, t0 = 10.0, kappa = 0.75;
    long m = 0;

    void restart(double eps) {
        mu = std::log(10.0 * eps);
        log_eps = std::log(eps);
        log_eps_bar = std::log(eps);
        h_bar = 0.0;
        m = 0;
    }
    void update(double accept_prob, double target) {
        ++m;
        const double md = static_cast<double>(m);
        h_bar = (1.0 - 1.0 / (md + t0)) * h_bar + (target - accept_prob) / (md + t0);
        log_eps = mu - std::sqrt(md) / gamma * h_bar;
        const double eta = std::pow(md, -kappa);
        log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar;
    }
    double current() const { return std::exp(log_eps); }
    double averaged() const { return std::exp(log_eps_bar); }
};

struct ChainResult {
    Mat draws;
    double accept_rate = 0.0;
};

class ChainRunner {
public:
    ChainRunner(const TargetFunction& target, const ChainConfig& cfg, std::uint64_t chain_seed)
        : target_(target), cfg_(cfg), rng_(chain_seed), normal_(0.0, 1.0) {}

    ChainResult run(const InitFn& init) {
        const int dim = target_.dim;
        z_ = draw_init(init);
        lp_ = checked_density(z_);

        sd_ = Vec::Ones(dim);
        rw_log_scale_ = std::log(2.38 / std::sqrt(static_cast<double>(dim)));
        if (cfg_.kernel == Kernel::Hmc) {
            grad_ = gradient_of(z_);
            da_.restart(initial_stepsize());
        }

        const int warm = cfg_.warmup;
        const int freeze_at = static_cast<int>(0.75 * warm); // variance windows end here
        int window_end = std::min(freeze_at, 25);
        acc_.reset(dim);

        for (int it = 0; it < warm; ++it) {
            const double aprob = step();
            if (cfg_.adaptation == Adaptation::DiagonalScale) {
                adapt_scale(aprob, it + 1);
                if (it < freeze_at) {
                    acc_.add(z_);
                    if (it + 1 == window_end) {
                        if (acc_.n >= 10) {
                            sd_ = acc_.variance().cwiseSqrt();
                            if (cfg_.kernel == Kernel::Hmc) da_.restart(da_.current());
                        }
                        acc_.reset(dim);
                        const int width = 2 * (window_end - std::max(0, prev_window_end_));
                        prev_window_end_ = window_end;
                        window_end = std::min(freeze_at, window_end + std::max(25, width));
                    }
                }
            }
        }
        if (cfg_.kernel == Kernel::Hmc && cfg_.adaptation == Adaptation::DiagonalScale && warm > 0)
            eps_frozen_ = da_.averaged();
        else if (cfg_.kernel == Kernel::Hmc)
            eps_frozen_ = da_.current();

        Mat out(cfg_.draws_per_chain, constrained_dim());
        long accepted = 0;
        frozen_ = true;
        for (int it = 0; it < cfg_.draws_per_chain; ++it) {
            const double aprob = step();
            accepted += last_accepted_ ? 1 : 0;
            (void)aprob;
            out.row(it) = constrain(z_).transpose();
        }
        ChainResult res;
        res.draws = std::move(out);
        res.accept_rate =
            cfg_.draws_per_chain > 0 ? static_cast<double>(accepted) / cfg_.draws_per_chain : 0.0;
        return res;
    }

private:
    Vec draw_init(const InitFn& init) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            Vec z = init(rng_);
            if (z.size() != target_.dim)
                throw SamplerError("run_chains: initializer returned wrong dimension");
            const double lp = target_.log_density(z);
            if (std::isnan(lp))
                throw SamplerError("run_chains: log-density returned NaN at an initialization point");
            if (std::isfinite(lp)) return z;
        }
        throw SamplerError("run_chains: no finite-density initialization found in 100 attempts");
    }

    double checked_density(const Vec& z) const {
        const double lp = target_.log_density(z);
        if (std::isnan(lp) && z.allFinite())
            throw SamplerError("run_chains: log-density returned NaN at a finite state");
        return lp;
    }

    Vec gradient_of(const Vec& z) const {
        if (target_.gradient) return target_.gradient(z);
        // central finite differences; adequate for low-dimensional targets
        const double h = 1e-6;
        Vec g(z.size());
        Vec zp = z;
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            zp[i] = z[i] + h;
            const double up = target_.log_density(zp);
            zp[i] = z[i] - h;
            const double dn = target_.log_density(zp);
            zp[i] = z[i];
            g[i] = (up - dn) / (2.0 * h);
        }
        return g;
    }

    Eigen::Index constrained_dim() const {
        if (constrained_dim_ < 0) {
            constrained_dim_ = target_.constrain ? target_.constrain(z_).size() : target_.dim;
        }
        return constrained_dim_;
    }

    Vec constrain(const Vec& z) const { return target_.constrain ? target_.constrain(z) : z; }

    double step() {
        return cfg_.kernel == Kernel::RandomWalk ? rw_step() : hmc_step();
    }

    double rw_step() {
        const double lambda = std::exp(rw_log_scale_);
        Vec prop(z_.size());
        for (Eigen::Index i = 0; i < z_.size(); ++i) prop[i] = z_[i] + lambda * sd_[i] * normal_(rng_);
        const double lp = checked_density(prop);
        const double aprob = std::isfinite(lp) ? std::min(1.0, std::exp(lp - lp_)) : 0.0;
        last_accepted_ = uniform_() < aprob;
        if (last_accepted_) {
            z_ = std::move(prop);
            lp_ = lp;
        }
        return aprob;
    }

    double hmc_step() {
        const double eps = frozen_ ? eps_frozen_ : da_.current();
        const int steps = 1 + static_cast<int>(rng_() % static_cast<std::uint64_t>(cfg_.max_leapfrog));
        Vec p(z_.size());
        for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = normal_(rng_) / sd_[i];
        const Vec invmass = sd_.cwiseProduct(sd_);
        const double h0 = -lp_ + 0.5 * p.cwiseProduct(p).dot(invmass);

        Vec z = z_;
        Vec g = grad_;
        bool divergent = false;
        for (int s = 0; s < steps; ++s) {
            p += 0.5 * eps * g;
            z += eps * invmass.cwiseProduct(p);
            if (!z.allFinite()) {
                divergent = true;
                break;
            }
            g = gradient_of(z);
            if (!g.allFinite()) {
                divergent = true;
                break;
            }
            p += 0.5 * eps * g;
        }
        double aprob = 0.0;
        if (!divergent) {
            const double lp = checked_density(z);
            const double h1 = -lp + 0.5 * p.cwiseProduct(p).dot(invmass);
            const double dh = h0 - h1;
            if (std::isfinite(dh) && dh > -1000.0) {
                aprob = std::min(1.0, std::exp(dh));
                last_accepted_ = uniform_() < aprob;
                if (last_accepted_) {
                    z_ = std::move(z);
                    lp_ = lp;
                    grad_ = std::move(g);
                }
                if (!frozen_ && cfg_.adaptation == Adaptation::DiagonalScale)
                    da_.update(aprob, cfg_.resolved_target_accept());
                return aprob;
            }
        }
        last_accepted_ = false;
        if (!frozen_ && cfg_.adaptation == Adaptation::DiagonalScale)
            da_.update(0.0, cfg_.resolved_target_accept());
        return 0.0;
    }

    double initial_stepsize() {
        // single-step heuristic: double/halve until the accept probability
        // crosses 0.5
        double eps = 0.1;
        const Vec invmass = sd_.cwiseProduct(sd_);
        Vec p(z_.size());
        for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = normal_(rng_) / sd_[i];
        auto attempt = [&](double e) {
            Vec zz = z_;
            Vec pp = p;
            Vec g = grad_;
            pp += 0.5 * e * g;
            zz += e * invmass.cwiseProduct(pp);
            if (!zz.allFinite()) return -1e300;
            const Vec g2 = gradient_of(zz);
            if (!g2.allFinite()) return -1e300;
            pp += 0.5 * e * g2;
            const double lp = target_.log_density(zz);
            if (!std::isfinite(lp)) return -1e300;
            const double h0 = -lp_ + 0.5 * p.cwiseProduct(p).dot(invmass);
            const double h1 = -lp + 0.5 * pp.cwiseProduct(pp).dot(invmass);
            return h0 - h1;
        };
        double dh = attempt(eps);
        const double dir = dh > std::log(0.5) ? 1.0 : -1.0;
        for (int i = 0; i < 50; ++i) {
            eps *= std::pow(2.0, dir);
            if (eps < 1e-8 || eps > 1e3) break;
            dh = attempt(eps);
            if ((dir > 0 && dh <= std::log(0.5)) || (dir < 0 && dh >= std::log(0.5))) break;
        }
        return std::clamp(eps, 1e-8, 1e3);
    }

    void adapt_scale(double aprob, int iter) {
        if (cfg_.kernel != Kernel::RandomWalk) return;
        const double eta = std::pow(iter + 20.0, -0.6);
        rw_log_scale_ += eta * (aprob - cfg_.resolved_target_accept());
    }

    double uniform_() {
        return std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    }

    const TargetFunction& target_;
    const ChainConfig& cfg_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_;

    Vec z_;
    double lp_ = 0.0;
    Vec grad_;
    Vec sd_;
    double rw_log_scale_ = 0.0;
    DualAveraging da_;
    double eps_frozen_ = 0.1;
    bool frozen_ = false;
    bool last_accepted_ = false;
    Welford acc_;
    int prev_window_end_ = 0;
    mutable Eigen::Index constrained_dim_ = -1;
};

} // namespace detail

/// Run `config.n_chains` independent chains of warmup + draws_per_chain
/// iterations; warmup is discarded and the kernel is frozen afterwards.
/// Reproducible: the result is a pure function of (target, config, init).
inline PosteriorDraws run_chains(const TargetFunction& target, const ChainConfig& config,
                                 const InitFn& init, StageTag tag = StageTag::JointTraining) {
    if (target.dim <= 0 || !target.log_density)
        throw std::invalid_argument("run_chains: target must have a dimension and a log-density");
    if (config.n_chains < 1 || config.draws_per_chain < 1 || config.warmup < 0)
        throw std::invalid_argument("run_chains: bad chain configuration");

    std::vector<detail::ChainResult> results(static_cast<std::size_t>(config.n_chains));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(config.n_chains));

    auto run_one = [&](int c) {
        try {
            detail::ChainRunner runner(target, config,
                                       derive_seed(config.seed, static_cast<std::uint64_t>(c)));
            results[static_cast<std::size_t>(c)] = runner.run(init);
        } catch (...) {
            errors[static_cast<std::size_t>(c)] = std::current_exception();
        }
    };

    const int nthreads = detail::resolve_threads(config.threads, config.n_chains);
    if (nthreads <= 1) {
        for (int c = 0; c < config.n_chains; ++c) run_one(c);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back([&] {
                for (int c = next.fetch_add(1); c < config.n_chains; c = next.fetch_add(1))
                    run_one(c);
            });
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    PosteriorDraws draws;
    draws.stage_tag = tag;
    if (!target.names.empty()) {
        draws.parameter_names = target.names;
    } else {
        for (Eigen::Index i = 0; i < results.front().draws.cols(); ++i)
            draws.parameter_names.push_back(detail::concat("p", i));
    }
    for (auto& r : results) {
        draws.chains.push_back(std::move(r.draws));
        draws.accept_rates.push_back(r.accept_rate);
    }
    draws.validate();
    return draws;
}

inline PosteriorDraws run_chains(const TargetFunction& target, const ChainConfig& config,
                                 const Vec& init, StageTag tag = StageTag::JointTraining) {
    return run_chains(
        target, config, [&init](std::mt19937_64&) { return init; }, tag);
}

// ---------------------------------------------------------------------------
// Convergence diagnostics (rank-normalized split chains)
// ---------------------------------------------------------------------------

namespace detail {

/// Split each chain in half; returns a matrix with one column per half-chain.
inline Mat split_columns(const PosteriorDraws& draws, Eigen::Index param) {
    const Eigen::Index n2 = draws.n_draws() / 2;
    Mat out(n2, 2 * draws.n_chains());
    for (int c = 0; c < draws.n_chains(); ++c) {
        const auto col = draws.chains[static_cast<std::size_t>(c)].col(param);
        out.col(2 * c) = col.head(n2);
        out.col(2 * c + 1) = col.tail(n2);
    }
    return out;
}

/// Blom rank-normalization with average ranks for ties, applied columnwise
/// over the pooled values.
inline Mat rank_normalize(const Mat& x) {
    const Eigen::Index n = x.size();
    std::vector<std::pair<double, Eigen::Index>> vals;
    vals.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            vals.emplace_back(x(i, j), j * x.rows() + i);
    std::sort(vals.begin(), vals.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<double> rank(static_cast<std::size_t>(n));
    std::size_t i = 0;
    while (i < vals.size()) {
        std::size_t j = i;
        while (j + 1 < vals.size() && vals[j + 1].first == vals[i].first) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0; // average 1-based rank
        for (std::size_t k = i; k <= j; ++k) rank[static_cast<std::size_t>(vals[k].second)] = avg;
        i = j + 1;
    }
    Mat z(x.rows(), x.cols());
    const double nn = static_cast<double>(n);
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index r = 0; r < x.rows(); ++r)
            z(r, j) = normal_quantile((rank[static_cast<std::size_t>(j * x.rows() + r)] - 0.375) /
                                      (nn + 0.25));
    return z;
}

struct ChainMoments {
    double w = 0.0;      // mean within-chain variance
    double var_plus = 0.0;
    Vec means;
    Vec vars;
};

inline ChainMoments chain_moments(const Mat& z) {
    const Eigen::Index n = z.rows(), m = z.cols();
    ChainMoments cm;
    cm.means = z.colwise().mean();
    cm.vars = Vec(m);
    for (Eigen::Index j = 0; j < m; ++j)
        cm.vars[j] = (z.col(j).array() - cm.means[j]).square().sum() / static_cast<double>(n - 1);
    cm.w = cm.vars.mean();
    const double grand = cm.means.mean();
    const double b_over_n =
        (cm.means.array() - grand).square().sum() / static_cast<double>(m - 1);
    cm.var_plus = static_cast<double>(n - 1) / static_cast<double>(n) * cm.w + b_over_n;
    return cm;
}

} // namespace detail

/// Rank-normalized split-R-hat per parameter.  A chain set whose pooled
/// values are all identical has no usable scale and reports the degenerate
/// sentinel (nullopt) instead of a number.
inline std::vector<std::optional<double>> split_rhat(const PosteriorDraws& draws) {
    if (draws.n_chains() < 2 || draws.n_draws() < 4)
        throw std::invalid_argument("split_rhat: need >= 2 chains and >= 4 draws per chain");
    std::vector<std::optional<double>> out;
    for (Eigen::Index p = 0; p < draws.n_params(); ++p) {
        Mat split = detail::split_columns(draws, p);
        if ((split.maxCoeff() - split.minCoeff()) == 0.0) {
            out.push_back(std::nullopt);
            continue;
        }
        const Mat z = detail::rank_normalize(split);
        const auto cm = detail::chain_moments(z);
        if (cm.w <= 0.0) {
            out.push_back(std::numeric_limits<double>::infinity());
            continue;
        }
        out.push_back(std::sqrt(cm.var_plus / cm.w));
    }
    return out;
}

/// Bulk effective sample size per parameter via Geyer's initial positive
/// sequence on rank-normalized split chains.
inline std::vector<std::optional<double>> ess_bulk(const PosteriorDraws& draws) {
    if (draws.n_chains() < 1 || draws.n_draws() < 4)
        throw std::invalid_argument("ess_bulk: need >= 4 draws per chain");
    std::vector<std::optional<double>> out;
    for (Eigen::Index p = 0; p < draws.n_params(); ++p) {
        Mat split = detail::split_columns(draws, p);
        if ((split.maxCoeff() - split.minCoeff()) == 0.0) {
            out.push_back(std::nullopt);
            continue;
        }
        const Mat z = detail::rank_normalize(split);
        const auto cm = detail::chain_moments(z);
        if (cm.w <= 0.0 || cm.var_plus <= 0.0) {
            out.push_back(std::nullopt);
            continue;
        }
        const Eigen::Index n = z.rows(), m = z.cols();
        // biased per-chain autocovariances, averaged
        const Eigen::Index max_lag = n - 1;
        Vec acov = Vec::Zero(max_lag);
        for (Eigen::Index j = 0; j < m; ++j) {
            const Vec centered = z.col(j).array() - cm.means[j];
            for (Eigen::Index t = 0; t < max_lag; ++t) {
                double s = 0.0;
                for (Eigen::Index i = 0; i + t < n; ++i) s += centered[i] * centered[i + t];
                acov[t] += s / static_cast<double>(n);
            }
        }
        acov /= static_cast<double>(m);
        Vec rho(max_lag);
        for (Eigen::Index t = 0; t < max_lag; ++t)
            rho[t] = 1.0 - (cm.w - acov[t]) / cm.var_plus;
        // Geyer pairs: keep while positive, enforce monotone non-increase
        double tau = -rho[0]; // pairs below add rho_0 back in
        double prev_pair = std::numeric_limits<double>::infinity();
        for (Eigen::Index t = 0; t + 1 < max_lag; t += 2) {
            double pair = rho[t] + rho[t + 1];
            if (pair < 0.0) break;
            pair = std::min(pair, prev_pair);
            prev_pair = pair;
            tau += 2.0 * pair;
        }
        const double total = static_cast<double>(n * m);
        double e = total / std::max(tau, 1.0 / 1.25);
        e = std::min(e, 1.25 * total);
        out.push_back(e);
    }
    return out;
}

} // namespace hybsur

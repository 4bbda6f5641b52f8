#pragma once

#include <chrono>
#include <filesystem>
#include <map>

#include "hybsur/datagen.hpp"
#include "hybsur/io.hpp"
#include "hybsur/metrics.hpp"

namespace hybsur {

enum class CaseStudy { CS1, CS1_2, CS2_1, CS2_2 };
enum class MethodChoice { PowerScaling, PredictiveWeighting, Both };

inline std::string case_name(CaseStudy c) {
    switch (c) {
    case CaseStudy::CS1: return "cs1";
    case CaseStudy::CS1_2: return "cs1_2";
    case CaseStudy::CS2_1: return "cs2_1";
    case CaseStudy::CS2_2: return "cs2_2";
    }
    return "unknown";
}

inline CaseStudy case_from_name(const std::string& s) {
    if (s == "cs1") return CaseStudy::CS1;
    if (s == "cs1_2") return CaseStudy::CS1_2;
    if (s == "cs2_1") return CaseStudy::CS2_1;
    if (s == "cs2_2") return CaseStudy::CS2_2;
    throw std::invalid_argument(detail::concat("unknown case study '", s, "'"));
}

struct ExperimentConfig {
    CaseStudy case_study = CaseStudy::CS1;
    MethodChoice method = MethodChoice::Both;
    std::vector<double> beta_grid; // empty = default 0, 0.05, ..., 1
    ChainPreset preset = ChainPreset::Desk;
    std::vector<std::uint64_t> seeds = {1};
    std::string output_dir = "runs/latest";
    std::string covid_csv = "data/covid_italy.csv";
    int threads = 0;       // parallel cells; 0 = HYBRID_SURROGATE_THREADS or serial
    bool reuse_cache = true;
    double rhat_gate = 1.05;

    std::vector<double> resolved_beta_grid() const {
        if (!beta_grid.empty()) return beta_grid;
        std::vector<double> grid;
        for (int i = 0; i <= 20; ++i) grid.push_back(i * 0.05);
        return grid;
    }

    void validate() const {
        const auto grid = resolved_beta_grid();
        if (grid.empty()) throw std::invalid_argument("ExperimentConfig: empty beta grid");
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (!(grid[i] >= 0.0 && grid[i] <= 1.0))
                throw std::invalid_argument("ExperimentConfig: beta outside [0, 1]");
            if (i > 0 && grid[i] <= grid[i - 1])
                throw std::invalid_argument("ExperimentConfig: beta grid must be sorted and unique");
        }
        if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: no seeds");
    }

    std::string echo() const {
        std::string s = "[experiment]\n";
        s += "case_study=" + case_name(case_study) + "\n";
        s += std::string("method=") + (method == MethodChoice::PowerScaling
                                           ? "ps"
                                           : method == MethodChoice::PredictiveWeighting ? "pw"
                                                                                         : "both") +
             "\n";
        s += "beta_grid=";
        const auto grid = resolved_beta_grid();
        for (std::size_t i = 0; i < grid.size(); ++i)
            s += (i ? "," : "") + detail::fmt_double(grid[i]);
        s += "\n";
        s += std::string("preset=") + (preset == ChainPreset::Desk ? "desk" : "paper") + "\n";
        s += "seeds=";
        for (std::size_t i = 0; i < seeds.size(); ++i)
            s += (i ? "," : "") + detail::concat(seeds[i]);
        s += "\n";
        s += "covid_csv=" + covid_csv + "\n";
        s += "rhat_gate=" + detail::fmt_double(rhat_gate) + "\n";
        return s;
    }
};

inline CaseData make_case_data(CaseStudy cs, std::uint64_t seed, const std::string& covid_csv) {
    switch (cs) {
    case CaseStudy::CS1: return make_cs1_datasets(seed);
    case CaseStudy::CS1_2: return make_cs1_datasets(seed, 140.0);
    case CaseStudy::CS2_1: return make_cs21_datasets(seed);
    case CaseStudy::CS2_2: return make_cs22_datasets(covid_csv);
    }
    throw std::invalid_argument("make_case_data: bad case study");
}

inline Mat plot_grid(CaseStudy cs, int n = 201) {
    double lo = 1.0, hi = 200.0;
    if (cs == CaseStudy::CS2_1) {
        lo = 1.0;
        hi = 14.0;
    } else if (cs == CaseStudy::CS2_2) {
        lo = 0.1;
        hi = 1.3;
    }
    Mat g(n, 1);
    for (int i = 0; i < n; ++i) g(i, 0) = lo + (hi - lo) * i / (n - 1);
    return g;
}

namespace detail {

inline double empirical_quantile(Vec v, double q) {
    std::sort(v.data(), v.data() + v.size());
    const double pos = q * static_cast<double>(v.size() - 1);
    const Eigen::Index lo = static_cast<Eigen::Index>(std::floor(pos));
    const Eigen::Index hi = std::min<Eigen::Index>(lo + 1, v.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return (1.0 - w) * v[lo] + w * v[hi];
}

/// Fan table: x plus the 2.5/25/50/75/97.5% quantiles (and the median column
/// required by the plotting contract) of the posterior predictive draws.
inline std::string quantile_table(const Mat& grid, const Mat& y_draws) {
    std::string s = "x,q025,q25,q50,q75,q975,median\n";
    for (Eigen::Index j = 0; j < grid.rows(); ++j) {
        const Vec col = y_draws.col(j);
        const double q50 = empirical_quantile(col, 0.5);
        s += fmt_double(grid(j, 0)) + "," + fmt_double(empirical_quantile(col, 0.025)) + "," +
             fmt_double(empirical_quantile(col, 0.25)) + "," + fmt_double(q50) + "," +
             fmt_double(empirical_quantile(col, 0.75)) + "," +
             fmt_double(empirical_quantile(col, 0.975)) + "," + fmt_double(q50) + "\n";
    }
    return s;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Cell artifacts and execution
// ---------------------------------------------------------------------------

namespace detail {

struct CellOutput {
    std::vector<ResultRow> rows;
    // artifact path -> content (written by the single writer thread)
    std::vector<std::pair<std::string, std::string>> files;
    std::vector<std::pair<std::string, PosteriorDraws>> draw_files; // csv path stem
    std::vector<std::pair<std::string, std::uint64_t>> draw_hashes;
};

struct SpaghettiCurve {
    int id;
    std::string component;
    std::string omega_tag;
    Vec mu;
};

inline std::string spaghetti_csv(const Mat& grid, const std::vector<SpaghettiCurve>& curves) {
    std::string s = "curve_id,component,omega_r,x,mu\n";
    for (const auto& c : curves)
        for (Eigen::Index j = 0; j < grid.rows(); ++j)
            s += concat(c.id, ",", c.component, ",", c.omega_tag, ",", fmt_double(grid(j, 0)),
                        ",", fmt_double(c.mu[j]), "\n");
    return s;
}

inline std::vector<SpaghettiCurve> spaghetti_from_fit(const HybridFit& fit,
                                                      const PredictiveDraws& pred, int n_curves,
                                                      const std::string& component) {
    std::vector<SpaghettiCurve> curves;
    const Eigen::Index total = pred.n_draws();
    const int n = static_cast<int>(std::min<Eigen::Index>(n_curves, total));
    for (int k = 0; k < n; ++k) {
        const Eigen::Index row = (static_cast<Eigen::Index>(k) * total) / n;
        SpaghettiCurve c;
        c.id = k;
        c.component = component;
        c.omega_tag = fit.spec().dim_w() > 0 ? fmt_double(fit.omega(row)[0]) : std::string();
        c.mu = pred.mu_draws.row(row).transpose();
        curves.push_back(std::move(c));
    }
    return curves;
}

inline std::vector<SpaghettiCurve> spaghetti_from_mixture(const MixturePredictive& mix,
                                                          int n_curves) {
    std::vector<SpaghettiCurve> curves;
    const auto& sub = mix.subsample;
    const Eigen::Index total = sub.n_draws();
    const int n = static_cast<int>(std::min<Eigen::Index>(n_curves, total));
    for (int k = 0; k < n; ++k) {
        const Eigen::Index row = (static_cast<Eigen::Index>(k) * total) / n;
        SpaghettiCurve c;
        c.id = k;
        c.component = sub.component_labels[static_cast<std::size_t>(row)] == 0 ? "sim" : "dd";
        c.omega_tag.clear();
        c.mu = sub.mu_draws.row(row).transpose();
        curves.push_back(std::move(c));
    }
    return curves;
}

} // namespace detail

struct ExperimentResult {
    std::vector<ResultRow> rows;
    bool any_nonconverged = false;
    std::string run_dir;
};

/// Full orchestration: for every (seed, method, beta) cell, train, predict on
/// every split, score, and persist datasets, posterior draws, quantile tables
/// and the result table.  Re-running with an identical configuration
/// overwrites every deterministic artifact with identical bytes.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    const auto grid = config.resolved_beta_grid();
    const std::string cname = case_name(config.case_study);
    const std::string run_dir = config.output_dir;
    std::filesystem::create_directories(run_dir);
    detail::write_file(run_dir + "/config.txt", config.echo());

    const bool do_ps =
        config.method == MethodChoice::PowerScaling || config.method == MethodChoice::Both;
    const bool do_pw =
        config.method == MethodChoice::PredictiveWeighting || config.method == MethodChoice::Both;
    const Mat pgrid = plot_grid(config.case_study);

    struct Cell {
        std::uint64_t seed;
        int kind;    // 0 = power-scaling at one beta, 1 = predictive-weighting bundle
        double beta; // for kind 0
    };
    std::vector<Cell> cells;
    for (std::uint64_t seed : config.seeds) {
        if (do_ps)
            for (double b : grid) cells.push_back({seed, 0, b});
        if (do_pw) cells.push_back({seed, 1, 0.0});
    }

    const int cell_threads = detail::resolve_threads(config.threads, static_cast<int>(cells.size()));
    std::vector<detail::CellOutput> outputs(cells.size());
    std::vector<std::exception_ptr> errors(cells.size());

    // dataset generation is cheap and deterministic; build one bundle per seed
    // up front so cells share immutable inputs
    std::map<std::uint64_t, CaseData> data_by_seed;
    for (std::uint64_t seed : config.seeds)
        data_by_seed.emplace(seed, make_case_data(config.case_study, seed, config.covid_csv));

    auto run_cell = [&](std::size_t idx) {
        const Cell& cell = cells[idx];
        const CaseData& cd = data_by_seed.at(cell.seed);
        detail::CellOutput out;
        const std::string seed_dir =
            run_dir + "/" + cname + "/seed-" + detail::concat(cell.seed);
        GateConfig gate;
        gate.enforce = false;
        gate.rhat_threshold = config.rhat_gate;

        auto presets = make_presets(config.preset, derive_seed(cell.seed, fnv1a(cname)));
        if (cell_threads > 1) {
            presets.stage1.threads = 1;
            presets.stage2.threads = 1;
        }

        auto elapsed = [](auto t0) {
            return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        };

        auto score_splits = [&](const std::string& method, double beta, double rhat_max,
                                double wall, auto&& elpd_fn, auto&& rmse_fn) {
            for (const auto& ev : cd.evals) {
                if (ev.kind != EvalKind::Noisy) continue;
                ResultRow row;
                row.case_study = cname;
                row.method = method;
                row.beta = beta;
                row.split_label = ev.split_label;
                row.seed = cell.seed;
                row.elpd = elpd_fn(ev);
                for (const auto& tv : cd.evals)
                    if (tv.kind == EvalKind::Truth && tv.split_label == ev.split_label)
                        row.rmse = rmse_fn(tv);
                row.wall_time_seconds = wall;
                row.rhat_max = rhat_max;
                row.converged = rhat_max <= config.rhat_gate;
                out.rows.push_back(std::move(row));
            }
        };

        if (cell.kind == 0) {
            const double beta = cell.beta;
            const std::string bdir = seed_dir + "/ps/beta-" + detail::fmt_double(beta);
            ChainConfig cfg1 = presets.stage1;
            cfg1.seed = derive_seed(presets.stage1.seed, fnv1a(detail::concat("ps", beta)));
            ChainConfig cfg2 = presets.stage2;
            cfg2.seed = derive_seed(presets.stage2.seed, fnv1a(detail::concat("ps", beta)));
            if (cell_threads > 1) cfg2.threads = 1;
            const std::uint64_t cache_key =
                fnv1a(config.echo() + detail::concat("|ps|", beta, "|", cell.seed));

            const auto t0 = std::chrono::steady_clock::now();
            PosteriorDraws joint;
            std::optional<HybridFit> fit;
            const auto cached_joint = config.reuse_cache
                                          ? load_draws_bin(bdir + "/joint_draws.bin", cache_key)
                                          : std::nullopt;
            if (cached_joint) {
                joint = *cached_joint;
            } else {
                joint = train_power_scaled(cd.sim, cd.real, beta, cd.joint_spec, cfg1, gate);
            }
            const auto rep1 = convergence_report(joint);
            fit.emplace(refine_inference(joint, cd.real, cd.joint_spec, cfg2, presets.thin_to,
                                         compute_scaling(beta), FitMethod::PowerScaling, gate));
            const double wall = elapsed(t0);

            // pooled pseudo-chain diagnostic over the refined final states
            double rhat2 = 0.0;
            {
                const auto& refined = fit->refined_draws();
                const Eigen::Index group = 50;
                const Eigen::Index ngroups = refined.total_draws() / group;
                if (ngroups >= 2) {
                    PosteriorDraws pseudo;
                    pseudo.parameter_names = refined.parameter_names;
                    pseudo.stage_tag = StageTag::Refinement;
                    for (Eigen::Index g = 0; g < ngroups; ++g)
                        pseudo.chains.push_back(
                            refined.chains.front().middleRows(g * group, group));
                    rhat2 = convergence_report(pseudo).rhat_max;
                }
            }
            const double rhat_max = std::max(rep1.rhat_max, rhat2);

            const std::uint64_t pseed = derive_seed(cell.seed, fnv1a(detail::concat("pred-ps", beta)));
            std::map<std::string, PredictiveDraws> preds;
            for (const auto& ev : cd.evals)
                if (!preds.count(ev.split_label))
                    preds.emplace(ev.split_label,
                                  predictive_draws(*fit, ev.inputs,
                                                   derive_seed(pseed, fnv1a(ev.split_label))));
            score_splits(
                "ps", beta, rhat_max, wall,
                [&](const EvaluationSet& ev) { return elpd(preds.at(ev.split_label), ev); },
                [&](const EvaluationSet& tv) { return rmse(preds.at(tv.split_label), tv); });

            const auto plot_pred = predictive_draws(*fit, pgrid, derive_seed(pseed, 0xF16));
            out.files.emplace_back(bdir + "/quantiles.csv",
                                   detail::quantile_table(pgrid, plot_pred.y_draws));
            out.files.emplace_back(
                bdir + "/spaghetti.csv",
                detail::spaghetti_csv(pgrid,
                                      detail::spaghetti_from_fit(*fit, plot_pred, 200, "ps")));
            std::string pairing = "pair\n";
            for (auto idx2 : fit->retained_indices()) pairing += detail::concat(idx2, "\n");
            out.files.emplace_back(bdir + "/pairing.csv", pairing);
            out.draw_files.emplace_back(bdir + "/joint_draws", joint);
            out.draw_hashes.emplace_back(bdir + "/joint_draws", cache_key);
            out.draw_files.emplace_back(bdir + "/refined_draws", fit->refined_draws());
            out.draw_hashes.emplace_back(bdir + "/refined_draws", cache_key);
        } else {
            // predictive weighting: two component fits shared by every beta
            const std::string pw_dir = seed_dir + "/pw";
            ChainConfig cfg_sim = presets.stage1;
            cfg_sim.seed = derive_seed(presets.stage1.seed, fnv1a("pw-sim"));
            ChainConfig cfg_sim2 = presets.stage2;
            cfg_sim2.seed = derive_seed(presets.stage2.seed, fnv1a("pw-sim"));
            ChainConfig cfg_dd = presets.stage1;
            cfg_dd.seed = derive_seed(presets.stage1.seed, fnv1a("pw-dd"));
            if (cell_threads > 1) cfg_sim2.threads = 1;

            const auto t0 = std::chrono::steady_clock::now();
            const auto sim_fit =
                train_simulation_based(cd.sim, cd.real, cd.joint_spec, cfg_sim, cfg_sim2,
                                       presets.thin_to,
                                       FitMethod::PredictiveWeightingComponents, gate);
            const auto dd_draws = train_data_driven(cd.real, cd.dd_spec, cfg_dd, gate);
            const double wall = elapsed(t0);
            const double rhat_max = std::max(convergence_report(sim_fit.joint_draws()).rhat_max,
                                             convergence_report(dd_draws).rhat_max);

            const std::uint64_t pseed = derive_seed(cell.seed, fnv1a("pred-pw"));
            std::map<std::string, PredictiveDraws> sim_preds, dd_preds;
            for (const auto& ev : cd.evals) {
                if (!sim_preds.count(ev.split_label)) {
                    sim_preds.emplace(ev.split_label,
                                      predictive_draws(sim_fit, ev.inputs,
                                                       derive_seed(pseed, fnv1a("s" + ev.split_label))));
                    dd_preds.emplace(ev.split_label,
                                     predictive_draws(dd_draws, cd.dd_spec, ev.inputs,
                                                      derive_seed(pseed, fnv1a("d" + ev.split_label))));
                }
            }
            const auto sim_plot = predictive_draws(sim_fit, pgrid, derive_seed(pseed, 0xF17));
            const auto dd_plot =
                predictive_draws(dd_draws, cd.dd_spec, pgrid, derive_seed(pseed, 0xF18));

            for (double beta : grid) {
                std::map<std::string, MixturePredictive> mixes;
                for (const auto& [label, sp] : sim_preds)
                    mixes.emplace(label,
                                  mixture_predictive(sp, dd_preds.at(label), beta, 1000,
                                                     derive_seed(pseed, fnv1a(detail::concat(
                                                                            "m", beta, label)))));
                score_splits(
                    "pw", beta, rhat_max, wall,
                    [&](const EvaluationSet& ev) { return elpd(mixes.at(ev.split_label), ev); },
                    [&](const EvaluationSet& tv) { return rmse(mixes.at(tv.split_label), tv); });

                const std::string bdir = pw_dir + "/beta-" + detail::fmt_double(beta);
                const auto plot_mix =
                    mixture_predictive(sim_plot, dd_plot, beta, 1000,
                                       derive_seed(pseed, fnv1a(detail::concat("plot", beta))));
                out.files.emplace_back(bdir + "/quantiles.csv",
                                       detail::quantile_table(pgrid, plot_mix.subsample.y_draws));
                const auto plot_mix200 =
                    mixture_predictive(sim_plot, dd_plot, beta, 200,
                                       derive_seed(pseed, fnv1a(detail::concat("spag", beta))));
                out.files.emplace_back(
                    bdir + "/spaghetti.csv",
                    detail::spaghetti_csv(pgrid,
                                          detail::spaghetti_from_mixture(plot_mix200, 200)));
            }

            std::string pairing = "pair\n";
            for (auto idx2 : sim_fit.retained_indices()) pairing += detail::concat(idx2, "\n");
            out.files.emplace_back(pw_dir + "/components/pairing.csv", pairing);
            out.draw_files.emplace_back(pw_dir + "/components/simbased_joint", sim_fit.joint_draws());
            out.draw_files.emplace_back(pw_dir + "/components/simbased_refined",
                                        sim_fit.refined_draws());
            out.draw_files.emplace_back(pw_dir + "/components/dd_draws", dd_draws);
            const std::uint64_t cache_key = fnv1a(config.echo() + detail::concat("|pw|", cell.seed));
            out.draw_hashes.emplace_back(pw_dir + "/components/simbased_joint", cache_key);
            out.draw_hashes.emplace_back(pw_dir + "/components/simbased_refined", cache_key);
            out.draw_hashes.emplace_back(pw_dir + "/components/dd_draws", cache_key);
        }
        outputs[idx] = std::move(out);
    };

    if (cell_threads <= 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            try {
                run_cell(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < cell_threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < cells.size();
                     i = next.fetch_add(1)) {
                    try {
                        run_cell(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    // single-writer persistence, deterministic ordering
    ExperimentResult result;
    result.run_dir = run_dir;
    for (std::uint64_t seed : config.seeds) {
        const auto& cd = data_by_seed.at(seed);
        const std::string seed_dir = run_dir + "/" + cname + "/seed-" + detail::concat(seed);
        save_sim_dataset(seed_dir + "/sim.csv", cd.sim);
        save_real_dataset(seed_dir + "/real.csv", cd.real);
        for (const auto& ev : cd.evals) {
            std::string label = ev.split_label;
            for (auto& ch : label)
                if (ch == '/' || ch == ':') ch = '_';
            save_eval_set(seed_dir + "/eval_" + label + "_" +
                              (ev.kind == EvalKind::Noisy ? "noisy" : "truth") + ".csv",
                          ev);
        }
    }
    for (auto& out : outputs) {
        for (auto& [path, content] : out.files) detail::write_file(path, content);
        for (std::size_t i = 0; i < out.draw_files.size(); ++i) {
            const auto& [stem, draws] = out.draw_files[i];
            save_draws_csv(stem + ".csv", draws);
            save_draws_bin(stem + ".bin", draws, out.draw_hashes[i].second);
        }
        for (auto& row : out.rows) result.rows.push_back(row);
    }
    std::sort(result.rows.begin(), result.rows.end(), [](const ResultRow& a, const ResultRow& b) {
        return std::tie(a.case_study, a.method, a.beta, a.split_label, a.seed) <
               std::tie(b.case_study, b.method, b.beta, b.split_label, b.seed);
    });
    save_results_csv(run_dir + "/results.csv", result.rows);
    save_timings_csv(run_dir + "/timings.csv", result.rows);
    for (const auto& r : result.rows) result.any_nonconverged |= !r.converged;
    return result;
}

// ---------------------------------------------------------------------------
// Re-scoring a persisted run
// ---------------------------------------------------------------------------

/// Parse the config echo written by run_experiment.
inline ExperimentConfig parse_run_config(const std::string& run_dir) {
    const auto lines = detail::read_lines(run_dir + "/config.txt");
    ExperimentConfig cfg;
    cfg.output_dir = run_dir;
    for (const auto& line : lines) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        auto split_list = [](const std::string& s) {
            std::vector<std::string> out;
            std::string cur;
            for (char c : s) {
                if (c == ',') {
                    out.push_back(cur);
                    cur.clear();
                } else
                    cur += c;
            }
            if (!cur.empty()) out.push_back(cur);
            return out;
        };
        if (key == "case_study") cfg.case_study = case_from_name(val);
        else if (key == "method")
            cfg.method = val == "ps" ? MethodChoice::PowerScaling
                                     : val == "pw" ? MethodChoice::PredictiveWeighting
                                                   : MethodChoice::Both;
        else if (key == "beta_grid") {
            cfg.beta_grid.clear();
            for (const auto& b : split_list(val))
                cfg.beta_grid.push_back(detail::parse_double(b, "config.txt"));
        } else if (key == "preset")
            cfg.preset = val == "paper" ? ChainPreset::Paper : ChainPreset::Desk;
        else if (key == "seeds") {
            cfg.seeds.clear();
            for (const auto& s : split_list(val))
                cfg.seeds.push_back(static_cast<std::uint64_t>(std::stoull(s)));
        } else if (key == "covid_csv")
            cfg.covid_csv = val;
        else if (key == "rhat_gate")
            cfg.rhat_gate = detail::parse_double(val, "config.txt");
    }
    return cfg;
}

namespace detail {

inline std::vector<Eigen::Index> load_pairing(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.empty() || lines[0] != "pair")
        throw IoError(concat("evaluate: ", path, " is not a pairing file"));
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 1; i < lines.size(); ++i)
        idx.push_back(static_cast<Eigen::Index>(std::stoll(lines[i])));
    return idx;
}

inline double refined_pseudo_rhat(const PosteriorDraws& refined) {
    const Eigen::Index group = 50;
    const Eigen::Index ngroups = refined.total_draws() / group;
    if (ngroups < 2) return 0.0;
    PosteriorDraws pseudo;
    pseudo.parameter_names = refined.parameter_names;
    pseudo.stage_tag = StageTag::Refinement;
    for (Eigen::Index g = 0; g < ngroups; ++g)
        pseudo.chains.push_back(refined.chains.front().middleRows(g * group, group));
    return convergence_report(pseudo).rhat_max;
}

} // namespace detail

/// Recompute every metric row from the persisted draws (no refitting).  The
/// result table alone suffices for all downstream comparisons, and this
/// reproduces it bit-for-bit from the stored artifacts.
inline ExperimentResult evaluate_run(const std::string& run_dir) {
    const ExperimentConfig config = parse_run_config(run_dir);
    config.validate();
    const auto grid = config.resolved_beta_grid();
    const std::string cname = case_name(config.case_study);
    const bool do_ps =
        config.method == MethodChoice::PowerScaling || config.method == MethodChoice::Both;
    const bool do_pw =
        config.method == MethodChoice::PredictiveWeighting || config.method == MethodChoice::Both;

    ExperimentResult result;
    result.run_dir = run_dir;
    for (std::uint64_t seed : config.seeds) {
        const CaseData cd = make_case_data(config.case_study, seed, config.covid_csv);
        const std::string seed_dir = run_dir + "/" + cname + "/seed-" + detail::concat(seed);

        auto score = [&](const std::string& method, double beta, double rhat_max,
                         auto&& elpd_fn, auto&& rmse_fn) {
            for (const auto& ev : cd.evals) {
                if (ev.kind != EvalKind::Noisy) continue;
                ResultRow row;
                row.case_study = cname;
                row.method = method;
                row.beta = beta;
                row.split_label = ev.split_label;
                row.seed = seed;
                row.elpd = elpd_fn(ev);
                for (const auto& tv : cd.evals)
                    if (tv.kind == EvalKind::Truth && tv.split_label == ev.split_label)
                        row.rmse = rmse_fn(tv);
                row.rhat_max = rhat_max;
                row.converged = rhat_max <= config.rhat_gate;
                result.rows.push_back(std::move(row));
            }
        };

        if (do_ps) {
            for (double beta : grid) {
                const std::string bdir = seed_dir + "/ps/beta-" + detail::fmt_double(beta);
                const auto joint = load_draws_csv(bdir + "/joint_draws.csv");
                const auto refined = load_draws_csv(bdir + "/refined_draws.csv");
                const auto pairing = detail::load_pairing(bdir + "/pairing.csv");
                const HybridFit fit(FitMethod::PowerScaling, compute_scaling(beta),
                                    cd.joint_spec, joint, pairing, refined);
                const double rhat_max = std::max(convergence_report(joint).rhat_max,
                                                 detail::refined_pseudo_rhat(refined));
                const std::uint64_t pseed =
                    derive_seed(seed, fnv1a(detail::concat("pred-ps", beta)));
                std::map<std::string, PredictiveDraws> preds;
                for (const auto& ev : cd.evals)
                    if (!preds.count(ev.split_label))
                        preds.emplace(ev.split_label,
                                      predictive_draws(fit, ev.inputs,
                                                       derive_seed(pseed, fnv1a(ev.split_label))));
                score(
                    "ps", beta, rhat_max,
                    [&](const EvaluationSet& ev) { return elpd(preds.at(ev.split_label), ev); },
                    [&](const EvaluationSet& tv) { return rmse(preds.at(tv.split_label), tv); });
            }
        }
        if (do_pw) {
            const std::string pw_dir = seed_dir + "/pw";
            const auto joint = load_draws_csv(pw_dir + "/components/simbased_joint.csv");
            const auto refined = load_draws_csv(pw_dir + "/components/simbased_refined.csv");
            const auto pairing = detail::load_pairing(pw_dir + "/components/pairing.csv");
            const auto dd_draws = load_draws_csv(pw_dir + "/components/dd_draws.csv");
            const HybridFit sim_fit(FitMethod::PredictiveWeightingComponents,
                                    compute_scaling(1.0), cd.joint_spec, joint, pairing, refined);
            const double rhat_max = std::max(convergence_report(joint).rhat_max,
                                             convergence_report(dd_draws).rhat_max);
            const std::uint64_t pseed = derive_seed(seed, fnv1a("pred-pw"));
            std::map<std::string, PredictiveDraws> sim_preds, dd_preds;
            for (const auto& ev : cd.evals)
                if (!sim_preds.count(ev.split_label)) {
                    sim_preds.emplace(ev.split_label,
                                      predictive_draws(sim_fit, ev.inputs,
                                                       derive_seed(pseed, fnv1a("s" + ev.split_label))));
                    dd_preds.emplace(ev.split_label,
                                     predictive_draws(dd_draws, cd.dd_spec, ev.inputs,
                                                      derive_seed(pseed, fnv1a("d" + ev.split_label))));
                }
            for (double beta : grid) {
                std::map<std::string, MixturePredictive> mixes;
                for (const auto& [label, sp] : sim_preds)
                    mixes.emplace(label,
                                  mixture_predictive(sp, dd_preds.at(label), beta, 1000,
                                                     derive_seed(pseed, fnv1a(detail::concat(
                                                                            "m", beta, label)))));
                score(
                    "pw", beta, rhat_max,
                    [&](const EvaluationSet& ev) { return elpd(mixes.at(ev.split_label), ev); },
                    [&](const EvaluationSet& tv) { return rmse(mixes.at(tv.split_label), tv); });
            }
        }
    }
    std::sort(result.rows.begin(), result.rows.end(), [](const ResultRow& a, const ResultRow& b) {
        return std::tie(a.case_study, a.method, a.beta, a.split_label, a.seed) <
               std::tie(b.case_study, b.method, b.beta, b.split_label, b.seed);
    });
    save_results_csv(run_dir + "/results.csv", result.rows);
    for (const auto& r : result.rows) result.any_nonconverged |= !r.converged;
    return result;
}

// ---------------------------------------------------------------------------
// Plot-data emission
// ---------------------------------------------------------------------------

/// Consolidate per-cell artifacts into one file per figure analog:
/// predictive-interval fans, predictive-mean spaghetti and metric-vs-beta
/// curves.  No rendering is performed.
inline void emit_plot_data(const std::string& run_dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(run_dir + "/results.csv"))
        throw IoError("emit_plot_data: results.csv missing; run the sweep first");
    const auto rows = load_results_csv(run_dir + "/results.csv");

    // figure analog 1: metric-vs-beta curves (one row per result row)
    std::string curves = "case_study,method,beta,split_label,seed,elpd,rmse\n";
    for (const auto& r : rows)
        curves += r.case_study + "," + r.method + "," + detail::fmt_double(r.beta) + "," +
                  r.split_label + "," + detail::concat(r.seed) + "," +
                  detail::fmt_double(r.elpd) + "," +
                  (r.rmse ? detail::fmt_double(*r.rmse) : std::string("")) + "\n";
    detail::write_file(run_dir + "/plot_beta_curves.csv", curves);

    // figure analogs 2 and 3: concatenate the per-cell fan and spaghetti files
    std::string fans = "case_study,seed,method,beta,x,q025,q25,q50,q75,q975,median\n";
    std::string spag = "case_study,seed,method,beta,curve_id,component,omega_r,x,mu\n";
    bool found = false;
    for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name != "quantiles.csv" && name != "spaghetti.csv") continue;
        const std::string beta_dir = entry.path().parent_path().filename().string();
        if (beta_dir.rfind("beta-", 0) != 0) continue;
        const std::string beta = beta_dir.substr(5);
        const std::string method =
            entry.path().parent_path().parent_path().filename().string();
        const std::string seed_dir =
            entry.path().parent_path().parent_path().parent_path().filename().string();
        const std::string cname = entry.path()
                                      .parent_path()
                                      .parent_path()
                                      .parent_path()
                                      .parent_path()
                                      .filename()
                                      .string();
        const std::string seed = seed_dir.rfind("seed-", 0) == 0 ? seed_dir.substr(5) : seed_dir;
        const auto lines = detail::read_lines(entry.path().string());
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const std::string prefix =
                cname + "," + seed + "," + method + "," + beta + ",";
            if (name == "quantiles.csv")
                fans += prefix + lines[i] + "\n";
            else
                spag += prefix + lines[i] + "\n";
        }
        found = true;
    }
    if (!found) throw IoError("emit_plot_data: no per-cell plot artifacts found");
    detail::write_file(run_dir + "/plot_fans.csv", fans);
    detail::write_file(run_dir + "/plot_spaghetti.csv", spag);
}

} // namespace hybsur

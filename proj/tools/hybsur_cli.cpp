// Experiment CLI: dataset generation, surrogate training, beta sweeps,
// re-scoring, plot-data emission and run reports.
//
// Exit codes: 0 success, 1 hard error, 2 run completed but convergence-gate
// failures are present.

#include "hybsur/experiment.hpp"

#include <CLI11.hpp>
// httplib last: its transitive system headers define short macros that would
// otherwise mangle Eigen internals
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdio>
#include <iostream>

using namespace hybsur;

namespace {

struct CommonOpts {
    std::string case_name = "cs1";
    std::string method = "both";
    std::string preset = "desk";
    std::string out = "runs/latest";
    std::string covid_csv = "data/covid_italy.csv";
    std::vector<std::uint64_t> seeds = {1};
    std::vector<double> beta_grid;
    double rhat_gate = 1.05;
    int threads = 0;
    bool no_cache = false;
};

ExperimentConfig to_config(const CommonOpts& o) {
    ExperimentConfig cfg;
    cfg.case_study = case_from_name(o.case_name);
    if (o.method == "ps") cfg.method = MethodChoice::PowerScaling;
    else if (o.method == "pw") cfg.method = MethodChoice::PredictiveWeighting;
    else if (o.method == "both") cfg.method = MethodChoice::Both;
    else throw CLI::ValidationError("--method must be ps, pw or both");
    cfg.preset = o.preset == "paper" ? ChainPreset::Paper : ChainPreset::Desk;
    cfg.output_dir = o.out;
    cfg.covid_csv = o.covid_csv;
    cfg.seeds = o.seeds;
    cfg.beta_grid = o.beta_grid;
    cfg.rhat_gate = o.rhat_gate;
    cfg.threads = o.threads;
    cfg.reuse_cache = !o.no_cache;
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& o, bool with_grid) {
    cmd->add_option("--case", o.case_name, "Case study: cs1, cs1_2, cs2_1, cs2_2")
        ->default_val("cs1");
    cmd->add_option("--preset", o.preset, "Chain preset: desk (4x(500+250), thin 200) or paper (4x(1000+250), thin 1000)")
        ->check(CLI::IsMember({"desk", "paper"}))
        ->default_val("desk");
    cmd->add_option("--seed", o.seeds, "Seed(s); repeat the flag for multi-seed runs")
        ->default_val(std::vector<std::uint64_t>{1});
    cmd->add_option("--out", o.out, "Output/run directory")->default_val("runs/latest");
    cmd->add_option("--covid-csv", o.covid_csv,
                    "date,confirmed,recovered CSV for case study cs2_2")
        ->default_val("data/covid_italy.csv");
    cmd->add_option("--rhat-gate", o.rhat_gate, "Convergence threshold on split R-hat")
        ->default_val(1.05);
    cmd->add_option("--threads", o.threads,
                    "Parallel (seed, beta) cells; 0 honors HYBRID_SURROGATE_THREADS")
        ->default_val(0);
    if (with_grid) {
        cmd->add_option("--method", o.method, "ps, pw or both")->default_val("both");
        cmd->add_option("--beta-grid", o.beta_grid,
                        "Weighting factors in [0,1]; default 0,0.05,...,1");
        cmd->add_flag("--no-cache", o.no_cache, "Ignore cached posterior draws");
    }
}

// Optional convenience: download a daily country-level CSV (covid19datahub
// layout) and reduce it to the date,confirmed,recovered window this tool
// ingests.  Purely a cache-filler; nothing else depends on network access.
int fetch_covid(const std::string& host, const std::string& path, const std::string& out,
                const std::string& start_date, int days) {
    httplib::SSLClient cli(host);
    cli.set_follow_location(true);
    auto res = cli.Get(path);
    if (!res || res->status != 200) {
        std::fprintf(stderr, "fetch-covid: GET https://%s%s failed (%s)\n", host.c_str(),
                     path.c_str(), res ? std::to_string(res->status).c_str() : "no response");
        return 1;
    }
    std::istringstream in(res->body);
    std::string line;
    if (!std::getline(in, line)) {
        std::fprintf(stderr, "fetch-covid: empty body\n");
        return 1;
    }
    auto columns = hybsur::detail::split_csv_line(line);
    int c_date = -1, c_conf = -1, c_reco = -1;
    for (int i = 0; i < static_cast<int>(columns.size()); ++i) {
        if (columns[static_cast<std::size_t>(i)] == "date") c_date = i;
        if (columns[static_cast<std::size_t>(i)] == "confirmed") c_conf = i;
        if (columns[static_cast<std::size_t>(i)] == "recovered") c_reco = i;
    }
    if (c_date < 0 || c_conf < 0 || c_reco < 0) {
        std::fprintf(stderr, "fetch-covid: need date, confirmed, recovered columns\n");
        return 1;
    }
    std::map<std::string, std::pair<std::string, std::string>> by_date;
    while (std::getline(in, line)) {
        const auto f = hybsur::detail::split_csv_line(line);
        if (static_cast<int>(f.size()) <= std::max({c_date, c_conf, c_reco})) continue;
        by_date[f[static_cast<std::size_t>(c_date)]] = {f[static_cast<std::size_t>(c_conf)],
                                                        f[static_cast<std::size_t>(c_reco)]};
    }
    std::string csv = "date,confirmed,recovered\n";
    int y, mo, d;
    if (std::sscanf(start_date.c_str(), "%d-%d-%d", &y, &mo, &d) != 3) {
        std::fprintf(stderr, "fetch-covid: bad --start date\n");
        return 1;
    }
    long day0 = hybsur::detail::days_from_civil(y, mo, d);
    static const int mdays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    for (int k = 0; k < days; ++k) {
        char date[16];
        std::snprintf(date, sizeof(date), "%04d-%02d-%02d", y, mo, d);
        const auto it = by_date.find(date);
        if (it == by_date.end()) {
            std::fprintf(stderr, "fetch-covid: source is missing %s\n", date);
            return 1;
        }
        csv += std::string(date) + "," + it->second.first + "," + it->second.second + "\n";
        int md = mdays[mo - 1] + ((mo == 2 && (y % 4 == 0 && (y % 100 != 0 || y % 400 == 0))) ? 1 : 0);
        if (++d > md) {
            d = 1;
            if (++mo > 12) {
                mo = 1;
                ++y;
            }
        }
    }
    (void)day0;
    hybsur::detail::write_file(out, csv);
    std::printf("fetch-covid: wrote %d days to %s\n", days, out.c_str());
    return 0;
}

int report(const std::string& run_dir) {
    const auto rows = load_results_csv(run_dir + "/results.csv");
    if (rows.empty()) {
        std::fprintf(stderr, "report: no result rows in %s\n", run_dir.c_str());
        return 1;
    }
    // best beta per (case, split, method); flagged rows never enter the optimum
    std::map<std::string, std::map<std::string, std::pair<double, double>>> best_elpd;
    std::map<std::string, std::map<std::string, std::pair<double, double>>> best_rmse;
    int flagged = 0;
    for (const auto& r : rows) {
        if (!r.converged) {
            ++flagged;
            continue;
        }
        const std::string key = r.case_study + " " + r.split_label;
        auto& be = best_elpd[key];
        if (!be.count(r.method) || r.elpd > be[r.method].second)
            be[r.method] = {r.beta, r.elpd};
        if (r.rmse) {
            auto& br = best_rmse[key];
            if (!br.count(r.method) || *r.rmse < br[r.method].second)
                br[r.method] = {r.beta, *r.rmse};
        }
    }
    std::printf("run: %s (%zu rows, %d flagged non-converged)\n", run_dir.c_str(), rows.size(),
                flagged);
    for (const auto& [key, methods] : best_elpd) {
        std::printf("%s\n", key.c_str());
        for (const auto& [method, val] : methods) {
            std::printf("  %-3s best ELPD %10.4f at beta = %-5.3g", method.c_str(), val.second,
                        val.first);
            const auto br = best_rmse.find(key);
            if (br != best_rmse.end() && br->second.count(method)) {
                const auto& [b, v] = br->second.at(method);
                std::printf(" | best RMSE %10.4f at beta = %-5.3g", v, b);
            }
            std::printf("\n");
        }
    }
    return flagged > 0 ? 2 : 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian PCE surrogates trained on simulation and real-world data"};
    app.set_config("--config", "", "Read options from a key=value config file");
    app.require_subcommand(1);

    CommonOpts gen_o, train_o, sweep_o;
    std::string eval_dir, plot_dir, report_dir;
    double train_beta = 0.5;

    auto* gen = app.add_subcommand("gen-data", "Generate and persist the case-study datasets");
    add_common(gen, gen_o, false);

    auto* train_cmd =
        app.add_subcommand("train", "Train a single (case, method, beta, seed) fit");
    add_common(train_cmd, train_o, true);
    train_cmd->add_option("--beta", train_beta, "Weighting factor in [0, 1]")->required();

    auto* sweep = app.add_subcommand("sweep", "Run the full beta sweep over all seeds");
    add_common(sweep, sweep_o, true);

    auto* eval =
        app.add_subcommand("evaluate", "Recompute the result table from persisted draws");
    eval->add_option("--run-dir", eval_dir, "Run directory written by sweep/train")->required();

    auto* plot = app.add_subcommand("plot-data", "Emit consolidated plot CSV bundles");
    plot->add_option("--run-dir", plot_dir, "Run directory written by sweep/train")->required();

    auto* rep = app.add_subcommand("report", "Summarize a result table");
    rep->add_option("--run-dir", report_dir, "Run directory containing results.csv")->required();

    std::string fetch_host = "storage.covid19datahub.io";
    std::string fetch_path = "/level/1.csv";
    std::string fetch_out = "data/covid_fetched.csv";
    std::string fetch_start = "2020-02-24";
    int fetch_days = 74;
    auto* fetch = app.add_subcommand(
        "fetch-covid", "Download and cache a date,confirmed,recovered window (needs network)");
    fetch->add_option("--host", fetch_host, "HTTPS host")->capture_default_str();
    fetch->add_option("--path", fetch_path, "CSV path on the host")->capture_default_str();
    fetch->add_option("--out", fetch_out, "Output CSV path")->capture_default_str();
    fetch->add_option("--start", fetch_start, "First day (ISO date)")->capture_default_str();
    fetch->add_option("--days", fetch_days, "Window length in days")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto cfg = to_config(gen_o);
            for (std::uint64_t seed : cfg.seeds) {
                const CaseData cd = make_case_data(cfg.case_study, seed, cfg.covid_csv);
                const std::string dir = cfg.output_dir + "/" + case_name(cfg.case_study) +
                                        "/seed-" + std::to_string(seed);
                save_sim_dataset(dir + "/sim.csv", cd.sim);
                save_real_dataset(dir + "/real.csv", cd.real);
                for (const auto& ev : cd.evals) {
                    std::string label = ev.split_label;
                    for (auto& ch : label)
                        if (ch == '/' || ch == ':') ch = '_';
                    save_eval_set(dir + "/eval_" + label + "_" +
                                      (ev.kind == EvalKind::Noisy ? "noisy" : "truth") + ".csv",
                                  ev);
                }
                std::printf("gen-data: wrote %s\n", dir.c_str());
            }
            return 0;
        }
        if (train_cmd->parsed()) {
            auto cfg = to_config(train_o);
            cfg.beta_grid = {train_beta};
            const auto res = run_experiment(cfg);
            std::printf("train: %zu result rows in %s\n", res.rows.size(), res.run_dir.c_str());
            return res.any_nonconverged ? 2 : 0;
        }
        if (sweep->parsed()) {
            const auto cfg = to_config(sweep_o);
            const auto res = run_experiment(cfg);
            std::printf("sweep: %zu result rows in %s\n", res.rows.size(), res.run_dir.c_str());
            return res.any_nonconverged ? 2 : 0;
        }
        if (eval->parsed()) {
            const auto res = evaluate_run(eval_dir);
            std::printf("evaluate: %zu result rows in %s\n", res.rows.size(),
                        res.run_dir.c_str());
            return res.any_nonconverged ? 2 : 0;
        }
        if (plot->parsed()) {
            emit_plot_data(plot_dir);
            std::printf("plot-data: wrote plot_beta_curves.csv, plot_fans.csv, plot_spaghetti.csv in %s\n",
                        plot_dir.c_str());
            return 0;
        }
        if (rep->parsed()) return report(report_dir);
        if (fetch->parsed())
            return fetch_covid(fetch_host, fetch_path, fetch_out, fetch_start, fetch_days);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}

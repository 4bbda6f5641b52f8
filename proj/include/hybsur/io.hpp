#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "hybsur/datasets.hpp"
#include "hybsur/sampler.hpp"

namespace hybsur {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

/// %.17g round-trips IEEE doubles exactly.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (...) {
        throw IoError(concat("csv: cannot parse number '", s, "' in ", context));
    }
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(concat("csv: cannot open ", path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(concat("csv: cannot write ", path));
    out << content;
}

} // namespace detail

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Dataset CSV persistence
// ---------------------------------------------------------------------------

inline void save_sim_dataset(const std::string& path, const SimulationDataset& d) {
    std::string s;
    for (Eigen::Index k = 0; k < d.x.cols(); ++k) s += detail::concat("x", k, ",");
    for (Eigen::Index k = 0; k < d.omega.cols(); ++k) s += detail::concat("omega", k, ",");
    s += "y\n";
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        for (Eigen::Index k = 0; k < d.x.cols(); ++k) s += detail::fmt_double(d.x(i, k)) + ",";
        for (Eigen::Index k = 0; k < d.omega.cols(); ++k)
            s += detail::fmt_double(d.omega(i, k)) + ",";
        s += detail::fmt_double(d.y[i]) + "\n";
    }
    detail::write_file(path, s);
}

inline SimulationDataset load_sim_dataset(const std::string& path) {
    const auto lines = detail::read_lines(path);
    if (lines.empty()) throw IoError(detail::concat("csv: ", path, " is empty"));
    const auto header = detail::split_csv_line(lines[0]);
    int nx = 0, nw = 0;
    for (const auto& h : header) {
        if (h.rfind("x", 0) == 0) ++nx;
        else if (h.rfind("omega", 0) == 0) ++nw;
    }
    bool shaped = nx >= 1 && static_cast<int>(header.size()) == nx + nw + 1 &&
                  header.back() == "y";
    for (int k = 0; shaped && k < nx; ++k)
        shaped = header[static_cast<std::size_t>(k)] == detail::concat("x", k);
    for (int k = 0; shaped && k < nw; ++k)
        shaped = header[static_cast<std::size_t>(nx + k)] == detail::concat("omega", k);
    if (!shaped)
        throw IoError(detail::concat("csv: ", path, " is not a simulation dataset"));
    SimulationDataset d;
    const Eigen::Index n = static_cast<Eigen::Index>(lines.size()) - 1;
    d.x.resize(n, nx);
    d.omega.resize(n, nw);
    d.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto f = detail::split_csv_line(lines[static_cast<std::size_t>(i) + 1]);
        if (static_cast<int>(f.size()) != nx + nw + 1)
            throw IoError(detail::concat("csv: bad field count in ", path, " row ", i + 2));
        for (int k = 0; k < nx; ++k) d.x(i, k) = detail::parse_double(f[static_cast<std::size_t>(k)], path);
        for (int k = 0; k < nw; ++k)
            d.omega(i, k) = detail::parse_double(f[static_cast<std::size_t>(nx + k)], path);
        d.y[i] = detail::parse_double(f.back(), path);
    }
    d.validate();
    return d;
}

inline void save_real_dataset(const std::string& path, const RealDataset& d) {
    std::string s;
    for (Eigen::Index k = 0; k < d.x.cols(); ++k) s += detail::concat("x", k, ",");
    s += "y\n";
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        for (Eigen::Index k = 0; k < d.x.cols(); ++k) s += detail::fmt_double(d.x(i, k)) + ",";
        s += detail::fmt_double(d.y[i]) + "\n";
    }
    detail::write_file(path, s);
}

inline RealDataset load_real_dataset(const std::string& path) {
    const auto lines = detail::read_lines(path);
    if (lines.empty()) throw IoError(detail::concat("csv: ", path, " is empty"));
    const auto header = detail::split_csv_line(lines[0]);
    const int nx = static_cast<int>(header.size()) - 1;
    bool shaped = nx >= 1 && header.back() == "y";
    for (int k = 0; shaped && k < nx; ++k)
        shaped = header[static_cast<std::size_t>(k)] == detail::concat("x", k);
    if (!shaped)
        throw IoError(detail::concat("csv: ", path, " is not a real dataset"));
    RealDataset d;
    const Eigen::Index n = static_cast<Eigen::Index>(lines.size()) - 1;
    d.x.resize(n, nx);
    d.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto f = detail::split_csv_line(lines[static_cast<std::size_t>(i) + 1]);
        if (static_cast<int>(f.size()) != nx + 1)
            throw IoError(detail::concat("csv: bad field count in ", path, " row ", i + 2));
        for (int k = 0; k < nx; ++k)
            d.x(i, k) = detail::parse_double(f[static_cast<std::size_t>(k)], path);
        d.y[i] = detail::parse_double(f.back(), path);
    }
    d.validate();
    return d;
}

inline void save_eval_set(const std::string& path, const EvaluationSet& e) {
    std::string s;
    for (Eigen::Index k = 0; k < e.inputs.cols(); ++k) s += detail::concat("x", k, ",");
    s += "target,kind,split_label\n";
    const std::string kind = e.kind == EvalKind::Noisy ? "noisy" : "truth";
    for (Eigen::Index i = 0; i < e.size(); ++i) {
        for (Eigen::Index k = 0; k < e.inputs.cols(); ++k)
            s += detail::fmt_double(e.inputs(i, k)) + ",";
        s += detail::fmt_double(e.targets[i]) + "," + kind + "," + e.split_label + "\n";
    }
    detail::write_file(path, s);
}

inline EvaluationSet load_eval_set(const std::string& path) {
    const auto lines = detail::read_lines(path);
    if (lines.size() < 2) throw IoError(detail::concat("csv: ", path, " has no rows"));
    const auto header = detail::split_csv_line(lines[0]);
    const int nx = static_cast<int>(header.size()) - 3;
    if (nx < 1) throw IoError(detail::concat("csv: ", path, " is not an evaluation set"));
    EvaluationSet e;
    const Eigen::Index n = static_cast<Eigen::Index>(lines.size()) - 1;
    e.inputs.resize(n, nx);
    e.targets.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto f = detail::split_csv_line(lines[static_cast<std::size_t>(i) + 1]);
        if (static_cast<int>(f.size()) != nx + 3)
            throw IoError(detail::concat("csv: bad field count in ", path, " row ", i + 2));
        for (int k = 0; k < nx; ++k)
            e.inputs(i, k) = detail::parse_double(f[static_cast<std::size_t>(k)], path);
        e.targets[i] = detail::parse_double(f[static_cast<std::size_t>(nx)], path);
        e.kind = f[static_cast<std::size_t>(nx) + 1] == "noisy" ? EvalKind::Noisy : EvalKind::Truth;
        e.split_label = f[static_cast<std::size_t>(nx) + 2];
    }
    e.validate();
    return e;
}

// ---------------------------------------------------------------------------
// Posterior draw persistence: readable CSV plus a compact binary cache
// ---------------------------------------------------------------------------

inline const char* stage_name(StageTag tag) {
    switch (tag) {
    case StageTag::JointTraining: return "joint";
    case StageTag::Refinement: return "refined";
    case StageTag::DataDriven: return "data_driven";
    }
    return "unknown";
}

inline StageTag stage_from_name(const std::string& s) {
    if (s == "joint") return StageTag::JointTraining;
    if (s == "refined") return StageTag::Refinement;
    if (s == "data_driven") return StageTag::DataDriven;
    throw IoError(detail::concat("csv: unknown stage tag '", s, "'"));
}

inline void save_draws_csv(const std::string& path, const PosteriorDraws& d) {
    std::string s = "chain,draw,stage";
    for (const auto& n : d.parameter_names) s += "," + n;
    s += "\n";
    const std::string stage = stage_name(d.stage_tag);
    for (int c = 0; c < d.n_chains(); ++c) {
        const Mat& m = d.chains[static_cast<std::size_t>(c)];
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            s += detail::concat(c, ",", r, ",", stage);
            for (Eigen::Index p = 0; p < m.cols(); ++p)
                s += "," + detail::fmt_double(m(r, p));
            s += "\n";
        }
    }
    detail::write_file(path, s);
}

inline PosteriorDraws load_draws_csv(const std::string& path) {
    const auto lines = detail::read_lines(path);
    if (lines.size() < 2) throw IoError(detail::concat("csv: ", path, " has no draws"));
    const auto header = detail::split_csv_line(lines[0]);
    if (header.size() < 4 || header[0] != "chain" || header[1] != "draw" || header[2] != "stage")
        throw IoError(detail::concat("csv: ", path, " is not a draws file"));
    PosteriorDraws d;
    d.parameter_names.assign(header.begin() + 3, header.end());
    const Eigen::Index np = static_cast<Eigen::Index>(d.parameter_names.size());
    std::vector<std::vector<Vec>> rows_by_chain;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = detail::split_csv_line(lines[i]);
        if (f.size() != header.size())
            throw IoError(detail::concat("csv: bad field count in ", path, " row ", i + 1));
        const int chain = static_cast<int>(detail::parse_double(f[0], path));
        if (i == 1) d.stage_tag = stage_from_name(f[2]);
        if (chain >= static_cast<int>(rows_by_chain.size()))
            rows_by_chain.resize(static_cast<std::size_t>(chain) + 1);
        Vec row(np);
        for (Eigen::Index p = 0; p < np; ++p)
            row[p] = detail::parse_double(f[static_cast<std::size_t>(p) + 3], path);
        rows_by_chain[static_cast<std::size_t>(chain)].push_back(std::move(row));
    }
    for (const auto& rows : rows_by_chain) {
        Mat m(static_cast<Eigen::Index>(rows.size()), np);
        for (std::size_t r = 0; r < rows.size(); ++r) m.row(static_cast<Eigen::Index>(r)) = rows[r];
        d.chains.push_back(std::move(m));
        d.accept_rates.push_back(0.0);
    }
    d.validate();
    return d;
}

/// Compact cache beside the CSV, keyed by a caller-supplied configuration
/// hash; stale caches (hash mismatch) read as absent.
inline void save_draws_bin(const std::string& path, const PosteriorDraws& d,
                           std::uint64_t config_hash) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(detail::concat("cache: cannot write ", path));
    const char magic[8] = {'H', 'S', 'U', 'R', 'B', 'I', 'N', '1'};
    out.write(magic, 8);
    out.write(reinterpret_cast<const char*>(&config_hash), 8);
    const std::uint32_t stage = static_cast<std::uint32_t>(d.stage_tag);
    const std::uint32_t n_chains = static_cast<std::uint32_t>(d.n_chains());
    const std::uint32_t n_draws = static_cast<std::uint32_t>(d.n_draws());
    const std::uint32_t n_params = static_cast<std::uint32_t>(d.n_params());
    out.write(reinterpret_cast<const char*>(&stage), 4);
    out.write(reinterpret_cast<const char*>(&n_chains), 4);
    out.write(reinterpret_cast<const char*>(&n_draws), 4);
    out.write(reinterpret_cast<const char*>(&n_params), 4);
    for (const auto& name : d.parameter_names) {
        const std::uint32_t len = static_cast<std::uint32_t>(name.size());
        out.write(reinterpret_cast<const char*>(&len), 4);
        out.write(name.data(), len);
    }
    for (const Mat& m : d.chains)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                const double v = m(r, c);
                out.write(reinterpret_cast<const char*>(&v), 8);
            }
    for (double a : d.accept_rates) out.write(reinterpret_cast<const char*>(&a), 8);
}

inline std::optional<PosteriorDraws> load_draws_bin(const std::string& path,
                                                    std::uint64_t expected_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    char magic[8];
    std::uint64_t hash = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&hash), 8);
    if (!in || std::string(magic, 8) != "HSURBIN1" || hash != expected_hash) return std::nullopt;
    std::uint32_t stage, n_chains, n_draws, n_params;
    in.read(reinterpret_cast<char*>(&stage), 4);
    in.read(reinterpret_cast<char*>(&n_chains), 4);
    in.read(reinterpret_cast<char*>(&n_draws), 4);
    in.read(reinterpret_cast<char*>(&n_params), 4);
    if (!in) return std::nullopt;
    PosteriorDraws d;
    d.stage_tag = static_cast<StageTag>(stage);
    for (std::uint32_t i = 0; i < n_params; ++i) {
        std::uint32_t len;
        in.read(reinterpret_cast<char*>(&len), 4);
        std::string name(len, '\0');
        in.read(name.data(), len);
        d.parameter_names.push_back(name);
    }
    for (std::uint32_t c = 0; c < n_chains; ++c) {
        Mat m(n_draws, n_params);
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index p = 0; p < m.cols(); ++p) {
                double v;
                in.read(reinterpret_cast<char*>(&v), 8);
                m(r, p) = v;
            }
        d.chains.push_back(std::move(m));
    }
    for (std::uint32_t c = 0; c < n_chains; ++c) {
        double a = 0.0;
        in.read(reinterpret_cast<char*>(&a), 8);
        d.accept_rates.push_back(a);
    }
    if (!in) return std::nullopt;
    return d;
}

// ---------------------------------------------------------------------------
// Result table
// ---------------------------------------------------------------------------

struct ResultRow {
    std::string case_study;
    std::string method; // "ps" or "pw"
    double beta = 0.0;
    std::string split_label;
    std::uint64_t seed = 0;
    double elpd = 0.0;
    std::optional<double> rmse; // absent for noisy-only splits
    double wall_time_seconds = 0.0;
    double rhat_max = 0.0;
    bool converged = true;
};

/// Deterministic columns only; wall times go to a separate timings file so
/// that re-runs with identical configuration are byte-identical.
inline void save_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
    std::string s = "case_study,method,beta,split_label,seed,elpd,rmse,rhat_max,converged\n";
    for (const auto& r : rows) {
        s += r.case_study + "," + r.method + "," + detail::fmt_double(r.beta) + "," +
             r.split_label + "," + detail::concat(r.seed) + "," + detail::fmt_double(r.elpd) +
             "," + (r.rmse ? detail::fmt_double(*r.rmse) : std::string("")) + "," +
             detail::fmt_double(r.rhat_max) + "," + (r.converged ? "1" : "0") + "\n";
    }
    detail::write_file(path, s);
}

inline void save_timings_csv(const std::string& path, const std::vector<ResultRow>& rows) {
    std::string s = "case_study,method,beta,split_label,seed,wall_time_seconds\n";
    for (const auto& r : rows)
        s += r.case_study + "," + r.method + "," + detail::fmt_double(r.beta) + "," +
             r.split_label + "," + detail::concat(r.seed) + "," +
             detail::fmt_double(r.wall_time_seconds) + "\n";
    detail::write_file(path, s);
}

inline std::vector<ResultRow> load_results_csv(const std::string& path) {
    const auto lines = detail::read_lines(path);
    if (lines.empty()) throw IoError(detail::concat("csv: ", path, " is empty"));
    if (lines[0] != "case_study,method,beta,split_label,seed,elpd,rmse,rhat_max,converged")
        throw IoError(detail::concat("csv: ", path, " is not a result table"));
    std::vector<ResultRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = detail::split_csv_line(lines[i]);
        if (f.size() != 9)
            throw IoError(detail::concat("csv: bad field count in ", path, " row ", i + 1));
        ResultRow r;
        r.case_study = f[0];
        r.method = f[1];
        r.beta = detail::parse_double(f[2], path);
        r.split_label = f[3];
        r.seed = static_cast<std::uint64_t>(std::stoull(f[4]));
        r.elpd = detail::parse_double(f[5], path);
        if (!f[6].empty()) r.rmse = detail::parse_double(f[6], path);
        r.rhat_max = detail::parse_double(f[7], path);
        r.converged = f[8] == "1";
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace hybsur

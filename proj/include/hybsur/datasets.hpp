#pragma once

#include <string>

#include "hybsur/common.hpp"

namespace hybsur {

/// Simulation training data: all inputs known, (x, omega) -> y.
struct SimulationDataset {
    Mat x;     // N x dim_x
    Mat omega; // N x dim_omega
    Vec y;     // N

    Eigen::Index size() const { return y.size(); }

    void validate() const {
        if (x.rows() != y.size() || omega.rows() != y.size())
            throw std::invalid_argument("SimulationDataset: row counts disagree");
        if (!x.allFinite() || !omega.allFinite() || !y.allFinite())
            throw std::invalid_argument("SimulationDataset: non-finite values");
    }
};

/// Real-world training data: only x is observed, omega is latent.
struct RealDataset {
    Mat x; // N x dim_x
    Vec y; // N

    Eigen::Index size() const { return y.size(); }

    void validate() const {
        if (x.rows() != y.size())
            throw std::invalid_argument("RealDataset: row counts disagree");
        if (!x.allFinite() || !y.allFinite())
            throw std::invalid_argument("RealDataset: non-finite values");
    }
};

enum class EvalKind { Noisy, Truth };

/// Held-out evaluation inputs with either noisy observations (for ELPD) or
/// noise-free truth values (for RMSE).
struct EvaluationSet {
    Mat inputs;  // N x dim_x
    Vec targets; // N
    EvalKind kind = EvalKind::Noisy;
    std::string split_label;

    Eigen::Index size() const { return targets.size(); }

    void validate() const {
        if (inputs.rows() != targets.size())
            throw std::invalid_argument("EvaluationSet: row counts disagree");
    }
};

} // namespace hybsur

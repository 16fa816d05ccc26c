// SPDX-License-Identifier: Apache-2.0

#ifndef RSCF_ALLOCATION_HPP
#define RSCF_ALLOCATION_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "rscf/closed_form.hpp"

namespace rscf {

struct HeuristicParams {
    double rho0 = 0.5;     // initial split
    double epsilon = 1.2;  // calibration-range scale
    double a = 0.5;        // splitting exponent
    double abar = 0.25;    // control exponent
    void validate() const;
};

// rho_l = rho0 + Delta_l with Delta_l proportional to the deviation of
// (mean_k zeta_kl)^a from its AP average; Delta = 0 when all APs tie.
// Throws std::invalid_argument for any zeta <= 0.
Eigen::VectorXd heuristic_split(const Eigen::MatrixXd& zeta, const HeuristicParams& params);

// eta_kl = (zeta_k / max zeta_k') * (min zeta_l' / zeta_l) with
// zeta_k = (mean_l zeta_kl)^abar and zeta_l = (mean_k zeta_kl)^abar.
Eigen::MatrixXd heuristic_control(const Eigen::MatrixXd& zeta, const HeuristicParams& params);

// Both heuristics together.
PowerAllocation heuristic_allocation(const Eigen::MatrixXd& zeta, const HeuristicParams& params);

struct GAConfig {
    int population = 50;
    int generations = 200;
    double crossover_rate = 0.8;
    double mutation_rate = 0.1;
    double mutation_sigma = 0.08;
    int tournament = 3;
    int elitism = 2;
    double blend_alpha = 0.5;
    std::uint64_t seed = 1;

    // Budget used for expert-dataset generation.
    static GAConfig reduced();
    void validate() const;
};

struct GAGeneration {
    int generation = 0;
    double best = 0.0;  // best-so-far
    double mean = 0.0;  // population mean of this generation
};

struct GAResult {
    Eigen::VectorXd best;
    double best_value = 0.0;
    std::vector<GAGeneration> history;  // generation 0 is the initial population
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

// Real-coded GA maximizing objective over the box [lower, upper]: tournament
// selection, BLX-alpha blend crossover, Gaussian mutation clamped to the
// box, elitism. Optional seeds replace the first members of the initial
// population (clamped). Objective calls within a generation may run
// concurrently.
GAResult ga_optimize(const Objective& objective, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                     const GAConfig& cfg, const std::vector<Eigen::VectorXd>& seeds = {});

enum class AllocVars { rho, eta, joint };

struct AllocationResult {
    PowerAllocation alloc;
    double sum_se = 0.0;
    std::vector<GAGeneration> history;
};

// Maximizes the closed-form sum SE over rho (eta fixed to base.eta), eta
// (rho fixed to base.rho) or both. Seeds are full allocations.
AllocationResult ga_allocate(const ClosedFormEvaluator& evaluator, AllocVars vars, const PowerAllocation& base,
                             const GAConfig& cfg, const std::vector<PowerAllocation>& seeds = {});

}  // namespace rscf

#endif

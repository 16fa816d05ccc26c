// SPDX-License-Identifier: Apache-2.0

#ifndef RSCF_EXPERIMENTS_HPP
#define RSCF_EXPERIMENTS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "rscf/allocation.hpp"
#include "rscf/diffusion.hpp"
#include "rscf/monte_carlo.hpp"

namespace rscf {

// One random deployment with everything needed to evaluate it.
struct Scenario {
    SystemConfig cfg;
    Placement placement;
    PilotAssignment pilots;
    LinkStatistics stats;
    EstimationStatistics est;
};

// Geometry `index` of a sweep: its seed is derived from (seed, index), so
// the same index gives the same deployment in every experiment.
Scenario make_scenario(const SystemConfig& base, std::uint64_t seed, std::size_t index, bool perfect_csi = false);
// Rebuilds statistics of an existing placement under a changed config.
Scenario rebuild_scenario(const Scenario& s, const SystemConfig& cfg, bool perfect_csi = false);

// n uniform points on [0, hi].
std::vector<double> rho_grid(int n = 21, double hi = 0.99);
// rho_grid() plus 1 - 10^-m for m = 2.5, 3, 3.5, 4, and 1: resolves splits
// close to full common power, where the best rate sits at high SNR.
std::vector<double> rho_grid_extended();

struct GridSweep {
    std::vector<double> values;  // sum SE per grid point
    std::size_t best = 0;
    double best_value() const { return values[best]; }
};

// Closed-form sum SE along a rho0 grid for three allocation families.
GridSweep sweep_equal(const ClosedFormEvaluator& ev, const std::vector<double>& grid);
GridSweep sweep_heuristic_split(const ClosedFormEvaluator& ev, const Eigen::MatrixXd& zeta,
                                const std::vector<double>& grid, HeuristicParams params = {});
GridSweep sweep_heuristic_joint(const ClosedFormEvaluator& ev, const Eigen::MatrixXd& zeta,
                                const std::vector<double>& grid, HeuristicParams params = {});

// Fixed geometry whose statistics are re-derived for each environment
// (Rician factor and ASD); the dynamic-optimization problem of the
// diffusion model.
class DynamicProblem {
public:
    DynamicProblem(const SystemConfig& base, std::uint64_t seed);

    int dim() const { return scenario_.cfg.num_aps * (1 + scenario_.cfg.num_ues); }
    const Scenario& scenario() const { return scenario_; }
    ClosedFormEvaluator evaluator(const Environment& env) const;
    double objective(const Environment& env, const Eigen::VectorXd& x) const;

    // Heuristic split + control at the best rho0 of the grid.
    PowerAllocation heuristic(const ClosedFormEvaluator& ev, const std::vector<double>& grid) const;
    // Joint GA seeded with the heuristic, the best equal split and any extra seeds.
    ExpertRecord expert(const Environment& env, const GAConfig& ga, const std::vector<double>& grid,
                        const std::vector<PowerAllocation>& extra = {}) const;

private:
    Scenario scenario_;
};

enum class ExperimentId {
    cdf,
    power_sweep,
    rho_sweep_split,
    rho_sweep_control,
    ap_sweep,
    rician_sweep,
    train_diffusion,
    eval_dynamic,
};

std::string to_string(ExperimentId id);
ExperimentId experiment_from_string(const std::string& name);

struct ExperimentSpec {
    ExperimentId id = ExperimentId::cdf;
    SystemConfig system;
    bool tau_p_auto = true;          // tau_p = max(1, K / 2)
    std::vector<double> grid;        // sweep axis; empty selects the experiment default
    std::vector<int> ue_counts;      // rician_sweep variants
    int n_geometries = 50;
    std::size_t n_blocks = 10000;
    std::string output = "results";
    std::uint64_t seed = 1;
    GAConfig ga;
    GAConfig expert_ga = GAConfig::reduced();
    TrainConfig train;
    std::vector<double> expert_kappa_db{-10, -6, -2, 2, 6, 10, 14, 18};
    std::vector<double> expert_asd_deg{5, 20, 35, 50, 65, 80};
    std::vector<double> eval_kappa_db{-8, 0, 8, 16};
    std::vector<double> eval_asd_deg{12.5, 42.5, 72.5};
    std::string checkpoint;          // eval_dynamic: reuse instead of training

    // Throws std::invalid_argument naming the offending field.
    void validate() const;
    bool operator==(const ExperimentSpec& o) const;
};

// key = value lines, '#' comments, lists comma separated. Unknown keys and
// malformed values throw std::invalid_argument with the line number.
ExperimentSpec parse_config_text(const std::string& text, const std::string& origin = "<config>");
ExperimentSpec parse_config(const std::string& path);
std::string serialize(const ExperimentSpec& spec);

// Desk-scale spec for a figure id (fig2..fig9).
ExperimentSpec figure_spec(const std::string& figure_id);

struct ExperimentOutput {
    std::string csv_path;
    std::string sidecar_path;
    std::size_t rows = 0;
};

// Full GA solution at the centre of the expert grid; extra seed of every
// expert run so that neighbouring experts land in the same basin.
std::vector<PowerAllocation> expert_anchor(const ExperimentSpec& spec, const DynamicProblem& problem);

// Runs the experiment and writes <output>/<id>.csv plus <id>.json.
ExperimentOutput run_experiment(const ExperimentSpec& spec);

}  // namespace rscf

#endif

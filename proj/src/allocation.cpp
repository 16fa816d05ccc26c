// SPDX-License-Identifier: Apache-2.0

#include "rscf/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rscf/parallel.hpp"
#include "rscf/rng.hpp"

namespace rscf {

namespace {

void check_zeta(const Eigen::MatrixXd& zeta)
{
    if (zeta.size() == 0) throw std::invalid_argument("heuristic: empty zeta matrix");
    if (!(zeta.minCoeff() > 0.0)) throw std::invalid_argument("heuristic: every zeta_kl must be positive");
}

}  // namespace

void HeuristicParams::validate() const
{
    if (!(rho0 >= 0.0 && rho0 <= 1.0)) throw std::invalid_argument("rho0: must lie in [0, 1]");
    if (!(epsilon > 1.0)) throw std::invalid_argument("epsilon: must exceed 1");
}

Eigen::VectorXd heuristic_split(const Eigen::MatrixXd& zeta, const HeuristicParams& params)
{
    check_zeta(zeta);
    params.validate();
    const Eigen::VectorXd per_ap = zeta.colwise().mean().transpose().array().pow(params.a);
    const double avg = per_ap.mean();
    const Eigen::VectorXd dev = per_ap.array() - avg;
    const double spread = dev.cwiseAbs().maxCoeff();
    const double omega = std::min(params.rho0, 1.0 - params.rho0) / params.epsilon;
    Eigen::VectorXd rho = Eigen::VectorXd::Constant(zeta.cols(), params.rho0);
    if (spread > 0.0) rho += omega * dev / spread;
    return rho.cwiseMax(0.0).cwiseMin(1.0);
}

Eigen::MatrixXd heuristic_control(const Eigen::MatrixXd& zeta, const HeuristicParams& params)
{
    check_zeta(zeta);
    const Eigen::VectorXd ue = zeta.rowwise().mean().array().pow(params.abar);
    const Eigen::VectorXd ap = zeta.colwise().mean().transpose().array().pow(params.abar);
    const double ue_max = ue.maxCoeff();
    const double ap_min = ap.minCoeff();
    Eigen::MatrixXd eta(zeta.rows(), zeta.cols());
    for (Eigen::Index k = 0; k < zeta.rows(); ++k)
        for (Eigen::Index l = 0; l < zeta.cols(); ++l) eta(k, l) = (ue(k) / ue_max) * (ap_min / ap(l));
    return eta.cwiseMin(1.0);
}

PowerAllocation heuristic_allocation(const Eigen::MatrixXd& zeta, const HeuristicParams& params)
{
    return {heuristic_split(zeta, params), heuristic_control(zeta, params)};
}

GAConfig GAConfig::reduced()
{
    GAConfig c;
    c.population = 24;
    c.generations = 60;
    return c;
}

void GAConfig::validate() const
{
    auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (population < 2) throw std::invalid_argument("population: must be >= 2");
    if (generations < 0) throw std::invalid_argument("generations: must be >= 0");
    if (!prob(crossover_rate)) throw std::invalid_argument("crossover_rate: must lie in [0, 1]");
    if (!prob(mutation_rate)) throw std::invalid_argument("mutation_rate: must lie in [0, 1]");
    if (!(mutation_sigma >= 0.0)) throw std::invalid_argument("mutation_sigma: must be >= 0");
    if (tournament < 1) throw std::invalid_argument("tournament: must be >= 1");
    if (elitism < 1 || elitism > population) throw std::invalid_argument("elitism: must lie in [1, population]");
    if (!(blend_alpha >= 0.0)) throw std::invalid_argument("blend_alpha: must be >= 0");
}

GAResult ga_optimize(const Objective& objective, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                     const GAConfig& cfg, const std::vector<Eigen::VectorXd>& seeds)
{
    cfg.validate();
    const Eigen::Index dim = lower.size();
    if (dim < 1 || upper.size() != dim) throw std::invalid_argument("ga_optimize: bounds dimension mismatch");
    if ((upper - lower).minCoeff() < 0.0) throw std::invalid_argument("ga_optimize: lower bound exceeds upper bound");
    for (const auto& s : seeds)
        if (s.size() != dim) throw std::invalid_argument("ga_optimize: seed dimension mismatch");

    Rng rng(cfg.seed, Stream::ga);
    const int P = cfg.population;
    auto clamp = [&](Eigen::VectorXd& x) { x = x.cwiseMax(lower).cwiseMin(upper); };

    std::vector<Eigen::VectorXd> pop(P, Eigen::VectorXd(dim));
    for (int p = 0; p < P; ++p) {
        if (p < static_cast<int>(seeds.size())) {
            pop[p] = seeds[p];
        } else {
            for (Eigen::Index d = 0; d < dim; ++d) pop[p](d) = rng.uniform(lower(d), upper(d));
        }
        clamp(pop[p]);
    }
    std::vector<double> fit(P);
    auto evaluate = [&] {
        parallel_for(P, [&](std::size_t p) { fit[p] = objective(pop[p]); });
    };

    GAResult result;
    auto record = [&](int gen) {
        const auto best = std::max_element(fit.begin(), fit.end()) - fit.begin();
        if (gen == 0 || fit[best] > result.best_value) {
            result.best_value = fit[best];
            result.best = pop[best];
        }
        const double mean = std::accumulate(fit.begin(), fit.end(), 0.0) / P;
        result.history.push_back({gen, result.best_value, mean});
    };
    evaluate();
    record(0);

    auto tournament = [&]() -> const Eigen::VectorXd& {
        std::size_t best = rng.index(P);
        for (int t = 1; t < cfg.tournament; ++t) {
            const std::size_t c = rng.index(P);
            if (fit[c] > fit[best]) best = c;
        }
        return pop[best];
    };

    std::vector<int> order(P);
    for (int gen = 1; gen <= cfg.generations; ++gen) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fit[a] > fit[b]; });

        std::vector<Eigen::VectorXd> next;
        next.reserve(P);
        for (int e = 0; e < cfg.elitism; ++e) next.push_back(pop[order[e]]);
        while (static_cast<int>(next.size()) < P) {
            Eigen::VectorXd a = tournament();
            Eigen::VectorXd b = tournament();
            if (rng.uniform() < cfg.crossover_rate) {
                for (Eigen::Index d = 0; d < dim; ++d) {
                    const double lo = std::min(a(d), b(d));
                    const double hi = std::max(a(d), b(d));
                    const double ext = cfg.blend_alpha * (hi - lo);
                    const double ca = rng.uniform(lo - ext, hi + ext);
                    const double cb = rng.uniform(lo - ext, hi + ext);
                    a(d) = ca;
                    b(d) = cb;
                }
            }
            for (Eigen::VectorXd* child : {&a, &b}) {
                for (Eigen::Index d = 0; d < dim; ++d)
                    if (rng.uniform() < cfg.mutation_rate)
                        (*child)(d) += cfg.mutation_sigma * (upper(d) - lower(d)) * rng.normal();
                clamp(*child);
                if (static_cast<int>(next.size()) < P) next.push_back(std::move(*child));
            }
        }
        pop = std::move(next);
        evaluate();
        record(gen);
    }
    return result;
}

AllocationResult ga_allocate(const ClosedFormEvaluator& evaluator, AllocVars vars, const PowerAllocation& base,
                             const GAConfig& cfg, const std::vector<PowerAllocation>& seeds)
{
    const int K = evaluator.num_ues();
    const int L = evaluator.num_aps();
    base.validate(K, L);

    // Maps a GA genome onto a full allocation.
    auto expand = [&](const Eigen::VectorXd& x) {
        PowerAllocation a = base;
        switch (vars) {
        case AllocVars::rho:
            a.rho = x;
            break;
        case AllocVars::eta:
            a = PowerAllocation::from_vector((Eigen::VectorXd(L + K * L) << base.rho, x).finished(), K, L);
            break;
        case AllocVars::joint:
            a = PowerAllocation::from_vector(x, K, L);
            break;
        }
        return a;
    };
    auto genome = [&](const PowerAllocation& a) -> Eigen::VectorXd {
        a.validate(K, L);
        const Eigen::VectorXd full = a.to_vector();
        switch (vars) {
        case AllocVars::rho:
            return a.rho;
        case AllocVars::eta:
            return full.tail(std::ptrdiff_t(K) * L);
        case AllocVars::joint:
            break;
        }
        return full;
    };

    const Eigen::Index dim = vars == AllocVars::rho ? L : vars == AllocVars::eta ? K * L : L + K * L;
    std::vector<Eigen::VectorXd> seed_genomes;
    for (const auto& s : seeds) seed_genomes.push_back(genome(s));

    const GAResult r = ga_optimize([&](const Eigen::VectorXd& x) { return evaluator.sum_se(expand(x)); },
                                   Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim), cfg, seed_genomes);
    return {expand(r.best), r.best_value, r.history};
}

}  // namespace rscf

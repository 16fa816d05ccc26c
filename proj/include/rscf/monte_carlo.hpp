// SPDX-License-Identifier: Apache-2.0

#ifndef RSCF_MONTE_CARLO_HPP
#define RSCF_MONTE_CARLO_HPP

#include <cstdint>
#include <vector>

#include "rscf/closed_form.hpp"

namespace rscf {

// Normalized precoders of one coherence block.
struct PrecoderSet {
    int num_ues = 0;
    int num_aps = 0;
    std::vector<CVec> v_common;   // per AP: sqrt(mu_c,l) sum_i ghat_il
    std::vector<CVec> v_private;  // per (i, l), UE-major: sqrt(mu_il) ghat_il
    const CVec& priv(int i, int l) const { return v_private[std::size_t(i) * num_aps + l]; }
};

PrecoderSet build_precoders(const EstimateRealization& block, const Normalizers& mu);

struct BlockSinrs {
    Eigen::VectorXd common;
    Eigen::VectorXd priv;
};

// Instantaneous SINRs seen by UEs that know their own estimates ghat_kl and
// treat the estimation error through its covariance C_kl.
BlockSinrs instantaneous_sinrs(const EstimateRealization& block, const EstimationStatistics& est,
                               const PrecoderSet& precoders, const PowerAllocation& alloc, double downlink_mw,
                               double noise_mw);

struct AchievableReport {
    double sum_se = 0.0;
    double sum_se_stderr = 0.0;
    double se_common = 0.0;
    Eigen::VectorXd se_private;
    double prelog = 0.0;
    std::size_t blocks = 0;
};

struct McSettings {
    double downlink_mw = 0.0;
    double noise_mw = 0.0;
    double prelog = 1.0;
    std::size_t n_blocks = 10000;
    std::uint64_t seed = 1;
};

McSettings mc_settings(const SystemConfig& cfg, std::size_t n_blocks, std::uint64_t seed);

// Block-averaged achievable sum SE; the min over UEs of the common SINR is
// taken inside every block. All allocations share the same channel draws,
// so differences between them are paired.
std::vector<AchievableReport> achievable_sum_se(const LinkStatistics& stats, const EstimationStatistics& est,
                                                const PilotAssignment& pilots,
                                                const std::vector<PowerAllocation>& allocs, const McSettings& mc);

AchievableReport achievable_sum_se(const LinkStatistics& stats, const EstimationStatistics& est,
                                   const PilotAssignment& pilots, const PowerAllocation& alloc, const McSettings& mc);

enum class MomentKind {
    first,          // E{g_kl^H ghat_il}
    second,         // E{|g_kl^H ghat_il|^2}
    upsilon3,       // E{(g_kl^H ghat_il)^* (g_kl^H ghat_jl)}
    upsilon4,       // E{(ghat_kl^H ghat_il)^* (ghat_kl^H ghat_jl)}
    upsilon5,       // E{(gtilde_kl^H ghat_il)^* (gtilde_kl^H ghat_jl)}
    common_norm,    // E{||sum_i ghat_il||^2}
    private_norm,   // E{||ghat_il||^2}
    transmit_power, // E{||x_l||^2}, requires an allocation
};

struct MomentQuery {
    MomentKind kind = MomentKind::first;
    int k = 0;
    int i = 0;
    int j = 0;
    int l = 0;
};

struct MomentEstimate {
    cplx value;
    double stderr_ = 0.0;  // sqrt(E|x - mean|^2 / n)
};

// Sample-mean estimators over n_blocks independent draws, all queries on the
// same draws. Throws std::invalid_argument for an unknown kind, an index
// outside the system, or transmit_power without an allocation.
std::vector<MomentEstimate> mc_moment_estimators(const LinkStatistics& stats, const EstimationStatistics& est,
                                                 const PilotAssignment& pilots,
                                                 const std::vector<MomentQuery>& queries, const McSettings& mc,
                                                 const PowerAllocation* alloc = nullptr);

// UatF SINRs assembled from sample moments of the precoded true channel:
// numerator |E{DS}|^2, beamforming uncertainty Var{DS}, interference E{|.|^2}.
SEReport uatf_sample_assembly(const LinkStatistics& stats, const EstimationStatistics& est,
                              const PilotAssignment& pilots, const PowerAllocation& alloc, const McSettings& mc);

}  // namespace rscf

#endif

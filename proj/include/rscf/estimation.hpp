// SPDX-License-Identifier: Apache-2.0

#ifndef RSCF_ESTIMATION_HPP
#define RSCF_ESTIMATION_HPP

#include <vector>

#include "rscf/geometry.hpp"

namespace rscf {

struct PilotAssignment {
    std::vector<int> pilot_of;                // UE -> pilot index in [0, tau_p)
    std::vector<std::vector<int>> copilots;   // P_k, sorted, always contains k

    int num_ues() const { return static_cast<int>(pilot_of.size()); }
    bool shares_pilot(int k, int i) const { return pilot_of[k] == pilot_of[i]; }
};

// Balanced: UEs shuffled, then dealt round-robin over the pilots.
PilotAssignment assign_pilots(int num_ues, int tau_p, Rng& rng, bool fully_random = false);

// Builds P_k from an explicit pilot index per UE.
PilotAssignment make_pilot_assignment(std::vector<int> pilot_of);

// MMSE estimation statistics per (k, l); Qbar per (k, i, l) for i in P_k.
//   Psi_kl  = (sum_{i in P_k} p_i tau_p R_il + sigma^2 I)^{-1}
//   Q_kl    = p_k tau_p R_kl Psi_kl R_kl,    C_kl = R_kl - Q_kl
//   Qbar_kil = sqrt(p_k p_i) tau_p R_il Psi_kl R_kl
// With perfect_csi the estimate equals the channel: Q = R, C = 0 and the
// cross terms Qbar_kil (i != k) vanish.
struct EstimationStatistics {
    int num_ues = 0;
    int num_aps = 0;
    bool perfect_csi = false;
    std::vector<CMat> Psi;
    std::vector<CMat> Q;
    std::vector<CMat> C;
    std::vector<CMat> Qbar;       // (k * K + i) * L + l, zero-sized when i not in P_k
    std::vector<CMat> gain;       // sqrt(p_k tau_p) R_kl Psi_kl, used to form estimates
    std::vector<double> pilot_amp; // sqrt(p_k tau_p) per UE

    std::size_t link(int k, int l) const { return std::size_t(k) * num_aps + l; }
    const CMat& psi(int k, int l) const { return Psi[link(k, l)]; }
    const CMat& q(int k, int l) const { return Q[link(k, l)]; }
    const CMat& c(int k, int l) const { return C[link(k, l)]; }
    // Zero-sized matrix when i does not share the pilot of k.
    const CMat& qbar(int k, int i, int l) const { return Qbar[(std::size_t(k) * num_ues + i) * num_aps + l]; }
    bool has_qbar(int k, int i, int l) const { return qbar(k, i, l).size() != 0; }
};

// Throws std::runtime_error when the pilot system is singular (only possible
// with sigma^2 = 0 and rank-deficient R).
EstimationStatistics estimation_statistics(const LinkStatistics& stats, const PilotAssignment& pilots,
                                           double pilot_mw, int tau_p, double noise_mw);

EstimationStatistics estimation_statistics(const LinkStatistics& stats, const PilotAssignment& pilots,
                                           const SystemConfig& cfg);

EstimationStatistics perfect_csi_statistics(const LinkStatistics& stats, const PilotAssignment& pilots);

struct EstimateRealization {
    std::vector<CVec> ghat;
    std::vector<CVec> gtilde;
};

// Forms z_kl from the pilot observation, then
// ghat_kl = hbar_kl + sqrt(p_k tau_p) R_kl Psi_kl (z_kl - zbar_kl).
EstimateRealization estimate_channel(const ChannelRealization& realization, const LinkStatistics& stats,
                                     const EstimationStatistics& est, const PilotAssignment& pilots,
                                     double noise_mw, Rng& rng);

}  // namespace rscf

#endif

// SPDX-License-Identifier: Apache-2.0

#include "rscf/estimation.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace rscf {

PilotAssignment make_pilot_assignment(std::vector<int> pilot_of)
{
    PilotAssignment pa;
    pa.pilot_of = std::move(pilot_of);
    const int K = pa.num_ues();
    pa.copilots.assign(K, {});
    for (int k = 0; k < K; ++k)
        for (int i = 0; i < K; ++i)
            if (pa.pilot_of[i] == pa.pilot_of[k]) pa.copilots[k].push_back(i);
    return pa;
}

PilotAssignment assign_pilots(int num_ues, int tau_p, Rng& rng, bool fully_random)
{
    if (tau_p < 1) throw std::invalid_argument("assign_pilots: tau_p must be >= 1");
    if (num_ues < 1) throw std::invalid_argument("assign_pilots: need at least one UE");
    std::vector<int> pilot_of(num_ues);
    if (fully_random) {
        for (auto& t : pilot_of) t = static_cast<int>(rng.index(tau_p));
    } else {
        std::vector<int> order(num_ues);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng.engine());
        for (int pos = 0; pos < num_ues; ++pos) pilot_of[order[pos]] = pos % tau_p;
    }
    return make_pilot_assignment(std::move(pilot_of));
}

namespace {

CMat hermitian_inverse(const CMat& a)
{
    Eigen::SelfAdjointEigenSolver<CMat> es(a);
    const auto& lam = es.eigenvalues();
    const double top = lam.cwiseAbs().maxCoeff();
    if (!(lam.minCoeff() > 1e-14 * top) || top == 0.0)
        throw std::runtime_error("estimation_statistics: ill-conditioned pilot system (sigma^2 = 0 with rank-deficient R)");
    return es.eigenvectors() * lam.cwiseInverse().asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace

EstimationStatistics estimation_statistics(const LinkStatistics& stats, const PilotAssignment& pilots,
                                           double pilot_mw, int tau_p, double noise_mw)
{
    const int K = stats.num_ues;
    const int L = stats.num_aps;
    const int N = stats.antennas;
    if (pilots.num_ues() != K) throw std::invalid_argument("estimation_statistics: pilot assignment size mismatch");

    EstimationStatistics est;
    est.num_ues = K;
    est.num_aps = L;
    est.Psi.resize(std::size_t(K) * L);
    est.Q.resize(std::size_t(K) * L);
    est.C.resize(std::size_t(K) * L);
    est.gain.resize(std::size_t(K) * L);
    est.Qbar.resize(std::size_t(K) * K * L);
    est.pilot_amp.assign(K, std::sqrt(pilot_mw * tau_p));

    const CMat eye = CMat::Identity(N, N);
    for (int l = 0; l < L; ++l) {
        for (int k = 0; k < K; ++k) {
            CMat sum = noise_mw * eye;
            for (int i : pilots.copilots[k]) sum += pilot_mw * tau_p * stats.at(i, l).R;
            CMat psi = hermitian_inverse(sum);
            const CMat& Rk = stats.at(k, l).R;
            const std::size_t idx = est.link(k, l);
            CMat psi_rk = psi * Rk;
            CMat q = pilot_mw * tau_p * Rk * psi_rk;
            q = 0.5 * (q + q.adjoint()).eval();
            est.gain[idx] = est.pilot_amp[k] * Rk * psi;
            est.C[idx] = Rk - q;
            est.Q[idx] = std::move(q);
            est.Psi[idx] = std::move(psi);
            for (int i : pilots.copilots[k]) {
                const double scale = est.pilot_amp[k] * est.pilot_amp[i];
                est.Qbar[(std::size_t(k) * K + i) * L + l] = scale * stats.at(i, l).R * psi_rk;
            }
            // Exact self-consistency: Qbar_kkl is Q_kl.
            est.Qbar[(std::size_t(k) * K + k) * L + l] = est.Q[idx];
        }
    }
    return est;
}

EstimationStatistics estimation_statistics(const LinkStatistics& stats, const PilotAssignment& pilots,
                                           const SystemConfig& cfg)
{
    return estimation_statistics(stats, pilots, cfg.pilot_mw(), cfg.tau_p, cfg.noise_mw());
}

EstimationStatistics perfect_csi_statistics(const LinkStatistics& stats, const PilotAssignment& pilots)
{
    const int K = stats.num_ues;
    const int L = stats.num_aps;
    const int N = stats.antennas;
    EstimationStatistics est;
    est.num_ues = K;
    est.num_aps = L;
    est.perfect_csi = true;
    est.Psi.assign(std::size_t(K) * L, CMat::Zero(N, N));
    est.gain.assign(std::size_t(K) * L, CMat::Zero(N, N));
    est.Q.resize(std::size_t(K) * L);
    est.C.assign(std::size_t(K) * L, CMat::Zero(N, N));
    est.Qbar.resize(std::size_t(K) * K * L);
    est.pilot_amp.assign(K, 0.0);
    for (int k = 0; k < K; ++k) {
        for (int l = 0; l < L; ++l) {
            est.Q[est.link(k, l)] = stats.at(k, l).R;
            for (int i : pilots.copilots[k])
                est.Qbar[(std::size_t(k) * K + i) * L + l] = (i == k) ? stats.at(k, l).R : CMat::Zero(N, N);
        }
    }
    return est;
}

EstimateRealization estimate_channel(const ChannelRealization& realization, const LinkStatistics& stats,
                                     const EstimationStatistics& est, const PilotAssignment& pilots,
                                     double noise_mw, Rng& rng)
{
    const int K = stats.num_ues;
    const int L = stats.num_aps;
    const int N = stats.antennas;
    EstimateRealization out;
    out.ghat.resize(std::size_t(K) * L);
    out.gtilde.resize(std::size_t(K) * L);

    if (est.perfect_csi) {
        for (std::size_t idx = 0; idx < out.ghat.size(); ++idx) {
            out.ghat[idx] = realization.g[idx];
            out.gtilde[idx] = CVec::Zero(N);
        }
        return out;
    }

    int num_pilots = 0;
    for (int t : pilots.pilot_of) num_pilots = std::max(num_pilots, t + 1);
    const double noise_amp = std::sqrt(noise_mw);
    std::vector<CVec> centered(num_pilots);
    for (int l = 0; l < L; ++l) {
        // z_tl - zbar_tl for every pilot t at this AP.
        for (int t = 0; t < num_pilots; ++t) {
            centered[t].resize(N);
            for (int a = 0; a < N; ++a) centered[t](a) = noise_amp * rng.cnormal();
        }
        for (int i = 0; i < K; ++i) {
            const std::size_t idx = est.link(i, l);
            centered[pilots.pilot_of[i]] += est.pilot_amp[i] * (realization.g[idx] - stats.at(i, l).hbar);
        }
        for (int k = 0; k < K; ++k) {
            const std::size_t idx = est.link(k, l);
            out.ghat[idx] = stats.at(k, l).hbar + est.gain[idx] * centered[pilots.pilot_of[k]];
            out.gtilde[idx] = realization.g[idx] - out.ghat[idx];
        }
    }
    return out;
}

}  // namespace rscf

// SPDX-License-Identifier: Apache-2.0

#ifndef RSCF_CLOSED_FORM_HPP
#define RSCF_CLOSED_FORM_HPP

#include <vector>

#include "rscf/estimation.hpp"

namespace rscf {

// Power-splitting factors rho (length L) and power-control coefficients eta
// (K x L). Flattened layout used by the optimizers: [rho, eta row-major].
struct PowerAllocation {
    Eigen::VectorXd rho;
    Eigen::MatrixXd eta;

    static PowerAllocation equal(int num_ues, int num_aps, double rho, double eta = 1.0);
    static PowerAllocation from_vector(const Eigen::VectorXd& x, int num_ues, int num_aps);
    Eigen::VectorXd to_vector() const;
    // Throws std::invalid_argument on shape mismatch or any entry outside [0, 1].
    void validate(int num_ues, int num_aps) const;
};

struct SEReport {
    Eigen::VectorXd sinr_common;
    Eigen::VectorXd sinr_private;
    Eigen::VectorXd se_private;
    double se_common = 0.0;
    double sum_se = 0.0;
    double prelog = 0.0;
};

// sum = prelog * (log2(1 + min_k SINR_c) + sum_k log2(1 + SINR_p)).
SEReport assemble_report(Eigen::VectorXd sinr_common, Eigen::VectorXd sinr_private, double prelog);

struct Normalizers {
    Eigen::VectorXd common;   // mu_c,l
    Eigen::MatrixXd priv;     // mu_il, K x L
};

// mu_c,l = 1 / E{|sum_i ghat_il|^2},  mu_il = 1 / E{|ghat_il|^2}.
// Throws std::runtime_error on a nonpositive denominator.
Normalizers normalization_coeffs(const LinkStatistics& stats, const EstimationStatistics& est,
                                 const PilotAssignment& pilots);

// E{g_kl^H ghat_il}
cplx first_moment(int k, int i, int l, const LinkStatistics& stats, const EstimationStatistics& est);
// E{|g_kl^H ghat_il|^2}
double second_moment(int k, int i, int l, const LinkStatistics& stats, const EstimationStatistics& est);

// Pilot-sharing pattern of (k, i, j) that selects the closed form of Upsilon4.
enum class Upsilon4Case { a, b, c, d, e };
Upsilon4Case classify_upsilon4(int k, int i, int j, const PilotAssignment& pilots);

// Upsilon4 = E{(ghat_kl^H ghat_il)^* (ghat_kl^H ghat_jl)}
// Upsilon5 = E{(gtilde_kl^H ghat_il)^* (gtilde_kl^H ghat_jl)}
struct UpsilonPair {
    cplx upsilon4;
    cplx upsilon5;
};
UpsilonPair upsilon_moments(int k, int i, int j, int l, const LinkStatistics& stats, const EstimationStatistics& est,
                            const PilotAssignment& pilots);

// UatF lower bound with superposition common precoding and MR private
// precoding. The per-(k, i, l) statistics are computed once; evaluate() only
// re-weights them by (rho, eta) and costs O(K^2 L).
class ClosedFormEvaluator {
public:
    ClosedFormEvaluator(const LinkStatistics& stats, const EstimationStatistics& est, const PilotAssignment& pilots,
                        double downlink_mw, double noise_mw, double prelog);
    ClosedFormEvaluator(const LinkStatistics& stats, const EstimationStatistics& est, const PilotAssignment& pilots,
                        const SystemConfig& cfg);

    SEReport evaluate(const PowerAllocation& alloc) const;
    double sum_se(const PowerAllocation& alloc) const { return evaluate(alloc).sum_se; }

    const Normalizers& normalizers() const { return mu_; }
    int num_ues() const { return K_; }
    int num_aps() const { return L_; }

private:
    std::size_t link(int k, int l) const { return std::size_t(k) * L_ + l; }
    std::size_t triple(int k, int i, int l) const { return (std::size_t(k) * K_ + i) * L_ + l; }

    int K_;
    int L_;
    double downlink_mw_;
    double noise_mw_;
    double prelog_;
    Normalizers mu_;
    std::vector<cplx> common_mean_;    // sum_i E{g_kl^H ghat_il}
    std::vector<double> common_var_;   // variance bracket of T_c2 at (k, l)
    std::vector<cplx> cross_mean_;     // E{g_kl^H ghat_il}
    std::vector<double> private_var_;  // mu_il * Var{g_kl^H ghat_il}
};

SEReport sum_se_closed(const LinkStatistics& stats, const EstimationStatistics& est, const PilotAssignment& pilots,
                       const PowerAllocation& alloc, const SystemConfig& cfg);

// Scalar statistics for spatially uncorrelated channels (R = beta_nlos I,
// Q = gamma I).
struct ScalarLink {
    double beta_los = 0.0;
    double beta_nlos = 0.0;
    double gamma = 0.0;
};

struct ScalarStatistics {
    int num_ues = 0;
    int num_aps = 0;
    int antennas = 0;
    std::vector<ScalarLink> links;  // UE-major
    const ScalarLink& at(int k, int l) const { return links[std::size_t(k) * num_aps + l]; }
};

// gamma_kl = p tau_p beta_nlos_kl^2 / (sum_{i in P_k} p tau_p beta_nlos_il + sigma^2)
ScalarStatistics scalar_statistics(const LinkStatistics& stats, const PilotAssignment& pilots, double pilot_mw,
                                   int tau_p, double noise_mw);

// Scalar closed forms for uncorrelated Rician fading; no matrix algebra. The
// LoS inner products are taken as N sqrt(beta_los beta_los), i.e. co-phased
// steering vectors at each AP.
SEReport sum_se_uncorrelated(const ScalarStatistics& stats, const PilotAssignment& pilots,
                             const PowerAllocation& alloc, double downlink_mw, double noise_mw, double prelog);

}  // namespace rscf

#endif

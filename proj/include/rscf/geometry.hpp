// SPDX-License-Identifier: Apache-2.0

#ifndef RSCF_GEOMETRY_HPP
#define RSCF_GEOMETRY_HPP

#include <vector>

#include "rscf/config.hpp"
#include "rscf/rng.hpp"

namespace rscf {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct Placement {
    std::vector<Point> aps;
    std::vector<Point> ues;
};

// L + K independent uniform points in [0, area_side]^2.
Placement place_network(const SystemConfig& cfg, Rng& rng);

// Three-slope model, breakpoints at 10 m and 50 m, linear gain.
// Throws std::invalid_argument for distance <= 0.
double path_loss(double distance_m);

struct RicianSplit {
    double beta_los = 0.0;
    double beta_nlos = 0.0;
};

// beta_los = sqrt(k/(k+1))*zeta, beta_nlos = sqrt(1/(k+1))*zeta. An infinite
// factor gives the pure-LoS limit.
RicianSplit rician_split(double zeta, double kappa_linear);

// ULA steering vector scaled so that |h|^2 = N * beta_los.
CVec los_vector(double beta_los, double phi, int antennas, double spacing);

// Clustered local-scattering NLoS covariance. Cluster nominal angles are drawn
// from U[phi - 40deg, phi + 40deg]; the result is Hermitian PSD with
// trace(R) = N * beta_nlos.
CMat correlation_matrix(double beta_nlos, double phi, const SystemConfig& cfg, Rng& rng);

// Hermitian square root via eigendecomposition; negative eigenvalues are
// treated as zero.
CMat hermitian_sqrt(const CMat& a);

struct Link {
    CVec hbar;
    CMat R;
    CMat R_sqrt;
    double beta_los = 0.0;
    double beta_nlos = 0.0;
    double zeta = 0.0;
    double phi = 0.0;
};

// Per (UE k, AP l) statistics, stored UE-major: index k * L + l.
struct LinkStatistics {
    int num_ues = 0;
    int num_aps = 0;
    int antennas = 0;
    std::vector<Link> links;

    LinkStatistics() = default;
    LinkStatistics(int k, int l, int n) : num_ues(k), num_aps(l), antennas(n), links(std::size_t(k) * l) {}

    Link& at(int k, int l) { return links[std::size_t(k) * num_aps + l]; }
    const Link& at(int k, int l) const { return links[std::size_t(k) * num_aps + l]; }

    // Fills R_sqrt for every link; call after editing R by hand.
    void refresh_roots();
    // K x L matrix of large-scale coefficients zeta_kl.
    Eigen::MatrixXd zeta_matrix() const;
};

// Full statistics for a placement. Cluster angles and optional shadowing are
// drawn from substreams of cfg.seed, so the result is a pure function of
// (cfg, placement).
LinkStatistics build_link_statistics(const SystemConfig& cfg, const Placement& placement);

// One coherence-block draw g_kl = hbar_kl + R_kl^{1/2} w, UE-major.
struct ChannelRealization {
    std::vector<CVec> g;
    const CVec& at(int k, int l, int num_aps) const { return g[std::size_t(k) * num_aps + l]; }
};

ChannelRealization sample_channel(const LinkStatistics& stats, Rng& rng);

}  // namespace rscf

#endif

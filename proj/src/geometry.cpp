// SPDX-License-Identifier: Apache-2.0

#include "rscf/geometry.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rscf {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kBreak0Km = 0.010;
constexpr double kBreak1Km = 0.050;
constexpr double kLossAt1Km = 140.7;

double deg2rad(double deg) { return deg * kPi / 180.0; }

}  // namespace

Placement place_network(const SystemConfig& cfg, Rng& rng)
{
    Placement p;
    p.aps.reserve(cfg.num_aps);
    p.ues.reserve(cfg.num_ues);
    for (int l = 0; l < cfg.num_aps; ++l) p.aps.push_back({rng.uniform(0.0, cfg.area_side), rng.uniform(0.0, cfg.area_side)});
    for (int k = 0; k < cfg.num_ues; ++k) p.ues.push_back({rng.uniform(0.0, cfg.area_side), rng.uniform(0.0, cfg.area_side)});
    return p;
}

double path_loss(double distance_m)
{
    if (!(distance_m > 0.0)) throw std::invalid_argument("path_loss: distance must be positive");
    const double d_km = distance_m / 1000.0;
    double pl_db;
    if (d_km > kBreak1Km) {
        pl_db = -kLossAt1Km - 35.0 * std::log10(d_km);
    } else {
        // Intercept of the 20 dB/decade segment makes it meet the 35 dB/decade one at d1.
        const double mid = -kLossAt1Km - 15.0 * std::log10(kBreak1Km);
        pl_db = mid - 20.0 * std::log10(std::max(d_km, kBreak0Km));
    }
    return std::pow(10.0, pl_db / 10.0);
}

RicianSplit rician_split(double zeta, double kappa_linear)
{
    if (!(zeta >= 0.0) || !(kappa_linear >= 0.0)) throw std::invalid_argument("rician_split: inputs must be nonnegative");
    if (std::isinf(kappa_linear)) return {zeta, 0.0};
    return {std::sqrt(kappa_linear / (kappa_linear + 1.0)) * zeta, std::sqrt(1.0 / (kappa_linear + 1.0)) * zeta};
}

CVec los_vector(double beta_los, double phi, int antennas, double spacing)
{
    CVec h(antennas);
    const double amp = std::sqrt(beta_los);
    const double step = 2.0 * kPi * spacing * std::sin(phi);
    for (int n = 0; n < antennas; ++n) h(n) = std::polar(amp, step * n);
    return h;
}

CMat hermitian_sqrt(const CMat& a)
{
    Eigen::SelfAdjointEigenSolver<CMat> es(a);
    Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().adjoint();
}

CMat correlation_matrix(double beta_nlos, double phi, const SystemConfig& cfg, Rng& rng)
{
    const int n = cfg.antennas;
    const double sigma = deg2rad(cfg.asd_deg);
    const double spread = deg2rad(40.0);
    CMat R = CMat::Zero(n, n);
    for (int t = 0; t < cfg.clusters; ++t) {
        const double angle = phi + rng.uniform(-spread, spread);
        const double s = std::sin(angle);
        const double c = std::cos(angle);
        for (int row = 0; row < n; ++row) {
            for (int col = 0; col < n; ++col) {
                const double d = row - col;
                const double g = kPi * d * c;
                R(row, col) += std::polar(std::exp(-0.5 * sigma * sigma * g * g), kPi * d * s);
            }
        }
    }
    R *= beta_nlos / cfg.clusters;
    R = 0.5 * (R + R.adjoint()).eval();

    const double tr = R.trace().real();
    if (tr <= 0.0) return CMat::Zero(n, n);
    Eigen::SelfAdjointEigenSolver<CMat> es(R);
    if (es.eigenvalues().minCoeff() < -1e-12 * tr) {
        Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
        R = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().adjoint();
    }
    R *= (n * beta_nlos) / R.trace().real();
    return R;
}

void LinkStatistics::refresh_roots()
{
    for (auto& link : links) link.R_sqrt = hermitian_sqrt(link.R);
}

Eigen::MatrixXd LinkStatistics::zeta_matrix() const
{
    Eigen::MatrixXd z(num_ues, num_aps);
    for (int k = 0; k < num_ues; ++k)
        for (int l = 0; l < num_aps; ++l) z(k, l) = at(k, l).zeta;
    return z;
}

LinkStatistics build_link_statistics(const SystemConfig& cfg, const Placement& placement)
{
    cfg.validate();
    LinkStatistics stats(cfg.num_ues, cfg.num_aps, cfg.antennas);
    const double kappa = cfg.rician_linear();
    for (int k = 0; k < cfg.num_ues; ++k) {
        for (int l = 0; l < cfg.num_aps; ++l) {
            const Point& ap = placement.aps[l];
            const Point& ue = placement.ues[k];
            const double dx = ue.x - ap.x;
            const double dy = ue.y - ap.y;
            // Below the first breakpoint the loss is flat, so clamping is exact.
            const double dist = std::max(std::hypot(dx, dy), 1.0);

            Link& link = stats.at(k, l);
            link.phi = std::atan2(dy, dx);
            link.zeta = path_loss(dist);
            if (cfg.shadowing) {
                Rng shadow(cfg.seed, Stream::shadowing, {std::uint64_t(k), std::uint64_t(l)});
                link.zeta *= std::pow(10.0, cfg.shadow_sigma_db * shadow.normal() / 10.0);
            }
            const RicianSplit split = rician_split(link.zeta, kappa);
            link.beta_los = split.beta_los;
            link.beta_nlos = split.beta_nlos;
            link.hbar = los_vector(link.beta_los, link.phi, cfg.antennas, cfg.antenna_spacing);
            Rng cluster_rng(cfg.seed, Stream::clusters, {std::uint64_t(k), std::uint64_t(l)});
            link.R = correlation_matrix(link.beta_nlos, link.phi, cfg, cluster_rng);
            link.R_sqrt = hermitian_sqrt(link.R);
        }
    }
    return stats;
}

ChannelRealization sample_channel(const LinkStatistics& stats, Rng& rng)
{
    ChannelRealization out;
    out.g.reserve(stats.links.size());
    const int n = stats.antennas;
    CVec w(n);
    for (const Link& link : stats.links) {
        for (int a = 0; a < n; ++a) w(a) = rng.cnormal();
        out.g.push_back(link.hbar + link.R_sqrt * w);
    }
    return out;
}

}  // namespace rscf

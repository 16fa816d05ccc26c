// SPDX-License-Identifier: Apache-2.0

#include "rscf/closed_form.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rscf {

namespace {

// The expressions below are real by construction; a large imaginary residue
// means a transposed or conjugated term somewhere.
double checked_real(cplx z, double scale, const char* what)
{
    const double ref = std::max(std::abs(z), scale);
    if (std::abs(z.imag()) > 1e-10 * ref)
        throw std::logic_error(std::string(what) + ": imaginary residue " + std::to_string(z.imag()) + " exceeds tolerance");
    return z.real();
}

cplx quad(const CVec& a, const CMat& m, const CVec& b) { return a.dot(m * b); }

cplx trace_product(const CMat& a, const CMat& b) { return (a.array() * b.transpose().array()).sum(); }

}  // namespace

PowerAllocation PowerAllocation::equal(int num_ues, int num_aps, double rho, double eta)
{
    PowerAllocation a;
    a.rho = Eigen::VectorXd::Constant(num_aps, rho);
    a.eta = Eigen::MatrixXd::Constant(num_ues, num_aps, eta);
    return a;
}

PowerAllocation PowerAllocation::from_vector(const Eigen::VectorXd& x, int num_ues, int num_aps)
{
    if (x.size() != num_aps + std::ptrdiff_t(num_ues) * num_aps)
        throw std::invalid_argument("PowerAllocation::from_vector: expected L + K*L entries");
    PowerAllocation a;
    a.rho = x.head(num_aps);
    a.eta.resize(num_ues, num_aps);
    for (int k = 0; k < num_ues; ++k)
        for (int l = 0; l < num_aps; ++l) a.eta(k, l) = x(num_aps + std::ptrdiff_t(k) * num_aps + l);
    return a;
}

Eigen::VectorXd PowerAllocation::to_vector() const
{
    const auto K = eta.rows();
    const auto L = eta.cols();
    Eigen::VectorXd x(L + K * L);
    x.head(L) = rho;
    for (Eigen::Index k = 0; k < K; ++k)
        for (Eigen::Index l = 0; l < L; ++l) x(L + k * L + l) = eta(k, l);
    return x;
}

void PowerAllocation::validate(int num_ues, int num_aps) const
{
    if (rho.size() != num_aps || eta.rows() != num_ues || eta.cols() != num_aps)
        throw std::invalid_argument("PowerAllocation: shape does not match the system");
    auto in_box = [](double v) { return v >= 0.0 && v <= 1.0; };
    for (Eigen::Index l = 0; l < rho.size(); ++l)
        if (!in_box(rho(l))) throw std::invalid_argument("PowerAllocation: rho_" + std::to_string(l) + " outside [0, 1]");
    for (Eigen::Index k = 0; k < eta.rows(); ++k)
        for (Eigen::Index l = 0; l < eta.cols(); ++l)
            if (!in_box(eta(k, l)))
                throw std::invalid_argument("PowerAllocation: eta_" + std::to_string(k) + "," + std::to_string(l) + " outside [0, 1]");
}

SEReport assemble_report(Eigen::VectorXd sinr_common, Eigen::VectorXd sinr_private, double prelog)
{
    SEReport r;
    r.prelog = prelog;
    r.se_private = prelog * sinr_private.unaryExpr([](double s) { return std::log2(1.0 + s); });
    r.se_common = prelog * std::log2(1.0 + sinr_common.minCoeff());
    r.sum_se = r.se_common + r.se_private.sum();
    r.sinr_common = std::move(sinr_common);
    r.sinr_private = std::move(sinr_private);
    return r;
}

Normalizers normalization_coeffs(const LinkStatistics& stats, const EstimationStatistics& est,
                                 const PilotAssignment& pilots)
{
    const int K = stats.num_ues;
    const int L = stats.num_aps;
    Normalizers mu;
    mu.common.resize(L);
    mu.priv.resize(K, L);
    for (int l = 0; l < L; ++l) {
        CVec hsum = CVec::Zero(stats.antennas);
        for (int k = 0; k < K; ++k) hsum += stats.at(k, l).hbar;
        cplx denom = hsum.squaredNorm();
        double scale = hsum.squaredNorm();
        for (int k = 0; k < K; ++k) {
            for (int i : pilots.copilots[k]) {
                const cplx tr = est.qbar(k, i, l).trace();
                denom += tr;
                scale += std::abs(tr);
            }
        }
        const double d = checked_real(denom, scale, "mu_c denominator");
        if (!(d > 0.0)) throw std::runtime_error("normalization_coeffs: degenerate statistics (mu_c denominator <= 0)");
        mu.common(l) = 1.0 / d;

        for (int i = 0; i < K; ++i) {
            const double p = stats.at(i, l).hbar.squaredNorm() + est.q(i, l).trace().real();
            if (!(p > 0.0)) throw std::runtime_error("normalization_coeffs: degenerate statistics (mu_il denominator <= 0)");
            mu.priv(i, l) = 1.0 / p;
        }
    }
    return mu;
}

cplx first_moment(int k, int i, int l, const LinkStatistics& stats, const EstimationStatistics& est)
{
    cplx m = stats.at(k, l).hbar.dot(stats.at(i, l).hbar);
    if (est.has_qbar(k, i, l)) m += est.qbar(k, i, l).trace();
    return m;
}

double second_moment(int k, int i, int l, const LinkStatistics& stats, const EstimationStatistics& est)
{
    const CVec& hk = stats.at(k, l).hbar;
    const CVec& hi = stats.at(i, l).hbar;
    const CMat& Rk = stats.at(k, l).R;
    const CMat& Qi = est.q(i, l);
    const cplx a = hk.dot(hi);
    cplx m = std::norm(a) + quad(hi, Rk, hi) + quad(hk, Qi, hk) + trace_product(Qi, Rk);
    double scale = std::abs(m);
    if (est.has_qbar(k, i, l)) {
        const cplx tq = est.qbar(k, i, l).trace();
        m += std::norm(tq) + 2.0 * (tq * std::conj(a)).real();
        scale += std::norm(tq) + 2.0 * std::abs(tq * a);
    }
    return checked_real(m, scale, "second moment");
}

Upsilon4Case classify_upsilon4(int k, int i, int j, const PilotAssignment& pilots)
{
    const bool i_k = pilots.shares_pilot(i, k);
    const bool j_k = pilots.shares_pilot(j, k);
    const bool j_i = pilots.shares_pilot(j, i);
    if (i_k && j_k) return Upsilon4Case::a;
    if (i_k) return Upsilon4Case::b;
    if (j_k) return Upsilon4Case::c;
    return j_i ? Upsilon4Case::d : Upsilon4Case::e;
}

UpsilonPair upsilon_moments(int k, int i, int j, int l, const LinkStatistics& stats, const EstimationStatistics& est,
                            const PilotAssignment& pilots)
{
    const CVec& hk = stats.at(k, l).hbar;
    const CVec& hi = stats.at(i, l).hbar;
    const CVec& hj = stats.at(j, l).hbar;
    const CMat& Qk = est.q(k, l);
    const cplx aki = hk.dot(hi);
    const cplx akj = hk.dot(hj);

    // Terms present in every case.
    cplx u4 = std::conj(aki) * akj + quad(hi, Qk, hj);

    auto shared_ij = [&] {
        const CMat& qij = est.qbar(i, j, l);
        return quad(hk, qij, hk) + trace_product(qij, Qk);
    };
    switch (classify_upsilon4(k, i, j, pilots)) {
    case Upsilon4Case::a: {
        const cplx tki = est.qbar(k, i, l).trace();
        const cplx tkj = est.qbar(k, j, l).trace();
        u4 += shared_ij() + std::conj(tki) * tkj + std::conj(aki) * tkj + std::conj(tki) * akj;
        break;
    }
    case Upsilon4Case::b:
        u4 += std::conj(est.qbar(k, i, l).trace()) * akj;
        break;
    case Upsilon4Case::c:
        u4 += std::conj(aki) * est.qbar(k, j, l).trace();
        break;
    case Upsilon4Case::d:
        u4 += shared_ij();
        break;
    case Upsilon4Case::e:
        break;
    }

    const CMat& Ck = est.c(k, l);
    cplx u5 = quad(hi, Ck, hj);
    if (pilots.shares_pilot(j, i)) u5 += trace_product(est.qbar(i, j, l), Ck);
    return {u4, u5};
}

ClosedFormEvaluator::ClosedFormEvaluator(const LinkStatistics& stats, const EstimationStatistics& est,
                                         const PilotAssignment& pilots, double downlink_mw, double noise_mw,
                                         double prelog)
    : K_(stats.num_ues), L_(stats.num_aps), downlink_mw_(downlink_mw), noise_mw_(noise_mw), prelog_(prelog),
      mu_(normalization_coeffs(stats, est, pilots))
{
    const int N = stats.antennas;
    common_mean_.assign(std::size_t(K_) * L_, 0.0);
    common_var_.assign(std::size_t(K_) * L_, 0.0);
    cross_mean_.assign(std::size_t(K_) * K_ * L_, 0.0);
    private_var_.assign(std::size_t(K_) * K_ * L_, 0.0);

    for (int l = 0; l < L_; ++l) {
        CVec hsum = CVec::Zero(N);
        CMat qbar_sum = CMat::Zero(N, N);
        for (int i = 0; i < K_; ++i) {
            hsum += stats.at(i, l).hbar;
            for (int j : pilots.copilots[i]) qbar_sum += est.qbar(i, j, l);
        }
        for (int k = 0; k < K_; ++k) {
            const CVec& hk = stats.at(k, l).hbar;
            const CMat& Rk = stats.at(k, l).R;
            cplx mean = 0.0;
            for (int i = 0; i < K_; ++i) {
                const cplx m = first_moment(k, i, l, stats, est);
                cross_mean_[triple(k, i, l)] = m;
                mean += m;

                const CVec& hi = stats.at(i, l).hbar;
                const CMat& Qi = est.q(i, l);
                const cplx v = trace_product(Qi, Rk) + quad(hk, Qi, hk) + quad(hi, Rk, hi);
                private_var_[triple(k, i, l)] = mu_.priv(i, l) * checked_real(v, std::abs(v), "T_p2 term");
            }
            common_mean_[link(k, l)] = mean;
            const cplx v = trace_product(qbar_sum, Rk) + quad(hk, qbar_sum, hk) + quad(hsum, Rk, hsum);
            common_var_[link(k, l)] = checked_real(v, std::abs(v), "T_c2 term");
        }
    }
}

ClosedFormEvaluator::ClosedFormEvaluator(const LinkStatistics& stats, const EstimationStatistics& est,
                                         const PilotAssignment& pilots, const SystemConfig& cfg)
    : ClosedFormEvaluator(stats, est, pilots, cfg.downlink_mw(), cfg.noise_mw(), cfg.prelog())
{
}

SEReport ClosedFormEvaluator::evaluate(const PowerAllocation& alloc) const
{
    alloc.validate(K_, L_);
    const double p = downlink_mw_;
    const double pk = downlink_mw_ / K_;

    Eigen::VectorXd wc(L_);
    for (int l = 0; l < L_; ++l) wc(l) = std::sqrt(alloc.rho(l) * mu_.common(l));
    Eigen::MatrixXd wp(K_, L_);
    for (int i = 0; i < K_; ++i)
        for (int l = 0; l < L_; ++l) wp(i, l) = std::sqrt((1.0 - alloc.rho(l)) * alloc.eta(i, l) * mu_.priv(i, l));

    Eigen::VectorXd sinr_c(K_), sinr_p(K_);
    for (int k = 0; k < K_; ++k) {
        cplx ds = 0.0;
        double tc2 = 0.0;
        for (int l = 0; l < L_; ++l) {
            ds += wc(l) * common_mean_[link(k, l)];
            tc2 += wc(l) * wc(l) * common_var_[link(k, l)];
        }
        const double tc1 = std::norm(ds);

        double tp2 = 0.0;         // sum_i T_p2
        double cross_all = 0.0;   // sum_i (T_p1 if i in P_k else T_p3)
        double own = 0.0;         // T_p1 at i = k
        for (int i = 0; i < K_; ++i) {
            cplx m = 0.0;
            for (int l = 0; l < L_; ++l) {
                m += wp(i, l) * cross_mean_[triple(k, i, l)];
                tp2 += (1.0 - alloc.rho(l)) * alloc.eta(i, l) * private_var_[triple(k, i, l)];
            }
            const double t = std::norm(m);
            cross_all += t;
            if (i == k) own = t;
        }
        sinr_c(k) = p * tc1 / (p * tc2 + pk * (tp2 + cross_all) + noise_mw_);
        sinr_p(k) = pk * own / (pk * tp2 + pk * (cross_all - own) + noise_mw_);
    }
    return assemble_report(std::move(sinr_c), std::move(sinr_p), prelog_);
}

SEReport sum_se_closed(const LinkStatistics& stats, const EstimationStatistics& est, const PilotAssignment& pilots,
                       const PowerAllocation& alloc, const SystemConfig& cfg)
{
    return ClosedFormEvaluator(stats, est, pilots, cfg).evaluate(alloc);
}

ScalarStatistics scalar_statistics(const LinkStatistics& stats, const PilotAssignment& pilots, double pilot_mw,
                                   int tau_p, double noise_mw)
{
    ScalarStatistics s;
    s.num_ues = stats.num_ues;
    s.num_aps = stats.num_aps;
    s.antennas = stats.antennas;
    s.links.resize(stats.links.size());
    const double ptau = pilot_mw * tau_p;
    for (int k = 0; k < s.num_ues; ++k) {
        for (int l = 0; l < s.num_aps; ++l) {
            double denom = noise_mw;
            for (int i : pilots.copilots[k]) denom += ptau * stats.at(i, l).beta_nlos;
            const Link& link = stats.at(k, l);
            ScalarLink& out = s.links[std::size_t(k) * s.num_aps + l];
            out.beta_los = link.beta_los;
            out.beta_nlos = link.beta_nlos;
            out.gamma = ptau * link.beta_nlos * link.beta_nlos / denom;
        }
    }
    return s;
}

SEReport sum_se_uncorrelated(const ScalarStatistics& stats, const PilotAssignment& pilots,
                             const PowerAllocation& alloc, double downlink_mw, double noise_mw, double prelog)
{
    const int K = stats.num_ues;
    const int L = stats.num_aps;
    const double N = stats.antennas;
    alloc.validate(K, L);

    auto los = [&](int k, int i, int l) { return N * std::sqrt(stats.at(k, l).beta_los * stats.at(i, l).beta_los); };
    auto est = [&](int k, int i, int l) { return N * std::sqrt(stats.at(k, l).gamma * stats.at(i, l).gamma); };

    Eigen::VectorXd mu_c(L);
    Eigen::MatrixXd mu(K, L);
    for (int l = 0; l < L; ++l) {
        double d = 0.0;
        for (int k = 0; k < K; ++k) {
            for (int i = 0; i < K; ++i) d += los(k, i, l);
            for (int i : pilots.copilots[k]) d += est(k, i, l);
        }
        mu_c(l) = 1.0 / d;
        for (int i = 0; i < K; ++i) mu(i, l) = 1.0 / (N * stats.at(i, l).beta_los + N * stats.at(i, l).gamma);
    }

    const double p = downlink_mw;
    const double pk = downlink_mw / K;
    Eigen::VectorXd sinr_c(K), sinr_p(K);
    for (int k = 0; k < K; ++k) {
        double ds = 0.0;
        double tc2 = 0.0;
        for (int l = 0; l < L; ++l) {
            const ScalarLink& sk = stats.at(k, l);
            double mean = 0.0;
            for (int i = 0; i < K; ++i) mean += los(k, i, l);
            for (int i : pilots.copilots[k]) mean += est(k, i, l);
            ds += std::sqrt(alloc.rho(l) * mu_c(l)) * mean;

            double var = 0.0;
            for (int i = 0; i < K; ++i) {
                for (int j : pilots.copilots[i]) {
                    const double g = std::sqrt(stats.at(i, l).gamma * stats.at(j, l).gamma);
                    var += N * sk.beta_nlos * g + N * sk.beta_los * g;
                }
                for (int j = 0; j < K; ++j)
                    var += N * sk.beta_nlos * std::sqrt(stats.at(i, l).beta_los * stats.at(j, l).beta_los);
            }
            tc2 += alloc.rho(l) * mu_c(l) * var;
        }
        const double tc1 = ds * ds;

        double tp2 = 0.0, cross_all = 0.0, own = 0.0;
        for (int i = 0; i < K; ++i) {
            const bool copilot = pilots.shares_pilot(k, i);
            double m = 0.0;
            for (int l = 0; l < L; ++l) {
                const ScalarLink& sk = stats.at(k, l);
                const ScalarLink& si = stats.at(i, l);
                const double w = (1.0 - alloc.rho(l)) * alloc.eta(i, l) * mu(i, l);
                m += std::sqrt(w) * (los(k, i, l) + (copilot ? est(k, i, l) : 0.0));
                tp2 += w * (N * sk.beta_nlos * si.gamma + N * sk.beta_los * si.gamma + N * si.beta_los * sk.beta_nlos);
            }
            cross_all += m * m;
            if (i == k) own = m * m;
        }
        sinr_c(k) = p * tc1 / (p * tc2 + pk * (tp2 + cross_all) + noise_mw);
        sinr_p(k) = pk * own / (pk * tp2 + pk * (cross_all - own) + noise_mw);
    }
    return assemble_report(std::move(sinr_c), std::move(sinr_p), prelog);
}

}  // namespace rscf

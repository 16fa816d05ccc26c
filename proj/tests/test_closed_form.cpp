#include <doctest.h>

#include <cmath>
#include <numeric>

#include "rscf/experiments.hpp"

using namespace rscf;

namespace {

SystemConfig small_config()
{
    SystemConfig cfg;
    cfg.num_ues = 3;
    cfg.num_aps = 4;
    cfg.antennas = 2;
    cfg.tau_p = 2;
    return cfg;
}

PowerAllocation random_allocation(int K, int L, Rng& rng)
{
    PowerAllocation a = PowerAllocation::equal(K, L, 0.0);
    for (int l = 0; l < L; ++l) a.rho(l) = rng.uniform();
    for (int k = 0; k < K; ++k)
        for (int l = 0; l < L; ++l) a.eta(k, l) = rng.uniform();
    return a;
}

// R = beta_nlos I and LoS vectors sharing one angle per AP.
Scenario uncorrelated(Scenario s)
{
    const int N = s.cfg.antennas;
    for (int l = 0; l < s.cfg.num_aps; ++l) {
        const double phi = s.stats.at(0, l).phi;
        for (int k = 0; k < s.cfg.num_ues; ++k) {
            Link& link = s.stats.at(k, l);
            link.R = link.beta_nlos * CMat::Identity(N, N);
            link.hbar = los_vector(link.beta_los, phi, N, s.cfg.antenna_spacing);
        }
    }
    s.stats.refresh_roots();
    s.est = estimation_statistics(s.stats, s.pilots, s.cfg);
    return s;
}

// Conjugate beamforming without rate splitting, single-antenna APs,
// Rayleigh fading, precoders normalized by the estimate variance.
double classical_bound(const LinkStatistics& st, const PilotAssignment& pilots, const Eigen::MatrixXd& eta,
                       double p_pilot, int tau_p, double p_dl, double noise, double prelog)
{
    const int K = st.num_ues, L = st.num_aps;
    Eigen::MatrixXd beta(K, L), gamma(K, L);
    for (int k = 0; k < K; ++k)
        for (int l = 0; l < L; ++l) beta(k, l) = st.at(k, l).beta_nlos;
    for (int k = 0; k < K; ++k)
        for (int l = 0; l < L; ++l) {
            double den = noise;
            for (int i = 0; i < K; ++i)
                if (pilots.pilot_of[i] == pilots.pilot_of[k]) den += tau_p * p_pilot * beta(i, l);
            gamma(k, l) = tau_p * p_pilot * beta(k, l) * beta(k, l) / den;
        }
    const double pk = p_dl / K;
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
        double ds = 0.0;
        for (int l = 0; l < L; ++l) ds += std::sqrt(eta(k, l) * gamma(k, l));
        double coherent = 0.0;
        for (int i = 0; i < K; ++i) {
            if (i == k || pilots.pilot_of[i] != pilots.pilot_of[k]) continue;
            double c = 0.0;
            for (int l = 0; l < L; ++l) c += std::sqrt(eta(i, l) * gamma(i, l)) * beta(k, l) / beta(i, l);
            coherent += c * c;
        }
        double spread = 0.0;
        for (int i = 0; i < K; ++i)
            for (int l = 0; l < L; ++l) spread += eta(i, l) * beta(k, l);
        const double sinr = pk * ds * ds / (pk * coherent + pk * spread + noise);
        total += std::log2(1.0 + sinr);
    }
    return prelog * total;
}

}  // namespace

TEST_CASE("power allocation layout and validation")
{
    Rng rng(1);
    const auto a = random_allocation(3, 4, rng);
    const Eigen::VectorXd x = a.to_vector();
    CHECK(x.size() == 4 + 12);
    const auto b = PowerAllocation::from_vector(x, 3, 4);
    CHECK(b.rho == a.rho);
    CHECK(b.eta == a.eta);
    CHECK(x(4 + 1 * 4 + 2) == a.eta(1, 2));
    auto bad = a;
    bad.rho(0) = 1.5;
    CHECK_THROWS_AS(bad.validate(3, 4), std::invalid_argument);
    CHECK_THROWS_AS(a.validate(2, 4), std::invalid_argument);
}

TEST_CASE("report assembly uses the worst common SINR")
{
    Eigen::VectorXd c(2), p(2);
    c << 3.0, 1.0;
    p << 1.0, 7.0;
    const auto r = assemble_report(c, p, 0.99);
    CHECK(r.se_common == doctest::Approx(0.99 * 1.0));
    CHECK(r.sum_se == doctest::Approx(0.99 * (1.0 + 1.0 + 3.0)));
    const auto swapped = assemble_report((Eigen::VectorXd(2) << 1.0, 3.0).finished(),
                                         (Eigen::VectorXd(2) << 7.0, 1.0).finished(), 0.99);
    CHECK(swapped.sum_se == doctest::Approx(r.sum_se));
}

TEST_CASE("normalizers")
{
    SystemConfig cfg = small_config();
    cfg.rician_db = -INFINITY;
    cfg.tau_p = 3;
    const Scenario s = make_scenario(cfg, 4, 0);
    const Normalizers mu = normalization_coeffs(s.stats, s.est, s.pilots);
    for (int i = 0; i < 3; ++i)
        for (int l = 0; l < 4; ++l) CHECK(mu.priv(i, l) == doctest::Approx(1.0 / s.est.q(i, l).trace().real()));

    SystemConfig one = small_config();
    one.num_ues = 1;
    one.tau_p = 1;
    const Scenario t = make_scenario(one, 4, 1);
    const Normalizers m1 = normalization_coeffs(t.stats, t.est, t.pilots);
    for (int l = 0; l < 4; ++l) CHECK(m1.common(l) == doctest::Approx(m1.priv(0, l)).epsilon(1e-12));
}

TEST_CASE("first and second moments in degenerate cases")
{
    SystemConfig cfg = small_config();
    cfg.rician_db = -INFINITY;
    SUBCASE("orthogonal pilots")
    {
        cfg.tau_p = 3;
        const Scenario s = make_scenario(cfg, 2, 0);
        for (int k = 0; k < 3; ++k)
            for (int l = 0; l < 4; ++l) {
                const cplx m = first_moment(k, k, l, s.stats, s.est);
                CHECK(std::abs(m - s.est.q(k, l).trace()) <= 1e-12 * std::abs(m));
                CHECK(std::abs(first_moment(k, (k + 1) % 3, l, s.stats, s.est)) == 0.0);
                const CMat& Q = s.est.q(k, l);
                const double u4 = upsilon_moments(k, k, k, l, s.stats, s.est, s.pilots).upsilon4.real();
                const double expect = std::norm(Q.trace()) + (Q * Q).trace().real();
                CHECK(u4 == doctest::Approx(expect).epsilon(1e-12));
                CHECK(classify_upsilon4(k, k, k, s.pilots) == Upsilon4Case::a);
            }
        const UpsilonPair e = upsilon_moments(0, 1, 2, 0, s.stats, s.est, s.pilots);
        CHECK(classify_upsilon4(0, 1, 2, s.pilots) == Upsilon4Case::e);
        CHECK(std::abs(e.upsilon4) == 0.0);
    }
    SUBCASE("second moment is at least the squared first moment")
    {
        cfg.rician_db = 5.0;
        const Scenario s = make_scenario(cfg, 3, 0);
        for (int k = 0; k < 3; ++k)
            for (int i = 0; i < 3; ++i)
                for (int l = 0; l < 4; ++l)
                    CHECK(second_moment(k, i, l, s.stats, s.est) >= std::norm(first_moment(k, i, l, s.stats, s.est)));
    }
}

TEST_CASE("upsilon4 case dispatch")
{
    const auto p = make_pilot_assignment({0, 0, 1, 1});
    CHECK(classify_upsilon4(0, 0, 0, p) == Upsilon4Case::a);
    CHECK(classify_upsilon4(0, 2, 3, p) != Upsilon4Case::a);
    CHECK(classify_upsilon4(0, 2, 3, p) != classify_upsilon4(0, 1, 2, p));
}

TEST_CASE("rate-splitting endpoints")
{
    const Scenario s = make_scenario(small_config(), 5, 0);
    const ClosedFormEvaluator ev(s.stats, s.est, s.pilots, s.cfg);
    const auto none = ev.evaluate(PowerAllocation::equal(3, 4, 0.0));
    CHECK(none.sinr_common.cwiseAbs().maxCoeff() == 0.0);
    CHECK(none.se_common == 0.0);
    CHECK(none.sum_se > 0.0);
    const auto all = ev.evaluate(PowerAllocation::equal(3, 4, 1.0));
    CHECK(all.se_private.cwiseAbs().maxCoeff() == 0.0);
    CHECK(all.se_common > 0.0);
    CHECK(none.prelog == doctest::Approx(0.99));
}

TEST_CASE("prelog zero when pilots fill the block")
{
    SystemConfig cfg = small_config();
    cfg.tau_c = 2;
    const Scenario s = make_scenario(cfg, 5, 0);
    CHECK(sum_se_closed(s.stats, s.est, s.pilots, PowerAllocation::equal(3, 4, 0.4), s.cfg).sum_se == 0.0);
}

TEST_CASE("more downlink power raises every SINR")
{
    const Scenario s = make_scenario(small_config(), 6, 0);
    const ClosedFormEvaluator a(s.stats, s.est, s.pilots, s.cfg.downlink_mw(), s.cfg.noise_mw(), s.cfg.prelog());
    const ClosedFormEvaluator b(s.stats, s.est, s.pilots, 2 * s.cfg.downlink_mw(), s.cfg.noise_mw(), s.cfg.prelog());
    Rng rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        const auto al = random_allocation(3, 4, rng);
        const auto ra = a.evaluate(al), rb = b.evaluate(al);
        for (int k = 0; k < 3; ++k) {
            CHECK(rb.sinr_common(k) >= ra.sinr_common(k));
            CHECK(rb.sinr_private(k) >= ra.sinr_private(k));
        }
    }
}

TEST_CASE("UE relabeling leaves the sum SE unchanged")
{
    const Scenario s = make_scenario(small_config(), 7, 0);
    const std::vector<int> perm{2, 0, 1};
    LinkStatistics ps(3, 4, 2);
    std::vector<int> pilot_of(3);
    for (int k = 0; k < 3; ++k) {
        pilot_of[k] = s.pilots.pilot_of[perm[k]];
        for (int l = 0; l < 4; ++l) ps.at(k, l) = s.stats.at(perm[k], l);
    }
    const auto pp = make_pilot_assignment(pilot_of);
    const auto pe = estimation_statistics(ps, pp, s.cfg);
    Rng rng(3);
    const auto al = random_allocation(3, 4, rng);
    PowerAllocation pal = al;
    for (int k = 0; k < 3; ++k) pal.eta.row(k) = al.eta.row(perm[k]);
    const double a = sum_se_closed(s.stats, s.est, s.pilots, al, s.cfg).sum_se;
    const double b = sum_se_closed(ps, pe, pp, pal, s.cfg).sum_se;
    CHECK(b == doctest::Approx(a).epsilon(1e-10));
}

TEST_CASE("uncorrelated Rician fading: general and scalar forms agree")
{
    for (int g = 0; g < 4; ++g) {
        SystemConfig cfg = small_config();
        cfg.antennas = 1 + g;
        const Scenario s = uncorrelated(make_scenario(cfg, 10, g));
        const auto sc = scalar_statistics(s.stats, s.pilots, cfg.pilot_mw(), cfg.tau_p, cfg.noise_mw());
        Rng rng(20 + g);
        for (int trial = 0; trial < 4; ++trial) {
            const auto al = random_allocation(3, 4, rng);
            const auto a = sum_se_closed(s.stats, s.est, s.pilots, al, cfg);
            const auto b = sum_se_uncorrelated(sc, s.pilots, al, cfg.downlink_mw(), cfg.noise_mw(), cfg.prelog());
            CHECK(std::abs(a.sum_se - b.sum_se) <= 1e-10 * a.sum_se);
            for (int k = 0; k < 3; ++k) {
                CHECK(std::abs(a.sinr_private(k) - b.sinr_private(k)) <= 1e-10 * a.sinr_private(k));
                CHECK(std::abs(a.sinr_common(k) - b.sinr_common(k)) <= 1e-10 * std::max(1e-300, a.sinr_common(k)));
            }
        }
    }
}

TEST_CASE("single-antenna Rayleigh reduction matches the classical bound")
{
    SystemConfig cfg = small_config();
    cfg.antennas = 1;
    cfg.rician_db = -INFINITY;
    cfg.num_ues = 4;
    cfg.num_aps = 6;
    const Scenario s = uncorrelated(make_scenario(cfg, 12, 0));
    const auto sc = scalar_statistics(s.stats, s.pilots, cfg.pilot_mw(), cfg.tau_p, cfg.noise_mw());
    Rng rng(4);
    for (int trial = 0; trial < 3; ++trial) {
        auto al = random_allocation(4, 6, rng);
        al.rho.setZero();
        const double oracle = classical_bound(s.stats, s.pilots, al.eta, cfg.pilot_mw(), cfg.tau_p, cfg.downlink_mw(),
                                              cfg.noise_mw(), cfg.prelog());
        const double general = sum_se_closed(s.stats, s.est, s.pilots, al, cfg).sum_se;
        const double scalar =
            sum_se_uncorrelated(sc, s.pilots, al, cfg.downlink_mw(), cfg.noise_mw(), cfg.prelog()).sum_se;
        CHECK(std::abs(general - oracle) <= 1e-10 * oracle);
        CHECK(std::abs(scalar - oracle) <= 1e-10 * oracle);
    }
}

TEST_CASE("closed form matches the sample-moment assembly")
{
    SystemConfig cfg;
    cfg.num_ues = 2;
    cfg.num_aps = 4;
    cfg.antennas = 2;
    cfg.tau_p = 1;
    const Scenario s = make_scenario(cfg, 1, 0);
    Rng rng(9);
    const auto al = random_allocation(2, 4, rng);
    const auto cf = sum_se_closed(s.stats, s.est, s.pilots, al, cfg);
    const auto mc = uatf_sample_assembly(s.stats, s.est, s.pilots, al, mc_settings(cfg, 200000, 77));
    for (int k = 0; k < 2; ++k) {
        CHECK(mc.sinr_common(k) == doctest::Approx(cf.sinr_common(k)).epsilon(0.01));
        CHECK(mc.sinr_private(k) == doctest::Approx(cf.sinr_private(k)).epsilon(0.01));
    }
}

#include <doctest.h>

#include <cstdlib>

#include "rscf/experiments.hpp"

using namespace rscf;

namespace {

SystemConfig desk()
{
    SystemConfig cfg;
    cfg.num_ues = 2;
    cfg.num_aps = 4;
    cfg.antennas = 2;
    cfg.tau_p = 1;
    return cfg;
}

EstimateRealization one_block(const Scenario& s, Rng& rng)
{
    const auto g = sample_channel(s.stats, rng);
    return estimate_channel(g, s.stats, s.est, s.pilots, s.cfg.noise_mw(), rng);
}

}  // namespace

TEST_CASE("single-UE common precoder is the private one")
{
    SystemConfig cfg = desk();
    cfg.num_ues = 1;
    const Scenario s = make_scenario(cfg, 1, 0);
    Rng rng(2);
    const auto block = one_block(s, rng);
    const auto pre = build_precoders(block, normalization_coeffs(s.stats, s.est, s.pilots));
    for (int l = 0; l < 4; ++l) {
        const CVec& a = pre.v_common[l];
        const CVec& b = pre.priv(0, l);
        CHECK(std::abs(std::abs(a.dot(b)) - a.norm() * b.norm()) <= 1e-12 * a.norm() * b.norm());
    }
}

TEST_CASE("precoder norms average to one")
{
    SystemConfig cfg = desk();
    cfg.num_ues = 3;
    cfg.tau_p = 2;
    const Scenario s = make_scenario(cfg, 3, 0);
    const Normalizers mu = normalization_coeffs(s.stats, s.est, s.pilots);
    std::vector<MomentQuery> q;
    for (int l = 0; l < 4; ++l) {
        q.push_back({MomentKind::common_norm, 0, 0, 0, l});
        for (int i = 0; i < 3; ++i) q.push_back({MomentKind::private_norm, 0, i, 0, l});
    }
    const auto est = mc_moment_estimators(s.stats, s.est, s.pilots, q, mc_settings(cfg, 100000, 5));
    for (std::size_t n = 0; n < q.size(); ++n) {
        const double m = q[n].kind == MomentKind::common_norm ? mu.common(q[n].l) : mu.priv(q[n].i, q[n].l);
        CHECK(est[n].value.real() * m == doctest::Approx(1.0).epsilon(0.01));
    }
}

TEST_CASE("perfect single-link pure LoS")
{
    SystemConfig cfg = desk();
    cfg.num_ues = 1;
    cfg.num_aps = 1;
    cfg.antennas = 1;
    Scenario base = make_scenario(cfg, 4, 0, true);
    base.stats.at(0, 0).R.setZero();
    base.stats.refresh_roots();
    base.est = perfect_csi_statistics(base.stats, base.pilots);
    Rng rng(1);
    const auto block = one_block(base, rng);
    const auto mu = normalization_coeffs(base.stats, base.est, base.pilots);
    const auto pre = build_precoders(block, mu);
    const cplx g = block.ghat[0](0);
    CHECK(std::norm(pre.priv(0, 0)(0)) == doctest::Approx(std::norm(g) * mu.priv(0, 0)));
    const auto sinr = instantaneous_sinrs(block, base.est, pre, PowerAllocation::equal(1, 1, 0.0), cfg.downlink_mw(),
                                          cfg.noise_mw());
    CHECK(sinr.priv(0) == doctest::Approx(cfg.downlink_mw() * std::norm(g) / cfg.noise_mw()).epsilon(1e-12));
    CHECK(sinr.common(0) == 0.0);
}

TEST_CASE("overwhelming noise drives SINRs to zero")
{
    const Scenario s = make_scenario(desk(), 5, 0);
    Rng rng(3);
    const auto block = one_block(s, rng);
    const auto pre = build_precoders(block, normalization_coeffs(s.stats, s.est, s.pilots));
    const auto sinr = instantaneous_sinrs(block, s.est, pre, PowerAllocation::equal(2, 4, 0.5), 0.2, 1e30);
    CHECK(sinr.common.maxCoeff() < 1e-20);
    CHECK(sinr.priv.maxCoeff() < 1e-20);
}

TEST_CASE("prelog")
{
    SystemConfig cfg = desk();
    CHECK(mc_settings(cfg, 10, 1).prelog == doctest::Approx(199.0 / 200.0));
    cfg.num_ues = 4;
    cfg.tau_p = 2;
    CHECK(cfg.prelog() == doctest::Approx(0.99));
    cfg.tau_c = 2;
    const Scenario s = make_scenario(cfg, 1, 0);
    const auto r = achievable_sum_se(s.stats, s.est, s.pilots, PowerAllocation::equal(4, 4, 0.3), mc_settings(cfg, 50, 1));
    CHECK(r.sum_se == 0.0);
}

TEST_CASE("achievable rate dominates the closed-form bound")
{
    for (double rho : {0.0, 0.5, 0.9}) {
        const Scenario s = make_scenario(desk(), 6, 0);
        const auto al = PowerAllocation::equal(2, 4, rho);
        const auto mc = achievable_sum_se(s.stats, s.est, s.pilots, al, mc_settings(s.cfg, 10000, 8));
        const double cf = sum_se_closed(s.stats, s.est, s.pilots, al, s.cfg).sum_se;
        CHECK(mc.sum_se >= cf - 2.0 * mc.sum_se_stderr);
    }
}

TEST_CASE("results do not depend on the worker count")
{
    SystemConfig cfg = desk();
    cfg.num_ues = 4;
    cfg.tau_p = 2;
    const Scenario s = make_scenario(cfg, 2, 0);
    const std::vector<PowerAllocation> al{PowerAllocation::equal(4, 4, 0.2), PowerAllocation::equal(4, 4, 0.7, 0.5)};
    setenv("RSCF_WORKERS", "1", 1);
    const auto a = achievable_sum_se(s.stats, s.est, s.pilots, al, mc_settings(cfg, 700, 3));
    setenv("RSCF_WORKERS", "3", 1);
    const auto b = achievable_sum_se(s.stats, s.est, s.pilots, al, mc_settings(cfg, 700, 3));
    unsetenv("RSCF_WORKERS");
    for (std::size_t n = 0; n < al.size(); ++n) {
        CHECK(a[n].sum_se == b[n].sum_se);
        CHECK(a[n].sum_se_stderr == b[n].sum_se_stderr);
    }
}

TEST_CASE("transmit power")
{
    SystemConfig cfg = desk();
    cfg.num_ues = 3;
    cfg.tau_p = 2;
    const Scenario s = make_scenario(cfg, 9, 0);
    std::vector<MomentQuery> q;
    for (int l = 0; l < 4; ++l) q.push_back({MomentKind::transmit_power, 0, 0, 0, l});
    const auto mc = mc_settings(cfg, 40000, 2);
    const double pd = cfg.downlink_mw();

    SUBCASE("tight for rho = 1 and eta = 1")
    {
        for (const auto& al : {PowerAllocation::equal(3, 4, 1.0, 0.3), PowerAllocation::equal(3, 4, 0.4)}) {
            const auto e = mc_moment_estimators(s.stats, s.est, s.pilots, q, mc, &al);
            for (const auto& m : e) CHECK(std::abs(m.value.real() - pd) <= 3.0 * m.stderr_);
        }
    }
    SUBCASE("bounded for arbitrary allocations")
    {
        Rng rng(4);
        PowerAllocation al = PowerAllocation::equal(3, 4, 0.0);
        for (int l = 0; l < 4; ++l) al.rho(l) = rng.uniform();
        for (int k = 0; k < 3; ++k)
            for (int l = 0; l < 4; ++l) al.eta(k, l) = rng.uniform();
        const auto e = mc_moment_estimators(s.stats, s.est, s.pilots, q, mc, &al);
        for (const auto& m : e) CHECK(m.value.real() <= pd + 3.0 * m.stderr_);
    }
    CHECK_THROWS_AS(mc_moment_estimators(s.stats, s.est, s.pilots, q, mc), std::invalid_argument);
    CHECK_THROWS_AS(mc_moment_estimators(s.stats, s.est, s.pilots, {{MomentKind::first, 5, 0, 0, 0}}, mc),
                    std::invalid_argument);
}

TEST_CASE("moment estimators track the closed forms")
{
    const Scenario s = make_scenario(desk(), 11, 0);
    std::vector<MomentQuery> q;
    for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 2; ++i) {
            q.push_back({MomentKind::first, k, i, 0, 1});
            q.push_back({MomentKind::second, k, i, 0, 1});
        }
    const auto e = mc_moment_estimators(s.stats, s.est, s.pilots, q, mc_settings(s.cfg, 200000, 6));
    for (std::size_t n = 0; n < q.size(); ++n) {
        const auto& m = q[n];
        if (m.kind == MomentKind::first) {
            const cplx c = first_moment(m.k, m.i, m.l, s.stats, s.est);
            CHECK(std::abs(e[n].value - c) <= 0.01 * std::abs(c));
        } else {
            const double c = second_moment(m.k, m.i, m.l, s.stats, s.est);
            CHECK(std::abs(e[n].value - c) <= 0.02 * c);
        }
    }
}

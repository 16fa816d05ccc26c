// SPDX-License-Identifier: Apache-2.0

#include "rscf/validation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rscf/experiments.hpp"

namespace rscf {

namespace {

constexpr double kResolveSigmas = 4.0;

const char* case_name(Upsilon4Case c)
{
    switch (c) {
    case Upsilon4Case::a: return "upsilon4_a";
    case Upsilon4Case::b: return "upsilon4_b";
    case Upsilon4Case::c: return "upsilon4_c";
    case Upsilon4Case::d: return "upsilon4_d";
    case Upsilon4Case::e: return "upsilon4_e";
    }
    return "upsilon4";
}

std::string tuple_name(const MomentQuery& q, const std::string& tag)
{
    return tag + " k=" + std::to_string(q.k) + " i=" + std::to_string(q.i) + " j=" + std::to_string(q.j) +
           " l=" + std::to_string(q.l);
}

void run_instance(const Scenario& s, std::uint64_t seed, std::size_t n_draws, const std::string& tag,
                  const std::set<std::string>& only, OracleReport& report)
{
    const int K = s.cfg.num_ues;
    const int L = s.cfg.num_aps;
    std::vector<MomentQuery> queries;
    std::vector<std::pair<std::string, cplx>> expected;
    auto want = [&](const std::string& q) { return only.empty() || only.count(q); };
    auto add = [&](MomentQuery q, const std::string& name, cplx value) {
        if (!want(name)) return;
        queries.push_back(q);
        expected.push_back({name, value});
    };

    for (int l = 0; l < L; ++l) {
        cplx common = 0.0;
        for (int k = 0; k < K; ++k)
            for (int i = 0; i < K; ++i) common += first_moment(k, i, l, s.stats, s.est);
        add({MomentKind::common_norm, 0, 0, 0, l}, "common_norm", common);
        for (int i = 0; i < K; ++i)
            add({MomentKind::private_norm, 0, i, 0, l}, "private_norm",
                s.stats.at(i, l).hbar.squaredNorm() + s.est.q(i, l).trace().real());
        for (int k = 0; k < K; ++k) {
            for (int i = 0; i < K; ++i) {
                add({MomentKind::first, k, i, 0, l}, "first", first_moment(k, i, l, s.stats, s.est));
                add({MomentKind::second, k, i, 0, l}, "second", second_moment(k, i, l, s.stats, s.est));
                for (int j = 0; j < K; ++j) {
                    const UpsilonPair u = upsilon_moments(k, i, j, l, s.stats, s.est, s.pilots);
                    add({MomentKind::upsilon4, k, i, j, l}, case_name(classify_upsilon4(k, i, j, s.pilots)), u.upsilon4);
                    add({MomentKind::upsilon5, k, i, j, l}, "upsilon5", u.upsilon5);
                }
            }
        }
    }
    if (queries.empty()) return;

    McSettings mc;
    mc.noise_mw = s.cfg.noise_mw();
    mc.downlink_mw = s.cfg.downlink_mw();
    mc.n_blocks = n_draws;
    mc.seed = seed;
    const auto est = mc_moment_estimators(s.stats, s.est, s.pilots, queries, mc);

    for (std::size_t n = 0; n < queries.size(); ++n) {
        OracleCheck c;
        c.quantity = expected[n].first;
        c.tuple = tuple_name(queries[n], tag);
        c.closed = expected[n].second;
        c.sampled = est[n].value;
        c.stderr_ = est[n].stderr_;
        c.tol = c.quantity == "first" ? 0.01 : 0.02;
        const double diff = std::abs(c.sampled - c.closed);
        c.resolvable = kResolveSigmas * c.stderr_ <= c.tol * std::abs(c.closed);
        c.pass = c.resolvable ? diff <= c.tol * std::abs(c.closed) : diff <= kResolveSigmas * c.stderr_;
        if (c.resolvable) ++report.resolvable[c.quantity];
        else report.resolvable.try_emplace(c.quantity, 0);
        report.checks.push_back(std::move(c));
    }
}

}  // namespace

double OracleCheck::rel_err() const
{
    const double d = std::abs(closed);
    return d > 0.0 ? std::abs(sampled - closed) / d : std::abs(sampled);
}

bool OracleReport::all_pass() const
{
    return std::all_of(checks.begin(), checks.end(), [](const OracleCheck& c) { return c.pass; });
}

bool OracleReport::covered() const
{
    static const char* required[] = {"first",      "second",     "upsilon4_a", "upsilon4_b",  "upsilon4_c",
                                     "upsilon4_d", "upsilon4_e", "upsilon5",   "common_norm", "private_norm"};
    for (const char* q : required) {
        const auto it = resolvable.find(q);
        if (it == resolvable.end() || it->second < 1) return false;
    }
    return true;
}

SystemConfig moment_oracle_config()
{
    SystemConfig cfg;
    cfg.num_ues = 3;
    cfg.num_aps = 2;
    cfg.antennas = 2;
    cfg.tau_p = 2;
    cfg.rician_db = 5.0;
    cfg.asd_deg = 15.0;
    return cfg;
}

OracleReport moment_oracle_suite(const SystemConfig& cfg, std::uint64_t seed, std::size_t n_draws)
{
    OracleReport report;
    const Scenario s = make_scenario(cfg, seed, 0);
    run_instance(s, derive_seed(seed, Stream::moments, {0}), n_draws, "main", {}, report);

    const auto it = report.resolvable.find("upsilon4_e");
    if (it == report.resolvable.end() && cfg.num_ues >= 3) {
        SystemConfig ortho = s.cfg;
        ortho.tau_p = ortho.num_ues;
        const Scenario o = rebuild_scenario(s, ortho);
        run_instance(o, derive_seed(seed, Stream::moments, {1}), n_draws, "orthogonal", {"upsilon4_e"}, report);
    }
    return report;
}

}  // namespace rscf

// SPDX-License-Identifier: Apache-2.0

#include "rscf/monte_carlo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rscf/parallel.hpp"

namespace rscf {

namespace {

constexpr std::size_t kMaxChunks = 64;

// Welford accumulator for a complex sample; M2 = sum |x - mean|^2.
struct Accum {
    double n = 0.0;
    cplx mean = 0.0;
    double m2 = 0.0;

    void add(cplx x)
    {
        n += 1.0;
        const cplx d = x - mean;
        mean += d / n;
        m2 += (std::conj(d) * (x - mean)).real();
    }
    void merge(const Accum& o)
    {
        if (o.n == 0.0) return;
        if (n == 0.0) {
            *this = o;
            return;
        }
        const double total = n + o.n;
        const cplx d = o.mean - mean;
        mean += d * (o.n / total);
        m2 += o.m2 + std::norm(d) * n * o.n / total;
        n = total;
    }
    double variance() const { return n > 0.0 ? m2 / n : 0.0; }
    double stderr_() const { return n > 1.0 ? std::sqrt(m2 / (n - 1.0) / n) : 0.0; }
};

struct ChunkRange {
    std::size_t begin;
    std::size_t end;
};

std::vector<ChunkRange> split_blocks(std::size_t n)
{
    const std::size_t chunks = std::max<std::size_t>(1, std::min(n, kMaxChunks));
    std::vector<ChunkRange> out;
    for (std::size_t c = 0; c < chunks; ++c) out.push_back({n * c / chunks, n * (c + 1) / chunks});
    return out;
}

// Allocation-independent scalars of one block.
struct BlockTerms {
    int K = 0;
    int L = 0;
    std::vector<cplx> common_gain;    // ghat_kl^H v_c,l        (k, l)
    std::vector<double> common_err;   // v_c,l^H C_kl v_c,l      (k, l)
    std::vector<cplx> private_gain;   // ghat_kl^H v_il          (k, i, l)
    std::vector<double> private_err;  // v_il^H C_kl v_il        (k, i, l)

    std::size_t kl(int k, int l) const { return std::size_t(k) * L + l; }
    std::size_t kil(int k, int i, int l) const { return (std::size_t(k) * K + i) * L + l; }
};

BlockTerms block_terms(const EstimateRealization& block, const EstimationStatistics& est, const PrecoderSet& pre)
{
    BlockTerms t;
    t.K = est.num_ues;
    t.L = est.num_aps;
    const std::size_t kl = std::size_t(t.K) * t.L;
    t.common_gain.resize(kl);
    t.common_err.assign(kl, 0.0);
    t.private_gain.resize(kl * t.K);
    t.private_err.assign(kl * t.K, 0.0);
    for (int k = 0; k < t.K; ++k) {
        for (int l = 0; l < t.L; ++l) {
            const CVec& gk = block.ghat[est.link(k, l)];
            const CMat& C = est.c(k, l);
            const CVec& vc = pre.v_common[l];
            t.common_gain[t.kl(k, l)] = gk.dot(vc);
            if (!est.perfect_csi) t.common_err[t.kl(k, l)] = vc.dot(C * vc).real();
            for (int i = 0; i < t.K; ++i) {
                const CVec& v = pre.priv(i, l);
                t.private_gain[t.kil(k, i, l)] = gk.dot(v);
                if (!est.perfect_csi) t.private_err[t.kil(k, i, l)] = v.dot(C * v).real();
            }
        }
    }
    return t;
}

BlockSinrs sinrs_from_terms(const BlockTerms& t, const PowerAllocation& alloc, double p, double noise)
{
    const int K = t.K;
    const int L = t.L;
    const double pk = p / K;
    BlockSinrs out;
    out.common.resize(K);
    out.priv.resize(K);
    for (int k = 0; k < K; ++k) {
        cplx ds = 0.0;
        double err_c = 0.0;
        for (int l = 0; l < L; ++l) {
            ds += std::sqrt(alloc.rho(l)) * t.common_gain[t.kl(k, l)];
            err_c += alloc.rho(l) * t.common_err[t.kl(k, l)];
        }
        double inter_all = 0.0, own = 0.0, err_p = 0.0;
        for (int i = 0; i < K; ++i) {
            cplx s = 0.0;
            for (int l = 0; l < L; ++l) {
                const double w2 = (1.0 - alloc.rho(l)) * alloc.eta(i, l);
                s += std::sqrt(w2) * t.private_gain[t.kil(k, i, l)];
                err_p += w2 * t.private_err[t.kil(k, i, l)];
            }
            const double e = std::norm(s);
            inter_all += e;
            if (i == k) own = e;
        }
        out.common(k) = p * std::norm(ds) / (p * err_c + pk * inter_all + pk * err_p + noise);
        out.priv(k) = pk * own / (pk * (inter_all - own) + pk * err_p + noise);
    }
    return out;
}

EstimateRealization draw_block(const LinkStatistics& stats, const EstimationStatistics& est,
                               const PilotAssignment& pilots, double noise_mw, Rng& rng, ChannelRealization* channel)
{
    ChannelRealization g = sample_channel(stats, rng);
    EstimateRealization e = estimate_channel(g, stats, est, pilots, noise_mw, rng);
    if (channel) *channel = std::move(g);
    return e;
}

void check_settings(const McSettings& mc)
{
    if (mc.n_blocks < 1) throw std::invalid_argument("monte carlo: n_blocks must be >= 1");
}

}  // namespace

McSettings mc_settings(const SystemConfig& cfg, std::size_t n_blocks, std::uint64_t seed)
{
    return {cfg.downlink_mw(), cfg.noise_mw(), cfg.prelog(), n_blocks, seed};
}

PrecoderSet build_precoders(const EstimateRealization& block, const Normalizers& mu)
{
    PrecoderSet p;
    p.num_ues = static_cast<int>(mu.priv.rows());
    p.num_aps = static_cast<int>(mu.priv.cols());
    const auto n = block.ghat.front().size();
    p.v_common.assign(p.num_aps, CVec::Zero(n));
    p.v_private.resize(block.ghat.size());
    for (int i = 0; i < p.num_ues; ++i) {
        for (int l = 0; l < p.num_aps; ++l) {
            const CVec& g = block.ghat[std::size_t(i) * p.num_aps + l];
            p.v_private[std::size_t(i) * p.num_aps + l] = std::sqrt(mu.priv(i, l)) * g;
            p.v_common[l] += g;
        }
    }
    for (int l = 0; l < p.num_aps; ++l) p.v_common[l] *= std::sqrt(mu.common(l));
    return p;
}

BlockSinrs instantaneous_sinrs(const EstimateRealization& block, const EstimationStatistics& est,
                               const PrecoderSet& precoders, const PowerAllocation& alloc, double downlink_mw,
                               double noise_mw)
{
    alloc.validate(est.num_ues, est.num_aps);
    return sinrs_from_terms(block_terms(block, est, precoders), alloc, downlink_mw, noise_mw);
}

std::vector<AchievableReport> achievable_sum_se(const LinkStatistics& stats, const EstimationStatistics& est,
                                                const PilotAssignment& pilots,
                                                const std::vector<PowerAllocation>& allocs, const McSettings& mc)
{
    check_settings(mc);
    const int K = stats.num_ues;
    for (const auto& a : allocs) a.validate(K, stats.num_aps);
    const Normalizers mu = normalization_coeffs(stats, est, pilots);
    const auto chunks = split_blocks(mc.n_blocks);
    const std::size_t A = allocs.size();

    // Per chunk and allocation: [sum, common, private_0..K-1].
    std::vector<std::vector<std::vector<Accum>>> acc(chunks.size(), std::vector<std::vector<Accum>>(A, std::vector<Accum>(2 + K)));
    parallel_for(chunks.size(), [&](std::size_t c) {
        Rng rng(mc.seed, Stream::channel, {c});
        for (std::size_t b = chunks[c].begin; b < chunks[c].end; ++b) {
            const EstimateRealization block = draw_block(stats, est, pilots, mc.noise_mw, rng, nullptr);
            const BlockTerms terms = block_terms(block, est, build_precoders(block, mu));
            for (std::size_t a = 0; a < A; ++a) {
                const BlockSinrs s = sinrs_from_terms(terms, allocs[a], mc.downlink_mw, mc.noise_mw);
                const double common = std::log2(1.0 + s.common.minCoeff());
                double total = common;
                acc[c][a][1].add(common);
                for (int k = 0; k < K; ++k) {
                    const double r = std::log2(1.0 + s.priv(k));
                    acc[c][a][2 + k].add(r);
                    total += r;
                }
                acc[c][a][0].add(total);
            }
        }
    });

    std::vector<AchievableReport> out(A);
    for (std::size_t a = 0; a < A; ++a) {
        std::vector<Accum> total(2 + K);
        for (std::size_t c = 0; c < chunks.size(); ++c)
            for (int q = 0; q < 2 + K; ++q) total[q].merge(acc[c][a][q]);
        AchievableReport& r = out[a];
        r.prelog = mc.prelog;
        r.blocks = mc.n_blocks;
        r.sum_se = mc.prelog * total[0].mean.real();
        r.sum_se_stderr = mc.prelog * total[0].stderr_();
        r.se_common = mc.prelog * total[1].mean.real();
        r.se_private.resize(K);
        for (int k = 0; k < K; ++k) r.se_private(k) = mc.prelog * total[2 + k].mean.real();
    }
    return out;
}

AchievableReport achievable_sum_se(const LinkStatistics& stats, const EstimationStatistics& est,
                                   const PilotAssignment& pilots, const PowerAllocation& alloc, const McSettings& mc)
{
    return achievable_sum_se(stats, est, pilots, std::vector<PowerAllocation>{alloc}, mc).front();
}

std::vector<MomentEstimate> mc_moment_estimators(const LinkStatistics& stats, const EstimationStatistics& est,
                                                 const PilotAssignment& pilots,
                                                 const std::vector<MomentQuery>& queries, const McSettings& mc,
                                                 const PowerAllocation* alloc)
{
    check_settings(mc);
    const int K = stats.num_ues;
    const int L = stats.num_aps;
    for (const auto& q : queries) {
        const auto kind = static_cast<int>(q.kind);
        if (kind < static_cast<int>(MomentKind::first) || kind > static_cast<int>(MomentKind::transmit_power))
            throw std::invalid_argument("mc_moment_estimators: unknown selector " + std::to_string(kind));
        auto ue = [K](int x) { return x >= 0 && x < K; };
        if (!ue(q.k) || !ue(q.i) || !ue(q.j) || q.l < 0 || q.l >= L)
            throw std::invalid_argument("mc_moment_estimators: index outside the system");
        if (q.kind == MomentKind::transmit_power && !alloc)
            throw std::invalid_argument("mc_moment_estimators: transmit_power needs an allocation");
    }
    if (alloc) alloc->validate(K, L);

    const Normalizers mu = normalization_coeffs(stats, est, pilots);
    const auto chunks = split_blocks(mc.n_blocks);
    std::vector<std::vector<Accum>> acc(chunks.size(), std::vector<Accum>(queries.size()));

    parallel_for(chunks.size(), [&](std::size_t c) {
        Rng rng(mc.seed, Stream::moments, {c});
        ChannelRealization g;
        for (std::size_t b = chunks[c].begin; b < chunks[c].end; ++b) {
            const EstimateRealization e = draw_block(stats, est, pilots, mc.noise_mw, rng, &g);
            // Messages for the transmit-power selector.
            const cplx s_common = rng.cnormal();
            std::vector<cplx> s_private(K);
            for (auto& s : s_private) s = rng.cnormal();

            for (std::size_t qi = 0; qi < queries.size(); ++qi) {
                const MomentQuery& q = queries[qi];
                auto at = [&](const std::vector<CVec>& v, int u) -> const CVec& { return v[std::size_t(u) * L + q.l]; };
                cplx x;
                switch (q.kind) {
                case MomentKind::first:
                    x = at(g.g, q.k).dot(at(e.ghat, q.i));
                    break;
                case MomentKind::second:
                    x = std::norm(at(g.g, q.k).dot(at(e.ghat, q.i)));
                    break;
                case MomentKind::upsilon3:
                    x = std::conj(at(g.g, q.k).dot(at(e.ghat, q.i))) * at(g.g, q.k).dot(at(e.ghat, q.j));
                    break;
                case MomentKind::upsilon4:
                    x = std::conj(at(e.ghat, q.k).dot(at(e.ghat, q.i))) * at(e.ghat, q.k).dot(at(e.ghat, q.j));
                    break;
                case MomentKind::upsilon5:
                    x = std::conj(at(e.gtilde, q.k).dot(at(e.ghat, q.i))) * at(e.gtilde, q.k).dot(at(e.ghat, q.j));
                    break;
                case MomentKind::common_norm: {
                    CVec s = CVec::Zero(stats.antennas);
                    for (int u = 0; u < K; ++u) s += at(e.ghat, u);
                    x = s.squaredNorm();
                    break;
                }
                case MomentKind::private_norm:
                    x = at(e.ghat, q.i).squaredNorm();
                    break;
                case MomentKind::transmit_power: {
                    const double p = mc.downlink_mw;
                    const double rho = alloc->rho(q.l);
                    CVec s = CVec::Zero(stats.antennas);
                    for (int u = 0; u < K; ++u) s += at(e.ghat, u);
                    CVec xl = std::sqrt(p * rho * mu.common(q.l)) * s_common * s;
                    for (int u = 0; u < K; ++u)
                        xl += std::sqrt(p * (1.0 - rho) * alloc->eta(u, q.l) * mu.priv(u, q.l) / K) * s_private[u] *
                              at(e.ghat, u);
                    x = xl.squaredNorm();
                    break;
                }
                }
                acc[c][qi].add(x);
            }
        }
    });

    std::vector<MomentEstimate> out(queries.size());
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        Accum total;
        for (std::size_t c = 0; c < chunks.size(); ++c) total.merge(acc[c][qi]);
        out[qi] = {total.mean, total.stderr_()};
    }
    return out;
}

SEReport uatf_sample_assembly(const LinkStatistics& stats, const EstimationStatistics& est,
                              const PilotAssignment& pilots, const PowerAllocation& alloc, const McSettings& mc)
{
    check_settings(mc);
    const int K = stats.num_ues;
    const int L = stats.num_aps;
    alloc.validate(K, L);
    const Normalizers mu = normalization_coeffs(stats, est, pilots);
    const auto chunks = split_blocks(mc.n_blocks);

    // Per chunk: K common accumulators followed by K*K private ones.
    std::vector<std::vector<Accum>> acc(chunks.size(), std::vector<Accum>(std::size_t(K) + std::size_t(K) * K));
    parallel_for(chunks.size(), [&](std::size_t c) {
        Rng rng(mc.seed, Stream::moments, {c});
        ChannelRealization g;
        for (std::size_t b = chunks[c].begin; b < chunks[c].end; ++b) {
            const EstimateRealization e = draw_block(stats, est, pilots, mc.noise_mw, rng, &g);
            const PrecoderSet pre = build_precoders(e, mu);
            for (int k = 0; k < K; ++k) {
                cplx ds = 0.0;
                for (int l = 0; l < L; ++l) ds += std::sqrt(alloc.rho(l)) * g.at(k, l, L).dot(pre.v_common[l]);
                acc[c][k].add(ds);
                for (int i = 0; i < K; ++i) {
                    cplx x = 0.0;
                    for (int l = 0; l < L; ++l)
                        x += std::sqrt((1.0 - alloc.rho(l)) * alloc.eta(i, l)) * g.at(k, l, L).dot(pre.priv(i, l));
                    acc[c][K + std::size_t(k) * K + i].add(x);
                }
            }
        }
    });

    std::vector<Accum> total(acc.front().size());
    for (const auto& chunk : acc)
        for (std::size_t q = 0; q < total.size(); ++q) total[q].merge(chunk[q]);

    const double p = mc.downlink_mw;
    const double pk = p / K;
    Eigen::VectorXd sinr_c(K), sinr_p(K);
    for (int k = 0; k < K; ++k) {
        double inter_all = 0.0;
        for (int i = 0; i < K; ++i) {
            const Accum& a = total[K + std::size_t(k) * K + i];
            inter_all += std::norm(a.mean) + a.variance();
        }
        const Accum& own = total[K + std::size_t(k) * K + k];
        const Accum& dc = total[k];
        sinr_c(k) = p * std::norm(dc.mean) / (p * dc.variance() + pk * inter_all + mc.noise_mw);
        sinr_p(k) = pk * std::norm(own.mean) / (pk * (inter_all - std::norm(own.mean)) + mc.noise_mw);
    }
    return assemble_report(std::move(sinr_c), std::move(sinr_p), mc.prelog);
}

}  // namespace rscf

// SPDX-License-Identifier: Apache-2.0

#include "rscf/experiments.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rscf/parallel.hpp"

namespace rscf {

// ---------------------------------------------------------------- scenarios

Scenario make_scenario(const SystemConfig& base, std::uint64_t seed, std::size_t index, bool perfect_csi)
{
    Scenario s;
    s.cfg = base;
    s.cfg.seed = derive_seed(seed, Stream::experiment, {index});
    s.cfg.validate();
    Rng placement_rng(s.cfg.seed, Stream::placement);
    s.placement = place_network(s.cfg, placement_rng);
    Rng pilot_rng(s.cfg.seed, Stream::pilots);
    s.pilots = assign_pilots(s.cfg.num_ues, s.cfg.tau_p, pilot_rng, s.cfg.random_pilots);
    s.stats = build_link_statistics(s.cfg, s.placement);
    s.est = perfect_csi ? perfect_csi_statistics(s.stats, s.pilots) : estimation_statistics(s.stats, s.pilots, s.cfg);
    return s;
}

Scenario rebuild_scenario(const Scenario& s, const SystemConfig& cfg, bool perfect_csi)
{
    if (cfg.num_aps != s.cfg.num_aps || cfg.num_ues != s.cfg.num_ues)
        throw std::invalid_argument("rebuild_scenario: the deployment size cannot change");
    Scenario out = s;
    out.cfg = cfg;
    out.cfg.seed = s.cfg.seed;
    if (cfg.tau_p != s.cfg.tau_p || cfg.random_pilots != s.cfg.random_pilots) {
        Rng pilot_rng(out.cfg.seed, Stream::pilots);
        out.pilots = assign_pilots(cfg.num_ues, cfg.tau_p, pilot_rng, cfg.random_pilots);
    }
    out.stats = build_link_statistics(out.cfg, out.placement);
    out.est = perfect_csi ? perfect_csi_statistics(out.stats, out.pilots)
                          : estimation_statistics(out.stats, out.pilots, out.cfg);
    return out;
}

std::vector<double> rho_grid(int n, double hi)
{
    if (n < 2) throw std::invalid_argument("rho_grid: need at least two points");
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) g[i] = hi * i / (n - 1);
    return g;
}

std::vector<double> rho_grid_extended()
{
    std::vector<double> g = rho_grid();
    for (double m : {2.5, 3.0, 3.5, 4.0}) g.push_back(1.0 - std::pow(10.0, -m));
    g.push_back(1.0);
    return g;
}

namespace {

GridSweep sweep(const std::vector<double>& grid, const std::function<double(double)>& f)
{
    GridSweep s;
    for (double r : grid) s.values.push_back(f(r));
    s.best = std::max_element(s.values.begin(), s.values.end()) - s.values.begin();
    return s;
}

}  // namespace

GridSweep sweep_equal(const ClosedFormEvaluator& ev, const std::vector<double>& grid)
{
    return sweep(grid, [&](double r) { return ev.sum_se(PowerAllocation::equal(ev.num_ues(), ev.num_aps(), r)); });
}

GridSweep sweep_heuristic_split(const ClosedFormEvaluator& ev, const Eigen::MatrixXd& zeta,
                                const std::vector<double>& grid, HeuristicParams params)
{
    return sweep(grid, [&](double r) {
        params.rho0 = r;
        PowerAllocation a = PowerAllocation::equal(ev.num_ues(), ev.num_aps(), r);
        a.rho = heuristic_split(zeta, params);
        return ev.sum_se(a);
    });
}

GridSweep sweep_heuristic_joint(const ClosedFormEvaluator& ev, const Eigen::MatrixXd& zeta,
                                const std::vector<double>& grid, HeuristicParams params)
{
    return sweep(grid, [&](double r) {
        params.rho0 = r;
        return ev.sum_se(heuristic_allocation(zeta, params));
    });
}

DynamicProblem::DynamicProblem(const SystemConfig& base, std::uint64_t seed) : scenario_(make_scenario(base, seed, 0)) {}

ClosedFormEvaluator DynamicProblem::evaluator(const Environment& env) const
{
    SystemConfig cfg = scenario_.cfg;
    cfg.rician_db = env.kappa_db;
    cfg.asd_deg = env.asd_deg;
    const Scenario s = rebuild_scenario(scenario_, cfg);
    return ClosedFormEvaluator(s.stats, s.est, s.pilots, s.cfg);
}

double DynamicProblem::objective(const Environment& env, const Eigen::VectorXd& x) const
{
    return evaluator(env).sum_se(PowerAllocation::from_vector(x, scenario_.cfg.num_ues, scenario_.cfg.num_aps));
}

PowerAllocation DynamicProblem::heuristic(const ClosedFormEvaluator& ev, const std::vector<double>& grid) const
{
    const Eigen::MatrixXd zeta = scenario_.stats.zeta_matrix();
    const GridSweep s = sweep_heuristic_joint(ev, zeta, grid);
    HeuristicParams p;
    p.rho0 = grid[s.best];
    return heuristic_allocation(zeta, p);
}

ExpertRecord DynamicProblem::expert(const Environment& env, const GAConfig& ga, const std::vector<double>& grid,
                                    const std::vector<PowerAllocation>& extra) const
{
    const ClosedFormEvaluator ev = evaluator(env);
    const int K = scenario_.cfg.num_ues;
    const int L = scenario_.cfg.num_aps;
    const GridSweep eq = sweep_equal(ev, grid);
    std::vector<PowerAllocation> seeds{heuristic(ev, grid), PowerAllocation::equal(K, L, grid[eq.best])};
    seeds.insert(seeds.end(), extra.begin(), extra.end());
    const AllocationResult r = ga_allocate(ev, AllocVars::joint, seeds.front(), ga, seeds);
    return {env, r.alloc.to_vector(), r.sum_se};
}

std::vector<PowerAllocation> expert_anchor(const ExperimentSpec& spec, const DynamicProblem& problem)
{
    const auto [kmin, kmax] = std::minmax_element(spec.expert_kappa_db.begin(), spec.expert_kappa_db.end());
    const auto [amin, amax] = std::minmax_element(spec.expert_asd_deg.begin(), spec.expert_asd_deg.end());
    const Environment centre{0.5 * (*kmin + *kmax), 0.5 * (*amin + *amax)};
    const ExpertRecord r = problem.expert(centre, spec.ga, rho_grid());
    return {PowerAllocation::from_vector(r.x0, spec.system.num_ues, spec.system.num_aps)};
}

// ---------------------------------------------------------------- config

std::string to_string(ExperimentId id)
{
    switch (id) {
    case ExperimentId::cdf: return "cdf";
    case ExperimentId::power_sweep: return "power_sweep";
    case ExperimentId::rho_sweep_split: return "rho_sweep_split";
    case ExperimentId::rho_sweep_control: return "rho_sweep_control";
    case ExperimentId::ap_sweep: return "ap_sweep";
    case ExperimentId::rician_sweep: return "rician_sweep";
    case ExperimentId::train_diffusion: return "train_diffusion";
    case ExperimentId::eval_dynamic: return "eval_dynamic";
    }
    return "unknown";
}

ExperimentId experiment_from_string(const std::string& name)
{
    for (auto id : {ExperimentId::cdf, ExperimentId::power_sweep, ExperimentId::rho_sweep_split,
                    ExperimentId::rho_sweep_control, ExperimentId::ap_sweep, ExperimentId::rician_sweep,
                    ExperimentId::train_diffusion, ExperimentId::eval_dynamic})
        if (to_string(id) == name) return id;
    throw std::invalid_argument("experiment: unknown id '" + name + "'");
}

void ExperimentSpec::validate() const
{
    system.validate();
    if (n_geometries < 1) throw std::invalid_argument("n_geometries: must be >= 1");
    if (n_blocks < 1) throw std::invalid_argument("n_blocks: must be >= 1");
    if (output.empty()) throw std::invalid_argument("output: must not be empty");
    for (int k : ue_counts)
        if (k < 1) throw std::invalid_argument("ue_counts: entries must be >= 1");
    ga.validate();
    expert_ga.validate();
    if (train.steps < 0 || train.batch < 1 || !(train.lr > 0.0) || train.hidden < 1 || train.T < 1)
        throw std::invalid_argument("train: invalid training settings");
    if (expert_kappa_db.empty() || expert_asd_deg.empty()) throw std::invalid_argument("expert grid: must be nonempty");
    if (eval_kappa_db.empty() || eval_asd_deg.empty()) throw std::invalid_argument("eval grid: must be nonempty");
}

namespace {

std::string fmt(double v)
{
    if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& v)
{
    if (v == "-inf") return -std::numeric_limits<double>::infinity();
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return d;
}

long long to_int(const std::string& v)
{
    std::size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("not an integer");
    return i;
}

bool to_bool(const std::string& v)
{
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("expected true or false");
}

std::vector<std::string> split_list(const std::string& v)
{
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T>
std::string join(const std::vector<T>& xs)
{
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) s += ", ";
        if constexpr (std::is_floating_point_v<T>)
            s += fmt(xs[i]);
        else
            s += std::to_string(xs[i]);
    }
    return s;
}

struct Field {
    std::function<std::string(const ExperimentSpec&)> get;
    std::function<void(ExperimentSpec&, const std::string&)> set;
};

template <typename Get>
Field scalar(Get get)
{
    using T = std::remove_reference_t<decltype(get(std::declval<ExperimentSpec&>()))>;
    return {[get](const ExperimentSpec& s) {
                T v = get(const_cast<ExperimentSpec&>(s));
                if constexpr (std::is_same_v<T, bool>) return std::string(v ? "true" : "false");
                else if constexpr (std::is_floating_point_v<T>) return fmt(v);
                else return std::to_string(v);
            },
            [get](ExperimentSpec& s, const std::string& v) {
                if constexpr (std::is_same_v<T, bool>) get(s) = to_bool(v);
                else if constexpr (std::is_floating_point_v<T>) get(s) = to_double(v);
                else {
                    const long long i = to_int(v);
                    if constexpr (std::is_unsigned_v<T>)
                        if (i < 0) throw std::invalid_argument("must be nonnegative");
                    get(s) = static_cast<T>(i);
                }
            }};
}

template <typename Get>
Field double_list(Get get)
{
    return {[get](const ExperimentSpec& s) { return join(get(const_cast<ExperimentSpec&>(s))); },
            [get](ExperimentSpec& s, const std::string& v) {
                std::vector<double> out;
                for (const auto& x : split_list(v)) out.push_back(to_double(x));
                get(s) = std::move(out);
            }};
}

const std::vector<std::pair<std::string, Field>>& fields()
{
    static const std::vector<std::pair<std::string, Field>> table = [] {
        std::vector<std::pair<std::string, Field>> t;
        t.push_back({"experiment", {[](const ExperimentSpec& s) { return to_string(s.id); },
                                    [](ExperimentSpec& s, const std::string& v) { s.id = experiment_from_string(v); }}});
        t.push_back({"num_aps", scalar([](ExperimentSpec& s) -> int& { return s.system.num_aps; })});
        t.push_back({"num_ues", scalar([](ExperimentSpec& s) -> int& { return s.system.num_ues; })});
        t.push_back({"antennas", scalar([](ExperimentSpec& s) -> int& { return s.system.antennas; })});
        t.push_back({"tau_c", scalar([](ExperimentSpec& s) -> int& { return s.system.tau_c; })});
        t.push_back({"tau_p", {[](const ExperimentSpec& s) { return s.tau_p_auto ? std::string("auto") : std::to_string(s.system.tau_p); },
                               [](ExperimentSpec& s, const std::string& v) {
                                   s.tau_p_auto = v == "auto";
                                   if (!s.tau_p_auto) s.system.tau_p = static_cast<int>(to_int(v));
                               }}});
        t.push_back({"area_side", scalar([](ExperimentSpec& s) -> double& { return s.system.area_side; })});
        t.push_back({"antenna_spacing", scalar([](ExperimentSpec& s) -> double& { return s.system.antenna_spacing; })});
        t.push_back({"clusters", scalar([](ExperimentSpec& s) -> int& { return s.system.clusters; })});
        t.push_back({"asd_deg", scalar([](ExperimentSpec& s) -> double& { return s.system.asd_deg; })});
        t.push_back({"rician_db", scalar([](ExperimentSpec& s) -> double& { return s.system.rician_db; })});
        t.push_back({"pilot_dbm", scalar([](ExperimentSpec& s) -> double& { return s.system.pilot_dbm; })});
        t.push_back({"downlink_dbm", scalar([](ExperimentSpec& s) -> double& { return s.system.downlink_dbm; })});
        t.push_back({"noise_dbm", scalar([](ExperimentSpec& s) -> double& { return s.system.noise_dbm; })});
        t.push_back({"shadowing", scalar([](ExperimentSpec& s) -> bool& { return s.system.shadowing; })});
        t.push_back({"shadow_sigma_db", scalar([](ExperimentSpec& s) -> double& { return s.system.shadow_sigma_db; })});
        t.push_back({"random_pilots", scalar([](ExperimentSpec& s) -> bool& { return s.system.random_pilots; })});
        t.push_back({"seed", scalar([](ExperimentSpec& s) -> std::uint64_t& { return s.seed; })});
        t.push_back({"grid", double_list([](ExperimentSpec& s) -> std::vector<double>& { return s.grid; })});
        t.push_back({"ue_counts", {[](const ExperimentSpec& s) { return join(s.ue_counts); },
                                   [](ExperimentSpec& s, const std::string& v) {
                                       s.ue_counts.clear();
                                       for (const auto& x : split_list(v)) s.ue_counts.push_back(static_cast<int>(to_int(x)));
                                   }}});
        t.push_back({"n_geometries", scalar([](ExperimentSpec& s) -> int& { return s.n_geometries; })});
        t.push_back({"n_blocks", scalar([](ExperimentSpec& s) -> std::size_t& { return s.n_blocks; })});
        t.push_back({"output", {[](const ExperimentSpec& s) { return s.output; },
                                [](ExperimentSpec& s, const std::string& v) { s.output = v; }}});
        t.push_back({"checkpoint", {[](const ExperimentSpec& s) { return s.checkpoint; },
                                    [](ExperimentSpec& s, const std::string& v) { s.checkpoint = v; }}});
        for (auto [prefix, which] : {std::pair{"ga_", 0}, std::pair{"expert_ga_", 1}}) {
            auto ga = [which](ExperimentSpec& s) -> GAConfig& { return which ? s.expert_ga : s.ga; };
            const std::string p = prefix;
            t.push_back({p + "population", scalar([ga](ExperimentSpec& s) -> int& { return ga(s).population; })});
            t.push_back({p + "generations", scalar([ga](ExperimentSpec& s) -> int& { return ga(s).generations; })});
            t.push_back({p + "crossover_rate", scalar([ga](ExperimentSpec& s) -> double& { return ga(s).crossover_rate; })});
            t.push_back({p + "mutation_rate", scalar([ga](ExperimentSpec& s) -> double& { return ga(s).mutation_rate; })});
            t.push_back({p + "mutation_sigma", scalar([ga](ExperimentSpec& s) -> double& { return ga(s).mutation_sigma; })});
            t.push_back({p + "tournament", scalar([ga](ExperimentSpec& s) -> int& { return ga(s).tournament; })});
            t.push_back({p + "elitism", scalar([ga](ExperimentSpec& s) -> int& { return ga(s).elitism; })});
        }
        t.push_back({"train_steps", scalar([](ExperimentSpec& s) -> int& { return s.train.steps; })});
        t.push_back({"train_batch", scalar([](ExperimentSpec& s) -> int& { return s.train.batch; })});
        t.push_back({"train_lr", scalar([](ExperimentSpec& s) -> double& { return s.train.lr; })});
        t.push_back({"train_exploration", scalar([](ExperimentSpec& s) -> double& { return s.train.exploration; })});
        t.push_back({"train_hidden", scalar([](ExperimentSpec& s) -> int& { return s.train.hidden; })});
        t.push_back({"train_embed", scalar([](ExperimentSpec& s) -> int& { return s.train.embed; })});
        t.push_back({"train_T", scalar([](ExperimentSpec& s) -> int& { return s.train.T; })});
        t.push_back({"train_v_min", scalar([](ExperimentSpec& s) -> double& { return s.train.v_min; })});
        t.push_back({"train_v_max", scalar([](ExperimentSpec& s) -> double& { return s.train.v_max; })});
        t.push_back({"expert_kappa_db", double_list([](ExperimentSpec& s) -> std::vector<double>& { return s.expert_kappa_db; })});
        t.push_back({"expert_asd_deg", double_list([](ExperimentSpec& s) -> std::vector<double>& { return s.expert_asd_deg; })});
        t.push_back({"eval_kappa_db", double_list([](ExperimentSpec& s) -> std::vector<double>& { return s.eval_kappa_db; })});
        t.push_back({"eval_asd_deg", double_list([](ExperimentSpec& s) -> std::vector<double>& { return s.eval_asd_deg; })});
        return t;
    }();
    return table;
}

void resolve(ExperimentSpec& spec)
{
    if (spec.tau_p_auto) spec.system.tau_p = std::max(1, spec.system.num_ues / 2);
    spec.system.seed = spec.seed;
    spec.ga.seed = derive_seed(spec.seed, Stream::ga);
    spec.expert_ga.seed = derive_seed(spec.seed, Stream::ga, {1});
    spec.train.seed = derive_seed(spec.seed, Stream::diffusion_train);
}

}  // namespace

bool ExperimentSpec::operator==(const ExperimentSpec& o) const
{
    for (const auto& [key, f] : fields())
        if (f.get(*this) != f.get(o)) return false;
    return true;
}

ExperimentSpec parse_config_text(const std::string& text, const std::string& origin)
{
    ExperimentSpec spec;
    std::map<std::string, const Field*> index;
    for (const auto& [key, f] : fields()) index[key] = &f;

    std::stringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = origin + ":" + std::to_string(lineno) + ": ";
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument(where + "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = index.find(key);
        if (it == index.end()) throw std::invalid_argument(where + "unknown key '" + key + "'");
        try {
            it->second->set(spec, value);
        } catch (const std::exception& e) {
            throw std::invalid_argument(where + key + ": invalid value '" + value + "' (" + e.what() + ")");
        }
    }
    resolve(spec);
    spec.validate();
    return spec;
}

ExperimentSpec parse_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

std::string serialize(const ExperimentSpec& spec)
{
    std::string out;
    for (const auto& [key, f] : fields()) out += key + " = " + f.get(spec) + "\n";
    return out;
}

ExperimentSpec figure_spec(const std::string& figure_id)
{
    static const std::map<std::string, std::string> figures{
        {"fig2", "experiment = cdf\n"},
        {"fig3", "experiment = power_sweep\nn_geometries = 20\nn_blocks = 2000\n"},
        {"fig4", "experiment = rho_sweep_split\nn_geometries = 20\n"},
        {"fig5", "experiment = rho_sweep_control\nn_geometries = 20\n"},
        {"fig6", "experiment = ap_sweep\nn_geometries = 50\n"},
        {"fig7", "experiment = rician_sweep\nn_geometries = 50\n"},
        {"fig8", "experiment = train_diffusion\n"},
        {"fig9", "experiment = eval_dynamic\n"},
    };
    const auto it = figures.find(figure_id);
    if (it == figures.end()) throw std::invalid_argument("reproduce: unknown figure id '" + figure_id + "' (fig2..fig9)");
    return parse_config_text(it->second, figure_id);
}

// ---------------------------------------------------------------- runners

namespace {

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> r) { rows.push_back(std::move(r)); }
};

std::string num(double v)
{
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

struct MeanErr {
    double mean = 0.0;
    double stderr_ = 0.0;
};

MeanErr mean_err(const std::vector<double>& xs)
{
    MeanErr m;
    const double n = static_cast<double>(xs.size());
    for (double x : xs) m.mean += x / n;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - m.mean) * (x - m.mean);
        m.stderr_ = std::sqrt(ss / (n - 1.0) / n);
    }
    return m;
}

std::vector<double> or_default(const std::vector<double>& g, std::vector<double> def) { return g.empty() ? def : g; }

McSettings mc_for(const ExperimentSpec& spec, const Scenario& s, std::size_t index)
{
    return mc_settings(s.cfg, spec.n_blocks, derive_seed(spec.seed, Stream::channel, {index}));
}

Table run_cdf(const ExperimentSpec& spec)
{
    const auto grid = or_default(spec.grid, rho_grid());
    const int G = spec.n_geometries;
    std::vector<std::array<double, 4>> res(G);
    parallel_for(G, [&](std::size_t g) {
        const Scenario s = make_scenario(spec.system, spec.seed, g);
        const ClosedFormEvaluator ev(s.stats, s.est, s.pilots, s.cfg);
        const int K = s.cfg.num_ues, L = s.cfg.num_aps;
        const GridSweep eq = sweep_equal(ev, grid);
        const PowerAllocation no_rs = PowerAllocation::equal(K, L, 0.0);
        const PowerAllocation rs = PowerAllocation::equal(K, L, grid[eq.best]);
        const auto mc = achievable_sum_se(s.stats, s.est, s.pilots, {no_rs, rs}, mc_for(spec, s, g));
        res[g] = {ev.sum_se(no_rs), mc[0].sum_se, eq.best_value(), mc[1].sum_se};
    });
    Table t{{"geometry_id", "variant", "sum_se"}, {}};
    const char* names[] = {"no_rs_uatf", "no_rs_achievable", "rs_uatf", "rs_achievable"};
    for (int g = 0; g < G; ++g)
        for (int v = 0; v < 4; ++v) t.add({std::to_string(g), names[v], num(res[g][v])});
    return t;
}

Table run_power_sweep(const ExperimentSpec& spec)
{
    const auto powers = or_default(spec.grid, {23, 28, 33, 38, 43});
    const auto rgrid = rho_grid_extended();
    const int G = spec.n_geometries;
    const std::size_t P = powers.size();
    // [geometry][power][csi][variant][bound]
    std::vector<double> res(std::size_t(G) * P * 8);
    auto at = [&](std::size_t g, std::size_t p, int csi, int variant, int bound) -> double& {
        return res[(((g * P + p) * 2 + csi) * 2 + variant) * 2 + bound];
    };
    parallel_for(G, [&](std::size_t g) {
        const Scenario base = make_scenario(spec.system, spec.seed, g);
        for (int csi = 0; csi < 2; ++csi) {
            for (std::size_t p = 0; p < P; ++p) {
                SystemConfig cfg = base.cfg;
                cfg.downlink_dbm = powers[p];
                const Scenario s = rebuild_scenario(base, cfg, csi == 1);
                const ClosedFormEvaluator ev(s.stats, s.est, s.pilots, s.cfg);
                const int K = cfg.num_ues, L = cfg.num_aps;
                // RS: best split of the grid, chosen separately for each bound
                std::vector<PowerAllocation> allocs{PowerAllocation::equal(K, L, 0.0)};
                for (double r : rgrid) allocs.push_back(PowerAllocation::equal(K, L, r));
                const auto mc = achievable_sum_se(s.stats, s.est, s.pilots, allocs, mc_for(spec, s, g));
                double best_mc = 0.0;
                for (std::size_t a = 1; a < allocs.size(); ++a) best_mc = std::max(best_mc, mc[a].sum_se);
                at(g, p, csi, 0, 0) = ev.sum_se(allocs[0]);
                at(g, p, csi, 0, 1) = mc[0].sum_se;
                at(g, p, csi, 1, 0) = sweep_equal(ev, rgrid).best_value();
                at(g, p, csi, 1, 1) = best_mc;
            }
        }
    });
    Table t{{"p_dl_dbm", "csi", "variant", "bound", "sum_se", "stderr"}, {}};
    const char* csi_names[] = {"imperfect", "perfect"};
    const char* variant_names[] = {"no_rs", "rs"};
    const char* bound_names[] = {"uatf", "achievable"};
    for (std::size_t p = 0; p < P; ++p)
        for (int csi = 0; csi < 2; ++csi)
            for (int v = 0; v < 2; ++v)
                for (int b = 0; b < 2; ++b) {
                    std::vector<double> xs;
                    for (int g = 0; g < G; ++g) xs.push_back(at(g, p, csi, v, b));
                    const MeanErr m = mean_err(xs);
                    t.add({num(powers[p]), csi_names[csi], variant_names[v], bound_names[b], num(m.mean), num(m.stderr_)});
                }
    return t;
}

// Shared by the split and control sweeps: three methods along the rho grid
// for Rician and Rayleigh channels.
Table run_rho_sweep(const ExperimentSpec& spec, bool control)
{
    const auto grid = or_default(spec.grid, rho_grid());
    const int G = spec.n_geometries;
    const std::size_t R = grid.size();
    std::vector<double> res(std::size_t(G) * 2 * R * 3);
    auto at = [&](std::size_t g, int ch, std::size_t r, int m) -> double& { return res[((g * 2 + ch) * R + r) * 3 + m]; };
    parallel_for(G, [&](std::size_t g) {
        const Scenario base = make_scenario(spec.system, spec.seed, g);
        for (int ch = 0; ch < 2; ++ch) {
            SystemConfig cfg = base.cfg;
            if (ch == 1) cfg.rician_db = -std::numeric_limits<double>::infinity();
            const Scenario s = rebuild_scenario(base, cfg);
            const ClosedFormEvaluator ev(s.stats, s.est, s.pilots, s.cfg);
            const Eigen::MatrixXd zeta = s.stats.zeta_matrix();
            const int K = cfg.num_ues, L = cfg.num_aps;
            for (std::size_t r = 0; r < R; ++r) {
                HeuristicParams hp;
                hp.rho0 = grid[r];
                const PowerAllocation equal = PowerAllocation::equal(K, L, grid[r]);
                PowerAllocation heur = equal;
                if (control)
                    heur.eta = heuristic_control(zeta, hp);
                else
                    heur.rho = heuristic_split(zeta, hp);
                GAConfig ga = spec.ga;
                ga.seed = derive_seed(spec.ga.seed, Stream::ga, {g, std::uint64_t(ch), r});
                const AllocationResult best =
                    ga_allocate(ev, control ? AllocVars::eta : AllocVars::rho, equal, ga, {equal, heur});
                at(g, ch, r, 0) = ev.sum_se(equal);
                at(g, ch, r, 1) = ev.sum_se(heur);
                at(g, ch, r, 2) = best.sum_se;
            }
        }
    });
    Table t{{"rho", "channel", "method", "sum_se", "stderr"}, {}};
    const char* ch_names[] = {"rician", "rayleigh"};
    const char* m_names[] = {"equal", "heuristic", "ga"};
    for (int ch = 0; ch < 2; ++ch)
        for (std::size_t r = 0; r < R; ++r)
            for (int m = 0; m < 3; ++m) {
                std::vector<double> xs;
                for (int g = 0; g < G; ++g) xs.push_back(at(g, ch, r, m));
                const MeanErr e = mean_err(xs);
                t.add({num(grid[r]), ch_names[ch], m_names[m], num(e.mean), num(e.stderr_)});
            }
    return t;
}

Table run_ap_sweep(const ExperimentSpec& spec)
{
    std::vector<double> aps = or_default(spec.grid, {10, 20, 30, 40, 50});
    const auto rgrid = rho_grid();
    const int G = spec.n_geometries;
    const std::size_t A = aps.size();
    std::vector<double> res(std::size_t(G) * A * 3);
    parallel_for(std::size_t(G) * A, [&](std::size_t job) {
        const std::size_t g = job / A, a = job % A;
        SystemConfig cfg = spec.system;
        cfg.num_aps = static_cast<int>(aps[a]);
        const Scenario s = make_scenario(cfg, spec.seed, g);
        const ClosedFormEvaluator ev(s.stats, s.est, s.pilots, s.cfg);
        res[job * 3 + 0] = ev.sum_se(PowerAllocation::equal(cfg.num_ues, cfg.num_aps, 0.0));
        res[job * 3 + 1] = sweep_equal(ev, rgrid).best_value();
        res[job * 3 + 2] = sweep_heuristic_joint(ev, s.stats.zeta_matrix(), rgrid).best_value();
    });
    Table t{{"num_aps", "variant", "sum_se", "stderr"}, {}};
    const char* names[] = {"no_rs", "rs", "rs_heuristic"};
    for (std::size_t a = 0; a < A; ++a)
        for (int v = 0; v < 3; ++v) {
            std::vector<double> xs;
            for (int g = 0; g < G; ++g) xs.push_back(res[(std::size_t(g) * A + a) * 3 + v]);
            const MeanErr m = mean_err(xs);
            t.add({num(aps[a]), names[v], num(m.mean), num(m.stderr_)});
        }
    return t;
}

Table run_rician_sweep(const ExperimentSpec& spec)
{
    const auto kappas = or_default(spec.grid, {-10, -5, 0, 5, 10, 15, 20});
    const std::vector<int> ues = spec.ue_counts.empty() ? std::vector<int>{4, 6} : spec.ue_counts;
    const auto rgrid = rho_grid();
    const int G = spec.n_geometries;
    const std::size_t U = ues.size(), Kn = kappas.size();
    std::vector<double> res(U * std::size_t(G) * Kn * 2);
    parallel_for(U * std::size_t(G), [&](std::size_t job) {
        const std::size_t u = job / G, g = job % G;
        SystemConfig cfg = spec.system;
        cfg.num_ues = ues[u];
        if (spec.tau_p_auto) cfg.tau_p = std::max(1, cfg.num_ues / 2);
        const Scenario base = make_scenario(cfg, spec.seed, g);
        for (std::size_t k = 0; k < Kn; ++k) {
            SystemConfig c = base.cfg;
            c.rician_db = kappas[k];
            const Scenario s = rebuild_scenario(base, c);
            const ClosedFormEvaluator ev(s.stats, s.est, s.pilots, s.cfg);
            res[(job * Kn + k) * 2 + 0] = ev.sum_se(PowerAllocation::equal(c.num_ues, c.num_aps, 0.0));
            res[(job * Kn + k) * 2 + 1] = sweep_equal(ev, rgrid).best_value();
        }
    });
    Table t{{"num_ues", "kappa_db", "variant", "sum_se", "stderr"}, {}};
    const char* names[] = {"no_rs", "rs"};
    for (std::size_t u = 0; u < U; ++u)
        for (std::size_t k = 0; k < Kn; ++k)
            for (int v = 0; v < 2; ++v) {
                std::vector<double> xs;
                for (int g = 0; g < G; ++g) xs.push_back(res[((u * G + g) * Kn + k) * 2 + v]);
                const MeanErr m = mean_err(xs);
                t.add({std::to_string(ues[u]), num(kappas[k]), names[v], num(m.mean), num(m.stderr_)});
            }
    return t;
}

struct TrainedModel {
    EpsNetwork net;
    Schedule schedule;
    std::vector<double> loss;
    std::vector<std::pair<int, double>> eval;  // (step, mean diffusion sum SE over eval envs)
};

std::vector<Environment> eval_envs(const ExperimentSpec& spec)
{
    return environment_grid(spec.eval_kappa_db, spec.eval_asd_deg);
}

Eigen::VectorXd generate(const EpsNetwork& net, const Schedule& sch, const Environment& env, std::uint64_t seed,
                         std::size_t index)
{
    Rng rng(seed, Stream::diffusion_sample, {index});
    return reverse_sample(net, env, sch, rng);
}

TrainedModel train_model(const ExperimentSpec& spec, const DynamicProblem& problem, const std::filesystem::path& dir,
                         const std::vector<PowerAllocation>& anchor)
{
    const auto grid = rho_grid();
    const auto envs = environment_grid(spec.expert_kappa_db, spec.expert_asd_deg);
    const ExpertDataset data = build_expert_dataset(envs, [&](const Environment& e) {
        return problem.expert(e, spec.expert_ga, grid, anchor);
    });
    data.write_csv((dir / (to_string(spec.id) + "_expert.csv")).string());

    const auto held_out = eval_envs(spec);
    std::vector<ClosedFormEvaluator> evs;
    for (const auto& e : held_out) evs.push_back(problem.evaluator(e));
    const int K = spec.system.num_ues, L = spec.system.num_aps;

    TrainedModel m;
    TrainHook hook;
    hook.every = std::max(1, spec.train.steps / 20);
    hook.fn = [&](int step, const EpsNetwork& net, const Schedule& sch) {
        double total = 0.0;
        for (std::size_t i = 0; i < held_out.size(); ++i) {
            const Eigen::VectorXd x = generate(net, sch, held_out[i], spec.seed, i);
            total += evs[i].sum_se(PowerAllocation::from_vector(x, K, L));
        }
        m.eval.push_back({step, total / held_out.size()});
    };
    TrainResult r = train(data, spec.train, hook);
    m.net = std::move(r.net);
    m.schedule = std::move(r.schedule);
    m.loss = std::move(r.loss);
    save_checkpoint((dir / (to_string(spec.id) + "_model.json")).string(), m.net, m.schedule);
    return m;
}

Table run_train_diffusion(const ExperimentSpec& spec, const std::filesystem::path& dir)
{
    const DynamicProblem problem(spec.system, spec.seed);
    const TrainedModel m = train_model(spec, problem, dir, expert_anchor(spec, problem));
    Table t{{"step", "loss", "eval_sum_se"}, {}};
    std::map<int, double> eval(m.eval.begin(), m.eval.end());
    for (std::size_t s = 0; s < m.loss.size(); ++s) {
        const int step = static_cast<int>(s) + 1;
        const auto it = eval.find(step);
        t.add({std::to_string(step), num(m.loss[s]), it == eval.end() ? "" : num(it->second)});
    }
    return t;
}

Table run_eval_dynamic(const ExperimentSpec& spec, const std::filesystem::path& dir)
{
    const DynamicProblem problem(spec.system, spec.seed);
    const auto anchor = expert_anchor(spec, problem);
    EpsNetwork net;
    Schedule sch;
    if (!spec.checkpoint.empty()) {
        load_checkpoint(spec.checkpoint, net, sch);
        if (net.dim() != problem.dim()) throw std::invalid_argument("checkpoint: dimension does not match the system");
    } else {
        TrainedModel m = train_model(spec, problem, dir, anchor);
        net = std::move(m.net);
        sch = std::move(m.schedule);
    }
    const auto envs = eval_envs(spec);
    const auto grid = rho_grid();
    const int K = spec.system.num_ues, L = spec.system.num_aps;
    std::vector<std::array<double, 4>> res(envs.size());
    parallel_for(envs.size(), [&](std::size_t i) {
        const ClosedFormEvaluator ev = problem.evaluator(envs[i]);
        GAConfig ga = spec.expert_ga;
        ga.seed = derive_seed(spec.expert_ga.seed, Stream::ga, {i});
        res[i] = {ev.sum_se(PowerAllocation::equal(K, L, 0.0)), ev.sum_se(problem.heuristic(ev, grid)),
                  ev.sum_se(PowerAllocation::from_vector(generate(net, sch, envs[i], spec.seed, i), K, L)),
                  problem.expert(envs[i], ga, grid, anchor).sum_se};
    });
    Table t{{"kappa_db", "asd_deg", "method", "sum_se"}, {}};
    const char* names[] = {"no_rs", "heuristic", "diffusion", "expert"};
    for (std::size_t i = 0; i < envs.size(); ++i)
        for (int m = 0; m < 4; ++m) t.add({num(envs[i].kappa_db), num(envs[i].asd_deg), names[m], num(res[i][m])});
    return t;
}

}  // namespace

ExperimentOutput run_experiment(const ExperimentSpec& spec)
{
    spec.validate();
    namespace fs = std::filesystem;
    const fs::path dir(spec.output);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw std::runtime_error("output: cannot create directory " + spec.output);

    Table t;
    switch (spec.id) {
    case ExperimentId::cdf: t = run_cdf(spec); break;
    case ExperimentId::power_sweep: t = run_power_sweep(spec); break;
    case ExperimentId::rho_sweep_split: t = run_rho_sweep(spec, false); break;
    case ExperimentId::rho_sweep_control: t = run_rho_sweep(spec, true); break;
    case ExperimentId::ap_sweep: t = run_ap_sweep(spec); break;
    case ExperimentId::rician_sweep: t = run_rician_sweep(spec); break;
    case ExperimentId::train_diffusion: t = run_train_diffusion(spec, dir); break;
    case ExperimentId::eval_dynamic: t = run_eval_dynamic(spec, dir); break;
    }

    ExperimentOutput out;
    out.csv_path = (dir / (to_string(spec.id) + ".csv")).string();
    out.sidecar_path = (dir / (to_string(spec.id) + ".json")).string();
    out.rows = t.rows.size();
    {
        std::ofstream csv(out.csv_path);
        if (!csv) throw std::runtime_error("cannot write " + out.csv_path);
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) csv << (i ? "," : "") << cells[i];
            csv << '\n';
        };
        line(t.columns);
        for (const auto& r : t.rows) line(r);
    }
    nlohmann::json side;
    side["experiment"] = to_string(spec.id);
    side["seed"] = spec.seed;
    side["csv"] = fs::path(out.csv_path).filename().string();
    side["columns"] = t.columns;
    side["rows"] = out.rows;
    nlohmann::json cfg = nlohmann::json::object();
    std::stringstream ss(serialize(spec));
    std::string l;
    while (std::getline(ss, l)) {
        const auto eq = l.find(" = ");
        cfg[l.substr(0, eq)] = l.substr(eq + 3);
    }
    cfg["tau_p_resolved"] = spec.system.tau_p;
    side["config"] = cfg;
    std::ofstream js(out.sidecar_path);
    if (!js) throw std::runtime_error("cannot write " + out.sidecar_path);
    js << side.dump(2) << '\n';
    return out;
}

}  // namespace rscf

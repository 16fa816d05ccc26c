// SPDX-License-Identifier: Apache-2.0

#include "rscf/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rscf/parallel.hpp"

namespace rscf {

namespace {

constexpr const char* kCheckpointFormat = "rscf-eps-network";
constexpr int kCheckpointVersion = 1;

Eigen::MatrixXd silu(const Eigen::MatrixXd& z) { return z.array() / (1.0 + (-z.array()).exp()); }

Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& z)
{
    const Eigen::ArrayXXd s = 1.0 / (1.0 + (-z.array()).exp());
    return (s * (1.0 + z.array() * (1.0 - s))).matrix();
}

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

Schedule schedule_from_variances(const Eigen::VectorXd& v)
{
    if (v.size() < 1) throw std::invalid_argument("schedule: T must be >= 1");
    for (Eigen::Index t = 0; t < v.size(); ++t)
        if (!(v(t) >= 0.0 && v(t) < 1.0)) throw std::invalid_argument("schedule: every v_t must lie in [0, 1)");
    Schedule s;
    s.T = static_cast<int>(v.size());
    s.v = v;
    s.v_min = v.minCoeff();
    s.v_max = v.maxCoeff();
    s.alpha = 1.0 - v.array();
    s.alpha_bar.resize(s.T);
    double prod = 1.0;
    for (int t = 0; t < s.T; ++t) s.alpha_bar(t) = prod *= s.alpha(t);
    return s;
}

Schedule make_schedule(int T, double v_min, double v_max)
{
    if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
    if (!(v_min >= 0.0 && v_min <= v_max && v_max < 1.0))
        throw std::invalid_argument("make_schedule: need 0 <= v_min <= v_max < 1");
    Eigen::VectorXd v(T);
    for (int t = 0; t < T; ++t) v(t) = T == 1 ? v_min : v_min + double(t) / (T - 1) * (v_max - v_min);
    Schedule s = schedule_from_variances(v);
    s.v_min = v_min;
    s.v_max = v_max;
    return s;
}

Eigen::VectorXd forward_diffuse(const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& eps, const Schedule& s)
{
    if (t < 1 || t > s.T) throw std::invalid_argument("forward_diffuse: t outside 1..T");
    if (x0.size() != eps.size()) throw std::invalid_argument("forward_diffuse: dimension mismatch");
    const double ab = s.alpha_bar(t - 1);
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

bool Environment::in_training_range() const
{
    return kappa_db >= kappa_lo && kappa_db <= kappa_hi && asd_deg >= asd_lo && asd_deg <= asd_hi;
}

Eigen::Vector2d Environment::features() const
{
    return {2.0 * (kappa_db - kappa_lo) / (kappa_hi - kappa_lo) - 1.0, (asd_deg - asd_lo) / (asd_hi - asd_lo)};
}

EpsNetwork::EpsNetwork(int dim, int hidden, int embed, std::uint64_t seed) : dim_(dim), hidden_(hidden), embed_(embed)
{
    if (dim < 1 || hidden < 1 || embed < 0 || embed % 2 != 0)
        throw std::invalid_argument("EpsNetwork: dim, hidden >= 1 and an even embedding width required");
    const Layout lay = layout();
    params_ = Eigen::VectorXd::Zero(lay.total);
    Rng rng(seed, Stream::diffusion_init);
    auto fill = [&](std::ptrdiff_t off, std::ptrdiff_t n, int fan_in) {
        const double sd = 1.0 / std::sqrt(double(fan_in));
        for (std::ptrdiff_t i = 0; i < n; ++i) params_(off + i) = sd * rng.normal();
    };
    fill(lay.w1, lay.b1 - lay.w1, input_dim());
    fill(lay.w2, lay.b2 - lay.w2, hidden_);
    fill(lay.w3, lay.b3 - lay.w3, hidden_);
}

void EpsNetwork::attach(const Schedule& s)
{
    if (s.T > 0 && (s.alpha_bar.array() >= 1.0).any())
        throw std::invalid_argument("EpsNetwork: attached schedule needs abar_t < 1 at every step");
    alpha_bar_ = s.T > 0 ? s.alpha_bar : Eigen::VectorXd();
}

void EpsNetwork::output_map(const std::vector<int>& t, Eigen::VectorXd& a, Eigen::VectorXd& c) const
{
    const Eigen::Index B = static_cast<Eigen::Index>(t.size());
    a.setZero(B);
    c.setOnes(B);
    if (!attached()) return;
    for (Eigen::Index b = 0; b < B; ++b) {
        if (t[b] < 1 || t[b] > alpha_bar_.size()) throw std::invalid_argument("EpsNetwork: t outside the attached schedule");
        const double ab = alpha_bar_(t[b] - 1);
        a(b) = 1.0 / std::sqrt(1.0 - ab);
        c(b) = -std::sqrt(ab) * a(b);
    }
}

EpsNetwork::Layout EpsNetwork::layout() const
{
    Layout l;
    const std::ptrdiff_t H = hidden_, D = dim_, I = input_dim();
    l.w1 = 0;
    l.b1 = l.w1 + H * I;
    l.w2 = l.b1 + H;
    l.b2 = l.w2 + H * H;
    l.w3 = l.b2 + H;
    l.b3 = l.w3 + D * H;
    l.total = l.b3 + D;
    return l;
}

Eigen::VectorXd EpsNetwork::time_embedding(int t) const
{
    Eigen::VectorXd e(embed_);
    const int half = embed_ / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -double(i) / half);
        e(i) = std::sin(t * freq);
        e(half + i) = std::cos(t * freq);
    }
    return e;
}

Eigen::MatrixXd EpsNetwork::inputs(const Eigen::MatrixXd& x_t, const std::vector<int>& t,
                                   const Eigen::MatrixXd& env) const
{
    const Eigen::Index B = x_t.cols();
    if (x_t.rows() != dim_ || env.rows() != 2 || env.cols() != B || static_cast<Eigen::Index>(t.size()) != B)
        throw std::invalid_argument("EpsNetwork: batch shape mismatch");
    Eigen::MatrixXd in(input_dim(), B);
    in.topRows(dim_) = x_t;
    for (Eigen::Index b = 0; b < B; ++b) in.col(b).segment(dim_, embed_) = time_embedding(t[b]);
    in.bottomRows(2) = env;
    return in;
}

Eigen::MatrixXd EpsNetwork::predict(const Eigen::MatrixXd& x_t, const std::vector<int>& t,
                                    const Eigen::MatrixXd& env) const
{
    const Layout lay = layout();
    const int H = hidden_;
    Eigen::Map<const Eigen::MatrixXd> W1(params_.data() + lay.w1, H, input_dim());
    Eigen::Map<const Eigen::VectorXd> b1(params_.data() + lay.b1, H);
    Eigen::Map<const Eigen::MatrixXd> W2(params_.data() + lay.w2, H, H);
    Eigen::Map<const Eigen::VectorXd> b2(params_.data() + lay.b2, H);
    Eigen::Map<const Eigen::MatrixXd> W3(params_.data() + lay.w3, dim_, H);
    Eigen::Map<const Eigen::VectorXd> b3(params_.data() + lay.b3, dim_);

    const Eigen::MatrixXd a1 = silu((W1 * inputs(x_t, t, env)).colwise() + b1);
    const Eigen::MatrixXd a2 = silu((W2 * a1).colwise() + b2);
    Eigen::VectorXd a, c;
    output_map(t, a, c);
    return x_t * a.asDiagonal() + ((W3 * a2).colwise() + b3) * c.asDiagonal();
}

Eigen::VectorXd EpsNetwork::predict(const Eigen::VectorXd& x_t, int t, const Environment& env) const
{
    Eigen::MatrixXd e = env.features();
    return predict(Eigen::MatrixXd(x_t), std::vector<int>{t}, e).col(0);
}

double EpsNetwork::loss(const Eigen::MatrixXd& x_t, const std::vector<int>& t, const Eigen::MatrixXd& env,
                        const Eigen::MatrixXd& eps, Eigen::VectorXd* grad) const
{
    const Layout lay = layout();
    const int H = hidden_;
    const int I = input_dim();
    Eigen::Map<const Eigen::MatrixXd> W1(params_.data() + lay.w1, H, I);
    Eigen::Map<const Eigen::VectorXd> b1(params_.data() + lay.b1, H);
    Eigen::Map<const Eigen::MatrixXd> W2(params_.data() + lay.w2, H, H);
    Eigen::Map<const Eigen::VectorXd> b2(params_.data() + lay.b2, H);
    Eigen::Map<const Eigen::MatrixXd> W3(params_.data() + lay.w3, dim_, H);
    Eigen::Map<const Eigen::VectorXd> b3(params_.data() + lay.b3, dim_);

    const Eigen::MatrixXd in = inputs(x_t, t, env);
    if (eps.rows() != dim_ || eps.cols() != in.cols()) throw std::invalid_argument("EpsNetwork::loss: target shape mismatch");
    const Eigen::MatrixXd z1 = (W1 * in).colwise() + b1;
    const Eigen::MatrixXd a1 = silu(z1);
    const Eigen::MatrixXd z2 = (W2 * a1).colwise() + b2;
    const Eigen::MatrixXd a2 = silu(z2);
    Eigen::VectorXd a, c;
    output_map(t, a, c);
    const Eigen::MatrixXd diff = x_t * a.asDiagonal() + ((W3 * a2).colwise() + b3) * c.asDiagonal() - eps;
    const double scale = 1.0 / double(diff.size());
    const double value = diff.squaredNorm() * scale;
    if (!grad) return value;

    grad->resize(lay.total);
    const Eigen::MatrixXd d_out = 2.0 * scale * diff * c.asDiagonal();
    Eigen::Map<Eigen::MatrixXd>(grad->data() + lay.w3, dim_, H) = d_out * a2.transpose();
    Eigen::Map<Eigen::VectorXd>(grad->data() + lay.b3, dim_) = d_out.rowwise().sum();
    const Eigen::MatrixXd d_z2 = (W3.transpose() * d_out).cwiseProduct(silu_grad(z2));
    Eigen::Map<Eigen::MatrixXd>(grad->data() + lay.w2, H, H) = d_z2 * a1.transpose();
    Eigen::Map<Eigen::VectorXd>(grad->data() + lay.b2, H) = d_z2.rowwise().sum();
    const Eigen::MatrixXd d_z1 = (W2.transpose() * d_z2).cwiseProduct(silu_grad(z1));
    Eigen::Map<Eigen::MatrixXd>(grad->data() + lay.w1, H, I) = d_z1 * in.transpose();
    Eigen::Map<Eigen::VectorXd>(grad->data() + lay.b1, H) = d_z1.rowwise().sum();
    return value;
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n))
{
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad)
{
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, double(t_));
    const double c2 = 1.0 - std::pow(beta2_, double(t_));
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

void ExpertDataset::write_csv(const std::string& path) const
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "env_kappa_db,env_asd_deg";
    for (int d = 0; d < dim; ++d) out << ",x0_" << d;
    out << ",sum_se\n";
    out << std::setprecision(17);
    for (const auto& r : records) {
        out << r.env.kappa_db << ',' << r.env.asd_deg;
        for (int d = 0; d < dim; ++d) out << ',' << r.x0(d);
        out << ',' << r.sum_se << '\n';
    }
}

ExpertDataset ExpertDataset::read_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header");
    const auto columns = std::count(line.begin(), line.end(), ',') + 1;
    if (columns < 4 || line.rfind("env_kappa_db,env_asd_deg,", 0) != 0)
        throw std::runtime_error(path + ": unexpected header");
    ExpertDataset ds;
    ds.dim = static_cast<int>(columns - 3);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                vals.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
            }
        }
        if (static_cast<long>(vals.size()) != columns)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": wrong column count");
        ExpertRecord r;
        r.env = {vals[0], vals[1]};
        r.x0 = Eigen::Map<Eigen::VectorXd>(vals.data() + 2, ds.dim);
        r.sum_se = vals.back();
        ds.records.push_back(std::move(r));
    }
    return ds;
}

void ExpertDataset::verify(const std::function<double(const Environment&, const Eigen::VectorXd&)>& objective,
                           double tol) const
{
    for (std::size_t n = 0; n < records.size(); ++n) {
        const auto& r = records[n];
        if (r.x0.size() != dim || r.x0.minCoeff() < 0.0 || r.x0.maxCoeff() > 1.0)
            throw std::runtime_error("expert record " + std::to_string(n) + ": solution outside [0, 1]");
        const double v = objective(r.env, r.x0);
        if (std::abs(v - r.sum_se) > tol * std::max(1.0, std::abs(v)))
            throw std::runtime_error("expert record " + std::to_string(n) + ": stored sum SE does not match objective");
    }
}

ExpertDataset build_expert_dataset(const std::vector<Environment>& grid, const ExpertSolver& solver)
{
    ExpertDataset ds;
    ds.records.resize(grid.size());
    parallel_for(grid.size(), [&](std::size_t n) { ds.records[n] = solver(grid[n]); });
    ds.dim = ds.records.empty() ? 0 : static_cast<int>(ds.records.front().x0.size());
    return ds;
}

std::vector<Environment> environment_grid(const std::vector<double>& kappa_db, const std::vector<double>& asd_deg)
{
    std::vector<Environment> out;
    for (double k : kappa_db)
        for (double a : asd_deg) out.push_back({k, a});
    return out;
}

TrainResult train(const ExpertDataset& data, const TrainConfig& cfg, const TrainHook& hook)
{
    if (data.records.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.steps < 0 || cfg.batch < 1) throw std::invalid_argument("train: steps >= 0 and batch >= 1 required");
    const int D = data.dim;
    TrainResult out{EpsNetwork(D, cfg.hidden, cfg.embed, cfg.seed), make_schedule(cfg.T, cfg.v_min, cfg.v_max), {}};
    out.net.attach(out.schedule);
    out.loss.reserve(cfg.steps);
    Adam adam(out.net.num_params(), cfg.lr);
    Rng rng(cfg.seed, Stream::diffusion_train);

    Eigen::MatrixXd x_t(D, cfg.batch), eps(D, cfg.batch), env(2, cfg.batch);
    std::vector<int> t(cfg.batch);
    Eigen::VectorXd grad;
    for (int step = 0; step < cfg.steps; ++step) {
        for (int b = 0; b < cfg.batch; ++b) {
            const ExpertRecord& r = data.records[rng.index(data.records.size())];
            Eigen::VectorXd x0 = r.x0;
            for (int d = 0; d < D; ++d) x0(d) += cfg.exploration * rng.normal();
            x0 = x0.cwiseMax(0.0).cwiseMin(1.0);
            t[b] = 1 + static_cast<int>(rng.index(cfg.T));
            for (int d = 0; d < D; ++d) eps(d, b) = rng.normal();
            x_t.col(b) = forward_diffuse(x0, t[b], eps.col(b), out.schedule);
            env.col(b) = r.env.features();
        }
        const double l = out.net.loss(x_t, t, env, eps, &grad);
        if (!std::isfinite(l) || !grad.allFinite())
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
        adam.step(out.net.params(), grad);
        out.loss.push_back(l);
        if (hook.fn && hook.every > 0 && ((step + 1) % hook.every == 0 || step + 1 == cfg.steps))
            hook.fn(step + 1, out.net, out.schedule);
    }
    return out;
}

Eigen::VectorXd reverse_chain(const NoisePredictor& predictor, int dim, const Schedule& s, Rng& rng, bool clamp,
                              const Eigen::VectorXd* x_T)
{
    Eigen::VectorXd x(dim);
    if (x_T) {
        x = *x_T;
    } else {
        for (int d = 0; d < dim; ++d) x(d) = rng.normal();
    }
    for (int t = s.T; t >= 1; --t) {
        const double a = s.alpha(t - 1);
        const double v = s.v(t - 1);
        const double ab = s.alpha_bar(t - 1);
        const Eigen::VectorXd e = predictor(x, t);
        if (!all_finite(e)) throw std::runtime_error("reverse_sample: non-finite network output at t=" + std::to_string(t));
        x = x / std::sqrt(a) - (v / std::sqrt(a * (1.0 - ab))) * e;
        if (t > 1)
            for (int d = 0; d < dim; ++d) x(d) += std::sqrt(v) * rng.normal();
    }
    if (!all_finite(x)) throw std::runtime_error("reverse_sample: non-finite sample");
    return clamp ? Eigen::VectorXd(x.cwiseMax(0.0).cwiseMin(1.0)) : x;
}

Eigen::VectorXd reverse_sample(const EpsNetwork& net, const Environment& env, const Schedule& s, Rng& rng)
{
    return reverse_chain([&](const Eigen::VectorXd& x, int t) { return net.predict(x, t, env); }, net.dim(), s, rng);
}

void save_checkpoint(const std::string& path, const EpsNetwork& net, const Schedule& s)
{
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["dim"] = net.dim();
    j["hidden"] = net.hidden();
    j["embed"] = net.embed();
    j["schedule"] = {{"T", s.T}, {"v", std::vector<double>(s.v.data(), s.v.data() + s.v.size())}};
    j["env_ranges"] = {{"kappa_db", {Environment::kappa_lo, Environment::kappa_hi}},
                       {"asd_deg", {Environment::asd_lo, Environment::asd_hi}}};
    j["output"] = net.attached() ? "clean_sample" : "noise";
    j["params"] = std::vector<double>(net.params().data(), net.params().data() + net.params().size());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump() << '\n';
}

void load_checkpoint(const std::string& path, EpsNetwork& net, Schedule& s)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    EpsNetwork n;
    try {
        if (j.value("format", "") != kCheckpointFormat || j.value("version", 0) != kCheckpointVersion)
            throw std::runtime_error(path + ": not a version-1 network checkpoint");
        const auto ranges = j.at("env_ranges");
        if (ranges.at("kappa_db") != nlohmann::json{Environment::kappa_lo, Environment::kappa_hi} ||
            ranges.at("asd_deg") != nlohmann::json{Environment::asd_lo, Environment::asd_hi})
            throw std::runtime_error(path + ": environment normalization differs from this build");
        n = EpsNetwork(j.at("dim").get<int>(), j.at("hidden").get<int>(), j.at("embed").get<int>(), 0);
        const auto p = j.at("params").get<std::vector<double>>();
        if (p.size() != n.num_params()) throw std::runtime_error(path + ": parameter count mismatch");
        n.params() = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
        const auto v = j.at("schedule").at("v").get<std::vector<double>>();
        s = schedule_from_variances(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
        const std::string output = j.value("output", "noise");
        if (output == "clean_sample") n.attach(s);
        else if (output != "noise") throw std::runtime_error(path + ": unknown output mode '" + output + "'");
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    net = std::move(n);
}

}  // namespace rscf

// SPDX-License-Identifier: Apache-2.0

#ifndef RSCF_DIFFUSION_HPP
#define RSCF_DIFFUSION_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rscf/rng.hpp"

namespace rscf {

// Variance schedule; arrays are indexed by t - 1 for t = 1..T.
struct Schedule {
    int T = 0;
    double v_min = 0.0;
    double v_max = 0.0;
    Eigen::VectorXd v;
    Eigen::VectorXd alpha;
    Eigen::VectorXd alpha_bar;

    double alpha_bar_at(int t) const { return t == 0 ? 1.0 : alpha_bar(t - 1); }
};

// Linear v_t from v_min to v_max (constant when T = 1). v_min = v_max = 0 is
// accepted as a degenerate test schedule.
Schedule make_schedule(int T, double v_min, double v_max);
// Schedule from an explicit variance sequence, each entry in [0, 1).
Schedule schedule_from_variances(const Eigen::VectorXd& v);

// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Eigen::VectorXd forward_diffuse(const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& eps, const Schedule& s);

struct Environment {
    double kappa_db = 5.0;
    double asd_deg = 15.0;

    static constexpr double kappa_lo = -10.0, kappa_hi = 20.0;
    static constexpr double asd_lo = 5.0, asd_hi = 90.0;

    bool in_training_range() const;
    // Kappa mapped to [-1, 1], ASD to [0, 1].
    Eigen::Vector2d features() const;
};

// Noise predictor eps_theta(x_t, t, env): MLP with two SiLU hidden layers.
// Input is [x_t, sinusoidal embedding of t, env features]. With a schedule
// attached the MLP output f is read as a clean-sample estimate and mapped to
// eps = (x_t - sqrt(abar_t) f) / sqrt(1 - abar_t); otherwise eps = f.
class EpsNetwork {
public:
    EpsNetwork() = default;
    EpsNetwork(int dim, int hidden, int embed, std::uint64_t seed);

    // Pass an empty schedule (T = 0) to detach.
    void attach(const Schedule& s);
    bool attached() const { return alpha_bar_.size() > 0; }

    int dim() const { return dim_; }
    int hidden() const { return hidden_; }
    int embed() const { return embed_; }
    int input_dim() const { return dim_ + embed_ + 2; }
    std::size_t num_params() const { return static_cast<std::size_t>(params_.size()); }

    Eigen::VectorXd& params() { return params_; }
    const Eigen::VectorXd& params() const { return params_; }

    Eigen::VectorXd time_embedding(int t) const;

    // Columns of x_t and env are batch members.
    Eigen::MatrixXd predict(const Eigen::MatrixXd& x_t, const std::vector<int>& t, const Eigen::MatrixXd& env) const;
    Eigen::VectorXd predict(const Eigen::VectorXd& x_t, int t, const Environment& env) const;

    // Mean squared error over batch and dimensions against eps; fills the
    // gradient with respect to params() when grad is non-null.
    double loss(const Eigen::MatrixXd& x_t, const std::vector<int>& t, const Eigen::MatrixXd& env,
                const Eigen::MatrixXd& eps, Eigen::VectorXd* grad = nullptr) const;

private:
    struct Layout {
        std::ptrdiff_t w1, b1, w2, b2, w3, b3, total;
    };
    Layout layout() const;
    Eigen::MatrixXd inputs(const Eigen::MatrixXd& x_t, const std::vector<int>& t, const Eigen::MatrixXd& env) const;

    // Output map eps = a(t) x_t + c(t) f per batch column.
    void output_map(const std::vector<int>& t, Eigen::VectorXd& a, Eigen::VectorXd& c) const;

    int dim_ = 0;
    int hidden_ = 0;
    int embed_ = 0;
    Eigen::VectorXd params_;
    Eigen::VectorXd alpha_bar_;
};

class Adam {
public:
    Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    Eigen::VectorXd m_, v_;
};

struct ExpertRecord {
    Environment env;
    Eigen::VectorXd x0;
    double sum_se = 0.0;
};

struct ExpertDataset {
    int dim = 0;
    std::vector<ExpertRecord> records;

    // Columns: env_kappa_db, env_asd_deg, x0_0 .. x0_{dim-1}, sum_se.
    void write_csv(const std::string& path) const;
    static ExpertDataset read_csv(const std::string& path);
    // Throws std::runtime_error when a stored x0 leaves [0, 1] or the stored
    // sum SE differs from objective(env, x0) by more than tol (relative).
    void verify(const std::function<double(const Environment&, const Eigen::VectorXd&)>& objective,
                double tol = 1e-10) const;
};

using ExpertSolver = std::function<ExpertRecord(const Environment&)>;

// One solver call per environment, run across the worker pool; records are
// kept in grid order.
ExpertDataset build_expert_dataset(const std::vector<Environment>& grid, const ExpertSolver& solver);

// Cartesian grid kappa x asd.
std::vector<Environment> environment_grid(const std::vector<double>& kappa_db, const std::vector<double>& asd_deg);

struct TrainConfig {
    int steps = 20000;
    int batch = 64;
    double lr = 1e-4;
    double exploration = 0.01;
    int hidden = 128;
    int embed = 16;
    int T = 10;
    double v_min = 0.1;  // constant schedule, abar_T = 0.9^10
    double v_max = 0.1;
    std::uint64_t seed = 1;
};

struct TrainResult {
    EpsNetwork net;
    Schedule schedule;
    std::vector<double> loss;  // per step
};

// Called every `every` steps (and after the last one) with the current model.
struct TrainHook {
    int every = 0;
    std::function<void(int step, const EpsNetwork& net, const Schedule& s)> fn;
};

// Minimizes E||eps - eps_theta(sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, t, e)||^2
// with Adam. Throws std::invalid_argument on an empty dataset and
// std::runtime_error on a non-finite loss.
TrainResult train(const ExpertDataset& data, const TrainConfig& cfg, const TrainHook& hook = {});

// Reverse chain from x_T ~ N(0, I) with z = 0 at the final step; output
// clamped to [0, 1]. Throws std::runtime_error on non-finite values.
Eigen::VectorXd reverse_sample(const EpsNetwork& net, const Environment& env, const Schedule& s, Rng& rng);

// Same chain with a caller-supplied noise predictor.
using NoisePredictor = std::function<Eigen::VectorXd(const Eigen::VectorXd& x_t, int t)>;
Eigen::VectorXd reverse_chain(const NoisePredictor& predictor, int dim, const Schedule& s, Rng& rng,
                              bool clamp = true, const Eigen::VectorXd* x_T = nullptr);

// Text checkpoint (JSON) with a format header, dimensions, schedule and
// environment normalization ranges.
void save_checkpoint(const std::string& path, const EpsNetwork& net, const Schedule& s);
void load_checkpoint(const std::string& path, EpsNetwork& net, Schedule& s);

}  // namespace rscf

#endif

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rscf/diffusion.hpp"

using namespace rscf;

namespace {

double max_rel_grad_error(const EpsNetwork& base, int batch, std::uint64_t seed)
{
    EpsNetwork net = base;
    Rng rng(seed);
    const int D = net.dim();
    Eigen::MatrixXd x(D, batch), eps(D, batch), env(2, batch);
    std::vector<int> t(batch);
    for (int b = 0; b < batch; ++b) {
        for (int d = 0; d < D; ++d) {
            x(d, b) = rng.normal();
            eps(d, b) = rng.normal();
        }
        env.col(b) = Environment{rng.uniform(-10, 20), rng.uniform(5, 90)}.features();
        t[b] = 1 + int(rng.index(10));
    }
    Eigen::VectorXd grad;
    net.loss(x, t, env, eps, &grad);
    const double h = 1e-5;
    double worst = 0.0;
    for (Eigen::Index p = 0; p < net.params().size(); ++p) {
        const double keep = net.params()(p);
        net.params()(p) = keep + h;
        const double up = net.loss(x, t, env, eps);
        net.params()(p) = keep - h;
        const double dn = net.loss(x, t, env, eps);
        net.params()(p) = keep;
        const double fd = (up - dn) / (2 * h);
        worst = std::max(worst, std::abs(fd - grad(p)) / std::max({std::abs(fd), std::abs(grad(p)), 1e-7}));
    }
    return worst;
}

}  // namespace

TEST_CASE("schedules")
{
    auto s = make_schedule(1, 1e-3, 0.2);
    CHECK(s.v(0) == 1e-3);
    CHECK(s.alpha_bar(0) == doctest::Approx(1 - 1e-3));
    s = schedule_from_variances((Eigen::VectorXd(2) << 0.5, 0.5).finished());
    CHECK(s.alpha_bar(1) == doctest::Approx(0.25));
    s = make_schedule(10, 1e-4, 0.2);
    CHECK(s.v(9) == doctest::Approx(0.2));
    for (int t = 1; t < 10; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK(s.alpha_bar_at(0) == 1.0);
    CHECK_THROWS_AS(make_schedule(0, 0.1, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(3, 0.3, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(schedule_from_variances(Eigen::VectorXd::Constant(2, 1.0)), std::invalid_argument);
}

TEST_CASE("forward diffusion")
{
    const Eigen::VectorXd x0 = (Eigen::VectorXd(3) << 0.1, 0.7, 0.4).finished();
    const auto flat = make_schedule(4, 0.0, 0.0);
    const Eigen::VectorXd e = Eigen::VectorXd::Constant(3, 2.0);
    CHECK(forward_diffuse(x0, 3, e, flat) == x0);

    const auto s = schedule_from_variances(Eigen::VectorXd::Constant(1, 0.75));
    CHECK(forward_diffuse(Eigen::VectorXd::Ones(1), 1, Eigen::VectorXd::Zero(1), s)(0) == doctest::Approx(0.5));

    const auto sched = make_schedule(10, 1e-4, 0.2);
    Rng rng(3);
    const int n = 100000;
    double sum = 0.0, sq = 0.0, q4 = 0.0;
    for (int k = 0; k < n; ++k) {
        const double x = forward_diffuse(Eigen::VectorXd::Zero(1), 6, Eigen::VectorXd::Constant(1, rng.normal()), sched)(0);
        sum += x;
        sq += x * x;
        q4 += x * x * x * x;
    }
    const double var = sq / n - (sum / n) * (sum / n);
    const double se = std::sqrt((q4 / n - (sq / n) * (sq / n)) / n);
    CHECK(std::abs(var - (1 - sched.alpha_bar(5))) <= 3 * se);
    CHECK_THROWS_AS(forward_diffuse(x0, 0, e, sched), std::invalid_argument);
}

TEST_CASE("environment features")
{
    CHECK(Environment{-10, 5}.features()(0) == doctest::Approx(-1.0));
    CHECK(Environment{20, 90}.features()(0) == doctest::Approx(1.0));
    CHECK(Environment{20, 90}.features()(1) == doctest::Approx(1.0));
    CHECK(Environment{5, 15}.in_training_range());
    CHECK_FALSE(Environment{25, 15}.in_training_range());
}

TEST_CASE("time embedding distinguishes steps")
{
    const EpsNetwork net(4, 8, 16, 1);
    CHECK(net.time_embedding(1).size() == 16);
    CHECK((net.time_embedding(1) - net.time_embedding(2)).norm() > 1e-3);
    CHECK(net.input_dim() == 4 + 16 + 2);
}

TEST_CASE("analytic gradient matches finite differences")
{
    EpsNetwork net(5, 8, 16, 7);
    CHECK(max_rel_grad_error(net, 3, 11) <= 1e-4);
    net.attach(make_schedule(10, 1e-4, 0.2));
    CHECK(max_rel_grad_error(net, 3, 12) <= 1e-4);
}

TEST_CASE("clean-sample output map")
{
    EpsNetwork net(3, 8, 16, 4);
    const auto s = make_schedule(10, 1e-4, 0.2);
    const Eigen::VectorXd x = (Eigen::VectorXd(3) << 0.3, -0.2, 1.1).finished();
    const Environment env{2.0, 40.0};
    const Eigen::VectorXd f = net.predict(x, 4, env);
    net.attach(s);
    const double ab = s.alpha_bar(3);
    CHECK((net.predict(x, 4, env) - (x - std::sqrt(ab) * f) / std::sqrt(1 - ab)).norm() < 1e-12);
    CHECK_THROWS_AS(net.predict(x, 11, env), std::invalid_argument);
    net.attach(Schedule{});
    CHECK_FALSE(net.attached());
}

TEST_CASE("batch and single predictions agree")
{
    const EpsNetwork net(3, 8, 16, 2);
    const Environment env{4.0, 30.0};
    const Eigen::VectorXd x = (Eigen::VectorXd(3) << 0.2, -1.0, 0.5).finished();
    Eigen::MatrixXd e(2, 1);
    e.col(0) = env.features();
    CHECK((net.predict(Eigen::MatrixXd(x), {4}, e).col(0) - net.predict(x, 4, env)).norm() < 1e-14);
}

TEST_CASE("oracle predictor inverts a one-step chain")
{
    const auto s = schedule_from_variances(Eigen::VectorXd::Constant(1, 0.3));
    const Eigen::VectorXd x0 = (Eigen::VectorXd(3) << 0.25, 0.5, 0.9).finished();
    const Eigen::VectorXd eps = (Eigen::VectorXd(3) << 0.3, -1.2, 0.7).finished();
    const Eigen::VectorXd xT = forward_diffuse(x0, 1, eps, s);
    Rng rng(1);
    const auto out = reverse_chain([&](const Eigen::VectorXd&, int) { return eps; }, 3, s, rng, false, &xT);
    CHECK((out - x0).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("samples are clamped and deterministic")
{
    const EpsNetwork net(6, 8, 16, 3);
    const auto s = make_schedule(10, 1e-4, 0.2);
    Rng a(5, Stream::diffusion_sample), b(5, Stream::diffusion_sample);
    const auto x = reverse_sample(net, {0, 20}, s, a);
    CHECK(x == reverse_sample(net, {0, 20}, s, b));
    CHECK(x.minCoeff() >= 0.0);
    CHECK(x.maxCoeff() <= 1.0);
    Rng c(6);
    const auto wide = reverse_chain([](const Eigen::VectorXd& v, int) { return Eigen::VectorXd(-50.0 * v); }, 6, s, c);
    CHECK(wide.minCoeff() >= 0.0);
    CHECK(wide.maxCoeff() <= 1.0);
}

TEST_CASE("degenerate target is learned")
{
    ExpertDataset data;
    data.dim = 4;
    const Eigen::VectorXd target = (Eigen::VectorXd(4) << 0.2, 0.8, 0.5, 0.35).finished();
    for (const auto& e : environment_grid({-10, 0, 10, 20}, {5, 45, 90})) data.records.push_back({e, target, 0.0});
    TrainConfig cfg;
    cfg.steps = 4000;
    cfg.hidden = 32;
    cfg.lr = 1e-3;
    cfg.exploration = 0.0;
    const auto r = train(data, cfg);
    CHECK(r.loss.back() < r.loss.front());
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed, Stream::diffusion_sample);
        const auto x = reverse_sample(r.net, {Environment{seed * 3.0, 20.0 + seed}}, r.schedule, rng);
        CHECK((x - target).cwiseAbs().maxCoeff() <= 0.05);
    }
}

TEST_CASE("empty dataset is rejected")
{
    ExpertDataset data;
    data.dim = 3;
    CHECK_THROWS_AS(train(data, TrainConfig{}), std::invalid_argument);
}

TEST_CASE("checkpoint round trip")
{
    const auto dir = std::filesystem::temp_directory_path() / "rscf_diffusion_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "net.json").string();
    EpsNetwork net(5, 8, 16, 9);
    const auto s = make_schedule(10, 1e-4, 0.2);
    net.attach(s);
    save_checkpoint(path, net, s);
    EpsNetwork back;
    Schedule sb;
    load_checkpoint(path, back, sb);
    CHECK(back.params() == net.params());
    CHECK(sb.alpha_bar == s.alpha_bar);
    CHECK(back.attached());
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(5, 0.3);
    CHECK(back.predict(x, 3, {1, 2}) == net.predict(x, 3, {1, 2}));

    std::ofstream(dir / "bad.json") << "{\"format\": \"something-else\", \"version\": 1}";
    CHECK_THROWS_AS(load_checkpoint((dir / "bad.json").string(), back, sb), std::runtime_error);
    CHECK_THROWS_AS(load_checkpoint((dir / "missing.json").string(), back, sb), std::runtime_error);
}

TEST_CASE("expert dataset storage")
{
    const auto dir = std::filesystem::temp_directory_path() / "rscf_diffusion_test";
    std::filesystem::create_directories(dir);
    const auto grid = environment_grid({-10, 5}, {5, 50, 90});
    CHECK(grid.size() == 6);
    CHECK(environment_grid({0, 1}, {0, 1, 2}).size() == 6);
    auto objective = [](const Environment& e, const Eigen::VectorXd& x) { return x.sum() + e.kappa_db; };
    const auto data = build_expert_dataset(grid, [&](const Environment& e) {
        Eigen::VectorXd x = Eigen::VectorXd::Constant(3, (e.asd_deg - 5) / 85.0);
        return ExpertRecord{e, x, objective(e, x)};
    });
    CHECK(data.records.size() == 6);
    CHECK(data.records[1].env.asd_deg == 50.0);
    const std::string path = (dir / "expert.csv").string();
    data.write_csv(path);
    const auto back = ExpertDataset::read_csv(path);
    REQUIRE(back.records.size() == 6);
    CHECK(back.dim == 3);
    for (std::size_t n = 0; n < 6; ++n) CHECK(back.records[n].x0 == data.records[n].x0);
    CHECK_NOTHROW(back.verify(objective));
    CHECK_THROWS_AS(back.verify([](const Environment&, const Eigen::VectorXd&) { return -1.0; }), std::runtime_error);
}

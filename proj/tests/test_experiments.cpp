#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rscf/experiments.hpp"

using namespace rscf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const char* root = std::getenv("RSCF_TEST_TMP");
    fs::path p = fs::path(root ? root : fs::temp_directory_path().string()) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const std::string& path)
{
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string header(const std::string& path)
{
    std::ifstream in(path);
    std::string h;
    std::getline(in, h);
    return h;
}

ExperimentSpec small(const std::string& extra, const fs::path& out)
{
    return parse_config_text("n_geometries = 2\nn_blocks = 200\nga_population = 8\nga_generations = 3\n"
                             "output = " + out.string() + "\n" + extra);
}

}  // namespace

TEST_CASE("empty config yields the defaults")
{
    const ExperimentSpec s = parse_config_text("");
    CHECK(s.id == ExperimentId::cdf);
    CHECK(s.system.area_side == 500.0);
    CHECK(s.system.noise_dbm == -96.0);
    CHECK(s.system.pilot_dbm == 20.0);
    CHECK(s.system.downlink_dbm == 23.0);
    CHECK(s.system.tau_c == 200);
    CHECK(s.system.num_ues == 4);
    CHECK(s.system.num_aps == 20);
    CHECK(s.system.antennas == 4);
    CHECK(s.system.rician_db == 5.0);
    CHECK(s.system.tau_p == 2);
    CHECK(s.n_geometries >= 50);
    CHECK(s.n_blocks >= 10000);
    CHECK(s.system.noise_mw() == doctest::Approx(std::pow(10.0, -9.6)));
}

TEST_CASE("pilot length follows the UE count unless fixed")
{
    CHECK(parse_config_text("num_ues = 6").system.tau_p == 3);
    CHECK(parse_config_text("num_ues = 1").system.tau_p == 1);
    CHECK(parse_config_text("num_ues = 6\ntau_p = 6").system.tau_p == 6);
}

TEST_CASE("config errors")
{
    auto message = [](const std::string& text) {
        try {
            parse_config_text(text, "f.cfg");
        } catch (const std::invalid_argument& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message("tau_p = 300\n").find("tau_p") != std::string::npos);
    CHECK(message("# comment\nbogus_key = 1\n").find("f.cfg:2") != std::string::npos);
    CHECK(message("num_aps = twelve\n").find("num_aps") != std::string::npos);
    CHECK(message("experiment = fig99\n").find("experiment") != std::string::npos);
    CHECK(message("num_aps 12\n").find("f.cfg:1") != std::string::npos);
    CHECK(message("n_geometries = 0\n").find("n_geometries") != std::string::npos);
    CHECK(message("grid = 0.1, x\n") != "");
    CHECK_THROWS_AS(parse_config("/nonexistent/dir/x.cfg"), std::invalid_argument);
}

TEST_CASE("serialize round trip")
{
    const ExperimentSpec a = parse_config_text(
        "experiment = rician_sweep\nnum_ues = 6\nrician_db = -inf\ngrid = -10, 0, 10\nue_counts = 4, 6\n"
        "seed = 42\nga_mutation_sigma = 0.05\ntrain_steps = 123\neval_asd_deg = 10, 20\n");
    const ExperimentSpec b = parse_config_text(serialize(a));
    CHECK(a == b);
    CHECK(serialize(a) == serialize(b));
    CHECK(std::isinf(b.system.rician_db));
}

TEST_CASE("figure specs")
{
    for (const char* f : {"fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9"}) CHECK_NOTHROW(figure_spec(f));
    CHECK(figure_spec("fig2").id == ExperimentId::cdf);
    CHECK(figure_spec("fig9").id == ExperimentId::eval_dynamic);
    CHECK_THROWS_AS(figure_spec("fig1"), std::invalid_argument);
    CHECK(experiment_from_string(to_string(ExperimentId::ap_sweep)) == ExperimentId::ap_sweep);
}

TEST_CASE("scenarios are reproducible")
{
    SystemConfig cfg;
    const Scenario a = make_scenario(cfg, 5, 3), b = make_scenario(cfg, 5, 3), c = make_scenario(cfg, 5, 4);
    CHECK(a.placement.ues[0].x == b.placement.ues[0].x);
    CHECK(a.placement.ues[0].x != c.placement.ues[0].x);
    CHECK(a.stats.at(1, 2).R == b.stats.at(1, 2).R);
    CHECK(a.pilots.pilot_of == b.pilots.pilot_of);
    const auto g = rho_grid();
    CHECK(g.size() == 21);
    CHECK(g.front() == 0.0);
    CHECK(g.back() == doctest::Approx(0.99));
}

TEST_CASE("cdf output is deterministic and schema-stable")
{
    const auto dir = scratch("cdf");
    const ExperimentSpec s = small("", dir);
    const auto out = run_experiment(s);
    CHECK(header(out.csv_path) == "geometry_id,variant,sum_se");
    CHECK(out.rows == 2 * 4);
    const std::string first = slurp(out.csv_path);
    run_experiment(s);
    CHECK(slurp(out.csv_path) == first);
    setenv("RSCF_WORKERS", "3", 1);
    run_experiment(s);
    unsetenv("RSCF_WORKERS");
    CHECK(slurp(out.csv_path) == first);

    const auto side = nlohmann::json::parse(slurp(out.sidecar_path));
    CHECK(side["experiment"] == "cdf");
    CHECK(side["seed"] == 1);
    CHECK(side["config"]["tau_p_resolved"] == 2);
    CHECK(side["config"]["n_blocks"] == "200");
}

TEST_CASE("sweep schemas and row counts")
{
    const auto dir = scratch("sweeps");
    auto run = [&](const std::string& extra) { return run_experiment(small(extra, dir)); };
    auto r = run("experiment = rho_sweep_split\nn_geometries = 1\n");
    CHECK(r.rows == 21 * 3 * 2);
    CHECK(header(r.csv_path) == "rho,channel,method,sum_se,stderr");
    r = run("experiment = rho_sweep_control\nn_geometries = 1\ngrid = 0.2, 0.6\n");
    CHECK(r.rows == 2 * 3 * 2);
    r = run("experiment = power_sweep\ngrid = 23, 43\n");
    CHECK(header(r.csv_path) == "p_dl_dbm,csi,variant,bound,sum_se,stderr");
    r = run("experiment = ap_sweep\ngrid = 5, 10\n");
    CHECK(header(r.csv_path) == "num_aps,variant,sum_se,stderr");
    CHECK(r.rows == 2 * 3);
    r = run("experiment = rician_sweep\ngrid = 0, 10\nue_counts = 4, 6\n");
    CHECK(header(r.csv_path) == "num_ues,kappa_db,variant,sum_se,stderr");
}

TEST_CASE("diffusion experiments at toy scale")
{
    const auto dir = scratch("diffusion");
    const std::string base = "num_aps = 4\nexpert_kappa_db = -5, 10\nexpert_asd_deg = 10, 60\n"
                             "eval_kappa_db = 0\neval_asd_deg = 30\nexpert_ga_population = 6\n"
                             "expert_ga_generations = 2\ntrain_steps = 40\ntrain_batch = 8\ntrain_hidden = 16\n";
    const auto tr = run_experiment(small("experiment = train_diffusion\n" + base, dir));
    CHECK(header(tr.csv_path) == "step,loss,eval_sum_se");
    CHECK(tr.rows == 40);
    const std::string model = (dir / "train_diffusion_model.json").string();
    CHECK(fs::exists(model));
    CHECK(fs::exists(dir / "train_diffusion_expert.csv"));
    const auto data = ExpertDataset::read_csv((dir / "train_diffusion_expert.csv").string());
    CHECK(data.records.size() == 4);
    const DynamicProblem problem(small(base, dir).system, 1);
    CHECK_NOTHROW(data.verify([&](const Environment& e, const Eigen::VectorXd& x) { return problem.objective(e, x); }));

    const auto ev = run_experiment(small("experiment = eval_dynamic\ncheckpoint = " + model + "\n" + base, dir));
    CHECK(header(ev.csv_path) == "kappa_db,asd_deg,method,sum_se");
    CHECK(ev.rows == 4);
}

TEST_CASE("unwritable output is reported")
{
    const auto dir = scratch("blocked");
    std::ofstream(dir / "file") << "x";
    ExperimentSpec s = small("", dir);
    s.output = (dir / "file" / "sub").string();
    CHECK_THROWS(run_experiment(s));
}

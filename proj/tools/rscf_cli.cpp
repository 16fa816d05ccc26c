// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: run, reproduce, train, infer, validate.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rscf/experiments.hpp"
#include "rscf/validation.hpp"

namespace {

using nlohmann::json;

int fail(const std::string& kind, const std::string& message, int code)
{
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
    return code;
}

void report(const rscf::ExperimentOutput& out)
{
    std::cout << json{{"csv", out.csv_path}, {"sidecar", out.sidecar_path}, {"rows", out.rows}}.dump() << '\n';
}

rscf::ExperimentSpec load_spec(const std::string& config)
{
    return config.empty() ? rscf::parse_config_text("") : rscf::parse_config(config);
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Rate-splitting cell-free massive MIMO simulator and optimizer"};
    app.require_subcommand(1);
    std::string output_dir;
    app.add_option("-o,--output-dir", output_dir, "Directory for CSV and sidecar files (overrides config)");

    std::string run_config;
    auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
    run->add_option("config", run_config, "Config file (key = value)")->required();

    std::string figure;
    auto* repro = app.add_subcommand("reproduce", "Run a figure sweep at desk scale");
    repro->add_option("figure-id", figure, "fig2 .. fig9")->required();

    std::string train_config;
    auto* train = app.add_subcommand("train", "Build the expert dataset and train the diffusion model");
    train->add_option("-c,--config", train_config, "Config file overriding the defaults");

    double kappa_db = 0.0, asd_deg = 0.0;
    std::string infer_config, checkpoint;
    std::uint64_t sample_seed = 1;
    auto* infer = app.add_subcommand("infer", "Generate an allocation for one environment");
    infer->add_option("--kappa-db", kappa_db, "Rician factor in dB")->required();
    infer->add_option("--asd-deg", asd_deg, "Angular standard deviation in degrees")->required();
    infer->add_option("--checkpoint", checkpoint, "Model file (default: <output>/train_diffusion_model.json)");
    infer->add_option("-c,--config", infer_config, "Config file describing the system");
    infer->add_option("--sample-seed", sample_seed, "Seed of the reverse chain");

    std::size_t draws = 200000;
    std::uint64_t validate_seed = 1;
    auto* validate = app.add_subcommand("validate", "Check closed-form moments against Monte Carlo estimators");
    validate->add_option("--draws", draws, "Monte Carlo draws");
    validate->add_option("--seed", validate_seed, "Geometry and sampling seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*run || *repro || *train) {
            rscf::ExperimentSpec spec = *run ? rscf::parse_config(run_config)
                                      : *repro ? rscf::figure_spec(figure)
                                               : load_spec(train_config);
            if (*train) spec.id = rscf::ExperimentId::train_diffusion;
            if (!output_dir.empty()) spec.output = output_dir;
            report(rscf::run_experiment(spec));
            return 0;
        }
        if (*infer) {
            rscf::ExperimentSpec spec = load_spec(infer_config);
            if (!output_dir.empty()) spec.output = output_dir;
            if (checkpoint.empty())
                checkpoint = (std::filesystem::path(spec.output) / "train_diffusion_model.json").string();
            rscf::EpsNetwork net;
            rscf::Schedule sch;
            rscf::load_checkpoint(checkpoint, net, sch);
            const rscf::DynamicProblem problem(spec.system, spec.seed);
            if (net.dim() != problem.dim()) return fail("invalid-argument", "checkpoint dimension does not match the system", 2);
            const rscf::Environment env{kappa_db, asd_deg};
            rscf::Rng rng(sample_seed, rscf::Stream::diffusion_sample);
            const Eigen::VectorXd x = rscf::reverse_sample(net, env, sch, rng);
            const int K = spec.system.num_ues, L = spec.system.num_aps;
            const auto alloc = rscf::PowerAllocation::from_vector(x, K, L);
            json eta = json::array();
            for (int k = 0; k < K; ++k) {
                std::vector<double> row(L);
                for (int l = 0; l < L; ++l) row[l] = alloc.eta(k, l);
                eta.push_back(row);
            }
            std::cout << json{{"kappa_db", kappa_db},
                              {"asd_deg", asd_deg},
                              {"in_training_range", env.in_training_range()},
                              {"rho", std::vector<double>(alloc.rho.data(), alloc.rho.data() + L)},
                              {"eta", eta},
                              {"sum_se", problem.objective(env, x)}}
                             .dump(2)
                      << '\n';
            return 0;
        }
        if (*validate) {
            const rscf::OracleReport r = rscf::moment_oracle_suite(rscf::moment_oracle_config(), validate_seed, draws);
            for (const auto& c : r.checks)
                std::printf("%-4s %-13s %-28s rel_err=%.3e stderr/|v|=%.2e%s\n", c.pass ? "ok" : "FAIL",
                            c.quantity.c_str(), c.tuple.c_str(), c.rel_err(), c.stderr_ / std::max(1e-300, std::abs(c.closed)),
                            c.resolvable ? "" : " (within noise)");
            for (const auto& [q, n] : r.resolvable) std::printf("resolvable %-13s %d\n", q.c_str(), n);
            const bool ok = r.all_pass() && r.covered();
            std::printf("%s\n", ok ? "validate: PASS" : "validate: FAIL");
            return ok ? 0 : 1;
        }
    } catch (const std::invalid_argument& e) {
        return fail("invalid-argument", e.what(), 2);
    } catch (const std::exception& e) {
        return fail("runtime-error", e.what(), 1);
    }
    return 0;
}

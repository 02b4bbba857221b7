#include "dro/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <utility>
#include <vector>

namespace {

using KeyedOptions = std::vector<std::pair<std::string, CLI::Option*>>;

// Every experiment flag maps onto a config key; flags given on the command
// line override the config file.
void add_experiment_flags(CLI::App* cmd, KeyedOptions& keyed, bool with_algo) {
    auto opt = [&](const std::string& flag, const std::string& key, const std::string& help) {
        keyed.emplace_back(key, cmd->add_option(flag, help));
    };
    opt("--data", "data", "dataset path (omit to use synthetic data)");
    opt("--data-format", "format", "csv|libsvm");
    opt("--loss", "loss", "logistic|mlp");
    opt("--hidden", "hidden", "MLP hidden units");
    opt("--classes", "classes", "MLP output classes");
    opt("--rho", "rho", "constraint radius");
    opt("--lambda0", "lambda0", "temperature floor");
    opt("--radius", "radius", "weight ball radius");
    opt("--guard", "guard", "overflow guard exponent");
    opt("--n-major", "n_major", "synthetic majority count");
    opt("--n-minor", "n_minor", "synthetic minority count");
    opt("--dim", "dim", "synthetic feature dimension");
    opt("--separation", "separation", "synthetic class separation");
    opt("--noise", "noise", "synthetic label flip rate");
    opt("--data-seed", "data_seed", "synthetic data seed");
    opt("--seed", "seed", "run seed");
    if (!with_algo) return;
    opt("--algo", "algo", "scdro|ascdro|rscdro|rascdro|sgd|minibatch|primal-dual");
    opt("--schedule", "schedule", "constant|theorem2|theory|practical");
    opt("--eta", "eta", "step size (stage-1 step for restarts)");
    opt("--beta", "beta", "momentum (stage-1 momentum for restarts)");
    opt("--eta-p", "eta_p", "dual ascent step (primal-dual)");
    opt("--mu", "mu", "ridge weight (restarts; 0 derives it)");
    opt("--iters", "iters", "iterations (stage-1 length for restarts)");
    opt("--stages", "stages", "restart stages (0 derives from target gap)");
    opt("--batch", "batch", "init/minibatch size (0 keeps the mode default)");
    opt("--sigma-sq", "sigma_sq", "noise level override (0 estimates)");
    opt("--target-gap", "target_gap", "restart target gap");
    opt("--eval-every", "eval_every", "metric logging period");
    opt("--out", "out", "metrics CSV path");
}

dro::ExperimentConfig assemble_config(const std::string& config_path,
                                      const KeyedOptions& keyed) {
    dro::ExperimentConfig c;
    if (!config_path.empty()) c = dro::parse_config_file(config_path);
    for (const auto& [key, option] : keyed)
        if (option->count() > 0) dro::apply_config_entry(c, key, option->results().back());
    return c;
}

int dispatch(CLI::App& app, CLI::App* gen, CLI::App* run, CLI::App* sw, CLI::App* val,
             const dro::SyntheticSpec& spec, const std::string& gen_out,
             const std::string& run_config, const KeyedOptions& run_opts,
             const std::string& sweep_config, const KeyedOptions& sweep_opts,
             const std::string& sweep_axis, const std::vector<std::string>& sweep_values,
             int sweep_jobs, const std::string& sweep_summary,
             const std::string& val_config, const KeyedOptions& val_opts) {
    (void)app;
    if (gen->parsed()) {
        const dro::Dataset data = dro::gen_imbalanced(spec);
        dro::save_csv(data, gen_out);
        std::printf("wrote %d samples x %d features to %s\n", data.n(), data.d(),
                    gen_out.c_str());
        return 0;
    }
    if (run->parsed()) {
        const dro::ExperimentConfig c = assemble_config(run_config, run_opts);
        const dro::RunResult r = dro::run_experiment(c);
        const auto& last = r.metrics.back();
        std::printf("final: iter=%ld oracle=%ld F=%.6g dist_sq=%.3e acc=%.4f\n", last.iter,
                    r.oracle_calls, last.objective, last.dist_sq, last.train_acc);
        std::printf("objective offset vs shifted form: %.6g; tracker clamps: %ld\n",
                    r.objective_offset, r.diag.clamp_count);
        std::printf("metrics written to %s\n", c.out_path.c_str());
        return 0;
    }
    if (sw->parsed()) {
        const dro::ExperimentConfig c = assemble_config(sweep_config, sweep_opts);
        const auto outcomes =
            dro::sweep(c, sweep_axis, sweep_values, sweep_jobs, sweep_summary);
        for (const auto& o : outcomes)
            std::printf("%s=%s -> %s (F=%.6g)\n", sweep_axis.c_str(), o.value.c_str(),
                        o.metrics_path.c_str(), o.final_row.objective);
        std::printf("summary written to %s\n", sweep_summary.c_str());
        return 0;
    }
    if (val->parsed()) {
        const dro::ExperimentConfig c = assemble_config(val_config, val_opts);
        const dro::DroProblem problem = dro::build_problem(c);
        const auto reports = dro::run_all_checks(problem, c.seed);
        bool all = true;
        for (const auto& r : reports) {
            std::printf("%s\n", dro::report_line(r).c_str());
            all = all && r.passed;
        }
        if (!all) throw dro::NumericError("one or more checks failed");
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"KL-constrained distributionally robust optimization toolkit"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "write a synthetic imbalanced dataset");
    dro::SyntheticSpec spec;
    std::string gen_out = "data.csv";
    gen->add_option("--n-major", spec.n_major, "majority class count");
    gen->add_option("--n-minor", spec.n_minor, "minority class count");
    gen->add_option("--dim", spec.dim, "feature dimension");
    gen->add_option("--separation", spec.separation, "class separation");
    gen->add_option("--noise", spec.noise, "label flip rate");
    gen->add_option("--seed", spec.seed, "generator seed");
    gen->add_option("--out", gen_out, "output CSV path");

    auto* run = app.add_subcommand("run", "run one experiment and write metrics");
    std::string run_config;
    run->add_option("--config", run_config, "key = value config file");
    KeyedOptions run_opts;
    add_experiment_flags(run, run_opts, true);

    auto* sw = app.add_subcommand("sweep", "run one experiment per value of a config key");
    std::string sweep_config, sweep_axis = "rho", sweep_summary = "sweep_summary.csv";
    std::vector<std::string> sweep_values;
    int sweep_jobs = 1;
    sw->add_option("--config", sweep_config, "key = value config file");
    KeyedOptions sweep_opts;
    add_experiment_flags(sw, sweep_opts, true);
    sw->add_option("--axis", sweep_axis, "config key to vary");
    sw->add_option("--values", sweep_values, "values for the axis")->required();
    sw->add_option("--jobs", sweep_jobs, "parallel jobs");
    sw->add_option("--summary", sweep_summary, "summary CSV path");

    auto* val = app.add_subcommand("validate", "run the brute-force check suite");
    std::string val_config;
    val->add_option("--config", val_config, "key = value config file");
    KeyedOptions val_opts;
    add_experiment_flags(val, val_opts, false);

    CLI11_PARSE(app, argc, argv);

    // Exit codes: 0 success, 2 config/data error, 3 numeric error, 4 budget.
    try {
        return dispatch(app, gen, run, sw, val, spec, gen_out, run_config, run_opts,
                        sweep_config, sweep_opts, sweep_axis, sweep_values, sweep_jobs,
                        sweep_summary, val_config, val_opts);
    } catch (const dro::BudgetExceededError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const dro::OverflowGuardError& e) {
        std::cerr << "error: " << e.what()
                  << " (raise lambda0 or the guard for this loss scale)\n";
        return 3;
    } catch (const dro::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const dro::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

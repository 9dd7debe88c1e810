#include <iostream>

#include "CLI11.hpp"
#include "expabs/bench.hpp"

namespace {

using namespace expabs;

TrainMode parse_mode(const std::string& s) {
    if (s == "fixed") return TrainMode::fixed;
    if (s == "dynamic") return TrainMode::dynamic_tau;
    throw CLI::ValidationError("--mode must be fixed or dynamic");
}

Speedups parse_speedup(const std::string& s) {
    if (s == "none") return Speedups::none;
    if (s == "momentum") return Speedups::momentum;
    if (s == "full") return Speedups::momentum_supersab;
    throw CLI::ValidationError("--speedup must be none, momentum or full");
}

struct CommonOpts {
    std::string dataset, schema, out = "out";
    std::uint64_t seed = 1;
    int patience = 200;
    int max_iter = 5000;
    double alpha = 0.1;
    double eta_plus = 1.05;
    double eta_minus = 0.5;
    double eta_init = 1.0;
    double mu_init = 0.01;
    int jobs = 1;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool training_params = true) {
    cmd->add_option("--dataset", o.dataset, "dataset file (delimited text)")->required();
    cmd->add_option("--schema", o.schema, "schema config file")->required();
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--seed", o.seed, "base seed");
    if (training_params) {
        cmd->add_option("--patience", o.patience, "early-stopping look-ahead");
        cmd->add_option("--max-iter", o.max_iter, "iteration cap");
        cmd->add_option("--alpha", o.alpha, "Momentum coefficient");
        cmd->add_option("--eta-plus", o.eta_plus, "SuperSAB increase factor");
        cmd->add_option("--eta-minus", o.eta_minus, "SuperSAB decrease factor");
        cmd->add_option("--eta-init", o.eta_init, "initial SuperSAB rate");
        cmd->add_option("--mu-init", o.mu_init, "initial LM combination coefficient");
    }
    cmd->add_option("--jobs", o.jobs, "worker pool size (0 = all cores)");
}

TrainerConfig make_trainer(const CommonOpts& o) {
    TrainerConfig cfg;
    cfg.patience = o.patience;
    cfg.max_iterations = o.max_iter;
    cfg.alpha = o.alpha;
    cfg.eta_plus = o.eta_plus;
    cfg.eta_minus = o.eta_minus;
    cfg.eta_init = o.eta_init;
    cfg.mu_init = o.mu_init;
    return cfg;
}

void print_run(const RunSummary& r) {
    std::cout << "run dataset=" << r.dataset << " mode=" << to_string(r.mode)
              << " speedup=" << to_string(r.speedups) << " tau_init=" << r.tau_init
              << " rep=" << r.repetition;
    if (!r.ok) {
        std::cout << " status=failed error=\"" << r.error << "\"\n";
        return;
    }
    std::cout << " stop=" << to_string(r.stop_reason) << " iters=" << r.iterations
              << " forced=" << r.forced_accepts << " final_tau=" << r.final_tau
              << " test_mse=" << r.test.mse << " test_ce=" << r.test.ce
              << " test_rr=" << r.test.rec_rate << " test_e_expabs=" << r.test.e_expabs << "\n";
}

int finish(const std::vector<RunSummary>& runs, const std::string& out_dir) {
    const GridSummary grid = summarize(runs);
    emit_results(runs, grid, out_dir);
    std::size_t failed = 0;
    for (const RunSummary& r : runs)
        if (!r.ok) ++failed;
    std::cout << "wrote " << out_dir << "/summary.txt (" << runs.size() << " runs, " << failed
              << " failed)\n";
    return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-adaptive E_ExpAbs Levenberg-Marquardt trainer and benchmark harness"};
    app.require_subcommand(1);

    CommonOpts train_opts;
    std::string train_mode = "dynamic", train_speedup = "full";
    double train_tau = 1.0;
    CLI::App* cmd_train = app.add_subcommand("train", "single training run");
    add_common(cmd_train, train_opts);
    cmd_train->add_option("--mode", train_mode, "fixed|dynamic");
    cmd_train->add_option("--tau", train_tau, "initial tau");
    cmd_train->add_option("--speedup", train_speedup, "none|momentum|full");

    CommonOpts bench_opts;
    std::string bench_mode = "both";
    std::vector<double> bench_taus;
    std::vector<std::string> bench_speedups = {"full"};
    int bench_reps = 30;
    CLI::App* cmd_bench = app.add_subcommand("bench", "fixed-vs-dynamic tau grid");
    add_common(cmd_bench, bench_opts);
    cmd_bench->add_option("--mode", bench_mode, "fixed|dynamic|both");
    cmd_bench->add_option("--tau", bench_taus, "tau grid (default: the 16-value grid)");
    cmd_bench->add_option("--speedup", bench_speedups, "speed-up variants for dynamic runs");
    cmd_bench->add_option("--reps", bench_reps, "repetitions per cell");

    CommonOpts adult_opts;
    int adult_reps = 10;
    CLI::App* cmd_adult = app.add_subcommand("adult", "Adult comparison configuration");
    add_common(cmd_adult, adult_opts, false);
    cmd_adult->add_option("--reps", adult_reps, "repetitions");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_train->parsed()) {
            ExperimentPlan plan;
            plan.dataset_path = train_opts.dataset;
            plan.schema_path = train_opts.schema;
            plan.tau_grid = {train_tau};
            plan.modes = {parse_mode(train_mode)};
            plan.speedup_variants = {parse_speedup(train_speedup)};
            plan.repetitions = 1;
            plan.base_seed = train_opts.seed;
            plan.trainer = make_trainer(train_opts);
            plan.jobs = 1;
            std::vector<RunSummary> runs = run_plan(plan);
            print_run(runs.front());
            return finish(runs, train_opts.out);
        }
        if (cmd_bench->parsed()) {
            ExperimentPlan plan;
            plan.dataset_path = bench_opts.dataset;
            plan.schema_path = bench_opts.schema;
            if (!bench_taus.empty()) plan.tau_grid = bench_taus;
            if (bench_mode == "fixed") plan.modes = {TrainMode::fixed};
            else if (bench_mode == "dynamic") plan.modes = {TrainMode::dynamic_tau};
            else plan.modes = {TrainMode::fixed, TrainMode::dynamic_tau};
            plan.speedup_variants.clear();
            for (const std::string& s : bench_speedups)
                plan.speedup_variants.push_back(parse_speedup(s));
            plan.repetitions = bench_reps;
            plan.base_seed = bench_opts.seed;
            plan.trainer = make_trainer(bench_opts);
            plan.jobs = bench_opts.jobs;
            std::vector<RunSummary> runs = run_plan(plan);
            for (const RunSummary& r : runs)
                if (!r.ok) print_run(r);
            return finish(runs, bench_opts.out);
        }
        // adult
        const AdultConfig ac;
        const SchemaConfig schema = parse_schema(adult_opts.schema);
        const PreparedDataset probe =
            prepare_dataset(adult_opts.dataset, schema, 0, {0.5, 0.25, 0.25});
        const std::array<std::size_t, 3> counts = scale_adult_counts(probe.patterns, ac.counts);
        std::cout << "adult comparison configuration:\n"
                  << "  hidden_nodes = " << ac.hidden_nodes << " (one hidden layer)\n"
                  << "  patience     = " << ac.patience << "\n"
                  << "  eta_plus     = " << ac.eta_plus << "\n"
                  << "  eta_minus    = " << ac.eta_minus << "\n"
                  << "  tau_init     = " << ac.tau_init << "\n"
                  << "  alpha        = " << ac.alpha << "\n"
                  << "  split counts = " << counts[0] << "/" << counts[1] << "/" << counts[2];
        if (counts != ac.counts)
            std::cout << " (scaled from 5000/1414/26147 for a " << probe.patterns
                      << "-row subsample)";
        std::cout << "\n";

        ExperimentPlan plan;
        plan.dataset_path = adult_opts.dataset;
        plan.schema_path = adult_opts.schema;
        plan.tau_grid = {ac.tau_init};
        plan.modes = {TrainMode::dynamic_tau};
        plan.speedup_variants = {Speedups::momentum_supersab};
        plan.repetitions = adult_reps;
        plan.base_seed = adult_opts.seed;
        plan.trainer.patience = ac.patience;
        plan.trainer.eta_plus = ac.eta_plus;
        plan.trainer.eta_minus = ac.eta_minus;
        plan.trainer.alpha = ac.alpha;
        plan.jobs = adult_opts.jobs;
        static std::array<std::size_t, 3> fixed_counts;
        fixed_counts = counts;
        plan.counts = &fixed_counts;

        std::vector<RunSummary> runs = run_plan(plan);
        std::vector<double> test_err;
        for (const RunSummary& r : runs) {
            print_run(r);
            if (r.ok) test_err.push_back(1.0 - r.test.rec_rate);
        }
        if (!test_err.empty()) {
            const BoxStats b = BoxStats::of(test_err);
            std::cout << "recognition test error (1 - RR) over " << b.n
                      << " runs: median=" << b.median << " q1=" << b.q1 << " q3=" << b.q3
                      << " min=" << b.min << " max=" << b.max << "\n";
        }
        return finish(runs, adult_opts.out);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
}

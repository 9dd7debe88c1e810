#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "expabs/bench.hpp"

using namespace expabs;

namespace {

struct TempTree {
    std::string dir;
    explicit TempTree(std::string d) : dir(std::move(d)) {}
    ~TempTree() { std::filesystem::remove_all(dir); }
};

void write_toy_dataset(const std::string& csv_path, const std::string& schema_path,
                       std::size_t n = 60) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> du(0.0, 0.5);
    std::ofstream data(csv_path, std::ios::trunc);
    for (std::size_t i = 0; i < n; ++i) {
        const bool a = i % 2 == 0;
        data << du(rng) + (a ? 0.5 : 0.0) << ',' << du(rng) + (a ? 0.0 : 0.5) << ','
             << (a ? "a" : "b") << '\n';
    }
    std::ofstream schema(schema_path, std::ios::trunc);
    schema << "name = toy\ndelimiter = comma\ntarget_columns = 2\n"
              "target_kind = classification\nhidden_nodes = 3\n";
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("seed derivation is stable and sensitive to every component") {
    const std::uint64_t s = derive_run_seed(1, 0.05, TrainMode::fixed, 0);
    CHECK(s == derive_run_seed(1, 0.05, TrainMode::fixed, 0));
    CHECK(s != derive_run_seed(2, 0.05, TrainMode::fixed, 0));
    CHECK(s != derive_run_seed(1, 0.1, TrainMode::fixed, 0));
    CHECK(s != derive_run_seed(1, 0.05, TrainMode::dynamic_tau, 0));
    CHECK(s != derive_run_seed(1, 0.05, TrainMode::fixed, 1));
}

TEST_CASE("nearest-rank quantiles") {
    const std::vector<double> v{5, 1, 4, 2, 3};
    CHECK(nearest_rank(v, 0.5) == 3);
    CHECK(nearest_rank(v, 0.25) == 2);
    CHECK(nearest_rank(v, 0.75) == 4);
    const BoxStats b = BoxStats::of({7, 7, 7});
    CHECK(b.min == 7);
    CHECK(b.median == 7);
    CHECK(b.max == 7);
}

TEST_CASE("summarize counts cap hits and orders the statistics") {
    std::vector<RunSummary> runs(4);
    for (int i = 0; i < 4; ++i) {
        runs[i].dataset = "d";
        runs[i].mode = TrainMode::dynamic_tau;
        runs[i].tau_init = 1.0;
        runs[i].ok = true;
        runs[i].stop_reason = i < 3 ? StopReason::early_stop : StopReason::iteration_cap;
        runs[i].test.mse = 0.1 * (i + 1);
        runs[i].test.rec_rate = 0.9;
        runs[i].final_tau = 0.3;
    }
    const GridSummary g = summarize(runs);
    REQUIRE(g.cells.size() == 1);
    CHECK(g.cells[0].cap_hits == 1);
    CHECK(g.cap_hits_per_mode.at("dynamic") == 1);
    const BoxStats& b = g.cells[0].mse;
    CHECK(b.min <= b.q1);
    CHECK(b.q1 <= b.median);
    CHECK(b.median <= b.q3);
    CHECK(b.q3 <= b.max);
}

TEST_CASE("adult split counts scale proportionally on subsamples") {
    const std::array<std::size_t, 3> paper{5000, 1414, 26147};
    CHECK(scale_adult_counts(32561, paper) == paper);  // full file: honored exactly
    const auto scaled = scale_adult_counts(651, paper);
    CHECK(scaled[0] + scaled[1] + scaled[2] == 651);
    CHECK(scaled[0] > 0);
    CHECK(scaled[1] > 0);
    CHECK(scaled[2] > 0);
    // ratios roughly preserved
    CHECK(std::abs(static_cast<double>(scaled[0]) / 651.0 - 5000.0 / 32561.0) < 0.01);
}

TEST_CASE("run_plan produces one summary per cell, deterministically") {
    const TempTree tree("tmp_bench_out");
    write_toy_dataset("tmp_toy.csv", "tmp_toy.schema");
    ExperimentPlan plan;
    plan.dataset_path = "tmp_toy.csv";
    plan.schema_path = "tmp_toy.schema";
    plan.tau_grid = {0.5, 2.0};
    plan.repetitions = 2;
    plan.base_seed = 3;
    plan.trainer.max_iterations = 25;
    plan.trainer.patience = 30;
    plan.jobs = 2;

    const std::vector<RunSummary> runs = run_plan(plan);
    CHECK(runs.size() == 2 * 2 * 2);  // taus x reps x modes
    for (const RunSummary& r : runs) CHECK(r.ok);

    const std::vector<RunSummary> again = run_plan(plan);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        CHECK(runs[i].seed == again[i].seed);
        CHECK(runs[i].final_tau == again[i].final_tau);
        CHECK(runs[i].test.mse == again[i].test.mse);
        CHECK(runs[i].iterations == again[i].iterations);
    }

    SUBCASE("single-run plan") {
        plan.tau_grid = {1.0};
        plan.modes = {TrainMode::dynamic_tau};
        plan.repetitions = 1;
        CHECK(run_plan(plan).size() == 1);
    }

    SUBCASE("emit_results writes every artifact byte-identically on rerun") {
        const GridSummary grid = summarize(runs);
        emit_results(runs, grid, tree.dir);
        const std::string summary1 = slurp(tree.dir + "/summary.txt");
        const std::string traj1 = slurp(tree.dir + "/plot_tau_trajectories.csv");
        const std::string points1 = slurp(tree.dir + "/plot_metric_points.csv");
        const std::string caps1 = slurp(tree.dir + "/plot_cap_hits.csv");
        CHECK_FALSE(summary1.empty());
        // one summary record per (mode, tau) cell plus the totals lines
        std::size_t records = 0;
        for (std::stringstream ss(summary1); ss;) {
            std::string line;
            if (!std::getline(ss, line)) break;
            if (line.rfind("dataset=", 0) == 0) ++records;
        }
        CHECK(records == 4);
        emit_results(runs, grid, tree.dir);
        CHECK(slurp(tree.dir + "/summary.txt") == summary1);
        CHECK(slurp(tree.dir + "/plot_tau_trajectories.csv") == traj1);
        CHECK(slurp(tree.dir + "/plot_metric_points.csv") == points1);
        CHECK(slurp(tree.dir + "/plot_cap_hits.csv") == caps1);
        // per-run logs: one CSV per successful run
        std::size_t run_files = 0;
        for (auto& e : std::filesystem::directory_iterator(tree.dir + "/runs")) {
            (void)e;
            ++run_files;
        }
        CHECK(run_files == runs.size());
    }

    std::remove("tmp_toy.csv");
    std::remove("tmp_toy.schema");
}

TEST_CASE("failed runs are recorded, not dropped") {
    write_toy_dataset("tmp_toy2.csv", "tmp_toy2.schema", 8);
    ExperimentPlan plan;
    plan.dataset_path = "tmp_toy2.csv";
    plan.schema_path = "tmp_toy2.schema";
    plan.tau_grid = {1.0};
    plan.modes = {TrainMode::dynamic_tau};
    plan.repetitions = 1;
    plan.trainer.max_iterations = 5;
    plan.trainer.patience = 2;
    plan.trainer.m_max = 0;  // invalid config: every run must fail but be recorded
    const std::vector<RunSummary> runs = run_plan(plan);
    REQUIRE(runs.size() == 1);
    CHECK_FALSE(runs[0].ok);
    CHECK_FALSE(runs[0].error.empty());
    const GridSummary g = summarize(runs);
    CHECK(g.failed_runs == 1);
    std::remove("tmp_toy2.csv");
    std::remove("tmp_toy2.schema");
}

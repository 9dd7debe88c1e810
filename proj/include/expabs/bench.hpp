#pragma once

#include <atomic>
#include <bit>
#include <filesystem>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "expabs/data.hpp"
#include "expabs/trainer.hpp"

namespace expabs {

// splitmix64; the fixed mixer behind every derived seed in the harness.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Per-run seed = chained mix of (base seed, tau bits, mode, repetition).
// Adding grid points or modes never perturbs other runs' seeds.
inline std::uint64_t derive_run_seed(std::uint64_t base_seed, double tau, TrainMode mode,
                                     int repetition) {
    std::uint64_t h = mix64(base_seed);
    h = mix64(h ^ std::bit_cast<std::uint64_t>(tau));
    h = mix64(h ^ (mode == TrainMode::fixed ? 1ULL : 2ULL));
    h = mix64(h ^ static_cast<std::uint64_t>(repetition));
    return h;
}

struct ExperimentPlan {
    std::string dataset_path;
    std::string schema_path;
    std::vector<double> tau_grid = {0.05, 0.1,  0.2,  0.5,  1.0,    2.0,    3.0,    4.0,
                                    5.0,  10.0, 50.0, 100.0, 300.0, 1000.0, 5000.0, 10000.0};
    std::vector<TrainMode> modes = {TrainMode::fixed, TrainMode::dynamic_tau};
    std::vector<Speedups> speedup_variants = {Speedups::momentum_supersab};
    int repetitions = 30;
    std::uint64_t base_seed = 1;
    TrainerConfig trainer;                       // per-run mode/tau/speedups overwritten
    std::array<double, 3> fractions = {0.5, 0.25, 0.25};
    const std::array<std::size_t, 3>* counts = nullptr;  // Adult override
    int jobs = 1;                                // 0 = hardware concurrency
    bool keep_tau_trajectories = true;
};

struct SplitMetrics {
    double e_expabs = 0.0, mse = 0.0, ce = 0.0, rec_rate = 0.0;
};

struct RunSummary {
    std::string dataset;
    TrainMode mode = TrainMode::dynamic_tau;
    Speedups speedups = Speedups::momentum_supersab;
    double tau_init = 1.0;
    int repetition = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    StopReason stop_reason = StopReason::iteration_cap;
    int iterations = 0;
    int forced_accepts = 0;
    double final_tau = 0.0;
    SplitMetrics train, validation, test;
    std::vector<std::pair<int, double>> tau_trajectory;  // (iteration, tau)
    TrainingLog log;
};

inline SplitMetrics evaluate_split(const Network& net, const Matrix& x, const Matrix& t,
                                   const Tau& tau, bool classification) {
    SplitMetrics m;
    const Matrix o = detail::net_outputs(net, x);
    const ErrorMatrix e = error_matrix(t, o);
    m.e_expabs = e_expabs_total(e, tau);
    m.mse = mse(e);
    m.ce = cross_entropy(t, o);
    m.rec_rate = classification ? recognition_rate(o, t)
                                : std::numeric_limits<double>::quiet_NaN();
    return m;
}

inline RunSummary run_single(const SchemaConfig& schema, const std::string& data_path,
                             const ExperimentPlan& plan, TrainMode mode, Speedups speed,
                             double tau0, int rep) {
    RunSummary rs;
    rs.dataset = schema.name;
    rs.mode = mode;
    rs.speedups = speed;
    rs.tau_init = tau0;
    rs.repetition = rep;
    rs.seed = derive_run_seed(plan.base_seed, tau0, mode, rep);
    try {
        // fresh split + normalization per run seed
        PreparedDataset ds = prepare_dataset(data_path, schema, mix64(rs.seed ^ 0x5311CEEDULL),
                                             plan.fractions, plan.counts);
        NetworkSpec nspec;
        nspec.layer_sizes = {ds.inputs(), ds.hidden_nodes, ds.outputs()};
        nspec.seed = mix64(rs.seed ^ 0x12E7ULL);
        Network net = init_network(nspec);

        TrainerConfig cfg = plan.trainer;
        cfg.mode = mode;
        cfg.speedups = speed;
        cfg.tau_init = tau0;

        TrainResult tr = train(net, ds.x_train, ds.t_train, ds.x_val, ds.t_val, cfg);
        const bool classification = ds.kind == TargetKind::classification;
        rs.stop_reason = tr.log.stop_reason;
        rs.iterations = tr.iterations;
        rs.forced_accepts = tr.forced_accepts;
        rs.final_tau = tr.tau.value;
        rs.train = evaluate_split(tr.net, ds.x_train, ds.t_train, tr.tau, classification);
        rs.validation = evaluate_split(tr.net, ds.x_val, ds.t_val, tr.tau, classification);
        rs.test = evaluate_split(tr.net, ds.x_test, ds.t_test, tr.tau, classification);
        if (plan.keep_tau_trajectories)
            for (const LogRow& row : tr.log.rows) rs.tau_trajectory.emplace_back(row.iteration, row.tau);
        rs.log = std::move(tr.log);
        rs.ok = true;
    } catch (const std::exception& ex) {
        rs.ok = false;
        rs.error = ex.what();
    }
    return rs;
}

// All (tau, mode, speedup, repetition) cells of the plan, dispatched over a
// small worker pool. Results land in deterministic plan order regardless of
// the worker count.
inline std::vector<RunSummary> run_plan(const ExperimentPlan& plan) {
    const SchemaConfig schema = parse_schema(plan.schema_path);
    // fail fast on unloadable data before spawning workers
    prepare_dataset(plan.dataset_path, schema, 0, plan.fractions, plan.counts);

    struct Cell {
        TrainMode mode;
        Speedups speed;
        double tau;
        int rep;
    };
    std::vector<Cell> cells;
    for (TrainMode mode : plan.modes)
        for (Speedups speed :
             (mode == TrainMode::fixed ? std::vector<Speedups>{Speedups::none}
                                       : plan.speedup_variants))
            for (double tau : plan.tau_grid)
                for (int rep = 0; rep < plan.repetitions; ++rep)
                    cells.push_back({mode, speed, tau, rep});

    std::vector<RunSummary> results(cells.size());
    std::atomic<std::size_t> next{0};
    unsigned jobs = plan.jobs > 0 ? static_cast<unsigned>(plan.jobs)
                                  : std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min<unsigned>(jobs, cells.size());
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const Cell& c = cells[i];
            results[i] = run_single(schema, plan.dataset_path, plan, c.mode, c.speed, c.tau,
                                    c.rep);
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();
    return results;
}

// Nearest-rank order statistic: k = ceil(q*n), 1-based.
inline double nearest_rank(std::vector<double> v, double q) {
    if (v.empty()) throw std::invalid_argument("nearest_rank: empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    std::size_t k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    if (k < 1) k = 1;
    if (k > n) k = n;
    return v[k - 1];
}

struct BoxStats {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
    std::size_t n = 0;

    static BoxStats of(const std::vector<double>& v) {
        BoxStats b;
        if (v.empty()) return b;
        b.n = v.size();
        b.min = *std::min_element(v.begin(), v.end());
        b.max = *std::max_element(v.begin(), v.end());
        b.q1 = nearest_rank(v, 0.25);
        b.median = nearest_rank(v, 0.5);
        b.q3 = nearest_rank(v, 0.75);
        return b;
    }
};

struct CellSummary {
    std::string dataset;
    TrainMode mode;
    Speedups speedups;
    double tau_init;
    std::size_t runs = 0, failed = 0, cap_hits = 0;
    // order statistics of final test metrics plus final tau and iterations
    BoxStats mse, ce, rec_rate, e_expabs, final_tau, iterations;
};

struct GridSummary {
    std::vector<CellSummary> cells;
    std::map<std::string, std::size_t> cap_hits_per_mode;  // "fixed"/"dynamic"
    std::size_t failed_runs = 0;
};

inline GridSummary summarize(const std::vector<RunSummary>& runs) {
    if (runs.empty()) throw std::invalid_argument("summarize: no runs");
    GridSummary g;
    std::map<std::tuple<std::string, int, int, double>, std::vector<const RunSummary*>> cells;
    for (const RunSummary& r : runs) {
        cells[{r.dataset, static_cast<int>(r.mode), static_cast<int>(r.speedups), r.tau_init}]
            .push_back(&r);
        if (!r.ok) ++g.failed_runs;
        if (r.ok && r.stop_reason == StopReason::iteration_cap)
            ++g.cap_hits_per_mode[to_string(r.mode)];
    }
    for (auto& [key, cell_runs] : cells) {
        CellSummary c;
        c.dataset = std::get<0>(key);
        c.mode = static_cast<TrainMode>(std::get<1>(key));
        c.speedups = static_cast<Speedups>(std::get<2>(key));
        c.tau_init = std::get<3>(key);
        c.runs = cell_runs.size();
        std::vector<double> mses, ces, rrs, es, taus, iters;
        for (const RunSummary* r : cell_runs) {
            if (!r->ok) {
                ++c.failed;
                continue;
            }
            if (r->stop_reason == StopReason::iteration_cap) ++c.cap_hits;
            mses.push_back(r->test.mse);
            ces.push_back(r->test.ce);
            if (std::isfinite(r->test.rec_rate)) rrs.push_back(r->test.rec_rate);
            es.push_back(r->test.e_expabs);
            taus.push_back(r->final_tau);
            iters.push_back(static_cast<double>(r->iterations));
        }
        if (!mses.empty()) {
            c.mse = BoxStats::of(mses);
            c.ce = BoxStats::of(ces);
            if (!rrs.empty()) c.rec_rate = BoxStats::of(rrs);
            c.e_expabs = BoxStats::of(es);
            c.final_tau = BoxStats::of(taus);
            c.iterations = BoxStats::of(iters);
        }
        g.cells.push_back(std::move(c));
    }
    return g;
}

namespace detail {

inline std::string run_file_stem(const RunSummary& r) {
    std::ostringstream s;
    s << r.dataset << '_' << to_string(r.mode) << '_' << to_string(r.speedups) << "_tau"
      << r.tau_init << "_rep" << r.repetition;
    std::string out = s.str();
    for (char& ch : out)
        if (ch == '.') ch = 'p';
    return out;
}

inline void write_box(std::ostream& out, const char* name, const BoxStats& b) {
    out << ' ' << name << "[min=" << b.min << " q1=" << b.q1 << " median=" << b.median
        << " q3=" << b.q3 << " max=" << b.max << "]";
}

}  // namespace detail

// summary.txt, per-run CSV logs and one plot-data CSV per figure family.
// Re-running over the same inputs rewrites every file byte-identically.
inline void emit_results(const std::vector<RunSummary>& runs, const GridSummary& grid,
                         const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/runs");

    {
        std::ofstream out(out_dir + "/summary.txt", std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + out_dir + "/summary.txt");
        out.precision(10);
        for (const CellSummary& c : grid.cells) {
            out << "dataset=" << c.dataset << " mode=" << to_string(c.mode)
                << " speedup=" << to_string(c.speedups) << " tau_init=" << c.tau_init
                << " runs=" << c.runs << " failed=" << c.failed << " cap_hits=" << c.cap_hits;
            detail::write_box(out, "test_mse", c.mse);
            detail::write_box(out, "test_ce", c.ce);
            detail::write_box(out, "test_rr", c.rec_rate);
            detail::write_box(out, "test_e_expabs", c.e_expabs);
            detail::write_box(out, "final_tau", c.final_tau);
            detail::write_box(out, "iterations", c.iterations);
            out << '\n';
        }
        for (const auto& [mode, hits] : grid.cap_hits_per_mode)
            out << "cap_hits_total mode=" << mode << " count=" << hits << '\n';
        out << "failed_runs=" << grid.failed_runs << '\n';
    }

    for (const RunSummary& r : runs) {
        if (!r.ok) continue;
        write_training_log_csv(out_dir + "/runs/" + detail::run_file_stem(r) + ".csv", r.log);
    }

    {
        std::ofstream out(out_dir + "/plot_tau_trajectories.csv", std::ios::trunc);
        out.precision(17);
        out << "dataset,mode,speedup,tau_init,rep,iteration,tau\n";
        for (const RunSummary& r : runs) {
            if (!r.ok) continue;
            for (const auto& [it, tau] : r.tau_trajectory)
                out << r.dataset << ',' << to_string(r.mode) << ',' << to_string(r.speedups)
                    << ',' << r.tau_init << ',' << r.repetition << ',' << it << ',' << tau
                    << '\n';
        }
    }

    {
        // per-run final metrics; *_norm columns divide by the (mode, tau) cell
        // mean so range plots can be overlaid across tau values
        std::ofstream out(out_dir + "/plot_metric_points.csv", std::ios::trunc);
        out.precision(17);
        out << "dataset,mode,speedup,tau_init,rep,status,stop_reason,iterations,forced_accepts,"
               "final_tau,test_mse,test_ce,test_rr,test_e_expabs,test_e_expabs_norm\n";
        std::map<std::tuple<std::string, int, int, double>, std::pair<double, std::size_t>> mean;
        for (const RunSummary& r : runs) {
            if (!r.ok) continue;
            auto& m = mean[{r.dataset, static_cast<int>(r.mode), static_cast<int>(r.speedups),
                            r.tau_init}];
            m.first += r.test.e_expabs;
            ++m.second;
        }
        for (const RunSummary& r : runs) {
            out << r.dataset << ',' << to_string(r.mode) << ',' << to_string(r.speedups) << ','
                << r.tau_init << ',' << r.repetition << ',' << (r.ok ? "ok" : "failed") << ','
                << (r.ok ? to_string(r.stop_reason) : "-") << ',' << r.iterations << ','
                << r.forced_accepts << ',' << r.final_tau << ',' << r.test.mse << ','
                << r.test.ce << ',' << r.test.rec_rate << ',' << r.test.e_expabs << ',';
            if (r.ok) {
                const auto& m = mean[{r.dataset, static_cast<int>(r.mode),
                                      static_cast<int>(r.speedups), r.tau_init}];
                out << (m.first == 0.0 ? 0.0
                                       : r.test.e_expabs / (m.first / static_cast<double>(m.second)));
            } else {
                out << "nan";
            }
            out << '\n';
        }
    }

    {
        std::ofstream out(out_dir + "/plot_cap_hits.csv", std::ios::trunc);
        out << "dataset,mode,cap_hits,total_runs\n";
        std::map<std::pair<std::string, std::string>, std::pair<std::size_t, std::size_t>> acc;
        for (const RunSummary& r : runs) {
            auto& a = acc[{r.dataset, to_string(r.mode)}];
            ++a.second;
            if (r.ok && r.stop_reason == StopReason::iteration_cap) ++a.first;
        }
        for (const auto& [key, a] : acc)
            out << key.first << ',' << key.second << ',' << a.first << ',' << a.second << '\n';
    }
}

// Comparison configuration on the Adult dataset: one hidden layer of 8 nodes,
// patience 500, eta+/- = 1.02/0.3, initial tau 10, alpha 0.1, fixed split
// counts 5000/1414/26147. When the file is a subsample the counts are scaled
// proportionally.
struct AdultConfig {
    int hidden_nodes = 8;
    int patience = 500;
    double eta_plus = 1.02;
    double eta_minus = 0.3;
    double tau_init = 10.0;
    double alpha = 0.1;
    std::array<std::size_t, 3> counts = {5000, 1414, 26147};
};

inline std::array<std::size_t, 3> scale_adult_counts(std::size_t patterns,
                                                     const std::array<std::size_t, 3>& counts) {
    const std::size_t total = counts[0] + counts[1] + counts[2];
    if (patterns == total) return counts;
    std::array<double, 3> frac{};
    for (int i = 0; i < 3; ++i)
        frac[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    auto scaled = detail::apportion(patterns, frac);
    std::array<std::size_t, 3> out{scaled[0], scaled[1], scaled[2]};
    for (int i = 0; i < 3; ++i)
        if (out[i] == 0) {  // keep every part nonempty on tiny subsamples
            int donor = 0;
            for (int j = 1; j < 3; ++j)
                if (out[j] > out[donor]) donor = j;
            --out[donor];
            ++out[i];
        }
    return out;
}

}  // namespace expabs

#pragma once

#include <fstream>
#include <limits>
#include <optional>
#include <string>

#include "expabs/jacobian.hpp"
#include "expabs/measures.hpp"
#include "expabs/network.hpp"

namespace expabs {

enum class TrainMode { fixed, dynamic_tau };
enum class Speedups { none, momentum, momentum_supersab };
enum class Branch { gauss_newton, gradient, forced_accept };
enum class StopReason { early_stop, iteration_cap };

inline const char* to_string(TrainMode m) { return m == TrainMode::fixed ? "fixed" : "dynamic"; }
inline const char* to_string(Speedups s) {
    switch (s) {
        case Speedups::none: return "none";
        case Speedups::momentum: return "momentum";
        case Speedups::momentum_supersab: return "full";
    }
    return "?";
}
inline const char* to_string(Branch b) {
    switch (b) {
        case Branch::gauss_newton: return "gauss-newton";
        case Branch::gradient: return "gradient";
        case Branch::forced_accept: return "forced-accept";
    }
    return "?";
}
inline const char* to_string(StopReason r) {
    return r == StopReason::early_stop ? "early-stop" : "iteration-cap";
}

struct TrainerConfig {
    double mu_init = 0.01;    // LM combination coefficient
    double alpha = 0.1;       // Momentum coefficient for tau
    double eta_init = 1.0;    // SuperSAB rate
    double eta_plus = 1.05;
    double eta_minus = 0.5;
    double tau_init = 1.0;
    int m_max = 5;            // consecutive-failure cap per iteration
    int max_iterations = 5000;
    int patience = 200;       // early-stopping look-ahead
    TrainMode mode = TrainMode::dynamic_tau;
    Speedups speedups = Speedups::momentum_supersab;

    // Residual pairing for the LM update; when unset, fixed mode uses the raw
    // per-pattern error and dynamic mode its deviation from the |tau| floor,
    // which keeps the joint (weights, tau) system scale-free in tau.
    std::optional<ResidualKind> residual;

    // SuperSAB direction test: prose rule by default (grow eta on sign
    // agreement); true switches to the pseudocode inequality for fidelity
    // experiments.
    bool supersab_pseudocode_rule = false;

    // Test hook: run the dynamic machinery with the tau row zeroed; must
    // reproduce fixed-mode trajectories exactly.
    bool freeze_tau_row = false;

    double tau_guard = kDefaultTauGuard;

    // Trust region on the tau coordinate, relative to |tau|: the raw LM step
    // is clamped first, the speed-ups act on top of it, and the combined step
    // is clamped again. Without the brake a near-Gauss-Newton iteration jumps
    // tau to its 1-D optimum at once, which both masks arbitrary weight
    // damage in the acceptance test and removes the gradual descent the
    // speed-up comparison measures.
    double tau_raw_step_limit = 0.02;
    double tau_total_step_limit = 0.5;

    // Damping floor of the linear solve in dynamic mode, relative to the mean
    // Gram diagonal. After a long run of accepted tau-descent steps mu has
    // decayed to nothing and an undamped solve emits weight steps large
    // enough to saturate the sigmoids for good.
    double mu_floor_scale = 0.01;

    double mu_min = 1e-30;
    double mu_max = 1e30;

    bool valid() const {
        return mu_init > 0.0 && eta_init > 0.0 && eta_plus > 1.0 && eta_minus > 0.0 &&
               eta_minus < 1.0 && tau_init != 0.0 && m_max >= 1 && max_iterations >= 1 &&
               patience >= 1 && tau_guard > 0.0;
    }

    ResidualKind effective_residual() const {
        if (residual) return *residual;
        return mode == TrainMode::fixed ? ResidualKind::pattern_error
                                        : ResidualKind::pattern_error_minus_floor;
    }
};

struct LogRow {
    int iteration = 0;
    double e_expabs = 0.0;
    double mse = 0.0;
    double ce = 0.0;
    double rec_rate = 0.0;  // NaN for non-one-hot targets
    double tau = 0.0;
    double mu = 0.0;
    double eta = 0.0;
    Branch branch = Branch::gauss_newton;
};

struct TrainingLog {
    std::vector<LogRow> rows;
    StopReason stop_reason = StopReason::iteration_cap;
};

inline void write_training_log_csv(const std::string& path, const TrainingLog& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open log file: " + path);
    out << "iteration,e_expabs,mse,ce,rec_rate,tau,mu,eta,branch\n";
    out.precision(17);
    for (const LogRow& r : log.rows) {
        out << r.iteration << ',' << r.e_expabs << ',' << r.mse << ',' << r.ce << ','
            << r.rec_rate << ',' << r.tau << ',' << r.mu << ',' << r.eta << ','
            << to_string(r.branch) << '\n';
    }
}

// One LM step: solve (J J^T + damping I) s = J r, return params - s.
// nullopt when the damped system is not solvable; the caller folds that into
// the gradient branch.
inline std::optional<std::vector<double>> lm_candidate(std::span<const double> params,
                                                       const Matrix& j, std::span<const double> r,
                                                       double damping) {
    if (j.rows != params.size() || j.cols != r.size())
        throw std::invalid_argument("lm_candidate: shape mismatch");
    const Matrix a = gram(j);
    const std::vector<double> g = matvec(j, r);
    std::vector<double> step;
    if (!cholesky_solve(a, damping, g, step)) return std::nullopt;
    std::vector<double> cand(params.begin(), params.end());
    for (std::size_t i = 0; i < cand.size(); ++i) cand[i] -= step[i];
    return cand;
}

// tau_next = eta * (tau_candidate - tau) + tau
inline double supersab_rescale(double tau, double tau_candidate, double eta) {
    return eta * (tau_candidate - tau) + tau;
}

// tau_next = tau + alpha * delta_tau_previous
inline double momentum_tau(double tau, double delta_tau, double alpha) {
    return tau + alpha * delta_tau;
}

// eta/delta update after an accepted step. Prose rule: same direction as the
// stored delta (or delta == 0) grows eta and keeps the step as the new delta;
// a direction flip cuts eta and resets delta. The pseudocode rule applies the
// printed inequality delta * step <= 0 for the grow branch instead.
inline void supersab_update(double realized_step, double& eta, double& delta_tau,
                            double eta_plus, double eta_minus, bool pseudocode_rule) {
    const bool grow = pseudocode_rule ? (delta_tau * realized_step <= 0.0)
                                      : (delta_tau * realized_step > 0.0 || delta_tau == 0.0);
    if (grow) {
        eta *= eta_plus;
        delta_tau = realized_step;
    } else {
        eta *= eta_minus;
        delta_tau = 0.0;
    }
}

struct TrainResult {
    Network net;
    Tau tau;
    TrainingLog log;
    int iterations = 0;
    int forced_accepts = 0;
    double best_validation_e = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline Matrix net_outputs(const Network& net, const Matrix& x) {
    Matrix o(x.rows, net.spec.outputs());
    for (std::size_t p = 0; p < x.rows; ++p) {
        const ForwardTrace t = forward(net, x.row(p));
        std::span<const double> out = t.output();
        for (std::size_t n = 0; n < o.cols; ++n) o(p, n) = out[n];
    }
    return o;
}

inline bool all_rows_one_hot(const Matrix& t) {
    for (std::size_t p = 0; p < t.rows; ++p)
        if (!is_one_hot_row(t.row(p))) return false;
    return t.rows > 0;
}

}  // namespace detail

// Algorithm "Dynamic speed-up LM": the Levenberg-Marquardt loop over
// (weights, tau) with mu adaptation, SuperSAB and Momentum on tau only,
// early stopping on validation E_ExpAbs and an iteration cap. Returns the
// best-validation snapshot.
inline TrainResult train(const Network& initial, const Matrix& x_train, const Matrix& t_train,
                         const Matrix& x_val, const Matrix& t_val, const TrainerConfig& cfg) {
    if (!cfg.valid()) throw std::invalid_argument("train: invalid config");
    if (x_train.rows == 0 || x_val.rows == 0)
        throw std::invalid_argument("train: empty train or validation split");

    const bool dynamic = cfg.mode == TrainMode::dynamic_tau;
    const bool use_supersab = dynamic && cfg.speedups == Speedups::momentum_supersab;
    const bool use_momentum = dynamic && cfg.speedups != Speedups::none;
    const ResidualKind residual_kind = cfg.effective_residual();
    const bool classification = detail::all_rows_one_hot(t_train);
    const std::size_t w_total = weight_count(initial.spec);

    Network net = initial;
    Tau tau = Tau::projected(cfg.tau_init, cfg.tau_guard);
    double eta = cfg.eta_init;
    double delta_tau = 0.0;
    double mu = cfg.mu_init;

    Matrix outputs = detail::net_outputs(net, x_train);
    double e_k = e_expabs_total(error_matrix(t_train, outputs), tau);

    TrainResult res;
    res.log.stop_reason = StopReason::iteration_cap;
    double best_val = std::numeric_limits<double>::infinity();
    Network best_net = net;
    Tau best_tau = tau;
    int patience_counter = 0;

    std::vector<double> scratch;
    for (int iteration = 1; iteration <= cfg.max_iterations; ++iteration) {
        JacobianBuild build = build_extended_jacobian(net, x_train, t_train, tau, dynamic);
        if (dynamic && cfg.freeze_tau_row)
            for (std::size_t p = 0; p < build.j.cols; ++p) build.j(w_total, p) = 0.0;

        const Matrix a = gram(build.j);
        const std::span<const double> r =
            build.residual(residual_kind, scratch, std::abs(tau.value));
        const std::vector<double> g = matvec(build.j, r);
        const double solve_floor = dynamic ? cfg.mu_floor_scale * mean_diagonal(a) : 0.0;
        const std::vector<double> flat = net.flatten();

        Branch branch = Branch::gradient;
        int fails = 0;
        std::vector<double> step;
        for (;;) {
            const bool solved = cholesky_solve(a, std::max(mu, solve_floor), g, step);
            if (!solved) {
                if (++fails >= cfg.m_max) break;  // nothing acceptable this iteration
                mu = std::min(mu * 10.0, cfg.mu_max);
                continue;
            }

            Network cand = net;
            std::vector<double> cand_w(flat.size());
            for (std::size_t i = 0; i < flat.size(); ++i) cand_w[i] = flat[i] - step[i];
            cand.unflatten(cand_w);

            Tau cand_tau = tau;
            if (dynamic) {
                double raw = -step[w_total];
                const double raw_lim = cfg.tau_raw_step_limit * std::abs(tau.value);
                raw = std::clamp(raw, -raw_lim, raw_lim);
                // supersab_rescale and momentum_tau in step form (around 0)
                double st = use_supersab ? eta * raw : raw;
                if (use_momentum) st = momentum_tau(st, delta_tau, cfg.alpha);
                const double tot_lim = cfg.tau_total_step_limit * std::abs(tau.value);
                st = std::clamp(st, -tot_lim, tot_lim);
                cand_tau = Tau::projected(tau.value + st, cfg.tau_guard);
            }

            Matrix cand_out = detail::net_outputs(cand, x_train);
            const double e_new = e_expabs_total(error_matrix(t_train, cand_out), cand_tau);
            if (!std::isfinite(e_new))
                throw std::runtime_error("train: non-finite loss despite saturation");

            if (e_new <= e_k) {  // Gauss-Newton branch
                mu = std::max(mu / 10.0, cfg.mu_min);
                if (dynamic) {
                    const double realized = cand_tau.value - tau.value;
                    if (use_supersab)
                        supersab_update(realized, eta, delta_tau, cfg.eta_plus, cfg.eta_minus,
                                        cfg.supersab_pseudocode_rule);
                    else
                        delta_tau = realized;
                }
                net = std::move(cand);
                tau = cand_tau;
                e_k = e_new;
                outputs = std::move(cand_out);
                branch = fails == 0 ? Branch::gauss_newton : Branch::gradient;
                break;
            }
            // Gradient branch
            if (++fails >= cfg.m_max) {
                // the pseudocode's Else arm: accept the worse candidate verbatim
                net = std::move(cand);
                tau = cand_tau;
                e_k = e_new;
                outputs = std::move(cand_out);
                ++res.forced_accepts;
                branch = Branch::forced_accept;
                break;
            }
            mu = std::min(mu * 10.0, cfg.mu_max);
        }

        const ErrorMatrix err = error_matrix(t_train, outputs);
        LogRow row;
        row.iteration = iteration;
        row.e_expabs = e_k;
        row.mse = mse(err);
        row.ce = cross_entropy(t_train, outputs);
        row.rec_rate = classification ? recognition_rate(outputs, t_train)
                                      : std::numeric_limits<double>::quiet_NaN();
        row.tau = tau.value;
        row.mu = mu;
        row.eta = eta;
        row.branch = branch;
        res.log.rows.push_back(row);
        res.iterations = iteration;

        const Matrix val_out = detail::net_outputs(net, x_val);
        const double e_val = e_expabs_total(error_matrix(t_val, val_out), tau);
        if (e_val < best_val) {
            best_val = e_val;
            best_net = net;
            best_tau = tau;
            patience_counter = 0;
        } else if (++patience_counter >= cfg.patience) {
            res.log.stop_reason = StopReason::early_stop;
            break;
        }
    }

    res.net = std::move(best_net);
    res.tau = best_tau;
    res.best_validation_e = best_val;
    return res;
}

}  // namespace expabs

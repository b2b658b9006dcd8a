#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "pls/bounds.hpp"
#include "pls/compat.hpp"
#include "pls/errors.hpp"
#include "pls/io.hpp"
#include "pls/model.hpp"
#include "pls/penalty.hpp"
#include "pls/rng.hpp"
#include "pls/smallball.hpp"
#include "pls/solver.hpp"
#include "pls/tuning.hpp"

namespace pls {

enum class LambdaRule { deterministic_10tau, random_design, explicit_value };
enum class MuSource { analytic_orthonormal, estimated, smallball_bound };

inline const char* to_string(LambdaRule r) {
    switch (r) {
        case LambdaRule::deterministic_10tau: return "deterministic-10tau";
        case LambdaRule::random_design: return "random-design";
        case LambdaRule::explicit_value: return "explicit";
    }
    return "unknown";
}

inline const char* to_string(MuSource m) {
    switch (m) {
        case MuSource::analytic_orthonormal: return "analytic-orthonormal";
        case MuSource::estimated: return "estimated";
        case MuSource::smallball_bound: return "smallball-bound";
    }
    return "unknown";
}

inline const char* to_string(PenaltyKind k) {
    switch (k) {
        case PenaltyKind::l1: return "l1";
        case PenaltyKind::group: return "group";
        case PenaltyKind::nuclear: return "nuclear";
    }
    return "unknown";
}

inline PenaltyKind penalty_kind_from_string(const std::string& s) {
    if (s == "l1") return PenaltyKind::l1;
    if (s == "group") return PenaltyKind::group;
    if (s == "nuclear") return PenaltyKind::nuclear;
    throw config_error("unknown penalty kind '" + s + "'");
}

inline LambdaRule lambda_rule_from_string(const std::string& s) {
    if (s == "deterministic-10tau") return LambdaRule::deterministic_10tau;
    if (s == "random-design") return LambdaRule::random_design;
    if (s == "explicit") return LambdaRule::explicit_value;
    throw config_error("unknown lambda rule '" + s + "'");
}

inline MuSource mu_source_from_string(const std::string& s) {
    if (s == "analytic-orthonormal") return MuSource::analytic_orthonormal;
    if (s == "estimated") return MuSource::estimated;
    if (s == "smallball-bound") return MuSource::smallball_bound;
    throw config_error("unknown mu source '" + s + "'");
}

// One experiment: a penalty family, problem dimensions, noise level,
// tuning rule, and Monte Carlo budget. Field names mirror the JSON
// config document in lower-kebab-case.
struct ExperimentConfig {
    PenaltyKind kind = PenaltyKind::l1;
    std::size_t n = 0;
    std::size_t p = 0;           // vector dimension (l1)
    std::size_t blocks = 0;      // number of groups (group)
    std::size_t block_size = 0;  // coordinates per group (group)
    std::size_t k = 0;           // matrix rows (nuclear)
    std::size_t m = 0;           // matrix columns (nuclear)
    std::size_t s = 1;           // active coordinates / blocks / rank
    double signal_amplitude = 1.0;
    double sigma = 1.0;
    double delta = 0.1;
    LambdaRule lambda_rule = LambdaRule::deterministic_10tau;
    double lambda_a = 0.0;      // multiplier for the random-design rule
    double lambda_value = 0.0;  // level for the explicit rule
    std::size_t trials = 1;
    std::uint64_t seed = 0;
    MuSource mu_source = MuSource::analytic_orthonormal;
    std::size_t threads = 1;
    std::size_t solver_max_iters = 0;  // 0 keeps the solver default
};

inline DesignShape config_shape(const ExperimentConfig& cfg) {
    switch (cfg.kind) {
        case PenaltyKind::l1:
            return VectorShape{cfg.p};
        case PenaltyKind::group: {
            GroupedShape gs;
            for (std::size_t g = 0; g < cfg.blocks; ++g)
                gs.blocks.push_back({g * cfg.block_size, (g + 1) * cfg.block_size});
            return gs;
        }
        case PenaltyKind::nuclear:
            return MatrixShape{cfg.k, cfg.m};
    }
    throw config_error("config: unknown penalty kind");
}

inline void validate_config(const ExperimentConfig& cfg) {
    if (cfg.trials < 1) throw config_error("config: trials must be at least 1");
    if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw config_error("config: delta must lie in (0, 1)");
    if (cfg.n < 1) throw config_error("config: n must be positive");
    if (!std::isfinite(cfg.sigma) || cfg.sigma < 0.0)
        throw config_error("config: sigma must be finite and nonnegative");
    if (!std::isfinite(cfg.signal_amplitude) || cfg.signal_amplitude <= 0.0)
        throw config_error("config: signal-amplitude must be finite and positive");
    if (cfg.threads < 1) throw config_error("config: threads must be at least 1");

    std::size_t s_max = 0;
    switch (cfg.kind) {
        case PenaltyKind::l1:
            if (cfg.p < 1) throw config_error("config: p must be positive");
            s_max = cfg.p;
            break;
        case PenaltyKind::group:
            if (cfg.blocks < 1 || cfg.block_size < 1)
                throw config_error("config: blocks and block-size must be positive");
            s_max = cfg.blocks;
            break;
        case PenaltyKind::nuclear:
            if (cfg.k < 1 || cfg.m < 1) throw config_error("config: k and m must be positive");
            s_max = std::min(cfg.k, cfg.m);
            break;
    }
    if (cfg.s < 1 || cfg.s > s_max) throw config_error("config: s out of range for the shape");

    if (cfg.lambda_rule == LambdaRule::explicit_value &&
        (!std::isfinite(cfg.lambda_value) || cfg.lambda_value < 0.0)) {
        throw config_error("config: explicit lambda must be finite and nonnegative");
    }
    if (cfg.mu_source == MuSource::analytic_orthonormal && cfg.n < shape_dim(config_shape(cfg))) {
        throw config_error("config: analytic-orthonormal mode needs n >= ambient dimension");
    }
}

inline ordered_json config_to_json(const ExperimentConfig& cfg) {
    ordered_json j;
    j["penalty-kind"] = to_string(cfg.kind);
    j["n"] = cfg.n;
    switch (cfg.kind) {
        case PenaltyKind::l1:
            j["p"] = cfg.p;
            break;
        case PenaltyKind::group:
            j["blocks"] = cfg.blocks;
            j["block-size"] = cfg.block_size;
            break;
        case PenaltyKind::nuclear:
            j["k"] = cfg.k;
            j["m"] = cfg.m;
            break;
    }
    j["s"] = cfg.s;
    j["signal-amplitude"] = cfg.signal_amplitude;
    j["sigma"] = cfg.sigma;
    j["delta"] = cfg.delta;
    j["lambda-rule"] = to_string(cfg.lambda_rule);
    if (cfg.lambda_rule == LambdaRule::random_design) j["lambda-a"] = cfg.lambda_a;
    if (cfg.lambda_rule == LambdaRule::explicit_value) j["lambda-value"] = cfg.lambda_value;
    j["trials"] = cfg.trials;
    j["seed"] = cfg.seed;
    j["mu-source"] = to_string(cfg.mu_source);
    j["threads"] = cfg.threads;
    if (cfg.solver_max_iters) j["solver-max-iters"] = cfg.solver_max_iters;
    return j;
}

inline ExperimentConfig config_from_json(const ordered_json& j) {
    if (!j.is_object()) throw config_error("config: document must be a JSON object");
    static const char* known[] = {"penalty-kind", "n", "p", "blocks", "block-size",
                                  "k", "m", "s", "signal-amplitude", "sigma", "delta",
                                  "lambda-rule", "lambda-a", "lambda-value", "trials", "seed",
                                  "mu-source", "threads", "solver-max-iters"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* key : known) ok = ok || it.key() == key;
        if (!ok) throw config_error("config: unknown key '" + it.key() + "'");
    }

    ExperimentConfig cfg;
    try {
        if (!j.contains("penalty-kind")) throw config_error("config: missing 'penalty-kind'");
        cfg.kind = penalty_kind_from_string(j.at("penalty-kind").get<std::string>());
        if (!j.contains("n")) throw config_error("config: missing 'n'");
        cfg.n = j.at("n").get<std::size_t>();
        if (j.contains("p")) cfg.p = j.at("p").get<std::size_t>();
        if (j.contains("blocks")) cfg.blocks = j.at("blocks").get<std::size_t>();
        if (j.contains("block-size")) cfg.block_size = j.at("block-size").get<std::size_t>();
        if (j.contains("k")) cfg.k = j.at("k").get<std::size_t>();
        if (j.contains("m")) cfg.m = j.at("m").get<std::size_t>();
        if (j.contains("s")) cfg.s = j.at("s").get<std::size_t>();
        if (j.contains("signal-amplitude"))
            cfg.signal_amplitude = j.at("signal-amplitude").get<double>();
        if (j.contains("sigma")) cfg.sigma = j.at("sigma").get<double>();
        if (j.contains("delta")) cfg.delta = j.at("delta").get<double>();
        if (j.contains("lambda-rule"))
            cfg.lambda_rule = lambda_rule_from_string(j.at("lambda-rule").get<std::string>());
        if (j.contains("lambda-a")) cfg.lambda_a = j.at("lambda-a").get<double>();
        if (j.contains("lambda-value")) cfg.lambda_value = j.at("lambda-value").get<double>();
        if (j.contains("trials")) cfg.trials = j.at("trials").get<std::size_t>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("mu-source"))
            cfg.mu_source = mu_source_from_string(j.at("mu-source").get<std::string>());
        if (j.contains("threads")) cfg.threads = j.at("threads").get<std::size_t>();
        if (j.contains("solver-max-iters"))
            cfg.solver_max_iters = j.at("solver-max-iters").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("config: ") + e.what());
    }
    validate_config(cfg);
    return cfg;
}

// One Monte Carlo trial. Fields not produced by a run stay NaN (or 0 for
// the indicators) so every run type shares one report schema.
struct TrialRow {
    std::size_t trial = 0;
    double pred_lhs = std::numeric_limits<double>::quiet_NaN();
    double pred_rhs = std::numeric_limits<double>::quiet_NaN();
    double estim_lhs = std::numeric_limits<double>::quiet_NaN();
    double estim_rhs = std::numeric_limits<double>::quiet_NaN();
    double cert_gap = std::numeric_limits<double>::quiet_NaN();
    int event = 0;
    bool converged = true;
    bool colnorm_ok = true;  // max column empirical norm <= 2 (not serialized)
};

struct Aggregates {
    std::size_t trials = 0;
    std::size_t flagged = 0;  // non-converged trials, excluded from the rates
    double pred_violation_rate = std::numeric_limits<double>::quiet_NaN();
    double estim_violation_rate = std::numeric_limits<double>::quiet_NaN();
    double mean_pred_lhs = std::numeric_limits<double>::quiet_NaN();
    double expectation_pred_rhs = std::numeric_limits<double>::quiet_NaN();
    double mean_estim_lhs = std::numeric_limits<double>::quiet_NaN();
    double expectation_estim_rhs = std::numeric_limits<double>::quiet_NaN();
    double event_frequency = std::numeric_limits<double>::quiet_NaN();
    double column_norm_frequency = std::numeric_limits<double>::quiet_NaN();
    double min_cert_gap = std::numeric_limits<double>::quiet_NaN();
    double tau_prime = std::numeric_limits<double>::quiet_NaN();
    double lambda = std::numeric_limits<double>::quiet_NaN();
    double mu4 = std::numeric_limits<double>::quiet_NaN();
    Mu4Provenance mu4_provenance = Mu4Provenance::analytic;
    // Wall-clock diagnostic for the console; never serialized, so emitted
    // reports stay byte-identical across machines and thread counts.
    double wall_seconds = 0.0;
};

struct ExperimentReport {
    std::vector<TrialRow> rows;
    Aggregates agg;
};

inline double binomial_stderr(double rate, std::size_t trials) {
    if (trials == 0) return std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(std::max(0.0, rate * (1.0 - rate)) / static_cast<double>(trials));
}

namespace detail {

// Index-sharded work pool. Bodies run concurrently, so they must only
// touch their own slot; all aggregation happens serially afterwards,
// which keeps reports byte-identical across thread counts.
template <typename F>
inline void parallel_for(std::size_t count, std::size_t threads, F&& body) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr err;
    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) break;
            try {
                body(i);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(err_mutex);
                if (!err) err = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t extra = std::min(threads, count) - 1;
    pool.reserve(extra);
    for (std::size_t t = 0; t < extra; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

struct KahanSum {
    double sum = 0.0, c = 0.0;
    void add(double v) {
        const double y = v - c;
        const double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
};

// Deviation-level statistic for the dual-norm event of a trial's design:
// the matching tuning rule evaluated on that design. phi = 1 exactly for
// orthonormal-scaled designs, so analytic mode avoids the stochastic
// phi_max search.
inline double tau_for_design(const ExperimentConfig& cfg, const DesignOperator& d,
                             RngStream& rng) {
    switch (cfg.kind) {
        case PenaltyKind::l1: return tau_lasso(d, cfg.sigma);
        case PenaltyKind::group: return tau_group(d, cfg.sigma);
        case PenaltyKind::nuclear: {
            const double phi = cfg.mu_source == MuSource::analytic_orthonormal
                                   ? 1.0
                                   : phi_max(d, rng);
            return tau_nuclear(d, cfg.sigma, phi);
        }
    }
    throw config_error("config: unknown penalty kind");
}

inline double lambda_for_trial(const ExperimentConfig& cfg, double tau) {
    switch (cfg.lambda_rule) {
        case LambdaRule::deterministic_10tau: return lambda_from_tau(tau);
        case LambdaRule::random_design:
            return lambda_random_design(cfg.kind, config_shape(cfg), cfg.n, cfg.sigma,
                                        cfg.lambda_a);
        case LambdaRule::explicit_value: return cfg.lambda_value;
    }
    throw config_error("config: unknown lambda rule");
}

// Compatibility constant entering the bound RHS. Analytic mode is exact
// for orthonormal-scaled designs: sqrt(s) for coordinate/group sparsity;
// for the nuclear penalty the support projector maps into rank <= 2s, so
// the valid closed-form ceiling is sqrt(2s).
inline std::pair<double, bool> mu4_for_trial(const ExperimentConfig& cfg, const Instance& inst,
                                             const PenaltySpec& pen, RngStream& rng) {
    const double s = static_cast<double>(cfg.s);
    switch (cfg.mu_source) {
        case MuSource::analytic_orthonormal:
            return {cfg.kind == PenaltyKind::nuclear ? std::sqrt(2.0 * s) : std::sqrt(s), false};
        case MuSource::estimated: {
            ConeSpec cone{support_of(pen, inst.beta_star, 1e-8), 4.0, pen};
            SearchBudget budget;
            budget.samples = 2000;
            budget.refine_starts = 4;
            budget.refine_iters = 100;
            const CompatEstimate est = compatibility_factor(inst.design, cone, rng, budget);
            return {est.lower, est.infinite};
        }
        case MuSource::smallball_bound: {
            const SmallBallParams params = smallball_params_from_L(gaussian_moment_ratio());
            return {mu_upper_bound_smallball(params.beta0, params.kappa0, cfg.s), false};
        }
    }
    throw config_error("config: unknown mu source");
}

// A solved trial violates a bound only beyond a small numerical slack
// covering the solver's termination tolerance; the reported rate itself
// is the exact count over trials.
inline bool violates(double lhs, double rhs) {
    if (std::isnan(lhs) || std::isnan(rhs)) return false;
    return lhs > rhs + 1e-10 * std::max(1.0, std::fabs(rhs));
}

inline Mu4Provenance provenance_of(MuSource src) {
    switch (src) {
        case MuSource::analytic_orthonormal: return Mu4Provenance::analytic;
        case MuSource::estimated: return Mu4Provenance::estimated;
        case MuSource::smallball_bound: return Mu4Provenance::smallball_bound;
    }
    return Mu4Provenance::analytic;
}

}  // namespace detail

// Coverage experiment: per trial, generate an instance, tune, solve, and
// compare both error LHS values against the bound RHS values. Trials are
// reproducible as a pure function of (config, seed): trial t always uses
// the stream (seed, t + 1).
inline ExperimentReport run_coverage(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const DesignShape shape = config_shape(cfg);

    ExperimentReport rep;
    rep.rows.resize(cfg.trials);
    std::vector<double> tau_by_trial(cfg.trials), lambda_by_trial(cfg.trials),
        mu_by_trial(cfg.trials), exp_pred_by_trial(cfg.trials), exp_estim_by_trial(cfg.trials);

    detail::parallel_for(cfg.trials, cfg.threads, [&](std::size_t t) {
        RngStream rng(cfg.seed, t + 1);
        InstanceSpec ispec;
        ispec.shape = shape;
        ispec.n = cfg.n;
        ispec.sparsity = cfg.s;
        ispec.signal_amplitude = cfg.signal_amplitude;
        ispec.sigma = cfg.sigma;
        ispec.orthonormalize = cfg.mu_source == MuSource::analytic_orthonormal;
        Instance inst = generate_instance(ispec, rng);

        const double tau = detail::tau_for_design(cfg, inst.design, rng);
        const double lambda = detail::lambda_for_trial(cfg, tau);
        PenaltySpec pen{shape, lambda};

        const auto [mu4, mu_inf] = detail::mu4_for_trial(cfg, inst, pen, rng);

        BoundInputs bi;
        bi.lambda = lambda;
        bi.mu4 = mu4;
        bi.mu4_infinite = mu_inf;
        bi.sigma = cfg.sigma;
        bi.n = cfg.n;
        bi.delta = cfg.delta;
        bi.bias = 0.0;  // well-specified: the comparison point is beta_star
        bi.provenance = detail::provenance_of(cfg.mu_source);

        TrialRow row;
        row.trial = t;
        row.pred_rhs = oracle_rhs_deviation(bi);
        row.estim_rhs = lambda > 0.0 ? estimation_rhs_deviation(bi)
                                     : std::numeric_limits<double>::infinity();
        const ExpectationBounds expect = oracle_rhs_expectation(bi);
        exp_pred_by_trial[t] = expect.prediction;
        exp_estim_by_trial[t] = expect.estimation_valid
                                    ? expect.estimation
                                    : std::numeric_limits<double>::quiet_NaN();

        SolveOptions opt;
        if (cfg.solver_max_iters) opt.max_iters = cfg.solver_max_iters;
        const SolveResult res = solve_penalized_ls(inst, pen, opt);
        row.converged = res.converged;

        Vec resid = apply_design(inst.design, res.beta_hat);
        for (std::size_t i = 0; i < resid.size(); ++i) resid[i] -= inst.f[i];
        row.pred_lhs = empirical_norm_sq(resid);

        Vec diff = res.beta_hat;
        axpy(-1.0, inst.beta_star, diff);
        row.estim_lhs = penalty_norm(pen, diff);

        row.event = dual_norm_statistic(inst.design, inst.xi, cfg.kind) <= tau ? 1 : 0;
        row.colnorm_ok = max_column_empirical_norm(inst.design) <= 2.0;
        row.cert_gap = res.certificate_slack;

        tau_by_trial[t] = tau;
        lambda_by_trial[t] = lambda;
        mu_by_trial[t] = mu4;
        rep.rows[t] = row;
    });

    // Serial aggregation in trial order keeps output independent of the
    // thread schedule.
    Aggregates& agg = rep.agg;
    agg.trials = cfg.trials;
    agg.mu4_provenance = detail::provenance_of(cfg.mu_source);
    std::size_t converged = 0, pred_viol = 0, estim_viol = 0, events = 0, colnorm = 0;
    detail::KahanSum pred_lhs_sum, estim_lhs_sum, exp_pred_sum, exp_estim_sum;
    detail::KahanSum tau_sum, lambda_sum, mu_sum;
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        const TrialRow& row = rep.rows[t];
        events += row.event;
        colnorm += row.colnorm_ok ? 1 : 0;
        if (!row.converged) continue;
        ++converged;
        if (detail::violates(row.pred_lhs, row.pred_rhs)) ++pred_viol;
        if (detail::violates(row.estim_lhs, row.estim_rhs)) ++estim_viol;
        pred_lhs_sum.add(row.pred_lhs);
        estim_lhs_sum.add(row.estim_lhs);
        exp_pred_sum.add(exp_pred_by_trial[t]);
        if (!std::isnan(exp_estim_by_trial[t])) exp_estim_sum.add(exp_estim_by_trial[t]);
        tau_sum.add(tau_by_trial[t]);
        lambda_sum.add(lambda_by_trial[t]);
        mu_sum.add(mu_by_trial[t]);
        if (!std::isnan(row.cert_gap)) min_gap = std::min(min_gap, row.cert_gap);
    }
    agg.flagged = cfg.trials - converged;
    if (agg.flagged * 100 > cfg.trials) {
        throw numeric_error("coverage: more than 1% of trials failed to converge");
    }
    const double nt = static_cast<double>(cfg.trials);
    agg.event_frequency = static_cast<double>(events) / nt;
    agg.column_norm_frequency = static_cast<double>(colnorm) / nt;
    if (converged > 0) {
        const double nc = static_cast<double>(converged);
        agg.pred_violation_rate = static_cast<double>(pred_viol) / nc;
        agg.estim_violation_rate = static_cast<double>(estim_viol) / nc;
        agg.mean_pred_lhs = pred_lhs_sum.sum / nc;
        agg.expectation_pred_rhs = exp_pred_sum.sum / nc;
        agg.mean_estim_lhs = estim_lhs_sum.sum / nc;
        agg.expectation_estim_rhs = exp_estim_sum.sum / nc;
        agg.tau_prime = tau_sum.sum / nc;
        agg.lambda = lambda_sum.sum / nc;
        agg.mu4 = mu_sum.sum / nc;
        if (std::isfinite(min_gap)) agg.min_cert_gap = min_gap;
    }
    agg.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

// Dual-norm event experiment: one design (stream (seed, 0)), fresh noise
// per trial, frequency of {dual_norm_statistic <= tau'}.
inline ExperimentReport run_event_probability(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const DesignShape shape = config_shape(cfg);

    RngStream design_rng(cfg.seed, 0);
    InstanceSpec ispec;
    ispec.shape = shape;
    ispec.n = cfg.n;
    ispec.sparsity = cfg.s;
    ispec.signal_amplitude = cfg.signal_amplitude;
    ispec.sigma = cfg.sigma;
    ispec.orthonormalize = cfg.mu_source == MuSource::analytic_orthonormal;
    const Instance base = generate_instance(ispec, design_rng);
    const double tau = detail::tau_for_design(cfg, base.design, design_rng);

    ExperimentReport rep;
    rep.rows.resize(cfg.trials);
    detail::parallel_for(cfg.trials, cfg.threads, [&](std::size_t t) {
        RngStream rng(cfg.seed, t + 1);
        Vec xi = gauss_vector(rng, cfg.n);
        for (auto& v : xi) v *= cfg.sigma;
        TrialRow row;
        row.trial = t;
        row.event = dual_norm_statistic(base.design, xi, cfg.kind) <= tau ? 1 : 0;
        rep.rows[t] = row;
    });

    std::size_t events = 0;
    for (const TrialRow& row : rep.rows) events += row.event;
    rep.agg.trials = cfg.trials;
    rep.agg.event_frequency = static_cast<double>(events) / static_cast<double>(cfg.trials);
    rep.agg.tau_prime = tau;
    rep.agg.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

// First-order optimality certificate experiment: solve each instance to a
// tight tolerance, then evaluate the certificate gap against a probe set
// {0, beta_star, random points}; the minimum over trials and probes must
// be nonnegative up to solver precision.
inline ExperimentReport run_certify(const ExperimentConfig& cfg, std::size_t probes_per_trial = 10) {
    validate_config(cfg);
    if (probes_per_trial < 2) throw config_error("certify: need at least the two canonical probes");
    const auto t0 = std::chrono::steady_clock::now();
    const DesignShape shape = config_shape(cfg);
    const std::size_t dim = shape_dim(shape);

    ExperimentReport rep;
    rep.rows.resize(cfg.trials);
    std::vector<double> tau_by_trial(cfg.trials), lambda_by_trial(cfg.trials);

    detail::parallel_for(cfg.trials, cfg.threads, [&](std::size_t t) {
        RngStream rng(cfg.seed, t + 1);
        InstanceSpec ispec;
        ispec.shape = shape;
        ispec.n = cfg.n;
        ispec.sparsity = cfg.s;
        ispec.signal_amplitude = cfg.signal_amplitude;
        ispec.sigma = cfg.sigma;
        ispec.orthonormalize = cfg.mu_source == MuSource::analytic_orthonormal;
        Instance inst = generate_instance(ispec, rng);

        const double tau = detail::tau_for_design(cfg, inst.design, rng);
        const double lambda = detail::lambda_for_trial(cfg, tau);
        PenaltySpec pen{shape, lambda};

        SolveOptions opt;
        opt.rel_obj_tol = 1e-14;
        opt.fixed_point_tol = 1e-9;
        opt.max_iters = 100000;
        if (cfg.solver_max_iters) opt.max_iters = cfg.solver_max_iters;
        const SolveResult res = solve_penalized_ls(inst, pen, opt);

        double gap = res.certificate_slack;  // probes {0, beta_star}
        for (std::size_t q = 2; q < probes_per_trial; ++q) {
            const Vec probe = gauss_vector(rng, dim);
            gap = std::min(gap, certificate_gap(inst, pen, res.beta_hat, probe));
        }

        TrialRow row;
        row.trial = t;
        row.cert_gap = gap;
        row.converged = res.converged;
        tau_by_trial[t] = tau;
        lambda_by_trial[t] = lambda;
        rep.rows[t] = row;
    });

    double min_gap = std::numeric_limits<double>::infinity();
    detail::KahanSum tau_sum, lambda_sum;
    std::size_t converged = 0;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        min_gap = std::min(min_gap, rep.rows[t].cert_gap);
        tau_sum.add(tau_by_trial[t]);
        lambda_sum.add(lambda_by_trial[t]);
        if (rep.rows[t].converged) ++converged;
    }
    rep.agg.trials = cfg.trials;
    rep.agg.flagged = cfg.trials - converged;
    rep.agg.min_cert_gap = min_gap;
    const double nt = static_cast<double>(cfg.trials);
    rep.agg.tau_prime = tau_sum.sum / nt;
    rep.agg.lambda = lambda_sum.sum / nt;
    rep.agg.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

// --- report emission ------------------------------------------------------

inline std::string report_csv(const ExperimentReport& rep) {
    std::string text =
        "trial,pred_lhs,pred_rhs,estim_lhs,estim_rhs,cert_gap,event,converged\r\n";
    for (const TrialRow& row : rep.rows) {
        text += std::to_string(row.trial);
        text.push_back(',');
        text += format_sig17(row.pred_lhs);
        text.push_back(',');
        text += format_sig17(row.pred_rhs);
        text.push_back(',');
        text += format_sig17(row.estim_lhs);
        text.push_back(',');
        text += format_sig17(row.estim_rhs);
        text.push_back(',');
        text += format_sig17(row.cert_gap);
        text.push_back(',');
        text += std::to_string(row.event);
        text.push_back(',');
        text += row.converged ? '1' : '0';
        text += "\r\n";
    }
    return text;
}

inline ordered_json report_json(const ExperimentReport& rep) {
    ordered_json agg;
    agg["trials"] = rep.agg.trials;
    agg["flagged"] = rep.agg.flagged;
    agg["pred-violation-rate"] = rep.agg.pred_violation_rate;
    agg["estim-violation-rate"] = rep.agg.estim_violation_rate;
    agg["mean-pred-lhs"] = rep.agg.mean_pred_lhs;
    agg["expectation-pred-rhs"] = rep.agg.expectation_pred_rhs;
    agg["mean-estim-lhs"] = rep.agg.mean_estim_lhs;
    agg["expectation-estim-rhs"] = rep.agg.expectation_estim_rhs;
    agg["event-frequency"] = rep.agg.event_frequency;
    agg["column-norm-frequency"] = rep.agg.column_norm_frequency;
    agg["min-cert-gap"] = rep.agg.min_cert_gap;
    agg["tau-prime"] = rep.agg.tau_prime;
    agg["lambda"] = rep.agg.lambda;
    agg["mu4"] = rep.agg.mu4;
    agg["mu4-provenance"] = to_string(rep.agg.mu4_provenance);

    ordered_json rows = ordered_json::array();
    for (const TrialRow& row : rep.rows) {
        ordered_json r;
        r["trial"] = row.trial;
        r["pred-lhs"] = row.pred_lhs;
        r["pred-rhs"] = row.pred_rhs;
        r["estim-lhs"] = row.estim_lhs;
        r["estim-rhs"] = row.estim_rhs;
        r["cert-gap"] = row.cert_gap;
        r["event"] = row.event;
        r["converged"] = row.converged;
        rows.push_back(std::move(r));
    }

    ordered_json j;
    j["aggregates"] = std::move(agg);
    j["rows"] = std::move(rows);
    return j;
}

inline void emit_report(const ExperimentReport& rep, const std::string& path,
                        const std::string& format) {
    if (format == "csv") {
        write_text_file(path, report_csv(rep));
    } else if (format == "json") {
        write_text_file(path, report_json(rep).dump(2) + "\n");
    } else {
        throw usage_error("emit_report: format must be 'csv' or 'json'");
    }
}

}  // namespace pls

// Command-line interface: estimation, tuning, certification, and Monte
// Carlo experiment runners over penalized least squares.
//
// Exit codes: 0 success, 1 usage error, 2 invalid config, 3 numerical or
// output failure.

#include <cstdint>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pls/compat.hpp"
#include "pls/harness.hpp"
#include "pls/smallball.hpp"

namespace {

using namespace pls;

// --override-constant name=value pairs. Each subcommand consumes the
// names it understands; leftovers are a usage error so typos never pass
// silently.
struct Overrides {
    std::map<std::string, double> values;
    mutable std::set<std::string> consumed;

    double get(const std::string& name, double fallback) const {
        const auto it = values.find(name);
        if (it == values.end()) return fallback;
        consumed.insert(name);
        return it->second;
    }
    // Fail fast on names the chosen subcommand does not understand.
    void restrict_to(const std::set<std::string>& allowed) const {
        for (const auto& [name, value] : values) {
            (void)value;
            if (!allowed.count(name))
                throw usage_error("--override-constant: '" + name +
                                  "' is not a constant of this subcommand");
        }
    }
};

Overrides parse_overrides(const std::vector<std::string>& raw) {
    Overrides out;
    for (const std::string& item : raw) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
            throw usage_error("--override-constant expects name=value, got '" + item + "'");
        const std::string name = item.substr(0, eq);
        try {
            std::size_t used = 0;
            const double v = std::stod(item.substr(eq + 1), &used);
            if (used != item.size() - eq - 1) throw std::invalid_argument("trailing");
            out.values[name] = v;
        } catch (const std::exception&) {
            throw usage_error("--override-constant: non-numeric value in '" + item + "'");
        }
    }
    return out;
}

// Single-row key/value result document (tune, compat, smallball, width).
struct KvDoc {
    std::vector<std::pair<std::string, ordered_json>> fields;
    void add(const std::string& key, ordered_json v) { fields.push_back({key, std::move(v)}); }

    std::string csv() const {
        std::string header, row;
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) {
                header.push_back(',');
                row.push_back(',');
            }
            header += fields[i].first;
            const ordered_json& v = fields[i].second;
            if (v.is_number_float()) {
                row += format_sig17(v.get<double>());
            } else if (v.is_boolean()) {
                row += v.get<bool>() ? "1" : "0";
            } else if (v.is_string()) {
                row += v.get<std::string>();
            } else {
                row += v.dump();
            }
        }
        return header + "\r\n" + row + "\r\n";
    }
    ordered_json json() const {
        ordered_json j;
        for (const auto& [key, v] : fields) j[key] = v;
        return j;
    }
};

void write_or_print(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    try {
        write_text_file(out_path, text);
    } catch (const config_error& e) {
        // Output I/O failures are runtime failures, not config mistakes.
        throw numeric_error(e.what());
    }
}

void emit_kv(const KvDoc& doc, const std::string& out_path, const std::string& format) {
    if (format == "csv") {
        write_or_print(doc.csv(), out_path);
    } else if (format == "json") {
        write_or_print(doc.json().dump(2) + "\n", out_path);
    } else {
        throw usage_error("--format must be csv or json");
    }
}

void emit_experiment(const ExperimentReport& rep, const std::string& out_path,
                     const std::string& format) {
    std::string text;
    if (format == "csv") {
        text = report_csv(rep);
    } else if (format == "json") {
        text = report_json(rep).dump(2) + "\n";
    } else {
        throw usage_error("--format must be csv or json");
    }
    write_or_print(text, out_path);
    std::cerr << "wall-seconds: " << rep.agg.wall_seconds << "\n";
}

ExperimentConfig load_config(const std::string& path) {
    if (path.empty()) throw usage_error("--config is required for this subcommand");
    ordered_json j;
    try {
        j = ordered_json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("config: invalid JSON: ") + e.what());
    }
    return config_from_json(j);
}

Instance generate_from(const ExperimentConfig& cfg, std::uint64_t stream) {
    RngStream rng(cfg.seed, stream);
    InstanceSpec ispec;
    ispec.shape = config_shape(cfg);
    ispec.n = cfg.n;
    ispec.sparsity = cfg.s;
    ispec.signal_amplitude = cfg.signal_amplitude;
    ispec.sigma = cfg.sigma;
    ispec.orthonormalize = cfg.mu_source == MuSource::analytic_orthonormal;
    return generate_instance(ispec, rng);
}

int run_solve(const ExperimentConfig& cfg, const Overrides&, const std::string& out,
              const std::string& format) {
    Instance inst = generate_from(cfg, 1);
    RngStream rng(cfg.seed, 0);
    const double tau = pls::detail::tau_for_design(cfg, inst.design, rng);
    const double lambda = pls::detail::lambda_for_trial(cfg, tau);
    PenaltySpec pen{config_shape(cfg), lambda};

    SolveOptions opt;
    if (cfg.solver_max_iters) opt.max_iters = cfg.solver_max_iters;
    const SolveResult res = solve_penalized_ls(inst, pen, opt);

    Vec resid = apply_design(inst.design, res.beta_hat);
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] -= inst.f[i];
    Vec diff = res.beta_hat;
    axpy(-1.0, inst.beta_star, diff);

    if (format == "csv") {
        std::string text = "index,value\r\n";
        for (std::size_t j = 0; j < res.beta_hat.size(); ++j)
            text += std::to_string(j) + "," + format_sig17(res.beta_hat[j]) + "\r\n";
        write_or_print(text, out);
    } else if (format == "json") {
        ordered_json j;
        j["lambda"] = lambda;
        j["tau-prime"] = tau;
        j["objective"] = res.objective_value;
        j["iterations"] = res.iterations;
        j["converged"] = res.converged;
        j["certificate-slack"] = res.certificate_slack;
        j["pred-error"] = empirical_norm_sq(resid);
        j["estim-error"] = penalty_norm(pen, diff);
        j["beta-hat"] = res.beta_hat;
        write_or_print(j.dump(2) + "\n", out);
    } else {
        throw usage_error("--format must be csv or json");
    }

    if (!res.converged) {
        std::cerr << "solver did not converge within " << opt.max_iters << " iterations\n";
        return 3;
    }
    return 0;
}

int run_tune(const ExperimentConfig& cfg, const Overrides& ov, const std::string& out,
             const std::string& format) {
    KvDoc doc;
    if (cfg.lambda_rule == LambdaRule::random_design) {
        const double lambda =
            lambda_random_design(cfg.kind, config_shape(cfg), cfg.n, cfg.sigma, cfg.lambda_a);
        doc.add("tau-prime", lambda / 10.0);
        doc.add("lambda", lambda);
        doc.add("rule", "random-design");
    } else {
        Instance inst = generate_from(cfg, 0);
        RngStream rng(cfg.seed, 1);
        PhiMaxOptions phi_opt;
        phi_opt.restarts = static_cast<std::size_t>(ov.get("phi-restarts", 20.0));
        const TuningReport rep = tune_deterministic(inst.design, cfg.sigma, rng, phi_opt);
        doc.add("tau-prime", rep.tau_prime);
        doc.add("lambda", rep.lambda);
        doc.add("max-column-norm", rep.max_column_norm);
        doc.add("psi-frobenius", rep.psi_frobenius);
        doc.add("psi-spectral", rep.psi_spectral);
        doc.add("phi-max", rep.phi_max_value);
        doc.add("rule", rep.rule);
    }
    emit_kv(doc, out, format);
    return 0;
}

int run_compat(const ExperimentConfig& cfg, const Overrides& ov, const std::string& out,
               const std::string& format) {
    Instance inst = generate_from(cfg, 0);
    const double c0 = ov.get("c0", 4.0);
    PenaltySpec pen{config_shape(cfg), 0.0};
    const SupportProjector proj = support_of(pen, inst.beta_star, 1e-8);

    SearchBudget budget;
    budget.samples = static_cast<std::size_t>(ov.get("samples", 10000.0));
    RngStream rng(cfg.seed, 1);
    const CompatEstimate est = compatibility_factor(inst.design, ConeSpec{proj, c0, pen}, rng, budget);

    KvDoc doc;
    doc.add("lower", est.lower);
    doc.add("upper", est.upper);
    doc.add("infinite", est.infinite);
    doc.add("method", est.method);
    if (cfg.kind != PenaltyKind::nuclear) {
        std::vector<std::size_t> support;
        if (cfg.kind == PenaltyKind::l1) {
            for (std::size_t j = 0; j < inst.beta_star.size(); ++j)
                if (inst.beta_star[j] != 0.0) support.push_back(j);
        } else {
            const auto* gs = std::get_if<GroupedShape>(&inst.design.shape);
            for (std::size_t g = 0; g < gs->blocks.size(); ++g) {
                for (std::size_t j = gs->blocks[g].first; j < gs->blocks[g].second; ++j) {
                    if (inst.beta_star[j] != 0.0) {
                        support.push_back(g);
                        break;
                    }
                }
            }
        }
        RngStream re_rng(cfg.seed, 2);
        doc.add("re-constant", re_constant(inst.design, support, c0, cfg.kind, re_rng, budget));
    } else {
        doc.add("re-constant", std::numeric_limits<double>::quiet_NaN());
    }
    emit_kv(doc, out, format);
    return 0;
}

int run_smallball(const ExperimentConfig& cfg, const Overrides& ov, const std::string& out,
                  const std::string& format) {
    const DesignShape shape = config_shape(cfg);
    const std::size_t dim = shape_dim(shape);
    const std::size_t samples = cfg.trials;
    const std::size_t directions = static_cast<std::size_t>(ov.get("directions", 25.0));

    RngStream rng(cfg.seed, 0);
    const RowSampler sampler = gaussian_row_sampler(dim);
    const MomentRatio ratio = moment_ratio_L(sampler, dim, directions, samples, rng);

    SmallBallParams params = smallball_params_from_L(ratio.l_estimate);
    params.beta0 = ov.get("beta0", params.beta0);
    params.kappa0 = ov.get("kappa0", params.kappa0);
    validate_smallball_params(params);

    RngStream freq_rng(cfg.seed, 1);
    const double freq =
        estimate_small_ball(sampler, dim, params.beta0, directions, samples, freq_rng);

    ConeSection sec;
    sec.shape = shape;
    sec.kind = cfg.kind;
    sec.s = cfg.s;
    sec.c0 = ov.get("c0", 4.0);

    Instance inst = generate_from(cfg, 2);
    RngStream check_rng(cfg.seed, 3);
    const RestrictedLowerBound restricted = restricted_lower_bound_check(
        inst.design, sec, params,
        static_cast<std::size_t>(ov.get("restricted-samples", 300.0)), check_rng);

    KvDoc doc;
    doc.add("small-ball-frequency", freq);
    doc.add("l-estimate", ratio.l_estimate);
    doc.add("isotropy-deviation", ratio.isotropy_deviation);
    doc.add("beta0", params.beta0);
    doc.add("kappa0", params.kappa0);
    doc.add("threshold", restricted.threshold);
    doc.add("min-ratio", restricted.min_ratio);
    doc.add("restricted-pass", restricted.pass);
    doc.add("min-sample-size",
            min_sample_size(cfg.kind, cfg.s, sec.c0, params, shape,
                            ov.get("sample-constant", 1.0)));
    emit_kv(doc, out, format);
    return 0;
}

int run_width(const ExperimentConfig& cfg, const Overrides& ov, const std::string& out,
              const std::string& format) {
    ConeSection sec;
    sec.shape = config_shape(cfg);
    sec.kind = cfg.kind;
    sec.s = cfg.s;
    sec.c0 = ov.get("c0", 4.0);

    RngStream rng(cfg.seed, 0);
    const MonteCarloEstimate est = mean_width(rng, sec, cfg.trials);

    KvDoc doc;
    doc.add("mean", est.mean);
    doc.add("std-error", est.std_error);
    doc.add("trials", est.trials);
    doc.add("radius", sec.radius());
    emit_kv(doc, out, format);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"penalized least-squares estimation and verification toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_path, format = "csv";
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    std::vector<std::string> override_raw;

    app.add_option("--config", config_path, "JSON experiment config file");
    app.add_option("--seed", seed, "override the config seed");
    app.add_option("--out", out_path, "output file (default: stdout)");
    app.add_option("--format", format, "output format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--threads", threads, "override the config worker count");
    app.add_option("--override-constant", override_raw,
                   "override a named constant, e.g. c0=4 (repeatable)");

    const char* names[] = {"solve",     "tune",  "compat",  "smallball",
                           "width",     "coverage", "event-prob", "certify"};
    const char* descs[] = {
        "solve one generated instance and print the estimate",
        "compute the deviation-level tuning constants for a design",
        "estimate compatibility and restricted-eigenvalue constants",
        "estimate small-ball constants and sample-size conditions",
        "Monte Carlo mean width of a cone section",
        "coverage experiment for the error bounds",
        "frequency of the dual-norm tuning event",
        "first-order optimality certificates over random instances"};
    for (std::size_t i = 0; i < 8; ++i) app.add_subcommand(names[i], descs[i])->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // help/version exit clean; bad usage is 1
    }

    try {
        const Overrides overrides = parse_overrides(override_raw);
        const std::string sub = app.get_subcommands().at(0)->get_name();

        static const std::map<std::string, std::set<std::string>> allowed = {
            {"solve", {}},
            {"tune", {"phi-restarts"}},
            {"compat", {"c0", "samples"}},
            {"smallball",
             {"c0", "beta0", "kappa0", "directions", "restricted-samples", "sample-constant"}},
            {"width", {"c0"}},
            {"coverage", {}},
            {"event-prob", {}},
            {"certify", {"probes"}}};
        overrides.restrict_to(allowed.at(sub));

        ExperimentConfig cfg = load_config(config_path);
        if (app.count("--seed")) cfg.seed = seed;
        if (app.count("--threads")) {
            if (threads < 1) throw usage_error("--threads must be at least 1");
            cfg.threads = threads;
        }
        validate_config(cfg);

        int rc = 0;
        if (sub == "solve") {
            rc = run_solve(cfg, overrides, out_path, format);
        } else if (sub == "tune") {
            rc = run_tune(cfg, overrides, out_path, format);
        } else if (sub == "compat") {
            rc = run_compat(cfg, overrides, out_path, format);
        } else if (sub == "smallball") {
            rc = run_smallball(cfg, overrides, out_path, format);
        } else if (sub == "width") {
            rc = run_width(cfg, overrides, out_path, format);
        } else if (sub == "coverage") {
            emit_experiment(run_coverage(cfg), out_path, format);
        } else if (sub == "event-prob") {
            emit_experiment(run_event_probability(cfg), out_path, format);
        } else if (sub == "certify") {
            const auto probes = static_cast<std::size_t>(overrides.get("probes", 10.0));
            emit_experiment(run_certify(cfg, probes), out_path, format);
        }
        return rc;
    } catch (const usage_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

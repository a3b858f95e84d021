#include "msde/runner.hpp"

#include "msde/acceptance.hpp"
#include "msde/config.hpp"
#include "msde/rng.hpp"

#include <Eigen/Core>
#include <json.hpp>
#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace msde {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr std::uint64_t kPathPurpose = 0x70617468;  // "path"

struct Context {
    ExperimentConfig cfg;
    fs::path out;
    unsigned workers = 1;
    bool seed_overridden = false;
    std::vector<std::string> artifacts;
};

std::string num(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

json vec_json(const Eigen::Ref<const Vector>& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

void write_text(Context& ctx, const std::string& name, const std::string& body) {
    std::ofstream f(ctx.out / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (ctx.out / name).string());
    f << body;
    ctx.artifacts.push_back(name);
}

void write_json(Context& ctx, const std::string& name, const json& j) {
    write_text(ctx, name, j.dump(2) + "\n");
}

std::string path_csv(const SolutionPath& p) {
    std::ostringstream os;
    os << "step,t";
    for (int i = 0; i < p.dim(); ++i) os << ",X_" << i + 1;
    for (int i = 0; i < p.dim(); ++i) os << ",K_" << i + 1;
    os << ",totalvar\n";
    for (int k = 0; k <= p.steps(); ++k) {
        os << k << "," << num(p.grid.time(k));
        for (int i = 0; i < p.dim(); ++i) os << "," << num(p.X(i, k));
        for (int i = 0; i < p.dim(); ++i) os << "," << num(p.K(i, k));
        os << "," << num(p.total_variation[k]) << "\n";
    }
    return os.str();
}

json control_json(const Control& h) {
    json values = json::array();
    for (int j = 0; j < h.intervals(); ++j) values.push_back(vec_json(h.values.col(j)));
    return json{{"values", values}, {"intervals", h.intervals()}, {"horizon", h.grid.horizon}};
}

json grid_json(const ExperimentConfig& cfg) {
    return json{{"T", cfg.grid.horizon}, {"N", cfg.grid.steps}, {"M", cfg.control_intervals}};
}

json fit_json(const ExtrapolationFit& f) {
    return json{{"model", f.model == FitModel::Affine ? "affine" : "affine_log"},
                {"intercept", f.intercept},
                {"slope", f.slope},
                {"log_coefficient", f.log_coefficient},
                {"eps", f.eps},
                {"residuals", f.residuals},
                {"excluded_eps", f.excluded_eps}};
}

json rate_json(const RateResult& r, const ExperimentConfig& cfg) {
    return json{{"value", r.value},
                {"residual", r.residual},
                {"iterations", r.iterations},
                {"converged", r.converged},
                {"gradient_norm", r.gradient_norm},
                {"control", control_json(r.control)},
                {"grid", grid_json(cfg)},
                {"endpoint", vec_json(r.skeleton.X.col(r.skeleton.steps()))}};
}

MonteCarloOptions mc_options(const Context& ctx) {
    return MonteCarloOptions{ctx.cfg.grid, ctx.cfg.n_paths, ctx.cfg.seed, ctx.workers};
}

// ------------------------------------------------------------ subcommands

int cmd_check_ops(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const MonotonicityReport mono = verify_monotone(cfg.op, cfg.check_ops.samples, derive_seed(cfg.seed, 0, 1));
    const H2Report h2 = verify_h2(cfg.model, cfg.check_ops.samples, cfg.check_ops.radius, derive_seed(cfg.seed, 0, 2));
    json j;
    j["operator"] = {{"variant", to_string(cfg.op.variant())}, {"dim", cfg.op.dim()}};
    j["monotonicity"] = {{"pairs", mono.pairs}, {"min_inner", mono.min_inner}, {"passed", mono.passed}};
    if (!mono.passed) {
        j["monotonicity"]["witness"] = {{"x1", vec_json(mono.witness_x1)}, {"y1", vec_json(mono.witness_y1)},
                                        {"x2", vec_json(mono.witness_x2)}, {"y2", vec_json(mono.witness_y2)}};
    }
    const auto& k = cfg.model.constants();
    j["h2"] = {{"model", to_string(cfg.model.kind())},
               {"pairs", h2.pairs},
               {"radius", cfg.check_ops.radius},
               {"declared", {{"c_b", k.c_b}, {"c_sigma", k.c_sigma}, {"c_b_prime", k.c_b_prime}, {"n", k.growth_order}}},
               {"one_sided", h2.one_sided},
               {"sigma_lipschitz", h2.sigma_lipschitz},
               {"growth", h2.growth},
               {"one_sided_ok", h2.one_sided_ok},
               {"sigma_ok", h2.sigma_ok},
               {"growth_ok", h2.growth_ok}};
    const CepaConstants cc = cepa_constants(cfg.op, cfg.seed);
    j["cepa"] = {{"a", vec_json(cc.a)}, {"gamma", cc.gamma}, {"mu", cc.mu}};
    j["passed"] = mono.passed && h2.passed();
    write_json(ctx, "check_ops.json", j);
    std::cout << "monotonicity " << (mono.passed ? "pass" : "FAIL") << " (min inner " << mono.min_inner << "), H2 "
              << (h2.passed() ? "pass" : "FAIL") << "\n";
    return j["passed"].get<bool>() ? kExitOk : kExitFailure;
}

int cmd_simulate(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const int n = cfg.simulate.paths;
    std::vector<SolutionPath> paths;
    for (int i = 0; i < n; ++i) {
        const auto noise = BrownianPath::generate(cfg.grid, cfg.model.noise_dim(), derive_seed(cfg.seed, i, kPathPurpose));
        paths.push_back(simulate(cfg.model, cfg.op, cfg.x0, cfg.simulate.eps, cfg.grid, noise));
    }
    json reps = json::array();
    bool all = true;
    for (int i = 0; i < n; ++i) {
        std::ostringstream name;
        name << "path_" << std::setw(3) << std::setfill('0') << i << ".csv";
        write_text(ctx, name.str(), path_csv(paths[i]));
        const SolutionPath* companion = n > 1 ? &paths[(i + 1) % n] : nullptr;
        const auto r = check_solution_properties(paths[i], cfg.op, cfg.simulate.probe_count,
                                                 derive_seed(cfg.seed, i, 3), companion);
        all = all && r.passed();
        json pr = {{"path", i},
                   {"tolerance", r.tolerance},
                   {"probe_min_slack", r.probe_min_slack},
                   {"cepa_min_slack", r.cepa_min_slack},
                   {"probe_ok", r.probe_ok},
                   {"pair_ok", r.pair_ok},
                   {"cepa_ok", r.cepa_ok},
                   {"total_variation", paths[i].total_variation[paths[i].steps()]}};
        pr["pair_min_slack"] = companion ? json(r.pair_min_slack) : json(nullptr);
        reps.push_back(pr);
    }
    write_json(ctx, "properties.json", json{{"epsilon", cfg.simulate.eps},
                                            {"slack_constant", kPropertySlackConstant},
                                            {"paths", reps},
                                            {"passed", all}});
    std::cout << n << " path(s) simulated, solution properties " << (all ? "pass" : "FAIL") << "\n";
    return all ? kExitOk : kExitFailure;
}

int cmd_skeleton(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const Control h{TimeGrid{cfg.grid.horizon, cfg.control_intervals}, cfg.skeleton.control};
    const SolutionPath p = solve_skeleton(cfg.model, cfg.op, cfg.x0, h, cfg.grid);
    write_text(ctx, "skeleton.csv", path_csv(p));
    write_json(ctx, "skeleton.json", json{{"half_action", 0.5 * action_norm(h)},
                                          {"control", control_json(h)},
                                          {"grid", grid_json(cfg)},
                                          {"endpoint", vec_json(p.X.col(p.steps()))},
                                          {"total_variation", p.total_variation[p.steps()]}});
    std::cout << "skeleton endpoint " << p.X.col(p.steps()).transpose() << "\n";
    return kExitOk;
}

int cmd_rate(Context& ctx) {
    const auto& cfg = ctx.cfg;
    if (!cfg.rate.target) throw ConfigError("config error at 'options.rate.target': required by 'rate'", "options.rate.target", 0);
    const RateResult r = minimize_endpoint_rate(cfg.model, cfg.op, cfg.x0, *cfg.rate.target, cfg.grid.horizon, cfg.rate.options);
    write_json(ctx, "rate.json", rate_json(r, cfg));
    write_text(ctx, "rate_path.csv", path_csv(r.skeleton));
    std::cout << "I = " << num(r.value) << " residual " << r.residual << (r.converged ? "" : " (not converged)") << "\n";
    if (!r.converged) std::cerr << "warning: rate minimization did not converge\n";
    return kExitOk;
}

struct Reference {
    std::optional<double> rate;
    std::optional<RateResult> minimizer;
};

Reference reference_for(Context& ctx, EventSpec& ev) {
    const auto& cfg = ctx.cfg;
    Reference ref;
    auto endpoint_rate = [&](const Vector& target) {
        ref.minimizer = minimize_endpoint_rate(cfg.model, cfg.op, cfg.x0, target, cfg.grid.horizon, cfg.rate.options);
        ref.rate = ref.minimizer->value;
    };
    switch (ev.kind) {
        case EventKind::EndpointBeyondLevel: {
            Vector t = cfg.x0;
            if (!(ev.closed ? t[ev.component] >= ev.level : t[ev.component] > ev.level)) t[ev.component] = ev.level;
            endpoint_rate(t);
            break;
        }
        case EventKind::EndpointInBall: {
            const Vector rel = cfg.x0 - ev.center;
            const double dist = rel.norm();
            endpoint_rate(dist <= ev.radius ? Vector(cfg.x0) : Vector(ev.center + rel * (ev.radius / dist)));
            break;
        }
        case EventKind::TubeAroundPath:
            if (ctx.cfg.tube_reference == TubeReference::ZeroControl) {
                const Control h0 = Control::zero(TimeGrid{cfg.grid.horizon, cfg.control_intervals}, cfg.model.noise_dim());
                ev.reference = solve_skeleton(cfg.model, cfg.op, cfg.x0, h0, cfg.grid).X;
                ref.rate = 0.0;
            } else {
                if (!cfg.rate.target) {
                    throw ConfigError("config error at 'options.rate.target': required by a rate_minimizer tube",
                                      "options.rate.target", 0);
                }
                endpoint_rate(*cfg.rate.target);
                ev.reference = ref.minimizer->skeleton.X;
            }
            break;
        case EventKind::RunningMaxAboveLevel:
            break;
    }
    return ref;
}

int cmd_verify_ldp(Context& ctx) {
    const auto& cfg = ctx.cfg;
    if (!cfg.event) throw ConfigError("config error at 'event': required by 'verify-ldp'", "event", 0);
    if (cfg.eps_list.empty()) throw ConfigError("config error at 'eps_list': required by 'verify-ldp'", "eps_list", 0);
    EventSpec ev = *cfg.event;
    const Reference ref = reference_for(ctx, ev);
    const Control* tilt = cfg.verify.tilt && ref.minimizer ? &ref.minimizer->control : nullptr;
    const auto est = estimate_event(cfg.model, cfg.op, cfg.x0, cfg.eps_list, ev, mc_options(ctx), tilt);

    std::ostringstream csv;
    csv << "epsilon,p_hat,stderr,neg_eps_log_p,ess\n";
    for (const auto& e : est) {
        csv << num(e.epsilon) << "," << num(e.p_hat) << "," << num(e.std_error) << "," << num(e.neg_eps_log_p) << ","
            << num(e.ess) << "\n";
    }
    write_text(ctx, "estimates.csv", csv.str());

    json report;
    report["event"] = ev.id();
    report["tilted"] = tilt != nullptr;
    report["reference_rate"] = ref.rate ? json(*ref.rate) : json(nullptr);
    json degenerate = json::array();
    for (const auto& e : est) {
        if (e.degenerate) degenerate.push_back(e.epsilon);
    }
    report["degenerate_eps"] = degenerate;
    int code = kExitOk;
    try {
        const ExtrapolationFit fit = ldp_slope(est);
        report["intercept"] = fit.intercept;
        report["slope"] = fit.slope;
        report["residuals"] = fit.residuals;
        report["fit"] = fit_json(fit);
        std::cout << "intercept " << num(fit.intercept);
        if (ref.rate) std::cout << " vs reference rate " << num(*ref.rate);
        std::cout << "\n";
    } catch (const std::invalid_argument& e) {
        report["intercept"] = nullptr;
        report["fit_error"] = e.what();
        std::cerr << "error: " << e.what() << "\n";
        code = kExitFailure;
    }
    write_json(ctx, "report.json", report);
    return code;
}

int cmd_laplace(Context& ctx) {
    const auto& cfg = ctx.cfg;
    if (!cfg.functional) throw ConfigError("config error at 'functional': required by 'laplace'", "functional", 0);
    if (cfg.eps_list.empty()) throw ConfigError("config error at 'eps_list': required by 'laplace'", "eps_list", 0);
    std::vector<double> vals;
    std::ostringstream csv;
    csv << "epsilon,estimate\n";
    for (double e : cfg.eps_list) {
        vals.push_back(laplace_estimate(cfg.model, cfg.op, cfg.x0, e, *cfg.functional, mc_options(ctx)));
        csv << num(e) << "," << num(vals.back()) << "\n";
    }
    write_text(ctx, "laplace.csv", csv.str());
    const LaplaceCandidate cand =
        evaluate_laplace_candidate(cfg.model, cfg.op, cfg.x0, *cfg.functional, cfg.grid.horizon, cfg.rate.options);
    json report;
    report["functional"] = cfg.functional->id();
    report["candidate"] = {{"value", cand.value},
                           {"functional_value", cand.functional_value},
                           {"action", cand.action},
                           {"converged", cand.converged},
                           {"iterations", cand.iterations}};
    report["reference"] = -cand.value;
    int code = kExitOk;
    try {
        const ExtrapolationFit fit = fit_extrapolation(cfg.eps_list, vals);
        report["intercept"] = fit.intercept;
        report["slope"] = fit.slope;
        report["residuals"] = fit.residuals;
        std::cout << "intercept " << num(fit.intercept) << " vs -(inf g + I) = " << num(-cand.value) << "\n";
    } catch (const std::invalid_argument& e) {
        report["intercept"] = nullptr;
        report["fit_error"] = e.what();
        std::cerr << "error: " << e.what() << "\n";
        code = kExitFailure;
    }
    write_json(ctx, "report.json", report);
    return code;
}

int cmd_suite(Context& ctx) {
    AcceptanceOptions ao{ctx.cfg.seed, ctx.workers};
    json items = json::array();
    bool all = true;
    for (int id : ctx.cfg.suite.criteria) {
        json item = {{"id", id}};
        try {
            const CriterionResult r = run_criterion(id, ao);
            std::cout << format_result(r) << std::endl;
            json metrics = json::object();
            for (const auto& [k, v] : r.metrics) metrics[k] = v;
            item["name"] = r.name;
            item["passed"] = r.passed;
            item["metrics"] = metrics;
            item["notes"] = r.notes;
            all = all && r.passed;
        } catch (const std::exception& e) {
            std::cout << "[FAIL] " << id << ": error: " << e.what() << std::endl;
            item["passed"] = false;
            item["error"] = e.what();
            all = false;
        }
        items.push_back(item);
    }
    write_json(ctx, "summary.json", json{{"criteria", items}, {"all_passed", all}});
    return all ? kExitOk : kExitFailure;
}

void write_manifest(Context& ctx, const std::string& sub) {
    std::vector<std::string> arts = ctx.artifacts;
    std::sort(arts.begin(), arts.end());
    json m = {{"tool", "msde"},
              {"version", kVersion},
              {"subcommand", sub},
              {"config_sha256", sha256_hex(ctx.cfg.source)},
              {"seed", ctx.cfg.seed},
              {"seed_overridden", ctx.seed_overridden},
              {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)},
              {"artifacts", arts}};
    std::ofstream f(ctx.out / "manifest.json", std::ios::binary);
    f << m.dump(2) << "\n";
}

}  // namespace

const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names{"check-ops", "simulate", "skeleton", "rate", "verify-ldp", "laplace", "suite"};
    return names;
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 failed");
    }
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    return os.str();
}

int run_subcommand(const std::string& name, const RunOptions& opts) {
    Context ctx;
    try {
        ctx.cfg = load_config(opts.config_path);
        if (opts.seed_override) {
            ctx.cfg.seed = *opts.seed_override;
            ctx.cfg.rate.options.seed = *opts.seed_override;
            ctx.seed_overridden = true;
        }
        ctx.workers = std::max(1U, opts.workers);
        ctx.out = opts.out_dir ? fs::path(*opts.out_dir) : fs::path(ctx.cfg.output_dir);
        fs::create_directories(ctx.out);

        int code = kExitFailure;
        if (name == "check-ops") {
            code = cmd_check_ops(ctx);
        } else if (name == "simulate") {
            code = cmd_simulate(ctx);
        } else if (name == "skeleton") {
            code = cmd_skeleton(ctx);
        } else if (name == "rate") {
            code = cmd_rate(ctx);
        } else if (name == "verify-ldp") {
            code = cmd_verify_ldp(ctx);
        } else if (name == "laplace") {
            code = cmd_laplace(ctx);
        } else if (name == "suite") {
            code = cmd_suite(ctx);
        } else {
            std::cerr << "error: unknown subcommand '" << name << "'\n";
            return kExitConfig;
        }
        write_manifest(ctx, name);
        return code;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitFailure;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid configuration: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace msde

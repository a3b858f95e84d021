#include "msde/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace msde {

namespace {

using json = nlohmann::json;

int line_at(std::string_view text, std::size_t pos) {
    pos = std::min(pos, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

// Best-effort source line of a dotted key path: each segment is searched for
// as a quoted key after the previous one.
int line_of(std::string_view text, const std::string& path) {
    std::size_t pos = 0;
    std::size_t found = std::string::npos;
    std::stringstream ss(path);
    std::string seg;
    while (std::getline(ss, seg, '.')) {
        const auto br = seg.find('[');
        if (br != std::string::npos) seg = seg.substr(0, br);
        if (seg.empty()) continue;
        const auto at = text.find("\"" + seg + "\"", pos);
        if (at == std::string_view::npos) break;
        found = at;
        pos = at + seg.size() + 2;
    }
    return found == std::string::npos ? 0 : line_at(text, found);
}

class Node {
public:
    Node(const json& j, std::string path, std::string_view text) : j_(j), path_(std::move(path)), text_(text) {}

    [[noreturn]] void fail(const std::string& msg, const std::string& key = {}) const {
        const std::string p = key.empty() ? path_ : join(key);
        const int line = line_of(text_, p);
        std::string what = "config error at '" + p + "'";
        if (line > 0) what += " (line " + std::to_string(line) + ")";
        throw ConfigError(what + ": " + msg, p, line);
    }

    std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) {
        allowed_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    Node child(const std::string& key) {
        allowed_.insert(key);
        if (!j_.contains(key)) fail("missing required key", key);
        const json& c = j_.at(key);
        if (!c.is_object()) fail("expected an object", key);
        return Node(c, join(key), text_);
    }

    const json& raw(const std::string& key) {
        allowed_.insert(key);
        if (!j_.contains(key)) fail("missing required key", key);
        return j_.at(key);
    }

    double number(const std::string& key, std::optional<double> def = std::nullopt) {
        if (!has(key)) {
            if (def) return *def;
            fail("missing required key", key);
        }
        const json& v = j_.at(key);
        if (!v.is_number()) fail("expected a number", key);
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail("expected a finite number", key);
        return x;
    }

    long long integer(const std::string& key, std::optional<long long> def = std::nullopt) {
        if (!has(key)) {
            if (def) return *def;
            fail("missing required key", key);
        }
        const json& v = j_.at(key);
        if (!v.is_number_integer()) fail("expected an integer", key);
        return v.get<long long>();
    }

    std::uint64_t unsigned_integer(const std::string& key) {
        if (!has(key)) fail("missing required key", key);
        const json& v = j_.at(key);
        if (!v.is_number_unsigned()) fail("expected a non-negative integer", key);
        return v.get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool def) {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_boolean()) fail("expected true or false", key);
        return v.get<bool>();
    }

    std::string string(const std::string& key, std::optional<std::string> def = std::nullopt) {
        if (!has(key)) {
            if (def) return *def;
            fail("missing required key", key);
        }
        const json& v = j_.at(key);
        if (!v.is_string()) fail("expected a string", key);
        return v.get<std::string>();
    }

    /// Array of numbers; null entries become `null_value` when given.
    Vector vector(const std::string& key, std::optional<double> null_value = std::nullopt) {
        const json& v = raw(key);
        if (!v.is_array() || v.empty()) fail("expected a non-empty array of numbers", key);
        Vector out(static_cast<Eigen::Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i].is_null() && null_value) {
                out[static_cast<Eigen::Index>(i)] = *null_value;
            } else if (v[i].is_number() && std::isfinite(v[i].get<double>())) {
                out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
            } else {
                fail("entry " + std::to_string(i) + " is not a finite number", key);
            }
        }
        return out;
    }

    /// Array of equal-length numeric rows.
    Matrix matrix(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_array() || v.empty() || !v[0].is_array() || v[0].empty()) fail("expected an array of rows", key);
        const std::size_t cols = v[0].size();
        Matrix out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
        for (std::size_t r = 0; r < v.size(); ++r) {
            if (!v[r].is_array() || v[r].size() != cols) fail("rows must have equal length", key);
            for (std::size_t c = 0; c < cols; ++c) {
                if (!v[r][c].is_number()) fail("matrix entries must be numbers", key);
                out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r][c].get<double>();
            }
        }
        if (!out.allFinite()) fail("matrix entries must be finite", key);
        return out;
    }

    std::vector<Node> array_of_objects(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_array() || v.empty()) fail("expected a non-empty array", key);
        std::vector<Node> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_object()) fail("entry " + std::to_string(i) + " must be an object", key);
            out.emplace_back(v[i], join(key) + "[" + std::to_string(i) + "]", text_);
        }
        return out;
    }

    /// Rejects keys that were never asked for.
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!allowed_.contains(it.key())) fail("unknown key", it.key());
        }
    }

    const std::string& path() const noexcept { return path_; }

private:
    const json& j_;
    std::string path_;
    std::string_view text_;
    std::set<std::string> allowed_;
};

template <typename F>
auto guarded(Node& n, const std::string& key, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        n.fail(e.what(), key);
    }
}

Model parse_model(Node n) {
    const std::string name = n.string("name");
    const int dim = static_cast<int>(n.integer("dim", 1));
    const int noise_dim = static_cast<int>(n.integer("noise_dim", -1));
    if (dim < 1) n.fail("must be >= 1", "dim");
    if (noise_dim != -1 && noise_dim < 1) n.fail("must be >= 1", "noise_dim");
    double lambda = 1.0;
    double c = 0.5;
    double clip = 10.0;
    if (n.has("params")) {
        Node p = n.child("params");
        if (name == "ou" || name == "statedep") lambda = p.number("lambda", name == "ou" ? 1.0 : 0.0);
        if (name == "statedep") {
            c = p.number("c", 0.5);
            clip = p.number("clip", 10.0);
        }
        p.finish();
    } else if (name == "statedep") {
        lambda = 0.0;
    }
    Model m = guarded(n, "name", [&]() -> Model {
        if (name == "brownian") return Model::brownian(dim, noise_dim);
        if (name == "ou") return Model::ornstein_uhlenbeck(lambda, dim, noise_dim);
        if (name == "doublewell") {
            if (dim != 1) throw std::invalid_argument("doublewell is one-dimensional");
            return Model::double_well(noise_dim == -1 ? 1 : noise_dim);
        }
        if (name == "statedep") return Model::state_dependent(c, dim, noise_dim, clip, lambda);
        throw std::invalid_argument("unknown model '" + name + "' (brownian, ou, doublewell, statedep)");
    });
    if (n.has("constants")) {
        Node k = n.child("constants");
        ModelConstants mc = m.constants();
        mc.c_b = k.number("c_b", mc.c_b);
        mc.c_sigma = k.number("c_sigma", mc.c_sigma);
        mc.c_b_prime = k.number("c_b_prime", mc.c_b_prime);
        mc.growth_order = static_cast<int>(k.integer("n", mc.growth_order));
        k.finish();
        m = m.with_constants(mc);
    }
    n.finish();
    return m;
}

ConvexDomain parse_domain(Node n, int dim) {
    const std::string kind = n.string("kind");
    ConvexDomain d = ConvexDomain::whole_space(dim);
    if (kind == "whole_space") {
        if (n.has("params")) n.child("params").finish();
        n.finish();
        return d;
    }
    Node p = n.child("params");
    std::optional<Vector> interior;
    if (p.has("interior")) interior = p.vector("interior");
    d = guarded(n, "params", [&]() -> ConvexDomain {
        if (kind == "half_space") {
            Vector normal = p.vector("normal");
            const double offset = p.number("offset");
            return ConvexDomain::half_space(std::move(normal), offset, interior);
        }
        if (kind == "box") {
            Vector lo = p.vector("lower", -std::numeric_limits<double>::infinity());
            Vector hi = p.vector("upper", std::numeric_limits<double>::infinity());
            return ConvexDomain::box(std::move(lo), std::move(hi), interior);
        }
        if (kind == "ball") {
            Vector c = p.vector("center");
            const double r = p.number("radius");
            return ConvexDomain::ball(std::move(c), r, interior);
        }
        if (kind == "polytope") {
            std::vector<HalfSpace> faces;
            for (Node f : p.array_of_objects("faces")) {
                faces.push_back(HalfSpace{f.vector("normal"), f.number("offset")});
                f.finish();
            }
            if (!interior) p.fail("polytopes need an explicit interior point", "interior");
            DykstraOptions dk;
            if (p.has("dykstra")) {
                Node o = p.child("dykstra");
                dk.tolerance = o.number("tolerance", dk.tolerance);
                dk.max_sweeps = static_cast<int>(o.integer("max_sweeps", dk.max_sweeps));
                o.finish();
            }
            return ConvexDomain::polytope(std::move(faces), *interior, dk);
        }
        throw std::invalid_argument("unknown domain kind '" + kind + "' (whole_space, half_space, box, ball, polytope)");
    });
    p.finish();
    n.finish();
    if (d.dim() != dim) n.fail("domain dimension " + std::to_string(d.dim()) + " differs from model dimension " + std::to_string(dim));
    return d;
}

FilledGraph parse_graph(Node& p) {
    std::vector<GraphBreakpoint> pts;
    for (Node b : p.array_of_objects("breakpoints")) {
        GraphBreakpoint g;
        g.at = b.number("at");
        g.lo = b.number("lo");
        g.hi = b.number("hi", g.lo);
        b.finish();
        pts.push_back(g);
    }
    return guarded(p, "breakpoints", [&] { return FilledGraph(std::move(pts)); });
}

MonotoneOperator parse_operator(std::optional<Node> opn, std::optional<ConvexDomain> domain, int dim) {
    auto whole = [&] { return domain ? *domain : ConvexDomain::whole_space(dim); };
    if (!opn) return MonotoneOperator::indicator(whole());
    Node n = *opn;
    const std::string variant = n.string("variant", std::string("indicator"));
    std::optional<MonotoneOperator> out;
    if (variant == "indicator") {
        if (n.has("params")) n.child("params").finish();
        out = MonotoneOperator::indicator(whole());
    } else if (variant == "graph" || variant == "sum") {
        Node p = n.child("params");
        const std::string base = variant == "graph" ? "graph" : p.string("base", std::string("indicator"));
        if (base != "graph" && base != "indicator") p.fail("expected 'indicator' or 'graph'", "base");
        if (base == "graph" && dim != 1) n.fail("graph operators are one-dimensional");
        if (base == "graph" && domain) n.fail("a graph operator cannot be combined with a domain");
        MonotoneOperator::Base b = base == "graph" ? MonotoneOperator::Base(parse_graph(p)) : MonotoneOperator::Base(whole());
        if (variant == "graph") {
            out = MonotoneOperator::graph(std::get<FilledGraph>(b));
        } else {
            AffineMonotoneMap L{p.matrix("matrix"), Vector::Zero(dim)};
            if (p.has("offset")) L.offset = p.vector("offset");
            out = guarded(p, "matrix", [&] { return MonotoneOperator::sum(std::move(b), std::move(L)); });
        }
        p.finish();
    } else {
        n.fail("unknown operator variant '" + variant + "' (indicator, graph, sum)", "variant");
    }
    n.finish();
    return *out;
}

EventSpec parse_event(Node n, int dim, TubeReference& ref) {
    const std::string kind = n.string("kind");
    const bool closed = n.boolean("closed", true);
    EventSpec e;
    if (kind == "endpoint_beyond_level" || kind == "running_max_above") {
        const int comp = static_cast<int>(n.integer("component", 0));
        if (comp < 0 || comp >= dim) n.fail("component out of range", "component");
        const double level = n.number("level");
        e = kind == "endpoint_beyond_level" ? EventSpec::endpoint_beyond_level(comp, level, closed)
                                            : EventSpec::running_max_above(comp, level, closed);
    } else if (kind == "endpoint_in_ball") {
        Vector c = n.vector("center");
        if (c.size() != dim) n.fail("dimension differs from the model", "center");
        const double r = n.number("radius");
        e = guarded(n, "radius", [&] { return EventSpec::endpoint_in_ball(std::move(c), r, closed); });
    } else if (kind == "tube") {
        const double r = n.number("radius");
        if (!(r > 0.0)) n.fail("must be positive", "radius");
        const std::string rs = n.string("reference", std::string("zero_control"));
        if (rs == "zero_control") {
            ref = TubeReference::ZeroControl;
        } else if (rs == "rate_minimizer") {
            ref = TubeReference::RateMinimizer;
        } else {
            n.fail("expected 'zero_control' or 'rate_minimizer'", "reference");
        }
        e.kind = EventKind::TubeAroundPath;
        e.radius = r;
        e.closed = closed;
    } else {
        n.fail("unknown event kind '" + kind + "' (endpoint_beyond_level, endpoint_in_ball, tube, running_max_above)",
               "kind");
    }
    n.finish();
    return e;
}

PathFunctional parse_functional(Node n, int dim) {
    const std::string id = n.string("id");
    PathFunctional g;
    if (id == "zero") {
        g = PathFunctional::zero();
    } else if (id == "constant") {
        g = PathFunctional::constant_value(n.number("value"));
    } else if (id == "endpoint_distance_cap") {
        Vector t = n.vector("target");
        if (t.size() != dim) n.fail("dimension differs from the model", "target");
        const double cap = n.number("cap", 1.0);
        g = guarded(n, "cap", [&] { return PathFunctional::endpoint_distance_cap(std::move(t), cap); });
    } else if (id == "running_max_cap") {
        const int comp = static_cast<int>(n.integer("component", 0));
        if (comp < 0 || comp >= dim) n.fail("component out of range", "component");
        const double level = n.number("level");
        const double cap = n.number("cap", 1.0);
        g = guarded(n, "cap", [&] { return PathFunctional::running_max_cap(comp, level, cap); });
    } else {
        n.fail("unknown functional '" + id + "' (zero, constant, endpoint_distance_cap, running_max_cap)", "id");
    }
    n.finish();
    return g;
}

void parse_options(Node n, ExperimentConfig& cfg) {
    const int dim = cfg.model.dim();
    const int d = cfg.model.noise_dim();
    if (n.has("simulate")) {
        Node s = n.child("simulate");
        cfg.simulate.eps = s.number("eps", 1.0);
        if (!(cfg.simulate.eps > 0.0 && cfg.simulate.eps <= 1.0)) s.fail("must be in (0, 1]", "eps");
        cfg.simulate.paths = static_cast<int>(s.integer("paths", 1));
        if (cfg.simulate.paths < 1) s.fail("must be >= 1", "paths");
        cfg.simulate.probe_count = static_cast<int>(s.integer("probe_count", 16));
        if (cfg.simulate.probe_count < 0) s.fail("must be >= 0", "probe_count");
        s.finish();
    }
    cfg.skeleton.control = Matrix::Zero(d, cfg.control_intervals);
    if (n.has("skeleton")) {
        Node s = n.child("skeleton");
        const bool has_c = s.has("constant");
        const bool has_v = s.has("values");
        if (has_c && has_v) s.fail("give either 'constant' or 'values'");
        if (has_c) {
            const Vector c = s.vector("constant");
            if (c.size() != d) s.fail("length must equal the noise dimension", "constant");
            for (int j = 0; j < cfg.control_intervals; ++j) cfg.skeleton.control.col(j) = c;
        }
        if (has_v) {
            // one row per control interval, each a d-vector
            const Matrix v = s.matrix("values");
            if (v.rows() != cfg.control_intervals || v.cols() != d) {
                s.fail("expected " + std::to_string(cfg.control_intervals) + " rows of length " + std::to_string(d), "values");
            }
            cfg.skeleton.control = v.transpose();
        }
        s.finish();
    }
    auto& ro = cfg.rate.options;
    ro.control_intervals = cfg.control_intervals;
    ro.steps = cfg.grid.steps;
    ro.seed = cfg.seed;
    if (n.has("rate")) {
        Node r = n.child("rate");
        if (r.has("target")) {
            Vector t = r.vector("target");
            if (t.size() != dim) r.fail("dimension differs from the model", "target");
            cfg.rate.target = std::move(t);
        }
        ro.restarts = static_cast<int>(r.integer("restarts", ro.restarts));
        if (ro.restarts < 0) r.fail("must be >= 0", "restarts");
        ro.restart_scale = r.number("restart_scale", ro.restart_scale);
        ro.tol = r.number("tol", ro.tol);
        ro.resid = r.number("resid", ro.resid);
        ro.max_iterations = static_cast<int>(r.integer("max_iterations", ro.max_iterations));
        ro.multiplier_updates = static_cast<int>(r.integer("multiplier_updates", ro.multiplier_updates));
        if (r.has("penalties")) {
            const Vector p = r.vector("penalties");
            ro.penalties.assign(p.data(), p.data() + p.size());
            for (double x : ro.penalties) {
                if (!(x > 0.0)) r.fail("penalties must be positive", "penalties");
            }
        }
        const std::string g = r.string("gradient", std::string("fd"));
        if (g == "fd") {
            ro.gradient = GradientMethod::FiniteDifference;
        } else if (g == "adjoint") {
            ro.gradient = GradientMethod::Adjoint;
        } else {
            r.fail("expected 'fd' or 'adjoint'", "gradient");
        }
        r.finish();
    }
    if (n.has("verify_ldp")) {
        Node v = n.child("verify_ldp");
        const std::string t = v.string("tilt", std::string("optimal"));
        if (t != "optimal" && t != "none") v.fail("expected 'optimal' or 'none'", "tilt");
        cfg.verify.tilt = t == "optimal";
        v.finish();
    }
    if (n.has("check_ops")) {
        Node c = n.child("check_ops");
        cfg.check_ops.samples = static_cast<long>(c.integer("samples", cfg.check_ops.samples));
        if (cfg.check_ops.samples < 1) c.fail("must be >= 1", "samples");
        cfg.check_ops.radius = c.number("radius", cfg.check_ops.radius);
        if (!(cfg.check_ops.radius > 0.0)) c.fail("must be positive", "radius");
        c.finish();
    }
    if (n.has("suite")) {
        Node s = n.child("suite");
        if (s.has("criteria")) {
            const json& arr = s.raw("criteria");
            if (!arr.is_array() || arr.empty()) s.fail("expected a non-empty array of integers", "criteria");
            cfg.suite.criteria.clear();
            for (const auto& v : arr) {
                if (!v.is_number_integer() || v.get<int>() < 1 || v.get<int>() > 9) {
                    s.fail("criteria are integers in 1..9", "criteria");
                }
                cfg.suite.criteria.push_back(v.get<int>());
            }
        }
        s.finish();
    }
    n.finish();
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
    json j;
    try {
        j = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        const int line = line_at(text, e.byte == 0 ? 0 : e.byte - 1);
        throw ConfigError("config parse error at line " + std::to_string(line) + ": " + e.what(), "", line);
    }
    if (!j.is_object()) throw ConfigError("config error: top level must be an object", "", 1);

    ExperimentConfig cfg;
    cfg.source = std::string(text);
    Node root(j, "", text);
    cfg.seed = root.unsigned_integer("seed");
    cfg.output_dir = root.string("output_dir", std::string("out"));

    cfg.model = parse_model(root.child("model"));
    const int dim = cfg.model.dim();

    std::optional<ConvexDomain> domain;
    if (root.has("domain")) domain = parse_domain(root.child("domain"), dim);
    std::optional<Node> opn;
    if (root.has("operator")) opn.emplace(root.child("operator"));
    cfg.op = parse_operator(opn, domain, dim);
    if (cfg.op.dim() != dim) root.fail("operator dimension differs from the model", "operator");

    if (root.has("grid")) {
        Node g = root.child("grid");
        const double T = g.number("T", 1.0);
        const long long N = g.integer("N", 512);
        const long long M = g.integer("M", 32);
        if (!(T > 0.0)) g.fail("must be positive", "T");
        if (N < 1 || N > 100'000'000) g.fail("must be in [1, 1e8]", "N");
        if (M < 1 || N % M != 0) g.fail("must be >= 1 and divide N", "M");
        cfg.grid = TimeGrid{T, static_cast<int>(N)};
        cfg.control_intervals = static_cast<int>(M);
        g.finish();
    }

    cfg.x0 = Vector::Zero(dim);
    if (root.has("x0")) {
        cfg.x0 = root.vector("x0");
        if (cfg.x0.size() != dim) root.fail("dimension differs from the model", "x0");
    }
    if (!cfg.op.in_domain_closure(cfg.x0)) root.fail("initial point is outside the domain", "x0");

    if (root.has("eps_list")) {
        const Vector e = root.vector("eps_list");
        for (double x : e) {
            if (!(x > 0.0 && x <= 1.0)) root.fail("every eps must be in (0, 1]", "eps_list");
        }
        cfg.eps_list.assign(e.data(), e.data() + e.size());
    }
    cfg.n_paths = static_cast<long>(root.integer("n_paths", 1000));
    if (cfg.n_paths < 1) root.fail("must be >= 1", "n_paths");

    if (root.has("event")) cfg.event = parse_event(root.child("event"), dim, cfg.tube_reference);
    if (root.has("functional")) cfg.functional = parse_functional(root.child("functional"), dim);

    if (root.has("options")) {
        parse_options(root.child("options"), cfg);
    } else {
        json empty = json::object();
        parse_options(Node(empty, "options", text), cfg);
    }
    root.finish();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path + "'", "", 0);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace msde

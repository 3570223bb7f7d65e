#include "sdbc/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace sdbc {

json default_config() {
    return json::parse(R"({
  "geometry": {"kind": "interval", "a": 0.0, "b": 1.0, "radius": 1.0,
               "control": [0.2, 0.8], "g1": [0.3, 0.7]},
  "mesh": {"n": 33, "n_theta": 0},
  "time": {"T": 1.0, "n_t": 20},
  "coefficients": {"preset": "zero", "a1": 0.0, "a2": 0.0, "b1": 0.0, "b2": 0.0, "B": [0.0, 0.0],
                   "B_gamma": 0.0, "diffusion": 1.0, "surface_diffusion": 1.0, "shear": 0.0},
  "noise": {"backend": "tree", "recombining": true, "paths": 200, "seed": 1},
  "initial": {"kind": "eigenfunction", "mode": 1, "amplitude": 1.0, "n_random": 4, "n_eigen": 4},
  "terminal": {"kind": "eigenfunction", "mode": 1, "amplitude": 1.0, "w_poly": [1.0]},
  "weights": {"mu": 2.0, "lambda": 2.0, "C": 1.0, "lambda_multipliers": [2.0, 4.0, 8.0, 16.0], "clamp": 0.0},
  "control": {"method": "cg", "eps": [0.1, 0.01, 0.001, 0.0001], "cg_tolerance": 1e-10, "max_iterations": 500,
              "C": [0.5, 1.0, 2.0, 4.0], "threshold": 0.01, "optimality_tolerance": 1e-8, "aux_eps": 0.01,
              "aux_max_weight_decades": 12.0},
  "verify": {"T_list": [0.2, 0.4, 0.8], "dt": 0.0125, "power_iterations": 50, "refine_modes": 8,
             "slice": false, "adjoint_mode": true, "transpose_check": true, "fault": 1e-3,
             "carleman_spread": 10.0, "observability_r2": 0.9, "duality_tolerance": 1e-10,
             "fault_floor": 1e-6,
             "sources": {"F0": 0.0, "F1": 0.0, "F0_gamma": 0.0, "F1_gamma": 0.0, "F": [0.0, 0.0]}},
  "solver": {"linear": "ldlt", "allow_unstable": false, "cg_tolerance": 1e-12, "cg_max_iterations": 10000},
  "output": {"binary_trajectory": false}
})");
}

namespace {

const std::set<std::string>& field_keys() {
    static const std::set<std::string> keys{"coefficients.a1", "coefficients.a2", "coefficients.b1",
                                            "coefficients.b2", "coefficients.B[0]", "coefficients.B[1]",
                                            "verify.sources.F0", "verify.sources.F1",
                                            "verify.sources.F0_gamma", "verify.sources.F1_gamma",
                                            "verify.sources.F[0]", "verify.sources.F[1]"};
    return keys;
}

std::string type_name(const json& v) {
    if (v.is_number()) return "number";
    return v.type_name();
}

bool same_kind(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) {
        // an integer default rejects fractional values
        if (a.is_number_integer() && !b.is_number_integer()) return false;
        return true;
    }
    return a.type() == b.type();
}

void merge_into(json& base, const json& user, const std::string& path) {
    if (base.is_object()) {
        if (!user.is_object()) throw SchemaError(path, "expected an object, got " + type_name(user));
        for (auto it = user.begin(); it != user.end(); ++it) {
            const std::string key = path.empty() ? it.key() : path + "." + it.key();
            if (!base.contains(it.key())) throw SchemaError(key, "unknown key");
            merge_into(base[it.key()], it.value(), key);
        }
        return;
    }
    if (field_keys().count(path) && (user.is_number() || user.is_array())) {
        base = user;
        return;
    }
    if (base.is_array()) {
        if (!user.is_array()) throw SchemaError(path, "expected an array, got " + type_name(user));
        if (path == "coefficients.B" || path == "verify.sources.F") {
            if (user.size() != 2) throw SchemaError(path, "expected two components");
            for (std::size_t i = 0; i < 2; ++i) merge_into(base[i], user[i], path + "[" + std::to_string(i) + "]");
            return;
        }
        const json& proto = base.empty() ? json(0.0) : base.front();
        for (std::size_t i = 0; i < user.size(); ++i)
            if (!same_kind(proto, user[i]))
                throw SchemaError(path + "[" + std::to_string(i) + "]", "expected " + type_name(proto));
        base = user;
        return;
    }
    if (!same_kind(base, user))
        throw SchemaError(path, "expected " + std::string(base.is_number_integer() ? "integer" : type_name(base)) +
                                    ", got " + type_name(user));
    base = user;
}

void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw SchemaError(key, what);
}

}  // namespace

json merge_config(const json& defaults, const json& user) {
    json out = defaults;
    merge_into(out, user, "");
    return out;
}

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw SchemaError("", "override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json patch = value;
    std::string rest = key;
    std::vector<std::string> parts;
    std::size_t pos;
    while ((pos = rest.find('.')) != std::string::npos) {
        parts.push_back(rest.substr(0, pos));
        rest = rest.substr(pos + 1);
    }
    parts.push_back(rest);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
        if (it->empty()) throw SchemaError(key, "empty path component");
        json wrap = json::object();
        wrap[*it] = patch;
        patch = wrap;
    }
    merge_into(config, patch, "");
}

void check_ranges(const json& c) {
    const auto& g = c["geometry"];
    const std::string kind = g["kind"];
    require(kind == "interval" || kind == "disk", "geometry.kind", "must be \"interval\" or \"disk\"");
    require(g["control"].size() == 2, "geometry.control", "expected [lo, hi]");
    require(g["g1"].size() == 2, "geometry.g1", "expected [lo, hi]");
    require(c["mesh"]["n"].get<int>() >= 3, "mesh.n", "must be at least 3");
    require(c["mesh"]["n_theta"].get<int>() >= 0, "mesh.n_theta", "must be non-negative");
    require(c["time"]["T"].get<double>() > 0.0, "time.T", "must be positive");
    require(c["time"]["n_t"].get<int>() >= 1, "time.n_t", "must be at least 1");
    const std::string backend = c["noise"]["backend"];
    require(backend == "tree" || backend == "mc", "noise.backend", "must be \"tree\" or \"mc\"");
    require(c["noise"]["paths"].get<int>() >= 1, "noise.paths", "must be at least 1");
    const json& seed = c["noise"]["seed"];
    require(seed.is_number_unsigned() || seed.get<std::int64_t>() >= 0, "noise.seed", "must be non-negative");
    const std::string preset = c["coefficients"]["preset"];
    require(preset == "zero" || preset == "constant" || preset == "shear-convection" || preset == "table",
            "coefficients.preset", "must be one of zero, constant, shear-convection, table");
    for (const char* k : {"initial", "terminal"}) {
        const std::string ik = c[k]["kind"];
        require(ik == "eigenfunction" || ik == "constant" || ik == "random" || ik == "zero",
                std::string(k) + ".kind", "must be one of eigenfunction, constant, random, zero");
        require(c[k]["mode"].get<int>() >= 0, std::string(k) + ".mode", "must be non-negative");
    }
    require(c["weights"]["mu"].get<double>() > 1.0, "weights.mu", "must exceed 1");
    require(c["weights"]["lambda"].get<double>() > 1.0, "weights.lambda", "must exceed 1");
    const std::string method = c["control"]["method"];
    require(method == "cg" || method == "picard", "control.method", "must be \"cg\" or \"picard\"");
    for (const auto& e : c["control"]["eps"]) require(e.get<double>() > 0.0, "control.eps", "entries must be positive");
    require(!c["control"]["eps"].empty(), "control.eps", "must not be empty");
    require(c["control"]["aux_max_weight_decades"].get<double>() > 0.0, "control.aux_max_weight_decades", "must be positive");
    require(c["control"]["aux_eps"].get<double>() > 0.0, "control.aux_eps", "must be positive");
    for (const auto& T : c["verify"]["T_list"]) require(T.get<double>() > 0.0, "verify.T_list", "entries must be positive");
    require(c["verify"]["dt"].get<double>() > 0.0, "verify.dt", "must be positive");
    const std::string lin = c["solver"]["linear"];
    require(lin == "ldlt" || lin == "cg", "solver.linear", "must be \"ldlt\" or \"cg\"");
    const auto& co = c["coefficients"];
    for (const char* k : {"a1", "a2", "b1", "b2"}) scalar_field(co[k], std::string("coefficients.") + k);
    scalar_field(co["B"][0], "coefficients.B[0]");
    scalar_field(co["B"][1], "coefficients.B[1]");
    const auto& src = c["verify"]["sources"];
    for (const char* k : {"F0", "F1", "F0_gamma", "F1_gamma"}) scalar_field(src[k], std::string("verify.sources.") + k);
    scalar_field(src["F"][0], "verify.sources.F[0]");
    scalar_field(src["F"][1], "verify.sources.F[1]");
}

json resolve_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides,
                    std::optional<std::uint64_t> seed) {
    json config = default_config();
    if (path) {
        std::ifstream in(*path);
        if (!in) throw SchemaError("", "cannot open config file '" + *path + "'");
        json user;
        try {
            user = json::parse(in);
        } catch (const json::parse_error& e) {
            throw SchemaError("", std::string("config is not valid JSON: ") + e.what());
        }
        merge_into(config, user, "");
    }
    for (const auto& o : overrides) apply_override(config, o);
    if (seed) config["noise"]["seed"] = *seed;
    check_ranges(config);
    return config;
}

std::string config_hash(const json& config) {
    const std::string s = config.dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

struct Term {
    double c = 0.0;
    int px = 0, py = 0, pt = 0;
    int trig = 0;  // 0 none, 1 sin, 2 cos
    double kx = 0.0, ky = 0.0, w = 0.0;
};

}  // namespace

ScalarField scalar_field(const json& value, const std::string& key) {
    if (value.is_number()) {
        const double v = value.get<double>();
        return [v](double, const Point&) { return v; };
    }
    if (!value.is_array()) throw SchemaError(key, "expected a number or a term table");
    static const std::set<std::string> allowed{"c", "px", "py", "pt", "trig", "kx", "ky", "w"};
    std::vector<Term> terms;
    for (std::size_t i = 0; i < value.size(); ++i) {
        const json& t = value[i];
        const std::string tk = key + "[" + std::to_string(i) + "]";
        if (!t.is_object()) throw SchemaError(tk, "a term must be an object");
        for (auto it = t.begin(); it != t.end(); ++it)
            if (!allowed.count(it.key())) throw SchemaError(tk + "." + it.key(), "unknown key");
        Term term;
        auto num = [&](const char* k, double d) {
            if (!t.contains(k)) return d;
            if (!t[k].is_number()) throw SchemaError(tk + "." + k, "expected number");
            return t[k].get<double>();
        };
        auto power = [&](const char* k) {
            if (!t.contains(k)) return 0;
            if (!t[k].is_number_integer() || t[k].get<int>() < 0)
                throw SchemaError(tk + "." + k, "expected a non-negative integer");
            return t[k].get<int>();
        };
        term.c = num("c", 1.0);
        term.px = power("px");
        term.py = power("py");
        term.pt = power("pt");
        term.kx = num("kx", 0.0);
        term.ky = num("ky", 0.0);
        term.w = num("w", 0.0);
        const std::string trig = t.value("trig", std::string("none"));
        if (trig == "none") term.trig = 0;
        else if (trig == "sin") term.trig = 1;
        else if (trig == "cos") term.trig = 2;
        else throw SchemaError(tk + ".trig", "must be none, sin or cos");
        terms.push_back(term);
    }
    return [terms](double t, const Point& x) {
        double s = 0.0;
        for (const Term& m : terms) {
            double v = m.c * std::pow(x(0), m.px) * std::pow(x(1), m.py) * std::pow(t, m.pt);
            const double arg = m.kx * x(0) + m.ky * x(1) + m.w * t;
            if (m.trig == 1) v *= std::sin(arg);
            if (m.trig == 2) v *= std::cos(arg);
            s += v;
        }
        return s;
    };
}

bool field_is_time_dependent(const json& value) {
    if (!value.is_array()) return false;
    for (const auto& t : value)
        if (t.value("pt", 0) > 0 || t.value("w", 0.0) != 0.0) return true;
    return false;
}

}  // namespace sdbc

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "rate_model.hpp"
#include "simulation.hpp"
#include "toml.hpp"
#include "trajectory.hpp"

namespace pdmp {

using json = nlohmann::json;

/// Malformed or inconsistent configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline json toml_to_json(const toml::node& node) {
    if (const auto* t = node.as_table()) {
        json out = json::object();
        for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
        return out;
    }
    if (const auto* a = node.as_array()) {
        json out = json::array();
        for (const auto& v : *a) out.push_back(toml_to_json(v));
        return out;
    }
    if (const auto* s = node.as_string()) return s->get();
    if (const auto* i = node.as_integer()) return i->get();
    if (const auto* f = node.as_floating_point()) return f->get();
    if (const auto* b = node.as_boolean()) return b->get();
    throw ConfigError("unsupported TOML value (dates and times are not accepted)");
}

}  // namespace detail

/// Parses TOML text into the JSON document model.
inline json parse_toml(const std::string& text) {
    try {
        toml::table t = toml::parse(text);
        return detail::toml_to_json(t);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << "TOML parse error: " << e.description() << " at line " << e.source().begin.line;
        throw ConfigError(os.str());
    }
}

inline json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("JSON parse error: ") + e.what());
    }
}

/// Reads a config file; `.json` files are JSON, everything else is TOML.
inline json load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return path.extension() == ".json" ? parse_json(ss.str()) : parse_toml(ss.str());
}

inline double number_at(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_number()) throw ConfigError(std::string("expected a number for '") + key + "'");
    return j.at(key).get<double>();
}

inline std::vector<double> numbers_at(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_array()) throw ConfigError(std::string("expected an array for '") + key + "'");
    std::vector<double> out;
    for (const auto& v : j.at(key)) {
        if (!v.is_number()) throw ConfigError(std::string("non-numeric entry in '") + key + "'");
        out.push_back(v.get<double>());
    }
    return out;
}

/// {"family": "constant", "level": L} | {"family": "affine", "base": B, "slope": S} |
/// {"family": "tabulated", "knots": [...], "values": [...]}
inline RateSpec parse_rate(const json& j) {
    if (!j.is_object() || !j.contains("family") || !j.at("family").is_string()) {
        throw ConfigError("rate spec needs a string 'family'");
    }
    std::string fam = j.at("family").get<std::string>();
    try {
        if (fam == "constant") return RateSpec::constant(number_at(j, "level"));
        if (fam == "affine") return RateSpec::affine(number_at(j, "base"), number_at(j, "slope"));
        if (fam == "tabulated") return RateSpec::tabulated(numbers_at(j, "knots"), numbers_at(j, "values"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    throw ConfigError("unknown rate family '" + fam + "'");
}

/// a = 1, b(y) = 1 + |y|; the invariant law is the standard Gaussian.
inline RatePair default_rates() { return RatePair(RateSpec::constant(1.0), RateSpec::affine(1.0, 1.0)); }

/// Rates from the top-level keys `a` and `b`; both absent means default_rates().
inline RatePair parse_rates(const json& doc) {
    bool has_a = doc.contains("a"), has_b = doc.contains("b");
    if (!has_a && !has_b) return default_rates();
    if (!has_a || !has_b) throw ConfigError("config must define both rates 'a' and 'b' or neither");
    return RatePair(parse_rate(doc.at("a")), parse_rate(doc.at("b")));
}

inline json rate_to_json(const RateSpec& r) {
    switch (r.family()) {
        case RateFamily::constant: return {{"family", "constant"}, {"level", r.base()}};
        case RateFamily::affine: return {{"family", "affine"}, {"base", r.base()}, {"slope", r.slope()}};
        case RateFamily::tabulated: return {{"family", "tabulated"}, {"knots", r.knots()}, {"values", r.values()}};
    }
    return {};
}

/// {"position": y, "velocity": +-1}
inline State parse_state(const json& j) {
    if (!j.is_object()) throw ConfigError("state must be a table with 'position' and 'velocity'");
    double y = number_at(j, "position");
    double w = number_at(j, "velocity");
    if (w != 1.0 && w != -1.0) throw ConfigError("velocity must be +1 or -1");
    return {y, w > 0 ? Velocity::plus : Velocity::minus, 0.0};
}

inline Flavor parse_flavor(const json& j, Flavor fallback) {
    if (!j.contains("flavor")) return fallback;
    std::string f = j.at("flavor").get<std::string>();
    if (f == "reflected") return Flavor::reflected;
    if (f == "unreflected") return Flavor::unreflected;
    throw ConfigError("flavor must be 'reflected' or 'unreflected'");
}

template <class T>
T param_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

/// Settings shared by every experiment, plus the experiment's own table.
struct ExperimentConfig {
    std::string experiment;
    RatePair rates;
    std::uint64_t seed = 1;
    std::size_t replicas = 10000;
    /// Per-path cap on simulated events; exceeding it is a guard trip.
    std::uint64_t event_guard = kDefaultEventGuard;
    json params = json::object();
};

inline ExperimentConfig make_config(const json& doc, const std::string& experiment) {
    if (!doc.is_object()) throw ConfigError("config must be a table");
    ExperimentConfig c;
    c.experiment = experiment;
    c.rates = parse_rates(doc);
    if (doc.contains("seed") && !(doc.at("seed").is_number_integer() && doc.at("seed") >= 0)) {
        throw ConfigError("'seed' must be a non-negative integer");
    }
    if (doc.contains("replicas") && !(doc.at("replicas").is_number_integer() && doc.at("replicas") >= 1)) {
        throw ConfigError("'replicas' must be a positive integer");
    }
    if (doc.contains("event_guard") && !(doc.at("event_guard").is_number_integer() && doc.at("event_guard") >= 1)) {
        throw ConfigError("'event_guard' must be a positive integer");
    }
    c.seed = param_or<std::uint64_t>(doc, "seed", c.seed);
    c.event_guard = param_or<std::uint64_t>(doc, "event_guard", c.event_guard);
    c.replicas = param_or<std::size_t>(doc, "replicas", c.replicas);
    if (doc.contains(experiment)) c.params = doc.at(experiment);
    if (!c.params.is_object()) throw ConfigError("section '" + experiment + "' must be a table");
    return c;
}

}  // namespace pdmp

#pragma once

// Model configuration files (JSON) and the helpers that make runs self-describing.

#include "atomsim/errors.hpp"
#include "atomsim/models/absorbing.hpp"
#include "atomsim/models/finite.hpp"
#include "atomsim/models/linear_gaussian.hpp"
#include "atomsim/models/pmmh.hpp"
#include "atomsim/models/sensor.hpp"
#include "atomsim/random.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

namespace atomsim::config {

using nlohmann::json;

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_exact(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// Parse a whole string as a double; the nearest double to the decimal value is returned.
inline double parse_exact(std::string_view text)
{
    double v = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    if (first != last && *first == '+')
        ++first;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw ConfigError("not a decimal number: '" + std::string(text) + "'");
    return v;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Hash of the canonical (sorted-key, compact) serialization.
inline std::uint64_t config_hash(const json& j) { return fnv1a64(j.dump()); }

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct PmmhConfig {
    std::vector<double> observations;
    std::size_t particles = 256;        ///< particles per likelihood estimate
    std::size_t atom_particles = 4096;  ///< particles for the atom's likelihood value
    PmmhSettings settings;
    std::optional<double> log_atom_w;   ///< estimated at run time when absent
};

using ModelSpec = std::variant<LinearGaussianModel, AbsorbingMediumModel, SensorHmmModel, FiniteFKModel, FiniteChain,
                               PmmhConfig>;

struct ModelConfig {
    std::string kind;
    json source; ///< the parsed file, used for hashing and headers
    ModelSpec model;
};

namespace detail {

template <class T>
T get_or(const json& j, const char* key, T fallback)
{
    if (!j.contains(key))
        return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("field '") + key + "' has the wrong type");
    }
}

inline const json& require(const json& j, const char* key)
{
    if (!j.is_object() || !j.contains(key))
        throw ConfigError(std::string("missing field '") + key + "'");
    return j.at(key);
}

inline double real_value(const json& v, const std::string& where)
{
    if (v.is_number())
        return v.get<double>();
    if (v.is_string())
        return parse_exact(v.get<std::string>());
    throw ConfigError(where + ": expected a number or a decimal string");
}

inline std::vector<double> real_sequence(const json& v, const std::string& where)
{
    if (!v.is_array())
        throw ConfigError(where + ": expected an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(real_value(v[i], where + "[" + std::to_string(i) + "]"));
    return out;
}

inline Matrix real_matrix(const json& v, const std::string& where)
{
    if (!v.is_array())
        throw ConfigError(where + ": expected an array of rows");
    Matrix m;
    for (std::size_t i = 0; i < v.size(); ++i)
        m.push_back(real_sequence(v[i], where + "[" + std::to_string(i) + "]"));
    return m;
}

struct SimulateRequest {
    std::uint64_t seed = 0;
    std::size_t n = 0;
    std::optional<std::int64_t> max_gap;
};

inline std::optional<SimulateRequest> simulate_request(const json& obs)
{
    if (!obs.is_object())
        return std::nullopt;
    const auto& sim = require(obs, "simulate");
    SimulateRequest req;
    req.seed = require(sim, "seed").get<std::uint64_t>();
    req.n = require(sim, "n").get<std::size_t>();
    if (req.n < 1)
        throw ConfigError("simulate: n must be positive");
    if (sim.contains("max_gap"))
        req.max_gap = sim.at("max_gap").get<std::int64_t>();
    return req;
}

inline LinearGaussianParams lg_params(const json& j)
{
    const json p = j.contains("params") ? j.at("params") : json::object();
    LinearGaussianParams out;
    out.a_coef = p.contains("a_coef") ? real_value(p["a_coef"], "params.a_coef") : out.a_coef;
    out.q_var = p.contains("q_var") ? real_value(p["q_var"], "params.q_var") : out.q_var;
    out.c_coef = p.contains("c_coef") ? real_value(p["c_coef"], "params.c_coef") : out.c_coef;
    out.r_var = p.contains("r_var") ? real_value(p["r_var"], "params.r_var") : out.r_var;
    out.mu_mean = p.contains("mu_mean") ? real_value(p["mu_mean"], "params.mu_mean") : out.mu_mean;
    out.mu_var = p.contains("mu_var") ? real_value(p["mu_var"], "params.mu_var") : out.mu_var;
    out.validate();
    return out;
}

inline std::vector<double> lg_observations(const json& j, const LinearGaussianParams& params)
{
    const auto& obs = require(j, "observations");
    if (auto req = simulate_request(obs)) {
        RandomStream rng(req->seed);
        return LinearGaussianModel::simulate(params, req->n, rng);
    }
    return real_sequence(obs, "observations");
}

inline Theta theta_value(const json& v, const std::string& where)
{
    const auto seq = real_sequence(v, where);
    if (seq.size() != 4)
        throw ConfigError(where + ": expected four values");
    return {seq[0], seq[1], seq[2], seq[3]};
}

inline ModelSpec build(const std::string& kind, const json& j)
{
    if (kind == "linear_gaussian") {
        const auto params = lg_params(j);
        return LinearGaussianModel(params, lg_observations(j, params));
    }
    if (kind == "absorbing") {
        return AbsorbingMediumModel(real_value(get_or<json>(j, "lo", 0.0), "lo"),
                                    real_value(get_or<json>(j, "hi", 1.0), "hi"),
                                    real_value(require(j, "sigma2"), "sigma2"), require(j, "n").get<std::size_t>());
    }
    if (kind == "sensor") {
        const double sigma2 = real_value(require(j, "sigma2"), "sigma2");
        const auto& obs = require(j, "observations");
        if (auto req = simulate_request(obs)) {
            RandomStream rng(req->seed);
            auto y = req->max_gap ? SensorHmmModel::simulate_with_max_gap(sigma2, req->n, *req->max_gap, rng)
                                  : SensorHmmModel::simulate(sigma2, req->n, rng);
            return SensorHmmModel(sigma2, std::move(y));
        }
        if (!obs.is_array())
            throw ConfigError("observations: expected an array of sensor indices");
        std::vector<std::int64_t> y;
        for (const auto& v : obs) {
            if (!v.is_number_integer())
                throw ConfigError("observations: sensor readings must be integers");
            y.push_back(v.get<std::int64_t>());
        }
        return SensorHmmModel(sigma2, std::move(y));
    }
    if (kind == "finite_fk") {
        return FiniteFKModel(real_sequence(require(j, "mu"), "mu"), real_matrix(require(j, "transition"), "transition"),
                             real_matrix(require(j, "potentials"), "potentials"));
    }
    if (kind == "finite_chain") {
        return FiniteChain(real_matrix(require(j, "matrix"), "matrix"), get_or<std::size_t>(j, "atom", 0));
    }
    if (kind == "pmmh") {
        PmmhConfig c;
        auto& s = c.settings;
        if (j.contains("theta_star"))
            s.theta_star = theta_value(j["theta_star"], "theta_star");
        if (j.contains("prior_mean"))
            s.prior_mean = theta_value(j["prior_mean"], "prior_mean");
        s.proposal_sd = real_value(get_or<json>(j, "proposal_sd", s.proposal_sd), "proposal_sd");
        s.prior_sd = real_value(get_or<json>(j, "prior_sd", s.prior_sd), "prior_sd");
        s.mix_weight = real_value(get_or<json>(j, "mix_weight", s.mix_weight), "mix_weight");
        c.particles = get_or<std::size_t>(j, "particles", c.particles);
        c.atom_particles = get_or<std::size_t>(j, "atom_particles", c.atom_particles);
        if (c.particles < 1 || c.atom_particles < 1)
            throw ConfigError("pmmh: particle counts must be positive");
        if (j.contains("log_atom_w"))
            c.log_atom_w = real_value(j["log_atom_w"], "log_atom_w");
        const auto& t = s.theta_star;
        const LinearGaussianParams truth{t[0], t[1], t[2], t[3], 0.0, 1.0};
        c.observations = lg_observations(j, truth);
        return c;
    }
    throw ConfigError("unknown model '" + kind +
                      "' (expected linear_gaussian, absorbing, sensor, pmmh, finite_fk or finite_chain)");
}

} // namespace detail

/// Build a model from a parsed configuration document.
inline ModelConfig parse_model_config(const json& j)
{
    if (!j.is_object())
        throw ConfigError("model configuration must be a JSON object");
    try {
        std::string kind = detail::require(j, "model").get<std::string>();
        auto model = detail::build(kind, j);
        return ModelConfig{std::move(kind), j, std::move(model)};
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed model configuration: ") + e.what());
    }
}

inline json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
}

inline ModelConfig load_model_config(const std::string& path) { return parse_model_config(read_json_file(path)); }

/// Observations as decimal strings that parse back to the same doubles.
inline json observations_to_json(const std::vector<double>& y)
{
    json out = json::array();
    for (double v : y)
        out.push_back(format_exact(v));
    return out;
}

} // namespace atomsim::config

// JSON experiment configuration: parsing, defaults, and eager validation.
#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "aircomp/errors.hpp"
#include "aircomp/experiments.hpp"

namespace aircomp {

namespace detail {

inline Eigen::VectorXd json_vector(const nlohmann::json& j, const std::string& key) {
    if (!j.is_array()) {
        throw ConfigError(key + ": expected an array of numbers");
    }
    Eigen::VectorXd v(j.size());
    Eigen::Index i = 0;
    for (const auto& e : j) {
        if (!e.is_number()) {
            throw ConfigError(key + ": expected an array of numbers");
        }
        v(i++) = e.get<double>();
    }
    return v;
}

inline Eigen::MatrixXd json_matrix(const nlohmann::json& j, const std::string& key) {
    if (!j.is_array() || j.empty()) {
        throw ConfigError(key + ": expected a non-empty array of rows");
    }
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    Eigen::Index cols = -1;
    Eigen::MatrixXd m;
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::VectorXd row = json_vector(j[static_cast<std::size_t>(r)],
                                                key + " row " + std::to_string(r));
        if (cols < 0) {
            cols = row.size();
            m.resize(rows, cols);
        } else if (row.size() != cols) {
            throw ConfigError(key + ": rows have inconsistent lengths");
        }
        m.row(r) = row;
    }
    return m;
}

template <typename T>
inline T json_integer(const nlohmann::json& j, const std::string& key) {
    if (!j.is_number_integer() && !j.is_number_unsigned()) {
        throw ConfigError(key + ": expected an integer");
    }
    return j.get<T>();
}

inline double json_number(const nlohmann::json& j, const std::string& key) {
    if (!j.is_number()) {
        throw ConfigError(key + ": expected a number");
    }
    return j.get<double>();
}

} // namespace detail

/**
 * @brief Check cross-field consistency and expand defaults in place.
 *
 * Builds the signal model once so that stability and covariance validity are
 * established at parse time rather than mid-experiment.
 *
 * @throws ConfigError naming the offending field.
 * @throws InstabilityError if the configured dynamics are not stable.
 */
inline void validate_config(ExperimentConfig& cfg) {
    if (cfg.K < 1) throw ConfigError("K: must be >= 1");
    if (cfg.has_explicit_A && cfg.A.rows() != cfg.K) {
        throw ConfigError("A: shape does not match K = " + std::to_string(cfg.K));
    }
    if (cfg.has_explicit_V_w &&
        (cfg.V_w.rows() != cfg.K || cfg.V_w.cols() != cfg.K)) {
        throw ConfigError("V_w: shape does not match K = " + std::to_string(cfg.K));
    }
    if (!(cfg.sigma_z2 > 0.0)) throw ConfigError("sigma_z2: must be > 0");
    if (!(cfg.tol > 0.0)) throw ConfigError("tol: must be > 0");
    if (cfg.P.size() == 1 && cfg.K > 1) {
        cfg.P = Eigen::VectorXd::Constant(cfg.K, cfg.P(0));
    }
    if (cfg.P.size() != cfg.K) {
        throw ConfigError("power: expected a scalar or a length-K array");
    }
    for (Eigen::Index k = 0; k < cfg.P.size(); ++k) {
        if (!(cfg.P(k) > 0.0)) throw ConfigError("power: entries must be > 0");
    }
    if (cfg.channel == ChannelKind::Explicit) {
        if (cfg.channel_name == "s1") cfg.h = channel_s1(cfg.K);
        if (cfg.channel_name == "s2") cfg.h = channel_s2(cfg.K);
        if (cfg.h.size() != cfg.K) {
            throw ConfigError("channel.h: expected length K = " + std::to_string(cfg.K));
        }
        if (!cfg.h.allFinite()) throw ConfigError("channel.h: entries must be finite");
    }
    if (cfg.l_values.empty()) throw ConfigError("l_values: must be non-empty");
    for (const long l : cfg.l_values) {
        if (l < 0) throw ConfigError("l_values: entries must be >= 0");
    }
    if (cfg.l < 0) throw ConfigError("l: must be >= 0");
    if (cfg.n_channel_realizations < 1) {
        throw ConfigError("n_channel_realizations: must be >= 1");
    }
    if (cfg.n_mc_samples < 100) throw ConfigError("n_mc_samples: must be >= 100");
    if (cfg.n_steps < 1) throw ConfigError("n_steps: must be >= 1");
    if (cfg.burn_in < 0) throw ConfigError("burn_in: must be >= 0");
    if (cfg.rounds < 1) throw ConfigError("rounds: must be >= 1");
    if (cfg.threads < 0) throw ConfigError("threads: must be >= 0");
    if (!cfg.init_full_power && cfg.init_b.size() != cfg.K) {
        throw ConfigError("init_b: expected length K = " + std::to_string(cfg.K));
    }
    if (!cfg.has_explicit_A && !(std::abs(cfg.alpha) < 1.0)) {
        throw InstabilityError("alpha: |alpha| must be < 1 for a stationary model, got " +
                               std::to_string(cfg.alpha));
    }
    try {
        (void)model_from_config(cfg);
    } catch (const InstabilityError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
}

/// Build a config from parsed JSON; unknown keys are rejected by name.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ConfigError("config root must be a JSON object");
    }
    static const std::set<std::string> known = {
        "alpha", "A", "K", "V_w", "channel", "power", "sigma_z2", "l_values", "l",
        "n_channel_realizations", "n_mc_samples", "n_steps", "burn_in", "seed",
        "rounds", "threads", "power_bound", "init", "init_b", "tol"};
    std::string unknown;
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (known.find(key) == known.end()) {
            unknown += unknown.empty() ? key : ", " + key;
        }
    }
    if (!unknown.empty()) {
        throw ConfigError("unknown config keys: " + unknown);
    }

    ExperimentConfig cfg;
    if (j.contains("A")) {
        cfg.A = detail::json_matrix(j["A"], "A");
        if (cfg.A.rows() != cfg.A.cols()) throw ConfigError("A: must be square");
        cfg.has_explicit_A = true;
        cfg.K = cfg.A.rows();
    }
    if (j.contains("K")) {
        cfg.K = detail::json_integer<long>(j["K"], "K");
        if (cfg.has_explicit_A && cfg.A.rows() != cfg.K) {
            throw ConfigError("K: does not match the shape of A");
        }
    }
    if (j.contains("alpha")) cfg.alpha = detail::json_number(j["alpha"], "alpha");
    if (j.contains("V_w")) {
        if (j["V_w"].is_string()) {
            if (j["V_w"].get<std::string>() != "from_unit_Vx") {
                throw ConfigError("V_w: expected a matrix or \"from_unit_Vx\"");
            }
        } else {
            cfg.V_w = detail::json_matrix(j["V_w"], "V_w");
            cfg.has_explicit_V_w = true;
        }
    }
    if (j.contains("sigma_z2")) cfg.sigma_z2 = detail::json_number(j["sigma_z2"], "sigma_z2");
    if (j.contains("power")) {
        if (j["power"].is_number()) {
            cfg.P = Eigen::VectorXd::Constant(1, j["power"].get<double>());
        } else {
            cfg.P = detail::json_vector(j["power"], "power");
        }
    }
    if (j.contains("channel")) {
        const auto& ch = j["channel"];
        if (!ch.is_object()) throw ConfigError("channel: expected an object");
        for (const auto& [key, value] : ch.items()) {
            (void)value;
            if (key != "rayleigh" && key != "h") {
                throw ConfigError("channel: unknown key " + key);
            }
        }
        if (ch.contains("rayleigh") && ch.contains("h")) {
            throw ConfigError("channel: specify either rayleigh or h, not both");
        }
        if (ch.contains("rayleigh")) {
            if (!ch["rayleigh"].is_boolean() || !ch["rayleigh"].get<bool>()) {
                throw ConfigError("channel.rayleigh: only true is meaningful");
            }
            cfg.channel = ChannelKind::Rayleigh;
            cfg.channel_name = "rayleigh";
        } else if (ch.contains("h")) {
            cfg.channel = ChannelKind::Explicit;
            if (ch["h"].is_string()) {
                const std::string name = ch["h"].get<std::string>();
                if (name != "s1" && name != "s2") {
                    throw ConfigError("channel.h: named vectors are s1 and s2");
                }
                cfg.channel_name = name;
            } else {
                cfg.h = detail::json_vector(ch["h"], "channel.h");
                cfg.channel_name = "custom";
            }
        } else {
            throw ConfigError("channel: expected rayleigh or h");
        }
    }
    if (j.contains("l_values")) {
        if (!j["l_values"].is_array()) throw ConfigError("l_values: expected an array");
        cfg.l_values.clear();
        for (const auto& e : j["l_values"]) {
            cfg.l_values.push_back(detail::json_integer<long>(e, "l_values"));
        }
    }
    if (j.contains("l")) cfg.l = detail::json_integer<long>(j["l"], "l");
    if (j.contains("n_channel_realizations")) {
        cfg.n_channel_realizations =
            detail::json_integer<long>(j["n_channel_realizations"], "n_channel_realizations");
    }
    if (j.contains("n_mc_samples")) {
        cfg.n_mc_samples = detail::json_integer<long>(j["n_mc_samples"], "n_mc_samples");
    }
    if (j.contains("n_steps")) cfg.n_steps = detail::json_integer<long>(j["n_steps"], "n_steps");
    if (j.contains("burn_in")) cfg.burn_in = detail::json_integer<long>(j["burn_in"], "burn_in");
    if (j.contains("seed")) cfg.seed = detail::json_integer<std::uint64_t>(j["seed"], "seed");
    if (j.contains("rounds")) cfg.rounds = detail::json_integer<long>(j["rounds"], "rounds");
    if (j.contains("threads")) cfg.threads = detail::json_integer<long>(j["threads"], "threads");
    if (j.contains("power_bound")) {
        const std::string name = j["power_bound"].is_string()
            ? j["power_bound"].get<std::string>() : std::string();
        if (name == "with_h2") cfg.power_bound = PowerBoundRule::WithH2;
        else if (name == "paper_eq28") cfg.power_bound = PowerBoundRule::PaperEq28;
        else throw ConfigError("power_bound: expected \"with_h2\" or \"paper_eq28\"");
    }
    if (j.contains("init")) {
        const std::string name = j["init"].is_string()
            ? j["init"].get<std::string>() : std::string();
        if (name == "full-power") cfg.init_full_power = true;
        else if (name == "custom") cfg.init_full_power = false;
        else throw ConfigError("init: expected \"full-power\" or \"custom\"");
    }
    if (j.contains("init_b")) cfg.init_b = detail::json_vector(j["init_b"], "init_b");

    validate_config(cfg);
    return cfg;
}

/// Serialize a resolved config (defaults expanded) for manifests and echo.
inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["K"] = cfg.K;
    if (cfg.has_explicit_A) {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index r = 0; r < cfg.A.rows(); ++r) {
            rows.emplace_back(cfg.A.row(r).begin(), cfg.A.row(r).end());
        }
        j["A"] = rows;
    } else {
        j["alpha"] = cfg.alpha;
    }
    if (cfg.has_explicit_V_w) {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index r = 0; r < cfg.V_w.rows(); ++r) {
            rows.emplace_back(cfg.V_w.row(r).begin(), cfg.V_w.row(r).end());
        }
        j["V_w"] = rows;
    } else {
        j["V_w"] = "from_unit_Vx";
    }
    j["sigma_z2"] = cfg.sigma_z2;
    j["power"] = std::vector<double>(cfg.P.begin(), cfg.P.end());
    if (cfg.channel == ChannelKind::Rayleigh) {
        j["channel"] = {{"rayleigh", true}};
    } else if (cfg.channel_name == "s1" || cfg.channel_name == "s2") {
        j["channel"] = {{"h", cfg.channel_name}};
    } else {
        j["channel"] = {{"h", std::vector<double>(cfg.h.begin(), cfg.h.end())}};
    }
    j["l_values"] = cfg.l_values;
    j["l"] = cfg.l;
    j["n_channel_realizations"] = cfg.n_channel_realizations;
    j["n_mc_samples"] = cfg.n_mc_samples;
    j["n_steps"] = cfg.n_steps;
    j["burn_in"] = cfg.burn_in;
    j["seed"] = cfg.seed;
    j["rounds"] = cfg.rounds;
    j["threads"] = cfg.threads;
    j["power_bound"] = power_bound_name(cfg.power_bound);
    j["init"] = cfg.init_full_power ? "full-power" : "custom";
    if (!cfg.init_full_power) {
        j["init_b"] = std::vector<double>(cfg.init_b.begin(), cfg.init_b.end());
    }
    j["tol"] = cfg.tol;
    return j;
}

/// Load and validate a JSON config file; an empty object yields all defaults.
inline ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file: " + path);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return config_from_json(j);
}

} // namespace aircomp

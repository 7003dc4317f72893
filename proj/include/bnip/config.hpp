#pragma once

// JSON run configuration. Unknown keys are errors so typos surface early;
// every error names the offending field.

#include <filesystem>
#include <set>
#include <string>

#include "json.hpp"

#include "bnip/io.hpp"
#include "bnip/simlab.hpp"

namespace bnip {

using Json = nlohmann::json;

namespace detail {

inline Json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        // translate the byte offset into a line number
        std::size_t line = 1;
        for (std::size_t k = 0; k < e.byte && k < text.size(); ++k)
            if (text[k] == '\n') ++line;
        throw ValidationError(origin + " line " + std::to_string(line) + ": " + e.what());
    }
}

inline void reject_unknown(const Json& j, const std::set<std::string>& known,
                           const std::string& origin) {
    if (!j.is_object()) throw ValidationError(origin + ": configuration must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ValidationError(origin + ": unknown config field '" + key + "'");
}

template <typename T>
T field(const Json& j, const std::string& key, const std::string& origin) {
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ValidationError(origin + ": config field '" + key + "' has the wrong type");
    }
}

inline Index count_field(const Json& j, const std::string& key, const std::string& origin) {
    const Json& v = j.at(key);
    if (!v.is_number_integer())
        throw ValidationError(origin + ": config field '" + key + "' must be an integer");
    const auto x = v.get<std::int64_t>();
    if (x < 1) throw ValidationError(origin + ": config field '" + key + "' must be positive");
    return static_cast<Index>(x);
}

inline Vector vector_field(const Json& j, const std::string& key, const std::string& origin) {
    const auto v = field<std::vector<double>>(j, key, origin);
    return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? p : (base / path).string();
}

}  // namespace detail

/// Simulation config. Paths are resolved against `base_dir`.
inline SimConfig parse_sim_config(const std::string& text, const std::string& origin = "config",
                                  const std::filesystem::path& base_dir = ".") {
    const Json j = detail::parse_json_text(text, origin);
    detail::reject_unknown(j,
                           {"n", "J", "p", "q", "snr", "reps", "master_seed", "alpha0", "beta0",
                            "gamma0", "target_mean_propensity", "target_mean_outcome",
                            "propensity_tolerance", "outcome_tolerance", "covariate_source",
                            "h_source", "h_bandwidth", "outcomes_path", "interventions_path",
                            "h_path", "threads"},
                           origin);
    SimConfig c;
    if (j.contains("n")) c.n = detail::count_field(j, "n", origin);
    if (j.contains("J")) c.units = detail::count_field(j, "J", origin);
    if (j.contains("p")) c.p = detail::count_field(j, "p", origin);
    if (j.contains("q")) c.q = detail::count_field(j, "q", origin);
    if (j.contains("reps")) c.reps = detail::count_field(j, "reps", origin);
    if (j.contains("snr")) c.snr = detail::field<double>(j, "snr", origin);
    if (j.contains("master_seed")) {
        if (!j["master_seed"].is_number_unsigned())
            throw ValidationError(origin + ": config field 'master_seed' must be a nonnegative integer");
        c.master_seed = j["master_seed"].get<std::uint64_t>();
    }
    if (j.contains("alpha0")) c.alpha0 = detail::vector_field(j, "alpha0", origin);
    if (j.contains("beta0")) c.beta0 = detail::vector_field(j, "beta0", origin);
    if (j.contains("gamma0")) c.gamma0 = detail::vector_field(j, "gamma0", origin);
    for (auto [key, slot] : {std::pair{"target_mean_propensity", &c.target_mean_propensity},
                             std::pair{"target_mean_outcome", &c.target_mean_outcome},
                             std::pair{"propensity_tolerance", &c.propensity_tolerance},
                             std::pair{"outcome_tolerance", &c.outcome_tolerance},
                             std::pair{"h_bandwidth", &c.h_bandwidth}})
        if (j.contains(key)) *slot = detail::field<double>(j, key, origin);
    if (j.contains("threads")) c.threads = static_cast<unsigned>(detail::count_field(j, "threads", origin));

    if (j.contains("covariate_source")) {
        const auto s = detail::field<std::string>(j, "covariate_source", origin);
        if (s == "synthetic_gaussian") c.covariate_source = CovariateSource::synthetic_gaussian;
        else if (s == "user_supplied") c.covariate_source = CovariateSource::user_supplied;
        else throw ValidationError(origin + ": config field 'covariate_source' has unknown value '" + s + "'");
    }
    if (j.contains("h_source")) {
        const auto s = detail::field<std::string>(j, "h_source", origin);
        if (s == "synthetic_spatial") c.h_source = HSource::synthetic_spatial;
        else if (s == "synthetic_lognormal") c.h_source = HSource::synthetic_lognormal;
        else if (s == "user_supplied") c.h_source = HSource::user_supplied;
        else throw ValidationError(origin + ": config field 'h_source' has unknown value '" + s + "'");
    }

    if (c.covariate_source == CovariateSource::user_supplied) {
        if (!j.contains("outcomes_path") || !j.contains("interventions_path"))
            throw ValidationError(origin + ": user_supplied covariates need 'outcomes_path' and 'interventions_path'");
        const auto out = io::read_outcomes(
            detail::resolve_path(detail::field<std::string>(j, "outcomes_path", origin), base_dir));
        const auto in = io::read_interventions(detail::resolve_path(
            detail::field<std::string>(j, "interventions_path", origin), base_dir));
        c.x_out = out.table.x;
        c.x_int = in.table.x;
        c.n = out.table.x.rows();
        c.units = in.table.x.rows();
        c.p = out.table.x.cols();
        c.q = in.table.x.cols();
    }
    if (c.h_source == HSource::user_supplied) {
        if (!j.contains("h_path"))
            throw ValidationError(origin + ": user_supplied interference map needs 'h_path'");
        c.h = io::read_interference(
                  detail::resolve_path(detail::field<std::string>(j, "h_path", origin), base_dir),
                  c.n, c.units)
                  .h;
    }
    try {
        validate_config(c);
    } catch (const ValidationError& e) {
        throw ValidationError(origin + ": " + e.what());
    }
    return c;
}

inline SimConfig load_sim_config(const std::string& path) {
    return parse_sim_config(io::read_text(path), path,
                            std::filesystem::path(path).parent_path().empty()
                                ? std::filesystem::path(".")
                                : std::filesystem::path(path).parent_path());
}

/// Model choices shared by fit / effects / policy / sweep.
struct ModelConfig {
    std::string estimator = "a";  // "a" or "q"
    OutcomeModelSpec outcome{FeatureMap{BasisKind::quadratic}, FeatureMap{BasisKind::linear}};
    FeatureMap propensity{BasisKind::linear};
    double trim_quantile = 0.0;
    double level = 0.95;
    bool standardize = false;
};

inline ModelConfig parse_model_config(const std::string& text, const std::string& origin = "config") {
    const Json j = detail::parse_json_text(text, origin);
    detail::reject_unknown(j, {"estimator", "f0", "fa", "propensity", "trim_quantile", "level",
                               "standardize"},
                           origin);
    ModelConfig m;
    auto basis = [&](const char* key) {
        try {
            return FeatureMap{parse_basis_kind(detail::field<std::string>(j, key, origin))};
        } catch (const ValidationError& e) {
            throw ValidationError(origin + ": config field '" + key + "': " + e.what());
        }
    };
    if (j.contains("estimator")) m.estimator = detail::field<std::string>(j, "estimator", origin);
    if (m.estimator != "a" && m.estimator != "q")
        throw ValidationError(origin + ": config field 'estimator' must be \"a\" or \"q\"");
    if (j.contains("f0")) m.outcome.f0 = basis("f0");
    if (j.contains("fa")) m.outcome.fa = basis("fa");
    if (j.contains("propensity")) m.propensity = basis("propensity");
    if (j.contains("trim_quantile")) m.trim_quantile = detail::field<double>(j, "trim_quantile", origin);
    if (j.contains("level")) m.level = detail::field<double>(j, "level", origin);
    if (j.contains("standardize")) m.standardize = detail::field<bool>(j, "standardize", origin);
    if (!(m.trim_quantile >= 0.0 && m.trim_quantile < 1.0))
        throw ValidationError(origin + ": config field 'trim_quantile' must lie in [0,1)");
    if (!(m.level > 0.0 && m.level < 1.0))
        throw ValidationError(origin + ": config field 'level' must lie in (0,1)");
    return m;
}

}  // namespace bnip

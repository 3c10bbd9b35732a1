#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "prion/error.hpp"

namespace prion {

inline constexpr const char* kVersion = "0.1.0";

using Json = nlohmann::ordered_json;

/// JSON number, or null for NaN and infinities (JSON has no encoding for them).
inline Json json_number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json json_array(const std::vector<double>& xs) {
    Json a = Json::array();
    for (double x : xs) a.push_back(json_number(x));
    return a;
}

struct Provenance {
    std::string version = kVersion;
    std::string grid_hash;
    std::uint64_t seed = 0;
    std::string digest;

    bool operator==(const Provenance&) const = default;
};

/// One configured run: its inputs, outputs and diagnostics. Wall-clock timings are kept out of
/// the serialized form so identical runs produce identical files.
struct ExperimentRecord {
    std::string experiment;
    std::string status = "ok";  // ok | partial | error
    std::vector<std::pair<std::string, std::string>> config;
    Json results = Json::object();
    Json diagnostics = Json::object();
    std::vector<std::string> errors;
    std::vector<std::string> files;
    Provenance provenance;

    bool operator==(const ExperimentRecord&) const = default;
};

inline Json to_json(const ExperimentRecord& r) {
    Json j;
    j["experiment"] = r.experiment;
    j["status"] = r.status;
    Json cfg = Json::object();
    for (const auto& [k, v] : r.config) cfg[k] = v;
    j["config"] = std::move(cfg);
    j["results"] = r.results;
    j["diagnostics"] = r.diagnostics;
    j["errors"] = r.errors;
    j["files"] = r.files;
    j["provenance"] = {{"version", r.provenance.version},
                       {"grid_hash", r.provenance.grid_hash},
                       {"seed", r.provenance.seed},
                       {"digest", r.provenance.digest}};
    return j;
}

inline ExperimentRecord record_from_json(const Json& j) {
    try {
        ExperimentRecord r;
        r.experiment = j.at("experiment").get<std::string>();
        r.status = j.at("status").get<std::string>();
        for (const auto& [k, v] : j.at("config").items()) r.config.emplace_back(k, v.get<std::string>());
        r.results = j.at("results");
        r.diagnostics = j.at("diagnostics");
        r.errors = j.at("errors").get<std::vector<std::string>>();
        r.files = j.at("files").get<std::vector<std::string>>();
        const auto& p = j.at("provenance");
        r.provenance.version = p.at("version").get<std::string>();
        r.provenance.grid_hash = p.at("grid_hash").get<std::string>();
        r.provenance.seed = p.at("seed").get<std::uint64_t>();
        r.provenance.digest = p.at("digest").get<std::string>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed experiment record: ") + e.what());
    }
}

inline std::string dump_record(const ExperimentRecord& r) { return to_json(r).dump(2) + "\n"; }

inline ExperimentRecord parse_record(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("experiment record is not valid JSON: ") + e.what());
    }
    return record_from_json(j);
}

}  // namespace prion

#include "posetlab/manifest.hpp"

#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace posetlab {

using json = nlohmann::json;

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string manifest_path_for(const std::string& artifact_path) {
    return artifact_path + ".manifest.json";
}

void write_manifest(const RunManifest& m, const std::string& path) {
    json j;
    j["command"] = m.command;
    j["arguments"] = m.arguments;
    j["seeds"] = m.seeds;
    j["input_paths"] = m.input_paths;
    j["output_paths"] = m.output_paths;
    j["tool_version"] = m.tool_version;
    j["started_at"] = m.started_at;
    j["finished_at"] = m.finished_at;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
}

RunManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    json j;
    in >> j;
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.arguments = j.at("arguments").get<std::vector<std::string>>();
    m.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    m.input_paths = j.at("input_paths").get<std::vector<std::string>>();
    m.output_paths = j.at("output_paths").get<std::vector<std::string>>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
    return m;
}

} // namespace posetlab

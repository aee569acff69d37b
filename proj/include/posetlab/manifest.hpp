#pragma once

#include <string>
#include <vector>

namespace posetlab {

inline constexpr const char* kToolVersion = "0.1.0";

// Serialized alongside every output artifact; carries everything needed to
// reproduce the run with the mock client.
struct RunManifest {
    std::string command;
    std::vector<std::string> arguments;
    std::vector<uint64_t> seeds;
    std::vector<std::string> input_paths;
    std::vector<std::string> output_paths;
    std::string tool_version = kToolVersion;
    std::string started_at;
    std::string finished_at;
};

std::string utc_now();
void write_manifest(const RunManifest& m, const std::string& path);
RunManifest load_manifest(const std::string& path);

// Manifest location convention: "<artifact>.manifest.json".
std::string manifest_path_for(const std::string& artifact_path);

} // namespace posetlab

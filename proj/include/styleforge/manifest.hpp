#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace styleforge {

inline constexpr const char* kToolVersion = "0.1.0";

// Audit record written beside every command's outputs. This is the only
// artifact that carries timing, so reruns leave all other outputs
// byte-identical.
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> config;  // resolved flag values
    std::map<std::string, std::string> inputs;  // path -> content digest
    std::string started_at;                     // UTC, ISO 8601
    double wall_ms = 0.0;
};

uint64_t fnv1a64(std::string_view bytes);
std::string file_digest(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

} // namespace styleforge

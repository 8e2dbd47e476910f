#include "styleforge/manifest.hpp"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <ctime>

#include "json.hpp"

#include "styleforge/core.hpp"

namespace styleforge {

uint64_t fnv1a64(std::string_view bytes) {
    uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string file_digest(const std::filesystem::path& path) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016" PRIx64, fnv1a64(read_file_bytes(path)));
    return buf;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
    nlohmann::json j;
    j["command"] = manifest.command;
    j["version"] = kToolVersion;
    j["config"] = manifest.config;
    j["inputs"] = manifest.inputs;
    j["started_at"] = manifest.started_at;
    j["wall_ms"] = manifest.wall_ms;
    write_file_bytes(path, j.dump(2) + "\n");
}

} // namespace styleforge

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "canontab/errors.hpp"

namespace canontab {

// Whole-file read; std::nullopt when the file does not exist.
std::optional<std::string> read_file_if_exists(const std::filesystem::path& path);

// Writes via a temp file in the target directory plus a rename, so a crash or
// concurrent reader never observes a half-written artifact. Creates parent
// directories as needed.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Content-addressed artifact store for one table's pipeline run.
//
// The store lives at <root>/<sanitized table id>-<first 12 hex of
// sha256(raw bytes)>, so any change to the raw input lands in a fresh
// directory and stale artifacts can never be served for it. A manifest.json
// records the sha256 of every artifact; reads verify the hash and throw
// CacheError on tampering or truncation.
class ArtifactCache {
public:
    ArtifactCache(std::filesystem::path root, const std::string& table_id,
                  std::string_view raw_bytes);

    const std::filesystem::path& dir() const { return dir_; }

    // True when the manifest lists `name` and the file is present on disk.
    bool has(const std::string& name) const;

    // Returns the artifact bytes after verifying their recorded hash.
    std::string read_text(const std::string& name) const;

    // Writes the artifact atomically and records its hash in the manifest.
    // `name` may contain '/' subdirectories (e.g. "provenance/issues.json").
    void write_text(const std::string& name, std::string_view bytes);

    void remove(const std::string& name);

private:
    std::filesystem::path entry_path(const std::string& name) const;
    void save_manifest() const;

    std::filesystem::path dir_;
    std::map<std::string, std::string> files_;  // artifact name -> sha256
};

}  // namespace canontab

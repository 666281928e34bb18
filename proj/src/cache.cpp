#include "canontab/cache.hpp"

#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "canontab/sha256.hpp"
#include "canontab/strutil.hpp"

namespace canontab {

namespace fs = std::filesystem;
using nlohmann::json;

std::optional<std::string> read_file_if_exists(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw CacheError("failed reading " + path.string());
    return bytes;
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    const fs::path dir = path.parent_path();
    if (!dir.empty()) fs::create_directories(dir);

    static std::mt19937_64 rng{std::random_device{}()};
    const fs::path tmp =
        (dir.empty() ? fs::path(".") : dir) /
        (path.filename().string() + ".tmp." + std::to_string(rng()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CacheError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw CacheError("failed writing " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw CacheError("failed renaming over " + path.string() + ": " + ec.message());
    }
}

ArtifactCache::ArtifactCache(fs::path root, const std::string& table_id,
                             std::string_view raw_bytes) {
    const std::string key =
        strutil::sanitize_identifier(table_id) + "-" + sha256_hex(raw_bytes).substr(0, 12);
    dir_ = root / key;
    fs::create_directories(dir_);

    if (auto bytes = read_file_if_exists(dir_ / "manifest.json")) {
        json doc;
        try {
            doc = json::parse(*bytes);
        } catch (const json::exception& e) {
            throw CacheError("corrupt manifest in " + dir_.string() + ": " + e.what());
        }
        if (!doc.is_object() || !doc.contains("files") || !doc["files"].is_object()) {
            throw CacheError("corrupt manifest in " + dir_.string() +
                             ": expected {\"files\": {...}}");
        }
        for (auto it = doc["files"].begin(); it != doc["files"].end(); ++it) {
            if (!it.value().is_string()) {
                throw CacheError("corrupt manifest in " + dir_.string() + ": hash for '" +
                                 it.key() + "' is not a string");
            }
            files_[it.key()] = it.value().get<std::string>();
        }
    }
}

fs::path ArtifactCache::entry_path(const std::string& name) const {
    fs::path rel(name);
    if (rel.is_absolute() || name.find("..") != std::string::npos) {
        throw ValidationError("artifact name '" + name + "' must be a relative path");
    }
    return dir_ / rel;
}

bool ArtifactCache::has(const std::string& name) const {
    return files_.count(name) != 0 && fs::exists(entry_path(name));
}

std::string ArtifactCache::read_text(const std::string& name) const {
    auto it = files_.find(name);
    if (it == files_.end()) throw CacheError("artifact '" + name + "' is not in the manifest");
    auto bytes = read_file_if_exists(entry_path(name));
    if (!bytes) throw CacheError("artifact '" + name + "' is missing from " + dir_.string());
    if (sha256_hex(*bytes) != it->second) {
        throw CacheError("artifact '" + name + "' failed its content hash check");
    }
    return *bytes;
}

void ArtifactCache::write_text(const std::string& name, std::string_view bytes) {
    write_file_atomic(entry_path(name), bytes);
    files_[name] = sha256_hex(bytes);
    save_manifest();
}

void ArtifactCache::remove(const std::string& name) {
    std::error_code ec;
    fs::remove(entry_path(name), ec);
    files_.erase(name);
    save_manifest();
}

void ArtifactCache::save_manifest() const {
    json files = json::object();
    for (const auto& [name, hash] : files_) files[name] = hash;
    write_file_atomic(dir_ / "manifest.json", json{{"files", files}}.dump(2));
}

}  // namespace canontab

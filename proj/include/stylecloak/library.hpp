#ifndef STYLECLOAK_LIBRARY_HPP
#define STYLECLOAK_LIBRARY_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylecloak/image_io.hpp"
#include "stylecloak/target_selection.hpp"

namespace stylecloak {

inline constexpr const char* kLibrarySchema = "stylecloak-library/1";

// Library manifest:
//   {"schema": "stylecloak-library/1",
//    "styles": [{"style_id": "...", "images": ["relative/or/absolute.png", ...]}]}
// Centroids are cached next to the manifest in
// <stem>.centroids.<extractor>.json, keyed by style_id and the image hashes.
inline CandidateLibrary load_library(const std::filesystem::path& manifest, const FeatureExtractor& extractor) {
    namespace fs = std::filesystem;
    std::ifstream in(manifest);
    if (!in) throw NotFound("library manifest not found: " + manifest.string());
    const auto j = nlohmann::json::parse(in);
    if (j.value("schema", "") != kLibrarySchema) throw InvalidInput("not a style library manifest");
    const fs::path root = manifest.parent_path();
    const fs::path cache_path =
        root / (manifest.stem().string() + ".centroids." + extractor.name() + ".json");
    nlohmann::json cache = nlohmann::json::object();
    if (fs::exists(cache_path)) {
        std::ifstream c(cache_path);
        cache = nlohmann::json::parse(c);
    }
    bool dirty = false;
    std::vector<StyleCandidate> out;
    for (const auto& s : j.at("styles")) {
        const std::string id = s.at("style_id");
        std::vector<ArtworkImage> exemplars;
        std::string key;
        for (const auto& p : s.at("images")) {
            fs::path path = p.get<std::string>();
            if (path.is_relative()) path = root / path;
            const auto bytes = read_file(path);
            key += sha256_hex(bytes);
            exemplars.push_back(decode_image(bytes, path.stem().string()));
        }
        if (exemplars.empty()) throw InvalidInput("style '" + id + "' lists no images");
        key = sha256_hex(key);
        if (cache.contains(id) && cache[id].value("key", "") == key) {
            FeatureVector c(cache[id].at("centroid").get<std::vector<double>>());
            if (c.dim() != extractor.dim()) throw InvalidInput("cached centroid has the wrong dimension");
            out.push_back({id, std::move(exemplars), std::move(c)});
        } else {
            out.push_back(make_candidate(id, std::move(exemplars), extractor));
            cache[id] = {{"key", key}, {"centroid", out.back().centroid.values()}};
            dirty = true;
        }
    }
    if (dirty) {
        std::ofstream c(cache_path);
        c << cache.dump();
    }
    return CandidateLibrary(std::move(out), extractor.name());
}

// Writes every candidate's exemplars as PNGs plus a manifest under `dir`.
inline std::filesystem::path save_library(const CandidateLibrary& lib, const std::filesystem::path& dir) {
    nlohmann::json styles = nlohmann::json::array();
    for (const auto& c : lib.candidates()) {
        nlohmann::json images = nlohmann::json::array();
        for (std::size_t i = 0; i < c.exemplars.size(); ++i) {
            const std::string rel = "styles/" + c.style_id + "/" + std::to_string(i) + ".png";
            save_png(c.exemplars[i], dir / rel);
            images.push_back(rel);
        }
        styles.push_back({{"style_id", c.style_id}, {"images", images}});
    }
    const auto path = dir / "library.json";
    std::filesystem::create_directories(dir);
    std::ofstream out(path);
    out << nlohmann::json{{"schema", kLibrarySchema}, {"styles", styles}}.dump(2);
    return path;
}

// Persisted per-artist target choice, so every later cloak of the same
// artist goes toward the same style.
class ArtistProfiles {
public:
    explicit ArtistProfiles(std::filesystem::path path) : path_(std::move(path)) {
        if (std::filesystem::exists(path_)) {
            std::ifstream in(path_);
            data_ = nlohmann::json::parse(in);
        } else {
            data_ = nlohmann::json::object();
        }
    }

    std::optional<std::string> target(const std::string& artist_id) const {
        if (!data_.contains(artist_id)) return std::nullopt;
        return data_[artist_id].at("target_style").get<std::string>();
    }

    void set_target(const std::string& artist_id, const std::string& style_id) {
        data_[artist_id]["target_style"] = style_id;
        save();
    }

    void set_budget(const std::string& artist_id, double budget) {
        data_[artist_id]["accepted_budget"] = budget;
        save();
    }

    const nlohmann::json& raw() const { return data_; }

private:
    void save() const {
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
        std::ofstream out(path_);
        out << data_.dump(2);
    }

    std::filesystem::path path_;
    nlohmann::json data_;
};

// Reuses the stored target unless `override_style` is given; otherwise
// selects from the band and stores the choice.
inline const StyleCandidate& choose_target(ArtistProfiles& profiles, const std::string& artist_id,
                                           std::span<const ArtworkImage> victim_art,
                                           const CandidateLibrary& library, const FeatureExtractor& extractor,
                                           PercentileWindow window, std::uint64_t seed,
                                           const std::optional<std::string>& override_style = std::nullopt) {
    auto lookup = [&](const std::string& id) -> const StyleCandidate& {
        const StyleCandidate* c = library.find(id);
        if (!c) throw NotFound("style '" + id + "' is not in the candidate library");
        return *c;
    };
    if (override_style) {
        const StyleCandidate& c = lookup(*override_style);
        profiles.set_target(artist_id, c.style_id);
        return c;
    }
    if (auto stored = profiles.target(artist_id)) return lookup(*stored);
    const auto ranked = rank_candidates(victim_art, library, extractor);
    const StyleCandidate& c = select_target(ranked, window, seed);
    profiles.set_target(artist_id, c.style_id);
    return c;
}

}  // namespace stylecloak

#endif  // STYLECLOAK_LIBRARY_HPP

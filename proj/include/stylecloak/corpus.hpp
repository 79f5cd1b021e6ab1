#ifndef STYLECLOAK_CORPUS_HPP
#define STYLECLOAK_CORPUS_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylecloak/feature_space.hpp"
#include "stylecloak/image_io.hpp"
#include "stylecloak/rng.hpp"
#include "stylecloak/synthetic.hpp"

namespace stylecloak {

struct SyntheticCorpus {
    StyleRecipe style_a;
    StyleRecipe style_b;
    std::vector<ArtworkImage> a;
    std::vector<ArtworkImage> b;
};

inline constexpr int kSyntheticSize = 64;

// Two procedurally distinct styles: warm low-frequency stripes ("style-a",
// artist "artist-a") and cool high-frequency checks ("style-b", "artist-b").
inline SyntheticCorpus make_synthetic_corpus(int n_per_style, std::uint64_t seed,
                                             int size = kSyntheticSize) {
    if (n_per_style < 1) throw InvalidInput("need at least one image per style");
    SyntheticCorpus c{warm_stripes_style(), cool_checker_style(), {}, {}};
    c.a = render_style_set(c.style_a, n_per_style, size, mix_seed(seed, 0xa), "artist-a");
    c.b = render_style_set(c.style_b, n_per_style, size, mix_seed(seed, 0xb), "artist-b");
    return c;
}

// Generic art used to fit the toy decoder and the pretrained generator.
inline std::vector<ArtworkImage> make_generic_corpus(int n_styles, int per_style, std::uint64_t seed,
                                                     int size = kSyntheticSize) {
    std::vector<ArtworkImage> out;
    for (const auto& r : make_style_family(n_styles, seed))
        for (auto& img : render_style_set(r, per_style, size, mix_seed(seed, fnv1a(r.name)), "generic"))
            out.push_back(std::move(img));
    return out;
}

// Within-style spread is the pooled per-coordinate standard deviation,
// sqrt(mean_i ||f_i - c||^2 / dim). `dispersion_*` keep the total RMS
// distance to the centroid for reference.
struct StyleSeparation {
    double centroid_distance = 0.0;
    double within_std_a = 0.0;
    double within_std_b = 0.0;
    double dispersion_a = 0.0;
    double dispersion_b = 0.0;

    double ratio() const { return centroid_distance / std::max(within_std_a, within_std_b); }
    double dispersion_ratio() const { return centroid_distance / std::max(dispersion_a, dispersion_b); }
};

inline double rms_distance(std::span<const FeatureVector> f, const FeatureVector& c) {
    double s = 0.0;
    for (const auto& v : f) s += squared_distance(v.span(), c.span());
    return std::sqrt(s / static_cast<double>(f.size()));
}

inline StyleSeparation measure_separation(const SyntheticCorpus& corpus, const FeatureExtractor& phi) {
    std::vector<FeatureVector> fa, fb;
    for (const auto& img : corpus.a) fa.push_back(extract(phi, img));
    for (const auto& img : corpus.b) fb.push_back(extract(phi, img));
    const FeatureVector ca = centroid(fa), cb = centroid(fb);
    const double root_dim = std::sqrt(static_cast<double>(ca.dim()));
    StyleSeparation s;
    s.centroid_distance = feature_distance(ca, cb);
    s.dispersion_a = rms_distance(fa, ca);
    s.dispersion_b = rms_distance(fb, cb);
    s.within_std_a = s.dispersion_a / root_dim;
    s.within_std_b = s.dispersion_b / root_dim;
    return s;
}

// ---- perceptual hashing ----

// 8x8 average hash: bit i set when cell i's luma exceeds the mean luma.
inline std::uint64_t average_hash(const ArtworkImage& img) {
    const ArtworkImage small = resize(img, 8, 8);
    std::array<double, 64> luma{};
    double mean = 0.0;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const double l = 0.299 * small.at(0, y, x) + 0.587 * small.at(1, y, x) + 0.114 * small.at(2, y, x);
            luma[static_cast<std::size_t>(y * 8 + x)] = l;
            mean += l / 64.0;
        }
    std::uint64_t h = 0;
    for (std::size_t i = 0; i < 64; ++i)
        if (luma[i] > mean) h |= std::uint64_t{1} << i;
    return h;
}

inline int hamming(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

inline constexpr int kNearDuplicateHamming = 4;

// ---- portfolio manifests ----

inline constexpr const char* kPortfolioSchema = "stylecloak-portfolio/1";

struct PortfolioEntry {
    std::string path;  // relative to the portfolio root
    std::string sha256;
    std::uint64_t ahash = 0;
    bool cloaked = false;
};

struct PortfolioManifest {
    std::string schema = kPortfolioSchema;
    std::string artist_id;
    std::string genre;
    std::vector<PortfolioEntry> entries;
    std::vector<std::string> warnings;  // not persisted
};

inline nlohmann::json to_json(const PortfolioManifest& m) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : m.entries)
        entries.push_back({{"path", e.path}, {"sha256", e.sha256}, {"ahash", e.ahash}, {"cloaked", e.cloaked}});
    return {{"schema", m.schema}, {"artist_id", m.artist_id}, {"genre", m.genre}, {"entries", entries}};
}

inline PortfolioManifest portfolio_from_json(const nlohmann::json& j) {
    PortfolioManifest m;
    m.schema = j.at("schema").get<std::string>();
    if (m.schema != kPortfolioSchema) throw InvalidInput("unsupported portfolio schema '" + m.schema + "'");
    m.artist_id = j.at("artist_id").get<std::string>();
    m.genre = j.at("genre").get<std::string>();
    for (const auto& e : j.at("entries"))
        m.entries.push_back({e.at("path"), e.at("sha256"), e.at("ahash").get<std::uint64_t>(), e.at("cloaked")});
    return m;
}

// Exact duplicates (same SHA-256) and near duplicates (average-hash Hamming
// distance <= 4) are dropped with a warning; files that fail to decode are
// skipped with a warning. Entries are sorted by path.
inline PortfolioManifest ingest_portfolio(const std::filesystem::path& folder, std::string artist_id,
                                          std::string genre) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(folder)) throw NotFound("portfolio folder not found: " + folder.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(folder))
        if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());

    PortfolioManifest m;
    m.artist_id = std::move(artist_id);
    m.genre = std::move(genre);
    for (const auto& f : files) {
        const auto bytes = read_file(f);
        PortfolioEntry e{f.filename().string(), sha256_hex(bytes), 0, false};
        try {
            e.ahash = average_hash(decode_image(bytes));
        } catch (const std::exception& ex) {
            m.warnings.push_back("skipped " + e.path + ": " + ex.what());
            continue;
        }
        const auto dup = std::find_if(m.entries.begin(), m.entries.end(), [&](const PortfolioEntry& o) {
            return o.sha256 == e.sha256 || hamming(o.ahash, e.ahash) <= kNearDuplicateHamming;
        });
        if (dup != m.entries.end()) {
            m.warnings.push_back("duplicate " + e.path + " of " + dup->path + " dropped");
            continue;
        }
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty()) throw EmptyPortfolio("no usable images in " + folder.string());
    return m;
}

// Throws IntegrityError when any listed file is missing or its hash changed.
inline void verify_portfolio(const PortfolioManifest& m, const std::filesystem::path& root) {
    for (const auto& e : m.entries) {
        const auto p = root / e.path;
        if (!std::filesystem::exists(p)) throw IntegrityError("missing portfolio file " + e.path);
        if (sha256_file(p) != e.sha256) throw IntegrityError("portfolio file changed: " + e.path);
    }
}

inline std::vector<ArtworkImage> load_portfolio(const PortfolioManifest& m, const std::filesystem::path& root) {
    verify_portfolio(m, root);
    std::vector<ArtworkImage> out;
    for (const auto& e : m.entries) {
        ArtworkImage img = load_image(root / e.path);
        img.set_artist_id(m.artist_id);
        img.set_genre(m.genre);
        out.push_back(std::move(img));
    }
    return out;
}

struct MixedItem {
    ArtworkImage image;
    bool cloaked = false;
};

// round(fraction * N) items, chosen under `seed`, are replaced by their
// cloaked versions (cloaked[i] corresponds to portfolio[i]). Order follows
// the portfolio.
inline std::vector<MixedItem> mix_cloaked_fraction(std::span<const ArtworkImage> portfolio,
                                                   std::span<const std::optional<ArtworkImage>> cloaked,
                                                   double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidInput("fraction must be in [0,1]");
    if (cloaked.size() != portfolio.size()) throw InvalidInput("one cloaked slot per portfolio item required");
    const auto n = portfolio.size();
    const auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<std::size_t> available;
    for (std::size_t i = 0; i < n; ++i)
        if (cloaked[i]) available.push_back(i);
    if (available.size() < want)
        throw InvalidInput("only " + std::to_string(available.size()) + " cloaked results for " +
                           std::to_string(want) + " requested");
    Rng rng(mix_seed(seed, 0x313c));
    rng.shuffle(available);
    std::vector<bool> take(n, false);
    for (std::size_t k = 0; k < want; ++k) take[available[k]] = true;
    std::vector<MixedItem> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(take[i] ? MixedItem{*cloaked[i], true} : MixedItem{portfolio[i], false});
    return out;
}

inline std::vector<MixedItem> mix_cloaked_fraction(std::span<const ArtworkImage> portfolio,
                                                   std::span<const ArtworkImage> cloaked, double fraction,
                                                   std::uint64_t seed) {
    std::vector<std::optional<ArtworkImage>> slots(cloaked.begin(), cloaked.end());
    return mix_cloaked_fraction(portfolio, slots, fraction, seed);
}

}  // namespace stylecloak

#endif  // STYLECLOAK_CORPUS_HPP

#ifndef STYLECLOAK_TARGET_SELECTION_HPP
#define STYLECLOAK_TARGET_SELECTION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "stylecloak/feature_space.hpp"
#include "stylecloak/rng.hpp"

namespace stylecloak {

struct StyleCandidate {
    std::string style_id;
    std::vector<ArtworkImage> exemplars;
    FeatureVector centroid;
};

inline StyleCandidate make_candidate(std::string style_id, std::vector<ArtworkImage> exemplars,
                                     const FeatureExtractor& extractor) {
    if (exemplars.empty()) throw InvalidInput("style '" + style_id + "' has no exemplars");
    std::vector<FeatureVector> feats;
    feats.reserve(exemplars.size());
    for (const auto& img : exemplars) feats.push_back(extract(extractor, img));
    FeatureVector c = centroid(feats);
    return {std::move(style_id), std::move(exemplars), std::move(c)};
}

class CandidateLibrary {
public:
    CandidateLibrary(std::vector<StyleCandidate> candidates, std::string extractor_name)
        : candidates_(std::move(candidates)), extractor_name_(std::move(extractor_name)) {
        std::set<std::string> seen;
        for (const auto& c : candidates_) {
            if (!seen.insert(c.style_id).second)
                throw InvalidInput("duplicate style_id '" + c.style_id + "'");
            if (c.exemplars.empty())
                throw InvalidInput("style '" + c.style_id + "' has no exemplars");
            if (!candidates_.empty() && c.centroid.dim() != candidates_.front().centroid.dim())
                throw InvalidInput("library centroids have mixed dimensions");
        }
    }

    const std::vector<StyleCandidate>& candidates() const { return candidates_; }
    const std::string& extractor_name() const { return extractor_name_; }
    std::size_t size() const { return candidates_.size(); }
    bool empty() const { return candidates_.empty(); }

    const StyleCandidate* find(const std::string& style_id) const {
        for (const auto& c : candidates_)
            if (c.style_id == style_id) return &c;
        return nullptr;
    }

private:
    std::vector<StyleCandidate> candidates_;
    std::string extractor_name_;
};

struct RankedCandidate {
    const StyleCandidate* candidate = nullptr;
    double distance = 0.0;
};

// Ascending centroid distance from the victim's centroid; ties by style_id.
inline std::vector<RankedCandidate> rank_candidates(std::span<const ArtworkImage> victim_art,
                                                    const CandidateLibrary& library,
                                                    const FeatureExtractor& extractor) {
    if (victim_art.empty()) throw InvalidInput("victim portfolio is empty");
    if (library.empty()) throw InvalidInput("candidate library is empty");
    if (library.extractor_name() != extractor.name())
        throw InvalidInput("library centroids were computed with '" + library.extractor_name() +
                           "', not '" + extractor.name() + "'");
    std::vector<FeatureVector> feats;
    feats.reserve(victim_art.size());
    for (const auto& img : victim_art) feats.push_back(extract(extractor, img));
    const FeatureVector victim = centroid(feats);

    std::vector<RankedCandidate> ranked;
    ranked.reserve(library.size());
    for (const auto& c : library.candidates())
        ranked.push_back({&c, feature_distance(c.centroid, victim)});
    std::ranges::sort(ranked, [](const RankedCandidate& a, const RankedCandidate& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.candidate->style_id < b.candidate->style_id;
    });
    return ranked;
}

struct PercentileWindow {
    double lo = 0.50;
    double hi = 0.75;
};

// 1-based inclusive rank band [ceil(lo*N), floor(hi*N)], clipped to [1, N].
// Returns {first, last}; first > last means the band is empty.
inline std::pair<std::size_t, std::size_t> eligible_rank_band(std::size_t n, PercentileWindow w) {
    if (!(w.lo >= 0.0 && w.lo < w.hi && w.hi <= 1.0))
        throw InvalidInput("percentile window must satisfy 0 <= lo < hi <= 1");
    constexpr double kTol = 1e-9;
    const double nn = static_cast<double>(n);
    auto first = static_cast<std::size_t>(std::max(1.0, std::ceil(w.lo * nn - kTol)));
    auto last = static_cast<std::size_t>(std::max(0.0, std::floor(w.hi * nn + kTol)));
    last = std::min(last, n);
    return {first, last};
}

inline const StyleCandidate& select_target(std::span<const RankedCandidate> ranked,
                                           PercentileWindow window, std::uint64_t seed) {
    if (ranked.empty()) throw InvalidInput("no ranked candidates");
    const auto [first, last] = eligible_rank_band(ranked.size(), window);
    if (first > last)
        throw NoEligibleCandidate("no candidate rank falls in the " + std::to_string(window.lo) +
                                  "-" + std::to_string(window.hi) + " band of " +
                                  std::to_string(ranked.size()) + " candidates");
    Rng rng(mix_seed(seed, 0x7a59));
    const std::size_t rank = first + static_cast<std::size_t>(rng.below(last - first + 1));
    return *ranked[rank - 1].candidate;
}

}  // namespace stylecloak

#endif  // STYLECLOAK_TARGET_SELECTION_HPP

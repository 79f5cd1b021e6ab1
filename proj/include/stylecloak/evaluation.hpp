#ifndef STYLECLOAK_EVALUATION_HPP
#define STYLECLOAK_EVALUATION_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylecloak/feature_space.hpp"
#include "stylecloak/mimicry.hpp"

namespace stylecloak {

class GenreClassifier {
public:
    virtual ~GenreClassifier() = default;
    virtual const std::vector<std::string>& labels() const = 0;
    // k distinct labels, most likely first. k is clipped to the label count.
    virtual std::vector<std::string> predict_topk(const ArtworkImage& image, int k) const = 0;

    bool has_label(const std::string& label) const {
        const auto& l = labels();
        return std::find(l.begin(), l.end(), label) != l.end();
    }
};

// Answers from a fixed table keyed by image id; unknown ids get `fallback`.
// Ranked lists are completed with the remaining labels in declaration order.
class StubGenreClassifier : public GenreClassifier {
public:
    StubGenreClassifier(std::vector<std::string> labels,
                        std::map<std::string, std::vector<std::string>> answers,
                        std::vector<std::string> fallback = {})
        : labels_(std::move(labels)), answers_(std::move(answers)), fallback_(std::move(fallback)) {
        if (labels_.empty()) throw InvalidInput("classifier needs labels");
    }

    const std::vector<std::string>& labels() const override { return labels_; }

    std::vector<std::string> predict_topk(const ArtworkImage& image, int k) const override {
        const auto it = answers_.find(image.id());
        const auto& ranked = it != answers_.end() ? it->second : fallback_;
        std::vector<std::string> out;
        auto push = [&](const std::string& l) {
            if (std::find(out.begin(), out.end(), l) == out.end() && has_label(l)) out.push_back(l);
        };
        for (const auto& l : ranked) push(l);
        for (const auto& l : labels_) push(l);
        out.resize(std::min<std::size_t>(out.size(), clip(k)));
        return out;
    }

private:
    std::size_t clip(int k) const { return static_cast<std::size_t>(std::clamp<int>(k, 0, static_cast<int>(labels_.size()))); }

    std::vector<std::string> labels_;
    std::map<std::string, std::vector<std::string>> answers_;
    std::vector<std::string> fallback_;
};

// Ranks genres by feature distance to per-genre centroids.
class CentroidGenreClassifier : public GenreClassifier {
public:
    CentroidGenreClassifier(std::shared_ptr<const FeatureExtractor> extractor,
                            std::vector<std::pair<std::string, FeatureVector>> centroids)
        : extractor_(std::move(extractor)), centroids_(std::move(centroids)) {
        if (centroids_.empty()) throw InvalidInput("classifier needs at least one genre");
        for (const auto& [label, c] : centroids_) {
            if (c.dim() != extractor_->dim()) throw InvalidInput("centroid dimension mismatch");
            labels_.push_back(label);
        }
        if (std::set<std::string>(labels_.begin(), labels_.end()).size() != labels_.size())
            throw InvalidInput("duplicate genre label");
    }

    static CentroidGenreClassifier from_examples(
        std::shared_ptr<const FeatureExtractor> extractor,
        const std::vector<std::pair<std::string, std::vector<ArtworkImage>>>& examples) {
        std::vector<std::pair<std::string, FeatureVector>> cs;
        for (const auto& [label, images] : examples) {
            std::vector<FeatureVector> feats;
            for (const auto& img : images) feats.push_back(extract(*extractor, img));
            cs.emplace_back(label, centroid(feats));
        }
        return CentroidGenreClassifier(std::move(extractor), std::move(cs));
    }

    const std::vector<std::string>& labels() const override { return labels_; }

    std::vector<std::string> predict_topk(const ArtworkImage& image, int k) const override {
        const FeatureVector f = extract(*extractor_, image);
        std::vector<std::pair<double, std::size_t>> order;
        for (std::size_t i = 0; i < centroids_.size(); ++i)
            order.emplace_back(feature_distance(f, centroids_[i].second), i);
        std::sort(order.begin(), order.end());
        std::vector<std::string> out;
        const int n = std::clamp<int>(k, 0, static_cast<int>(order.size()));
        for (int i = 0; i < n; ++i) out.push_back(labels_[order[static_cast<std::size_t>(i)].second]);
        return out;
    }

private:
    std::shared_ptr<const FeatureExtractor> extractor_;
    std::vector<std::pair<std::string, FeatureVector>> centroids_;
    std::vector<std::string> labels_;
};

// Zero-shot image/text classifier. The embedding functions are supplied by
// the caller (an external image-text model); genres are scored by cosine
// similarity between the image embedding and the embedding of the prompt.
class ZeroShotGenreClassifier : public GenreClassifier {
public:
    using ImageEmbedder = std::function<std::vector<double>(const ArtworkImage&)>;
    using TextEmbedder = std::function<std::vector<double>(const std::string&)>;

    static constexpr const char* kDefaultTemplate = "an artwork in the style of {genre}";

    ZeroShotGenreClassifier(std::vector<std::string> labels, ImageEmbedder image, TextEmbedder text,
                            std::string prompt_template = kDefaultTemplate)
        : labels_(std::move(labels)), image_(std::move(image)), template_(std::move(prompt_template)) {
        if (labels_.empty()) throw InvalidInput("classifier needs labels");
        for (const auto& l : labels_) text_.push_back(unit(text(prompt(l))));
    }

    std::string prompt(const std::string& genre) const {
        std::string s = template_;
        const auto pos = s.find("{genre}");
        if (pos != std::string::npos) s.replace(pos, 7, genre);
        return s;
    }

    const std::vector<std::string>& labels() const override { return labels_; }

    std::vector<std::string> predict_topk(const ArtworkImage& image, int k) const override {
        const std::vector<double> v = unit(image_(image));
        std::vector<std::pair<double, std::size_t>> order;
        for (std::size_t i = 0; i < text_.size(); ++i) {
            if (text_[i].size() != v.size()) throw InvalidInput("image/text embedding size mismatch");
            double dot = 0.0;
            for (std::size_t j = 0; j < v.size(); ++j) dot += v[j] * text_[i][j];
            order.emplace_back(-dot, i);
        }
        std::sort(order.begin(), order.end());
        std::vector<std::string> out;
        const int n = std::clamp<int>(k, 0, static_cast<int>(order.size()));
        for (int i = 0; i < n; ++i) out.push_back(labels_[order[static_cast<std::size_t>(i)].second]);
        return out;
    }

private:
    static std::vector<double> unit(std::vector<double> v) {
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        if (n > 0.0)
            for (double& x : v) x /= n;
        return v;
    }

    std::vector<std::string> labels_;
    ImageEmbedder image_;
    std::string template_;
    std::vector<std::vector<double>> text_;
};

struct GenreLabelSet {
    std::string version;
    std::vector<std::string> historical;
    std::vector<std::string> digital;

    std::vector<std::string> all() const {
        std::vector<std::string> out = historical;
        out.insert(out.end(), digital.begin(), digital.end());
        return out;
    }
};

inline GenreLabelSet load_genre_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFound("genre label file not found: " + path.string());
    const auto j = nlohmann::json::parse(in);
    return {j.at("version").get<std::string>(), j.at("historical").get<std::vector<std::string>>(),
            j.at("digital").get<std::vector<std::string>>()};
}

struct GenreShiftReport {
    std::string artist_id;
    std::string victim_genre;
    int total = 0;
    int shifted = 0;
    double rate = 0.0;
};

inline void to_json(nlohmann::json& j, const GenreShiftReport& r) {
    j = {{"artist_id", r.artist_id}, {"victim_genre", r.victim_genre}, {"total", r.total},
         {"shifted", r.shifted}, {"rate", r.rate}};
}

// Fraction of images whose top-k genres exclude `victim_genre`.
inline GenreShiftReport genre_shift_rate(std::span<const ArtworkImage> mimicked,
                                         const std::string& victim_genre,
                                         const GenreClassifier& classifier, int k = 3,
                                         std::string artist_id = {}) {
    if (!classifier.has_label(victim_genre)) throw InvalidInput("unknown genre '" + victim_genre + "'");
    if (mimicked.empty()) throw InvalidInput("no mimicked images to score");
    if (k < 1) throw InvalidInput("k must be >= 1");
    GenreShiftReport r{std::move(artist_id), victim_genre, static_cast<int>(mimicked.size()), 0, 0.0};
    for (const auto& img : mimicked) {
        const auto top = classifier.predict_topk(img, k);
        if (std::find(top.begin(), top.end(), victim_genre) == top.end()) ++r.shifted;
    }
    r.rate = static_cast<double>(r.shifted) / r.total;
    return r;
}

inline double aggregate_psr(std::span<const int> ratings) {
    if (ratings.empty()) throw InvalidInput("no ratings to aggregate");
    int ok = 0;
    for (int r : ratings) {
        if (r < 1 || r > 5) throw InvalidInput("rating " + std::to_string(r) + " outside 1..5");
        ok += r >= 4;
    }
    return static_cast<double>(ok) / static_cast<double>(ratings.size());
}

struct PSRRecord {
    std::string scenario_id;
    std::vector<int> ratings;
    double psr = 0.0;
};

// CSV with header scenario_id,rater_id,rating. Scenarios come back sorted.
inline std::vector<PSRRecord> ingest_ratings_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput("ratings CSV is empty");
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
            while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
            cells.push_back(cell);
        }
        return cells;
    };
    const auto header = split(line);
    auto col = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw InvalidInput("ratings CSV lacks column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_scn = col("scenario_id"), c_rating = col("rating");
    col("rater_id");
    std::map<std::string, std::vector<int>> grouped;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
        const auto cells = split(line);
        if (cells.size() < header.size())
            throw InvalidInput("ratings CSV line " + std::to_string(line_no) + " is short");
        int rating = 0;
        try {
            std::size_t used = 0;
            rating = std::stoi(cells[c_rating], &used);
            if (used != cells[c_rating].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw InvalidInput("ratings CSV line " + std::to_string(line_no) + " has a bad rating");
        }
        grouped[cells[c_scn]].push_back(rating);
    }
    std::vector<PSRRecord> out;
    for (auto& [scenario, ratings] : grouped) {
        const double psr = aggregate_psr(ratings);
        out.push_back({scenario, std::move(ratings), psr});
    }
    return out;
}

struct SeedRobustness {
    int pass_count = 0;
    double pass_rate = 0.0;
    int attempted = 0;
    std::vector<std::string> errors;
};

// Generations (seeds 0..n-1) whose top-3 still contains the victim genre.
inline SeedRobustness seed_robustness_analysis(const GeneratorModel& model, const std::string& caption,
                                               int n_seeds, const GenreClassifier& classifier,
                                               const std::string& victim_genre, int k = 3) {
    if (n_seeds < 1) throw InvalidInput("n_seeds must be >= 1");
    if (!classifier.has_label(victim_genre)) throw InvalidInput("unknown genre '" + victim_genre + "'");
    SeedRobustness r;
    r.attempted = n_seeds;
    for (int s = 0; s < n_seeds; ++s) {
        try {
            const auto top = classifier.predict_topk(model.generate(caption, static_cast<std::uint64_t>(s)), k);
            if (std::find(top.begin(), top.end(), victim_genre) != top.end()) ++r.pass_count;
        } catch (const std::exception& e) {
            r.errors.push_back("seed " + std::to_string(s) + ": " + e.what());
        }
    }
    r.pass_rate = static_cast<double>(r.pass_count) / n_seeds;
    return r;
}

struct ClassifierValidation {
    double top_k_accuracy = 0.0;
    int evaluated = 0;
    std::vector<std::string> skipped;  // ids whose label is outside the classifier set
};

inline ClassifierValidation validate_classifier(const GenreClassifier& classifier,
                                                std::span<const ArtworkImage> corpus, int k = 3) {
    ClassifierValidation v;
    int hits = 0;
    for (const auto& img : corpus) {
        if (!img.genre() || !classifier.has_label(*img.genre())) {
            v.skipped.push_back(img.id());
            continue;
        }
        ++v.evaluated;
        const auto top = classifier.predict_topk(img, k);
        hits += std::find(top.begin(), top.end(), *img.genre()) != top.end();
    }
    if (v.evaluated == 0) throw InvalidInput("no labelled items to validate against");
    v.top_k_accuracy = static_cast<double>(hits) / v.evaluated;
    return v;
}

// A reference number quoted from the original study; never recomputed here.
struct GoldenRow {
    std::string id;
    std::string description;
    double value = 0.0;
    std::string unit;
};

inline std::vector<GoldenRow> load_golden_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFound("golden rows file not found: " + path.string());
    const auto j = nlohmann::json::parse(in);
    std::vector<GoldenRow> rows;
    for (const auto& r : j.at("rows"))
        rows.push_back({r.at("id"), r.at("description"), r.at("value"), r.value("unit", "")});
    return rows;
}

// One row per scenario, laid out like the study's results table.
struct ScenarioRow {
    std::string scenario_id;
    std::string generator;
    std::string artist_type;
    std::optional<double> psr;
    std::optional<GenreShiftReport> genre_shift;
};

inline nlohmann::json scenario_report(std::span<const ScenarioRow> rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json j = {{"scenario_id", r.scenario_id}, {"generator", r.generator},
                            {"artist_type", r.artist_type}};
        j["psr"] = r.psr ? nlohmann::json(*r.psr) : nlohmann::json(nullptr);
        j["genre_shift"] = r.genre_shift ? nlohmann::json(*r.genre_shift) : nlohmann::json(nullptr);
        out.push_back(std::move(j));
    }
    return out;
}

}  // namespace stylecloak

#endif  // STYLECLOAK_EVALUATION_HPP

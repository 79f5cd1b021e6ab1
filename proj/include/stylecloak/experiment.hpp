#ifndef STYLECLOAK_EXPERIMENT_HPP
#define STYLECLOAK_EXPERIMENT_HPP

#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylecloak/autoencoder.hpp"
#include "stylecloak/cloak_engine.hpp"
#include "stylecloak/corpus.hpp"
#include "stylecloak/defaults.hpp"
#include "stylecloak/evaluation.hpp"
#include "stylecloak/mimicry.hpp"
#include "stylecloak/perceptual.hpp"
#include "stylecloak/reference_extractor.hpp"
#include "stylecloak/style_transfer.hpp"

namespace stylecloak {

// Shortest round-trip text for a budget, used in file names and URLs.
inline std::string budget_key(double p) {
    std::ostringstream out;
    out << p;
    return out.str();
}

// The desk-scale world: two-style victim corpus, generic pretraining art, a
// candidate library and a centroid "genre" classifier, all under the
// reference encoder.
struct DeskLabConfig {
    int n_per_style = 30;
    std::uint64_t corpus_seed = 1;
    int generic_styles = 24;
    int generic_per_style = 6;
    std::uint64_t generic_seed = 7;
    int reference_per_style = 20;     // classifier centroid renders
    int library_extra_styles = 7;     // candidates besides style-b
    std::uint64_t library_seed = 99;
    int exemplars = defaults::kExemplarsPerCandidate;
    double temperature = 0.25;
    int size = kSyntheticSize;
};

inline void to_json(nlohmann::json& j, const DeskLabConfig& c) {
    j = {{"n_per_style", c.n_per_style}, {"corpus_seed", c.corpus_seed},
         {"generic_styles", c.generic_styles}, {"generic_per_style", c.generic_per_style},
         {"generic_seed", c.generic_seed}, {"reference_per_style", c.reference_per_style},
         {"library_extra_styles", c.library_extra_styles}, {"library_seed", c.library_seed},
         {"exemplars", c.exemplars}, {"temperature", c.temperature}, {"size", c.size}};
}

inline void from_json(const nlohmann::json& j, DeskLabConfig& c) {
    const DeskLabConfig d;
    c.n_per_style = j.value("n_per_style", d.n_per_style);
    c.corpus_seed = j.value("corpus_seed", d.corpus_seed);
    c.generic_styles = j.value("generic_styles", d.generic_styles);
    c.generic_per_style = j.value("generic_per_style", d.generic_per_style);
    c.generic_seed = j.value("generic_seed", d.generic_seed);
    c.reference_per_style = j.value("reference_per_style", d.reference_per_style);
    c.library_extra_styles = j.value("library_extra_styles", d.library_extra_styles);
    c.library_seed = j.value("library_seed", d.library_seed);
    c.exemplars = j.value("exemplars", d.exemplars);
    c.temperature = j.value("temperature", d.temperature);
    c.size = j.value("size", d.size);
}

// style-b plus `extra` procedurally generated candidate styles.
inline CandidateLibrary make_desk_library(const FeatureExtractor& extractor, const DeskLabConfig& cfg) {
    std::vector<StyleCandidate> cands;
    cands.push_back(make_candidate(
        "style-b",
        render_style_set(cool_checker_style(), cfg.exemplars, cfg.size, mix_seed(cfg.library_seed, 0xb), "library"),
        extractor));
    auto family = make_style_family(cfg.library_extra_styles, cfg.library_seed);
    for (std::size_t i = 0; i < family.size(); ++i) {
        family[i].name = "library-" + std::to_string(i);
        cands.push_back(make_candidate(
            family[i].name,
            render_style_set(family[i], cfg.exemplars, cfg.size, mix_seed(cfg.library_seed, 100 + i), "library"),
            extractor));
    }
    return CandidateLibrary(std::move(cands), extractor.name());
}

struct DeskLab {
    DeskLabConfig config;
    std::shared_ptr<const ConvEncoder> encoder;
    std::shared_ptr<const FeatureDifferenceMetric> metric;
    std::vector<ArtworkImage> generic;
    std::shared_ptr<const ToyAutoencoder> autoencoder;
    SyntheticCorpus corpus;
    std::shared_ptr<const CandidateLibrary> library;
    std::shared_ptr<const CentroidGenreClassifier> classifier;  // style-a + every library style
};

inline DeskLab build_desk_lab(const DeskLabConfig& cfg = {}) {
    DeskLab lab;
    lab.config = cfg;
    lab.encoder = std::make_shared<const ConvEncoder>(ConvEncoder::reference());
    lab.metric = std::make_shared<const FeatureDifferenceMetric>(FeatureDifferenceMetric::from_encoder(*lab.encoder));
    lab.generic = make_generic_corpus(cfg.generic_styles, cfg.generic_per_style, cfg.generic_seed, cfg.size);
    lab.autoencoder = std::make_shared<const ToyAutoencoder>(ToyAutoencoder::fit(*lab.encoder, lab.generic));
    lab.corpus = make_synthetic_corpus(cfg.n_per_style, cfg.corpus_seed, cfg.size);
    lab.library = std::make_shared<const CandidateLibrary>(make_desk_library(*lab.encoder, cfg));

    std::vector<std::pair<std::string, FeatureVector>> cs;
    std::vector<FeatureVector> fa;
    for (const auto& img : render_style_set(lab.corpus.style_a, cfg.reference_per_style, cfg.size,
                                            mix_seed(cfg.corpus_seed, 0xa11), "reference"))
        fa.push_back(extract(*lab.encoder, img));
    cs.emplace_back("style-a", centroid(fa));
    for (const auto& c : lab.library->candidates()) cs.emplace_back(c.style_id, c.centroid);
    lab.classifier = std::make_shared<const CentroidGenreClassifier>(lab.encoder, std::move(cs));
    return lab;
}

inline ToyGenerator desk_pretrained_generator(const DeskLab& lab) {
    return ToyGenerator::pretrained(lab.autoencoder, lab.generic, lab.config.temperature);
}

// Captioned style-a dataset split into train and held-out test.
struct DeskDataset {
    std::vector<CaptionedArtwork> train;
    std::vector<CaptionedArtwork> test;
};

inline DeskDataset make_desk_dataset(const DeskLab& lab, double train_ratio = defaults::kTrainFraction,
                                     std::uint64_t split_seed = 3) {
    StubCaptioner captioner{std::string(defaults::kCaptionTemplate)};
    const auto data = build_caption_dataset(lab.corpus.a, "artist-a", captioner);
    auto [train, test] = split_train_test(data, train_ratio, split_seed);
    return {std::move(train), std::move(test)};
}

// Cloaks every training image toward `target_style`; failed items stay empty.
inline std::vector<std::optional<ArtworkImage>> cloak_training_images(const DeskLab& lab,
                                                                      std::span<const CaptionedArtwork> train,
                                                                      const std::string& target_style,
                                                                      const CloakConfig& config, int workers = 1,
                                                                      std::vector<PortfolioItem>* items_out = nullptr) {
    const StyleCandidate* target = lab.library->find(target_style);
    if (!target) throw NotFound("style '" + target_style + "' is not in the desk library");
    std::vector<ArtworkImage> images;
    for (const auto& t : train) images.push_back(t.image);
    ColorStatisticsTransfer backend;
    auto items = cloak_portfolio(images, *target, backend, *lab.encoder, *lab.metric, config, workers);
    std::vector<std::optional<ArtworkImage>> out;
    for (const auto& item : items) {
        if (item.ok()) out.emplace_back(item.result->cloaked_image);
        else out.emplace_back(std::nullopt);
    }
    if (items_out) *items_out = std::move(items);
    return out;
}

struct MimicryConfig {
    FineTuneConfig finetune{defaults::kFineTuneSteps, defaults::kToyLearningRate, 32, 0};
    int seeds_per_caption = defaults::kSeedsPerCaption;
    int top_k = 1;  // two-style desk classifier, see README
};

struct MimicryOutcome {
    GenreShiftReport report;
    std::vector<GeneratedArtwork> generations;
    std::vector<double> loss_trace;
    std::uint64_t model_hash = 0;
};

// Fine-tunes the pretrained generator on `train`, generates from the test
// captions and scores the genre shift away from style-a.
inline MimicryOutcome run_mimicry(const DeskLab& lab, std::span<const CaptionedArtwork> train,
                                  std::span<const CaptionedArtwork> test, const MimicryConfig& config) {
    auto ft = finetune(desk_pretrained_generator(lab), train, config.finetune);
    std::vector<std::string> captions;
    for (const auto& t : test) captions.push_back(t.caption);
    MimicryOutcome out;
    out.generations = generate_mimicry(ft.model, captions, config.seeds_per_caption);
    std::vector<ArtworkImage> images;
    for (const auto& g : out.generations)
        if (g.image) images.push_back(*g.image);
    out.report = genre_shift_rate(images, "style-a", *lab.classifier, config.top_k, "artist-a");
    out.loss_trace = std::move(ft.loss_trace);
    out.model_hash = ft.model.parameter_hash();
    return out;
}

// Training set where round(fraction * N) images are replaced by cloaks.
inline std::vector<CaptionedArtwork> mix_training_set(std::span<const CaptionedArtwork> train,
                                                      std::span<const std::optional<ArtworkImage>> cloaked,
                                                      double fraction, std::uint64_t seed) {
    std::vector<ArtworkImage> originals;
    for (const auto& t : train) originals.push_back(t.image);
    const auto mixed = mix_cloaked_fraction(originals, cloaked, fraction, seed);
    std::vector<CaptionedArtwork> out;
    for (std::size_t i = 0; i < train.size(); ++i) out.push_back({mixed[i].image, train[i].caption});
    return out;
}

}  // namespace stylecloak

#endif  // STYLECLOAK_EXPERIMENT_HPP

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <sstream>

#include "stylecloak/evaluation.hpp"
#include "stylecloak/mimicry.hpp"
#include "stylecloak/reference_extractor.hpp"
#include "test_support.hpp"

using namespace stylecloak;

namespace {

const std::vector<std::string> kLabels{"impressionism", "cubism", "baroque", "ukiyo-e", "pop-art", "fantasy"};

std::vector<ArtworkImage> tagged(int n, const std::string& prefix = "m") {
    std::vector<ArtworkImage> out;
    for (int i = 0; i < n; ++i) out.push_back(ArtworkImage::filled(2, 2, 0, 0, 0, prefix + std::to_string(i)));
    return out;
}

// Each generation is a blank image named after its seed.
class SeedNamedGenerator : public GeneratorModel {
public:
    std::string name() const override { return "seed-named"; }
    FeatureVector condition(const std::string&) const override { return FeatureVector({0.0}); }
    ArtworkImage generate(const std::string&, std::uint64_t seed) const override {
        if (seed == fail_seed) throw std::runtime_error("sampler fault");
        return ArtworkImage::filled(2, 2, 0, 0, 0, "seed-" + std::to_string(seed));
    }
    std::uint64_t parameter_hash() const override { return 1; }
    std::uint64_t fail_seed = 1u << 30;
};

}  // namespace

TEST_CASE("genre shift extremes") {
    const auto imgs = tagged(7);
    StubGenreClassifier first(kLabels, {}, {"cubism"});
    const auto zero = genre_shift_rate(imgs, "cubism", first);
    CHECK(zero.shifted == 0);
    CHECK(zero.rate == 0.0);
    StubGenreClassifier never(kLabels, {}, {"fantasy", "baroque", "pop-art", "cubism"});
    const auto one = genre_shift_rate(imgs, "cubism", never);
    CHECK(one.shifted == 7);
    CHECK(one.total == 7);
    CHECK(one.rate == 1.0);
}

TEST_CASE("genre shift counts hand-labelled stub answers") {
    std::map<std::string, std::vector<std::string>> answers{
        {"m0", {"cubism"}},
        {"m1", {"baroque", "cubism"}},
        {"m2", {"baroque", "fantasy", "cubism"}},
        {"m3", {"baroque", "fantasy", "pop-art", "cubism"}},
        {"m4", {"ukiyo-e", "pop-art", "fantasy"}},
        {"m5", {"impressionism"}},  // completed by declaration order: impressionism, cubism
        {"m6", {"fantasy", "pop-art", "ukiyo-e"}},
        {"m7", {"pop-art", "cubism", "fantasy"}},
        {"m8", {"baroque", "ukiyo-e", "fantasy"}},
        {"m9", {"fantasy", "baroque", "impressionism"}}};
    StubGenreClassifier stub(kLabels, answers);
    // top-3 without cubism: m3, m4, m6, m8, m9
    const auto r = genre_shift_rate(tagged(10), "cubism", stub, 3, "ann");
    CHECK(r.artist_id == "ann");
    CHECK(r.victim_genre == "cubism");
    CHECK(r.shifted == 5);
    CHECK(r.rate == 0.5);
    // top-1 without cubism: everything except m0
    CHECK(genre_shift_rate(tagged(10), "cubism", stub, 1).shifted == 9);
}

TEST_CASE("genre shift errors") {
    StubGenreClassifier stub(kLabels, {});
    CHECK_THROWS_AS(genre_shift_rate(tagged(2), "surrealism", stub), InvalidInput);
    CHECK_THROWS_AS(genre_shift_rate(std::span<const ArtworkImage>{}, "cubism", stub), InvalidInput);
    CHECK_THROWS_AS(genre_shift_rate(tagged(2), "cubism", stub, 0), InvalidInput);
}

TEST_CASE("genre shift properties on random stub classifiers") {
    Rng rng(5);
    for (int trial = 0; trial < 150; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(25));
        std::map<std::string, std::vector<std::string>> answers;
        for (int i = 0; i < n; ++i) {
            auto ranked = kLabels;
            rng.shuffle(ranked);
            answers["m" + std::to_string(i)] = ranked;
        }
        StubGenreClassifier stub(kLabels, answers);
        const std::string victim = kLabels[rng.below(kLabels.size())];
        const auto imgs = tagged(n);
        double previous = 1.0;
        for (int k = 1; k <= 6; ++k) {
            const auto r = genre_shift_rate(imgs, victim, stub, k);
            // enumerate-and-count oracle
            int retained = 0;
            for (int i = 0; i < n; ++i) {
                const auto& ranked = answers["m" + std::to_string(i)];
                retained += std::find(ranked.begin(), ranked.begin() + k, victim) != ranked.begin() + k;
            }
            CHECK(r.shifted == n - retained);
            CHECK(r.rate + static_cast<double>(retained) / n == 1.0);
            CHECK(r.rate <= previous);
            previous = r.rate;
            for (const auto& img : imgs) {
                const auto top = stub.predict_topk(img, k);
                CHECK(top.size() == static_cast<std::size_t>(k));
                CHECK(std::set<std::string>(top.begin(), top.end()).size() == top.size());
            }
        }
    }
}

TEST_CASE("PSR aggregation") {
    CHECK(aggregate_psr(std::vector<int>{5, 5, 4, 2, 1}) == Catch::Approx(0.6));
    CHECK(aggregate_psr(std::vector<int>{5, 5, 5}) == 1.0);
    CHECK(aggregate_psr(std::vector<int>{3}) == 0.0);
    CHECK_THROWS_AS(aggregate_psr(std::vector<int>{}), InvalidInput);
    CHECK_THROWS_AS(aggregate_psr(std::vector<int>{4, 6}), InvalidInput);
    CHECK_THROWS_AS(aggregate_psr(std::vector<int>{0}), InvalidInput);

    Rng rng(8);
    for (int trial = 0; trial < 150; ++trial) {
        std::vector<int> ratings(1 + rng.below(40));
        for (int& r : ratings) r = 1 + static_cast<int>(rng.below(5));
        const auto expected = static_cast<double>(std::count_if(ratings.begin(), ratings.end(), [](int r) { return r >= 4; })) /
                              static_cast<double>(ratings.size());
        CHECK(aggregate_psr(ratings) == expected);
        auto shuffled = ratings;
        rng.shuffle(shuffled);
        CHECK(aggregate_psr(shuffled) == aggregate_psr(ratings));
    }
}

TEST_CASE("ratings CSV ingestion") {
    std::istringstream csv(
        "scenario_id,rater_id,rating\n"
        "cloaked,r1,5\n"
        "cloaked,r2,4\n"
        "uncloaked,r1,1\n"
        "cloaked,r3,2\n"
        "\n"
        "uncloaked, r2 , 4\r\n");
    const auto recs = ingest_ratings_csv(csv);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].scenario_id == "cloaked");
    CHECK(recs[0].ratings == std::vector<int>{5, 4, 2});
    CHECK(recs[0].psr == Catch::Approx(2.0 / 3.0));
    CHECK(recs[1].psr == 0.5);

    std::istringstream no_column("scenario,rater_id,rating\n");
    CHECK_THROWS_AS(ingest_ratings_csv(no_column), InvalidInput);
    std::istringstream bad("scenario_id,rater_id,rating\ncloaked,r1,five\n");
    CHECK_THROWS_AS(ingest_ratings_csv(bad), InvalidInput);
    std::istringstream out_of_range("scenario_id,rater_id,rating\ncloaked,r1,9\n");
    CHECK_THROWS_AS(ingest_ratings_csv(out_of_range), InvalidInput);
}

TEST_CASE("seed robustness") {
    SeedNamedGenerator gen;
    StubGenreClassifier never(kLabels, {}, {"fantasy", "baroque", "pop-art"});
    const auto none = seed_robustness_analysis(gen, "a river by ann", 100, never, "cubism");
    CHECK(none.pass_count == 0);
    CHECK(none.attempted == 100);

    StubGenreClassifier always(kLabels, {}, {"cubism"});
    const auto single = seed_robustness_analysis(gen, "a river by ann", 1, always, "cubism");
    CHECK(single.pass_count == 1);
    CHECK(single.pass_rate == 1.0);

    // seeds 3 and 7 pass; seed 5 faults
    StubGenreClassifier some(kLabels, {{"seed-3", {"cubism"}}, {"seed-7", {"baroque", "cubism"}}},
                             {"fantasy", "baroque", "pop-art"});
    gen.fail_seed = 5;
    const auto r = seed_robustness_analysis(gen, "x", 10, some, "cubism");
    CHECK(r.pass_count == 2);
    CHECK(r.pass_rate == 0.2);
    REQUIRE(r.errors.size() == 1);
    CHECK(r.errors[0].find("seed 5") != std::string::npos);
    CHECK_THROWS_AS(seed_robustness_analysis(gen, "x", 0, some, "cubism"), InvalidInput);
}

TEST_CASE("classifier validation harness") {
    std::vector<ArtworkImage> corpus;
    std::map<std::string, std::vector<std::string>> echo, wrong, planted;
    for (int i = 0; i < 20; ++i) {
        auto img = ArtworkImage::filled(2, 2, 0, 0, 0, "v" + std::to_string(i));
        const std::string truth = kLabels[i % 5];
        img.set_genre(truth);
        echo[img.id()] = {truth};
        wrong[img.id()] = {"fantasy", "fantasy"};
        // the first 15 carry the truth in third place; the rest never do
        std::vector<std::string> others;
        for (const auto& l : kLabels)
            if (l != truth) others.push_back(l);
        planted[img.id()] = i < 15 ? std::vector<std::string>{others[0], others[1], truth}
                                   : std::vector<std::string>{others[0], others[1], others[2]};
        corpus.push_back(img);
    }
    CHECK(validate_classifier(StubGenreClassifier(kLabels, echo), corpus).top_k_accuracy == 1.0);
    CHECK(validate_classifier(StubGenreClassifier(kLabels, wrong), corpus, 1).top_k_accuracy == 0.0);
    const auto v = validate_classifier(StubGenreClassifier(kLabels, planted), corpus);
    CHECK(v.evaluated == 20);
    CHECK(v.top_k_accuracy == 0.75);

    auto stray = ArtworkImage::filled(2, 2, 0, 0, 0, "stray");
    stray.set_genre(std::string("vaporwave"));
    corpus.push_back(stray);
    corpus.push_back(ArtworkImage::filled(2, 2, 0, 0, 0, "unlabelled"));
    const auto with_skips = validate_classifier(StubGenreClassifier(kLabels, planted), corpus);
    CHECK(with_skips.evaluated == 20);
    CHECK(with_skips.skipped == std::vector<std::string>{"stray", "unlabelled"});
}

TEST_CASE("centroid classifier ranks by distance to genre centroids") {
    auto ex = std::make_shared<const IdentityExtractor>(1, 1);
    CentroidGenreClassifier c(ex, {{"red", FeatureVector({1, 0, 0})},
                                   {"green", FeatureVector({0, 1, 0})},
                                   {"blue", FeatureVector({0, 0, 1})}});
    const auto top = c.predict_topk(ArtworkImage::filled(1, 1, 0.9, 0.3, 0.0), 3);
    CHECK(top == std::vector<std::string>{"red", "green", "blue"});
    CHECK(c.predict_topk(ArtworkImage::filled(1, 1, 0, 0, 1), 10).size() == 3);
    CHECK_THROWS_AS(CentroidGenreClassifier(ex, {{"a", FeatureVector({1, 0, 0})}, {"a", FeatureVector({0, 1, 0})}}),
                    InvalidInput);
}

TEST_CASE("zero-shot classifier builds prompts from the template") {
    std::vector<std::string> prompts;
    ZeroShotGenreClassifier zs(
        {"cubism", "baroque"},
        [](const ArtworkImage& img) { return std::vector<double>{img.at(0, 0, 0), img.at(1, 0, 0)}; },
        [&](const std::string& text) {
            prompts.push_back(text);
            return text.find("cubism") != std::string::npos ? std::vector<double>{1, 0} : std::vector<double>{0, 1};
        });
    CHECK(prompts == std::vector<std::string>{"an artwork in the style of cubism", "an artwork in the style of baroque"});
    CHECK(zs.predict_topk(ArtworkImage::filled(1, 1, 0.9, 0.1, 0), 1) == std::vector<std::string>{"cubism"});
    CHECK(zs.predict_topk(ArtworkImage::filled(1, 1, 0.1, 0.9, 0), 2) == std::vector<std::string>{"baroque", "cubism"});
}

TEST_CASE("shipped genre list has 27 historical and 13 digital genres") {
    const auto labels = load_genre_labels(std::filesystem::path(STYLECLOAK_DATA_DIR) / "genres.json");
    CHECK(labels.historical.size() == 27);
    CHECK(labels.digital.size() == 13);
    const auto all = labels.all();
    CHECK(all.size() == 40);
    CHECK(std::set<std::string>(all.begin(), all.end()).size() == 40);
    CHECK(!labels.version.empty());
    CHECK_THROWS_AS(load_genre_labels("/nonexistent/genres.json"), NotFound);
}

TEST_CASE("golden rows hold the published reference numbers") {
    const auto rows = load_golden_rows(std::filesystem::path(STYLECLOAK_DATA_DIR) / "golden_rows.json");
    const std::map<std::string, double> expected{
        {"psr_uncloaked_sd_historical", 4.2},     {"genre_shift_uncloaked_sd_historical", 1.3},
        {"psr_cloaked_sd_historical", 93.3},      {"genre_shift_cloaked_sd_historical", 96.0},
        {"psr_cloaked_sd_current", 94.3},         {"genre_shift_cloaked_sd_current", 96.4},
        {"psr_budget_0.1", 95.9},                 {"psr_budget_0.2", 96.1},
        {"genre_shift_budget_0.1", 98.2},         {"genre_shift_budget_0.2", 98.5},
        {"cross_extractor_psr", 90.2},            {"cross_extractor_genre_shift", 94.0},
        {"seed_robustness_pass", 4.3},            {"outlier_precision", 65.0},
        {"outlier_recall", 53.0},                 {"classifier_top3_wikiart", 96.4},
        {"classifier_top3_digital", 94.2}};
    REQUIRE(rows.size() == expected.size());
    for (const auto& r : rows) {
        INFO(r.id);
        REQUIRE(expected.contains(r.id));
        CHECK(r.value == expected.at(r.id));
        CHECK(r.unit.starts_with("%"));
    }
}

TEST_CASE("scenario report lays out optional columns") {
    GenreShiftReport g{"ann", "style-a", 10, 9, 0.9};
    std::vector<ScenarioRow> rows{{"cloaked", "toy", "synthetic", std::nullopt, g},
                                  {"survey", "sd", "current", 0.6, std::nullopt}};
    const auto j = scenario_report(rows);
    REQUIRE(j.size() == 2);
    CHECK(j[0]["psr"].is_null());
    CHECK(j[0]["genre_shift"]["rate"] == 0.9);
    CHECK(j[1]["psr"] == 0.6);
    CHECK(j[1]["genre_shift"].is_null());
}

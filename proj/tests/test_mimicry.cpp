#include <catch_amalgamated.hpp>

#include <set>

#include "stylecloak/experiment.hpp"
#include "test_support.hpp"

using namespace stylecloak;

namespace {

const DeskLab& small_lab() {
    static const DeskLab lab = [] {
        DeskLabConfig cfg;
        cfg.n_per_style = 10;
        cfg.generic_styles = 8;
        cfg.generic_per_style = 3;
        cfg.size = 32;
        return build_desk_lab(cfg);
    }();
    return lab;
}

class FlakyCaptioner : public Captioner {
public:
    std::string name() const override { return "flaky"; }
    std::optional<std::string> describe(const ArtworkImage& image) const override {
        if (image.id() == "skip") return std::nullopt;
        if (image.id() == "boom") throw std::runtime_error("model crashed");
        return "a picture of " + image.id();
    }
};

std::vector<int> iota(int n) {
    std::vector<int> v(n);
    for (int i = 0; i < n; ++i) v[i] = i;
    return v;
}

}  // namespace

TEST_CASE("captions end with the artist suffix") {
    std::vector<ArtworkImage> art{ArtworkImage::filled(2, 2, 0, 0, 0, "river")};
    const auto ds = build_caption_dataset(art, "Nathan Fowkes", StubCaptioner("artwork"));
    REQUIRE(ds.size() == 1);
    CHECK(ds[0].caption == "artwork by Nathan Fowkes");
    CHECK(build_caption_dataset(std::span<const ArtworkImage>{}, "x", StubCaptioner()).empty());
    CHECK_THROWS_AS(build_caption_dataset(art, "", StubCaptioner()), InvalidInput);
}

TEST_CASE("stub captioner substitutes metadata and is deterministic") {
    std::vector<ArtworkImage> art;
    for (int i = 0; i < 10; ++i) {
        art.push_back(testing::random_image(4, 4, i, "piece-" + std::to_string(i)));
        art.back().set_genre(std::string("landscape"));
    }
    StubCaptioner cap("a {genre} called {id}");
    const auto a = build_caption_dataset(art, "ann", cap);
    const auto b = build_caption_dataset(art, "ann", cap);
    REQUIRE(a.size() == 10);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].caption == b[i].caption);
        CHECK(a[i].caption == "a landscape called piece-" + std::to_string(i) + " by ann");
    }
}

TEST_CASE("captioner failures skip the item with a warning") {
    std::vector<ArtworkImage> art{ArtworkImage::filled(2, 2, 0, 0, 0, "ok"), ArtworkImage::filled(2, 2, 0, 0, 0, "skip"),
                                  ArtworkImage::filled(2, 2, 0, 0, 0, "boom")};
    std::vector<CaptionWarning> warnings;
    const auto ds = build_caption_dataset(art, "ann", FlakyCaptioner(), &warnings);
    REQUIRE(ds.size() == 1);
    CHECK(ds[0].caption == "a picture of ok by ann");
    REQUIRE(warnings.size() == 2);
    CHECK(warnings[0].image_id == "skip");
    CHECK(warnings[1].reason == "model crashed");
}

TEST_CASE("train/test split sizes, disjointness and determinism") {
    {
        const auto [train, test] = split_train_test(iota(30), 0.8, 1);
        CHECK(train.size() == 24);
        CHECK(test.size() == 6);
        std::set<int> all(train.begin(), train.end());
        for (int t : test) CHECK(all.insert(t).second);
        CHECK(all.size() == 30);
    }
    {
        const auto [train, test] = split_train_test(iota(2), 0.5, 1);
        CHECK(train.size() == 1);
        CHECK(test.size() == 1);
    }
    CHECK(split_train_test(iota(17), 0.8, 5) == split_train_test(iota(17), 0.8, 5));
    CHECK_THROWS_AS(split_train_test(iota(1), 0.5, 1), InvalidInput);
    CHECK_THROWS_AS(split_train_test(iota(5), 1.0, 1), InvalidInput);

    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(60));
        const double ratio = rng.uniform(0.05, 0.95);
        const auto [train, test] = split_train_test(iota(n), ratio, trial);
        CHECK(train.size() == static_cast<std::size_t>(std::llround(ratio * n)));
        CHECK(train.size() + test.size() == static_cast<std::size_t>(n));
    }
}

TEST_CASE("fine-tuning defaults to 3000 steps") {
    CHECK(FineTuneConfig{}.steps == 3000);
    CHECK(FineTuneConfig{}.batch_size == 32);
}

TEST_CASE("zero fine-tune steps leave the model unchanged") {
    const auto& lab = small_lab();
    const auto model = desk_pretrained_generator(lab);
    const auto ds = make_desk_dataset(lab);
    FineTuneConfig cfg;
    cfg.steps = 0;
    const auto out = finetune(model, ds.train, cfg);
    CHECK(out.model.parameter_hash() == model.parameter_hash());
    CHECK(out.loss_trace.empty());
    CHECK_THROWS_AS(finetune(model, std::span<const CaptionedArtwork>{}, FineTuneConfig{}), InvalidInput);
}

TEST_CASE("fine-tuning on four images lowers the loss") {
    const auto& lab = small_lab();
    const auto model = desk_pretrained_generator(lab);
    const auto ds = make_desk_dataset(lab);
    const std::vector<CaptionedArtwork> four(ds.train.begin(), ds.train.begin() + 4);
    FineTuneConfig cfg;
    cfg.steps = 200;
    const auto out = finetune(model, four, cfg);
    REQUIRE(out.loss_trace.size() == 200);
    CHECK(out.loss_trace.back() < out.loss_trace.front());
    CHECK(generator_loss(out.model, four) < generator_loss(model, four));
    CHECK(out.model.parameter_hash() != model.parameter_hash());
    CHECK(finetune(model, four, cfg).model.parameter_hash() == out.model.parameter_hash());
}

TEST_CASE("generation counts and determinism") {
    const auto& lab = small_lab();
    const auto model = desk_pretrained_generator(lab);
    std::vector<std::string> captions;
    for (int i = 0; i < 6; ++i) captions.push_back("caption " + std::to_string(i) + " by ann");
    const auto gens = generate_mimicry(model, captions, 5);
    REQUIRE(gens.size() == 30);
    for (const auto& g : gens) {
        CHECK(g.image.has_value());
        CHECK(g.seed < 5);
    }
    CHECK(gens[0].caption == captions[0]);
    CHECK(gens[29].caption == captions[5]);
    CHECK(model.generate(captions[0], 3).pixels() == model.generate(captions[0], 3).pixels());
    CHECK_FALSE(model.generate(captions[0], 3).pixels() == model.generate(captions[0], 4).pixels());
    CHECK(generate_mimicry(model, captions, 0).empty());
}

TEST_CASE("generator parameters round trip through JSON") {
    const auto& lab = small_lab();
    const auto ds = make_desk_dataset(lab);
    FineTuneConfig cfg;
    cfg.steps = 20;
    const auto tuned = finetune(desk_pretrained_generator(lab), ds.train, cfg).model;
    auto fresh = desk_pretrained_generator(lab);
    fresh.load_parameters(tuned.to_json());
    CHECK(fresh.parameter_hash() == tuned.parameter_hash());
    CHECK_THROWS_AS(fresh.load_parameters(nlohmann::json{{"format", "other"}}), InvalidInput);
}

TEST_CASE("desk separability: clean fine-tunes look like style-a, cloaked ones do not") {
    const DeskLab lab = build_desk_lab();
    const auto ds = make_desk_dataset(lab);
    std::vector<FeatureVector> fa, fb;
    for (const auto& img : lab.corpus.a) fa.push_back(extract(*lab.encoder, img));
    for (const auto& img : lab.corpus.b) fb.push_back(extract(*lab.encoder, img));
    const FeatureVector ca = centroid(fa), cb = centroid(fb);
    auto fraction_like_a = [&](const MimicryOutcome& out) {
        int closer = 0, total = 0;
        for (const auto& g : out.generations) {
            if (!g.image) continue;
            const auto f = extract(*lab.encoder, *g.image);
            closer += feature_distance(f, ca) < feature_distance(f, cb);
            ++total;
        }
        return static_cast<double>(closer) / total;
    };
    MimicryConfig mcfg;
    const auto clean = run_mimicry(lab, ds.train, ds.test, mcfg);
    CHECK(clean.generations.size() == ds.test.size() * 5);
    CHECK(fraction_like_a(clean) >= 0.9);

    CloakConfig ccfg;
    const auto cloaked = cloak_training_images(lab, ds.train, "style-b", ccfg, 4);
    const auto mixed = mix_training_set(ds.train, cloaked, 1.0, 0);
    const auto attacked = run_mimicry(lab, mixed, ds.test, mcfg);
    CHECK(fraction_like_a(attacked) < 0.5);
}

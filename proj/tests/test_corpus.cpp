#include <catch_amalgamated.hpp>

#include <fstream>

#include "stylecloak/corpus.hpp"
#include "stylecloak/image_io.hpp"
#include "stylecloak/reference_extractor.hpp"
#include "test_support.hpp"

using namespace stylecloak;

namespace {

std::filesystem::path write_portfolio(const std::string& name, int n) {
    const auto dir = testing::scratch_dir(name);
    const auto corpus = make_synthetic_corpus(n, 4, 32);
    for (int i = 0; i < n; ++i)
        save_png(i % 2 ? corpus.a[i] : corpus.b[i], dir / ("art-" + std::to_string(i) + ".png"));
    return dir;
}

std::vector<ArtworkImage> numbered(int n, double level) {
    std::vector<ArtworkImage> out;
    for (int i = 0; i < n; ++i) out.push_back(ArtworkImage::filled(2, 2, level, level, level, std::to_string(i)));
    return out;
}

}  // namespace

TEST_CASE("SHA-256 known answers") {
    CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex(std::string_view("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("PNG round trip keeps 16-bit precision") {
    const auto dir = testing::scratch_dir("png");
    const auto img = testing::random_image(13, 9, 2, "x");
    save_png(img, dir / "x.png");
    const auto back = load_image(dir / "x.png");
    REQUIRE(back.same_size(img));
    for (std::size_t i = 0; i < img.pixels().size(); ++i)
        CHECK(std::abs(back.pixels().data()[i] - img.pixels().data()[i]) <= 0.5 / 65535.0 + 1e-12);
    CHECK(back.id() == "x");
}

TEST_CASE("empty or image-free folders are an empty portfolio") {
    const auto dir = testing::scratch_dir("empty");
    CHECK_THROWS_AS(ingest_portfolio(dir, "ann", "style-a"), EmptyPortfolio);
    std::ofstream(dir / "notes.txt") << "hello";
    std::ofstream(dir / "broken.png") << "not really a png";
    CHECK_THROWS_AS(ingest_portfolio(dir, "ann", "style-a"), EmptyPortfolio);
    CHECK_THROWS_AS(ingest_portfolio(dir / "absent", "ann", "style-a"), NotFound);
}

TEST_CASE("duplicates and undecodable files are dropped with warnings") {
    const auto dir = write_portfolio("dups", 5);
    std::filesystem::copy_file(dir / "art-1.png", dir / "art-1-copy.png");
    std::ofstream(dir / "zz-broken.png") << "garbage";
    const auto m = ingest_portfolio(dir, "ann", "style-a");
    CHECK(m.entries.size() == 5);
    REQUIRE(m.warnings.size() == 2);
    CHECK(m.warnings[0].starts_with("duplicate"));
    CHECK(m.warnings[0].find("art-1.png") != std::string::npos);
    CHECK(m.warnings[0].find("art-1-copy.png") != std::string::npos);
    CHECK(m.warnings[1].find("zz-broken.png") != std::string::npos);
}

TEST_CASE("near duplicates are caught by the average hash") {
    const auto dir = write_portfolio("near", 3);
    const auto original = load_image(dir / "art-0.png");
    Planes brighter = original.pixels();
    for (double& v : brighter.data()) v = std::min(1.0, v + 0.01);
    save_png(original.with_pixels(brighter), dir / "art-0-bright.png");
    const auto m = ingest_portfolio(dir, "ann", "style-a");
    CHECK(m.entries.size() == 3);
    CHECK(m.warnings.size() == 1);
    CHECK(hamming(0b1011, 0b0110) == 3);
}

TEST_CASE("re-ingesting an unchanged folder gives an identical manifest") {
    const auto dir = write_portfolio("reingest", 6);
    const auto a = ingest_portfolio(dir, "ann", "style-a");
    const auto b = ingest_portfolio(dir, "ann", "style-a");
    CHECK(to_json(a) == to_json(b));
    CHECK(to_json(portfolio_from_json(to_json(a))) == to_json(a));
    CHECK(a.entries.front().path == "art-0.png");
    CHECK(a.artist_id == "ann");
    CHECK(a.genre == "style-a");
}

TEST_CASE("file mutations are detected on load") {
    const auto dir = write_portfolio("integrity", 4);
    const auto m = ingest_portfolio(dir, "ann", "style-a");
    const auto imgs = load_portfolio(m, dir);
    REQUIRE(imgs.size() == 4);
    CHECK(imgs[0].artist_id() == "ann");
    CHECK(imgs[0].genre() == "style-a");

    save_png(ArtworkImage::filled(32, 32, 1, 1, 1), dir / "art-2.png");
    CHECK_THROWS_AS(load_portfolio(m, dir), IntegrityError);
    std::filesystem::remove(dir / "art-2.png");
    CHECK_THROWS_AS(verify_portfolio(m, dir), IntegrityError);
}

TEST_CASE("synthetic corpus is seed-deterministic") {
    const auto a = make_synthetic_corpus(4, 9, 32);
    const auto b = make_synthetic_corpus(4, 9, 32);
    const auto c = make_synthetic_corpus(4, 10, 32);
    for (int i = 0; i < 4; ++i) {
        CHECK(a.a[i].pixels() == b.a[i].pixels());
        CHECK(a.b[i].pixels() == b.b[i].pixels());
        CHECK_FALSE(a.a[i].pixels() == c.a[i].pixels());
    }
    CHECK(a.a[0].artist_id() == "artist-a");
    CHECK(a.b[0].artist_id() == "artist-b");
}

TEST_CASE("one image per style is a valid corpus") {
    const auto c = make_synthetic_corpus(1, 2, 32);
    CHECK(c.a.size() == 1);
    CHECK(c.b.size() == 1);
    CHECK_THROWS_AS(make_synthetic_corpus(0, 2, 32), InvalidInput);
}

TEST_CASE("the two styles separate under the reference encoder at n=30") {
    const auto c = make_synthetic_corpus(30, 1);
    const auto s = measure_separation(c, ConvEncoder::reference());
    INFO("centroid distance " << s.centroid_distance << ", within std " << s.within_std_a << " / " << s.within_std_b);
    CHECK(s.ratio() > 5.0);
}

TEST_CASE("mixing cloaked fractions") {
    const auto orig = numbered(20, 0.2);
    const auto cloaked = numbered(20, 0.8);
    auto count = [](const std::vector<MixedItem>& m) {
        int k = 0;
        for (const auto& it : m) {
            CHECK(it.cloaked == (it.image.at(0, 0, 0) == 0.8));
            k += it.cloaked;
        }
        return k;
    };
    CHECK(count(mix_cloaked_fraction(orig, cloaked, 1.0, 0)) == 20);
    CHECK(count(mix_cloaked_fraction(orig, cloaked, 0.0, 0)) == 0);
    const auto quarter = mix_cloaked_fraction(orig, cloaked, 0.25, 3);
    CHECK(count(quarter) == 5);
    const auto again = mix_cloaked_fraction(orig, cloaked, 0.25, 3);
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(quarter[i].cloaked == again[i].cloaked);
        CHECK(quarter[i].image.id() == std::to_string(i));
    }
    CHECK_THROWS_AS(mix_cloaked_fraction(orig, cloaked, 1.5, 0), InvalidInput);

    std::vector<std::optional<ArtworkImage>> partial(20);
    for (int i = 0; i < 4; ++i) partial[i] = cloaked[i];
    CHECK(count(mix_cloaked_fraction(orig, partial, 0.2, 1)) == 4);
    CHECK_THROWS_AS(mix_cloaked_fraction(orig, partial, 0.25, 1), InvalidInput);
}

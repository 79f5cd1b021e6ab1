#include <catch_amalgamated.hpp>

#include <fstream>

#include "stylecloak/pipeline.hpp"
#include "test_support.hpp"

using namespace stylecloak;
namespace fs = std::filesystem;

namespace {

nlohmann::json small_lab_json() {
    DeskLabConfig cfg;
    cfg.n_per_style = 10;
    cfg.generic_styles = 8;
    cfg.generic_per_style = 3;
    cfg.size = 32;
    return cfg;
}

nlohmann::json small_pipeline_config() {
    return resolve_config("pipeline", {},
                          {{"steps", 40}, {"finetune_steps", 200}, {"seeds_per_caption", 2},
                           {"workers", 2}, {"lab", small_lab_json()}});
}

fs::path write_portfolio(const std::string& name, int n) {
    const fs::path dir = testing::scratch_dir(name);
    for (const auto& img : render_style_set(warm_stripes_style(), n, 32, 5, "artist"))
        save_png(img, dir / (img.id() + ".png"));
    return dir;
}

}  // namespace

TEST_CASE("cloak defaults match the documented values") {
    const auto c = command_defaults("cloak");
    CHECK(c.at("budget").get<double>() == Catch::Approx(0.05));
    CHECK(c.at("steps").get<int>() == 500);
    CHECK_THROWS_AS(command_defaults("paint"), InvalidInput);
}

TEST_CASE("config precedence is flags over file over defaults") {
    const nlohmann::json file = {{"budget", 0.1}, {"steps", 200}};
    const nlohmann::json flags = {{"steps", 50}};
    const auto c = resolve_config("cloak", file, flags);
    CHECK(c.at("budget").get<double>() == Catch::Approx(0.1));
    CHECK(c.at("steps").get<int>() == 50);
    CHECK(c.at("seed").get<int>() == 0);
    const auto cc = cloak_config_from(c);
    CHECK(cc.steps == 50);
}

TEST_CASE("cloak command writes cloaked images within budget") {
    const fs::path port = write_portfolio("pipe-port", 3);
    const fs::path run = testing::scratch_dir("pipe-cloak");
    const auto cfg = resolve_config("cloak", {},
                                    {{"portfolio", port.string()}, {"steps", 40}, {"lab", small_lab_json()}});
    const auto m = execute_run("cloak", cfg, run);
    CHECK(m.at("status") == "ok");
    CHECK(m.at("metrics").at("cloaked") == 3);
    CHECK(m.at("metrics").at("within_budget") == 3);
    CHECK(m.at("inputs").size() == 3);
    for (const auto& e : fs::directory_iterator(port))
        CHECK(fs::exists(run / "cloaked" / e.path().filename()));
    CHECK_NOTHROW(load_run_manifest(run / "manifest.json"));
}

TEST_CASE("failed run leaves a failed manifest") {
    const fs::path run = testing::scratch_dir("pipe-fail");
    const auto cfg = resolve_config("cloak", {}, {{"portfolio", (run / "nowhere").string()}});
    CHECK_THROWS_AS(execute_run("cloak", cfg, run), NotFound);
    std::ifstream in(run / "manifest.json");
    const auto m = nlohmann::json::parse(in);
    CHECK(m.at("status") == "failed");
    CHECK_FALSE(m.at("error").get<std::string>().empty());
    CHECK_THROWS_AS(rerun(run / "manifest.json", testing::scratch_dir("pipe-fail-rerun")), InvalidInput);
}

TEST_CASE("invalid config is rejected before work starts") {
    const fs::path run = testing::scratch_dir("pipe-badcfg");
    const fs::path port = write_portfolio("pipe-port-bad", 1);
    const auto cfg = resolve_config("cloak", {}, {{"portfolio", port.string()}, {"budget", -1.0}});
    CHECK_THROWS_AS(execute_run("cloak", cfg, run), InvalidConfiguration);
    CHECK_THROWS_AS(execute_run("paint", cfg, testing::scratch_dir("pipe-unknown")), InvalidInput);
}

TEST_CASE("pipeline run reports both scenarios and reruns bit-identically") {
    const fs::path a = testing::scratch_dir("pipe-a");
    const auto m = execute_run("pipeline", small_pipeline_config(), a);
    REQUIRE(m.at("status") == "ok");
    std::ifstream in(a / "reports" / "pipeline.json");
    const auto report = nlohmann::json::parse(in);
    const std::string dump = report.dump();
    CHECK(dump.find("uncloaked") != std::string::npos);
    CHECK(dump.find("cloaked-p") != std::string::npos);
    CHECK(m.at("metrics").contains("uncloaked_genre_shift"));
    CHECK(m.at("metrics").contains("cloaked_genre_shift"));

    const auto r = rerun(a / "manifest.json", testing::scratch_dir("pipe-b"));
    INFO(nlohmann::json(r.differences).dump());
    CHECK(r.identical);
}

TEST_CASE("tampered outputs are detected") {
    const fs::path port = write_portfolio("pipe-port-t", 2);
    const fs::path run = testing::scratch_dir("pipe-tamper");
    const auto cfg = resolve_config("select-target", {}, {{"portfolio", port.string()}, {"lab", small_lab_json()}});
    const auto m = execute_run("select-target", cfg, run);
    CHECK(m.at("metrics").at("target_style").is_string());
    REQUIRE_NOTHROW(load_run_manifest(run / "manifest.json"));
    {
        std::ofstream out(run / "reports" / "target.json", std::ios::app);
        out << " ";
    }
    CHECK_THROWS_AS(load_run_manifest(run / "manifest.json"), IntegrityError);
    fs::remove(run / "reports" / "target.json");
    CHECK_THROWS_AS(load_run_manifest(run / "manifest.json"), IntegrityError);
    CHECK_THROWS_AS(load_run_manifest(run / "missing.json"), NotFound);
}

TEST_CASE("mimic and eval commands chain through files") {
    const fs::path port = write_portfolio("pipe-port-m", 4);
    const fs::path mrun = testing::scratch_dir("pipe-mimic");
    const auto mcfg = resolve_config("mimic", {},
                                     {{"dataset", port.string()}, {"steps", 50}, {"seeds_per_caption", 2},
                                      {"lab", small_lab_json()}});
    const auto mm = execute_run("mimic", mcfg, mrun);
    CHECK(mm.at("metrics").at("generations") == 2);
    const fs::path erun = testing::scratch_dir("pipe-eval");
    const auto ecfg = resolve_config("eval", {}, {{"generated", (mrun / "generated").string()}, {"lab", small_lab_json()}});
    const auto em = execute_run("eval", ecfg, erun);
    const double rate = em.at("metrics").at("genre_shift_rate").get<double>();
    CHECK(rate >= 0.0);
    CHECK(rate <= 1.0);
}

#ifndef STYLECLOAK_PIPELINE_HPP
#define STYLECLOAK_PIPELINE_HPP

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylecloak/countermeasures.hpp"
#include "stylecloak/experiment.hpp"
#include "stylecloak/image_io.hpp"
#include "stylecloak/library.hpp"

namespace stylecloak {

namespace fs = std::filesystem;

inline constexpr const char* kRunSchema = "stylecloak-run/1";

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

// Cache directory from STYLECLOAK_CACHE, empty when unset.
inline fs::path cache_dir() {
    const char* env = std::getenv("STYLECLOAK_CACHE");
    return env && *env ? fs::path(env) : fs::path();
}

// Run directory layout:
//   manifest.json  inputs/  cloaked/  generated/  reports/
// The manifest carries the command, the full config snapshot, input and
// output hashes, timestamps and metric summaries. Only the manifest holds
// timestamps, so every other file is reproducible byte for byte.
class RunContext {
public:
    RunContext(fs::path dir, std::string command, nlohmann::json config)
        : dir_(std::move(dir)) {
        for (const char* sub : {"inputs", "cloaked", "generated", "reports"}) fs::create_directories(dir_ / sub);
        manifest_ = {{"schema", kRunSchema},   {"command", std::move(command)},
                     {"config", std::move(config)}, {"inputs", nlohmann::json::array()},
                     {"outputs", nlohmann::json::array()}, {"metrics", nlohmann::json::object()},
                     {"started_at", utc_timestamp()}, {"status", "running"}};
        save();
    }

    const fs::path& dir() const { return dir_; }
    const nlohmann::json& config() const { return manifest_["config"]; }
    const nlohmann::json& manifest() const { return manifest_; }

    // Copies an input file under inputs/ and records its hash.
    fs::path add_input(const fs::path& src, const std::string& rel) {
        const auto bytes = read_file(src);
        const fs::path dst = dir_ / "inputs" / rel;
        write_file(dst, bytes);
        manifest_["inputs"].push_back({{"path", "inputs/" + rel}, {"source", src.string()}, {"sha256", sha256_hex(bytes)}});
        return dst;
    }

    void write_output(const std::string& rel, std::span<const std::uint8_t> bytes) {
        write_file(dir_ / rel, bytes);
        manifest_["outputs"].push_back({{"path", rel}, {"sha256", sha256_hex(bytes)}});
    }

    void write_png(const std::string& rel, const ArtworkImage& img) { write_output(rel, encode_png(img)); }

    void write_json(const std::string& rel, const nlohmann::json& j) {
        const std::string text = j.dump(2) + "\n";
        write_output(rel, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }

    void metric(const std::string& key, nlohmann::json value) { manifest_["metrics"][key] = std::move(value); }

    void finish() {
        manifest_["status"] = "ok";
        manifest_["finished_at"] = utc_timestamp();
        save();
    }

    void fail(const std::string& reason) {
        manifest_["status"] = "failed";
        manifest_["error"] = reason;
        manifest_["finished_at"] = utc_timestamp();
        save();
    }

private:
    void save() const {
        std::ofstream out(dir_ / "manifest.json");
        out << manifest_.dump(2) << "\n";
    }

    fs::path dir_;
    nlohmann::json manifest_;
};

// Loads a run manifest and checks every recorded input and output hash.
inline nlohmann::json load_run_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFound("manifest not found: " + path.string());
    auto m = nlohmann::json::parse(in);
    if (m.value("schema", "") != kRunSchema) throw InvalidInput("not a run manifest: " + path.string());
    const fs::path root = path.parent_path();
    for (const char* key : {"inputs", "outputs"})
        for (const auto& e : m.at(key)) {
            const fs::path p = root / e.at("path").get<std::string>();
            if (!fs::exists(p)) throw IntegrityError("manifest entry missing: " + p.string());
            if (sha256_file(p) != e.at("sha256").get<std::string>())
                throw IntegrityError("manifest entry changed: " + p.string());
        }
    return m;
}

// ---- command configs ----

inline nlohmann::json cloak_defaults() {
    return {{"portfolio", ""},
            {"artist_id", "artist"},
            {"genre", "unknown"},
            {"budget", defaults::kBudget},
            {"steps", defaults::kCloakSteps},
            {"penalty_weight", defaults::kPenaltyWeight},
            {"learning_rate", defaults::kCloakLearningRate},
            {"seed", 0},
            {"workers", 1},
            {"target", nullptr},
            {"library", nullptr},
            {"profiles", nullptr},
            {"percentile_lo", defaults::kPercentileLo},
            {"percentile_hi", defaults::kPercentileHi},
            {"lab", DeskLabConfig{}}};
}

inline nlohmann::json mimic_defaults() {
    return {{"dataset", ""},
            {"artist_id", "artist"},
            {"steps", defaults::kFineTuneSteps},
            {"learning_rate", defaults::kToyLearningRate},
            {"batch_size", 32},
            {"seed", 0},
            {"train_fraction", defaults::kTrainFraction},
            {"split_seed", 3},
            {"seeds_per_caption", defaults::kSeedsPerCaption},
            {"caption_template", std::string(defaults::kCaptionTemplate)},
            {"sd_learning_rate", defaults::kSdLearningRate},
            {"sd_batch_size", defaults::kSdBatchSize},
            {"sd_sampling_steps", defaults::kSdSamplingSteps},
            {"lab", DeskLabConfig{}}};
}

inline nlohmann::json eval_defaults() {
    return {{"generated", ""}, {"victim_genre", "style-a"}, {"top_k", 1}, {"artist_id", "artist-a"},
            {"ratings", nullptr}, {"lab", DeskLabConfig{}}};
}

inline nlohmann::json pipeline_defaults() {
    return {{"budget", defaults::kBudget},
            {"steps", defaults::kCloakSteps},
            {"penalty_weight", defaults::kPenaltyWeight},
            {"learning_rate", defaults::kCloakLearningRate},
            {"finetune_steps", defaults::kFineTuneSteps},
            {"finetune_learning_rate", defaults::kToyLearningRate},
            {"train_fraction", defaults::kTrainFraction},
            {"split_seed", 3},
            {"seeds_per_caption", defaults::kSeedsPerCaption},
            {"top_k", 1},
            {"target", "style-b"},
            {"seed", 0},
            {"workers", 1},
            {"lab", DeskLabConfig{}}};
}

inline nlohmann::json counter_defaults() {
    nlohmann::json j = pipeline_defaults();
    j["grid"] = nlohmann::json::array({
        {{"kind", "none"}, {"strength", 0.0}},
        {{"kind", "gaussian_noise"}, {"strength", 0.02}},
        {{"kind", "gaussian_noise"}, {"strength", 0.05}},
        {{"kind", "jpeg"}, {"strength", 75}},
        {{"kind", "jpeg"}, {"strength", 50}},
        {{"kind", "bilateral_smooth"}, {"strength", 1}},
        {{"kind", "bilateral_smooth"}, {"strength", 2}},
    });
    return j;
}

inline nlohmann::json select_target_defaults() {
    nlohmann::json j = cloak_defaults();
    for (const char* k : {"budget", "steps", "penalty_weight", "learning_rate", "workers"}) j.erase(k);
    return j;
}

inline nlohmann::json command_defaults(const std::string& command) {
    if (command == "cloak") return cloak_defaults();
    if (command == "select-target") return select_target_defaults();
    if (command == "mimic") return mimic_defaults();
    if (command == "eval") return eval_defaults();
    if (command == "pipeline") return pipeline_defaults();
    if (command == "counter") return counter_defaults();
    throw InvalidInput("unknown command '" + command + "'");
}

// defaults < config file < explicit flags
inline nlohmann::json resolve_config(const std::string& command, const nlohmann::json& file_config,
                                     const nlohmann::json& flags) {
    nlohmann::json c = command_defaults(command);
    for (const auto* patch : {&file_config, &flags}) {
        if (patch->is_null()) continue;
        if (!patch->is_object()) throw InvalidInput("config must be a JSON object");
        c.merge_patch(*patch);
    }
    return c;
}

inline CloakConfig cloak_config_from(const nlohmann::json& c) {
    CloakConfig cc;
    cc.budget = c.at("budget").get<double>();
    cc.steps = c.at("steps").get<int>();
    cc.penalty_weight = c.at("penalty_weight").get<double>();
    cc.learning_rate = c.at("learning_rate").get<double>();
    cc.seed = c.at("seed").get<std::uint64_t>();
    cc.validate();
    return cc;
}

// ---- commands ----

namespace detail {

inline std::vector<ArtworkImage> ingest_into_run(RunContext& run, const nlohmann::json& c) {
    const fs::path folder = c.at("portfolio").get<std::string>();
    auto manifest = ingest_portfolio(folder, c.at("artist_id"), c.at("genre"));
    for (const auto& e : manifest.entries) run.add_input(folder / e.path, e.path);
    run.write_json("reports/portfolio.json", to_json(manifest));
    if (!manifest.warnings.empty()) run.metric("ingest_warnings", manifest.warnings);
    return load_portfolio(manifest, run.dir() / "inputs");
}

inline CandidateLibrary library_for(const nlohmann::json& c, const FeatureExtractor& extractor) {
    if (c.contains("library") && c["library"].is_string())
        return load_library(c["library"].get<std::string>(), extractor);
    return make_desk_library(extractor, c.at("lab").get<DeskLabConfig>());
}

inline fs::path profiles_path(const nlohmann::json& c) {
    if (c.contains("profiles") && c["profiles"].is_string()) return c["profiles"].get<std::string>();
    const fs::path cache = cache_dir();
    return cache.empty() ? fs::path() : cache / "profiles.json";
}

inline const StyleCandidate& pick_target(RunContext& run, const nlohmann::json& c,
                                         std::span<const ArtworkImage> art, const CandidateLibrary& lib,
                                         const FeatureExtractor& extractor) {
    const PercentileWindow window{c.at("percentile_lo").get<double>(), c.at("percentile_hi").get<double>()};
    const auto seed = c.at("seed").get<std::uint64_t>();
    std::optional<std::string> override_style;
    if (c.contains("target") && c["target"].is_string()) override_style = c["target"].get<std::string>();
    const auto ranked = rank_candidates(art, lib, extractor);
    nlohmann::json ranking = nlohmann::json::array();
    for (std::size_t i = 0; i < ranked.size(); ++i)
        ranking.push_back({{"rank", i + 1}, {"style_id", ranked[i].candidate->style_id}, {"distance", ranked[i].distance}});
    const auto [lo, hi] = eligible_rank_band(ranked.size(), window);
    run.write_json("reports/ranking.json", {{"ranking", ranking}, {"band", {lo, hi}}});
    const fs::path profiles = profiles_path(c);
    if (!profiles.empty()) {
        ArtistProfiles store(profiles);
        return choose_target(store, c.at("artist_id"), art, lib, extractor, window, seed, override_style);
    }
    if (override_style) {
        const StyleCandidate* t = lib.find(*override_style);
        if (!t) throw NotFound("style '" + *override_style + "' is not in the candidate library");
        return *t;
    }
    return select_target(ranked, window, seed);
}

}  // namespace detail

inline void run_cloak(RunContext& run) {
    const auto& c = run.config();
    const auto cc = cloak_config_from(c);
    const auto art = detail::ingest_into_run(run, c);
    const auto encoder = ConvEncoder::reference();
    const auto metric = FeatureDifferenceMetric::from_encoder(encoder);
    const auto lib = detail::library_for(c, encoder);
    const StyleCandidate& target = detail::pick_target(run, c, art, lib, encoder);
    ColorStatisticsTransfer backend;
    const auto items = cloak_portfolio(art, target, backend, encoder, metric, cc, c.at("workers").get<int>());
    nlohmann::json rows = nlohmann::json::array();
    int ok = 0, within = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& item = items[i];
        if (!item.ok()) {
            rows.push_back({{"image_id", item.image_id}, {"error", item.error}});
            continue;
        }
        ++ok;
        const auto& r = *item.result;
        const bool in_budget = r.final_perceptual <= cc.budget * (1.0 + defaults::kBudgetSlack);
        within += in_budget;
        run.write_png("cloaked/" + item.image_id + ".png", r.cloaked_image);
        rows.push_back({{"image_id", item.image_id},
                        {"final_perceptual", r.final_perceptual},
                        {"final_feature_distance", r.final_feature_distance},
                        {"initial_feature_distance", r.initial_feature_distance},
                        {"within_budget", in_budget}});
    }
    run.write_json("reports/cloak.json", {{"target_style", target.style_id}, {"budget", cc.budget}, {"items", rows}});
    run.metric("target_style", target.style_id);
    run.metric("cloaked", ok);
    run.metric("failed", static_cast<int>(items.size()) - ok);
    run.metric("within_budget", within);
}

inline void run_select_target(RunContext& run) {
    const auto& c = run.config();
    const auto art = detail::ingest_into_run(run, c);
    const auto encoder = ConvEncoder::reference();
    const auto lib = detail::library_for(c, encoder);
    const StyleCandidate& target = detail::pick_target(run, c, art, lib, encoder);
    run.write_json("reports/target.json", {{"artist_id", c.at("artist_id")}, {"target_style", target.style_id}});
    run.metric("target_style", target.style_id);
}

inline void run_mimic(RunContext& run) {
    const auto& c = run.config();
    const fs::path folder = c.at("dataset").get<std::string>();
    auto manifest = ingest_portfolio(folder, c.at("artist_id"), "unknown");
    for (const auto& e : manifest.entries) run.add_input(folder / e.path, e.path);
    const auto art = load_portfolio(manifest, run.dir() / "inputs");
    const auto lab = build_desk_lab(c.at("lab").get<DeskLabConfig>());
    StubCaptioner captioner(c.at("caption_template").get<std::string>());
    std::vector<CaptionWarning> warnings;
    const auto data = build_caption_dataset(art, c.at("artist_id").get<std::string>(), captioner, &warnings);
    auto [train, test] = split_train_test(data, c.at("train_fraction").get<double>(), c.at("split_seed").get<std::uint64_t>());
    const FineTuneConfig fc{c.at("steps").get<int>(), c.at("learning_rate").get<double>(),
                            c.at("batch_size").get<int>(), c.at("seed").get<std::uint64_t>()};
    auto ft = finetune(desk_pretrained_generator(lab), train, fc);
    run.write_json("reports/model.json", ft.model.to_json());
    std::vector<std::string> captions;
    for (const auto& t : test) captions.push_back(t.caption);
    const auto gens = generate_mimicry(ft.model, captions, c.at("seeds_per_caption").get<int>());
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < gens.size(); ++i) {
        const std::string rel = "generated/" + std::to_string(i) + ".png";
        if (gens[i].image) run.write_png(rel, *gens[i].image);
        rows.push_back({{"caption", gens[i].caption}, {"seed", gens[i].seed},
                        {"path", gens[i].image ? nlohmann::json(rel) : nlohmann::json(nullptr)},
                        {"error", gens[i].error}});
    }
    nlohmann::json warn = nlohmann::json::array();
    for (const auto& w : warnings) warn.push_back({{"image_id", w.image_id}, {"reason", w.reason}});
    run.write_json("reports/mimic.json", {{"train", train.size()}, {"test", test.size()}, {"generations", rows},
                                           {"final_loss", ft.loss_trace.empty() ? 0.0 : ft.loss_trace.back()},
                                           {"caption_warnings", warn}});
    run.metric("generations", gens.size());
    run.metric("final_loss", ft.loss_trace.empty() ? 0.0 : ft.loss_trace.back());
}

inline void run_eval(RunContext& run) {
    const auto& c = run.config();
    const fs::path folder = c.at("generated").get<std::string>();
    if (!fs::is_directory(folder)) throw NotFound("generations folder not found: " + folder.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(folder))
        if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<ArtworkImage> images;
    for (const auto& f : files) {
        run.add_input(f, f.filename().string());
        images.push_back(load_image(f));
    }
    const auto lab = build_desk_lab(c.at("lab").get<DeskLabConfig>());
    const auto report = genre_shift_rate(images, c.at("victim_genre").get<std::string>(), *lab.classifier,
                                         c.at("top_k").get<int>(), c.at("artist_id").get<std::string>());
    nlohmann::json out = {{"genre_shift", report}, {"psr", nullptr}};
    if (c.contains("ratings") && c["ratings"].is_string()) {
        const fs::path ratings = c["ratings"].get<std::string>();
        run.add_input(ratings, "ratings.csv");
        std::ifstream in(ratings);
        nlohmann::json psr = nlohmann::json::array();
        for (const auto& r : ingest_ratings_csv(in))
            psr.push_back({{"scenario_id", r.scenario_id}, {"ratings", r.ratings}, {"psr", aggregate_psr(r.ratings)}});
        out["psr"] = psr;
    }
    run.write_json("reports/eval.json", out);
    run.metric("genre_shift_rate", report.rate);
}

namespace detail {

inline MimicryConfig mimicry_config_from(const nlohmann::json& c) {
    MimicryConfig mc;
    mc.finetune = {c.at("finetune_steps").get<int>(), c.at("finetune_learning_rate").get<double>(), 32,
                   c.at("seed").get<std::uint64_t>()};
    mc.seeds_per_caption = c.at("seeds_per_caption").get<int>();
    mc.top_k = c.at("top_k").get<int>();
    return mc;
}

inline void write_generations(RunContext& run, const std::string& dir, const MimicryOutcome& m) {
    for (std::size_t i = 0; i < m.generations.size(); ++i)
        if (m.generations[i].image) run.write_png("generated/" + dir + "/" + std::to_string(i) + ".png", *m.generations[i].image);
}

}  // namespace detail

// The end-to-end desk recreation: mimicry on clean art versus on art cloaked
// toward the target style, reported as one row per scenario.
inline void run_pipeline(RunContext& run) {
    const auto& c = run.config();
    const auto lab = build_desk_lab(c.at("lab").get<DeskLabConfig>());
    const auto ds = make_desk_dataset(lab, c.at("train_fraction").get<double>(), c.at("split_seed").get<std::uint64_t>());
    for (const auto& t : ds.train) run.write_png("inputs/" + t.image.id() + ".png", t.image);
    const auto mc = detail::mimicry_config_from(c);
    const auto cc = cloak_config_from(c);

    std::vector<PortfolioItem> items;
    const auto cloaked = cloak_training_images(lab, ds.train, c.at("target").get<std::string>(), cc,
                                               c.at("workers").get<int>(), &items);
    nlohmann::json cloak_rows = nlohmann::json::array();
    for (const auto& item : items) {
        if (!item.ok()) {
            cloak_rows.push_back({{"image_id", item.image_id}, {"error", item.error}});
            continue;
        }
        run.write_png("cloaked/" + item.image_id + ".png", item.result->cloaked_image);
        cloak_rows.push_back({{"image_id", item.image_id}, {"final_perceptual", item.result->final_perceptual},
                              {"final_feature_distance", item.result->final_feature_distance},
                              {"initial_feature_distance", item.result->initial_feature_distance}});
    }
    run.write_json("reports/cloak.json", cloak_rows);

    const auto clean = run_mimicry(lab, ds.train, ds.test, mc);
    const auto protect = run_mimicry(lab, mix_training_set(ds.train, cloaked, 1.0, cc.seed), ds.test, mc);
    detail::write_generations(run, "uncloaked", clean);
    detail::write_generations(run, "cloaked", protect);

    const std::vector<ScenarioRow> rows{
        {"uncloaked", "toy-latent", "synthetic", std::nullopt, clean.report},
        {"cloaked-p" + budget_key(cc.budget), "toy-latent", "synthetic", std::nullopt, protect.report}};
    run.write_json("reports/pipeline.json", scenario_report(rows));
    run.metric("uncloaked_genre_shift", clean.report.rate);
    run.metric("cloaked_genre_shift", protect.report.rate);
}

// Grid of attacker transforms applied to the cloaked training set before
// mimicry. strength: sigma for gaussian_noise, quality for jpeg, iterations
// for bilateral_smooth; kind "none" is the untouched cloaked baseline.
inline void run_counter(RunContext& run) {
    const auto& c = run.config();
    const auto lab = build_desk_lab(c.at("lab").get<DeskLabConfig>());
    const auto ds = make_desk_dataset(lab, c.at("train_fraction").get<double>(), c.at("split_seed").get<std::uint64_t>());
    const auto mc = detail::mimicry_config_from(c);
    const auto cc = cloak_config_from(c);
    const auto cloaked = cloak_training_images(lab, ds.train, c.at("target").get<std::string>(), cc,
                                               c.at("workers").get<int>());
    const auto train = mix_training_set(ds.train, cloaked, 1.0, cc.seed);

    nlohmann::json rows = nlohmann::json::array();
    for (const auto& cell : c.at("grid")) {
        const std::string kind = cell.at("kind");
        const double strength = cell.at("strength").get<double>();
        std::vector<CaptionedArtwork> transformed = train;
        if (kind != "none") {
            TransformConfig tc;
            tc.kind = parse_transform_kind(kind);
            tc.seed = cc.seed;
            if (tc.kind == TransformKind::GaussianNoise) tc.sigma = strength;
            else if (tc.kind == TransformKind::Jpeg) tc.quality = static_cast<int>(strength);
            else tc.iterations = static_cast<int>(strength);
            for (auto& t : transformed) t.image = apply_transform(t.image, tc);
        }
        const auto m = run_mimicry(lab, transformed, ds.test, mc);
        rows.push_back({{"kind", kind}, {"strength", strength}, {"genre_shift", m.report}});
    }
    run.write_json("reports/counter.json", rows);
    run.metric("cells", rows.size());
}

inline const std::map<std::string, std::function<void(RunContext&)>>& command_table() {
    static const std::map<std::string, std::function<void(RunContext&)>> table{
        {"cloak", run_cloak},   {"select-target", run_select_target}, {"mimic", run_mimic},
        {"eval", run_eval},     {"pipeline", run_pipeline},           {"counter", run_counter}};
    return table;
}

// Runs `command` into `dir`. The manifest is marked failed and the error
// rethrown when the command throws.
inline nlohmann::json execute_run(const std::string& command, const nlohmann::json& config, const fs::path& dir) {
    const auto& table = command_table();
    const auto it = table.find(command);
    if (it == table.end()) throw InvalidInput("unknown command '" + command + "'");
    RunContext run(dir, command, config);
    try {
        it->second(run);
    } catch (const std::exception& e) {
        run.fail(e.what());
        throw;
    }
    run.finish();
    return run.manifest();
}

struct RerunReport {
    bool identical = true;
    std::vector<std::string> differences;
    nlohmann::json manifest;
};

// Re-executes a recorded run into `dir` and compares every output hash
// and the metric summary.
inline RerunReport rerun(const fs::path& manifest_path, const fs::path& dir) {
    const auto original = load_run_manifest(manifest_path);
    if (original.value("status", "") != "ok") throw InvalidInput("cannot rerun a run that did not finish");
    RerunReport r;
    r.manifest = execute_run(original.at("command"), original.at("config"), dir);
    std::map<std::string, std::string> before, after;
    for (const auto& e : original.at("outputs")) before[e.at("path")] = e.at("sha256");
    for (const auto& e : r.manifest.at("outputs")) after[e.at("path")] = e.at("sha256");
    for (const auto& [path, hash] : before) {
        const auto it = after.find(path);
        if (it == after.end()) r.differences.push_back("missing output " + path);
        else if (it->second != hash) r.differences.push_back("changed output " + path);
    }
    for (const auto& [path, hash] : after)
        if (!before.count(path)) r.differences.push_back("extra output " + path);
    if (original.at("metrics") != r.manifest.at("metrics")) r.differences.push_back("metrics differ");
    r.identical = r.differences.empty();
    return r;
}

}  // namespace stylecloak

#endif  // STYLECLOAK_PIPELINE_HPP

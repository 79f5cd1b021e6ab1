#ifndef STYLECLOAK_SERVICE_HPP
#define STYLECLOAK_SERVICE_HPP

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "stylecloak/cloak_engine.hpp"
#include "stylecloak/defaults.hpp"
#include "stylecloak/experiment.hpp"
#include "stylecloak/image_io.hpp"
#include "stylecloak/library.hpp"
#include "stylecloak/perceptual.hpp"
#include "stylecloak/reference_extractor.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose _res macro breaks Eigen headers.
#include <httplib.h>

namespace stylecloak {

class PayloadTooLarge : public Error {
public:
    using Error::Error;
};

class JobNotReady : public Error {
public:
    using Error::Error;
};

class JobFailed : public Error {
public:
    using Error::Error;
};

struct ServiceConfig {
    std::filesystem::path root;
    int final_steps = defaults::kCloakSteps;
    int preview_steps = defaults::kPreviewSteps;
    std::size_t max_payload_bytes = 32u << 20;
    double slack = defaults::kBudgetSlack;  // fraction of the budget
    DeskLabConfig lab;                      // source of the candidate library
};

struct UploadedImage {
    std::string name;
    std::string bytes;
};

struct SubmitRequest {
    std::vector<UploadedImage> images;
    std::vector<double> budgets;
    std::string artist_id = "artist";
    std::optional<std::string> target;
    std::optional<int> steps;  // final optimisation steps, service default when empty
};

struct FetchedResult {
    std::string png;
    nlohmann::json metrics;
};

// Cloaking jobs persisted under <root>/jobs/<id>/:
//   job.json  inputs/<n>.png  results/<n>/<budget>.png  previews/<n>/<budget>.png
// A single worker thread runs jobs in submission order; every job.json write
// goes through one mutex. On start-up queued and running jobs are resumed
// and finished variants are not recomputed.
class ProtectService {
public:
    explicit ProtectService(ServiceConfig config)
        : config_(std::move(config)),
          encoder_(ConvEncoder::reference()),
          metric_(FeatureDifferenceMetric::from_encoder(encoder_)),
          library_(make_desk_library(encoder_, config_.lab)) {
        std::filesystem::create_directories(jobs_dir());
        std::vector<std::pair<long, std::string>> pending;
        for (const auto& e : std::filesystem::directory_iterator(jobs_dir())) {
            const auto path = e.path() / "job.json";
            if (!std::filesystem::exists(path)) continue;
            std::ifstream in(path);
            auto job = nlohmann::json::parse(in);
            const std::string id = job.at("job_id");
            const std::string state = job.at("state");
            if (state == "queued" || state == "running") pending.emplace_back(job.at("seq").get<long>(), id);
            seq_ = std::max(seq_, job.at("seq").get<long>() + 1);
            jobs_[id] = std::move(job);
        }
        std::sort(pending.begin(), pending.end());
        for (const auto& [seq, id] : pending) queue_.push_back(id);
        worker_ = std::thread([this] { work(); });
    }

    ~ProtectService() { stop(); }

    ProtectService(const ProtectService&) = delete;
    ProtectService& operator=(const ProtectService&) = delete;

    void stop() {
        {
            std::lock_guard lock(mu_);
            stopping_ = true;
        }
        cv_.notify_all();
        if (worker_.joinable()) worker_.join();
    }

    const ServiceConfig& config() const { return config_; }

    // Same payload, same job id.
    std::string submit(const SubmitRequest& req) {
        if (req.images.empty()) throw InvalidInput("at least one image is required");
        if (req.budgets.empty()) throw InvalidInput("at least one budget is required");
        for (double p : req.budgets)
            if (!(p > 0.0 && p <= defaults::kMaxServiceBudget))
                throw InvalidInput("budget " + budget_key(p) + " outside (0, " + budget_key(defaults::kMaxServiceBudget) + "]");
        if (req.steps && *req.steps < 1) throw InvalidInput("steps must be >= 1");
        if (req.target && !library_.find(*req.target)) throw InvalidInput("unknown target style '" + *req.target + "'");
        std::size_t total = 0;
        for (const auto& img : req.images) total += img.bytes.size();
        if (total > config_.max_payload_bytes) throw PayloadTooLarge("payload exceeds " + std::to_string(config_.max_payload_bytes) + " bytes");

        std::vector<double> budgets = req.budgets;
        std::sort(budgets.begin(), budgets.end());
        budgets.erase(std::unique(budgets.begin(), budgets.end()), budgets.end());
        nlohmann::json images = nlohmann::json::array();
        std::vector<ArtworkImage> decoded;
        for (const auto& img : req.images) {
            const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(img.bytes.data()), img.bytes.size());
            decoded.push_back(decode_image(bytes));
            images.push_back({{"name", img.name}, {"sha256", sha256_hex(bytes)}});
        }
        const int steps = req.steps.value_or(config_.final_steps);
        const nlohmann::json payload = {{"artist_id", req.artist_id}, {"budgets", budgets}, {"images", images},
                                        {"target", req.target ? nlohmann::json(*req.target) : nlohmann::json(nullptr)},
                                        {"steps", steps}};
        const std::string id = "job-" + sha256_hex(payload.dump()).substr(0, 16);

        std::lock_guard lock(mu_);
        if (jobs_.count(id)) return id;
        for (std::size_t i = 0; i < decoded.size(); ++i)
            save_png(decoded[i], job_dir(id) / "inputs" / (std::to_string(i) + ".png"));
        nlohmann::json budget_keys = nlohmann::json::array();
        for (double p : budgets) budget_keys.push_back(budget_key(p));
        nlohmann::json job = payload;
        job["job_id"] = id;
        job["state"] = "queued";
        job["progress"] = 0.0;
        job["budget_keys"] = budget_keys;
        job["results"] = nlohmann::json::array();
        job["previews"] = nlohmann::json::array();
        job["target_style"] = nullptr;
        job["error"] = nullptr;
        job["seq"] = seq_++;
        jobs_[id] = job;
        persist(id);
        queue_.push_back(id);
        cv_.notify_all();
        return id;
    }

    nlohmann::json status(const std::string& id) const {
        std::lock_guard lock(mu_);
        const auto it = jobs_.find(id);
        if (it == jobs_.end()) throw NotFound("unknown job '" + id + "'");
        return snapshot(it->second);
    }

    // Image ids are the upload positions ("0", "1", ...). Previews are
    // available while the job runs; finals only once it is done.
    FetchedResult fetch(const std::string& id, const std::string& image, const std::string& budget,
                        bool preview = false) const {
        nlohmann::json job;
        {
            std::lock_guard lock(mu_);
            const auto it = jobs_.find(id);
            if (it == jobs_.end()) throw NotFound("unknown job '" + id + "'");
            job = it->second;
        }
        if (job["state"] == "failed") throw JobFailed(job["error"].is_string() ? job["error"].get<std::string>() : "job failed");
        if (!preview && job["state"] != "done") throw JobNotReady("job is " + job["state"].get<std::string>());
        double p = 0.0;
        try {
            p = std::stod(budget);
        } catch (const std::exception&) {
            throw NotFound("no result for budget '" + budget + "'");
        }
        for (const auto& r : job[preview ? "previews" : "results"]) {
            if (r.at("image_id") != image || std::abs(r.at("budget").get<double>() - p) > 1e-12) continue;
            const auto path = job_dir(id) / r.at("path").get<std::string>();
            const auto bytes = read_file(path);
            if (sha256_hex(bytes) != r.at("sha256")) throw IntegrityError("stored result changed on disk");
            return {std::string(bytes.begin(), bytes.end()), r};
        }
        throw NotFound("no " + std::string(preview ? "preview" : "result") + " for image '" + image +
                       "' at budget '" + budget + "'");
    }

    nlohmann::json styles() const {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& c : library_.candidates())
            out.push_back({{"style_id", c.style_id}, {"exemplars", c.exemplars.size()}});
        return out;
    }

    // Blocks until the queue is empty and no job is running, or the timeout passes.
    bool wait_idle(std::chrono::milliseconds timeout) {
        std::unique_lock lock(mu_);
        return idle_cv_.wait_for(lock, timeout, [this] { return queue_.empty() && !busy_; });
    }

private:
    std::filesystem::path jobs_dir() const { return config_.root / "jobs"; }
    std::filesystem::path job_dir(const std::string& id) const { return jobs_dir() / id; }

    static nlohmann::json snapshot(const nlohmann::json& job) {
        nlohmann::json s = job;
        s.erase("seq");
        return s;
    }

    // Caller holds mu_.
    void persist(const std::string& id) const {
        const auto dir = job_dir(id);
        std::filesystem::create_directories(dir);
        const auto tmp = dir / "job.json.tmp";
        {
            std::ofstream out(tmp);
            out << jobs_.at(id).dump(2);
        }
        std::filesystem::rename(tmp, dir / "job.json");
    }

    void update(const std::string& id, const std::function<void(nlohmann::json&)>& f) {
        std::lock_guard lock(mu_);
        f(jobs_.at(id));
        persist(id);
    }

    void set_progress(const std::string& id, double value) {
        std::lock_guard lock(mu_);
        auto& job = jobs_.at(id);
        if (value > job["progress"].get<double>()) job["progress"] = std::min(value, 1.0);
    }

    void work() {
        for (;;) {
            std::string id;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
                if (stopping_) return;
                id = queue_.front();
                queue_.pop_front();
                busy_ = true;
            }
            try {
                run_job(id);
            } catch (const std::exception& e) {
                update(id, [&](nlohmann::json& j) {
                    j["state"] = "failed";
                    j["error"] = e.what();
                });
            }
            {
                std::lock_guard lock(mu_);
                busy_ = false;
            }
            idle_cv_.notify_all();
        }
    }

    static bool has_entry(const nlohmann::json& list, const std::string& image, double p) {
        return std::any_of(list.begin(), list.end(), [&](const nlohmann::json& r) {
            return r.at("image_id") == image && std::abs(r.at("budget").get<double>() - p) <= 1e-12;
        });
    }

    void run_job(const std::string& id) {
        nlohmann::json job;
        {
            std::lock_guard lock(mu_);
            jobs_.at(id)["state"] = "running";
            persist(id);
            job = jobs_.at(id);
        }
        const auto budgets = job.at("budgets").get<std::vector<double>>();
        const int steps = job.at("steps").get<int>();
        std::vector<ArtworkImage> images;
        for (std::size_t i = 0; i < job.at("images").size(); ++i) {
            ArtworkImage img = load_image(job_dir(id) / "inputs" / (std::to_string(i) + ".png"));
            img.set_id(std::to_string(i));
            images.push_back(std::move(img));
        }

        const StyleCandidate* target = nullptr;
        if (job["target_style"].is_string()) {
            target = library_.find(job["target_style"].get<std::string>());
        } else {
            ArtistProfiles profiles(config_.root / "profiles.json");
            std::optional<std::string> override_style;
            if (job["target"].is_string()) override_style = job["target"].get<std::string>();
            target = &choose_target(profiles, job.at("artist_id"), images, library_, encoder_,
                                    {defaults::kPercentileLo, defaults::kPercentileHi}, 0, override_style);
            update(id, [&](nlohmann::json& j) { j["target_style"] = target->style_id; });
        }
        if (!target) throw NotFound("target style vanished from the library");

        const double units_per_variant = static_cast<double>(config_.preview_steps + steps);
        const double total = units_per_variant * static_cast<double>(images.size() * budgets.size());
        double done = 0.0;
        ColorStatisticsTransfer backend;

        // Cheap downscaled previews for every variant first, then the finals.
        for (int phase = 0; phase < 2; ++phase) {
            const bool preview = phase == 0;
            const int phase_steps = preview ? config_.preview_steps : steps;
            for (const auto& img : images) {
                for (double p : budgets) {
                    const std::string key = budget_key(p);
                    if (has_entry(job[preview ? "previews" : "results"], img.id(), p)) {
                        done += phase_steps;
                        set_progress(id, done / total);
                        continue;
                    }
                    ArtworkImage x = img;
                    if (preview) {
                        const int w = std::max(16, img.width() / 2), h = std::max(16, img.height() / 2);
                        x = resize(img, w, h);
                        x.set_id(img.id());
                    }
                    const ArtworkImage guide = backend.transfer(x, *target, 0);
                    CloakConfig cc;
                    cc.budget = p;
                    cc.steps = phase_steps;
                    const double base = done;
                    auto on_step = [&](int s, int n) {
                        set_progress(id, (base + phase_steps * static_cast<double>(s) / n) / total);
                    };
                    CloakResult r = optimize_cloak(x, guide, encoder_, metric_, cc, on_step);
                    if (!verify_budget(x, r.cloaked_image, metric_, p, config_.slack * p)) {
                        cc.alpha_ramp = true;
                        r = optimize_cloak(x, guide, encoder_, metric_, cc);
                    }
                    done = base + phase_steps;
                    set_progress(id, done / total);
                    if (!verify_budget(x, r.cloaked_image, metric_, p, config_.slack * p)) {
                        if (preview) continue;  // previews are optional, never served over budget
                        throw OptimizationDiverged("image " + img.id() + " could not be cloaked within budget " + key);
                    }
                    const std::string rel = std::string(preview ? "previews/" : "results/") + img.id() + "/" + key + ".png";
                    const auto bytes = encode_png(r.cloaked_image);
                    write_file(job_dir(id) / rel, bytes);
                    nlohmann::json entry = {{"image_id", img.id()}, {"budget", p}, {"budget_key", key},
                                            {"path", rel}, {"sha256", sha256_hex(bytes)},
                                            {"final_perceptual", r.final_perceptual},
                                            {"final_feature_distance", r.final_feature_distance},
                                            {"initial_feature_distance", r.initial_feature_distance},
                                            {"preview", preview},
                                            {"url", "/jobs/" + id + "/results/" + img.id() + "/" + key +
                                                        (preview ? "?preview=1" : "")}};
                    job[preview ? "previews" : "results"].push_back(entry);
                    update(id, [&](nlohmann::json& j) { j[preview ? "previews" : "results"].push_back(entry); });
                }
            }
        }
        update(id, [&](nlohmann::json& j) {
            j["state"] = "done";
            j["progress"] = 1.0;
        });
    }

    ServiceConfig config_;
    ConvEncoder encoder_;
    FeatureDifferenceMetric metric_;
    CandidateLibrary library_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable idle_cv_;
    std::map<std::string, nlohmann::json> jobs_;
    std::deque<std::string> queue_;
    long seq_ = 0;
    bool stopping_ = false;
    bool busy_ = false;
    std::thread worker_;
};

namespace detail {

inline void json_error(httplib::Response& res, int status, const std::string& message) {
    res.status = status;
    res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
}

inline std::vector<double> parse_budgets(const std::string& text) {
    std::vector<double> out;
    const auto trimmed = text.find_first_not_of(" \t\r\n");
    if (trimmed != std::string::npos && text[trimmed] == '[') {
        try {
            for (const auto& v : nlohmann::json::parse(text)) out.push_back(v.get<double>());
        } catch (const std::exception&) {
            throw InvalidInput("budgets must be numbers");
        }
        return out;
    }
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw InvalidInput("budget '" + item + "' is not a number");
        }
        if (item.find_first_not_of(" \t", used) != std::string::npos) throw InvalidInput("budget '" + item + "' is not a number");
        out.push_back(v);
    }
    return out;
}

}  // namespace detail

// Routes: POST /jobs (multipart: images[], budgets, artist_id, target?, steps?),
// GET /jobs/{id}, GET /jobs/{id}/results/{image}/{budget}[?preview=1|format=json],
// GET /styles, GET /healthz.
inline void install_routes(httplib::Server& server, ProtectService& service) {
    server.set_payload_max_length(service.config().max_payload_bytes);

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"status":"ok"})", "application/json");
    });

    server.Get("/styles", [&service](const httplib::Request&, httplib::Response& res) {
        res.set_content(service.styles().dump(), "application/json");
    });

    server.Post("/jobs", [&service](const httplib::Request& req, httplib::Response& res) {
        if (!req.is_multipart_form_data()) return detail::json_error(res, 400, "expected multipart/form-data");
        try {
            SubmitRequest sub;
            for (const auto& f : req.get_file_values("images")) sub.images.push_back({f.filename, f.content});
            if (req.has_file("budgets")) sub.budgets = detail::parse_budgets(req.get_file_value("budgets").content);
            else sub.budgets.assign(defaults::kBudgetLadder.begin(), defaults::kBudgetLadder.end());
            if (req.has_file("artist_id")) sub.artist_id = req.get_file_value("artist_id").content;
            if (req.has_file("target")) sub.target = req.get_file_value("target").content;
            if (req.has_file("steps")) {
                try {
                    sub.steps = std::stoi(req.get_file_value("steps").content);
                } catch (const std::exception&) {
                    throw InvalidInput("steps must be an integer");
                }
            }
            const std::string id = service.submit(sub);
            res.status = 202;
            res.set_content(service.status(id).dump(), "application/json");
        } catch (const PayloadTooLarge& e) {
            detail::json_error(res, 413, e.what());
        } catch (const InvalidInput& e) {
            detail::json_error(res, 422, e.what());
        }
    });

    server.Get(R"(/jobs/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
        try {
            res.set_content(service.status(req.matches[1]).dump(), "application/json");
        } catch (const NotFound& e) {
            detail::json_error(res, 404, e.what());
        }
    });

    server.Get(R"(/jobs/([^/]+)/results/([^/]+)/([^/]+))",
               [&service](const httplib::Request& req, httplib::Response& res) {
                   try {
                       const bool preview = req.has_param("preview") && req.get_param_value("preview") == "1";
                       auto r = service.fetch(req.matches[1], req.matches[2], req.matches[3], preview);
                       if (req.has_param("format") && req.get_param_value("format") == "json") {
                           res.set_content(r.metrics.dump(), "application/json");
                           return;
                       }
                       res.set_header("X-Final-Perceptual", std::to_string(r.metrics["final_perceptual"].get<double>()));
                       res.set_header("X-Final-Feature-Distance",
                                      std::to_string(r.metrics["final_feature_distance"].get<double>()));
                       res.set_content(std::move(r.png), "image/png");
                   } catch (const NotFound& e) {
                       detail::json_error(res, 404, e.what());
                   } catch (const JobFailed& e) {
                       detail::json_error(res, 409, std::string("job failed: ") + e.what());
                   } catch (const JobNotReady& e) {
                       detail::json_error(res, 409, e.what());
                   }
               });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            detail::json_error(res, 500, e.what());
        } catch (...) {
            detail::json_error(res, 500, "internal error");
        }
    });
}

}  // namespace stylecloak

#endif  // STYLECLOAK_SERVICE_HPP

// stylecloak command line.
//
//   stylecloak <command> [--config FILE] [--out DIR] [--<key> VALUE ...]
//   stylecloak rerun MANIFEST --out DIR
//   stylecloak serve --root DIR [--host H] [--port N]
//
// Every scalar key of a command's defaults table is also a flag, with
// underscores written as dashes. Precedence: flags > config file > defaults.
//
// Exit status: 0 ok, 1 internal fault (manifest marked failed), 2 usage
// error, 3 missing input file.

#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stylecloak/pipeline.hpp"
#include "stylecloak/service.hpp"

namespace sc = stylecloak;
using nlohmann::json;

namespace {

constexpr int kExitFault = 1;
constexpr int kExitUsage = 2;
constexpr int kExitMissing = 3;

std::string flag_name(std::string key) {
    for (char& c : key)
        if (c == '_') c = '-';
    return "--" + key;
}

json parse_flag_value(const json& def, const std::string& key, const std::string& text) {
    try {
        if (def.is_number_integer() || def.is_number_unsigned()) {
            std::size_t used = 0;
            const long long v = std::stoll(text, &used);
            if (used != text.size()) throw std::invalid_argument(text);
            return v;
        }
        if (def.is_number_float()) {
            std::size_t used = 0;
            const double v = std::stod(text, &used);
            if (used != text.size()) throw std::invalid_argument(text);
            return v;
        }
    } catch (const std::exception&) {
        throw CLI::ValidationError(flag_name(key), "expected a number, got '" + text + "'");
    }
    return text;
}

struct CommandSpec {
    CLI::App* app = nullptr;
    std::map<std::string, std::string> values;  // json key -> raw flag text
    std::map<std::string, CLI::Option*> options;
    std::string config_file;
    std::string out;
};

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw sc::NotFound("config file not found: " + path);
    return json::parse(in);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stylecloak: perceptually bounded style cloaks for artwork"};
    app.require_subcommand(1);

    const std::map<std::string, std::string> descriptions{
        {"cloak", "cloak a portfolio folder toward a target style"},
        {"select-target", "rank candidate styles and pick a target for a portfolio"},
        {"mimic", "fine-tune the toy generator on a folder and generate held-out images"},
        {"eval", "genre-shift and PSR report for a folder of generations"},
        {"counter", "grid of attacker transforms against cloaked training art"},
        {"pipeline", "end-to-end uncloaked vs cloaked mimicry on the synthetic corpus"}};

    std::map<std::string, CommandSpec> specs;
    for (const auto& [name, description] : descriptions) {
        CommandSpec& spec = specs[name];
        spec.app = app.add_subcommand(name, description);
        spec.app->add_option("--config", spec.config_file, "JSON config file");
        spec.out = "runs/" + name;
        spec.app->add_option("--out", spec.out, "run directory")->capture_default_str();
        const json table = sc::command_defaults(name);
        for (const auto& [key, def] : table.items()) {
            if (def.is_object() || def.is_array()) continue;
            std::string help = "default: " + def.dump();
            spec.options[key] = spec.app->add_option(flag_name(key), spec.values[key], help);
        }
    }

    std::string rerun_manifest, rerun_out = "runs/rerun";
    auto* rerun_cmd = app.add_subcommand("rerun", "re-execute a recorded run and compare its outputs");
    rerun_cmd->add_option("manifest", rerun_manifest, "manifest.json of the original run")->required();
    rerun_cmd->add_option("--out", rerun_out, "run directory for the rerun")->capture_default_str();

    std::string serve_root = "service", serve_host = "127.0.0.1";
    int serve_port = 8080, serve_steps = sc::defaults::kCloakSteps;
    auto* serve_cmd = app.add_subcommand("serve", "run the local HTTP cloaking service");
    serve_cmd->add_option("--root", serve_root, "job store directory")->capture_default_str();
    serve_cmd->add_option("--host", serve_host)->capture_default_str();
    serve_cmd->add_option("--port", serve_port)->capture_default_str();
    serve_cmd->add_option("--steps", serve_steps, "final optimisation steps")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*rerun_cmd) {
            const auto report = sc::rerun(rerun_manifest, rerun_out);
            for (const auto& d : report.differences) std::cerr << "difference: " << d << "\n";
            std::cout << (report.identical ? "rerun identical" : "rerun differs") << "\n";
            return report.identical ? 0 : kExitFault;
        }
        if (*serve_cmd) {
            sc::ServiceConfig cfg;
            cfg.root = serve_root;
            cfg.final_steps = serve_steps;
            sc::ProtectService service(cfg);
            httplib::Server server;
            sc::install_routes(server, service);
            std::cout << "listening on " << serve_host << ":" << serve_port << std::endl;
            if (!server.listen(serve_host, serve_port)) {
                std::cerr << "cannot listen on " << serve_host << ":" << serve_port << "\n";
                return kExitFault;
            }
            return 0;
        }
        for (auto& [name, spec] : specs) {
            if (!*spec.app) continue;
            const json defaults = sc::command_defaults(name);
            json flags = json::object();
            for (const auto& [key, opt] : spec.options)
                if (opt->count() > 0) flags[key] = parse_flag_value(defaults.at(key), key, spec.values[key]);
            const json config = sc::resolve_config(name, load_config_file(spec.config_file), flags);
            const json manifest = sc::execute_run(name, config, spec.out);
            std::cout << manifest.at("metrics").dump(2) << "\n";
            std::cout << "manifest: " << (std::filesystem::path(spec.out) / "manifest.json").string() << "\n";
            return 0;
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const sc::NotFound& e) {
        std::cerr << "missing input: " << e.what() << "\n";
        return kExitMissing;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFault;
    }
    return kExitUsage;
}

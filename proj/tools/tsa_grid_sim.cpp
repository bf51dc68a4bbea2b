#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tsagrid/harness/run.hpp"

namespace {

constexpr int exit_config = 2;
constexpr int exit_runtime = 3;

struct Args {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string sweep;
    unsigned workers = 0;
};

std::string slurp(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw tsagrid::harness::ConfigError("cannot read config file " + path);
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::vector<double> parse_sweep(const std::string& text)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw tsagrid::harness::ConfigError("--sweep entry '" + item + "' is not a number", 0, 0, "sweep");
        }
    }
    if (out.empty()) {
        throw tsagrid::harness::ConfigError("--sweep must not be empty", 0, 0, "sweep");
    }
    return out;
}

std::filesystem::path output_dir(const Args& a, const tsagrid::harness::ScenarioConfig& c)
{
    if (!a.out.empty()) {
        return a.out;
    }
    if (c.output_dir) {
        return *c.output_dir;
    }
    if (const char* env = std::getenv("TSA_GRID_SIM_OUT"); env && *env) {
        return env;
    }
    return "out";
}

void report(const std::string& kind, const std::exception& e, const std::filesystem::path& dir, int code)
{
    nlohmann::ordered_json rec;
    rec["status"] = "error";
    rec["error"] = kind;
    rec["exit_code"] = code;
    rec["message"] = e.what();
    if (const auto* ce = dynamic_cast<const tsagrid::harness::ConfigError*>(&e)) {
        if (ce->line() > 0) {
            rec["line"] = ce->line();
            rec["column"] = ce->column();
        }
        if (!ce->key().empty()) {
            rec["key"] = ce->key();
        }
    }
    std::cerr << rec.dump() << '\n';
    if (!dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        std::ofstream os(dir / "error.json");
        if (os) {
            os << rec.dump(2) << '\n';
        }
    }
}

int execute(const std::string& command, const Args& a)
{
    namespace h = tsagrid::harness;
    std::filesystem::path dir;
    h::ScenarioConfig c;
    std::string text;
    try {
        text = slurp(a.config);
        c = h::parse_config(text);
        if (a.seed) {
            c.seed = *a.seed;
        }
        if (!a.sweep.empty()) {
            c.sweep = parse_sweep(a.sweep);
        }
        if (command == "validate") {
            std::cout << h::to_json(c).dump(2) << '\n';
            return 0;
        }
        if (command != h::to_string(c.kind)) {
            throw h::ConfigError("config kind is '" + h::to_string(c.kind) + "' but subcommand is '" + command + "'",
                                 0, 0, "kind");
        }
        dir = output_dir(a, c);
    } catch (const tsagrid::Error& e) {
        report("config", e, dir, exit_config);
        return exit_config;
    }

    try {
        h::RunOptions opt;
        opt.output_dir = dir;
        opt.workers = a.workers;
        opt.config_text = text;
        const h::RunResult r = h::run(c, opt);
        for (const auto& f : r.files) {
            std::cout << f.string() << '\n';
        }
        std::cout << r.manifest.string() << '\n';
        return 0;
    } catch (const std::exception& e) {
        report("runtime", e, dir, exit_runtime);
        return exit_runtime;
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Time-stamp attack experiments on PMU-based grid applications"};
    app.set_version_flag("--version", TSAGRID_VERSION);
    app.require_subcommand(1);

    Args args;
    for (const char* name : {"fault", "voltage", "event", "gps", "validate"}) {
        auto* sub = app.add_subcommand(name, std::string(name) == "validate" ? "Parse and echo a scenario"
                                                                            : "Run a scenario of kind " + std::string(name));
        sub->add_option("--config,-c", args.config, "Scenario YAML file")->required();
        sub->add_option("--seed", args.seed, "Override the scenario seed");
        sub->add_option("--sweep", args.sweep, "Override the sweep, comma separated");
        if (std::string(name) != "validate") {
            sub->add_option("--out,-o", args.out, "Output directory (default $TSA_GRID_SIM_OUT or ./out)");
            sub->add_option("--jobs,-j", args.workers, "Worker threads (0 = all cores)");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_config;
    }
    return execute(app.get_subcommands().front()->get_name(), args);
}

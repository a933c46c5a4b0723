#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include <ivpower/cli.hpp>

namespace {

ivpower::Vec parse_levels(const std::string& s) {
    ivpower::Vec out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ivpower::ConfigError("--levels: not a number: '" + item + "'");
        }
    }
    if (out.empty()) throw ivpower::ConfigError("--levels: empty list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Instrument identification power: bounds, decomposition and estimation for the ATE of a binary treatment"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    double tolerance_c = 0.0;
    std::string levels;
    std::string out;
    std::string data;
    unsigned workers = 0;
    bool paper_scale = false;

    const std::pair<const char*, const char*> commands[] = {
        {"dgp-bounds", "population bounds, decomposition and IIP for a DGP"},
        {"surface", "population quantities over a (gamma, rho, beta) grid (long CSV)"},
        {"simulate", "Monte Carlo replication of the estimated reports, or one synthetic sample"},
        {"estimate", "estimated bounds with simulation-corrected intersection bounds"},
        {"rank-ivs", "rank instrument sets by estimated IIP with bootstrap dispersion"},
        {"empirical", "propensity-score reduction and kernel-weighted bounds"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "random seed");
        sub->add_option("--tolerance-c", tolerance_c, "CPS matching tolerance c");
        sub->add_option("--levels", levels, "comma-separated confidence levels, e.g. 0.9,0.95,0.99");
        sub->add_option("--out", out, "output directory");
        sub->add_option("--workers", workers, "worker threads (default: all cores)");
        if (std::string(name) != "dgp-bounds" && std::string(name) != "surface" && std::string(name) != "simulate")
            sub->add_option("--data", data, "dataset CSV (y, d, x1..xk, z1..zm)");
        if (std::string(name) == "simulate") sub->add_flag("--paper-scale", paper_scale, "M=1000, n in {500,5000,10000}");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ivpower::ExitCode::config);
    }

    const auto* sub = app.get_subcommands().front();
    ivpower::cli::Overrides ov;
    ov.paper_scale = paper_scale;
    try {
        if (sub->count("--seed")) ov.seed = seed;
        if (sub->count("--tolerance-c")) ov.tolerance_c = tolerance_c;
        if (sub->count("--levels")) ov.levels = parse_levels(levels);
        if (sub->count("--out")) ov.out = out;
        if (sub->count("--workers")) ov.workers = workers;
        if (!data.empty()) ov.data = data;
        const auto cfg = config_path.empty() ? ivpower::json::object() : ivpower::cli::load_config(config_path);
        return ivpower::cli::run_guarded(sub->get_name(), cfg, ov, std::cout, std::cerr);
    } catch (const ivpower::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.exit_code());
    }
}

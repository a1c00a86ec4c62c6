#include "sgmlab/csv.hpp"
#include "sgmlab/parallel.hpp"
#include "sgmlab/prior.hpp"
#include "sgmlab/scenario.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

fs::path resolve_config(const std::string& arg) {
    if (fs::exists(arg)) return arg;
    return sgm::preset_path(arg);
}

fs::path default_output_root() {
    if (const char* env = std::getenv("SGMLAB_OUT"); env && *env) return env;
    return "out";
}

nlohmann::json read_json_arg(const std::string& arg) {
    if (fs::exists(arg)) {
        std::ifstream in(arg);
        return nlohmann::json::parse(in);
    }
    return nlohmann::json::parse(arg);
}

int run(const std::string& config_arg, const std::string& out, std::optional<std::uint64_t> seed, bool full) {
    auto config = sgm::load_scenario(resolve_config(config_arg));
    if (seed) config.seed = *seed;
    const fs::path dir = out.empty() ? default_output_root() / config.name : fs::path(out);
    const auto result = sgm::run_scenario(config, dir, {full});
    std::cout << "scenario " << config.name << " -> " << result.directory.string() << '\n';
    for (const auto& f : result.files) std::cout << "  " << f.sha256.substr(0, 16) << "  " << f.name << '\n';
    std::cout << "  manifest.json (config " << result.config_hash.substr(0, 16) << ")\n";
    return 0;
}

std::string format_vector(const sgm::Vector& v) {
    std::string out = "[";
    for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? ", " : "") + sgm::format_double(v(i));
    return out + "]";
}

std::string format_matrix(const sgm::Matrix& m) {
    std::string out = "[";
    for (Eigen::Index r = 0; r < m.rows(); ++r) out += (r ? ", " : "") + format_vector(m.row(r).transpose());
    return out + "]";
}

int prior_fit(const std::string& data_arg, const std::vector<double>& Ts, bool isotropic) {
    nlohmann::json j = read_json_arg(data_arg);
    if (j.contains("data")) j = j["data"];
    const auto data = sgm::measure_from_json(j);
    const auto d = sgm::measure_dim(data);
    std::cout << std::left << std::setw(10) << "T" << ' ' << std::setw(24) << "mean" << ' ' << std::setw(32)
              << (isotropic ? "variance" : "covariance") << ' ' << std::setw(22) << "kl_bound" << ' ' << "kl_quadrature"
              << '\n';
    for (double T : Ts) {
        const auto fit = sgm::optimal_gaussian_prior(data, T, isotropic);
        std::string kl = "-";
        if (d <= 2) {
            const auto pT = sgm::pushforward(sgm::SdeSpec(sgm::SdeKind::Brownian, d, T), data, T);
            kl = sgm::format_double(
                sgm::kl_estimate(pT, fit.as_measure(), d == 1 ? sgm::KlMethod::Quadrature1D : sgm::KlMethod::Quadrature2D));
        }
        std::cout << std::setw(10) << sgm::format_double(T) << ' ' << std::setw(24) << format_vector(fit.mean) << ' '
                  << std::setw(32) << (isotropic ? sgm::format_double(fit.scalar) : format_matrix(fit.covariance)) << ' '
                  << std::setw(22) << sgm::format_double(fit.kl_bound) << ' ' << kl << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Score-based generative model laboratory"};
    app.require_subcommand(1);

    unsigned threads = 0;
    app.add_option("--threads", threads, "Worker thread cap (0 = all cores)");

    auto* run_cmd = app.add_subcommand("run", "Run a scenario config or preset");
    std::string config_arg, out_arg;
    std::optional<std::uint64_t> seed;
    bool full = false;
    run_cmd->add_option("config", config_arg, "Scenario JSON file or preset name")->required();
    run_cmd->add_option("--out", out_arg, "Output directory (default $SGMLAB_OUT/<name>, else out/<name>)");
    run_cmd->add_option("--seed", seed, "Override the scenario seed");
    run_cmd->add_option("--threads", threads, "Worker thread cap (0 = all cores)");
    run_cmd->add_flag("--full", full, "Use the scenario's full-scale path count (n_paths_full)");

    auto* prior_cmd = app.add_subcommand("prior-fit", "Optimal Gaussian prior for the Brownian SDE");
    std::string data_arg;
    std::vector<double> Ts{1.0};
    bool isotropic = false;
    prior_cmd->add_option("data", data_arg, "Measure JSON (inline, file, or scenario file)")->required();
    prior_cmd->add_option("-T,--T", Ts, "Terminal times")->expected(1, -1);
    prior_cmd->add_flag("--isotropic", isotropic, "Fit c I instead of a full covariance");

    auto* list_cmd = app.add_subcommand("list-presets", "List shipped scenario presets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    sgm::set_thread_limit(threads);
    try {
        if (*run_cmd) return run(config_arg, out_arg, seed, full);
        if (*prior_cmd) return prior_fit(data_arg, Ts, isotropic);
        if (*list_cmd) {
            for (const auto& name : sgm::list_presets()) std::cout << name << '\n';
            return 0;
        }
    } catch (const sgm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const sgm::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::domain_error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

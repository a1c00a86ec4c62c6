#pragma once

#include "sgmlab/integrate.hpp"
#include "sgmlab/measures.hpp"
#include "sgmlab/metrics.hpp"
#include "sgmlab/score.hpp"
#include "sgmlab/sde.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgm {

inline constexpr const char* kVersion = "0.3.0";

/// Invalid scenario configuration; `field` names the offending JSON path.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string field, const std::string& message)
        : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

enum class PriorKind { Pushforward, Optimal, OptimalIsotropic, Explicit };

struct PriorConfig {
    PriorKind kind = PriorKind::Pushforward;
    std::optional<Measure> measure;  // Explicit only
};

struct KdeRequest {
    double beta = kDefaultKdeBeta;
    GridSpec grid;
    std::vector<double> times;
    bool forward = false;
    bool reverse = true;
    bool sqrt_contrast = true;
};

struct FinalDensityRequest {
    GridSpec grid;  // 1D
    double beta = kDefaultKdeBeta;
};

struct SlopeRequest {
    std::vector<double> times;
    std::size_t n = 10000;
};

/// Everything the pipeline can emit. Absent members are skipped.
struct OutputRequest {
    bool forward_ensemble = false;
    bool reverse_ensemble = false;
    std::size_t ensemble_csv_paths = 100;
    std::vector<double> forward_times;  // record times of the forward run
    std::optional<KdeRequest> kde;
    std::optional<FinalDensityRequest> final_density;
    bool nearest_distance = false;
    std::optional<std::vector<double>> novikov_times;
    std::optional<std::vector<double>> girsanov_times;
    std::optional<std::vector<double>> drift_distance_times;
    bool losses = false;
    std::optional<std::vector<double>> prior_table_T;
    std::optional<SlopeRequest> slope;
};

struct ScenarioConfig {
    std::string name;
    std::string description;
    SdeSpec sde;
    Measure data = PointCloudMeasure(PointSet(1, 1));
    PriorConfig prior;
    DriftPerturbation perturbation;
    std::optional<DriftPerturbation> audit;  // error field whose Girsanov/Novikov sums are recorded
    StepSchedule schedule = StepSchedule::uniform(1.0, 1);
    std::string schedule_name;  // preset name, empty when explicit
    std::size_t n_paths = 1000;
    std::optional<std::size_t> n_paths_full;
    std::uint64_t seed = 0;
    OutputRequest outputs;
};

ScenarioConfig scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const ScenarioConfig& c);
ScenarioConfig load_scenario(const std::filesystem::path& path);

struct OutputFile {
    std::string name;
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct ScenarioResult {
    std::filesystem::path directory;
    std::vector<OutputFile> files;
    std::string config_hash;
};

struct RunOptions {
    bool full = false;
};

/// Runs the pipeline into `out_dir` and writes manifest.json. Runtime failures
/// are rethrown with the scenario name prepended, keeping their type.
ScenarioResult run_scenario(const ScenarioConfig& config, const std::filesystem::path& out_dir,
                            const RunOptions& options = {});

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Directory holding the shipped presets (compile-time default, overridable by SGMLAB_SCENARIOS).
std::filesystem::path preset_directory();
std::vector<std::string> list_presets();
std::filesystem::path preset_path(const std::string& name);

}  // namespace sgm

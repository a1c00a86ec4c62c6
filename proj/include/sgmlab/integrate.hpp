#pragma once

#include "sgmlab/measures.hpp"
#include "sgmlab/score.hpp"
#include "sgmlab/sde.hpp"
#include "sgmlab/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sgm {

struct ScheduleSegment {
    double t_start = 0.0;
    double t_end = 0.0;
    double dt = 0.0;

    bool operator==(const ScheduleSegment&) const = default;
};

/// Piecewise-constant Euler-Maruyama step sizes on [0, T].
class StepSchedule {
public:
    explicit StepSchedule(std::vector<ScheduleSegment> segments);

    /// One segment of `steps` equal steps on [0, T].
    static StepSchedule uniform(double T, std::size_t steps);
    /// dt = 0.9T/1000 on [0, 0.9T], 0.09T/1000 on [0.9T, 0.99T], 0.01T/1000 on [0.99T, T].
    static StepSchedule three_segment(double T);
    /// "uniform_2000" or "three_segment", scaled to T.
    static StepSchedule preset(const std::string& name, double T);

    const std::vector<ScheduleSegment>& segments() const { return segments_; }
    double total_time() const { return segments_.back().t_end; }
    /// All grid times, starting at 0 and ending at total_time().
    const std::vector<double>& grid() const { return grid_; }
    std::size_t steps() const { return grid_.size() - 1; }
    double step_size(std::size_t i) const { return grid_[i + 1] - grid_[i]; }
    double last_step() const { return segments_.back().dt; }
    /// Index of a grid time; throws std::invalid_argument if t is off-grid.
    std::size_t index_of(double t) const;

private:
    std::vector<ScheduleSegment> segments_;
    std::vector<double> grid_;
};

nlohmann::json schedule_to_json(const StepSchedule& s);
/// [[t0, t1, dt], ...] or a preset name.
StepSchedule schedule_from_json(const nlohmann::json& j, double T);

enum class Direction { Forward, Reverse };

/// Running Girsanov sums recorded by the reverse integrator, per record time
/// and path: ito = sum (sigma^T e)(Y_i) . dB_i, quad = sum |sigma^T e|^2 dt.
struct GirsanovTrace {
    std::string fingerprint;  // of (sde, measure, audited perturbation)
    std::vector<std::vector<double>> ito;
    std::vector<std::vector<double>> quad;
};

/// Seeded Euler-Maruyama trajectories recorded at grid times.
struct PathEnsemble {
    Direction direction = Direction::Forward;
    std::uint64_t seed = 0;
    std::size_t path_count = 0;
    std::size_t dim = 0;
    double terminal_time = 0.0;
    std::vector<double> record_times;  // reverse ensembles use reverse time
    std::vector<PointSet> states;      // one per record time
    std::string fingerprint;           // of (sde, measure, perturbation) used to simulate
    std::string data_fingerprint;      // of (sde, measure) alone
    std::optional<GirsanovTrace> girsanov;

    std::size_t record_index(double t) const;
};

/// Fingerprint of the (sde, measure) pair.
std::string data_fingerprint(const SdeSpec& spec, const Measure& data);
/// Fingerprint of the (sde, measure, perturbation) triple.
std::string provenance_fingerprint(const SdeSpec& spec, const Measure& data, const DriftPerturbation& perturbation);

/// X_{i+1} = X_i + beta(X_i) dt + sigma sqrt(dt) Z_i. CLD initial velocities are N(0, I).
PathEnsemble simulate_forward(const SdeSpec& spec, const Measure& init, const StepSchedule& schedule, std::size_t n,
                              std::uint64_t seed, std::span<const double> record_times);

struct ReverseOptions {
    /// Record Girsanov sums for this error field (relative to the same data measure).
    std::optional<DriftPerturbation> audit;
};

/// Y_{i+1} = Y_i + dt * reverse_drift(t_i, Y_i) + sigma sqrt(dt) Z_i, started in the prior
/// (state-space dimension). The drift is evaluated at the left endpoint, so the score is
/// never requested at forward time 0.
PathEnsemble simulate_reverse(const SdeSpec& spec, const Measure& data, const DriftPerturbation& perturbation,
                              const Measure& prior, const StepSchedule& schedule, std::size_t n, std::uint64_t seed,
                              std::span<const double> record_times, const ReverseOptions& options = {});

/// path_id,time,x_0..x_{d-1}; at most max_paths paths (0 = all).
void write_ensemble_csv(const PathEnsemble& e, const std::filesystem::path& path, std::size_t max_paths = 0);

}  // namespace sgm

#include "sgmlab/integrate.hpp"

#include "sgmlab/csv.hpp"
#include "sgmlab/parallel.hpp"
#include "sgmlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgm {

namespace {

constexpr double kGridTolerance = 1e-12;

}  // namespace

StepSchedule::StepSchedule(std::vector<ScheduleSegment> segments) : segments_(std::move(segments)) {
    if (segments_.empty()) throw std::invalid_argument("schedule has no segments");
    if (segments_.front().t_start != 0.0) throw std::invalid_argument("schedule must start at t = 0");
    grid_.push_back(0.0);
    double previous_end = 0.0;
    for (const auto& seg : segments_) {
        if (!(seg.dt > 0.0)) throw std::invalid_argument("schedule step sizes must be positive");
        if (!(seg.t_end > seg.t_start)) throw std::invalid_argument("schedule segments must be increasing");
        if (std::abs(seg.t_start - previous_end) > kGridTolerance)
            throw std::invalid_argument("schedule segments must be contiguous");
        const double length = seg.t_end - seg.t_start;
        const double ratio = length / seg.dt;
        const double steps = std::round(ratio);
        if (steps < 1.0 || std::abs(steps * seg.dt - length) > kGridTolerance * std::max(1.0, length))
            throw std::invalid_argument("schedule segment length is not an integer multiple of its dt");
        const auto m = static_cast<std::size_t>(steps);
        for (std::size_t k = 1; k < m; ++k)
            grid_.push_back(seg.t_start + length * static_cast<double>(k) / static_cast<double>(m));
        grid_.push_back(seg.t_end);
        previous_end = seg.t_end;
    }
}

StepSchedule StepSchedule::uniform(double T, std::size_t steps) {
    if (steps == 0) throw std::invalid_argument("uniform schedule needs at least one step");
    return StepSchedule({{0.0, T, T / static_cast<double>(steps)}});
}

StepSchedule StepSchedule::three_segment(double T) {
    return StepSchedule({{0.0, 0.9 * T, 0.9 * T / 1000.0},
                         {0.9 * T, 0.99 * T, 0.09 * T / 1000.0},
                         {0.99 * T, T, 0.01 * T / 1000.0}});
}

StepSchedule StepSchedule::preset(const std::string& name, double T) {
    if (name == "uniform_2000") return uniform(T, 2000);
    if (name == "three_segment") return three_segment(T);
    throw std::invalid_argument("unknown schedule preset '" + name + "'");
}

std::size_t StepSchedule::index_of(double t) const {
    auto it = std::lower_bound(grid_.begin(), grid_.end(), t);
    const double tol = kGridTolerance * std::max(1.0, total_time());
    std::size_t best = grid_.size();
    if (it != grid_.end() && std::abs(*it - t) <= tol) best = static_cast<std::size_t>(it - grid_.begin());
    if (it != grid_.begin() && std::abs(*(it - 1) - t) <= tol) best = static_cast<std::size_t>(it - grid_.begin() - 1);
    if (best == grid_.size()) throw std::invalid_argument("record time " + format_double(t) + " is not a schedule grid point");
    return best;
}

nlohmann::json schedule_to_json(const StepSchedule& s) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& seg : s.segments()) j.push_back({seg.t_start, seg.t_end, seg.dt});
    return j;
}

StepSchedule schedule_from_json(const nlohmann::json& j, double T) {
    if (j.is_string()) return StepSchedule::preset(j.get<std::string>(), T);
    if (!j.is_array()) throw std::invalid_argument("schedule must be a preset name or [[t0, t1, dt], ...]");
    std::vector<ScheduleSegment> segs;
    for (const auto& row : j) {
        if (!row.is_array() || row.size() != 3) throw std::invalid_argument("schedule rows must be [t0, t1, dt]");
        segs.push_back({row[0].get<double>(), row[1].get<double>(), row[2].get<double>()});
    }
    return StepSchedule(std::move(segs));
}

std::size_t PathEnsemble::record_index(double t) const {
    for (std::size_t i = 0; i < record_times.size(); ++i)
        if (std::abs(record_times[i] - t) <= kGridTolerance * std::max(1.0, terminal_time)) return i;
    throw std::invalid_argument("time " + format_double(t) + " is not a record time of the ensemble");
}

std::string data_fingerprint(const SdeSpec& spec, const Measure& data) {
    const nlohmann::json j{{"sde", sde_to_json(spec)}, {"measure", measure_to_json(data)}};
    return fingerprint(j.dump());
}

std::string provenance_fingerprint(const SdeSpec& spec, const Measure& data, const DriftPerturbation& perturbation) {
    const nlohmann::json j{{"sde", sde_to_json(spec)}, {"measure", measure_to_json(data)},
                           {"perturbation", perturbation_to_json(perturbation)}};
    return fingerprint(j.dump());
}

namespace {

/// Maps grid index -> record slot (or -1), validating the requested times.
std::vector<long> record_slots(const StepSchedule& schedule, std::span<const double> times) {
    std::vector<long> slot(schedule.grid().size(), -1);
    std::size_t previous = 0;
    for (std::size_t r = 0; r < times.size(); ++r) {
        const std::size_t idx = schedule.index_of(times[r]);
        if (r > 0 && idx <= previous) throw std::invalid_argument("record times must be strictly increasing");
        slot[idx] = static_cast<long>(r);
        previous = idx;
    }
    return slot;
}

PathEnsemble empty_ensemble(Direction dir, std::uint64_t seed, std::size_t n, std::size_t dim, const StepSchedule& schedule,
                            std::span<const double> times) {
    PathEnsemble e;
    e.direction = dir;
    e.seed = seed;
    e.path_count = n;
    e.dim = dim;
    e.terminal_time = schedule.total_time();
    for (double t : times) e.record_times.push_back(schedule.grid()[schedule.index_of(t)]);
    e.states.assign(times.size(), PointSet(n, dim));
    return e;
}

PointSet initial_states(const SdeSpec& spec, const Measure& init, std::size_t n, std::uint64_t seed, StreamTag tag) {
    const std::size_t dim = measure_dim(init);
    if (dim == spec.state_dim()) return sample_measure(init, n, seed, tag);
    return sample_measure(Measure(lift_to_state(spec, init)), n, seed, tag);
}

}  // namespace

PathEnsemble simulate_forward(const SdeSpec& spec, const Measure& init, const StepSchedule& schedule, std::size_t n,
                              std::uint64_t seed, std::span<const double> record_times) {
    if (std::abs(schedule.total_time() - spec.terminal_time) > kGridTolerance * std::max(1.0, spec.terminal_time))
        throw std::invalid_argument("schedule must span [0, T]");
    const std::size_t d = spec.state_dim();
    const auto slots = record_slots(schedule, record_times);
    PathEnsemble ens = empty_ensemble(Direction::Forward, seed, n, d, schedule, record_times);
    ens.fingerprint = provenance_fingerprint(spec, init, DriftPerturbation::none());
    ens.data_fingerprint = data_fingerprint(spec, init);
    if (n == 0) return ens;

    PointSet current = initial_states(spec, init, n, seed, StreamTag::MeasureSample);
    if (slots[0] >= 0) ens.states[static_cast<std::size_t>(slots[0])] = current;

    const auto& grid = schedule.grid();
    std::vector<double> sigma(d);
    for (std::size_t j = 0; j < d; ++j) sigma[j] = spec.noise_scale(j);

    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        std::vector<Substream> noise;
        noise.reserve(end - begin);
        for (std::size_t p = begin; p < end; ++p) noise.emplace_back(seed, StreamTag::ForwardNoise, p);
        std::vector<double> beta(d);
        for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
            const double dt = grid[i + 1] - grid[i];
            const double sq = std::sqrt(dt);
            for (std::size_t p = begin; p < end; ++p) {
                double* x = current.row(p);
                spec.drift(x, beta.data());
                auto& rng = noise[p - begin];
                for (std::size_t j = 0; j < d; ++j) {
                    const double z = rng.normal();
                    x[j] += beta[j] * dt + sigma[j] * sq * z;
                }
            }
            if (const long slot = slots[i + 1]; slot >= 0) {
                auto& rec = ens.states[static_cast<std::size_t>(slot)];
                for (std::size_t p = begin; p < end; ++p) std::copy_n(current.row(p), d, rec.row(p));
            }
        }
    });
    return ens;
}

PathEnsemble simulate_reverse(const SdeSpec& spec, const Measure& data, const DriftPerturbation& perturbation,
                              const Measure& prior, const StepSchedule& schedule, std::size_t n, std::uint64_t seed,
                              std::span<const double> record_times, const ReverseOptions& options) {
    const double T = spec.terminal_time;
    if (std::abs(schedule.total_time() - T) > kGridTolerance * std::max(1.0, T))
        throw std::invalid_argument("schedule must span [0, T]");
    const std::size_t d = spec.state_dim();
    if (measure_dim(prior) != d) throw std::invalid_argument("prior dimension must equal the sde state dimension");
    const auto slots = record_slots(schedule, record_times);

    const DriftField field(spec, data, perturbation);
    std::optional<DriftField> audit;
    if (options.audit) audit.emplace(spec, data, *options.audit);

    PathEnsemble ens = empty_ensemble(Direction::Reverse, seed, n, d, schedule, record_times);
    ens.fingerprint = provenance_fingerprint(spec, data, perturbation);
    ens.data_fingerprint = data_fingerprint(spec, data);
    if (audit) {
        GirsanovTrace trace;
        trace.fingerprint = provenance_fingerprint(spec, data, *options.audit);
        trace.ito.assign(record_times.size(), std::vector<double>(n, 0.0));
        trace.quad.assign(record_times.size(), std::vector<double>(n, 0.0));
        ens.girsanov = std::move(trace);
    }
    if (n == 0) return ens;

    PointSet current = sample_measure(prior, n, seed, StreamTag::PriorSample);
    if (slots[0] >= 0) ens.states[static_cast<std::size_t>(slots[0])] = current;

    const auto& grid = schedule.grid();
    std::vector<double> sigma(d);
    for (std::size_t j = 0; j < d; ++j) sigma[j] = spec.noise_scale(j);
    std::vector<double> ito(n, 0.0), quad(n, 0.0);
    const bool drift_needs_reference = perturbation.kind != PerturbationKind::ScoreDifference;
    const bool audit_needs_reference = audit && audit->perturbation().kind == PerturbationKind::ScoreDifference;

    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        std::vector<Substream> noise;
        noise.reserve(end - begin);
        for (std::size_t p = begin; p < end; ++p) noise.emplace_back(seed, StreamTag::ReverseNoise, p);
        std::vector<double> drift(d), err(d), z(d);
        for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
            const double dt = grid[i + 1] - grid[i];
            const double sq = std::sqrt(dt);
            const double forward_time = T - grid[i];
            const auto frame = field.frame(forward_time, drift_needs_reference);
            std::optional<DriftField::Frame> audit_frame;
            if (audit) audit_frame.emplace(audit->frame(forward_time, audit_needs_reference));
            for (std::size_t p = begin; p < end; ++p) {
                double* y = current.row(p);
                field.reverse_drift(frame, y, drift.data());
                auto& rng = noise[p - begin];
                for (std::size_t j = 0; j < d; ++j) z[j] = rng.normal();
                if (audit_frame) {
                    audit_frame->error(y, err.data());
                    double dI = 0.0, dQ = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double se = sigma[j] * err[j];
                        dI += se * sq * z[j];
                        dQ += se * se * dt;
                    }
                    ito[p] += dI;
                    quad[p] += dQ;
                }
                for (std::size_t j = 0; j < d; ++j) y[j] += drift[j] * dt + sigma[j] * sq * z[j];
            }
            if (const long slot = slots[i + 1]; slot >= 0) {
                const auto s = static_cast<std::size_t>(slot);
                auto& rec = ens.states[s];
                for (std::size_t p = begin; p < end; ++p) std::copy_n(current.row(p), d, rec.row(p));
                if (audit) {
                    for (std::size_t p = begin; p < end; ++p) {
                        ens.girsanov->ito[s][p] = ito[p];
                        ens.girsanov->quad[s][p] = quad[p];
                    }
                }
            }
        }
    });
    return ens;
}

void write_ensemble_csv(const PathEnsemble& e, const std::filesystem::path& path, std::size_t max_paths) {
    std::vector<std::string> header{"path_id", "time"};
    for (std::size_t j = 0; j < e.dim; ++j) header.push_back("x_" + std::to_string(j));
    CsvWriter csv(path, header);
    const std::size_t count = max_paths == 0 ? e.path_count : std::min(max_paths, e.path_count);
    for (std::size_t p = 0; p < count; ++p)
        for (std::size_t r = 0; r < e.record_times.size(); ++r) {
            csv.cell(static_cast<std::uint64_t>(p)).cell(e.record_times[r]);
            const double* x = e.states[r].row(p);
            for (std::size_t j = 0; j < e.dim; ++j) csv.cell(x[j]);
            csv.end_row();
        }
}

}  // namespace sgm

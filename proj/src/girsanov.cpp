#include "sgmlab/girsanov.hpp"

#include "sgmlab/csv.hpp"
#include "sgmlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sgm {

namespace {

// exp() of anything above this is within a factor 2^-10 of overflow
constexpr double kMaxLinearLog = 700.0;

double forward_time_of(const PathEnsemble& e, std::size_t r) {
    return e.direction == Direction::Reverse ? e.terminal_time - e.record_times[r] : e.record_times[r];
}

}  // namespace

GirsanovAccumulator girsanov_log_weights(const PathEnsemble& ensemble, const SdeSpec& spec, const Measure& data,
                                         const DriftPerturbation& perturbation) {
    if (ensemble.direction != Direction::Reverse)
        throw std::invalid_argument("girsanov_log_weights: ensemble must come from simulate_reverse");
    if (ensemble.data_fingerprint != data_fingerprint(spec, data))
        throw std::invalid_argument("girsanov_log_weights: ensemble was simulated for a different sde or measure");
    GirsanovAccumulator acc;
    acc.record_times = ensemble.record_times;
    const std::size_t R = ensemble.record_times.size();
    const std::size_t n = ensemble.path_count;
    if (!ensemble.girsanov) {
        if (perturbation.kind != PerturbationKind::None)
            throw std::invalid_argument("girsanov_log_weights: ensemble carries no Girsanov trace (simulate with an audit)");
        acc.ito.assign(R, std::vector<double>(n, 0.0));
        acc.quad = acc.ito;
        acc.log_weight = acc.ito;
        return acc;
    }
    if (ensemble.girsanov->fingerprint != provenance_fingerprint(spec, data, perturbation))
        throw std::invalid_argument("girsanov_log_weights: trace was recorded for a different perturbation");
    acc.ito = ensemble.girsanov->ito;
    acc.quad = ensemble.girsanov->quad;
    acc.log_weight.assign(R, std::vector<double>(n));
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t p = 0; p < n; ++p) acc.log_weight[r][p] = acc.ito[r][p] - 0.5 * acc.quad[r][p];
    return acc;
}

ExpMeanSummary summarize_exp_mean(std::span<const double> a) {
    ExpMeanSummary s;
    if (a.empty()) throw std::invalid_argument("summarize_exp_mean: no samples");
    const double top = *std::max_element(a.begin(), a.end());
    s.max_log_sample = top;
    if (std::isinf(top)) {
        s.log_scale = true;
        s.estimate = s.log_mean_exp = top;
        s.std_error = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    const auto n = static_cast<double>(a.size());
    double sum = 0.0;
    for (double x : a) sum += std::exp(x - top);
    const double scaled_mean = sum / n;
    // leave-one-out means of the scaled values
    double jack_var = 0.0;
    if (a.size() > 1) {
        for (double x : a) {
            const double loo = (sum - std::exp(x - top)) / (n - 1.0);
            jack_var += (loo - scaled_mean) * (loo - scaled_mean);
        }
        jack_var *= (n - 1.0) / n;
    }
    const double scaled_se = std::sqrt(jack_var);
    s.log_mean_exp = top + std::log(scaled_mean);
    if (s.log_mean_exp > kMaxLinearLog) {
        s.log_scale = true;
        s.estimate = s.log_mean_exp;
        s.std_error = scaled_se / scaled_mean;
    } else {
        const double scale = std::exp(top);
        s.estimate = scale * scaled_mean;
        s.std_error = scale * scaled_se;
    }
    return s;
}

NovikovEstimate novikov_estimate(const PathEnsemble& ensemble, const SdeSpec& spec, const Measure& data,
                                 const DriftPerturbation& perturbation, double t) {
    const auto acc = girsanov_log_weights(ensemble, spec, data, perturbation);
    const std::size_t r = ensemble.record_index(t);
    std::vector<double> half(acc.quad[r].size());
    for (std::size_t p = 0; p < half.size(); ++p) half[p] = 0.5 * acc.quad[r][p];
    NovikovEstimate est;
    est.time = ensemble.record_times[r];
    est.summary = half.empty() ? ExpMeanSummary{1.0, 0.0, false, 0.0, 0.0} : summarize_exp_mean(half);
    return est;
}

PathLosses path_losses(const PathEnsemble& ensemble, const SdeSpec& spec, const Measure& data,
                       const DriftPerturbation& perturbation, const std::string& weight_fn_id) {
    if (weight_fn_id != "uniform") throw std::invalid_argument("path_losses: unknown weight_fn_id '" + weight_fn_id + "'");
    if (ensemble.direction != Direction::Forward)
        throw std::invalid_argument("path_losses: ensemble must be a forward ensemble");
    if (ensemble.data_fingerprint != data_fingerprint(spec, data))
        throw std::invalid_argument("path_losses: ensemble was not started in this measure under this sde");
    const std::size_t n = ensemble.path_count;
    const std::size_t d = ensemble.dim;
    std::vector<double> integral(n, 0.0);
    const DriftField field(spec, data, perturbation);
    const bool need_reference = perturbation.kind == PerturbationKind::ScoreDifference;
    double previous = 0.0;
    for (std::size_t r = 0; r < ensemble.record_times.size(); ++r) {
        const double t = ensemble.record_times[r];
        const double weight = t - previous;
        previous = t;
        if (!(t > 0.0) || perturbation.kind == PerturbationKind::None) continue;
        const auto frame = field.frame(t, need_reference);
        parallel_for(n, [&](std::size_t begin, std::size_t end) {
            std::vector<double> e(d);
            for (std::size_t p = begin; p < end; ++p) {
                frame.error(ensemble.states[r].row(p), e.data());
                double sq = 0.0;
                for (double v : e) sq += v * v;
                integral[p] += sq * weight;
            }
        });
    }
    PathLosses out;
    if (n == 0) {
        out.l_exp = {1.0, 0.0, false, 0.0, 0.0};
        return out;
    }
    double total = 0.0;
    for (double v : integral) total += v;
    out.l2 = total / static_cast<double>(n);
    const double factor = 0.5 * spec.sigma_scalar();
    std::vector<double> expo(n);
    for (std::size_t p = 0; p < n; ++p) expo[p] = factor * integral[p];
    out.l_exp = summarize_exp_mean(expo);
    return out;
}

std::vector<DriftDistancePoint> drift_distance_curve(const PathEnsemble& ensemble, const SdeSpec& spec,
                                                     const Measure& reference, const DriftPerturbation& drift_under_test) {
    if (ensemble.data_fingerprint != data_fingerprint(spec, reference))
        throw std::invalid_argument("drift_distance_curve: ensemble was simulated for a different sde or measure");
    const DriftField field(spec, reference, drift_under_test);
    const bool need_reference = drift_under_test.kind == PerturbationKind::ScoreDifference;
    const std::size_t n = ensemble.path_count;
    const std::size_t d = ensemble.dim;
    std::vector<DriftDistancePoint> curve;
    for (std::size_t r = 0; r < ensemble.record_times.size(); ++r) {
        const double ft = forward_time_of(ensemble, r);
        if (!(ft > 0.0)) continue;
        std::vector<double> norms(n, 0.0);
        if (drift_under_test.kind != PerturbationKind::None) {
            const auto frame = field.frame(ft, need_reference);
            parallel_for(n, [&](std::size_t begin, std::size_t end) {
                std::vector<double> e(d);
                for (std::size_t p = begin; p < end; ++p) {
                    frame.error(ensemble.states[r].row(p), e.data());
                    double sq = 0.0;
                    for (double v : e) sq += v * v;
                    norms[p] = std::sqrt(sq);
                }
            });
        }
        double total = 0.0;
        for (double v : norms) total += v;
        curve.push_back({ensemble.record_times[r], n == 0 ? 0.0 : total / static_cast<double>(n)});
    }
    return curve;
}

void write_novikov_csv(const std::vector<NovikovEstimate>& rows, const std::filesystem::path& path) {
    CsvWriter csv(path, {"t", "estimate", "stderr", "log_scale", "log_mean_exp", "max_log_sample"});
    for (const auto& r : rows) {
        csv.cell(r.time).cell(r.summary.estimate).cell(r.summary.std_error);
        csv.cell(std::string_view(r.summary.log_scale ? "true" : "false"));
        csv.cell(r.summary.log_mean_exp).cell(r.summary.max_log_sample);
        csv.end_row();
    }
}

void write_drift_distance_csv(const std::vector<DriftDistancePoint>& rows, const std::filesystem::path& path) {
    CsvWriter csv(path, {"t", "mean_norm"});
    for (const auto& r : rows) {
        csv.cell(r.time).cell(r.mean_norm);
        csv.end_row();
    }
}

void write_losses_csv(const PathLosses& losses, const std::filesystem::path& path) {
    CsvWriter csv(path, {"L2", "L_exp", "log_scale", "log_mean_exp", "max_log_sample"});
    csv.cell(losses.l2).cell(losses.l_exp.estimate);
    csv.cell(std::string_view(losses.l_exp.log_scale ? "true" : "false"));
    csv.cell(losses.l_exp.log_mean_exp).cell(losses.l_exp.max_log_sample);
    csv.end_row();
}

}  // namespace sgm

#pragma once

#include "sgmlab/integrate.hpp"
#include "sgmlab/score.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sgm {

/// Per-path Girsanov sums at each record time of a reverse ensemble.
/// log_weight = ito - quad / 2 holds entrywise as stored.
struct GirsanovAccumulator {
    std::vector<double> record_times;
    std::vector<std::vector<double>> ito;
    std::vector<std::vector<double>> quad;
    std::vector<std::vector<double>> log_weight;

    std::size_t path_count() const { return record_times.empty() ? 0 : ito.front().size(); }
};

/// Reads the Girsanov trace the reverse integrator recorded for `perturbation`
/// (ReverseOptions::audit). Z_t = exp(int sigma^T e . dB - 1/2 int |sigma^T e|^2 ds),
/// Ito sums evaluated at left endpoints. A `none` perturbation gives Z = 1 even
/// without a trace. A trace recorded for a different (sde, measure, perturbation)
/// is rejected with std::invalid_argument.
GirsanovAccumulator girsanov_log_weights(const PathEnsemble& ensemble, const SdeSpec& spec, const Measure& data,
                                         const DriftPerturbation& perturbation);

/// Monte-Carlo mean of exp(a_i) for log-values a_i, reported with its heavy tail.
/// When the mean overflows, `estimate` is log(mean) and `std_error` is the
/// delta-method error of log(mean); `log_scale` marks that case.
struct ExpMeanSummary {
    double estimate = 0.0;
    double std_error = 0.0;
    bool log_scale = false;
    double log_mean_exp = 0.0;
    double max_log_sample = 0.0;
};

/// Jackknife standard error; computed on exp(a_i - max a) so it never overflows.
ExpMeanSummary summarize_exp_mean(std::span<const double> log_values);

struct NovikovEstimate {
    double time = 0.0;
    ExpMeanSummary summary;
};

/// N_t = E[exp(1/2 int_0^t |sigma^T e|^2 ds)] along the ensemble paths.
NovikovEstimate novikov_estimate(const PathEnsemble& ensemble, const SdeSpec& spec, const Measure& data,
                                 const DriftPerturbation& perturbation, double t);

struct PathLosses {
    double l2 = 0.0;
    ExpMeanSummary l_exp;
};

/// Along a forward ensemble from the data measure, with weight w == 1 ("uniform"):
///   L2    = mean_paths sum_k w |e(X_k, t_k)|^2 (t_k - t_{k-1})
///   L_exp = mean_paths exp(sigma/2 * sum_k |e(X_k, t_k)|^2 (t_k - t_{k-1}))
/// with sigma the scalar diffusion magnitude. The sums run over the record
/// times t_k > 0 (right-endpoint rule, t_{-1} = 0).
PathLosses path_losses(const PathEnsemble& ensemble, const SdeSpec& spec, const Measure& data,
                       const DriftPerturbation& perturbation, const std::string& weight_fn_id);

struct DriftDistancePoint {
    double time = 0.0;
    double mean_norm = 0.0;
};

/// Mean over paths of |s(Y_t, t) - grad log pi_t(Y_t)| at each record time, where s
/// is `drift_under_test` applied to the reference measure. Record times at which the
/// forward time is 0 are skipped (the reference score is not defined there).
std::vector<DriftDistancePoint> drift_distance_curve(const PathEnsemble& ensemble, const SdeSpec& spec,
                                                     const Measure& reference, const DriftPerturbation& drift_under_test);

void write_novikov_csv(const std::vector<NovikovEstimate>& rows, const std::filesystem::path& path);
void write_drift_distance_csv(const std::vector<DriftDistancePoint>& rows, const std::filesystem::path& path);
void write_losses_csv(const PathLosses& losses, const std::filesystem::path& path);

}  // namespace sgm

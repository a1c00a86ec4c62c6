// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion ...]   (no arguments runs everything)

#include "oracles.hpp"
#include "sgmlab/girsanov.hpp"
#include "sgmlab/metrics.hpp"
#include "sgmlab/parallel.hpp"
#include "sgmlab/prior.hpp"
#include "sgmlab/scenario.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

using namespace sgm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Vector scalar(double x) { return Vector::Constant(1, x); }

const Measure& fig1() {
    static const Measure m{oracle::fig1_mixture()};
    return m;
}

Measure gaussian_prior(const Vector& mean) {
    return Measure(GaussianMixtureMeasure({{mean, Matrix::Identity(mean.size(), mean.size()), 1.0}}));
}

Measure two_point() {
    PointSet p(2, 1);
    p.row(0)[0] = -1;
    p.row(1)[0] = 1;
    return Measure(PointCloudMeasure(p));
}

Measure skewed_three() {
    return Measure(GaussianMixtureMeasure({{scalar(-1.5), Matrix::Constant(1, 1, 0.2), 0.2},
                                           {scalar(0.5), Matrix::Constant(1, 1, 0.05), 0.5},
                                           {scalar(3.0), Matrix::Constant(1, 1, 0.5), 0.3}}));
}

std::vector<double> log_times(double lo, double hi, int count) {
    std::vector<double> ts;
    for (int i = 0; i < count; ++i) ts.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1)));
    return ts;
}

// Closed-form 1D mixture log density in long double; cheap enough for dense grids.
long double log_density_1d(const GaussianMixtureMeasure& m, long double x) {
    long double top = -INFINITY;
    std::vector<long double> terms;
    for (const auto& c : m.components()) {
        const long double v = c.covariance(0, 0), d = x - c.mean(0);
        terms.push_back(std::log(static_cast<long double>(c.weight)) - 0.5L * std::log(2 * std::numbers::pi_v<long double> * v) -
                        d * d / (2 * v));
        top = std::max(top, terms.back());
    }
    long double s = 0;
    for (auto t : terms) s += std::exp(t - top);
    return top + std::log(s);
}

// KL(p | q) by composite Simpson over +-12 sd of p.
double kl_simpson_1d(const GaussianMixtureMeasure& p, const GaussianMixtureMeasure& q, int intervals = 6000) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& c : p.components()) {
        const double sd = std::sqrt(c.covariance(0, 0));
        lo = std::min(lo, c.mean(0) - 12 * sd);
        hi = std::max(hi, c.mean(0) + 12 * sd);
    }
    return oracle::simpson(
        [&](double x) {
            const long double lp = log_density_1d(p, x);
            return static_cast<double>(std::exp(lp) * (lp - log_density_1d(q, x)));
        },
        lo, hi, intervals);
}

GaussianMixtureMeasure brownian_marginal(const Measure& data, double T) {
    return pushforward(SdeSpec(SdeKind::Brownian, measure_dim(data), T), data, T);
}

// ---------------------------------------------------------------------------

Outcome score_correctness() {
    const Measure circle{make_circle_points(9, 1.0)};
    const Measure dense{make_circle_points(256, 1.0)};
    Matrix full(2, 2);
    full << 0.5, 0.2, 0.2, 0.3;
    const Measure tilted{GaussianMixtureMeasure({{Vector::Constant(2, 1.0), full, 0.4}, {Vector::Constant(2, -1.0), 0.1 * Matrix::Identity(2, 2), 0.6}})};
    const std::vector<std::pair<const char*, const Measure*>> measures{
        {"circle9", &circle}, {"circle256", &dense}, {"fig1", &fig1()}, {"tilted", &tilted}};
    Substream rng(1001, StreamTag::Misc, 0);
    double worst = 0;
    int evaluations = 0;
    for (auto kind : {SdeKind::Brownian, SdeKind::OrnsteinUhlenbeck, SdeKind::CLD}) {
        for (const auto& [name, m] : measures) {
            const SdeSpec spec(kind, measure_dim(*m), 1.0);
            for (int i = 0; i < 100; ++i) {
                const double t = 0.02 * std::pow(50.0, rng.uniform());
                const auto p = pushforward(spec, *m, t);
                Vector x(static_cast<Eigen::Index>(spec.state_dim()));
                if (i % 2 == 0) {
                    // a draw from p_t itself
                    const auto k = std::min<std::size_t>(static_cast<std::size_t>(rng.uniform() * p.size()), p.size() - 1);
                    Vector z(x.size());
                    for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.normal();
                    x = p.component(k).mean + p.sqrt_covariance(k) * z;
                } else {
                    for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = 2.0 * rng.normal();
                }
                const double sd_min = std::sqrt(p.component(0).covariance.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff());
                const double h = std::min(1e-4, 1e-3 * sd_min);
                const Vector fd = oracle::fd_gradient([&](const Vector& y) { return oracle::log_density(p, y); }, x, h);
                const Vector s = score(spec, *m, t, x);
                worst = std::max(worst, (s - fd).norm() / std::max(fd.norm(), 1.0));
                ++evaluations;
            }
        }
    }
    return {worst < 1e-5, fmt("%d (x,t) pairs over 3 SDEs x 4 measures, max relative error %.3g (limit 1e-5)", evaluations, worst)};
}

Outcome forward_marginals() {
    const std::vector<double> times{0.25, 0.5, 1.0};
    const auto schedule = StepSchedule::preset("uniform_2000", 1.0);
    double worst = 0;
    std::string per;
    for (auto kind : {SdeKind::Brownian, SdeKind::OrnsteinUhlenbeck}) {
        const SdeSpec spec(kind, 1, 1.0);
        const auto e = simulate_forward(spec, fig1(), schedule, 100000, 77, times);
        for (std::size_t r = 0; r < times.size(); ++r) {
            const double l1 = oracle::histogram_l1(column(e.states[r], 0), pushforward(spec, fig1(), times[r]), -5, 5, 60);
            worst = std::max(worst, l1);
            per += fmt(" %s@%g=%.4f", to_string(kind).c_str(), times[r], l1);
        }
    }
    return {worst < 0.05, fmt("n=1e5, 60 bins, max L1 %.4f (limit 0.05);", worst) + per};
}

Outcome time_reversal() {
    const SdeSpec spec(SdeKind::Brownian, 1, 1.0);
    const auto schedule = StepSchedule::preset("uniform_2000", 1.0);
    const Measure prior{pushforward(spec, fig1(), 1.0)};
    const auto e = simulate_reverse(spec, fig1(), DriftPerturbation::none(), prior, schedule, 100000, 31, std::vector<double>{1.0});
    const auto target = pushforward(spec, fig1(), schedule.last_step());
    const double l1 = oracle::histogram_l1(column(e.states[0], 0), target, -3, 3, 120);
    return {l1 < 0.05, fmt("n=1e5, 120 bins on [-3,3], L1 vs data smoothed by dt_last = %.4f (limit 0.05)", l1)};
}

Outcome support_recovery() {
    const SdeSpec spec(SdeKind::Brownian, 2, 1.0);
    const auto circle = make_circle_points(9, 1.0);
    Vector e(2), shift(2);
    e << 0.0, -1.0;
    shift << -1.5, 0.0;
    const std::size_t n = 10000;
    const auto ens = simulate_reverse(spec, Measure(circle), DriftPerturbation::constant(e), gaussian_prior(shift),
                                      StepSchedule::preset("three_segment", 1.0), n, 9, std::vector<double>{1.0});
    const auto dist = nearest_distance(ens.states[0], circle);
    std::size_t close = 0;
    std::vector<double> counts(9, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
        if (dist[p] < 0.05) ++close;
        const Vector y = ens.states[0].point(p);
        std::size_t best = 0;
        for (std::size_t k = 1; k < 9; ++k)
            if ((y - circle.points().point(k)).norm() < (y - circle.points().point(best)).norm()) best = k;
        counts[best] += 1;
    }
    const double frac = static_cast<double>(close) / static_cast<double>(n);
    const double pval = oracle::chi_square_p(counts, std::vector<double>(9, static_cast<double>(n) / 9));
    std::string c;
    for (double v : counts) c += fmt(" %.0f", v);
    return {frac >= 0.99 && pval < 0.01, fmt("fraction within 0.05 = %.4f (>= 0.99), chi-square p = %.3g (< 0.01); atom counts", frac, pval) + c};
}

Outcome girsanov_martingale() {
    const SdeSpec spec(SdeKind::Brownian, 2, 1.0);
    const Measure circle{make_circle_points(9, 1.0)};
    Vector e(2);
    e << 0.0, -1.0;
    const auto audit = DriftPerturbation::constant(e);
    const std::vector<double> times{0.25, 0.5, 0.75, 0.9};
    const auto ens = simulate_reverse(spec, circle, DriftPerturbation::none(), Measure(pushforward(spec, circle, 1.0)),
                                      StepSchedule::preset("uniform_2000", 1.0), 10000, 5, times, ReverseOptions{audit});
    const auto acc = girsanov_log_weights(ens, spec, circle, audit);
    bool ok = true;
    std::string per;
    for (std::size_t r = 0; r < times.size(); ++r) {
        const auto s = summarize_exp_mean(acc.log_weight[r]);
        const double z = std::abs(s.estimate - 1.0) / s.std_error;
        ok = ok && z <= 3.0;
        per += fmt(" t=%g: %.4f+-%.4f (%.2f SE);", times[r], s.estimate, s.std_error, z);
    }
    return {ok, "n=1e4, e=(0,-1), E[Z_t] vs 1:" + per};
}

Outcome novikov_explosion() {
    const auto cfg = load_scenario(preset_path("novikov_desk"));
    const std::vector<double> times{0.5, 0.9, 0.999, 0.99999};
    const auto ens = simulate_reverse(cfg.sde, cfg.data, cfg.perturbation, Measure(pushforward(cfg.sde, cfg.data, cfg.sde.terminal_time)),
                                      cfg.schedule, cfg.n_paths, cfg.seed, times, ReverseOptions{cfg.audit});
    const auto n09 = novikov_estimate(ens, cfg.sde, cfg.data, *cfg.audit, 0.9).summary;
    const auto n0999 = novikov_estimate(ens, cfg.sde, cfg.data, *cfg.audit, 0.999).summary;
    const auto curve = drift_distance_curve(ens, cfg.sde, cfg.data, *cfg.audit);
    const double d_half = curve.front().mean_norm, d_last = curve.back().mean_norm;
    const double n_ratio = (n0999.log_scale ? std::exp(std::min(n0999.estimate, 700.0)) : n0999.estimate) / n09.estimate;
    const double d_ratio = d_last / d_half;
    return {n_ratio > 10 && d_ratio > 10,
            fmt("n=%zu; Novikov %.4g at t=0.9 -> %.4g at t=0.999 (ratio %.3g > 10); drift distance %.3g at t=0.5 -> %.3g at t=%g (ratio %.3g > 10)",
                cfg.n_paths, n09.estimate, n0999.estimate, n_ratio, d_half, d_last, curve.back().time, d_ratio)};
}

Outcome optimal_prior() {
    const double T = 1.0;
    const std::vector<std::pair<const char*, Measure>> measures{{"fig1", fig1()}, {"two-point", two_point()}, {"skewed3", skewed_three()}};
    bool ok = true;
    std::string per;
    for (const auto& [name, m] : measures) {
        const auto pT = brownian_marginal(m, T);
        const auto fit = optimal_gaussian_prior(m, T, false);
        const double m0 = fit.mean(0), c0 = fit.covariance(0, 0);
        auto kl = [&](double mm, double cc) { return kl_simpson_1d(pT, oracle::gaussian_1d(mm, cc)); };
        const double at_fit = kl(m0, c0);
        double grid_min = INFINITY;
        for (int i = 0; i <= 20; ++i)
            for (int j = 0; j <= 20; ++j) grid_min = std::min(grid_min, kl(m0 - 1 + 0.1 * i, c0 * (0.5 + 0.075 * j)));
        const double h = 1e-3;
        const double gm = (kl(m0 + h, c0) - kl(m0 - h, c0)) / (2 * h);
        const double gc = (kl(m0, c0 + h) - kl(m0, c0 - h)) / (2 * h);
        const double g = std::hypot(gm, gc);
        ok = ok && at_fit <= grid_min + 1e-12 && g < 1e-3;
        per += fmt(" %s: KL(fit)=%.6f grid min=%.6f |grad|=%.2g;", name, at_fit, grid_min, g);
    }
    return {ok, "21x21 grid over mean+-1 x c*[0.5,2]:" + per};
}

Outcome kl_bound_check() {
    bool ok = true;
    double worst_gap = -INFINITY;
    for (const Measure& m : {fig1(), two_point()}) {
        for (double T : {0.5, 1.0, 4.0, 16.0}) {
            const auto fit = optimal_gaussian_prior(m, T, false);
            const double kl = kl_simpson_1d(brownian_marginal(m, T), fit.as_measure(), 20000);
            worst_gap = std::max(worst_gap, kl - fit.kl_bound);
            ok = ok && kl <= fit.kl_bound + 1e-6;
        }
    }
    const std::vector<double> c1{1.0};
    bool decreasing = true;
    double prev = INFINITY;
    for (double T = 0.05; T <= 64; T *= 1.25) {
        const double b = kl_bound(c1, T);
        decreasing = decreasing && b < prev;
        prev = b;
    }
    const double b16 = kl_bound(c1, 16), b05 = kl_bound(c1, 0.5);
    ok = ok && decreasing && b16 < b05 / 4;
    return {ok, fmt("max KL - bound = %.3g (<= 1e-6); bound decreasing: %s; bound(16)=%.4f < bound(0.5)/4=%.4f", worst_gap,
                    decreasing ? "yes" : "no", b16, b05 / 4)};
}

Outcome drift_slope() {
    const auto times = log_times(1e-4, 1e-1, 7);
    PointSet one(1, 2);
    one.row(0)[0] = 0.3;
    one.row(0)[1] = -0.4;
    const SdeSpec spec(SdeKind::Brownian, 2, 1.0);
    const double s_point = drift_explosion_slope(spec, PointCloudMeasure(one), times, 10000, 17).slope;
    const double s_circle = drift_explosion_slope(spec, make_circle_points(9, 1.0), times, 10000, 17).slope;
    const bool ok = std::abs(s_point + 0.5) <= 0.02 && std::abs(s_circle + 0.5) <= 0.05;
    return {ok, fmt("single point slope %.4f (-0.5 +- 0.02); 9-point circle slope %.4f (-0.5 +- 0.05)", s_point, s_circle)};
}

Outcome de_bruijn() {
    double worst = 0;
    std::string per;
    for (double t : {0.25, 0.5, 1.0}) {
        const double r = de_bruijn_residual(oracle::fig1_mixture(), t, 1e-3);
        worst = std::max(worst, r);
        per += fmt(" t=%g: %.3g;", t, r);
    }
    return {worst < 1e-4, fmt("max residual %.3g (limit 1e-4);", worst) + per};
}

Outcome f_divergence() {
    const SdeSpec spec(SdeKind::Brownian, 1, 1.0);
    const auto schedule = StepSchedule::preset("uniform_2000", 1.0);
    const auto prior = oracle::gaussian_1d(0, 1);
    const auto ens = simulate_reverse(spec, fig1(), DriftPerturbation::none(), Measure(prior), schedule, 100000, 21, std::vector<double>{1.0});
    const auto target = pushforward(spec, fig1(), schedule.last_step());
    const auto col = column(ens.states[0], 0);
    const double sample_kl = histogram_kl(histogram_1d(col, -3, 3, 120), target);
    const double prior_kl = kl_estimate(prior, pushforward(spec, fig1(), 1.0), KlMethod::Quadrature1D);
    const double prior_kl_oracle = kl_simpson_1d(prior, pushforward(spec, fig1(), 1.0), 20000);
    const bool ok = sample_kl <= prior_kl + 0.05 && std::abs(prior_kl - prior_kl_oracle) < 1e-6;
    return {ok, fmt("histogram KL(sample | smoothed data) = %.4f <= KL(prior | p_T) + 0.05 = %.4f (Simpson oracle %.6f)", sample_kl,
                    prior_kl + 0.05, prior_kl_oracle)};
}

Outcome determinism() {
    const auto root = fs::temp_directory_path() / "sgmlab_acceptance_determinism";
    fs::remove_all(root);
    bool ok = true;
    std::string per;
    const unsigned before = thread_limit();
    for (const auto& name : list_presets()) {
        const auto cfg = load_scenario(preset_path(name));
        set_thread_limit(1);
        const auto a = run_scenario(cfg, root / (name + "_a"));
        set_thread_limit(2);
        const auto b = run_scenario(cfg, root / (name + "_b"));
        bool same = a.files.size() == b.files.size() && a.config_hash == b.config_hash;
        for (std::size_t i = 0; same && i < a.files.size(); ++i)
            same = a.files[i].name == b.files[i].name && a.files[i].sha256 == b.files[i].sha256;
        ok = ok && same && !a.files.empty();
        per += fmt(" %s(%zu files)=%s;", name.c_str(), a.files.size(), same ? "identical" : "DIFFER");
    }
    set_thread_limit(before);
    fs::remove_all(root);
    return {ok, "each preset run twice (1 vs 2 worker threads), manifest checksums:" + per};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"score_correctness", score_correctness},
        {"forward_marginals", forward_marginals},
        {"time_reversal", time_reversal},
        {"support_recovery", support_recovery},
        {"girsanov_martingale", girsanov_martingale},
        {"novikov_explosion", novikov_explosion},
        {"optimal_prior", optimal_prior},
        {"kl_bound", kl_bound_check},
        {"drift_slope", drift_slope},
        {"de_bruijn", de_bruijn},
        {"f_divergence", f_divergence},
        {"determinism", determinism},
    };
    std::vector<std::string> selected(argv + 1, argv + argc);
    for (const auto& s : selected) {
        bool known = false;
        for (const auto& c : criteria) known = known || c.first == s;
        if (!known) {
            std::fprintf(stderr, "unknown criterion '%s'\n", s.c_str());
            return 2;
        }
    }
    int failures = 0, index = 0;
    for (const auto& [name, run] : criteria) {
        ++index;
        if (!selected.empty() && std::find(selected.begin(), selected.end(), name) == selected.end()) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] %2d %-20s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", index, name.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}

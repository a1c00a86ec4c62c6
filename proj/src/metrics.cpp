#include "sgmlab/metrics.hpp"

#include "sgmlab/csv.hpp"
#include "sgmlab/parallel.hpp"
#include "sgmlab/quadrature.hpp"
#include "sgmlab/score.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sgm {

namespace {

constexpr double kKdeCutoffExponent = 70.0;
constexpr double kEntropyTolerance = 1e-9;

double squared_distance(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

void check_training(const PointSet& states, const PointCloudMeasure& training) {
    if (training.size() == 0) throw std::invalid_argument("nearest_distance: empty training set");
    if (states.dim() != training.dim()) throw std::invalid_argument("nearest_distance: dimension mismatch");
}

class KdTree {
public:
    explicit KdTree(const PointSet& pts) : pts_(pts), order_(pts.size()) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        nodes_.reserve(2 * pts.size() / kLeaf + 2);
        build(0, order_.size(), 0);
    }

    /// Smallest squared distance, computed exactly as the brute-force path does.
    double nearest_squared(const double* q) const {
        double best = INFINITY;
        search(0, q, best);
        return best;
    }

private:
    static constexpr std::size_t kLeaf = 16;
    struct Node {
        std::size_t begin, end;
        std::size_t axis = 0;
        double split = 0.0;
        int left = -1, right = -1;
    };

    int build(std::size_t begin, std::size_t end, std::size_t depth) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back({begin, end});
        if (end - begin <= kLeaf) return id;
        const std::size_t d = pts_.dim();
        // split on the axis of largest spread
        std::size_t axis = depth % d;
        double widest = -1.0;
        for (std::size_t a = 0; a < d; ++a) {
            double lo = INFINITY, hi = -INFINITY;
            for (std::size_t i = begin; i < end; ++i) {
                const double v = pts_.row(order_[i])[a];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi - lo > widest) {
                widest = hi - lo;
                axis = a;
            }
        }
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                             return pts_.row(a)[axis] < pts_.row(b)[axis];
                         });
        const double split = pts_.row(order_[mid])[axis];
        const int l = build(begin, mid, depth + 1);
        const int r = build(mid, end, depth + 1);
        nodes_[static_cast<std::size_t>(id)].axis = axis;
        nodes_[static_cast<std::size_t>(id)].split = split;
        nodes_[static_cast<std::size_t>(id)].left = l;
        nodes_[static_cast<std::size_t>(id)].right = r;
        return id;
    }

    void search(int id, const double* q, double& best) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.left < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i)
                best = std::min(best, squared_distance(q, pts_.row(order_[i]), pts_.dim()));
            return;
        }
        const double delta = q[n.axis] - n.split;
        const int near = delta < 0.0 ? n.left : n.right;
        const int far = delta < 0.0 ? n.right : n.left;
        search(near, q, best);
        if (delta * delta <= best) search(far, q, best);
    }

    const PointSet& pts_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

}  // namespace

std::vector<double> nearest_distance_brute_force(const PointSet& states, const PointCloudMeasure& training) {
    check_training(states, training);
    std::vector<double> out(states.size());
    const auto& pts = training.points();
    parallel_for(states.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double best = INFINITY;
            for (std::size_t j = 0; j < pts.size(); ++j) best = std::min(best, squared_distance(states.row(i), pts.row(j), pts.dim()));
            out[i] = std::sqrt(best);
        }
    });
    return out;
}

std::vector<double> nearest_distance_indexed(const PointSet& states, const PointCloudMeasure& training) {
    check_training(states, training);
    const KdTree tree(training.points());
    std::vector<double> out(states.size());
    parallel_for(states.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) out[i] = std::sqrt(tree.nearest_squared(states.row(i)));
    });
    return out;
}

std::vector<double> nearest_distance(const PointSet& states, const PointCloudMeasure& training) {
    return training.size() <= kBruteForceLimit ? nearest_distance_brute_force(states, training)
                                               : nearest_distance_indexed(states, training);
}

std::size_t GridSpec::cells() const {
    std::size_t n = 1;
    for (auto c : count) n *= c;
    return n;
}

double GridSpec::node(std::size_t axis, std::size_t k) const {
    return min[axis] + (max[axis] - min[axis]) * static_cast<double>(k) / static_cast<double>(count[axis] - 1);
}

double GridSpec::spacing(std::size_t axis) const {
    return (max[axis] - min[axis]) / static_cast<double>(count[axis] - 1);
}

void GridSpec::validate() const {
    if (count.empty() || min.size() != count.size() || max.size() != count.size())
        throw std::invalid_argument("grid: min, max and count must have one entry per axis");
    for (std::size_t a = 0; a < count.size(); ++a) {
        if (count[a] < 2) throw std::invalid_argument("grid: at least 2 nodes per axis");
        if (!(max[a] > min[a]) || !std::isfinite(min[a]) || !std::isfinite(max[a]))
            throw std::invalid_argument("grid: need finite min < max on every axis");
    }
}

DensityField kde_grid(const PointSet& states, double beta, const GridSpec& grid, bool normalize) {
    grid.validate();
    if (!(beta > 0.0)) throw std::invalid_argument("kde_grid: beta must be positive");
    const std::size_t d = grid.dim();
    if (d > 2) throw std::invalid_argument("kde_grid: only 1D and 2D grids are supported");
    if (states.dim() != d) throw std::invalid_argument("kde_grid: state dimension does not match the grid");

    // Sort by the outer axis first so each block of grid rows sees a contiguous
    // range of states, and ties are broken on the remaining coordinates.
    std::vector<std::size_t> order(states.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double* pa = states.row(a);
        const double* pb = states.row(b);
        return std::lexicographical_compare(pa, pa + d, pb, pb + d);
    });
    std::vector<double> sorted(order.size() * d);
    for (std::size_t i = 0; i < order.size(); ++i)
        std::copy_n(states.row(order[i]), d, sorted.begin() + static_cast<std::ptrdiff_t>(i * d));

    const double radius = std::sqrt(kKdeCutoffExponent / beta);
    DensityField field{grid, std::vector<double>(grid.cells(), 0.0)};
    const std::size_t rows = grid.count[0];
    const std::size_t cols = d == 2 ? grid.count[1] : 1;

    parallel_for(rows, [&](std::size_t r0, std::size_t r1) {
        const double lo = grid.node(0, r0) - radius;
        const double hi = grid.node(0, r1 - 1) + radius;
        std::size_t s0 = 0, s1 = order.size();
        {
            std::size_t a = 0, b = order.size();
            while (a < b) {
                const std::size_t m = (a + b) / 2;
                if (sorted[m * d] < lo) a = m + 1;
                else b = m;
            }
            s0 = a;
            b = order.size();
            while (a < b) {
                const std::size_t m = (a + b) / 2;
                if (sorted[m * d] <= hi) a = m + 1;
                else b = m;
            }
            s1 = a;
        }
        const double h0 = grid.spacing(0);
        const double h1 = d == 2 ? grid.spacing(1) : 1.0;
        for (std::size_t s = s0; s < s1; ++s) {
            const double* y = sorted.data() + s * d;
            const auto row_lo = static_cast<long>(std::ceil((y[0] - radius - grid.min[0]) / h0));
            const auto row_hi = static_cast<long>(std::floor((y[0] + radius - grid.min[0]) / h0));
            const long rb = std::max<long>(row_lo, static_cast<long>(r0));
            const long re = std::min<long>(row_hi, static_cast<long>(r1) - 1);
            for (long r = rb; r <= re; ++r) {
                const double dx = grid.node(0, static_cast<std::size_t>(r)) - y[0];
                if (d == 1) {
                    field.values[static_cast<std::size_t>(r)] += std::exp(-beta * dx * dx);
                    continue;
                }
                const auto col_lo = static_cast<long>(std::ceil((y[1] - radius - grid.min[1]) / h1));
                const auto col_hi = static_cast<long>(std::floor((y[1] + radius - grid.min[1]) / h1));
                const long cb = std::max<long>(col_lo, 0);
                const long ce = std::min<long>(col_hi, static_cast<long>(cols) - 1);
                double* row = field.values.data() + static_cast<std::size_t>(r) * cols;
                for (long c = cb; c <= ce; ++c) {
                    const double dy = grid.node(1, static_cast<std::size_t>(c)) - y[1];
                    row[c] += std::exp(-beta * (dx * dx + dy * dy));
                }
            }
        }
    });

    if (normalize) {
        double cell = 1.0;
        for (std::size_t a = 0; a < d; ++a) cell *= grid.spacing(a);
        const double total = std::accumulate(field.values.begin(), field.values.end(), 0.0) * cell;
        if (total > 0.0)
            for (auto& v : field.values) v /= total;
    }
    return field;
}

DensityField mixture_density_grid(const GaussianMixtureMeasure& m, const GridSpec& grid) {
    grid.validate();
    if (m.dim() != grid.dim()) throw std::invalid_argument("mixture_density_grid: dimension mismatch");
    const CompiledMixture cm(m);
    DensityField field{grid, std::vector<double>(grid.cells(), 0.0)};
    const std::size_t d = grid.dim();
    const std::size_t cols = d == 2 ? grid.count[1] : 1;
    parallel_for(field.values.size(), [&](std::size_t begin, std::size_t end) {
        double x[2];
        for (std::size_t i = begin; i < end; ++i) {
            x[0] = grid.node(0, i / cols);
            if (d == 2) x[1] = grid.node(1, i % cols);
            field.values[i] = std::exp(cm.log_density(x));
        }
    });
    return field;
}

void write_density_csv(const DensityField& field, const std::filesystem::path& path, bool sqrt_contrast) {
    const auto& g = field.grid;
    const bool two_d = g.dim() == 2;
    CsvWriter csv(path, two_d ? std::vector<std::string>{"x", "y", "value"} : std::vector<std::string>{"x", "value"});
    const std::size_t cols = two_d ? g.count[1] : 1;
    for (std::size_t i = 0; i < field.values.size(); ++i) {
        csv.cell(g.node(0, i / cols));
        if (two_d) csv.cell(g.node(1, i % cols));
        csv.cell(sqrt_contrast ? std::sqrt(field.values[i]) : field.values[i]);
        csv.end_row();
    }
}

SlopeFit drift_explosion_slope(const SdeSpec& spec, const PointCloudMeasure& cloud, std::span<const double> t_grid,
                               std::size_t n, std::uint64_t seed) {
    if (spec.kind != SdeKind::Brownian) throw std::invalid_argument("drift_explosion_slope: Brownian SDE required");
    if (t_grid.size() < 4) throw std::invalid_argument("drift_explosion_slope: need at least 4 grid times");
    if (n == 0) throw std::invalid_argument("drift_explosion_slope: n must be positive");
    if (cloud.dim() != spec.data_dim) throw std::invalid_argument("drift_explosion_slope: dimension mismatch");
    for (double t : t_grid)
        if (!(t > 0.0) || t > spec.terminal_time) throw std::invalid_argument("drift_explosion_slope: times must lie in (0, T]");
    const auto [t_lo, t_hi] = std::minmax_element(t_grid.begin(), t_grid.end());
    if (*t_hi < 100.0 * *t_lo) throw std::invalid_argument("drift_explosion_slope: grid must span at least two decades");

    // Sampling every marginal from the same substreams gives X_t = x_k + sqrt(t) Z
    // with (k, Z) shared across t.
    const std::size_t d = cloud.dim();
    SlopeFit fit;
    std::vector<double> norms(n);
    for (double t : t_grid) {
        const auto marginal = pushforward(spec, Measure(cloud), t);
        const CompiledMixture p(marginal);
        const PointSet xs = sample_measure(Measure(marginal), n, seed, StreamTag::SlopeSample);
        parallel_for(n, [&](std::size_t begin, std::size_t end) {
            std::vector<double> g(d);
            for (std::size_t i = begin; i < end; ++i) {
                p.score(xs.row(i), g.data());
                double s = 0.0;
                for (double v : g) s += v * v;
                norms[i] = std::sqrt(s);
            }
        });
        double sum = 0.0;
        for (double v : norms) sum += v;
        fit.times.push_back(t);
        fit.mean_norm.push_back(sum / static_cast<double>(n));
    }

    const auto k = static_cast<double>(fit.times.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < fit.times.size(); ++i) {
        const double lx = std::log(fit.times[i]);
        const double ly = std::log(fit.mean_norm[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = k * sxx - sx * sx;
    if (!(denom > 0.0)) throw std::invalid_argument("drift_explosion_slope: grid times must be distinct");
    fit.slope = (k * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / k;
    return fit;
}

namespace {

void require_1d_nondegenerate(const GaussianMixtureMeasure& m, const char* who) {
    if (m.dim() != 1) throw std::invalid_argument(std::string(who) + ": 1D mixture required");
    if (!m.nondegenerate()) throw std::invalid_argument(std::string(who) + ": mixture must be nondegenerate");
}

}  // namespace

double entropy_1d(const GaussianMixtureMeasure& m) {
    require_1d_nondegenerate(m, "entropy_1d");
    const CompiledMixture cm(m);
    const auto f = [&](double x) {
        const double lp = cm.log_density(&x);
        const double p = std::exp(lp);
        return p == 0.0 ? 0.0 : -p * lp;
    };
    return integrate_panels(f, mixture_breakpoints(m, 0, 12.0), kEntropyTolerance).value;
}

double fisher_information_1d(const GaussianMixtureMeasure& m) {
    require_1d_nondegenerate(m, "fisher_information_1d");
    const CompiledMixture cm(m);
    const auto f = [&](double x) {
        double g = 0.0;
        const double lp = cm.score(&x, &g);
        return std::exp(lp) * g * g;
    };
    return integrate_panels(f, mixture_breakpoints(m, 0, 12.0), kEntropyTolerance).value;
}

double de_bruijn_residual(const GaussianMixtureMeasure& data, double t, double h) {
    if (data.dim() != 1) throw std::invalid_argument("de_bruijn_residual: 1D mixture required");
    if (!(h > 0.0) || !(t - h > 0.0)) throw std::invalid_argument("de_bruijn_residual: need h > 0 and t - h > 0");
    const SdeSpec spec(SdeKind::Brownian, 1, t + h);
    const Measure m(data);
    const double hp = entropy_1d(pushforward(spec, m, t + h));
    const double hm = entropy_1d(pushforward(spec, m, t - h));
    const double fisher = fisher_information_1d(pushforward(spec, m, t));
    return std::abs((hp - hm) / (2.0 * h) - 0.5 * fisher);
}

double mixture_interval_probability(const GaussianMixtureMeasure& m, double lo, double hi) {
    if (m.dim() != 1) throw std::invalid_argument("mixture_interval_probability: 1D mixture required");
    double p = 0.0;
    for (const auto& c : m.components()) {
        const double mu = c.mean(0);
        const double var = c.covariance(0, 0);
        if (var <= 0.0) {
            if (mu >= lo && mu < hi) p += c.weight;
            continue;
        }
        const double s = std::sqrt(2.0 * var);
        // use the tail on the side of the interval to avoid cancellation
        const double mass = lo >= mu ? 0.5 * (std::erfc((lo - mu) / s) - std::erfc((hi - mu) / s))
                                     : 0.5 * (std::erfc(-(hi - mu) / s) - std::erfc(-(lo - mu) / s));
        p += c.weight * mass;
    }
    return p;
}

Histogram1D histogram_1d(std::span<const double> samples, double lo, double hi, std::size_t bins) {
    if (bins == 0 || !(hi > lo)) throw std::invalid_argument("histogram_1d: need bins > 0 and lo < hi");
    if (samples.empty()) throw std::invalid_argument("histogram_1d: no samples");
    Histogram1D h{lo, hi, std::vector<double>(bins, 0.0), 0.0};
    const double inv = static_cast<double>(bins) / (hi - lo);
    std::vector<std::size_t> counts(bins, 0);
    std::size_t outside = 0;
    for (double x : samples) {
        if (!(x >= lo && x < hi)) {
            ++outside;
            continue;
        }
        const auto k = std::min(bins - 1, static_cast<std::size_t>((x - lo) * inv));
        ++counts[k];
    }
    const auto n = static_cast<double>(samples.size());
    for (std::size_t k = 0; k < bins; ++k) h.mass[k] = static_cast<double>(counts[k]) / n;
    h.outside = static_cast<double>(outside) / n;
    return h;
}

namespace {

std::vector<double> reference_bins(const Histogram1D& h, const GaussianMixtureMeasure& ref, double& outside) {
    const std::size_t bins = h.mass.size();
    std::vector<double> p(bins);
    double inside = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
        const double a = h.lo + (h.hi - h.lo) * static_cast<double>(k) / static_cast<double>(bins);
        const double b = h.lo + (h.hi - h.lo) * static_cast<double>(k + 1) / static_cast<double>(bins);
        p[k] = mixture_interval_probability(ref, a, b);
        inside += p[k];
    }
    outside = std::max(0.0, 1.0 - inside);
    return p;
}

}  // namespace

double histogram_l1(const Histogram1D& h, const GaussianMixtureMeasure& reference) {
    double ref_outside = 0.0;
    const auto p = reference_bins(h, reference, ref_outside);
    double l1 = std::abs(h.outside - ref_outside);
    for (std::size_t k = 0; k < p.size(); ++k) l1 += std::abs(h.mass[k] - p[k]);
    return l1;
}

double histogram_kl(const Histogram1D& h, const GaussianMixtureMeasure& reference) {
    double ref_outside = 0.0;
    auto p = reference_bins(h, reference, ref_outside);
    p.push_back(ref_outside);
    auto q = h.mass;
    q.push_back(h.outside);
    double kl = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (q[k] == 0.0) continue;
        if (p[k] <= 0.0) return INFINITY;
        kl += q[k] * std::log(q[k] / p[k]);
    }
    return kl;
}

std::vector<double> column(const PointSet& points, std::size_t axis) {
    if (axis >= points.dim()) throw std::invalid_argument("column: axis out of range");
    std::vector<double> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) out[i] = points.row(i)[axis];
    return out;
}

}  // namespace sgm

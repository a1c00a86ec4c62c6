#pragma once

#include "sgmlab/measures.hpp"
#include "sgmlab/sde.hpp"
#include "sgmlab/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace sgm {

/// Euclidean distance from each state to its closest training point.
/// Brute force up to kBruteForceLimit training points, a k-d tree above.
std::vector<double> nearest_distance(const PointSet& states, const PointCloudMeasure& training);
std::vector<double> nearest_distance_brute_force(const PointSet& states, const PointCloudMeasure& training);
std::vector<double> nearest_distance_indexed(const PointSet& states, const PointCloudMeasure& training);
inline constexpr std::size_t kBruteForceLimit = 10000;

/// Axis-aligned lattice: node k on axis a sits at min[a] + (max[a] - min[a]) k / (count[a] - 1).
struct GridSpec {
    std::vector<double> min;
    std::vector<double> max;
    std::vector<std::size_t> count;

    std::size_t dim() const { return count.size(); }
    std::size_t cells() const;
    double node(std::size_t axis, std::size_t k) const;
    double spacing(std::size_t axis) const;
    void validate() const;
};

/// Values in row-major order over the axes (last axis fastest).
struct DensityField {
    GridSpec grid;
    std::vector<double> values;

    double at(std::size_t i) const { return values[i]; }
    double at(std::size_t i, std::size_t j) const { return values[i * grid.count[1] + j]; }
};

inline constexpr double kDefaultKdeBeta = 1000.0;

/// h(x) = sum_i exp(-beta |x - y_i|^2) on the grid. States are summed in sorted
/// order so the field is independent of their order. Contributions below
/// exp(-70) are dropped.
DensityField kde_grid(const PointSet& states, double beta, const GridSpec& grid, bool normalize = false);

/// Columns x[,y],value. sqrt_contrast applies the square root on output only.
void write_density_csv(const DensityField& field, const std::filesystem::path& path, bool sqrt_contrast = false);

/// Pointwise density of a mixture on the grid (nondegenerate mixtures only).
DensityField mixture_density_grid(const GaussianMixtureMeasure& m, const GridSpec& grid);

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<double> times;
    std::vector<double> mean_norm;
};

/// Least-squares fit of log E|grad log p_t(X_t)| against log t for the Brownian
/// marginals of a point cloud. The same n draws are reused at every t.
SlopeFit drift_explosion_slope(const SdeSpec& spec, const PointCloudMeasure& cloud, std::span<const double> t_grid,
                               std::size_t n, std::uint64_t seed);

/// Differential entropy of a nondegenerate 1D mixture by quadrature.
double entropy_1d(const GaussianMixtureMeasure& m);
/// E_p |d/dx log p|^2 for a nondegenerate 1D mixture by quadrature.
double fisher_information_1d(const GaussianMixtureMeasure& m);

/// |(H(p_{t+h}) - H(p_{t-h})) / 2h - 1/2 E|grad log p_t|^2| for Brownian marginals.
double de_bruijn_residual(const GaussianMixtureMeasure& data, double t, double h);

/// P(lo <= X < hi) for a 1D mixture; zero-variance components are steps.
double mixture_interval_probability(const GaussianMixtureMeasure& m, double lo, double hi);

struct Histogram1D {
    double lo = 0.0;
    double hi = 1.0;
    std::vector<double> mass;  // per-bin fraction of all samples
    double outside = 0.0;      // fraction outside [lo, hi)
};

Histogram1D histogram_1d(std::span<const double> samples, double lo, double hi, std::size_t bins);

/// sum_bins |empirical - exact| plus the difference of the out-of-range masses.
double histogram_l1(const Histogram1D& h, const GaussianMixtureMeasure& reference);

/// Binned KL(empirical | reference) over [lo, hi) bins and the outer remainder.
double histogram_kl(const Histogram1D& h, const GaussianMixtureMeasure& reference);

/// Coordinate `axis` of every point.
std::vector<double> column(const PointSet& points, std::size_t axis);

}  // namespace sgm

#pragma once

#include "sgmlab/rng.hpp"
#include "sgmlab/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <variant>
#include <vector>

namespace sgm {

/// Weighted finite point set: the training examples and their empirical measure.
class PointCloudMeasure {
public:
    /// Uniform weights.
    explicit PointCloudMeasure(PointSet points);
    PointCloudMeasure(PointSet points, std::vector<double> weights);

    std::size_t dim() const { return points_.dim(); }
    std::size_t size() const { return points_.size(); }
    const PointSet& points() const { return points_; }
    const std::vector<double>& weights() const { return weights_; }

    /// max_i |x_i|
    double bounding_radius() const;
    Vector mean() const;
    Matrix covariance() const;

private:
    PointSet points_;
    std::vector<double> weights_;
};

enum class CovarianceShape { Scalar, Diagonal, Full };

struct GaussianComponent {
    Vector mean;
    Matrix covariance;
    double weight = 0.0;
};

/// Weighted Gaussian components; zero covariances are allowed and act as atoms.
class GaussianMixtureMeasure {
public:
    explicit GaussianMixtureMeasure(std::vector<GaussianComponent> components);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return components_.size(); }
    const std::vector<GaussianComponent>& components() const { return components_; }
    const GaussianComponent& component(std::size_t k) const { return components_[k]; }

    /// Symmetric square root of component k's covariance (clamped eigenvalues).
    const Matrix& sqrt_covariance(std::size_t k) const { return sqrt_cov_[k]; }
    CovarianceShape shape(std::size_t k) const { return shapes_[k]; }
    /// True if every covariance is positive definite.
    bool nondegenerate() const;

    Vector mean() const;
    Matrix covariance() const;

private:
    std::size_t dim_ = 0;
    std::vector<GaussianComponent> components_;
    std::vector<Matrix> sqrt_cov_;
    std::vector<CovarianceShape> shapes_;
    std::vector<double> min_eigenvalue_;
};

using Measure = std::variant<PointCloudMeasure, GaussianMixtureMeasure>;

std::size_t measure_dim(const Measure& m);
Vector measure_mean(const Measure& m);
Matrix measure_covariance(const Measure& m);
/// Point clouds become mixtures of zero-covariance components.
GaussianMixtureMeasure as_mixture(const Measure& m);

/// n points at angles 2*pi*k/n on the circle of the given radius, uniform weights.
PointCloudMeasure make_circle_points(std::size_t n, double radius);

/// n i.i.d. draws; draw i depends only on (measure, seed, i).
PointSet sample_measure(const Measure& m, std::size_t n, std::uint64_t seed);
/// Same, drawing from a named substream family.
PointSet sample_measure(const Measure& m, std::size_t n, std::uint64_t seed, StreamTag tag);

/// {"kind": "points"|"mixture", "dim": d, "entries": [...], "weights": [...]}.
/// Also accepts the shorthand {"kind": "circle", "n": N, "radius": r}.
Measure measure_from_json(const nlohmann::json& j);
nlohmann::json measure_to_json(const Measure& m);

}  // namespace sgm

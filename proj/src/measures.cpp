#include "sgmlab/measures.hpp"

#include "sgmlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace sgm {

namespace {

constexpr double kWeightTolerance = 1e-12;
constexpr double kPsdTolerance = 1e-10;

void check_weights(const std::vector<double>& w) {
    if (w.empty()) throw std::invalid_argument("measure has no weights");
    double total = 0.0;
    for (double x : w) {
        if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("measure weights must be finite and nonnegative");
        total += x;
    }
    if (std::abs(total - 1.0) > kWeightTolerance)
        throw std::invalid_argument("measure weights must sum to 1 (got " + std::to_string(total) + ")");
}

CovarianceShape detect_shape(const Matrix& c) {
    const Eigen::Index d = c.rows();
    bool diagonal = true;
    for (Eigen::Index i = 0; i < d && diagonal; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            if (i != j && c(i, j) != 0.0) {
                diagonal = false;
                break;
            }
    if (!diagonal) return CovarianceShape::Full;
    for (Eigen::Index i = 1; i < d; ++i)
        if (c(i, i) != c(0, 0)) return CovarianceShape::Diagonal;
    return CovarianceShape::Scalar;
}

}  // namespace

PointCloudMeasure::PointCloudMeasure(PointSet points)
    : PointCloudMeasure(points, std::vector<double>(points.size(), points.empty() ? 0.0 : 1.0 / static_cast<double>(points.size()))) {}

PointCloudMeasure::PointCloudMeasure(PointSet points, std::vector<double> weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
    if (points_.empty()) throw std::invalid_argument("point cloud is empty");
    if (points_.dim() < 1) throw std::invalid_argument("point cloud dimension must be >= 1");
    if (weights_.size() != points_.size()) throw std::invalid_argument("point cloud weight count does not match point count");
    check_weights(weights_);
    for (double x : points_.raw())
        if (!std::isfinite(x)) throw std::invalid_argument("point cloud coordinates must be finite");
}

double PointCloudMeasure::bounding_radius() const {
    double r = 0.0;
    for (std::size_t i = 0; i < size(); ++i) r = std::max(r, points_.point(i).norm());
    return r;
}

Vector PointCloudMeasure::mean() const {
    Vector m = Vector::Zero(static_cast<Eigen::Index>(dim()));
    for (std::size_t i = 0; i < size(); ++i) m += weights_[i] * points_.point(i);
    return m;
}

Matrix PointCloudMeasure::covariance() const {
    const Vector m = mean();
    Matrix c = Matrix::Zero(m.size(), m.size());
    for (std::size_t i = 0; i < size(); ++i) {
        const Vector diff = points_.point(i) - m;
        c += weights_[i] * diff * diff.transpose();
    }
    return 0.5 * (c + c.transpose());
}

GaussianMixtureMeasure::GaussianMixtureMeasure(std::vector<GaussianComponent> components)
    : components_(std::move(components)) {
    if (components_.empty()) throw std::invalid_argument("mixture has no components");
    dim_ = static_cast<std::size_t>(components_.front().mean.size());
    if (dim_ < 1) throw std::invalid_argument("mixture dimension must be >= 1");
    std::vector<double> w;
    w.reserve(components_.size());
    for (auto& comp : components_) {
        if (static_cast<std::size_t>(comp.mean.size()) != dim_)
            throw std::invalid_argument("mixture component means have inconsistent dimension");
        if (comp.covariance.rows() != comp.mean.size() || comp.covariance.cols() != comp.mean.size())
            throw std::invalid_argument("mixture covariance shape does not match dimension");
        if (!comp.mean.allFinite() || !comp.covariance.allFinite())
            throw std::invalid_argument("mixture parameters must be finite");
        const double asym = (comp.covariance - comp.covariance.transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-12 * std::max(1.0, comp.covariance.cwiseAbs().maxCoeff()))
            throw std::invalid_argument("mixture covariance is not symmetric");
        comp.covariance = 0.5 * (comp.covariance + comp.covariance.transpose());

        Eigen::SelfAdjointEigenSolver<Matrix> eig(comp.covariance);
        Vector lambda = eig.eigenvalues();
        if (lambda.minCoeff() < -kPsdTolerance)
            throw std::invalid_argument("mixture covariance is not positive semidefinite");
        if (lambda.minCoeff() < 0.0) {
            lambda = lambda.cwiseMax(0.0);
            comp.covariance = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
        }
        shapes_.push_back(detect_shape(comp.covariance));
        sqrt_cov_.push_back(eig.eigenvectors() * lambda.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose());
        min_eigenvalue_.push_back(lambda.minCoeff());
        w.push_back(comp.weight);
    }
    check_weights(w);
}

bool GaussianMixtureMeasure::nondegenerate() const {
    return std::all_of(min_eigenvalue_.begin(), min_eigenvalue_.end(), [](double l) { return l > 0.0; });
}

Vector GaussianMixtureMeasure::mean() const {
    Vector m = Vector::Zero(static_cast<Eigen::Index>(dim_));
    for (const auto& c : components_) m += c.weight * c.mean;
    return m;
}

Matrix GaussianMixtureMeasure::covariance() const {
    const Vector m = mean();
    Matrix cov = Matrix::Zero(m.size(), m.size());
    for (const auto& c : components_) {
        const Vector diff = c.mean - m;
        cov += c.weight * (c.covariance + diff * diff.transpose());
    }
    return 0.5 * (cov + cov.transpose());
}

std::size_t measure_dim(const Measure& m) {
    return std::visit([](const auto& x) { return x.dim(); }, m);
}

Vector measure_mean(const Measure& m) {
    return std::visit([](const auto& x) { return x.mean(); }, m);
}

Matrix measure_covariance(const Measure& m) {
    return std::visit([](const auto& x) { return x.covariance(); }, m);
}

GaussianMixtureMeasure as_mixture(const Measure& m) {
    if (const auto* mix = std::get_if<GaussianMixtureMeasure>(&m)) return *mix;
    const auto& cloud = std::get<PointCloudMeasure>(m);
    const auto d = static_cast<Eigen::Index>(cloud.dim());
    std::vector<GaussianComponent> comps;
    comps.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i)
        comps.push_back({cloud.points().point(i), Matrix::Zero(d, d), cloud.weights()[i]});
    return GaussianMixtureMeasure(std::move(comps));
}

PointCloudMeasure make_circle_points(std::size_t n, double radius) {
    if (n == 0) throw std::invalid_argument("make_circle_points: n must be >= 1");
    if (!(radius > 0.0) || !std::isfinite(radius)) throw std::invalid_argument("make_circle_points: radius must be positive");
    PointSet pts(n, 2);
    for (std::size_t k = 0; k < n; ++k) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        pts.row(k)[0] = radius * std::cos(angle);
        pts.row(k)[1] = radius * std::sin(angle);
    }
    // exact zeros at the axis crossings keep symmetric configurations symmetric
    for (double& x : pts.raw())
        if (std::abs(x) < 1e-15 * radius) x = 0.0;
    return PointCloudMeasure(std::move(pts));
}

namespace {

std::size_t pick_index(const std::vector<double>& cumulative, double u) {
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) return cumulative.size() - 1;
    return static_cast<std::size_t>(it - cumulative.begin());
}

std::vector<double> cumulative_of(const std::vector<double>& w) {
    std::vector<double> c(w.size());
    std::partial_sum(w.begin(), w.end(), c.begin());
    return c;
}

}  // namespace

PointSet sample_measure(const Measure& m, std::size_t n, std::uint64_t seed) {
    return sample_measure(m, n, seed, StreamTag::MeasureSample);
}

PointSet sample_measure(const Measure& m, std::size_t n, std::uint64_t seed, StreamTag tag) {
    const std::size_t d = measure_dim(m);
    PointSet out(n, d);
    if (const auto* cloud = std::get_if<PointCloudMeasure>(&m)) {
        const auto cum = cumulative_of(cloud->weights());
        for (std::size_t i = 0; i < n; ++i) {
            Substream rng(seed, tag, i);
            const std::size_t k = pick_index(cum, rng.uniform());
            std::copy_n(cloud->points().row(k), d, out.row(i));
        }
        return out;
    }
    const auto& mix = std::get<GaussianMixtureMeasure>(m);
    std::vector<double> w;
    for (const auto& c : mix.components()) w.push_back(c.weight);
    const auto cum = cumulative_of(w);
    Vector z(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        Substream rng(seed, tag, i);
        const std::size_t k = pick_index(cum, rng.uniform());
        for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.normal();
        const auto& comp = mix.component(k);
        Vector x;
        switch (mix.shape(k)) {
            case CovarianceShape::Scalar:
                x = comp.mean + std::sqrt(comp.covariance(0, 0)) * z;
                break;
            case CovarianceShape::Diagonal:
                x = comp.mean + comp.covariance.diagonal().cwiseSqrt().cwiseProduct(z);
                break;
            case CovarianceShape::Full:
                x = comp.mean + mix.sqrt_covariance(k) * z;
                break;
        }
        out.set_point(i, x);
    }
    return out;
}

namespace {

Vector vector_from_json(const nlohmann::json& j, std::size_t dim, const char* what) {
    if (!j.is_array()) throw std::invalid_argument(std::string(what) + " must be an array");
    if (j.size() != dim) throw std::invalid_argument(std::string(what) + " has wrong dimension");
    Vector v(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < dim; ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
    return v;
}

Matrix covariance_from_json(const nlohmann::json& j, std::size_t dim) {
    const auto d = static_cast<Eigen::Index>(dim);
    if (j.is_number()) return j.get<double>() * Matrix::Identity(d, d);
    if (!j.is_array() || j.size() != dim) throw std::invalid_argument("mixture entry 'cov' must be a number or a d x d array");
    Matrix c(d, d);
    for (std::size_t r = 0; r < dim; ++r) {
        const Vector row = vector_from_json(j.at(r), dim, "covariance row");
        c.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return c;
}

std::vector<double> weights_from_json(const nlohmann::json& j, std::size_t count) {
    if (!j.contains("weights")) return std::vector<double>(count, 1.0 / static_cast<double>(count));
    auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != count) throw std::invalid_argument("measure 'weights' length does not match 'entries'");
    return w;
}

}  // namespace

Measure measure_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    auto count = [&](const char* key) {
        if (!j.at(key).is_number_unsigned()) throw std::invalid_argument(std::string("measure ") + key + " must be a nonnegative integer");
        return j[key].get<std::size_t>();
    };
    if (kind == "circle") return make_circle_points(count("n"), j.value("radius", 1.0));
    const auto dim = count("dim");
    if (dim < 1) throw std::invalid_argument("measure 'dim' must be >= 1");
    const auto& entries = j.at("entries");
    if (!entries.is_array() || entries.empty()) throw std::invalid_argument("measure 'entries' must be a nonempty array");
    if (kind == "points") {
        PointSet pts(entries.size(), dim);
        for (std::size_t i = 0; i < entries.size(); ++i) pts.set_point(i, vector_from_json(entries[i], dim, "point"));
        return PointCloudMeasure(std::move(pts), weights_from_json(j, entries.size()));
    }
    if (kind == "mixture") {
        const bool top_weights = j.contains("weights");
        auto w = weights_from_json(j, entries.size());
        std::vector<GaussianComponent> comps;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const auto& e = entries[i];
            GaussianComponent c;
            c.mean = vector_from_json(e.at("mean"), dim, "mixture mean");
            c.covariance = e.contains("cov") ? covariance_from_json(e.at("cov"), dim)
                                             : Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
            c.weight = (!top_weights && e.contains("weight")) ? e.at("weight").get<double>() : w[i];
            comps.push_back(std::move(c));
        }
        return GaussianMixtureMeasure(std::move(comps));
    }
    throw std::invalid_argument("unknown measure kind '" + kind + "'");
}

nlohmann::json measure_to_json(const Measure& m) {
    nlohmann::json j;
    j["dim"] = measure_dim(m);
    nlohmann::json entries = nlohmann::json::array();
    if (const auto* cloud = std::get_if<PointCloudMeasure>(&m)) {
        j["kind"] = "points";
        for (std::size_t i = 0; i < cloud->size(); ++i) {
            const Vector p = cloud->points().point(i);
            entries.push_back(std::vector<double>(p.data(), p.data() + p.size()));
        }
        j["entries"] = entries;
        j["weights"] = cloud->weights();
        return j;
    }
    const auto& mix = std::get<GaussianMixtureMeasure>(m);
    j["kind"] = "mixture";
    for (const auto& c : mix.components()) {
        nlohmann::json e;
        e["mean"] = std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size());
        nlohmann::json cov = nlohmann::json::array();
        for (Eigen::Index r = 0; r < c.covariance.rows(); ++r) {
            std::vector<double> row(static_cast<std::size_t>(c.covariance.cols()));
            for (Eigen::Index col = 0; col < c.covariance.cols(); ++col) row[static_cast<std::size_t>(col)] = c.covariance(r, col);
            cov.push_back(row);
        }
        e["cov"] = cov;
        e["weight"] = c.weight;
        entries.push_back(e);
    }
    j["entries"] = entries;
    return j;
}

}  // namespace sgm

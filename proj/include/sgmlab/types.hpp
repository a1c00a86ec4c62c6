#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace sgm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A quadrature or estimator failed to reach its requested accuracy.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Row-major block of n points of dimension d, stored contiguously.
class PointSet {
public:
    PointSet() = default;
    PointSet(std::size_t count, std::size_t dim) : dim_(dim), data_(count * dim, 0.0) {}

    std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
    std::size_t dim() const { return dim_; }
    bool empty() const { return data_.empty(); }

    double* row(std::size_t i) { return data_.data() + i * dim_; }
    const double* row(std::size_t i) const { return data_.data() + i * dim_; }

    Vector point(std::size_t i) const { return Eigen::Map<const Vector>(row(i), static_cast<Eigen::Index>(dim_)); }
    void set_point(std::size_t i, const Vector& v) {
        Eigen::Map<Vector>(row(i), static_cast<Eigen::Index>(dim_)) = v;
    }

    const std::vector<double>& raw() const { return data_; }
    std::vector<double>& raw() { return data_; }

    bool operator==(const PointSet&) const = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

}  // namespace sgm

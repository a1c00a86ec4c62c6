#pragma once

#include "sgmlab/measures.hpp"
#include "sgmlab/types.hpp"

#include <span>

namespace sgm {

/// Moment-matched Gaussian prior N(mean, covariance) for the Brownian marginal at T.
struct PriorFit {
    Vector mean;
    Matrix covariance;
    bool isotropic = false;
    double scalar = 0.0;  // isotropic variance; 0 for full fits
    double T = 0.0;
    double kl_bound = 0.0;

    GaussianMixtureMeasure as_measure() const;
};

/// mean = E[mu], covariance = Cov(mu) + T I, or the isotropic variance
/// tr(Cov(mu)) / d + T. kl_bound is filled from the covariance eigenvalues.
PriorFit optimal_gaussian_prior(const Measure& data, double T, bool isotropic);

/// 1/2 sum_i log(1 + c_i / T).
double kl_bound(std::span<const double> cov_eigenvalues, double T);

/// Eigenvalues of a covariance, clamped at 0.
std::vector<double> covariance_eigenvalues(const Matrix& cov);

/// KL(N(m0, S0) | N(m1, S1)).
double gaussian_kl(const Vector& m0, const Matrix& S0, const Vector& m1, const Matrix& S1);

enum class KlMethod { ClosedFormGaussian, Quadrature1D, Quadrature2D };

/// KL(p | q). The closed form needs single Gaussians; quadrature accepts any
/// nondegenerate mixtures and integrates p log(p/q) over +-8 standard
/// deviations of p's components, absolute error below 1e-6.
double kl_estimate(const GaussianMixtureMeasure& p, const GaussianMixtureMeasure& q, KlMethod method);

}  // namespace sgm

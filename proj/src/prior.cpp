#include "sgmlab/prior.hpp"

#include "sgmlab/quadrature.hpp"
#include "sgmlab/score.hpp"

#include <cmath>
#include <stdexcept>

namespace sgm {

namespace {
constexpr double kQuadratureTolerance = 1e-7;
}

GaussianMixtureMeasure PriorFit::as_measure() const {
    return GaussianMixtureMeasure({{mean, covariance, 1.0}});
}

std::vector<double> covariance_eigenvalues(const Matrix& cov) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (cov + cov.transpose()), Eigen::EigenvaluesOnly);
    std::vector<double> out;
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) out.push_back(std::max(0.0, eig.eigenvalues()(i)));
    return out;
}

double kl_bound(std::span<const double> eigenvalues, double T) {
    if (!(T > 0.0)) throw std::invalid_argument("kl_bound: T must be positive");
    double sum = 0.0;
    for (double c : eigenvalues) {
        if (c < 0.0) throw std::invalid_argument("kl_bound: eigenvalues must be nonnegative");
        sum += std::log1p(c / T);
    }
    return 0.5 * sum;
}

PriorFit optimal_gaussian_prior(const Measure& data, double T, bool isotropic) {
    if (!(T > 0.0)) throw std::invalid_argument("optimal_gaussian_prior: T must be positive");
    PriorFit fit;
    fit.T = T;
    fit.isotropic = isotropic;
    fit.mean = measure_mean(data);
    const Matrix cov = measure_covariance(data);
    const auto d = cov.rows();
    if (isotropic) {
        fit.scalar = cov.trace() / static_cast<double>(d) + T;
        fit.covariance = fit.scalar * Matrix::Identity(d, d);
    } else {
        fit.covariance = cov + T * Matrix::Identity(d, d);
    }
    const auto eig = covariance_eigenvalues(cov);
    fit.kl_bound = kl_bound(eig, T);
    return fit;
}

double gaussian_kl(const Vector& m0, const Matrix& S0, const Vector& m1, const Matrix& S1) {
    const Eigen::LLT<Matrix> l1(S1);
    const Eigen::LLT<Matrix> l0(S0);
    if (l1.info() != Eigen::Success || l0.info() != Eigen::Success)
        throw std::invalid_argument("gaussian_kl: covariances must be positive definite");
    const auto k = static_cast<double>(m0.size());
    const Vector diff = m1 - m0;
    const double trace = l1.solve(S0).trace();
    const double maha = diff.dot(l1.solve(diff));
    double logdet0 = 0.0, logdet1 = 0.0;
    for (Eigen::Index i = 0; i < m0.size(); ++i) {
        logdet0 += 2.0 * std::log(Matrix(l0.matrixL())(i, i));
        logdet1 += 2.0 * std::log(Matrix(l1.matrixL())(i, i));
    }
    return 0.5 * (trace + maha - k + logdet1 - logdet0);
}

double kl_estimate(const GaussianMixtureMeasure& p, const GaussianMixtureMeasure& q, KlMethod method) {
    if (p.dim() != q.dim()) throw std::invalid_argument("kl_estimate: dimension mismatch");
    switch (method) {
        case KlMethod::ClosedFormGaussian: {
            if (p.size() != 1 || q.size() != 1) throw std::invalid_argument("kl_estimate: closed form needs single Gaussians");
            const auto& pc = p.component(0);
            const auto& qc = q.component(0);
            return gaussian_kl(pc.mean, pc.covariance, qc.mean, qc.covariance);
        }
        case KlMethod::Quadrature1D: {
            if (p.dim() != 1) throw std::invalid_argument("kl_estimate: quadrature_1d needs d = 1");
            const CompiledMixture cp(p), cq(q);
            const auto f = [&](double x) {
                const double lp = cp.log_density(&x);
                const double dens = std::exp(lp);
                return dens == 0.0 ? 0.0 : dens * (lp - cq.log_density(&x));
            };
            return integrate_panels(f, mixture_breakpoints(p, 0), kQuadratureTolerance).value;
        }
        case KlMethod::Quadrature2D: {
            if (p.dim() != 2) throw std::invalid_argument("kl_estimate: quadrature_2d needs d = 2");
            const CompiledMixture cp(p), cq(q);
            const auto f = [&](double x, double y) {
                const double pt[2] = {x, y};
                const double lp = cp.log_density(pt);
                const double dens = std::exp(lp);
                return dens == 0.0 ? 0.0 : dens * (lp - cq.log_density(pt));
            };
            const auto ys = refine_breakpoints(mixture_breakpoints(p, 1), min_component_sd(p, 1));
            return integrate_panels_2d(f, mixture_breakpoints(p, 0), ys, kQuadratureTolerance).value;
        }
    }
    throw std::invalid_argument("kl_estimate: unknown method");
}

}  // namespace sgm

#include "sgmlab/sde.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <stdexcept>

namespace sgm {

std::string to_string(SdeKind kind) {
    switch (kind) {
        case SdeKind::Brownian: return "brownian";
        case SdeKind::OrnsteinUhlenbeck: return "ou";
        case SdeKind::CLD: return "cld";
    }
    return "unknown";
}

SdeKind sde_kind_from_string(const std::string& name) {
    if (name == "brownian") return SdeKind::Brownian;
    if (name == "ou") return SdeKind::OrnsteinUhlenbeck;
    if (name == "cld") return SdeKind::CLD;
    throw std::invalid_argument("unknown sde '" + name + "'");
}

SdeSpec::SdeSpec(SdeKind k, std::size_t dim, double T) : kind(k), data_dim(dim), terminal_time(T) {
    if (dim < 1) throw std::invalid_argument("sde data_dim must be >= 1");
    if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("sde terminal time must be positive");
}

void SdeSpec::drift(const double* x, double* out) const {
    switch (kind) {
        case SdeKind::Brownian:
            for (std::size_t i = 0; i < data_dim; ++i) out[i] = 0.0;
            break;
        case SdeKind::OrnsteinUhlenbeck:
            for (std::size_t i = 0; i < data_dim; ++i) out[i] = -0.5 * x[i];
            break;
        case SdeKind::CLD:
            for (std::size_t i = 0; i < data_dim; ++i) {
                const double pos = x[i];
                const double vel = x[data_dim + i];
                out[i] = vel;
                out[data_dim + i] = -pos - 2.0 * vel;
            }
            break;
    }
}

double SdeSpec::noise_scale(std::size_t i) const {
    if (kind == SdeKind::CLD) return i < data_dim ? 0.0 : 2.0;
    return 1.0;
}

namespace {

Matrix kron_identity(const std::array<double, 4>& block, std::size_t b, std::size_t d) {
    const auto n = static_cast<Eigen::Index>(b * d);
    Matrix m = Matrix::Zero(n, n);
    for (std::size_t r = 0; r < b; ++r)
        for (std::size_t c = 0; c < b; ++c)
            for (std::size_t i = 0; i < d; ++i)
                m(static_cast<Eigen::Index>(r * d + i), static_cast<Eigen::Index>(c * d + i)) = block[r * b + c];
    return m;
}

}  // namespace

Matrix TransitionKernel::mean_map() const { return kron_identity(mean_block, block, data_dim); }
Matrix TransitionKernel::covariance() const { return kron_identity(cov_block, block, data_dim); }

TransitionKernel transition_kernel(const SdeSpec& spec, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("transition_kernel: t must be positive");
    // a hair of slack so grid times computed as sums of steps still land on T
    if (t > spec.terminal_time * (1.0 + 1e-12)) throw std::invalid_argument("transition_kernel: t exceeds terminal time");
    TransitionKernel k;
    k.time = t;
    k.data_dim = spec.data_dim;
    k.block = spec.block_size();
    switch (spec.kind) {
        case SdeKind::Brownian:
            k.mean_block[0] = 1.0;
            k.cov_block[0] = t;
            break;
        case SdeKind::OrnsteinUhlenbeck:
            // dX = -X/2 dt + dW
            k.mean_block[0] = std::exp(-0.5 * t);
            k.cov_block[0] = -std::expm1(-t);
            break;
        case SdeKind::CLD: {
            // exp(At) = e^{-t} (I + t (A + I)), (A + I)^2 = 0
            const double e1 = std::exp(-t);
            k.mean_block = {e1 * (1.0 + t), e1 * t, -e1 * t, e1 * (1.0 - t)};
            // Sigma_t = int_0^t 4 e^{-2s} w(s) w(s)^T ds with w(s) = (s, 1 - s)
            const double u = 2.0 * t;
            const double e2 = std::exp(-u);
            const double sxx = boost::math::gamma_p(3.0, u);  // 1 - e^{-u}(1 + u + u^2/2)
            const double sxv = 2.0 * t * t * e2;
            const double svv = -std::expm1(-u) + e2 * (u - 0.5 * u * u);
            k.cov_block = {sxx, sxv, sxv, svv};
            break;
        }
    }
    return k;
}

GaussianMixtureMeasure lift_to_state(const SdeSpec& spec, const Measure& m) {
    const std::size_t dim = measure_dim(m);
    if (dim == spec.state_dim()) return as_mixture(m);
    if (spec.kind != SdeKind::CLD || dim != spec.data_dim)
        throw std::invalid_argument("measure dimension " + std::to_string(dim) + " does not match sde dimension " +
                                    std::to_string(spec.data_dim));
    const auto base = as_mixture(m);
    const auto d = static_cast<Eigen::Index>(spec.data_dim);
    std::vector<GaussianComponent> comps;
    comps.reserve(base.size());
    for (const auto& c : base.components()) {
        GaussianComponent lifted;
        lifted.mean = Vector::Zero(2 * d);
        lifted.mean.head(d) = c.mean;
        lifted.covariance = Matrix::Zero(2 * d, 2 * d);
        lifted.covariance.topLeftCorner(d, d) = c.covariance;
        lifted.covariance.bottomRightCorner(d, d) = Matrix::Identity(d, d);
        lifted.weight = c.weight;
        comps.push_back(std::move(lifted));
    }
    return GaussianMixtureMeasure(std::move(comps));
}

GaussianMixtureMeasure pushforward(const SdeSpec& spec, const Measure& m, double t) {
    const auto state = lift_to_state(spec, m);
    const auto kernel = transition_kernel(spec, t);
    const Matrix M = kernel.mean_map();
    const Matrix S = kernel.covariance();
    std::vector<GaussianComponent> comps;
    comps.reserve(state.size());
    for (const auto& c : state.components()) {
        GaussianComponent out;
        out.mean = M * c.mean;
        out.covariance = M * c.covariance * M.transpose() + S;
        out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
        out.weight = c.weight;
        comps.push_back(std::move(out));
    }
    return GaussianMixtureMeasure(std::move(comps));
}

nlohmann::json sde_to_json(const SdeSpec& spec) {
    return {{"sde", to_string(spec.kind)}, {"T", spec.terminal_time}, {"dim", spec.data_dim}};
}

SdeSpec sde_from_json(const nlohmann::json& j, std::size_t fallback_dim) {
    return SdeSpec(sde_kind_from_string(j.at("sde").get<std::string>()), j.value("dim", fallback_dim),
                   j.value("T", 1.0));
}

}  // namespace sgm

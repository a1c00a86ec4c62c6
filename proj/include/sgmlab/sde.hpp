#pragma once

#include "sgmlab/measures.hpp"
#include "sgmlab/types.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <string>

namespace sgm {

enum class SdeKind { Brownian, OrnsteinUhlenbeck, CLD };

std::string to_string(SdeKind kind);
SdeKind sde_kind_from_string(const std::string& name);

/// Forward dynamics dX = beta(X) dt + sigma dW with the time changes fixed to 1.
///   Brownian: beta = 0,            sigma = I
///   OU:       beta(x) = -x/2,      sigma = I
///   CLD:      beta(x, v) = (v, -x - 2v), sigma = diag(0, 2) on each (x, v) pair
/// CLD states are laid out as (x_1..x_d, v_1..v_d).
struct SdeSpec {
    SdeKind kind = SdeKind::Brownian;
    std::size_t data_dim = 1;
    double terminal_time = 1.0;

    SdeSpec() = default;
    SdeSpec(SdeKind k, std::size_t dim, double T);

    std::size_t state_dim() const { return kind == SdeKind::CLD ? 2 * data_dim : data_dim; }
    /// Size of the per-coordinate block (1, or 2 for CLD position/velocity pairs).
    std::size_t block_size() const { return kind == SdeKind::CLD ? 2 : 1; }

    /// beta(x) written into out; x and out have state_dim entries.
    void drift(const double* x, double* out) const;
    /// Diagonal of sigma for state coordinate i.
    double noise_scale(std::size_t i) const;
    /// Scalar diffusion magnitude (1 for Brownian/OU, 2 for CLD).
    double sigma_scalar() const { return kind == SdeKind::CLD ? 2.0 : 1.0; }

    bool operator==(const SdeSpec&) const = default;
};

/// Gaussian transition law X_t | X_0 = z ~ N(mean_map z, covariance).
/// Both matrices are kron(block, I_d) for the block of size block_size().
struct TransitionKernel {
    double time = 0.0;
    std::size_t block = 1;
    std::array<double, 4> mean_block{};  // row-major block x block
    std::array<double, 4> cov_block{};
    std::size_t data_dim = 1;

    Matrix mean_map() const;
    Matrix covariance() const;
};

/// Closed-form kernel. For CLD the moment equations are solved through the
/// matrix exponential of the defective drift matrix [[0,1],[-1,-2]].
TransitionKernel transition_kernel(const SdeSpec& spec, double t);

/// Lifts a data-space measure into state space (CLD: independent N(0, I)
/// velocity block). Measures already in state space are converted unchanged.
GaussianMixtureMeasure lift_to_state(const SdeSpec& spec, const Measure& m);

/// Marginal at time t of the forward SDE started in m: one component per
/// input component with mean M mu and covariance M C M^T + Sigma_t.
GaussianMixtureMeasure pushforward(const SdeSpec& spec, const Measure& m, double t);

nlohmann::json sde_to_json(const SdeSpec& spec);
/// {"sde": "brownian"|"ou"|"cld", "T": ..., "dim": ...}; dim defaults to the given fallback.
SdeSpec sde_from_json(const nlohmann::json& j, std::size_t fallback_dim);

}  // namespace sgm

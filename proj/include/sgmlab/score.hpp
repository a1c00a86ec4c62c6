#pragma once

#include "sgmlab/measures.hpp"
#include "sgmlab/sde.hpp"
#include "sgmlab/types.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <span>
#include <string>

namespace sgm {

/// A Gaussian mixture with every covariance inverted once, ready for fast
/// pointwise log-density and score evaluation. Covariances of the form
/// kron(B, I_d) with B of size 1 or 2 keep only B^{-1}.
class CompiledMixture {
public:
    /// Throws std::invalid_argument if any covariance is singular.
    explicit CompiledMixture(const GaussianMixtureMeasure& mixture);
    /// The marginal of a state-space mixture under the given kernel (no revalidation).
    CompiledMixture(const GaussianMixtureMeasure& state_mixture, const TransitionKernel& kernel);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return count_; }

    double log_density(const double* x) const;
    /// Writes grad log p(x) into out. Returns log p(x).
    double score(const double* x, double* out) const;
    /// Posterior component probabilities at x (softmax of the log terms).
    void responsibilities(const double* x, double* out) const;

private:
    enum class Mode { Block1, Block2, Full };
    void compile(const std::vector<Vector>& means, const std::vector<Matrix>& block_or_full_cov,
                 const std::vector<double>& weights, std::size_t block, std::size_t data_dim);
    void log_terms(const double* x, double* terms) const;
    void add_component_gradient(std::size_t k, const double* x, double r, double* out) const;

    Mode mode_ = Mode::Full;
    std::size_t dim_ = 0;
    std::size_t sub_dim_ = 0;  // d for block modes
    std::size_t count_ = 0;
    std::vector<double> means_;      // count x dim
    std::vector<double> precision_;  // count x (1 | 4 | dim*dim)
    std::vector<double> log_coef_;   // log w_k - 0.5 log det(2 pi C_k)
};

/// log sum_k w_k N(x; mu_k, C_k), stabilised with log-sum-exp.
double log_density(const GaussianMixtureMeasure& mixture, const Vector& x);

/// Exact marginal scores of the forward SDE started in a given measure.
class MarginalScore {
public:
    MarginalScore(const SdeSpec& spec, const Measure& data);

    const SdeSpec& spec() const { return spec_; }
    const GaussianMixtureMeasure& state_mixture() const { return state_; }
    /// Time 0 is allowed only when every data component is nondegenerate;
    /// otherwise std::domain_error (the score explodes on the support).
    CompiledMixture at(double t) const;

private:
    SdeSpec spec_;
    GaussianMixtureMeasure state_;
};

/// grad log p_t(x) via the posterior-mean form.
Vector score(const SdeSpec& spec, const Measure& data, double t, const Vector& x);

enum class PerturbationKind { None, Constant, Radial, ScoreDifference };

/// Additive error e(x, t) on the score: s = grad log pi_t + e.
///   Constant:        e = vector
///   Radial:          e = scale * x
///   ScoreDifference: e = grad log q_t - grad log pi_t for another data measure q,
///                    i.e. s is the exact score of q.
struct DriftPerturbation {
    PerturbationKind kind = PerturbationKind::None;
    Vector vector;
    double scale = 0.0;
    std::shared_ptr<const Measure> alternative;

    static DriftPerturbation none() { return {}; }
    static DriftPerturbation constant(Vector e);
    static DriftPerturbation radial(double scale);
    static DriftPerturbation score_difference(Measure alternative);
};

std::string to_string(PerturbationKind kind);
nlohmann::json perturbation_to_json(const DriftPerturbation& p);
DriftPerturbation perturbation_from_json(const nlohmann::json& j);

/// Reference score, perturbation and reverse drift for one (sde, data, perturbation)
/// triple. Per-time work lives in Frame so integrators compile once per step.
class DriftField {
public:
    DriftField(const SdeSpec& spec, const Measure& data, DriftPerturbation perturbation);

    const SdeSpec& spec() const { return reference_.spec(); }
    const DriftPerturbation& perturbation() const { return perturbation_; }

    class Frame {
    public:
        double forward_time() const { return t_; }
        void reference_score(const double* x, double* out) const;
        /// e(x, t)
        void error(const double* x, double* out) const;
        /// s(x, t) = reference + e
        void approx_score(const double* x, double* out) const;

    private:
        friend class DriftField;
        const DriftField* owner_ = nullptr;
        double t_ = 0.0;
        std::optional<CompiledMixture> reference_;
        std::optional<CompiledMixture> alternative_;
    };

    /// Frame at forward time t. Only the pieces the perturbation needs are compiled.
    Frame frame(double forward_time, bool need_reference = true) const;

    /// -beta(y) + sigma sigma^T s(y, T - t_reverse). Requires 0 <= t_reverse < T.
    void reverse_drift(const Frame& frame, const double* y, double* out) const;
    Vector reverse_drift(double t_reverse, const Vector& y) const;

private:
    MarginalScore reference_;
    DriftPerturbation perturbation_;
    std::optional<MarginalScore> alternative_;
};

/// Convenience wrapper over DriftField::reverse_drift.
Vector reverse_drift(const SdeSpec& spec, const Measure& data, const DriftPerturbation& perturbation,
                     double t_reverse, const Vector& y);

}  // namespace sgm

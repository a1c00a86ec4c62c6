#include "sgmlab/score.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace sgm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Per-thread buffers; the two are never aliased.
double* term_buffer(std::size_t n) {
    thread_local std::vector<double> buffer;
    if (buffer.size() < n) buffer.resize(n);
    return buffer.data();
}

double* diff_buffer(std::size_t n) {
    thread_local std::vector<double> buffer;
    if (buffer.size() < n) buffer.resize(n);
    return buffer.data();
}

bool is_kron_identity(const Matrix& c, std::size_t d, Matrix& block) {
    const auto dd = static_cast<Eigen::Index>(d);
    block.resize(2, 2);
    block << c(0, 0), c(0, dd), c(dd, 0), c(dd, dd);
    for (Eigen::Index r = 0; r < 2 * dd; ++r)
        for (Eigen::Index col = 0; col < 2 * dd; ++col) {
            const bool same_slot = (r % dd) == (col % dd);
            const double expected = same_slot ? block(r / dd, col / dd) : 0.0;
            if (c(r, col) != expected) return false;
        }
    return true;
}

}  // namespace

CompiledMixture::CompiledMixture(const GaussianMixtureMeasure& mixture) {
    std::vector<Vector> means;
    std::vector<Matrix> covs;
    std::vector<double> weights;
    bool scalar = true;
    for (std::size_t k = 0; k < mixture.size(); ++k) {
        const auto& c = mixture.component(k);
        means.push_back(c.mean);
        weights.push_back(c.weight);
        scalar = scalar && mixture.shape(k) == CovarianceShape::Scalar;
    }
    for (const auto& c : mixture.components())
        covs.push_back(scalar ? Matrix::Constant(1, 1, c.covariance(0, 0)) : c.covariance);
    compile(means, covs, weights, scalar ? 1 : 0, mixture.dim());
}

CompiledMixture::CompiledMixture(const GaussianMixtureMeasure& state, const TransitionKernel& kernel) {
    std::vector<Vector> means;
    std::vector<Matrix> covs;
    std::vector<double> weights;
    const std::size_t d = kernel.data_dim;
    const std::size_t b = kernel.block;
    if (state.dim() != b * d) throw std::invalid_argument("state mixture dimension does not match kernel");

    bool blockwise = true;
    std::vector<Matrix> blocks;
    for (std::size_t k = 0; k < state.size() && blockwise; ++k) {
        const auto& c = state.component(k).covariance;
        if (b == 1) {
            blockwise = state.shape(k) == CovarianceShape::Scalar;
            blocks.push_back(Matrix::Constant(1, 1, c(0, 0)));
        } else {
            Matrix block;
            blockwise = is_kron_identity(c, d, block);
            blocks.push_back(block);
        }
    }

    const auto bb = static_cast<Eigen::Index>(b);
    Matrix mb(bb, bb), sb(bb, bb);
    for (Eigen::Index r = 0; r < bb; ++r)
        for (Eigen::Index c = 0; c < bb; ++c) {
            mb(r, c) = kernel.mean_block[static_cast<std::size_t>(r * bb + c)];
            sb(r, c) = kernel.cov_block[static_cast<std::size_t>(r * bb + c)];
        }
    const Matrix M = blockwise ? Matrix() : kernel.mean_map();
    const Matrix S = blockwise ? Matrix() : kernel.covariance();

    for (std::size_t k = 0; k < state.size(); ++k) {
        const auto& comp = state.component(k);
        weights.push_back(comp.weight);
        if (blockwise) {
            Vector mean(comp.mean.size());
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t r = 0; r < b; ++r) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < b; ++c)
                        acc += mb(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * comp.mean(static_cast<Eigen::Index>(c * d + i));
                    mean(static_cast<Eigen::Index>(r * d + i)) = acc;
                }
            means.push_back(std::move(mean));
            Matrix cov = mb * blocks[k] * mb.transpose() + sb;
            covs.push_back(0.5 * (cov + cov.transpose()));
        } else {
            means.push_back(M * comp.mean);
            Matrix cov = M * comp.covariance * M.transpose() + S;
            covs.push_back(0.5 * (cov + cov.transpose()));
        }
    }
    compile(means, covs, weights, blockwise ? b : 0, d);
}

void CompiledMixture::compile(const std::vector<Vector>& means, const std::vector<Matrix>& covs,
                              const std::vector<double>& weights, std::size_t block, std::size_t data_dim) {
    count_ = means.size();
    dim_ = static_cast<std::size_t>(means.front().size());
    sub_dim_ = data_dim;
    mode_ = block == 1 ? Mode::Block1 : block == 2 ? Mode::Block2 : Mode::Full;
    means_.resize(count_ * dim_);
    for (std::size_t k = 0; k < count_; ++k)
        for (std::size_t j = 0; j < dim_; ++j) means_[k * dim_ + j] = means[k](static_cast<Eigen::Index>(j));

    const std::size_t stride = mode_ == Mode::Block1 ? 1 : mode_ == Mode::Block2 ? 4 : dim_ * dim_;
    precision_.assign(count_ * stride, 0.0);
    log_coef_.assign(count_, 0.0);
    const auto singular = [] { return std::invalid_argument("singular component covariance: density undefined pointwise"); };

    for (std::size_t k = 0; k < count_; ++k) {
        const double logw = weights[k] > 0.0 ? std::log(weights[k]) : -std::numeric_limits<double>::infinity();
        double logdet = 0.0;  // log det(2 pi C_k)
        if (mode_ == Mode::Block1) {
            const double v = covs[k](0, 0);
            if (!(v > 0.0)) throw singular();
            precision_[k] = 1.0 / v;
            logdet = static_cast<double>(sub_dim_) * (kLog2Pi + std::log(v));
        } else if (mode_ == Mode::Block2) {
            const Matrix& B = covs[k];
            const double det = B(0, 0) * B(1, 1) - B(0, 1) * B(1, 0);
            if (!(det > 0.0) || !(B(0, 0) > 0.0)) throw singular();
            double* p = precision_.data() + 4 * k;
            p[0] = B(1, 1) / det;
            p[1] = -B(0, 1) / det;
            p[2] = -B(1, 0) / det;
            p[3] = B(0, 0) / det;
            logdet = static_cast<double>(sub_dim_) * (2.0 * kLog2Pi + std::log(det));
        } else {
            Eigen::LLT<Matrix> llt(covs[k]);
            if (llt.info() != Eigen::Success) throw singular();
            const Matrix L = llt.matrixL();
            double logdiag = 0.0;
            for (Eigen::Index i = 0; i < L.rows(); ++i) {
                if (!(L(i, i) > 0.0)) throw singular();
                logdiag += std::log(L(i, i));
            }
            const Matrix P = llt.solve(Matrix::Identity(L.rows(), L.cols()));
            for (std::size_t r = 0; r < dim_; ++r)
                for (std::size_t c = 0; c < dim_; ++c)
                    precision_[k * stride + r * dim_ + c] = 0.5 * (P(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) +
                                                                  P(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)));
            logdet = static_cast<double>(dim_) * kLog2Pi + 2.0 * logdiag;
        }
        log_coef_[k] = logw - 0.5 * logdet;
    }
}

void CompiledMixture::log_terms(const double* x, double* terms) const {
    const std::size_t d = dim_;
    switch (mode_) {
        case Mode::Block1:
            for (std::size_t k = 0; k < count_; ++k) {
                const double* mu = means_.data() + k * d;
                double q = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double diff = x[j] - mu[j];
                    q += diff * diff;
                }
                terms[k] = log_coef_[k] - 0.5 * q * precision_[k];
            }
            break;
        case Mode::Block2: {
            const std::size_t h = sub_dim_;
            for (std::size_t k = 0; k < count_; ++k) {
                const double* mu = means_.data() + k * d;
                const double* p = precision_.data() + 4 * k;
                double xx = 0.0, xv = 0.0, vv = 0.0;
                for (std::size_t j = 0; j < h; ++j) {
                    const double a = x[j] - mu[j];
                    const double b = x[h + j] - mu[h + j];
                    xx += a * a;
                    xv += a * b;
                    vv += b * b;
                }
                terms[k] = log_coef_[k] - 0.5 * (p[0] * xx + (p[1] + p[2]) * xv + p[3] * vv);
            }
            break;
        }
        case Mode::Full: {
            double* dv = diff_buffer(d);
            for (std::size_t k = 0; k < count_; ++k) {
                const double* mu = means_.data() + k * d;
                const double* P = precision_.data() + k * d * d;
                for (std::size_t j = 0; j < d; ++j) dv[j] = x[j] - mu[j];
                double q = 0.0;
                for (std::size_t r = 0; r < d; ++r) {
                    double row = 0.0;
                    for (std::size_t c = 0; c < d; ++c) row += P[r * d + c] * dv[c];
                    q += dv[r] * row;
                }
                terms[k] = log_coef_[k] - 0.5 * q;
            }
            break;
        }
    }
}

void CompiledMixture::add_component_gradient(std::size_t k, const double* x, double r, double* out) const {
    const std::size_t d = dim_;
    const double* mu = means_.data() + k * d;
    switch (mode_) {
        case Mode::Block1: {
            const double s = r * precision_[k];
            for (std::size_t j = 0; j < d; ++j) out[j] -= s * (x[j] - mu[j]);
            break;
        }
        case Mode::Block2: {
            const std::size_t h = sub_dim_;
            const double* p = precision_.data() + 4 * k;
            for (std::size_t j = 0; j < h; ++j) {
                const double a = x[j] - mu[j];
                const double b = x[h + j] - mu[h + j];
                out[j] -= r * (p[0] * a + p[1] * b);
                out[h + j] -= r * (p[2] * a + p[3] * b);
            }
            break;
        }
        case Mode::Full: {
            const double* P = precision_.data() + k * d * d;
            for (std::size_t row = 0; row < d; ++row) {
                double acc = 0.0;
                for (std::size_t c = 0; c < d; ++c) acc += P[row * d + c] * (x[c] - mu[c]);
                out[row] -= r * acc;
            }
            break;
        }
    }
}

double CompiledMixture::log_density(const double* x) const {
    std::vector<double> terms(count_);
    log_terms(x, terms.data());
    const double top = *std::max_element(terms.begin(), terms.end());
    if (!std::isfinite(top)) return top;
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - top);
    return top + std::log(sum);
}

void CompiledMixture::responsibilities(const double* x, double* out) const {
    log_terms(x, out);
    const double top = *std::max_element(out, out + count_);
    double sum = 0.0;
    for (std::size_t k = 0; k < count_; ++k) {
        out[k] = std::exp(out[k] - top);
        sum += out[k];
    }
    for (std::size_t k = 0; k < count_; ++k) out[k] /= sum;
}

double CompiledMixture::score(const double* x, double* out) const {
    double* terms = term_buffer(count_);
    log_terms(x, terms);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < count_; ++k) top = std::max(top, terms[k]);
    double sum = 0.0;
    for (std::size_t k = 0; k < count_; ++k) {
        terms[k] = std::exp(terms[k] - top);
        sum += terms[k];
    }
    std::fill(out, out + dim_, 0.0);
    const double inv = 1.0 / sum;
    for (std::size_t k = 0; k < count_; ++k) {
        const double r = terms[k] * inv;
        if (r == 0.0) continue;
        add_component_gradient(k, x, r, out);
    }
    return top + std::log(sum);
}

double log_density(const GaussianMixtureMeasure& mixture, const Vector& x) {
    if (static_cast<std::size_t>(x.size()) != mixture.dim()) throw std::invalid_argument("log_density: dimension mismatch");
    return CompiledMixture(mixture).log_density(x.data());
}

MarginalScore::MarginalScore(const SdeSpec& spec, const Measure& data) : spec_(spec), state_(lift_to_state(spec, data)) {}

CompiledMixture MarginalScore::at(double t) const {
    if (t == 0.0) {
        if (!state_.nondegenerate())
            throw std::domain_error("score undefined at t = 0 for degenerate data (drift explosion)");
        return CompiledMixture(state_);
    }
    if (!(t > 0.0)) throw std::invalid_argument("score: t must be nonnegative");
    return CompiledMixture(state_, transition_kernel(spec_, t));
}

Vector score(const SdeSpec& spec, const Measure& data, double t, const Vector& x) {
    const MarginalScore ms(spec, data);
    if (static_cast<std::size_t>(x.size()) != spec.state_dim()) throw std::invalid_argument("score: dimension mismatch");
    const auto compiled = ms.at(t);
    Vector out(x.size());
    compiled.score(x.data(), out.data());
    return out;
}

DriftPerturbation DriftPerturbation::constant(Vector e) {
    DriftPerturbation p;
    p.kind = PerturbationKind::Constant;
    p.vector = std::move(e);
    return p;
}

DriftPerturbation DriftPerturbation::radial(double scale) {
    DriftPerturbation p;
    p.kind = PerturbationKind::Radial;
    p.scale = scale;
    return p;
}

DriftPerturbation DriftPerturbation::score_difference(Measure alternative) {
    DriftPerturbation p;
    p.kind = PerturbationKind::ScoreDifference;
    p.alternative = std::make_shared<const Measure>(std::move(alternative));
    return p;
}

std::string to_string(PerturbationKind kind) {
    switch (kind) {
        case PerturbationKind::None: return "none";
        case PerturbationKind::Constant: return "constant";
        case PerturbationKind::Radial: return "radial";
        case PerturbationKind::ScoreDifference: return "score_difference";
    }
    return "unknown";
}

nlohmann::json perturbation_to_json(const DriftPerturbation& p) {
    nlohmann::json j{{"kind", to_string(p.kind)}};
    switch (p.kind) {
        case PerturbationKind::None: break;
        case PerturbationKind::Constant:
            j["vector"] = std::vector<double>(p.vector.data(), p.vector.data() + p.vector.size());
            break;
        case PerturbationKind::Radial: j["scale"] = p.scale; break;
        case PerturbationKind::ScoreDifference: j["measure"] = measure_to_json(*p.alternative); break;
    }
    return j;
}

DriftPerturbation perturbation_from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "none") return DriftPerturbation::none();
    if (kind == "constant") {
        const auto v = j.at("vector").get<std::vector<double>>();
        return DriftPerturbation::constant(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    if (kind == "radial") return DriftPerturbation::radial(j.at("scale").get<double>());
    if (kind == "score_difference") return DriftPerturbation::score_difference(measure_from_json(j.at("measure")));
    throw std::invalid_argument("unknown perturbation kind '" + kind + "'");
}

DriftField::DriftField(const SdeSpec& spec, const Measure& data, DriftPerturbation perturbation)
    : reference_(spec, data), perturbation_(std::move(perturbation)) {
    if (perturbation_.kind == PerturbationKind::Constant &&
        static_cast<std::size_t>(perturbation_.vector.size()) != spec.state_dim())
        throw std::invalid_argument("constant perturbation dimension must equal the sde state dimension");
    if (perturbation_.kind == PerturbationKind::ScoreDifference) {
        if (!perturbation_.alternative) throw std::invalid_argument("score_difference perturbation needs a measure");
        alternative_.emplace(spec, *perturbation_.alternative);
    }
}

DriftField::Frame DriftField::frame(double forward_time, bool need_reference) const {
    Frame f;
    f.owner_ = this;
    f.t_ = forward_time;
    if (need_reference) f.reference_.emplace(reference_.at(forward_time));
    if (alternative_) f.alternative_.emplace(alternative_->at(forward_time));
    return f;
}

void DriftField::Frame::reference_score(const double* x, double* out) const {
    if (!reference_) throw std::logic_error("frame compiled without the reference score");
    reference_->score(x, out);
}

void DriftField::Frame::error(const double* x, double* out) const {
    const auto& p = owner_->perturbation_;
    const std::size_t n = owner_->spec().state_dim();
    switch (p.kind) {
        case PerturbationKind::None: std::fill(out, out + n, 0.0); break;
        case PerturbationKind::Constant:
            for (std::size_t i = 0; i < n; ++i) out[i] = p.vector(static_cast<Eigen::Index>(i));
            break;
        case PerturbationKind::Radial:
            for (std::size_t i = 0; i < n; ++i) out[i] = p.scale * x[i];
            break;
        case PerturbationKind::ScoreDifference: {
            double tmp_local[16];
            std::vector<double> tmp_heap(n > 16 ? n : 0);
            double* tmp = n > 16 ? tmp_heap.data() : tmp_local;
            alternative_->score(x, out);
            reference_score(x, tmp);
            for (std::size_t i = 0; i < n; ++i) out[i] -= tmp[i];
            break;
        }
    }
}

void DriftField::Frame::approx_score(const double* x, double* out) const {
    const auto& p = owner_->perturbation_;
    const std::size_t n = owner_->spec().state_dim();
    switch (p.kind) {
        case PerturbationKind::ScoreDifference:
            alternative_->score(x, out);
            return;
        case PerturbationKind::None:
            reference_score(x, out);
            return;
        case PerturbationKind::Constant:
            reference_score(x, out);
            for (std::size_t i = 0; i < n; ++i) out[i] += p.vector(static_cast<Eigen::Index>(i));
            return;
        case PerturbationKind::Radial:
            reference_score(x, out);
            for (std::size_t i = 0; i < n; ++i) out[i] += p.scale * x[i];
            return;
    }
}

void DriftField::reverse_drift(const Frame& frame, const double* y, double* out) const {
    const auto& sp = spec();
    const std::size_t n = sp.state_dim();
    double s_local[16];
    std::vector<double> s_heap;
    double* s = s_local;
    if (n > 16) {
        s_heap.resize(n);
        s = s_heap.data();
    }
    frame.approx_score(y, s);
    sp.drift(y, out);
    for (std::size_t i = 0; i < n; ++i) {
        const double sig = sp.noise_scale(i);
        out[i] = -out[i] + sig * sig * s[i];
    }
}

Vector DriftField::reverse_drift(double t_reverse, const Vector& y) const {
    const double T = spec().terminal_time;
    if (!(t_reverse >= 0.0) || t_reverse >= T) throw std::invalid_argument("reverse_drift: t_reverse must lie in [0, T)");
    if (static_cast<std::size_t>(y.size()) != spec().state_dim()) throw std::invalid_argument("reverse_drift: dimension mismatch");
    const bool need_ref = perturbation_.kind != PerturbationKind::ScoreDifference;
    const auto f = frame(T - t_reverse, need_ref);
    Vector out(y.size());
    reverse_drift(f, y.data(), out.data());
    return out;
}

Vector reverse_drift(const SdeSpec& spec, const Measure& data, const DriftPerturbation& perturbation, double t_reverse,
                     const Vector& y) {
    return DriftField(spec, data, perturbation).reverse_drift(t_reverse, y);
}

}  // namespace sgm

#include "sgmlab/quadrature.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sgm {

namespace {

constexpr double kPanelRelTol = 1e-11;

}  // namespace

QuadratureResult integrate_panels(const std::function<double(double)>& f, const std::vector<double>& breakpoints,
                                  double abs_tol, unsigned max_depth) {
    QuadratureResult out;
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
        const double a = breakpoints[i];
        const double b = breakpoints[i + 1];
        if (!(b > a)) continue;
        double err = 0.0;
        const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, max_depth, kPanelRelTol, &err);
        out.value += v;
        out.error += err;
    }
    if (!std::isfinite(out.value) || out.error > abs_tol)
        throw NumericalError("quadrature did not converge (error estimate " + std::to_string(out.error) + ")");
    return out;
}

std::vector<double> mixture_breakpoints(const GaussianMixtureMeasure& m, std::size_t axis, double span) {
    std::vector<double> pts;
    double lo = INFINITY, hi = -INFINITY;
    const auto ax = static_cast<Eigen::Index>(axis);
    for (const auto& c : m.components()) {
        const double mu = c.mean(ax);
        const double sd = std::sqrt(std::max(c.covariance(ax, ax), 0.0));
        lo = std::min(lo, mu - span * sd);
        hi = std::max(hi, mu + span * sd);
        pts.push_back(mu);
        pts.push_back(mu - 0.5 * span * sd);
        pts.push_back(mu + 0.5 * span * sd);
    }
    pts.push_back(lo);
    pts.push_back(hi);
    std::sort(pts.begin(), pts.end());
    const double merge = 1e-9 * std::max(1.0, hi - lo);
    pts.erase(std::unique(pts.begin(), pts.end(), [&](double a, double b) { return b - a < merge; }), pts.end());
    if (pts.back() < hi) pts.back() = hi;
    return pts;
}

std::vector<double> refine_breakpoints(const std::vector<double>& breakpoints, double max_width) {
    if (!(max_width > 0.0)) throw std::invalid_argument("refine_breakpoints: max_width must be positive");
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
        const double a = breakpoints[i], b = breakpoints[i + 1];
        const auto pieces = static_cast<std::size_t>(std::ceil((b - a) / max_width));
        for (std::size_t k = 0; k < std::max<std::size_t>(pieces, 1); ++k)
            out.push_back(a + (b - a) * static_cast<double>(k) / static_cast<double>(std::max<std::size_t>(pieces, 1)));
    }
    if (!breakpoints.empty()) out.push_back(breakpoints.back());
    return out;
}

double min_component_sd(const GaussianMixtureMeasure& m, std::size_t axis) {
    double sd = INFINITY;
    for (const auto& c : m.components())
        sd = std::min(sd, std::sqrt(std::max(c.covariance(static_cast<Eigen::Index>(axis), static_cast<Eigen::Index>(axis)), 0.0)));
    return sd;
}

QuadratureResult integrate_panels_2d(const std::function<double(double, double)>& f, const std::vector<double>& xs,
                                     const std::vector<double>& ys, double abs_tol) {
    double inner_error = 0.0;
    const auto outer = [&](double x) {
        const auto r = integrate_panels([&](double y) { return f(x, y); }, ys, INFINITY, 0);
        inner_error = std::max(inner_error, r.error);
        return r.value;
    };
    auto r = integrate_panels(outer, xs, INFINITY);
    const double width = xs.back() - xs.front();
    r.error += inner_error * width;
    if (!std::isfinite(r.value) || r.error > abs_tol)
        throw NumericalError("2D quadrature did not converge (error estimate " + std::to_string(r.error) + ")");
    return r;
}

}  // namespace sgm

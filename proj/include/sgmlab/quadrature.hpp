#pragma once

#include "sgmlab/measures.hpp"

#include <functional>
#include <vector>

namespace sgm {

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;  // summed Gauss-Kronrod error estimates
};

/// Adaptive Gauss-Kronrod over consecutive panels [b_0, b_1], [b_1, b_2], ...
/// Throws NumericalError when the estimated error exceeds abs_tol.
QuadratureResult integrate_panels(const std::function<double(double)>& f, const std::vector<double>& breakpoints,
                                  double abs_tol, unsigned max_depth = 12);

/// Splits every panel wider than max_width into equal pieces.
std::vector<double> refine_breakpoints(const std::vector<double>& breakpoints, double max_width);

/// Smallest component standard deviation along one axis (0 for atoms).
double min_component_sd(const GaussianMixtureMeasure& m, std::size_t axis);

/// Panel breakpoints covering +-span standard deviations of every component along
/// one axis, refined at each component's mean and +-span/2 deviations.
std::vector<double> mixture_breakpoints(const GaussianMixtureMeasure& m, std::size_t axis, double span = 8.0);

/// Nested 2D quadrature over a rectangle product of breakpoint lists. The inner
/// rule is a fixed 31-point Kronrod rule per y-panel, so y-panels must already
/// resolve the integrand; the outer integral is adaptive.
QuadratureResult integrate_panels_2d(const std::function<double(double, double)>& f, const std::vector<double>& xs,
                                     const std::vector<double>& ys, double abs_tol);

}  // namespace sgm

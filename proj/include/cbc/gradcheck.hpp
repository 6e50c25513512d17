#pragma once

#include <cstdint>
#include <iosfwd>

#include "cbc/hybrid.hpp"

namespace cbc {

/// Central finite differences, step 1e-5. Relative error uses a 1e-3 floor in
/// the denominator so near-zero gradients are judged on absolute error.
struct GradCheckStats {
    std::size_t checked = 0;
    std::size_t failed = 0;
    double max_rel_err = 0.0;

    bool pass() const { return checked > 0 && failed == 0; }
    void merge(const GradCheckStats& other);
};

double fd_relative_error(double analytic, double finite);

/// Filter-synthesis gradients: dL/dtheta of L = sum(R * weights(theta)) for a
/// random R, checked against finite differences over re-synthesis only.
GradCheckStats check_basis_gradients(SpatialKind spatial, FeatureKind feature,
                                     std::size_t channels, std::size_t kernel,
                                     std::size_t instances, std::uint64_t seed, double tol);

/// Whole-layer gradients (packed CBC parameters, standard weights, bias) of
/// L = sum(R * layer.forward(x)); finite differences go through forward alone.
GradCheckStats check_layer_gradients(SpatialKind spatial, FeatureKind feature, double alpha,
                                     std::size_t kernel, std::size_t instances,
                                     std::uint64_t seed, double tol);

/// Runs both suites over every spatial x feature pair, alpha in {0, 0.5, 1}
/// and kernels {1, 3, 5}, printing one line per combination. Returns overall
/// pass.
bool run_gradcheck_suites(std::size_t instances, std::uint64_t seed, std::ostream& out);

}  // namespace cbc

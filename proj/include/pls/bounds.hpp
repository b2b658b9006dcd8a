#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

#include "pls/errors.hpp"
#include "pls/normal.hpp"

namespace pls {

// Where the compatibility constant feeding a bound came from: a closed
// form valid for orthonormal-scaled designs, a search-based estimate
// (a lower bound, so the resulting RHS is indicative rather than
// certified), or the distribution-level upper bound from the small-ball
// machinery.
enum class Mu4Provenance { analytic, estimated, smallball_bound };

inline const char* to_string(Mu4Provenance p) {
    switch (p) {
        case Mu4Provenance::analytic: return "analytic";
        case Mu4Provenance::estimated: return "estimated";
        case Mu4Provenance::smallball_bound: return "smallball-bound";
    }
    return "unknown";
}

// Inputs shared by the prediction / estimation guarantees: the penalty
// level, the compatibility factor mu4 at the comparison point, the noise
// scale, the sample size, the deviation level, and the squared
// approximation error of the comparison point itself.
struct BoundInputs {
    double lambda = 0.0;
    double mu4 = 0.0;
    bool mu4_infinite = false;  // degenerate design: every bound is vacuous
    double sigma = 1.0;
    std::size_t n = 1;
    double delta = 0.1;
    double bias = 0.0;
    Mu4Provenance provenance = Mu4Provenance::analytic;
};

inline void validate_bound_inputs(const BoundInputs& in) {
    if (!(in.delta > 0.0 && in.delta < 1.0)) {
        throw usage_error("bounds: delta must lie in (0, 1)");
    }
    if (in.n < 1) throw usage_error("bounds: sample size must be at least 1");
    if (!std::isfinite(in.lambda) || in.lambda < 0.0) {
        throw usage_error("bounds: lambda must be finite and nonnegative");
    }
    if (!std::isfinite(in.sigma) || in.sigma < 0.0) {
        throw usage_error("bounds: sigma must be finite and nonnegative");
    }
    if (!std::isfinite(in.bias) || in.bias < 0.0) {
        throw usage_error("bounds: bias must be finite and nonnegative");
    }
    if (!in.mu4_infinite && (!std::isfinite(in.mu4) || in.mu4 < 0.0)) {
        throw usage_error("bounds: mu4 must be finite and nonnegative unless flagged infinite");
    }
}

// Prediction-error bound holding with probability at least 1 - 2*delta:
//   bias + (16/25) lambda^2 mu4^2 + 16 sigma^2 q^2 / n,
// with q the (1 - delta) standard normal quantile.
inline double oracle_rhs_deviation(const BoundInputs& in) {
    validate_bound_inputs(in);
    if (in.mu4_infinite) return std::numeric_limits<double>::infinity();
    const double q = normal_quantile(1.0 - in.delta);
    return in.bias + (16.0 / 25.0) * in.lambda * in.lambda * in.mu4 * in.mu4 +
           16.0 * in.sigma * in.sigma * q * q / static_cast<double>(in.n);
}

// Penalty-norm estimation bound at the same confidence level:
//   4 lambda mu4^2 + 20 sigma^2 q^2 / (n lambda).
inline double estimation_rhs_deviation(const BoundInputs& in) {
    validate_bound_inputs(in);
    if (!(in.lambda > 0.0)) {
        throw usage_error("estimation_rhs_deviation: lambda must be positive");
    }
    if (in.mu4_infinite) return std::numeric_limits<double>::infinity();
    const double q = normal_quantile(1.0 - in.delta);
    return 4.0 * in.lambda * in.mu4 * in.mu4 +
           20.0 * in.sigma * in.sigma * q * q / (static_cast<double>(in.n) * in.lambda);
}

// Expected-value versions obtained by integrating the deviation bounds
// over the confidence level. The estimation part requires lambda > 0;
// `estimation_valid` records whether it was produced.
struct ExpectationBounds {
    double prediction = 0.0;
    double estimation = 0.0;
    bool estimation_valid = false;
};

inline ExpectationBounds oracle_rhs_expectation(const BoundInputs& in) {
    validate_bound_inputs(in);
    ExpectationBounds out;
    const double nd = static_cast<double>(in.n);
    const double inf = std::numeric_limits<double>::infinity();
    out.prediction = in.mu4_infinite
                         ? inf
                         : in.bias + (16.0 / 25.0) * in.lambda * in.lambda * in.mu4 * in.mu4 +
                               16.0 * in.sigma * in.sigma / nd;
    if (in.lambda > 0.0) {
        out.estimation = in.mu4_infinite
                             ? inf
                             : 8.0 * in.lambda * in.mu4 * in.mu4 +
                                   20.0 * in.sigma / (in.lambda * nd);
        out.estimation_valid = true;
    }
    return out;
}

}  // namespace pls

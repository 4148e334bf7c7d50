#pragma once

#include "dlf/numerics.hpp"

namespace dlf {

// Inverse-gamma over noise variances: density proportional to
// s^(-shape-1) exp(-scale / s).
struct InverseGammaParams {
    double shape = 0.0;
    double scale = 0.0;
};

void validate_inverse_gamma(const InverseGammaParams& p);

double inverse_gamma_loglik(const InverseGammaParams& p, const Vector& samples);

// Maximum likelihood fit. Newton iterations on the shape with the scale
// profiled out in closed form, started from the moment-matched point; the
// profile gradient at the returned shape is below 1e-8.
InverseGammaParams fit_inverse_gamma(const Vector& samples);

// Moment-matching initializer: shape = mean^2 / var + 2,
// scale = mean * (shape - 1).
InverseGammaParams moment_match_inverse_gamma(const Vector& samples);

// Draws via reciprocals of gamma variates.
Vector sample_inverse_gamma(const InverseGammaParams& p, Index count,
                            SeededRng& rng);

}  // namespace dlf

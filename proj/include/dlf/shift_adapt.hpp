#pragma once

#include "dlf/dlf_multivariate.hpp"

namespace dlf {

// Head-only adaptation to shifted data: the distilled body (mu, phi, L)
// stays frozen and a deterministic c x q weight matrix W replaces the
// latent, giving class logits mu(x) + L W phi(x).
struct AdaptedHead {
    const MultiDlfModel* body = nullptr;
    Matrix w;
};

// Class probability rows softmax(mu(x) + L W phi(x)) at raw-unit inputs.
Matrix adapted_probs(const AdaptedHead& head, const Matrix& x);

// Mean cross-entropy of the adapted head on labelled data.
double adapted_cross_entropy(const AdaptedHead& head, const Dataset& data);

// Fits W by Adam from W = 0, minimizing cross-entropy plus 1e-4 |W|^2;
// the body is untouched. batch_size 0 uses the full data every step; the
// rng only drives minibatch shuffles. The trace records the mean
// cross-entropy on the full data after each epoch.
AdaptedHead fit_head(const MultiDlfModel& body, const Dataset& data,
                     int epochs, double lr, SeededRng& rng,
                     Index batch_size = 0, FitTrace* trace = nullptr);

}  // namespace dlf

#pragma once

#include "dlf/dlf_multivariate.hpp"

namespace dlf {

// Epistemic OOD detection: per-input mutual information over sampled
// student members, with AUROC treating out-of-distribution inputs as
// positives.
struct OodReport {
    double auroc = 0.5;
    Vector mi_in;
    Vector mi_out;
    Index samples = 0;
};

OodReport ood_score(const MultiDlfModel& model, const Matrix& in_data,
                    const Matrix& out_data, Index samples, SeededRng& rng);

}  // namespace dlf

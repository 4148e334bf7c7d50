#include "dlf/ood_eval.hpp"

#include <algorithm>

#include "dlf/metrics.hpp"

namespace dlf {

namespace {

Vector mi_scores(const MultiDlfModel& model, const Matrix& data,
                 Index samples, SeededRng& rng) {
    Vector scores(data.rows());
    for (Index j = 0; j < data.rows(); ++j) {
        const Matrix rows =
            sampled_prob_rows(model, data.row(j).transpose(), samples, rng);
        // Concavity makes the true value nonnegative; round-off can dip
        // a few ulps below zero.
        scores(j) = std::max(mutual_information(rows), 0.0);
    }
    return scores;
}

}  // namespace

OodReport ood_score(const MultiDlfModel& model, const Matrix& in_data,
                    const Matrix& out_data, Index samples, SeededRng& rng) {
    validate_multi_model(model);
    if (in_data.rows() == 0 || out_data.rows() == 0) {
        throw EmptyData("ood_score: both input sets must be non-empty");
    }
    if (in_data.cols() != model.spec.input_dim ||
        out_data.cols() != model.spec.input_dim) {
        throw DimensionMismatch("ood_score: input dimension != model input");
    }
    if (samples < 2) {
        throw ConfigInvalid("ood_score: need at least 2 sampled members");
    }
    OodReport report;
    report.samples = samples;
    report.mi_in = mi_scores(model, in_data, samples, rng);
    report.mi_out = mi_scores(model, out_data, samples, rng);
    report.auroc = auroc(report.mi_in, report.mi_out);
    return report;
}

}  // namespace dlf

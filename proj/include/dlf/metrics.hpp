#pragma once

#include <vector>

#include "dlf/dataset.hpp"
#include "dlf/teacher.hpp"

namespace dlf {

// Throws NonPositiveVariance or EmptyData when the mixture is unusable.
void validate_mixture(const GaussianMixture& mixture);

// Per-point mixture means, in the mixture's own units.
Vector mixture_means(const std::vector<GaussianMixture>& mixtures);

double rmse(const Vector& predictions, const Vector& targets);

// Negative log likelihood, reported as a per-point mean. Multiply by the
// test-set size to recover the summed form.
double nll_regression(const std::vector<GaussianMixture>& mixtures,
                      const Vector& targets);

// CRPS of an equal-weight Gaussian mixture, closed form over component
// pairs.
double crps_mixture(const GaussianMixture& mixture, double target);

double mean_crps(const std::vector<GaussianMixture>& mixtures,
                 const Vector& targets);

double mixture_cdf(const GaussianMixture& mixture, double x);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

// Equal-tailed central interval holding the given probability mass,
// endpoints located by bisection on the mixture CDF.
Interval central_interval(const GaussianMixture& mixture, double mass);

// Fraction of targets inside each mixture's central 95% interval.
double coverage95(const std::vector<GaussianMixture>& mixtures,
                  const Vector& targets);

// Lowest-index argmax of one probability row.
int predicted_class(const Vector& probs);

// probs is n x c, one probability row per point; labels hold integral
// class indices. Argmax ties resolve to the lowest class index.
double accuracy(const Matrix& probs, const Vector& labels);

// Mean NLL of the labelled class probabilities.
double nll_classification(const Matrix& probs, const Vector& labels);

// Expected calibration error with equal-width confidence bins
// ((l-1)/M, l/M] on the max probability.
double ece(const Matrix& probs, const Vector& labels, int n_bins = 15);

// Epistemic uncertainty of an S x c matrix of member probability rows:
// entropy of the mean row minus the mean row entropy, natural log.
double mutual_information(const Matrix& member_probs);

// Mann-Whitney statistic P(out > in) + 0.5 P(out = in) over all pairs.
double auroc(const Vector& scores_in, const Vector& scores_out);

struct MetricSummary {
    std::vector<double> per_seed;

    double mean() const;
    // Sample standard deviation across seeds divided by sqrt(#seeds);
    // zero when there is a single seed.
    double standard_error() const;
};

// One row of an evaluation table. Regression fills rmse, nll, crps and
// coverage95; classification fills acc, nll and ece.
struct MetricReport {
    Task task = Task::Regression;
    Index n_test = 0;
    MetricSummary rmse;
    MetricSummary nll;
    MetricSummary crps;
    MetricSummary coverage95;
    MetricSummary acc;
    MetricSummary ece;
};

}  // namespace dlf

#include "dlf/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dlf/errors.hpp"

namespace dlf {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void require_equal_lengths(std::size_t n_mix, Index n_targets) {
    if (n_mix == 0 || n_targets == 0) {
        throw EmptyData("metrics need at least one prediction and target");
    }
    if (static_cast<Index>(n_mix) != n_targets) {
        throw DimensionMismatch("got " + std::to_string(n_mix) +
                                " predictions for " +
                                std::to_string(n_targets) + " targets");
    }
}

int label_at(const Vector& labels, Index j, Index n_classes) {
    const double raw = labels(j);
    const double rounded = std::round(raw);
    if (std::abs(raw - rounded) > 1e-9 || rounded < 0.0 ||
        rounded >= static_cast<double>(n_classes)) {
        throw InvalidShape("label " + std::to_string(raw) + " at row " +
                           std::to_string(j) + " is not a class index in [0, " +
                           std::to_string(n_classes) + ")");
    }
    return static_cast<int>(rounded);
}

void require_prob_rows(const Matrix& probs, const Vector& labels) {
    if (probs.rows() == 0 || probs.cols() == 0) {
        throw EmptyData("empty probability matrix");
    }
    if (probs.rows() != labels.size()) {
        throw DimensionMismatch("got " + std::to_string(probs.rows()) +
                                " probability rows for " +
                                std::to_string(labels.size()) + " labels");
    }
}

// E|X - y| for X ~ N(mu_diff + y, var), expressed through the difference
// mean: A(d, v) = d (2 Phi(d / s) - 1) + 2 s phi(d / s) with s = sqrt(v).
double abs_gaussian_moment(double diff, double var) {
    if (var <= 0.0) {
        return std::abs(diff);
    }
    const double s = std::sqrt(var);
    const double z = diff / s;
    return diff * (2.0 * norm_cdf(z) - 1.0) + 2.0 * s * norm_pdf(z);
}

}  // namespace

void validate_mixture(const GaussianMixture& mixture) {
    if (mixture.components() == 0) {
        throw EmptyData("mixture has no components");
    }
    if (mixture.vars.size() != mixture.means.size()) {
        throw DimensionMismatch("mixture has " +
                                std::to_string(mixture.means.size()) +
                                " means but " +
                                std::to_string(mixture.vars.size()) + " vars");
    }
    for (Index s = 0; s < mixture.vars.size(); ++s) {
        if (!(mixture.vars(s) > 0.0)) {
            throw NonPositiveVariance("component " + std::to_string(s) +
                                      " has variance " +
                                      std::to_string(mixture.vars(s)));
        }
    }
}

Vector mixture_means(const std::vector<GaussianMixture>& mixtures) {
    Vector out(static_cast<Index>(mixtures.size()));
    for (std::size_t j = 0; j < mixtures.size(); ++j) {
        validate_mixture(mixtures[j]);
        out(static_cast<Index>(j)) = mixtures[j].means.mean();
    }
    return out;
}

double rmse(const Vector& predictions, const Vector& targets) {
    require_equal_lengths(static_cast<std::size_t>(predictions.size()),
                          targets.size());
    return std::sqrt((predictions - targets).squaredNorm() /
                     static_cast<double>(targets.size()));
}

double nll_regression(const std::vector<GaussianMixture>& mixtures,
                      const Vector& targets) {
    require_equal_lengths(mixtures.size(), targets.size());
    double total = 0.0;
    for (Index j = 0; j < targets.size(); ++j) {
        const GaussianMixture& mix = mixtures[static_cast<std::size_t>(j)];
        validate_mixture(mix);
        const int n = mix.components();
        Vector logp(n);
        for (int s = 0; s < n; ++s) {
            const double r = targets(j) - mix.means(s);
            logp(s) = -0.5 * std::log(kTwoPi * mix.vars(s)) -
                      0.5 * r * r / mix.vars(s);
        }
        total += log_sum_exp(logp) - std::log(static_cast<double>(n));
    }
    return -total / static_cast<double>(targets.size());
}

double crps_mixture(const GaussianMixture& mixture, double target) {
    validate_mixture(mixture);
    const int n = mixture.components();
    const double w = 1.0 / static_cast<double>(n);
    double first = 0.0;
    for (int i = 0; i < n; ++i) {
        first += w * abs_gaussian_moment(target - mixture.means(i),
                                         mixture.vars(i));
    }
    double second = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            second += w * w *
                      abs_gaussian_moment(mixture.means(i) - mixture.means(j),
                                          mixture.vars(i) + mixture.vars(j));
        }
    }
    return first - 0.5 * second;
}

double mean_crps(const std::vector<GaussianMixture>& mixtures,
                 const Vector& targets) {
    require_equal_lengths(mixtures.size(), targets.size());
    double total = 0.0;
    for (Index j = 0; j < targets.size(); ++j) {
        total += crps_mixture(mixtures[static_cast<std::size_t>(j)],
                              targets(j));
    }
    return total / static_cast<double>(targets.size());
}

double mixture_cdf(const GaussianMixture& mixture, double x) {
    validate_mixture(mixture);
    double total = 0.0;
    for (int s = 0; s < mixture.components(); ++s) {
        total += norm_cdf((x - mixture.means(s)) / std::sqrt(mixture.vars(s)));
    }
    return total / static_cast<double>(mixture.components());
}

namespace {

double bisect_quantile(const GaussianMixture& mixture, double p, double lo,
                       double hi) {
    for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mixture_cdf(mixture, mid) < p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

Interval central_interval(const GaussianMixture& mixture, double mass) {
    validate_mixture(mixture);
    if (!(mass > 0.0 && mass < 1.0)) {
        throw ConfigInvalid("interval mass must lie in (0, 1), got " +
                            std::to_string(mass));
    }
    const double tail = 0.5 * (1.0 - mass);
    const double sd_max = std::sqrt(mixture.vars.maxCoeff());
    double lo = mixture.means.minCoeff() - 40.0 * sd_max;
    double hi = mixture.means.maxCoeff() + 40.0 * sd_max;
    while (mixture_cdf(mixture, lo) > tail) {
        lo -= 40.0 * sd_max;
    }
    while (mixture_cdf(mixture, hi) < 1.0 - tail) {
        hi += 40.0 * sd_max;
    }
    Interval out;
    out.lo = bisect_quantile(mixture, tail, lo, hi);
    out.hi = bisect_quantile(mixture, 1.0 - tail, lo, hi);
    return out;
}

double coverage95(const std::vector<GaussianMixture>& mixtures,
                  const Vector& targets) {
    require_equal_lengths(mixtures.size(), targets.size());
    Index inside = 0;
    for (Index j = 0; j < targets.size(); ++j) {
        const Interval iv =
            central_interval(mixtures[static_cast<std::size_t>(j)], 0.95);
        if (targets(j) >= iv.lo && targets(j) <= iv.hi) {
            ++inside;
        }
    }
    return static_cast<double>(inside) / static_cast<double>(targets.size());
}

int predicted_class(const Vector& probs) {
    if (probs.size() == 0) {
        throw EmptyData("empty probability row");
    }
    int best = 0;
    for (Index k = 1; k < probs.size(); ++k) {
        if (probs(k) > probs(best)) {
            best = static_cast<int>(k);
        }
    }
    return best;
}

double accuracy(const Matrix& probs, const Vector& labels) {
    require_prob_rows(probs, labels);
    Index correct = 0;
    for (Index j = 0; j < probs.rows(); ++j) {
        const int label = label_at(labels, j, probs.cols());
        if (predicted_class(probs.row(j).transpose()) == label) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(probs.rows());
}

double nll_classification(const Matrix& probs, const Vector& labels) {
    require_prob_rows(probs, labels);
    double total = 0.0;
    for (Index j = 0; j < probs.rows(); ++j) {
        const int label = label_at(labels, j, probs.cols());
        total += std::log(std::max(probs(j, label), 1e-300));
    }
    return -total / static_cast<double>(probs.rows());
}

double ece(const Matrix& probs, const Vector& labels, int n_bins) {
    require_prob_rows(probs, labels);
    if (n_bins < 1) {
        throw ConfigInvalid("ece needs at least one bin, got " +
                            std::to_string(n_bins));
    }
    std::vector<Index> count(static_cast<std::size_t>(n_bins), 0);
    std::vector<double> conf_sum(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<double> acc_sum(static_cast<std::size_t>(n_bins), 0.0);
    const double m = static_cast<double>(n_bins);
    for (Index j = 0; j < probs.rows(); ++j) {
        const int label = label_at(labels, j, probs.cols());
        const int pred = predicted_class(probs.row(j).transpose());
        const double conf = probs(j, pred);
        int b = static_cast<int>(std::ceil(conf * m));
        b = std::min(std::max(b, 1), n_bins);
        while (b > 1 && conf <= static_cast<double>(b - 1) / m) {
            --b;
        }
        while (b < n_bins && conf > static_cast<double>(b) / m) {
            ++b;
        }
        const std::size_t idx = static_cast<std::size_t>(b - 1);
        ++count[idx];
        conf_sum[idx] += conf;
        acc_sum[idx] += pred == label ? 1.0 : 0.0;
    }
    double total = 0.0;
    for (std::size_t b = 0; b < count.size(); ++b) {
        if (count[b] == 0) {
            continue;
        }
        const double weight =
            static_cast<double>(count[b]) / static_cast<double>(probs.rows());
        const double n = static_cast<double>(count[b]);
        total += weight * std::abs(acc_sum[b] / n - conf_sum[b] / n);
    }
    return total;
}

namespace {

double entropy(const Vector& p) {
    double h = 0.0;
    for (Index k = 0; k < p.size(); ++k) {
        if (p(k) > 0.0) {
            h -= p(k) * std::log(p(k));
        }
    }
    return h;
}

}  // namespace

double mutual_information(const Matrix& member_probs) {
    if (member_probs.rows() == 0 || member_probs.cols() == 0) {
        throw EmptyData("empty member probability matrix");
    }
    for (Index s = 0; s < member_probs.rows(); ++s) {
        if (member_probs.row(s).minCoeff() < -1e-12 ||
            std::abs(member_probs.row(s).sum() - 1.0) > 1e-8) {
            throw InvalidSimplex("row " + std::to_string(s) +
                                 " is not a probability vector (sum " +
                                 std::to_string(member_probs.row(s).sum()) +
                                 ")");
        }
    }
    const Vector mean_row = member_probs.colwise().mean().transpose();
    double mean_entropy = 0.0;
    for (Index s = 0; s < member_probs.rows(); ++s) {
        mean_entropy += entropy(member_probs.row(s).transpose());
    }
    mean_entropy /= static_cast<double>(member_probs.rows());
    return entropy(mean_row) - mean_entropy;
}

double auroc(const Vector& scores_in, const Vector& scores_out) {
    if (scores_in.size() == 0 || scores_out.size() == 0) {
        throw EmptyData("auroc needs non-empty score sets");
    }
    double wins = 0.0;
    for (Index i = 0; i < scores_out.size(); ++i) {
        for (Index j = 0; j < scores_in.size(); ++j) {
            if (scores_out(i) > scores_in(j)) {
                wins += 1.0;
            } else if (scores_out(i) == scores_in(j)) {
                wins += 0.5;
            }
        }
    }
    return wins / (static_cast<double>(scores_in.size()) *
                   static_cast<double>(scores_out.size()));
}

double MetricSummary::mean() const {
    if (per_seed.empty()) {
        throw EmptyData("metric summary has no per-seed values");
    }
    double total = 0.0;
    for (double v : per_seed) {
        total += v;
    }
    return total / static_cast<double>(per_seed.size());
}

double MetricSummary::standard_error() const {
    const double m = mean();
    if (per_seed.size() < 2) {
        return 0.0;
    }
    double ss = 0.0;
    for (double v : per_seed) {
        ss += (v - m) * (v - m);
    }
    const double k = static_cast<double>(per_seed.size());
    return std::sqrt(ss / (k - 1.0)) / std::sqrt(k);
}

}  // namespace dlf

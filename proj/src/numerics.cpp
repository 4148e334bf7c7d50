#include "dlf/numerics.hpp"

#include <cmath>
#include <numbers>

namespace dlf {

namespace {

constexpr double kPivotTol = 1e-12;
constexpr double kSymmetryTol = 1e-10;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

std::uint64_t SeededRng::next_u64() { return gen_(); }

double SeededRng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t SeededRng::uniform_int(std::uint64_t n) {
    if (n == 0) throw InvalidShape("uniform_int: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

double SeededRng::normal() {
    if (have_cached_normal_) {
        have_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(a);
    have_cached_normal_ = true;
    return r * std::cos(a);
}

double SeededRng::gamma(double shape) {
    if (!(shape > 0.0)) throw InvalidShape("gamma: shape must be positive");
    if (shape < 1.0) {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double t = 1.0 + c * x;
        if (t <= 0.0) continue;
        const double v = t * t * t;
        double u = uniform();
        while (u <= 0.0) u = uniform();
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

SeededRng SeededRng::stream(std::string_view label) const {
    return SeededRng(derive_seed(seed_, label));
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
    return splitmix64(seed ^ fnv1a64(label));
}

Matrix cholesky(const Matrix& a) {
    const Index n = a.rows();
    if (a.cols() != n) throw DimensionMismatch("cholesky: matrix must be square");
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * scale) {
        throw NotPositiveDefinite("cholesky: matrix is not symmetric");
    }
    Matrix l = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
        double d = a(j, j) - l.row(j).head(j).squaredNorm();
        if (!(d > kPivotTol)) {
            throw NotPositiveDefinite("cholesky: pivot " + std::to_string(j) +
                                      " is not positive");
        }
        l(j, j) = std::sqrt(d);
        for (Index i = j + 1; i < n; ++i) {
            l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
        }
    }
    return l;
}

namespace {

// Shared core for lowrank_logpdf / lowrank_logdet. Returns the log
// determinant and, when obs is non-null, the quadratic form
// (obs - mean)^T Sigma^{-1} (obs - mean).
void lowrank_core(const Vector* obs, const LowRankGaussian& model,
                  double* logdet_out, double* quad_out) {
    const Index m = model.mean.size();
    if (m == 0) throw InvalidShape("lowrank: mean must be non-empty");
    if (!(model.jitter > 0.0)) {
        throw NotPositiveDefinite("lowrank: jitter must be positive");
    }
    if (model.loading.size() > 0 && model.loading.rows() != m) {
        throw DimensionMismatch("lowrank: loading rows must match mean length");
    }
    if (obs && obs->size() != m) {
        throw DimensionMismatch("lowrank: observation length must match mean");
    }
    const Index q = model.loading.size() > 0 ? model.loading.cols() : 0;
    const double s2 = model.jitter;

    if (q == 0) {
        if (logdet_out) *logdet_out = static_cast<double>(m) * std::log(s2);
        if (obs && quad_out) *quad_out = (*obs - model.mean).squaredNorm() / s2;
        return;
    }

    const Matrix& phi = model.loading;
    Matrix cap = phi.transpose() * phi;
    cap.diagonal().array() += s2;
    const Matrix g = cholesky(cap);

    if (logdet_out) {
        *logdet_out = static_cast<double>(m - q) * std::log(s2) +
                      2.0 * g.diagonal().array().log().sum();
    }
    if (obs && quad_out) {
        const Vector r = *obs - model.mean;
        const Vector t = phi.transpose() * r;
        const Vector w = g.transpose()
                             .triangularView<Eigen::Upper>()
                             .solve(g.triangularView<Eigen::Lower>().solve(t));
        *quad_out = (r.squaredNorm() - t.dot(w)) / s2;
    }
}

}  // namespace

double lowrank_logpdf(const Vector& obs, const LowRankGaussian& model) {
    double logdet = 0.0;
    double quad = 0.0;
    lowrank_core(&obs, model, &logdet, &quad);
    const double m = static_cast<double>(model.mean.size());
    return -0.5 * (m * std::log(2.0 * std::numbers::pi) + logdet + quad);
}

double lowrank_logdet(const LowRankGaussian& model) {
    double logdet = 0.0;
    lowrank_core(nullptr, model, &logdet, nullptr);
    return logdet;
}

Matrix sample_std_normal(SeededRng& rng, Index rows, Index cols) {
    if (rows <= 0 || cols <= 0) {
        throw InvalidShape("sample_std_normal: dimensions must be positive");
    }
    Matrix out(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) out(i, j) = rng.normal();
    }
    return out;
}

double log_sum_exp(const Vector& v) {
    if (v.size() == 0) throw InvalidShape("log_sum_exp: empty vector");
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

Matrix softmax_rows(const Matrix& logits) {
    if (logits.size() == 0) throw InvalidShape("softmax_rows: empty input");
    Matrix p = logits;
    for (Index i = 0; i < p.rows(); ++i) {
        p.row(i).array() -= p.row(i).maxCoeff();
        p.row(i) = p.row(i).array().exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double norm_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double digamma(double x) {
    if (!(x > 0.0)) throw InvalidShape("digamma: argument must be positive");
    double r = 0.0;
    while (x < 8.0) {
        r -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // Asymptotic expansion, Bernoulli coefficients through B_12.
    return r + std::log(x) - 0.5 * inv -
           inv2 * (1.0 / 12.0 -
                   inv2 * (1.0 / 120.0 -
                           inv2 * (1.0 / 252.0 -
                                   inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
}

double trigamma(double x) {
    if (!(x > 0.0)) throw InvalidShape("trigamma: argument must be positive");
    double r = 0.0;
    while (x < 8.0) {
        r += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    return r + inv * (1.0 + inv * (0.5 +
                                   inv * (1.0 / 6.0 -
                                          inv2 * (1.0 / 30.0 -
                                                  inv2 * (1.0 / 42.0 -
                                                          inv2 / 30.0)))));
}

}  // namespace dlf

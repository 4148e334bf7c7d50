#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

#include "dlf/errors.hpp"

namespace dlf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Deterministic random source. The generator is std::mt19937_64; all
// variate transforms are implemented here (never through std::*_distribution,
// whose output is not pinned by the standard) so that a given seed produces
// the same stream on every platform and standard library.
//
//   uniform  : 53-bit mantissa trick, (x >> 11) * 2^-53, range [0, 1)
//   normal   : Box-Muller on two uniforms, second value cached
//   gamma    : Marsaglia-Tsang squeeze (shape >= 1), boost to shape + 1
//              plus a power-of-uniform correction for shape < 1
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform on [0, 1).
    double uniform();

    // Uniform integer on {0, 1, ..., n - 1}. Rejection sampling, unbiased.
    std::uint64_t uniform_int(std::uint64_t n);

    // Standard normal.
    double normal();

    // Gamma(shape, 1). shape must be positive.
    double gamma(double shape);

    // Derived generator for a named stage. The child seed depends only on
    // this generator's original seed and the label, not on how many values
    // have been drawn, so stages are order-independent.
    SeededRng stream(std::string_view label) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
    bool have_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

// Stable seed derivation: splitmix64 of (seed xor FNV-1a hash of the label).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
// Throws DimensionMismatch if a is not square, NotPositiveDefinite if a is
// asymmetric beyond 1e-10 (relative to its largest entry) or any pivot
// falls at or below 1e-12.
Matrix cholesky(const Matrix& a);

// Gaussian with covariance loading * loading^T + jitter * I. The loading
// may have zero columns, in which case the covariance is spherical.
struct LowRankGaussian {
    Vector mean;
    Matrix loading;
    double jitter = 0.0;
};

// Log density of obs under the model. Cost is O(m q^2 + q^3) via the
// Woodbury identity and the matrix determinant lemma; the m x m covariance
// is never formed.
double lowrank_logpdf(const Vector& obs, const LowRankGaussian& model);

// log det(loading * loading^T + jitter * I), same lemma as lowrank_logpdf.
double lowrank_logdet(const LowRankGaussian& model);

// rows x cols matrix of iid standard normals, filled row major.
// Throws InvalidShape if either dimension is not positive.
Matrix sample_std_normal(SeededRng& rng, Index rows, Index cols);

// log(sum(exp(v))) without overflow.
double log_sum_exp(const Vector& v);

// Row-wise softmax of a matrix of logits.
Matrix softmax_rows(const Matrix& logits);

// Standard normal density and distribution function.
double norm_pdf(double x);
double norm_cdf(double x);

// Digamma and trigamma for positive arguments, accurate to about 1e-12.
// Recurrence below 8 followed by the asymptotic series.
double digamma(double x);
double trigamma(double x);

}  // namespace dlf

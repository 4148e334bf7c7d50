#pragma once

#include "dlf/dlf_univariate.hpp"

namespace dlf {

// Deep latent factor student for a c-variate random function:
// f(x) = mu(x) + L Z phi(x) with Z ~ MN_{c,q}(0, I_c, I_q) and L lower
// triangular with positive diagonal, observed through isotropic jitter
// sigma_f^2. The network has c+q outputs; outputs 0..c-1 are the mean
// heads, outputs c..c+q-1 the factor loadings. Stacking the columns of
// the m x c value matrix gives vec(f) ~ N(vec(mu), LL^T kron phi phi^T),
// so the vectorized loading is (L kron phi) acting on w = vec(Z^T).
struct MultiDlfModel {
    NetworkSpec spec;
    NetworkParams params;
    // Unconstrained c x c lower triangle; the diagonal passes through
    // softplus so the factor stays invertible.
    Matrix l_raw;
    double log_jitter = 0.0;
    int n_classes = 0;
    Index q = 0;
    DesignSet design;
    Standardizer standardizer;

    double jitter() const { return std::exp(log_jitter); }
    Matrix chol_factor() const;
};

double softplus(double x);
double inverse_softplus(double y);

void validate_multi_model(const MultiDlfModel& model);

// Constructs an untrained model with L = I. f holds one m x c logit
// matrix per teacher; the jitter starts at 0.01 times their entry
// variance.
MultiDlfModel init_multi_dlf_model(const NetworkSpec& spec, Index q,
                                   int n_classes, const DesignSet& design,
                                   const Standardizer& standardizer,
                                   const std::vector<Matrix>& f,
                                   SeededRng& rng);

struct MultiHeadEval {
    Matrix mu;   // m_b x c
    Matrix phi;  // m_b x q
};

MultiHeadEval eval_multi_heads(const MultiDlfModel& model,
                               const Matrix& points);

// Column-major stack of a matrix.
Vector vec_matrix(const Matrix& a);

// The vectorized law at the model's design points: mean vec(mu), loading
// L kron phi (rank cq) and the observation jitter.
LowRankGaussian vec_observation_law(const MultiDlfModel& model);

// Posterior of w_i = vec(Z_i^T) for each teacher: shared covariance
// V = (I_cq + (L^T L) kron (phi^T phi) / s2)^{-1} and means
// E[w_i | f_i] = V vec(phi^T (F_i - mu) L) / s2.
PosteriorStats e_step_multi(const MultiHeadEval& heads, const Matrix& l,
                            double jitter,
                            const std::vector<Matrix>& f_batch);

struct MultiQResult {
    double value = 0.0;
    NetworkGrads theta_grad;
    Matrix l_raw_grad;
    double log_jitter_grad = 0.0;
    // dQ/d(heads): columns 0..c-1 the mean heads, c..c+q-1 the loadings.
    Matrix head_upstream;
};

MultiQResult q_objective_multi(const MultiDlfModel& model,
                               const Matrix& batch_points,
                               const std::vector<Matrix>& f_batch,
                               const PosteriorStats& posterior);

// Observed-data log likelihood of the vectorized teacher logit matrices.
double observed_loglik_multi(const MultiDlfModel& model,
                             const std::vector<Matrix>& f);

// Fits the model in place, same modes as the univariate em_fit. fix_l
// freezes the factor L, which makes a c=1 run match the univariate
// trajectory.
EmTrace em_fit_multi(MultiDlfModel& model, const std::vector<Matrix>& f,
                     const EmConfig& cfg, SeededRng& rng,
                     bool fix_l = false);

// S softmax rows of sampled logit vectors mu(x) + L Z_s phi(x) at one
// raw-unit input; row s is one draw.
Matrix sampled_prob_rows(const MultiDlfModel& model, const Vector& x,
                         Index count, SeededRng& rng);

// Averaged softmax over S sampled logit vectors.
Vector predictive_probs(const MultiDlfModel& model, const Vector& x,
                        Index count, SeededRng& rng);

}  // namespace dlf

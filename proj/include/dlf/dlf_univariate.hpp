#pragma once

#include <cmath>

#include "dlf/dataset.hpp"
#include "dlf/design.hpp"
#include "dlf/network.hpp"
#include "dlf/noise.hpp"
#include "dlf/teacher.hpp"

namespace dlf {

// Deep latent factor student for a univariate random function:
// f(x) = mu(x) + phi(x)^T Z with Z ~ N(0, I_q), observed through
// isotropic jitter sigma_f^2. The network has q+1 outputs; output 0 is the
// mean head, outputs 1..q the factor loadings. All internal quantities are
// in standardized units; the standardizer converts at the boundary.
struct DlfModel {
    NetworkSpec spec;
    NetworkParams params;
    double log_jitter = 0.0;
    Index q = 0;
    DesignSet design;
    Standardizer standardizer;

    double jitter() const { return std::exp(log_jitter); }
};

void validate_model(const DlfModel& model);

// Constructs an untrained model. The jitter starts at 0.01 times the
// variance of the prediction-matrix entries.
DlfModel init_dlf_model(const NetworkSpec& spec, Index q,
                        const DesignSet& design,
                        const Standardizer& standardizer, const Matrix& f,
                        SeededRng& rng);

// Mean and loading heads evaluated at a point batch.
struct HeadEval {
    Vector mu;   // m_b
    Matrix phi;  // m_b x q
};

HeadEval eval_heads(const DlfModel& model, const Matrix& points);

// Closed-form latent posterior for each realization: shared covariance
// V = (I_q + phi^T phi / s2)^{-1} and means E[z_i | f_i] = V phi^T
// (f_i - mu) / s2.
struct PosteriorStats {
    Matrix means;  // n x q, row i belongs to realization i
    Matrix cov;    // q x q

    Matrix second_moment(Index i) const {
        return cov + means.row(i).transpose() * means.row(i);
    }
};

// f_batch holds one column per realization, rows matching the evaluated
// points.
PosteriorStats e_step(const HeadEval& heads, double jitter,
                      const Matrix& f_batch);

// Expected complete log-likelihood (the theta-free E[log p(z)] part is
// dropped: it shifts the objective by a constant) together with its exact
// gradients through the network.
struct QResult {
    double value = 0.0;
    NetworkGrads theta_grad;
    double log_jitter_grad = 0.0;
    // dQ/d(heads) at the batch points: column 0 the mean head, columns
    // 1..q the loadings. Kept for gradient tests.
    Matrix head_upstream;
};

QResult q_objective(const DlfModel& model, const Matrix& batch_points,
                    const Matrix& f_batch, const PosteriorStats& posterior);

// Observed-data log likelihood sum_i log N(f_i; mu, phi phi^T + s2 I) at
// the model's design points.
double observed_loglik(const DlfModel& model, const Matrix& f);

enum class EmMode { MiniBatch, FullBatch };

struct EmConfig {
    EmMode mode = EmMode::MiniBatch;
    Index batch_size = 10;
    int epochs = 100;
    double lr = 1e-3;
    double tol = 1e-6;   // relative LL change stopping rule (FullBatch)
    bool gem_guard = false;
};

struct EmTrace {
    // loglik[0] is the initial value, one entry per completed epoch after.
    std::vector<double> loglik;
};

// Fits the model in place. MiniBatch recomputes the posterior per batch of
// design points and takes one Adam step per batch; FullBatch does an exact
// E-step per epoch, with gem_guard replacing Adam by a backtracking ascent
// step that only ever accepts Q improvements.
EmTrace em_fit(DlfModel& model, const Matrix& f, const EmConfig& cfg,
               SeededRng& rng);

// Biased V-statistic MMD with the RBF kernel exp(-|a-b|^2 / (2 bw^2)),
// rows of x and y being samples.
double mmd(const Matrix& x, const Matrix& y, double bandwidth);

// Median pairwise distance over the pooled rows; 1 when degenerate.
double median_heuristic_bandwidth(const Matrix& pooled);

struct PretrainConfig {
    double lambda = 1.0;
    int epochs = 200;
    double lr = 1e-2;
};

struct PretrainTrace {
    std::vector<double> objective;
    double mmd_before = 0.0;
    double mmd_after = 0.0;
};

// Joint maximization of the penalized complete log-likelihood over theta,
// log jitter and free latents z_{1:n}; the latents are discarded and the
// updated model is the EM starting point.
PretrainTrace mmd_pretrain(DlfModel& model, const Matrix& f,
                           const PretrainConfig& cfg, SeededRng& rng);

// Student function draws mu(x) + phi(x)^T z_s at raw-unit points,
// de-standardized; the observation jitter is NOT added (it models
// estimation noise, not function variation). Row s is one draw.
Matrix sample_student_functions(const DlfModel& model, const Matrix& points,
                                Index count, SeededRng& rng);

// Predictive mixture at one raw-unit input: S student draws paired with S
// noise variances from the distilled inverse gamma. include_jitter adds
// the de-standardized observation jitter to every component variance.
GaussianMixture predictive_mixture(const DlfModel& model,
                                   const InverseGammaParams& noise,
                                   const Vector& x, Index count,
                                   SeededRng& rng,
                                   bool include_jitter = false);

}  // namespace dlf

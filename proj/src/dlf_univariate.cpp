#include "dlf/dlf_univariate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dlf {

void validate_model(const DlfModel& model) {
    if (model.q < 1) throw InvalidSpec("dlf: q must be >= 1");
    if (model.spec.output_dim != model.q + 1) {
        throw InvalidSpec("dlf: network must have q+1 outputs");
    }
    validate_params(model.spec, model.params);
    if (!std::isfinite(model.log_jitter)) {
        throw NonFiniteLoss("dlf: log jitter is not finite");
    }
    if (model.design.points.rows() < 1) {
        throw EmptyData("dlf: empty design set");
    }
    if (model.design.points.cols() != model.spec.input_dim) {
        throw DimensionMismatch("dlf: design dimension != network input");
    }
}

DlfModel init_dlf_model(const NetworkSpec& spec, Index q,
                        const DesignSet& design,
                        const Standardizer& standardizer, const Matrix& f,
                        SeededRng& rng) {
    if (q < 1) throw InvalidSpec("dlf: q must be >= 1");
    if (spec.output_dim != q + 1) {
        throw InvalidSpec("dlf: network must have q+1 outputs");
    }
    if (f.rows() != design.points.rows()) {
        throw DimensionMismatch("dlf: prediction matrix rows != design size");
    }
    DlfModel model;
    model.spec = spec;
    model.params = init_params(spec, rng);
    model.q = q;
    model.design = design;
    model.standardizer = standardizer;
    const double var =
        (f.array() - f.mean()).square().sum() / static_cast<double>(f.size());
    model.log_jitter = std::log(std::max(0.01 * var, 1e-8));
    validate_model(model);
    return model;
}

HeadEval eval_heads(const DlfModel& model, const Matrix& points) {
    const Matrix out = forward_batch(model.spec, model.params, points);
    HeadEval heads;
    heads.mu = out.col(0);
    heads.phi = out.rightCols(model.q);
    return heads;
}

PosteriorStats e_step(const HeadEval& heads, double jitter,
                      const Matrix& f_batch) {
    if (f_batch.rows() != heads.mu.size()) {
        throw DimensionMismatch("e_step: batch rows != evaluated points");
    }
    if (!(jitter > 0.0)) throw SingularPrecision("e_step: jitter must be > 0");
    const Index q = heads.phi.cols();
    Matrix c = heads.phi.transpose() * heads.phi / jitter;
    c.diagonal().array() += 1.0;
    Matrix g;
    try {
        g = cholesky(c);
    } catch (const NotPositiveDefinite& e) {
        throw SingularPrecision(std::string("e_step: ") + e.what());
    }
    auto solve = [&](const Matrix& rhs) -> Matrix {
        const Matrix half = g.triangularView<Eigen::Lower>().solve(rhs);
        return g.transpose().triangularView<Eigen::Upper>().solve(half);
    };
    PosteriorStats post;
    post.cov = solve(Matrix::Identity(q, q));
    // Symmetrize away the factorization round-off.
    post.cov = 0.5 * (post.cov + post.cov.transpose()).eval();
    const Matrix a = f_batch.colwise() - heads.mu;
    post.means = a.transpose() * (heads.phi * post.cov) / jitter;
    return post;
}

namespace {

// Shared core of the Q computation. R is the expected squared residual
// sum; the value and head gradients follow from it.
struct QCore {
    double r = 0.0;
    double value = 0.0;
    Matrix a;   // residuals f - mu 1^T at the batch points
    Matrix zb;  // posterior means, q x n
    Matrix s;   // sum of second moments, q x q
};

QCore q_core(const HeadEval& heads, double jitter, const Matrix& f_batch,
             const PosteriorStats& posterior) {
    const Index n = f_batch.cols();
    const Index mb = f_batch.rows();
    if (posterior.means.rows() != n) {
        throw DimensionMismatch("q_objective: posterior/realization mismatch");
    }
    if (posterior.means.cols() != heads.phi.cols()) {
        throw DimensionMismatch("q_objective: posterior latent dim mismatch");
    }
    QCore core;
    core.a = f_batch.colwise() - heads.mu;
    core.zb = posterior.means.transpose();
    core.s = static_cast<double>(n) * posterior.cov +
             core.zb * core.zb.transpose();
    const Matrix azt = core.a * core.zb.transpose();
    core.r = core.a.squaredNorm() -
             2.0 * (heads.phi.array() * azt.array()).sum() +
             ((heads.phi.transpose() * heads.phi).array() *
              core.s.array())
                 .sum();
    core.value = -0.5 * static_cast<double>(n * mb) *
                     std::log(2.0 * std::numbers::pi * jitter) -
                 core.r / (2.0 * jitter);
    return core;
}

double q_value_only(const DlfModel& model, const Matrix& batch_points,
                    const Matrix& f_batch, const PosteriorStats& posterior) {
    const HeadEval heads = eval_heads(model, batch_points);
    return q_core(heads, model.jitter(), f_batch, posterior).value;
}

}  // namespace

QResult q_objective(const DlfModel& model, const Matrix& batch_points,
                    const Matrix& f_batch, const PosteriorStats& posterior) {
    ForwardCache cache;
    const Matrix out =
        forward_batch(model.spec, model.params, batch_points, cache);
    HeadEval heads;
    heads.mu = out.col(0);
    heads.phi = out.rightCols(model.q);

    const double jitter = model.jitter();
    const QCore core = q_core(heads, jitter, f_batch, posterior);
    const Index n = f_batch.cols();
    const Index mb = f_batch.rows();

    QResult res;
    res.value = core.value;
    res.head_upstream.resize(mb, model.q + 1);
    res.head_upstream.col(0) =
        (core.a.rowwise().sum() - heads.phi * core.zb.rowwise().sum()) /
        jitter;
    res.head_upstream.rightCols(model.q) =
        (core.a * core.zb.transpose() - heads.phi * core.s) / jitter;
    res.log_jitter_grad =
        -0.5 * static_cast<double>(n * mb) + core.r / (2.0 * jitter);
    res.theta_grad =
        backward_batch(model.spec, model.params, cache, res.head_upstream);
    return res;
}

double observed_loglik(const DlfModel& model, const Matrix& f) {
    if (f.rows() != model.design.points.rows()) {
        throw DimensionMismatch("observed_loglik: f rows != design size");
    }
    const HeadEval heads = eval_heads(model, model.design.points);
    LowRankGaussian law{heads.mu, heads.phi, model.jitter()};
    double total = 0.0;
    for (Index i = 0; i < f.cols(); ++i) {
        total += lowrank_logpdf(f.col(i), law);
    }
    return total;
}

namespace {

// Scalar Adam buffer reusing the matrix machinery.
struct ScalarAdam {
    AdamBuf buf = AdamBuf::like(Matrix::Zero(1, 1));

    double update(double value, double grad, long step,
                  const AdamConfig& cfg) {
        Matrix p(1, 1), g(1, 1);
        p << value;
        g << grad;
        adam_update(p, g, buf, step, cfg);
        return p(0, 0);
    }
};

}  // namespace

EmTrace em_fit(DlfModel& model, const Matrix& f, const EmConfig& cfg,
               SeededRng& rng) {
    validate_model(model);
    const Index m = model.design.points.rows();
    if (f.rows() != m) {
        throw DimensionMismatch("em_fit: prediction matrix rows != design");
    }
    if (cfg.epochs < 0) throw ConfigInvalid("em_fit: negative epochs");
    if (!(cfg.tol > 0.0)) throw ConfigInvalid("em_fit: tol must be > 0");
    if (cfg.mode == EmMode::MiniBatch &&
        (cfg.batch_size < 1 || cfg.batch_size > m)) {
        throw ConfigInvalid("em_fit: batch_size must lie in [1, m]");
    }

    EmTrace trace;
    trace.loglik.push_back(observed_loglik(model, f));

    AdamState adam = make_adam_state(model.spec);
    ScalarAdam jitter_adam;
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    double step_size = cfg.lr;  // gem-guard backtracking step

    std::vector<Index> order(m);
    for (Index i = 0; i < m; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.mode == EmMode::FullBatch) {
            const HeadEval heads = eval_heads(model, model.design.points);
            const PosteriorStats post = e_step(heads, model.jitter(), f);
            const QResult q =
                q_objective(model, model.design.points, f, post);
            if (cfg.gem_guard) {
                // Backtracking ascent on Q: only parameter moves that
                // strictly improve Q are accepted, which is exactly the
                // generalized-EM condition for a monotone likelihood.
                bool accepted = false;
                while (step_size > 1e-14) {
                    DlfModel candidate = model;
                    NetworkGrads scaled = q.theta_grad;
                    scaled *= step_size;
                    candidate.params += scaled;
                    candidate.log_jitter += step_size * q.log_jitter_grad;
                    const double q_new = q_value_only(
                        candidate, model.design.points, f, post);
                    if (std::isfinite(q_new) && q_new > q.value) {
                        model = std::move(candidate);
                        accepted = true;
                        break;
                    }
                    step_size *= 0.5;
                }
                if (accepted) step_size = std::min(step_size * 1.5, 1.0);
            } else {
                NetworkGrads descent = q.theta_grad;
                descent *= -1.0;
                adam_step(model.params, descent, adam, adam_cfg);
                model.log_jitter =
                    jitter_adam.update(model.log_jitter, -q.log_jitter_grad,
                                       adam.step, adam_cfg);
            }
        } else {
            for (Index i = m - 1; i > 0; --i) {
                const Index j = static_cast<Index>(
                    rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
                std::swap(order[i], order[j]);
            }
            for (Index start = 0; start < m; start += cfg.batch_size) {
                const Index b = std::min(cfg.batch_size, m - start);
                Matrix points(b, model.design.points.cols());
                Matrix fb(b, f.cols());
                for (Index i = 0; i < b; ++i) {
                    points.row(i) = model.design.points.row(order[start + i]);
                    fb.row(i) = f.row(order[start + i]);
                }
                const Matrix out_b =
                    forward_batch(model.spec, model.params, points);
                const HeadEval heads_b = {out_b.col(0),
                                          out_b.rightCols(model.q)};
                const PosteriorStats post =
                    e_step(heads_b, model.jitter(), fb);
                const QResult q = q_objective(model, points, fb, post);
                NetworkGrads descent = q.theta_grad;
                descent *= -1.0;
                adam_step(model.params, descent, adam, adam_cfg);
                model.log_jitter =
                    jitter_adam.update(model.log_jitter, -q.log_jitter_grad,
                                       adam.step, adam_cfg);
            }
        }
        const double ll = observed_loglik(model, f);
        if (!std::isfinite(ll)) {
            throw NonFiniteLoss("em_fit: log-likelihood diverged at epoch " +
                                std::to_string(epoch));
        }
        const double prev = trace.loglik.back();
        trace.loglik.push_back(ll);
        if (cfg.mode == EmMode::FullBatch &&
            std::abs(ll - prev) / std::max(1.0, std::abs(ll)) < cfg.tol) {
            break;
        }
    }
    return trace;
}

double mmd(const Matrix& x, const Matrix& y, double bandwidth) {
    if (x.rows() == 0 || y.rows() == 0) throw EmptyData("mmd: empty sample set");
    if (x.cols() != y.cols()) {
        throw DimensionMismatch("mmd: sample dimensions differ");
    }
    if (!(bandwidth > 0.0)) throw ConfigInvalid("mmd: bandwidth must be > 0");
    const double g2 = 2.0 * bandwidth * bandwidth;
    auto kernel_mean = [&](const Matrix& a, const Matrix& b) {
        const Vector a2 = a.rowwise().squaredNorm();
        const Vector b2 = b.rowwise().squaredNorm();
        Matrix d2 = -2.0 * a * b.transpose();
        d2.colwise() += a2;
        d2.rowwise() += b2.transpose();
        return (-d2.array().cwiseMax(0.0) / g2).exp().mean();
    };
    const double stat = kernel_mean(x, x) + kernel_mean(y, y) -
                        2.0 * kernel_mean(x, y);
    return std::sqrt(std::max(stat, 0.0));
}

double median_heuristic_bandwidth(const Matrix& pooled) {
    const Index n = pooled.rows();
    if (n < 2) return 1.0;
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            dists.push_back((pooled.row(i) - pooled.row(j)).norm());
        }
    }
    const std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
    const double med = dists[mid];
    return med > 1e-12 ? med : 1.0;
}

PretrainTrace mmd_pretrain(DlfModel& model, const Matrix& f,
                           const PretrainConfig& cfg, SeededRng& rng) {
    validate_model(model);
    if (cfg.lambda < 0.0) {
        throw ConfigInvalid("mmd_pretrain: lambda must be >= 0");
    }
    const Index m = model.design.points.rows();
    const Index n = f.cols();
    const Index q = model.q;
    if (f.rows() != m) {
        throw DimensionMismatch("mmd_pretrain: f rows != design size");
    }

    SeededRng init_rng = rng.stream("latent-init");
    Matrix z = sample_std_normal(init_rng, q, n);
    SeededRng fresh_rng = rng.stream("fresh-draws");

    AdamState adam = make_adam_state(model.spec);
    ScalarAdam jitter_adam;
    AdamBuf z_buf = AdamBuf::like(z);
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;

    PretrainTrace trace;
    {
        const Matrix w0 = sample_std_normal(fresh_rng, q, n);
        Matrix pooled(2 * n, q);
        pooled.topRows(n) = z.transpose();
        pooled.bottomRows(n) = w0.transpose();
        trace.mmd_before = mmd(z.transpose(), w0.transpose(),
                               median_heuristic_bandwidth(pooled));
    }

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        ForwardCache cache;
        const Matrix out =
            forward_batch(model.spec, model.params, model.design.points,
                          cache);
        const Vector mu = out.col(0);
        const Matrix phi = out.rightCols(q);
        const double s2 = model.jitter();

        const Matrix a = (f.colwise() - mu) - phi * z;
        const double cond =
            -0.5 * static_cast<double>(n * m) *
                std::log(2.0 * std::numbers::pi * s2) -
            a.squaredNorm() / (2.0 * s2);
        const double prior =
            -0.5 * static_cast<double>(n * q) *
                std::log(2.0 * std::numbers::pi) -
            0.5 * z.squaredNorm();

        // Fresh comparison draws and bandwidth per epoch; the bandwidth is
        // treated as a constant of the gradient.
        const Matrix w = sample_std_normal(fresh_rng, q, n);
        Matrix pooled(2 * n, q);
        pooled.topRows(n) = z.transpose();
        pooled.bottomRows(n) = w.transpose();
        const double bw = median_heuristic_bandwidth(pooled);
        const double penalty = mmd(z.transpose(), w.transpose(), bw);

        const double objective = cond + prior - cfg.lambda * penalty;
        if (!std::isfinite(objective)) {
            throw NonFiniteLoss("mmd_pretrain: objective diverged at epoch " +
                                std::to_string(epoch));
        }
        trace.objective.push_back(objective);

        // Gradients of the complete log-likelihood part.
        Matrix upstream(m, q + 1);
        upstream.col(0) = a.rowwise().sum() / s2;
        upstream.rightCols(q) = a * z.transpose() / s2;
        const NetworkGrads theta_grad =
            backward_batch(model.spec, model.params, cache, upstream);
        const double jitter_grad =
            -0.5 * static_cast<double>(n * m) + a.squaredNorm() / (2.0 * s2);
        Matrix z_grad = phi.transpose() * a / s2 - z;

        // MMD penalty gradient on the latents.
        if (cfg.lambda > 0.0 && penalty > 1e-12) {
            const double g2 = 2.0 * bw * bw;
            Matrix pen_grad = Matrix::Zero(q, n);
            for (Index i = 0; i < n; ++i) {
                Vector acc = Vector::Zero(q);
                for (Index j = 0; j < n; ++j) {
                    const Vector diff = z.col(j) - z.col(i);
                    acc += std::exp(-diff.squaredNorm() / g2) * diff *
                           (2.0 / static_cast<double>(n * n));
                    const Vector wdiff = w.col(j) - z.col(i);
                    acc -= std::exp(-wdiff.squaredNorm() / g2) * wdiff *
                           (2.0 / static_cast<double>(n * n));
                }
                pen_grad.col(i) = acc / (bw * bw);
            }
            pen_grad /= 2.0 * penalty;
            z_grad -= cfg.lambda * pen_grad;
        }

        NetworkGrads descent = theta_grad;
        descent *= -1.0;
        adam_step(model.params, descent, adam, adam_cfg);
        model.log_jitter = jitter_adam.update(model.log_jitter, -jitter_grad,
                                              adam.step, adam_cfg);
        adam_update(z, (-z_grad).eval(), z_buf, adam.step, adam_cfg);
    }

    {
        const Matrix w1 = sample_std_normal(fresh_rng, q, n);
        Matrix pooled(2 * n, q);
        pooled.topRows(n) = z.transpose();
        pooled.bottomRows(n) = w1.transpose();
        trace.mmd_after = mmd(z.transpose(), w1.transpose(),
                              median_heuristic_bandwidth(pooled));
    }
    return trace;
}

Matrix sample_student_functions(const DlfModel& model, const Matrix& points,
                                Index count, SeededRng& rng) {
    validate_model(model);
    if (count < 1) throw InvalidShape("sample_student_functions: count >= 1");
    const Matrix xs = model.standardizer.transform_features(points);
    const HeadEval heads = eval_heads(model, xs);
    const Matrix zs = sample_std_normal(rng, count, model.q);
    Matrix out = zs * heads.phi.transpose();
    out.rowwise() += heads.mu.transpose();
    return (out.array() * model.standardizer.target_scale +
            model.standardizer.target_mean)
        .matrix();
}

GaussianMixture predictive_mixture(const DlfModel& model,
                                   const InverseGammaParams& noise,
                                   const Vector& x, Index count,
                                   SeededRng& rng, bool include_jitter) {
    const Matrix funcs =
        sample_student_functions(model, x.transpose(), count, rng);
    GaussianMixture mix;
    mix.means = funcs.col(0);
    mix.vars = sample_inverse_gamma(noise, count, rng);
    if (include_jitter) {
        mix.vars.array() +=
            model.standardizer.inverse_target_var(model.jitter());
    }
    return mix;
}

}  // namespace dlf

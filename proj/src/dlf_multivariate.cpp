#include "dlf/dlf_multivariate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <unsupported/Eigen/KroneckerProduct>

namespace dlf {

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
    if (!(y > 0.0)) {
        throw ConfigInvalid("inverse_softplus: argument must be > 0");
    }
    return y > 30.0 ? y : std::log(std::expm1(y));
}

Matrix MultiDlfModel::chol_factor() const {
    const Index c = l_raw.rows();
    Matrix l = Matrix::Zero(c, c);
    for (Index k = 0; k < c; ++k) {
        for (Index j = 0; j < k; ++j) {
            l(k, j) = l_raw(k, j);
        }
        l(k, k) = softplus(l_raw(k, k));
    }
    return l;
}

void validate_multi_model(const MultiDlfModel& model) {
    if (model.q < 1) throw InvalidSpec("multi dlf: q must be >= 1");
    if (model.n_classes < 1) {
        throw InvalidSpec("multi dlf: class count must be >= 1");
    }
    if (model.spec.output_dim != model.n_classes + model.q) {
        throw InvalidSpec("multi dlf: network must have c+q outputs");
    }
    if (model.l_raw.rows() != model.n_classes ||
        model.l_raw.cols() != model.n_classes) {
        throw DimensionMismatch("multi dlf: L must be c x c");
    }
    validate_params(model.spec, model.params);
    if (!model.l_raw.allFinite() || !std::isfinite(model.log_jitter)) {
        throw NonFiniteLoss("multi dlf: non-finite parameters");
    }
    if (model.design.points.rows() < 1) {
        throw EmptyData("multi dlf: empty design set");
    }
    if (model.design.points.cols() != model.spec.input_dim) {
        throw DimensionMismatch("multi dlf: design dimension != network input");
    }
}

namespace {

void check_logit_shapes(const std::vector<Matrix>& f, Index m, Index c) {
    if (f.empty()) throw EmptyData("multi dlf: no teacher logit matrices");
    for (const Matrix& fi : f) {
        if (fi.rows() != m || fi.cols() != c) {
            throw DimensionMismatch("multi dlf: logit matrix is " +
                                    std::to_string(fi.rows()) + " x " +
                                    std::to_string(fi.cols()) + ", expected " +
                                    std::to_string(m) + " x " +
                                    std::to_string(c));
        }
    }
}

}  // namespace

MultiDlfModel init_multi_dlf_model(const NetworkSpec& spec, Index q,
                                   int n_classes, const DesignSet& design,
                                   const Standardizer& standardizer,
                                   const std::vector<Matrix>& f,
                                   SeededRng& rng) {
    if (q < 1) throw InvalidSpec("multi dlf: q must be >= 1");
    if (n_classes < 1) throw InvalidSpec("multi dlf: class count must be >= 1");
    if (spec.output_dim != n_classes + q) {
        throw InvalidSpec("multi dlf: network must have c+q outputs");
    }
    check_logit_shapes(f, design.points.rows(), n_classes);

    MultiDlfModel model;
    model.spec = spec;
    model.params = init_params(spec, rng);
    model.l_raw = Matrix::Zero(n_classes, n_classes);
    model.l_raw.diagonal().setConstant(inverse_softplus(1.0));
    model.n_classes = n_classes;
    model.q = q;
    model.design = design;
    model.standardizer = standardizer;

    double mean = 0.0;
    double count = 0.0;
    for (const Matrix& fi : f) {
        mean += fi.sum();
        count += static_cast<double>(fi.size());
    }
    mean /= count;
    double var = 0.0;
    for (const Matrix& fi : f) {
        var += (fi.array() - mean).square().sum();
    }
    var /= count;
    model.log_jitter = std::log(std::max(0.01 * var, 1e-8));
    validate_multi_model(model);
    return model;
}

MultiHeadEval eval_multi_heads(const MultiDlfModel& model,
                               const Matrix& points) {
    const Matrix out = forward_batch(model.spec, model.params, points);
    MultiHeadEval heads;
    heads.mu = out.leftCols(model.n_classes);
    heads.phi = out.rightCols(model.q);
    return heads;
}

Vector vec_matrix(const Matrix& a) {
    return Eigen::Map<const Vector>(a.data(), a.size());
}

LowRankGaussian vec_observation_law(const MultiDlfModel& model) {
    validate_multi_model(model);
    const MultiHeadEval heads = eval_multi_heads(model, model.design.points);
    const Matrix l = model.chol_factor();
    LowRankGaussian law;
    law.mean = vec_matrix(heads.mu);
    law.loading = Eigen::kroneckerProduct(l, heads.phi).eval();
    law.jitter = model.jitter();
    return law;
}

PosteriorStats e_step_multi(const MultiHeadEval& heads, const Matrix& l,
                            double jitter,
                            const std::vector<Matrix>& f_batch) {
    const Index mb = heads.mu.rows();
    const Index c = heads.mu.cols();
    const Index q = heads.phi.cols();
    if (l.rows() != c || l.cols() != c) {
        throw DimensionMismatch("e_step_multi: L must be c x c");
    }
    check_logit_shapes(f_batch, mb, c);
    if (!(jitter > 0.0)) {
        throw SingularPrecision("e_step_multi: jitter must be > 0");
    }
    const Index n = static_cast<Index>(f_batch.size());
    const Index cq = c * q;

    const Matrix ltl = l.transpose() * l;
    const Matrix ptp = heads.phi.transpose() * heads.phi;
    Matrix prec = Eigen::kroneckerProduct(ltl, ptp).eval() / jitter;
    prec.diagonal().array() += 1.0;
    Matrix g;
    try {
        g = cholesky(prec);
    } catch (const NotPositiveDefinite& e) {
        throw SingularPrecision(std::string("e_step_multi: ") + e.what());
    }
    auto solve = [&](const Matrix& rhs) -> Matrix {
        const Matrix half = g.triangularView<Eigen::Lower>().solve(rhs);
        return g.transpose().triangularView<Eigen::Upper>().solve(half);
    };
    PosteriorStats post;
    post.cov = solve(Matrix::Identity(cq, cq));
    post.cov = 0.5 * (post.cov + post.cov.transpose()).eval();
    post.means.resize(n, cq);
    for (Index i = 0; i < n; ++i) {
        const Matrix a = f_batch[static_cast<std::size_t>(i)] - heads.mu;
        const Matrix t = heads.phi.transpose() * a * l;  // q x c
        post.means.row(i) = (post.cov * vec_matrix(t)).transpose() / jitter;
    }
    return post;
}

namespace {

struct MultiQCore {
    double r = 0.0;
    double value = 0.0;
    Matrix sum_a;    // sum of residual matrices F_i - mu, m_b x c
    Matrix w;        // sum of vec(A_i) wbar_i^T, mc x cq
    Vector wbar_sum; // sum of posterior means, cq
    Matrix s;        // sum of second moments, cq x cq
    Matrix g;        // L kron phi, mc x cq
};

MultiQCore q_core_multi(const MultiHeadEval& heads, const Matrix& l,
                        double jitter, const std::vector<Matrix>& f_batch,
                        const PosteriorStats& posterior) {
    const Index mb = heads.mu.rows();
    const Index c = heads.mu.cols();
    const Index q = heads.phi.cols();
    const Index n = static_cast<Index>(f_batch.size());
    const Index cq = c * q;
    if (posterior.means.rows() != n) {
        throw DimensionMismatch(
            "q_objective_multi: posterior/realization mismatch");
    }
    if (posterior.means.cols() != cq) {
        throw DimensionMismatch(
            "q_objective_multi: posterior latent dim mismatch");
    }

    MultiQCore core;
    core.g = Eigen::kroneckerProduct(l, heads.phi).eval();
    core.sum_a = Matrix::Zero(mb, c);
    core.w = Matrix::Zero(mb * c, cq);
    core.wbar_sum = Vector::Zero(cq);
    double sq = 0.0;
    for (Index i = 0; i < n; ++i) {
        const Matrix a = f_batch[static_cast<std::size_t>(i)] - heads.mu;
        core.sum_a += a;
        sq += a.squaredNorm();
        core.w += vec_matrix(a) * posterior.means.row(i);
        core.wbar_sum += posterior.means.row(i).transpose();
    }
    core.s = static_cast<double>(n) * posterior.cov +
             posterior.means.transpose() * posterior.means;
    const Matrix ltl = l.transpose() * l;
    const Matrix ptp = heads.phi.transpose() * heads.phi;
    const Matrix gtg = Eigen::kroneckerProduct(ltl, ptp).eval();
    core.r = sq - 2.0 * (core.g.array() * core.w.array()).sum() +
             (gtg.array() * core.s.array()).sum();
    core.value = -0.5 * static_cast<double>(c * n * mb) *
                     std::log(2.0 * std::numbers::pi * jitter) -
                 core.r / (2.0 * jitter);
    return core;
}

double q_value_only_multi(const MultiDlfModel& model,
                          const Matrix& batch_points,
                          const std::vector<Matrix>& f_batch,
                          const PosteriorStats& posterior) {
    const MultiHeadEval heads = eval_multi_heads(model, batch_points);
    return q_core_multi(heads, model.chol_factor(), model.jitter(), f_batch,
                        posterior)
        .value;
}

}  // namespace

MultiQResult q_objective_multi(const MultiDlfModel& model,
                               const Matrix& batch_points,
                               const std::vector<Matrix>& f_batch,
                               const PosteriorStats& posterior) {
    ForwardCache cache;
    const Matrix out =
        forward_batch(model.spec, model.params, batch_points, cache);
    MultiHeadEval heads;
    heads.mu = out.leftCols(model.n_classes);
    heads.phi = out.rightCols(model.q);

    const Matrix l = model.chol_factor();
    const double jitter = model.jitter();
    const MultiQCore core =
        q_core_multi(heads, l, jitter, f_batch, posterior);
    const Index mb = heads.mu.rows();
    const Index c = model.n_classes;
    const Index q = model.q;
    const Index n = static_cast<Index>(f_batch.size());

    MultiQResult res;
    res.value = core.value;

    // dQ/dG for the full Kronecker loading, then contracted onto the
    // factors: G_block(k,l) = L(k,l) phi.
    const Matrix d = (core.w - core.g * core.s) / jitter;
    Matrix d_phi = Matrix::Zero(mb, q);
    Matrix d_l = Matrix::Zero(c, c);
    for (Index k = 0; k < c; ++k) {
        for (Index j = 0; j < c; ++j) {
            const auto block = d.block(k * mb, j * q, mb, q);
            d_phi += l(k, j) * block;
            d_l(k, j) = (block.array() * heads.phi.array()).sum();
        }
    }

    res.head_upstream.resize(mb, c + q);
    const Vector g_wbar = core.g * core.wbar_sum;
    res.head_upstream.leftCols(c) =
        (core.sum_a -
         Eigen::Map<const Matrix>(g_wbar.data(), mb, c)) /
        jitter;
    res.head_upstream.rightCols(q) = d_phi;

    res.l_raw_grad = Matrix::Zero(c, c);
    for (Index k = 0; k < c; ++k) {
        for (Index j = 0; j < k; ++j) {
            res.l_raw_grad(k, j) = d_l(k, j);
        }
        const double sig = 1.0 / (1.0 + std::exp(-model.l_raw(k, k)));
        res.l_raw_grad(k, k) = d_l(k, k) * sig;
    }

    res.log_jitter_grad = -0.5 * static_cast<double>(c * n * mb) +
                          core.r / (2.0 * jitter);
    res.theta_grad =
        backward_batch(model.spec, model.params, cache, res.head_upstream);
    return res;
}

double observed_loglik_multi(const MultiDlfModel& model,
                             const std::vector<Matrix>& f) {
    check_logit_shapes(f, model.design.points.rows(), model.n_classes);
    const LowRankGaussian law = vec_observation_law(model);
    double total = 0.0;
    for (const Matrix& fi : f) {
        total += lowrank_logpdf(vec_matrix(fi), law);
    }
    return total;
}

namespace {

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

EmTrace em_fit_multi(MultiDlfModel& model, const std::vector<Matrix>& f,
                     const EmConfig& cfg, SeededRng& rng, bool fix_l) {
    validate_multi_model(model);
    const Index m = model.design.points.rows();
    check_logit_shapes(f, m, model.n_classes);
    if (cfg.epochs < 0) throw ConfigInvalid("em_fit_multi: negative epochs");
    if (!(cfg.tol > 0.0)) throw ConfigInvalid("em_fit_multi: tol must be > 0");
    if (cfg.mode == EmMode::MiniBatch &&
        (cfg.batch_size < 1 || cfg.batch_size > m)) {
        throw ConfigInvalid("em_fit_multi: batch_size must lie in [1, m]");
    }

    EmTrace trace;
    trace.loglik.push_back(observed_loglik_multi(model, f));

    AdamState adam = make_adam_state(model.spec);
    AdamBuf l_buf = AdamBuf::like(model.l_raw);
    ScalarAdam jitter_adam;
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    double step_size = cfg.lr;

    std::vector<Index> order(m);
    for (Index i = 0; i < m; ++i) order[i] = i;

    auto take_adam_step = [&](const MultiQResult& q) {
        NetworkGrads descent = q.theta_grad;
        descent *= -1.0;
        adam_step(model.params, descent, adam, adam_cfg);
        if (!fix_l) {
            adam_update(model.l_raw, (-q.l_raw_grad).eval(), l_buf,
                        adam.step, adam_cfg);
        }
        model.log_jitter = jitter_adam.update(
            model.log_jitter, -q.log_jitter_grad, adam.step, adam_cfg);
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.mode == EmMode::FullBatch) {
            const MultiHeadEval heads =
                eval_multi_heads(model, model.design.points);
            const PosteriorStats post =
                e_step_multi(heads, model.chol_factor(), model.jitter(), f);
            const MultiQResult q =
                q_objective_multi(model, model.design.points, f, post);
            if (cfg.gem_guard) {
                bool accepted = false;
                while (step_size > 1e-14) {
                    MultiDlfModel candidate = model;
                    NetworkGrads scaled = q.theta_grad;
                    scaled *= step_size;
                    candidate.params += scaled;
                    if (!fix_l) {
                        candidate.l_raw += step_size * q.l_raw_grad;
                    }
                    candidate.log_jitter += step_size * q.log_jitter_grad;
                    const double q_new = q_value_only_multi(
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
                take_adam_step(q);
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
                std::vector<Matrix> fb(f.size(),
                                       Matrix(b, model.n_classes));
                for (Index i = 0; i < b; ++i) {
                    points.row(i) = model.design.points.row(order[start + i]);
                    for (std::size_t t = 0; t < f.size(); ++t) {
                        fb[t].row(i) = f[t].row(order[start + i]);
                    }
                }
                const Matrix out_b =
                    forward_batch(model.spec, model.params, points);
                const MultiHeadEval heads_b = {
                    out_b.leftCols(model.n_classes),
                    out_b.rightCols(model.q)};
                const PosteriorStats post = e_step_multi(
                    heads_b, model.chol_factor(), model.jitter(), fb);
                const MultiQResult q =
                    q_objective_multi(model, points, fb, post);
                take_adam_step(q);
            }
        }
        const double ll = observed_loglik_multi(model, f);
        if (!std::isfinite(ll)) {
            throw NonFiniteLoss(
                "em_fit_multi: log-likelihood diverged at epoch " +
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

Matrix sampled_prob_rows(const MultiDlfModel& model, const Vector& x,
                         Index count, SeededRng& rng) {
    validate_multi_model(model);
    if (count < 1) throw InvalidShape("sampled_prob_rows: count >= 1");
    const Matrix xs =
        model.standardizer.transform_features(x.transpose());
    const MultiHeadEval heads = eval_multi_heads(model, xs);
    const Vector mu = heads.mu.row(0).transpose();
    const Vector phi = heads.phi.row(0).transpose();
    const Matrix l = model.chol_factor();

    Matrix logits(count, model.n_classes);
    for (Index s = 0; s < count; ++s) {
        const Matrix z = sample_std_normal(rng, model.n_classes, model.q);
        logits.row(s) = (mu + l * (z * phi)).transpose();
    }
    return softmax_rows(logits);
}

Vector predictive_probs(const MultiDlfModel& model, const Vector& x,
                        Index count, SeededRng& rng) {
    const Matrix rows = sampled_prob_rows(model, x, count, rng);
    return rows.colwise().mean().transpose();
}

}  // namespace dlf

#include <doctest.h>

#include <cmath>

#include "dlf/dlf_univariate.hpp"

using namespace dlf;

namespace {

// Model whose heads are constant in x: zero weights, head values in the
// final-layer biases. Bias 0 is mu, biases 1..q the loading row.
DlfModel constant_model(Index m_points, double mu, const Vector& phi_row,
                        double jitter) {
    const Index q = phi_row.size();
    DlfModel model;
    model.spec = NetworkSpec{1, {2}, q + 1};
    model.params = zero_grads(model.spec);
    model.params.biases[1](0) = mu;
    model.params.biases[1].tail(q) = phi_row;
    model.log_jitter = std::log(jitter);
    model.q = q;
    model.design.points = Matrix::Zero(m_points, 1);
    for (Index j = 0; j < m_points; ++j) model.design.points(j, 0) = j;
    model.standardizer.feature_mean = Vector::Zero(1);
    model.standardizer.feature_scale = Vector::Ones(1);
    return model;
}

// Random smooth model for oracle comparisons.
DlfModel random_model(Index m_points, Index q, std::uint64_t seed) {
    SeededRng rng(seed);
    DlfModel model;
    model.spec = NetworkSpec{2, {6}, q + 1, Activation::Tanh};
    model.params = init_params(model.spec, rng);
    model.log_jitter = std::log(0.05 + 0.5 * rng.uniform());
    model.q = q;
    model.design.points = sample_std_normal(rng, m_points, 2);
    model.standardizer.feature_mean = Vector::Zero(2);
    model.standardizer.feature_scale = Vector::Ones(2);
    return model;
}

// Dense joint-Gaussian conditioning: z | f for the augmented vector
// (f, z) with cov [[phi phi^T + s2 I, phi], [phi^T, I]].
void dense_posterior(const HeadEval& heads, double s2, const Vector& f,
                     Vector* mean_out, Matrix* cov_out) {
    const Index q = heads.phi.cols();
    const Index m = heads.mu.size();
    const Matrix sigma_ff =
        heads.phi * heads.phi.transpose() + s2 * Matrix::Identity(m, m);
    const Matrix solve_f = sigma_ff.llt().solve(Matrix::Identity(m, m));
    *mean_out = heads.phi.transpose() * solve_f * (f - heads.mu);
    *cov_out = Matrix::Identity(q, q) -
               heads.phi.transpose() * solve_f * heads.phi;
}

}  // namespace

TEST_CASE("e_step hand example m=2 q=1") {
    Vector phi_row(1);
    phi_row << 1.0;
    const DlfModel model = constant_model(2, 0.0, phi_row, 1.0);
    const HeadEval heads = eval_heads(model, model.design.points);
    CHECK(heads.mu.isZero());
    CHECK(heads.phi(0, 0) == 1.0);
    CHECK(heads.phi(1, 0) == 1.0);

    Matrix f(2, 1);
    f << 1.0, 1.0;
    const PosteriorStats post = e_step(heads, 1.0, f);
    CHECK(post.cov(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(post.means(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("e_step with zero loadings returns the prior") {
    const DlfModel model = constant_model(3, 0.5, Vector::Zero(2), 0.7);
    const HeadEval heads = eval_heads(model, model.design.points);
    Matrix f(3, 4);
    f.setRandom();
    const PosteriorStats post = e_step(heads, 0.7, f);
    CHECK(post.means.cwiseAbs().maxCoeff() == 0.0);
    CHECK((post.cov - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("e_step matches dense conditioning on random instances") {
    SeededRng rng(71);
    for (int trial = 0; trial < 100; ++trial) {
        const Index m = 1 + static_cast<Index>(rng.uniform_int(6));
        const Index q = 1 + static_cast<Index>(rng.uniform_int(2));
        const DlfModel model = random_model(m, q, rng.next_u64());
        const HeadEval heads = eval_heads(model, model.design.points);
        const Matrix f = sample_std_normal(rng, m, 3);
        const PosteriorStats post = e_step(heads, model.jitter(), f);

        for (Index i = 0; i < 3; ++i) {
            Vector mean_d;
            Matrix cov_d;
            dense_posterior(heads, model.jitter(), f.col(i), &mean_d, &cov_d);
            CHECK((post.means.row(i).transpose() - mean_d)
                      .cwiseAbs()
                      .maxCoeff() < 1e-10);
            CHECK((post.cov - cov_d).cwiseAbs().maxCoeff() < 1e-10);
        }

        // Posterior covariance eigenvalues lie in (0, 1].
        Eigen::SelfAdjointEigenSolver<Matrix> eig(post.cov);
        CHECK(eig.eigenvalues().minCoeff() > 0.0);
        CHECK(eig.eigenvalues().maxCoeff() <= 1.0 + 1e-12);
    }
}

TEST_CASE("q_objective with zero loadings reduces to a Gaussian mean fit") {
    const Index m = 4, n = 6;
    const DlfModel model = constant_model(m, 0.25, Vector::Zero(2), 0.5);
    SeededRng rng(5);
    const Matrix f = sample_std_normal(rng, m, n);
    const HeadEval heads = eval_heads(model, model.design.points);
    const PosteriorStats post = e_step(heads, model.jitter(), f);
    const QResult q = q_objective(model, model.design.points, f, post);

    // Q = -0.5 n m log(2 pi s2) - sum residual^2/(2 s2) exactly.
    const double r = (f.array() - 0.25).square().sum();
    const double expect =
        -0.5 * n * m * std::log(2.0 * M_PI * 0.5) - r / (2.0 * 0.5);
    CHECK(q.value == doctest::Approx(expect).epsilon(1e-12));

    // The mean-head gradient points toward the batch residual mean.
    const Vector residual_sum = (f.array() - 0.25).rowwise().sum();
    CHECK((q.head_upstream.col(0) - residual_sum / 0.5).cwiseAbs().maxCoeff()
          < 1e-12);
}

TEST_CASE("q_objective gradients match finite differences") {
    const Index m = 5, n = 4, q_dim = 2;
    DlfModel model = random_model(m, q_dim, 909);
    SeededRng rng(10);
    const Matrix f = sample_std_normal(rng, m, n);
    const HeadEval heads = eval_heads(model, model.design.points);
    const PosteriorStats post = e_step(heads, model.jitter(), f);
    const QResult q = q_objective(model, model.design.points, f, post);

    const double h = 1e-5;
    double worst = 0.0;
    auto value_at = [&](DlfModel& mod) {
        return q_objective(mod, mod.design.points, f, post).value;
    };
    for (std::size_t l = 0; l < model.params.weights.size(); ++l) {
        for (Index i = 0; i < model.params.weights[l].size(); ++i) {
            double* slot = model.params.weights[l].data() + i;
            const double saved = *slot;
            *slot = saved + h;
            const double up = value_at(model);
            *slot = saved - h;
            const double down = value_at(model);
            *slot = saved;
            const double fd = (up - down) / (2.0 * h);
            const double an = q.theta_grad.weights[l](i);
            worst = std::max(worst,
                             std::abs(an - fd) / std::max(1.0, std::abs(an)));
        }
        for (Index i = 0; i < model.params.biases[l].size(); ++i) {
            double* slot = model.params.biases[l].data() + i;
            const double saved = *slot;
            *slot = saved + h;
            const double up = value_at(model);
            *slot = saved - h;
            const double down = value_at(model);
            *slot = saved;
            const double fd = (up - down) / (2.0 * h);
            const double an = q.theta_grad.biases[l](i);
            worst = std::max(worst,
                             std::abs(an - fd) / std::max(1.0, std::abs(an)));
        }
    }
    CHECK(worst < 1e-4);

    // Log-jitter gradient.
    const double saved = model.log_jitter;
    model.log_jitter = saved + h;
    const double up = value_at(model);
    model.log_jitter = saved - h;
    const double down = value_at(model);
    model.log_jitter = saved;
    const double fd = (up - down) / (2.0 * h);
    CHECK(q.log_jitter_grad ==
          doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("q_objective is invariant under joint rotation of loadings") {
    const Index m = 6, n = 5, q_dim = 2;
    DlfModel model = random_model(m, q_dim, 311);
    SeededRng rng(12);
    const Matrix f = sample_std_normal(rng, m, n);
    const HeadEval heads = eval_heads(model, model.design.points);
    const PosteriorStats post = e_step(heads, model.jitter(), f);
    const double base = q_objective(model, model.design.points, f, post).value;

    // Rotation by angle t in the latent plane.
    const double t = 0.813;
    Matrix rot(2, 2);
    rot << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);

    // A constant-head model carries the rotated loadings; random_model has
    // x-dependent heads, so rotate via a wrapped evaluation instead: Q only
    // sees heads through phi, so rotate phi and the posterior directly.
    const HeadEval rotated{heads.mu, heads.phi * rot};
    PosteriorStats rpost;
    rpost.means = post.means * rot;
    rpost.cov = rot.transpose() * post.cov * rot;

    // Compare through the core identity: rebuild both Q values by hand.
    auto q_from_heads = [&](const HeadEval& hd, const PosteriorStats& ps) {
        const Matrix a = f.colwise() - hd.mu;
        const Matrix zb = ps.means.transpose();
        const Matrix s = static_cast<double>(n) * ps.cov +
                         zb * zb.transpose();
        const double r =
            a.squaredNorm() -
            2.0 * (hd.phi.array() * (a * zb.transpose()).array()).sum() +
            ((hd.phi.transpose() * hd.phi).array() * s.array()).sum();
        return -0.5 * n * m * std::log(2.0 * M_PI * model.jitter()) -
               r / (2.0 * model.jitter());
    };
    CHECK(q_from_heads(heads, post) == doctest::Approx(base).epsilon(1e-12));
    CHECK(q_from_heads(rotated, rpost) ==
          doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("observed_loglik fixed and oracle values") {
    // mu = f and zero loadings: residual-free Gaussian.
    Vector phi_row = Vector::Zero(1);
    DlfModel model = constant_model(3, 0.8, phi_row, 0.2);
    Matrix f = Matrix::Constant(3, 1, 0.8);
    CHECK(observed_loglik(model, f) ==
          doctest::Approx(-1.5 * std::log(2.0 * M_PI * 0.2)).epsilon(1e-12));

    // Dense oracle on a random instance.
    DlfModel rnd = random_model(5, 2, 212);
    SeededRng rng(3);
    const Matrix fr = sample_std_normal(rng, 5, 4);
    const HeadEval heads = eval_heads(rnd, rnd.design.points);
    const Matrix sigma = heads.phi * heads.phi.transpose() +
                         rnd.jitter() * Matrix::Identity(5, 5);
    const Eigen::LLT<Matrix> llt(sigma);
    const Matrix lmat = llt.matrixL();
    double dense = 0.0;
    for (Index i = 0; i < 4; ++i) {
        const Vector r = fr.col(i) - heads.mu;
        dense += -0.5 * (5.0 * std::log(2.0 * M_PI) +
                         2.0 * lmat.diagonal().array().log().sum() +
                         r.dot(llt.solve(r)));
    }
    CHECK(observed_loglik(rnd, fr) == doctest::Approx(dense).epsilon(1e-9));

    // Moving mu toward the realization mean raises the likelihood.
    DlfModel at_zero = constant_model(3, 0.0, phi_row, 0.2);
    DlfModel at_mean = constant_model(3, 0.8, phi_row, 0.2);
    CHECK(observed_loglik(at_mean, f) > observed_loglik(at_zero, f));
}

TEST_CASE("marginalization identity against dense Gaussian algebra") {
    SeededRng rng(59);
    for (int trial = 0; trial < 10; ++trial) {
        const Index m = 2 + static_cast<Index>(rng.uniform_int(5));
        const DlfModel model = random_model(m, 2, rng.next_u64());
        const Matrix f = sample_std_normal(rng, m, 2);
        const HeadEval heads = eval_heads(model, model.design.points);
        const Matrix sigma = heads.phi * heads.phi.transpose() +
                             model.jitter() * Matrix::Identity(m, m);
        const Eigen::LLT<Matrix> llt(sigma);
        const Matrix lmat = llt.matrixL();
        double dense = 0.0;
        for (Index i = 0; i < f.cols(); ++i) {
            const Vector r = f.col(i) - heads.mu;
            dense += -0.5 * (m * std::log(2.0 * M_PI) +
                             2.0 * lmat.diagonal().array().log().sum() +
                             r.dot(llt.solve(r)));
        }
        CHECK(observed_loglik(model, f) ==
              doctest::Approx(dense).epsilon(1e-8));
    }
}

TEST_CASE("em_fit zero epochs returns the initialization") {
    DlfModel model = random_model(6, 2, 404);
    SeededRng rng(1);
    const Matrix f = sample_std_normal(rng, 6, 5);
    const DlfModel before = model;
    EmConfig cfg;
    cfg.epochs = 0;
    cfg.batch_size = 3;
    SeededRng em_rng(2);
    const EmTrace trace = em_fit(model, f, cfg, em_rng);
    CHECK(trace.loglik.size() == 1);
    CHECK(model.log_jitter == before.log_jitter);
    for (std::size_t l = 0; l < model.params.weights.size(); ++l) {
        CHECK((model.params.weights[l] - before.params.weights[l]).norm() ==
              0.0);
    }
}

TEST_CASE("em config validation") {
    DlfModel model = random_model(6, 2, 405);
    SeededRng rng(1);
    const Matrix f = sample_std_normal(rng, 6, 5);
    SeededRng em_rng(2);
    EmConfig cfg;
    cfg.batch_size = 7;  // larger than m
    CHECK_THROWS_AS(em_fit(model, f, cfg, em_rng), ConfigInvalid);
    cfg.batch_size = 3;
    cfg.tol = 0.0;
    CHECK_THROWS_AS(em_fit(model, f, cfg, em_rng), ConfigInvalid);
}

TEST_CASE("gem-guarded full-batch EM has a monotone likelihood trace") {
    SynthConfig scfg;
    scfg.kind = SynthKind::DlfGp;
    scfg.m = 15;
    scfg.q = 2;
    scfg.dim = 2;
    scfg.n_realizations = 50;
    scfg.jitter = 0.05;
    const SynthResult synth = gen_synth(scfg, 88);

    DesignSet design;
    design.points = synth.truth.design;
    SeededRng init(7);
    const NetworkSpec spec{2, {8}, 3, Activation::Tanh};
    DlfModel model = init_dlf_model(spec, 2, design, Standardizer{},
                                    synth.truth.realizations, init);
    model.standardizer.feature_mean = Vector::Zero(2);
    model.standardizer.feature_scale = Vector::Ones(2);

    EmConfig cfg;
    cfg.mode = EmMode::FullBatch;
    cfg.gem_guard = true;
    cfg.epochs = 60;
    cfg.lr = 1e-2;
    cfg.tol = 1e-12;
    SeededRng em_rng(3);
    const EmTrace trace = em_fit(model, synth.truth.realizations, cfg, em_rng);
    REQUIRE(trace.loglik.size() >= 2);
    for (std::size_t i = 1; i < trace.loglik.size(); ++i) {
        CHECK(trace.loglik[i] >= trace.loglik[i - 1] - 1e-8);
    }
    CHECK(trace.loglik.back() > trace.loglik.front());
}

TEST_CASE("mmd fixed values and brute-force oracle") {
    SeededRng rng(61);
    const Matrix x = sample_std_normal(rng, 12, 3);
    CHECK(mmd(x, x, 1.0) == doctest::Approx(0.0).epsilon(1e-12));

    // Distant singletons: self terms 1, cross term vanishes.
    Matrix a(1, 2), b(1, 2);
    a << 0.0, 0.0;
    b << 100.0, 0.0;
    CHECK(mmd(a, b, 1.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));

    // Brute-force double loop.
    const Matrix y = sample_std_normal(rng, 9, 3);
    const double bw = 0.8;
    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    for (Index i = 0; i < x.rows(); ++i) {
        for (Index j = 0; j < x.rows(); ++j) {
            kxx += std::exp(-(x.row(i) - x.row(j)).squaredNorm() /
                            (2.0 * bw * bw));
        }
    }
    for (Index i = 0; i < y.rows(); ++i) {
        for (Index j = 0; j < y.rows(); ++j) {
            kyy += std::exp(-(y.row(i) - y.row(j)).squaredNorm() /
                            (2.0 * bw * bw));
        }
    }
    for (Index i = 0; i < x.rows(); ++i) {
        for (Index j = 0; j < y.rows(); ++j) {
            kxy += std::exp(-(x.row(i) - y.row(j)).squaredNorm() /
                            (2.0 * bw * bw));
        }
    }
    const double stat = kxx / (12.0 * 12.0) + kyy / (9.0 * 9.0) -
                        2.0 * kxy / (12.0 * 9.0);
    CHECK(mmd(x, y, bw) ==
          doctest::Approx(std::sqrt(std::max(stat, 0.0))).epsilon(1e-12));

    CHECK_THROWS_AS(mmd(x, sample_std_normal(rng, 4, 2), 1.0),
                    DimensionMismatch);
    CHECK_THROWS_AS(mmd(x, y, 0.0), ConfigInvalid);
}

TEST_CASE("mmd_pretrain pulls latents toward the prior and is seeded") {
    SynthConfig scfg;
    scfg.kind = SynthKind::DlfGp;
    scfg.m = 20;
    scfg.q = 2;
    scfg.dim = 2;
    scfg.n_realizations = 60;
    scfg.jitter = 0.05;
    const SynthResult synth = gen_synth(scfg, 120);

    DesignSet design;
    design.points = synth.truth.design;
    const NetworkSpec spec{2, {8}, 3, Activation::Tanh};

    auto build = [&]() {
        SeededRng init(70);
        DlfModel model = init_dlf_model(spec, 2, design, Standardizer{},
                                        synth.truth.realizations, init);
        model.standardizer.feature_mean = Vector::Zero(2);
        model.standardizer.feature_scale = Vector::Ones(2);
        return model;
    };

    DlfModel m1 = build();
    PretrainConfig pcfg;
    pcfg.lambda = 1.0;
    pcfg.epochs = 120;
    SeededRng r1(400);
    const PretrainTrace t1 = mmd_pretrain(m1, synth.truth.realizations, pcfg, r1);
    CHECK(t1.mmd_after < t1.mmd_before);

    // Determinism.
    DlfModel m2 = build();
    SeededRng r2(400);
    const PretrainTrace t2 = mmd_pretrain(m2, synth.truth.realizations, pcfg, r2);
    CHECK(t1.mmd_after == t2.mmd_after);
    CHECK(m1.log_jitter == m2.log_jitter);
    for (std::size_t l = 0; l < m1.params.weights.size(); ++l) {
        CHECK((m1.params.weights[l] - m2.params.weights[l]).norm() == 0.0);
    }

    // lambda = 0: objective has no penalty term; run must still improve the
    // complete likelihood.
    DlfModel m3 = build();
    PretrainConfig zero = pcfg;
    zero.lambda = 0.0;
    SeededRng r3(400);
    const PretrainTrace t3 = mmd_pretrain(m3, synth.truth.realizations, zero, r3);
    CHECK(t3.objective.back() > t3.objective.front());
}

TEST_CASE("sample_student_functions statistics") {
    // Degenerate loadings: every draw equals mu.
    const DlfModel flat = constant_model(4, 1.5, Vector::Zero(2), 0.1);
    SeededRng rng(14);
    const Matrix rows =
        sample_student_functions(flat, flat.design.points, 8, rng);
    CHECK(rows.rows() == 8);
    CHECK(rows.cols() == 4);
    CHECK((rows.array() - 1.5).abs().maxCoeff() < 1e-12);

    // Nontrivial loadings: empirical covariance approaches phi phi^T.
    Vector phi_row(2);
    phi_row << 0.9, -0.4;
    const DlfModel model = constant_model(3, 0.2, phi_row, 0.1);
    SeededRng rng2(15);
    const Matrix draws =
        sample_student_functions(model, model.design.points, 10000, rng2);
    const Matrix centered = draws.rowwise() - draws.colwise().mean();
    const Matrix emp = centered.transpose() * centered / 10000.0;
    const HeadEval heads = eval_heads(model, model.design.points);
    const Matrix expect = heads.phi * heads.phi.transpose();
    CHECK((emp - expect).norm() / expect.norm() < 0.05);

    // Empirical mean within Monte Carlo three-sigma of mu.
    const double sd = std::sqrt(expect(0, 0) / 10000.0);
    CHECK(std::abs(draws.col(0).mean() - 0.2) < 3.0 * sd);

    // Determinism.
    SeededRng a(16), b(16);
    const Matrix d1 = sample_student_functions(model, model.design.points, 5, a);
    const Matrix d2 = sample_student_functions(model, model.design.points, 5, b);
    CHECK((d1 - d2).norm() == 0.0);
}

TEST_CASE("predictive_mixture composition") {
    Vector phi_row(1);
    phi_row << 0.5;
    const DlfModel model = constant_model(2, 0.0, phi_row, 0.1);
    const InverseGammaParams noise{3.0, 2.0};
    Vector x(1);
    x << 0.0;

    SeededRng rng(18);
    const GaussianMixture one = predictive_mixture(model, noise, x, 1, rng);
    CHECK(one.components() == 1);
    CHECK(one.vars(0) > 0.0);

    SeededRng rng2(19);
    const GaussianMixture many =
        predictive_mixture(model, noise, x, 4000, rng2);
    // Mixture mean equals the average of sampled member means by
    // construction; both should be near mu = 0.
    CHECK(std::abs(many.means.mean()) < 3.0 * 0.5 / std::sqrt(4000.0));

    // Jitter flag adds the de-standardized jitter to every component.
    SeededRng rng3(19);
    const GaussianMixture with_jitter =
        predictive_mixture(model, noise, x, 4000, rng3, true);
    CHECK((with_jitter.vars - many.vars).minCoeff() ==
          doctest::Approx(0.1).epsilon(1e-9));
}

#include "dlf/teacher.hpp"

#include <algorithm>
#include <cmath>

namespace dlf {

namespace {

constexpr double kNoiseFloor = 1e-8;

// Loss and upstream gradient for one batch. Regression: half mean squared
// error. Classification: mean cross-entropy with softmax.
double batch_loss_grad(Task task, const Matrix& out, const Vector& y_batch,
                       int n_classes, Matrix* upstream) {
    const Index b = out.rows();
    if (task == Task::Regression) {
        const Vector resid = out.col(0) - y_batch;
        if (upstream) {
            upstream->resize(b, 1);
            upstream->col(0) = resid / static_cast<double>(b);
        }
        return 0.5 * resid.squaredNorm() / static_cast<double>(b);
    }
    const Matrix p = softmax_rows(out);
    double loss = 0.0;
    for (Index i = 0; i < b; ++i) {
        const int label = static_cast<int>(y_batch(i));
        loss -= std::log(std::max(p(i, label), 1e-300));
    }
    loss /= static_cast<double>(b);
    if (upstream) {
        *upstream = p / static_cast<double>(b);
        for (Index i = 0; i < b; ++i) {
            (*upstream)(i, static_cast<int>(y_batch(i))) -=
                1.0 / static_cast<double>(b);
        }
    }
    (void)n_classes;
    return loss;
}

}  // namespace

NetworkParams fit_member(const Matrix& x, const Vector& y, Task task,
                         int n_classes, const NetworkSpec& spec, int epochs,
                         double lr, Index batch_size, SeededRng rng,
                         FitTrace* trace) {
    if (x.rows() == 0) throw EmptyData("fit_member: no training rows");
    if (x.rows() != y.size()) {
        throw DimensionMismatch("fit_member: feature/target rows differ");
    }
    validate_spec(spec);
    if (task == Task::Classification && spec.output_dim != n_classes) {
        throw InvalidSpec("fit_member: output_dim must equal n_classes");
    }
    if (task == Task::Regression && spec.output_dim != 1) {
        throw InvalidSpec("fit_member: regression teachers have one output");
    }
    if (batch_size < 1) throw ConfigInvalid("fit_member: batch_size >= 1");

    NetworkParams params = init_params(spec, rng);
    AdamState adam = make_adam_state(spec);
    AdamConfig adam_cfg;
    adam_cfg.lr = lr;

    const Index n = x.rows();
    std::vector<Index> order(n);
    for (Index i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (Index i = n - 1; i > 0; --i) {
            const Index j = static_cast<Index>(
                rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
            std::swap(order[i], order[j]);
        }
        for (Index start = 0; start < n; start += batch_size) {
            const Index b = std::min(batch_size, n - start);
            Matrix xb(b, x.cols());
            Vector yb(b);
            for (Index i = 0; i < b; ++i) {
                xb.row(i) = x.row(order[start + i]);
                yb(i) = y(order[start + i]);
            }
            ForwardCache cache;
            const Matrix out = forward_batch(spec, params, xb, cache);
            Matrix upstream;
            const double loss =
                batch_loss_grad(task, out, yb, n_classes, &upstream);
            if (!std::isfinite(loss)) {
                throw NonFiniteLoss("fit_member: loss diverged at epoch " +
                                    std::to_string(epoch));
            }
            const NetworkGrads grads =
                backward_batch(spec, params, cache, upstream);
            adam_step(params, grads, adam, adam_cfg);
        }
        if (trace) {
            const Matrix out = forward_batch(spec, params, x);
            trace->epoch_loss.push_back(
                batch_loss_grad(task, out, y, n_classes, nullptr));
        }
    }
    return params;
}

TeacherEnsemble fit_ensemble(const Dataset& train, const TeacherConfig& cfg,
                             SeededRng& rng,
                             std::vector<FitTrace>* traces) {
    validate_dataset(train);
    if (cfg.n_members < 2) {
        throw ConfigInvalid("fit_ensemble: need at least 2 members");
    }

    TeacherEnsemble ens;
    ens.task = train.task;
    ens.n_classes = train.n_classes;
    ens.spec = cfg.spec;
    ens.standardizer = Standardizer::fit(train.features, train.targets,
                                         train.task == Task::Regression);

    const Matrix x = ens.standardizer.transform_features(train.features);
    const Vector y = train.task == Task::Regression
                         ? ens.standardizer.transform_targets(train.targets)
                         : train.targets;

    if (traces) traces->assign(cfg.n_members, FitTrace{});
    for (int i = 0; i < cfg.n_members; ++i) {
        SeededRng member_rng = rng.stream("member-" + std::to_string(i));
        ens.members.push_back(fit_member(
            x, y, train.task, train.n_classes, cfg.spec, cfg.epochs, cfg.lr,
            cfg.batch_size, member_rng, traces ? &(*traces)[i] : nullptr));
    }

    if (train.task == Task::Regression) {
        ens.noise_vars.resize(cfg.n_members);
        for (int i = 0; i < cfg.n_members; ++i) {
            ens.noise_vars(i) = estimate_noise_var(ens, i, train);
        }
    }
    return ens;
}

double estimate_noise_var(const TeacherEnsemble& ensemble, int member,
                          const Dataset& data) {
    if (data.size() == 0) throw EmptyData("estimate_noise_var: no rows");
    if (member < 0 || member >= ensemble.size()) {
        throw InvalidShape("estimate_noise_var: member index out of range");
    }
    const Matrix x = ensemble.standardizer.transform_features(data.features);
    const Matrix out =
        forward_batch(ensemble.spec, ensemble.members[member], x);
    const Vector pred = ensemble.standardizer.inverse_targets(out.col(0));
    const double mse =
        (pred - data.targets).squaredNorm() / static_cast<double>(data.size());
    return std::max(mse, kNoiseFloor);
}

PredictionMatrix prediction_matrix(const TeacherEnsemble& ensemble,
                                   const DesignSet& design) {
    if (design.points.rows() == 0) {
        throw EmptyData("prediction_matrix: empty design set");
    }
    if (design.points.cols() != ensemble.spec.input_dim) {
        throw DimensionMismatch(
            "prediction_matrix: design dimension does not match teachers");
    }
    PredictionMatrix pm;
    pm.task = ensemble.task;
    if (ensemble.task == Task::Regression) {
        pm.values.resize(design.points.rows(), ensemble.size());
        for (int i = 0; i < ensemble.size(); ++i) {
            pm.values.col(i) =
                forward_batch(ensemble.spec, ensemble.members[i],
                              design.points)
                    .col(0);
        }
    } else {
        for (int i = 0; i < ensemble.size(); ++i) {
            pm.logits.push_back(forward_batch(ensemble.spec,
                                              ensemble.members[i],
                                              design.points));
        }
    }
    return pm;
}

GaussianMixture teacher_predictive(const TeacherEnsemble& ensemble,
                                   const Vector& x) {
    if (ensemble.task != Task::Regression) {
        throw ConfigInvalid("teacher_predictive: regression ensembles only");
    }
    const Matrix means = teacher_member_means(ensemble, x.transpose());
    GaussianMixture mix;
    mix.means = means.row(0).transpose();
    mix.vars = ensemble.noise_vars;
    return mix;
}

Matrix teacher_member_means(const TeacherEnsemble& ensemble, const Matrix& x) {
    const Matrix xs = ensemble.standardizer.transform_features(x);
    Matrix out(x.rows(), ensemble.size());
    for (int i = 0; i < ensemble.size(); ++i) {
        out.col(i) = ensemble.standardizer.inverse_targets(
            forward_batch(ensemble.spec, ensemble.members[i], xs).col(0));
    }
    return out;
}

Matrix teacher_predict_proba(const TeacherEnsemble& ensemble,
                             const Matrix& x) {
    const auto member_probs = teacher_member_probas(ensemble, x);
    Matrix mean = Matrix::Zero(x.rows(), ensemble.n_classes);
    for (const Matrix& p : member_probs) mean += p;
    return mean / static_cast<double>(member_probs.size());
}

std::vector<Matrix> teacher_member_probas(const TeacherEnsemble& ensemble,
                                          const Matrix& x) {
    if (ensemble.task != Task::Classification) {
        throw ConfigInvalid("teacher_member_probas: classification only");
    }
    const Matrix xs = ensemble.standardizer.transform_features(x);
    std::vector<Matrix> out;
    for (int i = 0; i < ensemble.size(); ++i) {
        out.push_back(softmax_rows(
            forward_batch(ensemble.spec, ensemble.members[i], xs)));
    }
    return out;
}

}  // namespace dlf

#include "dlf/shift_adapt.hpp"

#include <algorithm>
#include <cmath>

namespace dlf {

namespace {

constexpr double kHeadRidge = 1e-4;

void require_head(const AdaptedHead& head) {
    if (head.body == nullptr) throw ConfigInvalid("adapted head has no body");
    validate_multi_model(*head.body);
    if (head.w.rows() != head.body->n_classes ||
        head.w.cols() != head.body->q) {
        throw DimensionMismatch("head weights must be c x q");
    }
}

// Logit rows mu + (L W phi^T)^T at standardized points.
Matrix adapted_logits(const MultiDlfModel& body, const Matrix& w,
                      const Matrix& xs) {
    const MultiHeadEval heads = eval_multi_heads(body, xs);
    const Matrix l = body.chol_factor();
    return heads.mu + heads.phi * w.transpose() * l.transpose();
}

int class_label(const Dataset& data, Index j, Index c) {
    const double raw = data.targets(j);
    const double rounded = std::round(raw);
    if (std::abs(raw - rounded) > 1e-9 || rounded < 0.0 ||
        rounded >= static_cast<double>(c)) {
        throw InvalidShape("label " + std::to_string(raw) +
                           " is not a class index in [0, " +
                           std::to_string(c) + ")");
    }
    return static_cast<int>(rounded);
}

}  // namespace

Matrix adapted_probs(const AdaptedHead& head, const Matrix& x) {
    require_head(head);
    const Matrix xs = head.body->standardizer.transform_features(x);
    return softmax_rows(adapted_logits(*head.body, head.w, xs));
}

double adapted_cross_entropy(const AdaptedHead& head, const Dataset& data) {
    require_head(head);
    if (data.size() == 0) throw EmptyData("no adaptation data");
    const Matrix probs = adapted_probs(head, data.features);
    double total = 0.0;
    for (Index j = 0; j < data.size(); ++j) {
        const int y = class_label(data, j, probs.cols());
        total += -std::log(std::max(probs(j, y), 1e-300));
    }
    return total / static_cast<double>(data.size());
}

AdaptedHead fit_head(const MultiDlfModel& body, const Dataset& data,
                     int epochs, double lr, SeededRng& rng,
                     Index batch_size, FitTrace* trace) {
    validate_multi_model(body);
    if (data.size() == 0) throw EmptyData("no adaptation data");
    if (data.features.cols() != body.spec.input_dim) {
        throw DimensionMismatch("adaptation data dimension != body input");
    }
    if (epochs < 0) throw ConfigInvalid("fit_head: negative epochs");
    const Index n = data.size();
    if (batch_size < 0 || batch_size > n) {
        throw ConfigInvalid("fit_head: batch_size must lie in [0, n]");
    }
    const Index b_size = batch_size == 0 ? n : batch_size;
    const Index c = body.n_classes;

    AdaptedHead head;
    head.body = &body;
    head.w = Matrix::Zero(c, body.q);

    const Matrix xs = body.standardizer.transform_features(data.features);
    const MultiHeadEval heads = eval_multi_heads(body, xs);
    const Matrix l = body.chol_factor();

    AdamBuf w_buf = AdamBuf::like(head.w);
    AdamConfig adam_cfg;
    adam_cfg.lr = lr;
    long step = 0;

    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        if (b_size < n) {
            for (Index i = n - 1; i > 0; --i) {
                const Index j = static_cast<Index>(
                    rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
                std::swap(order[static_cast<std::size_t>(i)],
                          order[static_cast<std::size_t>(j)]);
            }
        }
        for (Index start = 0; start < n; start += b_size) {
            const Index b = std::min(b_size, n - start);
            Matrix grad = 2.0 * kHeadRidge * head.w;
            for (Index i = 0; i < b; ++i) {
                const Index row = order[static_cast<std::size_t>(start + i)];
                const Vector phi = heads.phi.row(row).transpose();
                const Vector logits =
                    heads.mu.row(row).transpose() + l * (head.w * phi);
                Vector p = softmax_rows(logits.transpose()).row(0).transpose();
                p(class_label(data, row, c)) -= 1.0;
                grad += l.transpose() * p * phi.transpose() /
                        static_cast<double>(b);
            }
            ++step;
            adam_update(head.w, grad, w_buf, step, adam_cfg);
        }
        if (trace != nullptr) {
            const double ce = adapted_cross_entropy(head, data);
            if (!std::isfinite(ce)) {
                throw NonFiniteLoss("fit_head: loss diverged at epoch " +
                                    std::to_string(epoch));
            }
            trace->epoch_loss.push_back(ce);
        }
    }
    return head;
}

}  // namespace dlf

#pragma once

#include "dlf/dataset.hpp"
#include "dlf/design.hpp"
#include "dlf/network.hpp"

namespace dlf {

struct TeacherConfig {
    NetworkSpec spec;  // output_dim 1 for regression, n_classes otherwise
    int n_members = 5;
    int epochs = 200;
    double lr = 1e-3;
    Index batch_size = 32;
};

// Deep ensemble: members trained from distinct seeded initializations on
// the same standardized data. Noise variances are per-member mean squared
// residuals in raw target units (regression only).
struct TeacherEnsemble {
    Task task = Task::Regression;
    int n_classes = 0;
    NetworkSpec spec;
    std::vector<NetworkParams> members;
    Vector noise_vars;
    Standardizer standardizer;

    int size() const { return static_cast<int>(members.size()); }
};

struct FitTrace {
    std::vector<double> epoch_loss;
};

// Trains one network. x and y are already standardized (labels are left
// as class indices). Minibatch Adam with a per-epoch seeded shuffle;
// batch_size of at least the row count gives plain full-batch training.
NetworkParams fit_member(const Matrix& x, const Vector& y, Task task,
                         int n_classes, const NetworkSpec& spec, int epochs,
                         double lr, Index batch_size, SeededRng rng,
                         FitTrace* trace = nullptr);

TeacherEnsemble fit_ensemble(const Dataset& train, const TeacherConfig& cfg,
                             SeededRng& rng,
                             std::vector<FitTrace>* traces = nullptr);

// Mean squared residual of one member on the given data, raw target units,
// floored at 1e-8.
double estimate_noise_var(const TeacherEnsemble& ensemble, int member,
                          const Dataset& data);

// Teacher predictions at standardized design points. Regression fills
// values(j, i) = member i at point j in standardized target units;
// classification fills logits[i] with the m x c logit matrix of member i.
struct PredictionMatrix {
    Task task = Task::Regression;
    Matrix values;
    std::vector<Matrix> logits;

    Index points() const {
        return task == Task::Regression
                   ? values.rows()
                   : (logits.empty() ? 0 : logits[0].rows());
    }
    int members() const {
        return task == Task::Regression ? static_cast<int>(values.cols())
                                        : static_cast<int>(logits.size());
    }
};

PredictionMatrix prediction_matrix(const TeacherEnsemble& ensemble,
                                   const DesignSet& design);

// Equal-weight Gaussian mixture over members, raw target units.
struct GaussianMixture {
    Vector means;
    Vector vars;

    int components() const { return static_cast<int>(means.size()); }
};

// Regression predictive p(y | x) = (1/n) sum_i N(y | f_i(x), noise_var_i)
// at one raw-unit input.
GaussianMixture teacher_predictive(const TeacherEnsemble& ensemble,
                                   const Vector& x);

// Member means at raw-unit inputs, de-standardized; column i is member i.
Matrix teacher_member_means(const TeacherEnsemble& ensemble, const Matrix& x);

// Classification predictive: averaged softmax probabilities, one row per
// raw-unit input.
Matrix teacher_predict_proba(const TeacherEnsemble& ensemble, const Matrix& x);

// Per-member softmax probabilities at raw-unit inputs.
std::vector<Matrix> teacher_member_probas(const TeacherEnsemble& ensemble,
                                          const Matrix& x);

}  // namespace dlf

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dlf/numerics.hpp"

namespace dlf {

enum class Task { Regression, Classification };

// Tabular dataset. Targets hold raw regression values or integral class
// indices in [0, n_classes) depending on the task.
struct Dataset {
    Matrix features;
    Vector targets;
    std::vector<std::string> column_names;
    Task task = Task::Regression;
    int n_classes = 0;

    Index size() const { return features.rows(); }
    Index dim() const { return features.cols(); }
};

void validate_dataset(const Dataset& data);

// Parses a CSV with a header row; the last column is the target. For
// classification the target cells must be non-negative integers.
Dataset load_csv(const std::string& path, Task task = Task::Regression);

void save_csv(const Dataset& data, const std::string& path);

// Seeded shuffle split into (train, test) with train getting
// round(ratio * n) rows, at least one row on each side.
std::pair<Dataset, Dataset> split(const Dataset& data, double ratio,
                                  std::uint64_t seed);

// Z-score standardization fitted on training statistics. Constant columns
// get scale 1 so transforms stay defined.
struct Standardizer {
    Vector feature_mean;
    Vector feature_scale;
    double target_mean = 0.0;
    double target_scale = 1.0;

    static Standardizer fit(const Matrix& features, const Vector& targets,
                            bool standardize_targets);

    Matrix transform_features(const Matrix& x) const;
    Vector transform_targets(const Vector& y) const;
    Vector inverse_targets(const Vector& y_std) const;
    double inverse_target(double y_std) const {
        return y_std * target_scale + target_mean;
    }
    double inverse_target_var(double var_std) const {
        return var_std * target_scale * target_scale;
    }
};

enum class SynthKind { LinearRegression, DlfGp, Blobs, FlipBlobs };

struct SynthConfig {
    SynthKind kind = SynthKind::LinearRegression;

    // linear-regression
    Index n = 200;
    Index dim = 1;
    double noise_sd = 0.1;

    // dlf-gp: m design points in dim dimensions, q latent factors,
    // n_realizations function draws, observation jitter.
    Index m = 50;
    Index q = 3;
    Index n_realizations = 200;
    double jitter = 0.01;

    // blobs / flip-blobs: class centers equally spaced on a circle.
    int n_classes = 3;
    double radius = 2.0;
    double blob_std = 1.0;
};

// Generating parameters kept next to the data so recovery tests can compare
// estimates against them. Fields are populated per kind.
struct SynthTruth {
    SynthKind kind = SynthKind::LinearRegression;

    Vector slope;
    double intercept = 0.0;
    double noise_sd = 0.0;

    Matrix design;        // m x dim
    Vector mu;            // m
    Matrix phi;           // m x q
    double jitter = 0.0;
    Matrix realizations;  // m x n_realizations

    Matrix centers;  // n_classes x 2
    double blob_std = 0.0;
};

struct SynthResult {
    Dataset data;
    SynthTruth truth;
};

SynthResult gen_synth(const SynthConfig& cfg, std::uint64_t seed);

}  // namespace dlf

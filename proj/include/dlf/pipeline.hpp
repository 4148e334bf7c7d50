#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dlf/serialize.hpp"

namespace dlf {

// Knobs for one experiment. The JSON form accepts any subset of the keys;
// missing fields keep these defaults, unknown keys are rejected.
struct ExperimentConfig {
    Task task = Task::Regression;

    // Data source: a CSV path when non-empty, otherwise the synthetic
    // generator below. The generator also supplies fresh inputs for the
    // new-train design strategies, which therefore need it even when the
    // training data comes from a file.
    std::string data_csv;
    SynthConfig synth;
    double train_ratio = 0.9;

    // Teacher ensemble.
    std::vector<Index> teacher_hidden{100, 100};
    Activation teacher_activation = Activation::ReLU;
    int teacher_members = 5;
    int teacher_epochs = 200;
    double teacher_lr = 1e-3;
    Index teacher_batch = 32;

    // Student network. Output width is derived from the task: q+1 heads
    // for regression, c+q for classification.
    std::vector<Index> student_hidden{50};
    Activation student_activation = Activation::ReLU;
    Index q = 10;

    // Latent initialization. The MMD pretraining stage is defined for the
    // univariate student; classification runs always start from the seeded
    // network init regardless of this flag.
    bool mmd_init = true;
    PretrainConfig pretrain;

    EmConfig em;
    DesignStrategy design = DesignStrategy::TeacherTrain;
    double design_ratio = 1.0;

    // Evaluation: predictive sample count (0 means the teacher count),
    // whether component variances include the fitted observation jitter,
    // and whether the aggregate report also lands as a CSV table.
    Index eval_samples = 0;
    bool include_jitter = false;
    bool write_csv = false;

    std::vector<std::uint64_t> seeds{1};
    std::string out_dir;
};

Json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const Json& j);

// The directory artifacts go to: the config's out_dir when set, else the
// DLF_OUT_DIR environment variable, else the working directory.
std::string resolve_out_dir(const ExperimentConfig& cfg);

// Generating parameters of a synthetic dataset, for storage next to it.
Json synth_truth_to_json(const SynthTruth& truth);

// Student distillation given fitted teachers: design selection from the
// raw-unit candidate pool, teacher prediction matrix, seeded init, optional
// MMD pretraining (regression), EM, and the noise law (regression). All
// randomness comes from streams of the given seed.
struct DistillResult {
    DlfModel model;
    std::optional<InverseGammaParams> noise;
    MultiDlfModel multi_model;
};

DistillResult distill_student(const ExperimentConfig& cfg,
                              const TeacherEnsemble& teachers,
                              const Matrix& raw_pool, std::uint64_t seed);

// Test-set evaluation of a distilled student; the report carries one entry
// per metric. sample_count must be positive here, the pipeline resolves
// the 0 default before calling.
MetricReport evaluate_regression(const DlfModel& model,
                                 const InverseGammaParams& noise,
                                 const Dataset& test, Index sample_count,
                                 bool include_jitter, SeededRng& rng);
MetricReport evaluate_classification(const MultiDlfModel& model,
                                     const Dataset& test, Index sample_count,
                                     SeededRng& rng);

// Everything one seed produces.
struct SeedArtifacts {
    TeacherEnsemble teachers;
    DistillResult student;
    MetricReport report;
};

// load-data -> split -> train-teachers -> select-design -> mmd-pretrain ->
// em-fit -> noise-distill -> evaluate, entirely in memory. Errors from the
// stages come back as StageError.
SeedArtifacts run_seed(const ExperimentConfig& cfg, std::uint64_t seed);

// Runs every seed in the config, writes per-seed artifacts (teachers,
// student, report), the canonical config echo and the aggregated report
// into the output directory, and returns the aggregate.
MetricReport run_pipeline(const ExperimentConfig& cfg);

}  // namespace dlf

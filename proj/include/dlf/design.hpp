#pragma once

#include "dlf/numerics.hpp"

namespace dlf {

enum class DesignStrategy {
    TeacherTrain,
    TeacherTrainMixup,
    NewTrain,
    NewTrainMixup,
};

bool is_mixup(DesignStrategy s);

const char* design_strategy_name(DesignStrategy s);
DesignStrategy parse_design_strategy(const std::string& name);

// Design points in standardized feature units at which teacher predictions
// are recorded and the student likelihood is evaluated.
struct DesignSet {
    Matrix points;
    DesignStrategy provenance = DesignStrategy::TeacherTrain;
};

// lambda * a + (1 - lambda) * b.
Vector mixup_pair(const Vector& a, const Vector& b, double lambda);

// Draws ceil(ratio * pool rows) design points from the pool. Plain
// strategies subsample without replacement; mixup strategies combine two
// uniformly chosen parents with a fresh Uniform[0,1] weight per pair. Which
// pool to pass (teacher training data or new data) is the caller's choice;
// the strategy is recorded as provenance.
DesignSet select_design(const Matrix& pool, DesignStrategy strategy,
                        double ratio, SeededRng& rng);

}  // namespace dlf

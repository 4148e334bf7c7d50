#include "dlf/design.hpp"

#include <algorithm>
#include <cmath>

namespace dlf {

bool is_mixup(DesignStrategy s) {
    return s == DesignStrategy::TeacherTrainMixup ||
           s == DesignStrategy::NewTrainMixup;
}

const char* design_strategy_name(DesignStrategy s) {
    switch (s) {
        case DesignStrategy::TeacherTrain: return "teacher-train";
        case DesignStrategy::TeacherTrainMixup: return "teacher-mixup";
        case DesignStrategy::NewTrain: return "new-train";
        case DesignStrategy::NewTrainMixup: return "new-mixup";
    }
    return "?";
}

DesignStrategy parse_design_strategy(const std::string& name) {
    if (name == "teacher-train") return DesignStrategy::TeacherTrain;
    if (name == "teacher-mixup") return DesignStrategy::TeacherTrainMixup;
    if (name == "new-train") return DesignStrategy::NewTrain;
    if (name == "new-mixup") return DesignStrategy::NewTrainMixup;
    throw ConfigInvalid("unknown design strategy '" + name + "'");
}

Vector mixup_pair(const Vector& a, const Vector& b, double lambda) {
    if (a.size() != b.size()) {
        throw DimensionMismatch("mixup_pair: dimension mismatch");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ConfigInvalid("mixup_pair: lambda must lie in [0,1]");
    }
    return lambda * a + (1.0 - lambda) * b;
}

DesignSet select_design(const Matrix& pool, DesignStrategy strategy,
                        double ratio, SeededRng& rng) {
    const Index n = pool.rows();
    if (n == 0) throw EmptyPool("select_design: empty pool");
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw ConfigInvalid("select_design: ratio must lie in (0,1]");
    }
    const Index m = static_cast<Index>(
        std::ceil(ratio * static_cast<double>(n)));

    DesignSet out;
    out.provenance = strategy;
    out.points.resize(m, pool.cols());
    if (is_mixup(strategy)) {
        for (Index i = 0; i < m; ++i) {
            const Index a = static_cast<Index>(
                rng.uniform_int(static_cast<std::uint64_t>(n)));
            const Index b = static_cast<Index>(
                rng.uniform_int(static_cast<std::uint64_t>(n)));
            const double lambda = rng.uniform();
            out.points.row(i) =
                mixup_pair(pool.row(a).transpose(), pool.row(b).transpose(),
                           lambda)
                    .transpose();
        }
    } else {
        std::vector<Index> order(n);
        for (Index i = 0; i < n; ++i) order[i] = i;
        for (Index i = n - 1; i > 0; --i) {
            const Index j = static_cast<Index>(
                rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
            std::swap(order[i], order[j]);
        }
        for (Index i = 0; i < m; ++i) out.points.row(i) = pool.row(order[i]);
    }
    return out;
}

}  // namespace dlf

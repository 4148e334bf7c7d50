#include "dlf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dlf/network.hpp"

namespace dlf {

void validate_dataset(const Dataset& data) {
    if (data.features.rows() == 0) throw EmptyData("dataset: no rows");
    if (data.features.rows() != data.targets.size()) {
        throw DimensionMismatch("dataset: feature/target row counts differ");
    }
    if (!data.features.allFinite() || !data.targets.allFinite()) {
        throw Error("dataset: non-finite values");
    }
    if (data.task == Task::Classification) {
        if (data.n_classes < 2) {
            throw ConfigInvalid("dataset: classification needs >= 2 classes");
        }
        for (Index i = 0; i < data.targets.size(); ++i) {
            const double t = data.targets(i);
            if (t != std::floor(t) || t < 0 || t >= data.n_classes) {
                throw Error("dataset: label at row " + std::to_string(i) +
                            " is not an integer in [0, n_classes)");
            }
        }
    }
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

}  // namespace

Dataset load_csv(const std::string& path, Task task) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw EmptyFile(path + " is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    Dataset data;
    data.task = task;
    data.column_names = split_line(line);
    const std::size_t n_cols = data.column_names.size();
    if (n_cols < 2) {
        throw ParseError("need at least one feature and one target column", 1,
                         1);
    }

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != n_cols) {
            throw MissingValue("row " + std::to_string(line_no) + " has " +
                               std::to_string(cells.size()) + " cells, header has " +
                               std::to_string(n_cols));
        }
        std::vector<double> row(n_cols);
        for (std::size_t c = 0; c < n_cols; ++c) {
            try {
                std::size_t used = 0;
                row[c] = std::stod(cells[c], &used);
                while (used < cells[c].size() && std::isspace(static_cast<unsigned char>(cells[c][used]))) ++used;
                if (used != cells[c].size()) {
                    throw std::invalid_argument("trailing garbage");
                }
            } catch (const std::logic_error&) {
                throw ParseError("cannot parse '" + cells[c] + "'", line_no,
                                 c + 1);
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw EmptyFile(path + " has a header but no rows");

    const Index n = static_cast<Index>(rows.size());
    const Index d = static_cast<Index>(n_cols - 1);
    data.features.resize(n, d);
    data.targets.resize(n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < d; ++j) data.features(i, j) = rows[i][j];
        data.targets(i) = rows[i][n_cols - 1];
    }
    if (task == Task::Classification) {
        data.n_classes =
            static_cast<int>(data.targets.maxCoeff()) + 1;
    }
    validate_dataset(data);
    return data;
}

void save_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out.precision(17);
    for (std::size_t c = 0; c < data.column_names.size(); ++c) {
        if (c) out << ',';
        out << data.column_names[c];
    }
    out << '\n';
    for (Index i = 0; i < data.size(); ++i) {
        for (Index j = 0; j < data.dim(); ++j) out << data.features(i, j) << ',';
        out << data.targets(i) << '\n';
    }
}

std::pair<Dataset, Dataset> split(const Dataset& data, double ratio,
                                  std::uint64_t seed) {
    const Index n = data.size();
    if (n < 2) throw TooFewRows("split: need at least 2 rows");
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw ConfigInvalid("split: ratio must be in (0,1)");
    }
    std::vector<Index> order(n);
    for (Index i = 0; i < n; ++i) order[i] = i;
    SeededRng rng(seed);
    for (Index i = n - 1; i > 0; --i) {
        const Index j = static_cast<Index>(
            rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[i], order[j]);
    }
    Index n_train = static_cast<Index>(
        std::llround(ratio * static_cast<double>(n)));
    n_train = std::clamp<Index>(n_train, 1, n - 1);

    auto take = [&](Index begin, Index count) {
        Dataset out;
        out.task = data.task;
        out.n_classes = data.n_classes;
        out.column_names = data.column_names;
        out.features.resize(count, data.dim());
        out.targets.resize(count);
        for (Index i = 0; i < count; ++i) {
            out.features.row(i) = data.features.row(order[begin + i]);
            out.targets(i) = data.targets(order[begin + i]);
        }
        return out;
    };
    return {take(0, n_train), take(n_train, n - n_train)};
}

Standardizer Standardizer::fit(const Matrix& features, const Vector& targets,
                               bool standardize_targets) {
    if (features.rows() == 0) throw EmptyData("standardizer: no rows");
    const double n = static_cast<double>(features.rows());
    Standardizer s;
    s.feature_mean = features.colwise().mean();
    s.feature_scale.resize(features.cols());
    for (Index j = 0; j < features.cols(); ++j) {
        const double var =
            (features.col(j).array() - s.feature_mean(j)).square().sum() / n;
        const double sd = std::sqrt(var);
        s.feature_scale(j) = sd > 1e-12 ? sd : 1.0;
    }
    if (standardize_targets) {
        if (targets.size() != features.rows()) {
            throw DimensionMismatch("standardizer: target length mismatch");
        }
        s.target_mean = targets.mean();
        const double var =
            (targets.array() - s.target_mean).square().sum() / n;
        const double sd = std::sqrt(var);
        s.target_scale = sd > 1e-12 ? sd : 1.0;
    }
    return s;
}

Matrix Standardizer::transform_features(const Matrix& x) const {
    if (x.cols() != feature_mean.size()) {
        throw DimensionMismatch("standardizer: feature dimension mismatch");
    }
    return (x.rowwise() - feature_mean.transpose()).array().rowwise() /
           feature_scale.transpose().array();
}

Vector Standardizer::transform_targets(const Vector& y) const {
    return (y.array() - target_mean) / target_scale;
}

Vector Standardizer::inverse_targets(const Vector& y_std) const {
    return (y_std.array() * target_scale + target_mean).matrix();
}

SynthResult gen_synth(const SynthConfig& cfg, std::uint64_t seed) {
    SeededRng root(seed);
    SynthResult out;
    out.truth.kind = cfg.kind;
    switch (cfg.kind) {
        case SynthKind::LinearRegression: {
            if (cfg.n < 1 || cfg.dim < 1 || cfg.noise_sd < 0.0) {
                throw InvalidParams("gen_synth: bad linear-regression params");
            }
            SeededRng coef = root.stream("coefficients");
            out.truth.slope = sample_std_normal(coef, cfg.dim, 1).col(0);
            out.truth.intercept = coef.normal();
            out.truth.noise_sd = cfg.noise_sd;
            SeededRng xs = root.stream("features");
            out.data.features = sample_std_normal(xs, cfg.n, cfg.dim);
            SeededRng eps = root.stream("noise");
            out.data.targets =
                out.data.features * out.truth.slope +
                Vector::Constant(cfg.n, out.truth.intercept) +
                cfg.noise_sd * sample_std_normal(eps, cfg.n, 1).col(0);
            out.data.task = Task::Regression;
            for (Index j = 0; j < cfg.dim; ++j) {
                out.data.column_names.push_back("x" + std::to_string(j));
            }
            out.data.column_names.push_back("y");
            break;
        }
        case SynthKind::DlfGp: {
            if (cfg.m < 1 || cfg.q < 1 || cfg.n_realizations < 1 ||
                cfg.dim < 1 || !(cfg.jitter > 0.0)) {
                throw InvalidParams("gen_synth: bad dlf-gp params");
            }
            SeededRng xs = root.stream("design");
            out.truth.design = sample_std_normal(xs, cfg.m, cfg.dim);
            NetworkSpec truth_spec{cfg.dim, {16, 16},
                                   cfg.q + 1, Activation::Tanh};
            SeededRng net = root.stream("truth-net");
            const NetworkParams truth_params = init_params(truth_spec, net);
            const Matrix heads =
                forward_batch(truth_spec, truth_params, out.truth.design);
            out.truth.mu = heads.col(0);
            out.truth.phi = heads.rightCols(cfg.q);
            out.truth.jitter = cfg.jitter;
            SeededRng zs = root.stream("latents");
            const Matrix z = sample_std_normal(zs, cfg.q, cfg.n_realizations);
            SeededRng eps = root.stream("noise");
            out.truth.realizations =
                out.truth.mu * Matrix::Ones(1, cfg.n_realizations) +
                out.truth.phi * z +
                std::sqrt(cfg.jitter) *
                    sample_std_normal(eps, cfg.m, cfg.n_realizations);
            out.data.features = out.truth.design;
            out.data.targets = out.truth.realizations.rowwise().mean();
            out.data.task = Task::Regression;
            for (Index j = 0; j < cfg.dim; ++j) {
                out.data.column_names.push_back("x" + std::to_string(j));
            }
            out.data.column_names.push_back("f_mean");
            break;
        }
        case SynthKind::Blobs:
        case SynthKind::FlipBlobs: {
            if (cfg.n < 1 || cfg.n_classes < 2 || !(cfg.blob_std > 0.0) ||
                cfg.radius < 0.0) {
                throw InvalidParams("gen_synth: bad blobs params");
            }
            out.truth.centers.resize(cfg.n_classes, 2);
            for (int k = 0; k < cfg.n_classes; ++k) {
                const double a =
                    2.0 * std::numbers::pi * k / cfg.n_classes;
                out.truth.centers(k, 0) = cfg.radius * std::cos(a);
                out.truth.centers(k, 1) = cfg.radius * std::sin(a);
            }
            out.truth.blob_std = cfg.blob_std;
            SeededRng gen = root.stream("blobs");
            out.data.features.resize(cfg.n, 2);
            out.data.targets.resize(cfg.n);
            for (Index i = 0; i < cfg.n; ++i) {
                const int k = static_cast<int>(
                    gen.uniform_int(static_cast<std::uint64_t>(cfg.n_classes)));
                out.data.features(i, 0) =
                    out.truth.centers(k, 0) + cfg.blob_std * gen.normal();
                out.data.features(i, 1) =
                    out.truth.centers(k, 1) + cfg.blob_std * gen.normal();
                out.data.targets(i) = k;
            }
            if (cfg.kind == SynthKind::FlipBlobs) {
                out.data.targets =
                    Vector::Constant(cfg.n, cfg.n_classes - 1) -
                    out.data.targets;
            }
            out.data.task = Task::Classification;
            out.data.n_classes = cfg.n_classes;
            out.data.column_names = {"x0", "x1", "label"};
            break;
        }
    }
    validate_dataset(out.data);
    return out;
}

}  // namespace dlf

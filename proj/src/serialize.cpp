#include "dlf/serialize.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

namespace dlf {

namespace {

double checked(double x, const std::string& where) {
    if (!std::isfinite(x)) {
        throw ConfigInvalid("serialize: non-finite value in " + where);
    }
    return x;
}

Json vec_to_json(const Vector& v, const std::string& where) {
    Json arr = Json::array();
    for (Index i = 0; i < v.size(); ++i) arr.push_back(checked(v(i), where));
    return arr;
}

Json vec_to_json(const std::vector<double>& v, const std::string& where) {
    Json arr = Json::array();
    for (double x : v) arr.push_back(checked(x, where));
    return arr;
}

// Matrices are stored as arrays of row arrays.
Json mat_to_json(const Matrix& a, const std::string& where) {
    Json rows = Json::array();
    for (Index r = 0; r < a.rows(); ++r) {
        Json row = Json::array();
        for (Index c = 0; c < a.cols(); ++c) {
            row.push_back(checked(a(r, c), where));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string describe(const char* record, const char* key) {
    return std::string(record) + " record: field '" + key + "'";
}

const Json& field(const Json& j, const char* key, const char* record) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw ConfigInvalid(std::string(record) + " record: missing field '" +
                            key + "'");
    }
    return *it;
}

double json_double(const Json& v, const std::string& where) {
    if (!v.is_number()) throw ConfigInvalid(where + " must be a number");
    return v.get<double>();
}

double get_double(const Json& j, const char* key, const char* record) {
    return json_double(field(j, key, record), describe(record, key));
}

long long get_int(const Json& j, const char* key, const char* record) {
    const Json& v = field(j, key, record);
    if (!v.is_number_integer()) {
        throw ConfigInvalid(describe(record, key) + " must be an integer");
    }
    return v.get<long long>();
}

std::string get_string(const Json& j, const char* key, const char* record) {
    const Json& v = field(j, key, record);
    if (!v.is_string()) {
        throw ConfigInvalid(describe(record, key) + " must be a string");
    }
    return v.get<std::string>();
}

Vector json_vector(const Json& v, const std::string& where) {
    if (!v.is_array()) throw ConfigInvalid(where + " must be an array");
    Vector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (const Json& x : v) out(i++) = json_double(x, where);
    return out;
}

Vector get_vector(const Json& j, const char* key, const char* record) {
    return json_vector(field(j, key, record), describe(record, key));
}

Matrix get_matrix(const Json& j, const char* key, const char* record) {
    const std::string where = describe(record, key);
    const Json& v = field(j, key, record);
    if (!v.is_array()) throw ConfigInvalid(where + " must be an array of rows");
    const Index rows = static_cast<Index>(v.size());
    if (rows == 0) return Matrix(0, 0);
    if (!v[0].is_array()) {
        throw ConfigInvalid(where + " must be an array of rows");
    }
    const Index cols = static_cast<Index>(v[0].size());
    Matrix out(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        const Json& row = v[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
            throw ConfigInvalid(where + " must be rectangular");
        }
        for (Index c = 0; c < cols; ++c) {
            out(r, c) = json_double(row[static_cast<std::size_t>(c)], where);
        }
    }
    return out;
}

void require_record(const Json& j, const char* kind) {
    if (!j.is_object()) {
        throw ConfigInvalid(std::string(kind) +
                            " record: not a JSON object");
    }
    const std::string found = get_string(j, "kind", kind);
    if (found != kind) {
        throw ConfigInvalid(std::string(kind) + " record: kind is '" + found +
                            "'");
    }
    const long long format = get_int(j, "format", kind);
    if (format != kFormatVersion) {
        throw ConfigInvalid(std::string(kind) + " record: format " +
                            std::to_string(format) + " unsupported (this " +
                            "build reads format " +
                            std::to_string(kFormatVersion) + ")");
    }
}

Json design_to_json(const DesignSet& design) {
    Json j;
    j["strategy"] = design_strategy_name(design.provenance);
    j["points"] = mat_to_json(design.points, "design points");
    return j;
}

DesignSet design_from_json(const Json& j, const char* record) {
    DesignSet design;
    design.provenance =
        parse_design_strategy(get_string(j, "strategy", record));
    design.points = get_matrix(j, "points", record);
    return design;
}

Json noise_to_json(const InverseGammaParams& noise) {
    validate_inverse_gamma(noise);
    Json j;
    j["shape"] = noise.shape;
    j["scale"] = noise.scale;
    return j;
}

InverseGammaParams noise_from_json(const Json& j, const char* record) {
    InverseGammaParams noise;
    noise.shape = get_double(j, "shape", record);
    noise.scale = get_double(j, "scale", record);
    validate_inverse_gamma(noise);
    return noise;
}

// Fields shared by the univariate and multivariate student records.
void put_model_body(Json& j, const NetworkSpec& spec,
                    const NetworkParams& params, double log_jitter,
                    const DesignSet& design, const Standardizer& standardizer) {
    j["spec"] = spec_to_json(spec);
    j["theta"] = vec_to_json(pack_params(spec, params), "theta");
    j["log_jitter"] = checked(log_jitter, "log_jitter");
    j["design"] = design_to_json(design);
    j["standardizer"] = standardizer_to_json(standardizer);
}

std::string format_g6(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

}  // namespace

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

void save_json(const std::string& path, const Json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << dump_json(j);
    if (!out) throw IoError("failed while writing '" + path + "'");
}

Json load_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return Json::parse(buf.str());
    } catch (const Json::parse_error& e) {
        throw IoError("'" + path + "': " + e.what());
    }
}

std::string content_hash(const Json& j) {
    const std::string text = dump_json(j);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(h));
    return buf;
}

const char* task_name(Task task) {
    return task == Task::Regression ? "regression" : "classification";
}

Task parse_task(const std::string& name) {
    if (name == "regression") return Task::Regression;
    if (name == "classification") return Task::Classification;
    throw ConfigInvalid("unknown task '" + name + "'");
}

const char* activation_name(Activation a) {
    return a == Activation::ReLU ? "relu" : "tanh";
}

Activation parse_activation(const std::string& name) {
    if (name == "relu") return Activation::ReLU;
    if (name == "tanh") return Activation::Tanh;
    throw ConfigInvalid("unknown activation '" + name + "'");
}

const char* synth_kind_name(SynthKind kind) {
    switch (kind) {
        case SynthKind::LinearRegression: return "linear";
        case SynthKind::DlfGp: return "dlf-gp";
        case SynthKind::Blobs: return "blobs";
        case SynthKind::FlipBlobs: return "flip-blobs";
    }
    return "?";
}

SynthKind parse_synth_kind(const std::string& name) {
    if (name == "linear") return SynthKind::LinearRegression;
    if (name == "dlf-gp") return SynthKind::DlfGp;
    if (name == "blobs") return SynthKind::Blobs;
    if (name == "flip-blobs") return SynthKind::FlipBlobs;
    throw ConfigInvalid("unknown synthetic kind '" + name + "'");
}

const char* em_mode_name(EmMode mode) {
    return mode == EmMode::MiniBatch ? "minibatch" : "fullbatch";
}

EmMode parse_em_mode(const std::string& name) {
    if (name == "minibatch") return EmMode::MiniBatch;
    if (name == "fullbatch") return EmMode::FullBatch;
    throw ConfigInvalid("unknown em mode '" + name + "'");
}

Vector pack_params(const NetworkSpec& spec, const NetworkParams& params) {
    validate_params(spec, params);
    Index total = 0;
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        total += params.weights[l].size() + params.biases[l].size();
    }
    Vector theta(total);
    Index k = 0;
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        const Matrix& w = params.weights[l];
        for (Index r = 0; r < w.rows(); ++r) {
            for (Index c = 0; c < w.cols(); ++c) theta(k++) = w(r, c);
        }
        const Vector& b = params.biases[l];
        for (Index i = 0; i < b.size(); ++i) theta(k++) = b(i);
    }
    return theta;
}

NetworkParams unpack_params(const NetworkSpec& spec, const Vector& theta) {
    validate_spec(spec);
    const std::vector<Index> dims = spec.layer_dims();
    Index total = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        total += dims[l + 1] * dims[l] + dims[l + 1];
    }
    if (theta.size() != total) {
        throw DimensionMismatch("unpack_params: theta has " +
                                std::to_string(theta.size()) +
                                " entries, layout needs " +
                                std::to_string(total));
    }
    NetworkParams params;
    Index k = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Matrix w(dims[l + 1], dims[l]);
        for (Index r = 0; r < w.rows(); ++r) {
            for (Index c = 0; c < w.cols(); ++c) w(r, c) = theta(k++);
        }
        Vector b(dims[l + 1]);
        for (Index i = 0; i < b.size(); ++i) b(i) = theta(k++);
        params.weights.push_back(std::move(w));
        params.biases.push_back(std::move(b));
    }
    return params;
}

Json spec_to_json(const NetworkSpec& spec) {
    Json j;
    j["input_dim"] = spec.input_dim;
    j["hidden_layers"] = spec.hidden_layers;
    j["output_dim"] = spec.output_dim;
    j["activation"] = activation_name(spec.activation);
    j["output_clip"] = checked(spec.output_clip, "output_clip");
    return j;
}

NetworkSpec spec_from_json(const Json& j) {
    const char* record = "network spec";
    NetworkSpec spec;
    spec.input_dim = get_int(j, "input_dim", record);
    const Json& hidden = field(j, "hidden_layers", record);
    if (!hidden.is_array()) {
        throw ConfigInvalid(describe(record, "hidden_layers") +
                            " must be an array");
    }
    for (const Json& h : hidden) {
        if (!h.is_number_integer()) {
            throw ConfigInvalid(describe(record, "hidden_layers") +
                                " must hold integers");
        }
        spec.hidden_layers.push_back(h.get<long long>());
    }
    spec.output_dim = get_int(j, "output_dim", record);
    spec.activation = parse_activation(get_string(j, "activation", record));
    spec.output_clip = get_double(j, "output_clip", record);
    validate_spec(spec);
    return spec;
}

Json standardizer_to_json(const Standardizer& s) {
    Json j;
    j["feature_mean"] = vec_to_json(s.feature_mean, "feature_mean");
    j["feature_scale"] = vec_to_json(s.feature_scale, "feature_scale");
    j["target_mean"] = checked(s.target_mean, "target_mean");
    j["target_scale"] = checked(s.target_scale, "target_scale");
    return j;
}

Standardizer standardizer_from_json(const Json& j) {
    const char* record = "standardizer";
    Standardizer s;
    s.feature_mean = get_vector(j, "feature_mean", record);
    s.feature_scale = get_vector(j, "feature_scale", record);
    s.target_mean = get_double(j, "target_mean", record);
    s.target_scale = get_double(j, "target_scale", record);
    if (s.feature_mean.size() != s.feature_scale.size()) {
        throw DimensionMismatch(
            "standardizer record: feature_mean and feature_scale lengths "
            "differ");
    }
    return s;
}

Json teacher_to_json(const TeacherEnsemble& ensemble) {
    if (ensemble.members.empty()) {
        throw EmptyData("teacher ensemble has no members");
    }
    Json j;
    j["kind"] = "teacher-ensemble";
    j["format"] = kFormatVersion;
    j["task"] = task_name(ensemble.task);
    j["n_classes"] = ensemble.n_classes;
    j["spec"] = spec_to_json(ensemble.spec);
    Json members = Json::array();
    for (const NetworkParams& m : ensemble.members) {
        members.push_back(
            vec_to_json(pack_params(ensemble.spec, m), "member weights"));
    }
    j["members"] = std::move(members);
    j["noise_vars"] = vec_to_json(ensemble.noise_vars, "noise_vars");
    j["standardizer"] = standardizer_to_json(ensemble.standardizer);
    return j;
}

TeacherEnsemble teacher_from_json(const Json& j) {
    const char* record = "teacher-ensemble";
    require_record(j, record);
    TeacherEnsemble ensemble;
    ensemble.task = parse_task(get_string(j, "task", record));
    ensemble.n_classes = static_cast<int>(get_int(j, "n_classes", record));
    ensemble.spec = spec_from_json(field(j, "spec", record));
    const Json& members = field(j, "members", record);
    if (!members.is_array() || members.empty()) {
        throw ConfigInvalid(describe(record, "members") +
                            " must be a non-empty array");
    }
    for (const Json& m : members) {
        ensemble.members.push_back(unpack_params(
            ensemble.spec, json_vector(m, describe(record, "members"))));
    }
    ensemble.noise_vars = get_vector(j, "noise_vars", record);
    ensemble.standardizer =
        standardizer_from_json(field(j, "standardizer", record));
    const Index expected_noise =
        ensemble.task == Task::Regression
            ? static_cast<Index>(ensemble.members.size())
            : 0;
    if (ensemble.noise_vars.size() != expected_noise) {
        throw DimensionMismatch(describe(record, "noise_vars") + " has " +
                                std::to_string(ensemble.noise_vars.size()) +
                                " entries, expected " +
                                std::to_string(expected_noise));
    }
    if (ensemble.task == Task::Classification && ensemble.n_classes < 2) {
        throw ConfigInvalid(describe(record, "n_classes") +
                            " must be >= 2 for classification");
    }
    return ensemble;
}

Json model_to_json(const DlfModel& model,
                   const std::optional<InverseGammaParams>& noise) {
    validate_model(model);
    Json j;
    j["kind"] = "dlf-univariate";
    j["format"] = kFormatVersion;
    j["q"] = model.q;
    put_model_body(j, model.spec, model.params, model.log_jitter, model.design,
                   model.standardizer);
    if (noise) j["noise"] = noise_to_json(*noise);
    return j;
}

DlfModel model_from_json(const Json& j,
                         std::optional<InverseGammaParams>* noise) {
    const char* record = "dlf-univariate";
    require_record(j, record);
    DlfModel model;
    model.q = get_int(j, "q", record);
    model.spec = spec_from_json(field(j, "spec", record));
    model.params = unpack_params(model.spec, get_vector(j, "theta", record));
    model.log_jitter = get_double(j, "log_jitter", record);
    model.design = design_from_json(field(j, "design", record), record);
    model.standardizer =
        standardizer_from_json(field(j, "standardizer", record));
    validate_model(model);
    if (noise) {
        *noise = j.contains("noise")
                     ? std::optional<InverseGammaParams>(
                           noise_from_json(j["noise"], record))
                     : std::nullopt;
    }
    return model;
}

Json multi_model_to_json(const MultiDlfModel& model) {
    validate_multi_model(model);
    Json j;
    j["kind"] = "dlf-multivariate";
    j["format"] = kFormatVersion;
    j["n_classes"] = model.n_classes;
    j["q"] = model.q;
    put_model_body(j, model.spec, model.params, model.log_jitter, model.design,
                   model.standardizer);
    // Lower triangle of the unconstrained factor, row by row; the strict
    // upper triangle is structurally zero so it is not stored.
    Json lower = Json::array();
    for (int r = 0; r < model.n_classes; ++r) {
        for (int c = 0; c <= r; ++c) {
            lower.push_back(checked(model.l_raw(r, c), "l_raw"));
        }
    }
    j["l_raw_lower"] = std::move(lower);
    return j;
}

MultiDlfModel multi_model_from_json(const Json& j) {
    const char* record = "dlf-multivariate";
    require_record(j, record);
    MultiDlfModel model;
    model.n_classes = static_cast<int>(get_int(j, "n_classes", record));
    model.q = get_int(j, "q", record);
    model.spec = spec_from_json(field(j, "spec", record));
    model.params = unpack_params(model.spec, get_vector(j, "theta", record));
    model.log_jitter = get_double(j, "log_jitter", record);
    model.design = design_from_json(field(j, "design", record), record);
    model.standardizer =
        standardizer_from_json(field(j, "standardizer", record));
    const Vector lower = get_vector(j, "l_raw_lower", record);
    const Index c = model.n_classes;
    if (c < 1 || lower.size() != c * (c + 1) / 2) {
        throw DimensionMismatch(describe(record, "l_raw_lower") + " has " +
                                std::to_string(lower.size()) +
                                " entries, expected " +
                                std::to_string(c * (c + 1) / 2));
    }
    model.l_raw = Matrix::Zero(c, c);
    Index k = 0;
    for (Index r = 0; r < c; ++r) {
        for (Index col = 0; col <= r; ++col) model.l_raw(r, col) = lower(k++);
    }
    validate_multi_model(model);
    return model;
}

Json head_to_json(const AdaptedHead& head) {
    if (head.body == nullptr) {
        throw ConfigInvalid("adapted head has no body model");
    }
    if (head.w.rows() != head.body->n_classes ||
        head.w.cols() != head.body->q) {
        throw DimensionMismatch("adapted head: W must be c x q");
    }
    Json j;
    j["kind"] = "adapted-head";
    j["format"] = kFormatVersion;
    j["body_hash"] = content_hash(multi_model_to_json(*head.body));
    j["w"] = mat_to_json(head.w, "w");
    return j;
}

AdaptedHead head_from_json(const Json& j, const MultiDlfModel& body) {
    const char* record = "adapted-head";
    require_record(j, record);
    const std::string stored = get_string(j, "body_hash", record);
    const std::string actual = content_hash(multi_model_to_json(body));
    if (stored != actual) {
        throw ConfigInvalid("adapted-head record: body hash " + stored +
                            " does not match the supplied body (" + actual +
                            ")");
    }
    AdaptedHead head;
    head.body = &body;
    head.w = get_matrix(j, "w", record);
    if (head.w.rows() != body.n_classes || head.w.cols() != body.q) {
        throw DimensionMismatch(describe(record, "w") + " must be c x q");
    }
    return head;
}

Json report_to_json(const MetricReport& report) {
    Json j;
    j["kind"] = "metric-report";
    j["format"] = kFormatVersion;
    j["task"] = task_name(report.task);
    j["n_test"] = report.n_test;
    j["rmse"] = vec_to_json(report.rmse.per_seed, "rmse");
    j["nll"] = vec_to_json(report.nll.per_seed, "nll");
    j["crps"] = vec_to_json(report.crps.per_seed, "crps");
    j["coverage95"] = vec_to_json(report.coverage95.per_seed, "coverage95");
    j["acc"] = vec_to_json(report.acc.per_seed, "acc");
    j["ece"] = vec_to_json(report.ece.per_seed, "ece");
    return j;
}

namespace {

std::vector<double> seed_list(const Json& j, const char* key,
                              const char* record) {
    const Vector v = get_vector(j, key, record);
    return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

MetricReport report_from_json(const Json& j) {
    const char* record = "metric-report";
    require_record(j, record);
    MetricReport report;
    report.task = parse_task(get_string(j, "task", record));
    report.n_test = get_int(j, "n_test", record);
    report.rmse.per_seed = seed_list(j, "rmse", record);
    report.nll.per_seed = seed_list(j, "nll", record);
    report.crps.per_seed = seed_list(j, "crps", record);
    report.coverage95.per_seed = seed_list(j, "coverage95", record);
    report.acc.per_seed = seed_list(j, "acc", record);
    report.ece.per_seed = seed_list(j, "ece", record);
    return report;
}

std::string report_csv(const MetricReport& report) {
    const std::pair<const char*, const MetricSummary*> rows[] = {
        {"rmse", &report.rmse},           {"nll", &report.nll},
        {"crps", &report.crps},           {"coverage95", &report.coverage95},
        {"acc", &report.acc},             {"ece", &report.ece},
    };
    std::string out = "metric,mean,stderr,seeds\n";
    for (const auto& [name, summary] : rows) {
        if (summary->per_seed.empty()) continue;
        out += std::string(name) + "," + format_g6(summary->mean()) + "," +
               format_g6(summary->standard_error()) + "," +
               std::to_string(summary->per_seed.size()) + "\n";
    }
    return out;
}

Json ood_report_to_json(const OodReport& report) {
    Json j;
    j["kind"] = "ood-report";
    j["format"] = kFormatVersion;
    j["samples"] = report.samples;
    j["auroc"] = checked(report.auroc, "auroc");
    j["mi_in"] = vec_to_json(report.mi_in, "mi_in");
    j["mi_out"] = vec_to_json(report.mi_out, "mi_out");
    return j;
}

OodReport ood_report_from_json(const Json& j) {
    const char* record = "ood-report";
    require_record(j, record);
    OodReport report;
    report.samples = get_int(j, "samples", record);
    report.auroc = get_double(j, "auroc", record);
    report.mi_in = get_vector(j, "mi_in", record);
    report.mi_out = get_vector(j, "mi_out", record);
    return report;
}

}  // namespace dlf

#include "dlf/pipeline.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <utility>

namespace dlf {

namespace {

template <typename F>
auto run_stage(const char* name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(name, e.what());
    }
}

void check_keys(const Json& j, const char* where,
                std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* key : allowed) {
            if (it.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigInvalid(std::string("config: unknown key '") + where +
                                it.key() + "'");
        }
    }
}

std::string label(const char* where, const char* key) {
    return std::string("config: '") + where + key + "'";
}

void read_double(const Json& j, const char* where, const char* key,
                 double& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number()) {
        throw ConfigInvalid(label(where, key) + " must be a number");
    }
    out = it->get<double>();
}

void read_index(const Json& j, const char* where, const char* key,
                Index& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number_integer()) {
        throw ConfigInvalid(label(where, key) + " must be an integer");
    }
    out = it->get<long long>();
}

void read_int(const Json& j, const char* where, const char* key, int& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number_integer()) {
        throw ConfigInvalid(label(where, key) + " must be an integer");
    }
    out = static_cast<int>(it->get<long long>());
}

void read_bool(const Json& j, const char* where, const char* key, bool& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_boolean()) {
        throw ConfigInvalid(label(where, key) + " must be a boolean");
    }
    out = it->get<bool>();
}

void read_string(const Json& j, const char* where, const char* key,
                 std::string& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_string()) {
        throw ConfigInvalid(label(where, key) + " must be a string");
    }
    out = it->get<std::string>();
}

void read_widths(const Json& j, const char* where, const char* key,
                 std::vector<Index>& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_array()) {
        throw ConfigInvalid(label(where, key) +
                            " must be an array of integers");
    }
    out.clear();
    for (const Json& v : *it) {
        if (!v.is_number_integer()) {
            throw ConfigInvalid(label(where, key) +
                                " must be an array of integers");
        }
        out.push_back(v.get<long long>());
    }
}

Json json_vec(const Vector& v) {
    Json arr = Json::array();
    for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Json json_rows(const Matrix& a) {
    Json rows = Json::array();
    for (Index r = 0; r < a.rows(); ++r) {
        Json row = Json::array();
        for (Index c = 0; c < a.cols(); ++c) row.push_back(a(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("failed while writing '" + path + "'");
}

void append_summary(MetricSummary& dst, const MetricSummary& src) {
    dst.per_seed.insert(dst.per_seed.end(), src.per_seed.begin(),
                        src.per_seed.end());
}

}  // namespace

Json config_to_json(const ExperimentConfig& cfg) {
    Json j;
    j["task"] = task_name(cfg.task);
    j["data_csv"] = cfg.data_csv;
    Json synth;
    synth["kind"] = synth_kind_name(cfg.synth.kind);
    synth["n"] = cfg.synth.n;
    synth["dim"] = cfg.synth.dim;
    synth["noise_sd"] = cfg.synth.noise_sd;
    synth["m"] = cfg.synth.m;
    synth["q"] = cfg.synth.q;
    synth["n_realizations"] = cfg.synth.n_realizations;
    synth["jitter"] = cfg.synth.jitter;
    synth["n_classes"] = cfg.synth.n_classes;
    synth["radius"] = cfg.synth.radius;
    synth["blob_std"] = cfg.synth.blob_std;
    j["synth"] = std::move(synth);
    j["train_ratio"] = cfg.train_ratio;
    Json teacher;
    teacher["hidden"] = cfg.teacher_hidden;
    teacher["activation"] = activation_name(cfg.teacher_activation);
    teacher["members"] = cfg.teacher_members;
    teacher["epochs"] = cfg.teacher_epochs;
    teacher["lr"] = cfg.teacher_lr;
    teacher["batch_size"] = cfg.teacher_batch;
    j["teacher"] = std::move(teacher);
    Json student;
    student["hidden"] = cfg.student_hidden;
    student["activation"] = activation_name(cfg.student_activation);
    student["q"] = cfg.q;
    j["student"] = std::move(student);
    j["init"] = cfg.mmd_init ? "mmd" : "random";
    Json pretrain;
    pretrain["lambda"] = cfg.pretrain.lambda;
    pretrain["epochs"] = cfg.pretrain.epochs;
    pretrain["lr"] = cfg.pretrain.lr;
    j["pretrain"] = std::move(pretrain);
    Json em;
    em["mode"] = em_mode_name(cfg.em.mode);
    em["batch_size"] = cfg.em.batch_size;
    em["epochs"] = cfg.em.epochs;
    em["lr"] = cfg.em.lr;
    em["tol"] = cfg.em.tol;
    em["gem_guard"] = cfg.em.gem_guard;
    j["em"] = std::move(em);
    Json design;
    design["strategy"] = design_strategy_name(cfg.design);
    design["ratio"] = cfg.design_ratio;
    j["design"] = std::move(design);
    Json eval;
    eval["samples"] = cfg.eval_samples;
    eval["include_jitter"] = cfg.include_jitter;
    eval["csv"] = cfg.write_csv;
    j["eval"] = std::move(eval);
    j["seeds"] = cfg.seeds;
    j["out_dir"] = cfg.out_dir;
    return j;
}

ExperimentConfig config_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigInvalid("config: not a JSON object");
    check_keys(j, "",
               {"task", "data_csv", "synth", "train_ratio", "teacher",
                "student", "init", "pretrain", "em", "design", "eval",
                "seeds", "out_dir"});
    ExperimentConfig cfg;
    std::string name;
    read_string(j, "", "task", name);
    if (!name.empty()) cfg.task = parse_task(name);
    read_string(j, "", "data_csv", cfg.data_csv);
    read_double(j, "", "train_ratio", cfg.train_ratio);
    read_string(j, "", "out_dir", cfg.out_dir);

    if (j.contains("synth")) {
        const Json& s = j["synth"];
        check_keys(s, "synth.",
                   {"kind", "n", "dim", "noise_sd", "m", "q",
                    "n_realizations", "jitter", "n_classes", "radius",
                    "blob_std"});
        name.clear();
        read_string(s, "synth.", "kind", name);
        if (!name.empty()) cfg.synth.kind = parse_synth_kind(name);
        read_index(s, "synth.", "n", cfg.synth.n);
        read_index(s, "synth.", "dim", cfg.synth.dim);
        read_double(s, "synth.", "noise_sd", cfg.synth.noise_sd);
        read_index(s, "synth.", "m", cfg.synth.m);
        read_index(s, "synth.", "q", cfg.synth.q);
        read_index(s, "synth.", "n_realizations", cfg.synth.n_realizations);
        read_double(s, "synth.", "jitter", cfg.synth.jitter);
        read_int(s, "synth.", "n_classes", cfg.synth.n_classes);
        read_double(s, "synth.", "radius", cfg.synth.radius);
        read_double(s, "synth.", "blob_std", cfg.synth.blob_std);
    }
    if (j.contains("teacher")) {
        const Json& t = j["teacher"];
        check_keys(t, "teacher.",
                   {"hidden", "activation", "members", "epochs", "lr",
                    "batch_size"});
        read_widths(t, "teacher.", "hidden", cfg.teacher_hidden);
        name.clear();
        read_string(t, "teacher.", "activation", name);
        if (!name.empty()) cfg.teacher_activation = parse_activation(name);
        read_int(t, "teacher.", "members", cfg.teacher_members);
        read_int(t, "teacher.", "epochs", cfg.teacher_epochs);
        read_double(t, "teacher.", "lr", cfg.teacher_lr);
        read_index(t, "teacher.", "batch_size", cfg.teacher_batch);
    }
    if (j.contains("student")) {
        const Json& s = j["student"];
        check_keys(s, "student.", {"hidden", "activation", "q"});
        read_widths(s, "student.", "hidden", cfg.student_hidden);
        name.clear();
        read_string(s, "student.", "activation", name);
        if (!name.empty()) cfg.student_activation = parse_activation(name);
        read_index(s, "student.", "q", cfg.q);
    }
    name.clear();
    read_string(j, "", "init", name);
    if (!name.empty()) {
        if (name != "mmd" && name != "random") {
            throw ConfigInvalid("config: 'init' must be 'mmd' or 'random'");
        }
        cfg.mmd_init = name == "mmd";
    }
    if (j.contains("pretrain")) {
        const Json& p = j["pretrain"];
        check_keys(p, "pretrain.", {"lambda", "epochs", "lr"});
        read_double(p, "pretrain.", "lambda", cfg.pretrain.lambda);
        read_int(p, "pretrain.", "epochs", cfg.pretrain.epochs);
        read_double(p, "pretrain.", "lr", cfg.pretrain.lr);
    }
    if (j.contains("em")) {
        const Json& e = j["em"];
        check_keys(e, "em.",
                   {"mode", "batch_size", "epochs", "lr", "tol", "gem_guard"});
        name.clear();
        read_string(e, "em.", "mode", name);
        if (!name.empty()) cfg.em.mode = parse_em_mode(name);
        read_index(e, "em.", "batch_size", cfg.em.batch_size);
        read_int(e, "em.", "epochs", cfg.em.epochs);
        read_double(e, "em.", "lr", cfg.em.lr);
        read_double(e, "em.", "tol", cfg.em.tol);
        read_bool(e, "em.", "gem_guard", cfg.em.gem_guard);
    }
    if (j.contains("design")) {
        const Json& d = j["design"];
        check_keys(d, "design.", {"strategy", "ratio"});
        name.clear();
        read_string(d, "design.", "strategy", name);
        if (!name.empty()) cfg.design = parse_design_strategy(name);
        read_double(d, "design.", "ratio", cfg.design_ratio);
    }
    if (j.contains("eval")) {
        const Json& e = j["eval"];
        check_keys(e, "eval.", {"samples", "include_jitter", "csv"});
        read_index(e, "eval.", "samples", cfg.eval_samples);
        read_bool(e, "eval.", "include_jitter", cfg.include_jitter);
        read_bool(e, "eval.", "csv", cfg.write_csv);
    }
    if (j.contains("seeds")) {
        const Json& s = j["seeds"];
        if (!s.is_array() || s.empty()) {
            throw ConfigInvalid(
                "config: 'seeds' must be a non-empty array of integers");
        }
        cfg.seeds.clear();
        for (const Json& v : s) {
            if (!v.is_number_integer() || v.get<long long>() < 0) {
                throw ConfigInvalid(
                    "config: 'seeds' must hold non-negative integers");
            }
            cfg.seeds.push_back(v.get<std::uint64_t>());
        }
    }
    return cfg;
}

std::string resolve_out_dir(const ExperimentConfig& cfg) {
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    if (const char* env = std::getenv("DLF_OUT_DIR"); env && *env) {
        return env;
    }
    return ".";
}

Json synth_truth_to_json(const SynthTruth& truth) {
    Json j;
    j["kind"] = "synth-truth";
    j["format"] = kFormatVersion;
    j["synth_kind"] = synth_kind_name(truth.kind);
    switch (truth.kind) {
        case SynthKind::LinearRegression:
            j["slope"] = json_vec(truth.slope);
            j["intercept"] = truth.intercept;
            j["noise_sd"] = truth.noise_sd;
            break;
        case SynthKind::DlfGp:
            j["design"] = json_rows(truth.design);
            j["mu"] = json_vec(truth.mu);
            j["phi"] = json_rows(truth.phi);
            j["jitter"] = truth.jitter;
            j["realizations"] = json_rows(truth.realizations);
            break;
        case SynthKind::Blobs:
        case SynthKind::FlipBlobs:
            j["centers"] = json_rows(truth.centers);
            j["blob_std"] = truth.blob_std;
            break;
    }
    return j;
}

DistillResult distill_student(const ExperimentConfig& cfg,
                              const TeacherEnsemble& teachers,
                              const Matrix& raw_pool, std::uint64_t seed) {
    DistillResult out;
    const SeededRng root(seed);

    const DesignSet design = run_stage("select-design", [&] {
        if (raw_pool.rows() < 1) {
            throw EmptyPool("design pool is empty");
        }
        if (raw_pool.cols() != teachers.spec.input_dim) {
            throw DimensionMismatch(
                "design pool has " + std::to_string(raw_pool.cols()) +
                " columns, teachers expect " +
                std::to_string(teachers.spec.input_dim));
        }
        const Matrix pool =
            teachers.standardizer.transform_features(raw_pool);
        SeededRng rng = root.stream("design");
        return select_design(pool, cfg.design, cfg.design_ratio, rng);
    });

    const PredictionMatrix pred = run_stage(
        "teacher-predict", [&] { return prediction_matrix(teachers, design); });

    NetworkSpec spec;
    spec.input_dim = teachers.spec.input_dim;
    spec.hidden_layers = cfg.student_hidden;
    spec.activation = cfg.student_activation;

    if (teachers.task == Task::Regression) {
        spec.output_dim = cfg.q + 1;
        run_stage("init-student", [&] {
            SeededRng rng = root.stream("student-init");
            out.model = init_dlf_model(spec, cfg.q, design,
                                       teachers.standardizer, pred.values,
                                       rng);
            return 0;
        });
        if (cfg.mmd_init) {
            run_stage("mmd-pretrain", [&] {
                SeededRng rng = root.stream("pretrain");
                mmd_pretrain(out.model, pred.values, cfg.pretrain, rng);
                return 0;
            });
        }
        run_stage("em-fit", [&] {
            SeededRng rng = root.stream("em");
            em_fit(out.model, pred.values, cfg.em, rng);
            return 0;
        });
        out.noise = run_stage("noise-distill", [&] {
            return fit_inverse_gamma(teachers.noise_vars);
        });
    } else {
        spec.output_dim = teachers.n_classes + cfg.q;
        run_stage("init-student", [&] {
            SeededRng rng = root.stream("student-init");
            out.multi_model = init_multi_dlf_model(
                spec, cfg.q, teachers.n_classes, design,
                teachers.standardizer, pred.logits, rng);
            return 0;
        });
        run_stage("em-fit", [&] {
            SeededRng rng = root.stream("em");
            em_fit_multi(out.multi_model, pred.logits, cfg.em, rng);
            return 0;
        });
    }
    return out;
}

MetricReport evaluate_regression(const DlfModel& model,
                                 const InverseGammaParams& noise,
                                 const Dataset& test, Index sample_count,
                                 bool include_jitter, SeededRng& rng) {
    if (test.task != Task::Regression) {
        throw ConfigInvalid("evaluate_regression: test data is not regression");
    }
    if (test.size() < 1) throw EmptyData("evaluate_regression: no test rows");
    std::vector<GaussianMixture> mixtures;
    mixtures.reserve(test.size());
    for (Index i = 0; i < test.size(); ++i) {
        mixtures.push_back(predictive_mixture(model, noise,
                                              test.features.row(i).transpose(),
                                              sample_count, rng,
                                              include_jitter));
    }
    MetricReport report;
    report.task = Task::Regression;
    report.n_test = test.size();
    report.rmse.per_seed = {rmse(mixture_means(mixtures), test.targets)};
    report.nll.per_seed = {nll_regression(mixtures, test.targets)};
    report.crps.per_seed = {mean_crps(mixtures, test.targets)};
    report.coverage95.per_seed = {coverage95(mixtures, test.targets)};
    return report;
}

MetricReport evaluate_classification(const MultiDlfModel& model,
                                     const Dataset& test, Index sample_count,
                                     SeededRng& rng) {
    if (test.task != Task::Classification) {
        throw ConfigInvalid(
            "evaluate_classification: test data is not classification");
    }
    if (test.size() < 1) {
        throw EmptyData("evaluate_classification: no test rows");
    }
    Matrix probs(test.size(), model.n_classes);
    for (Index i = 0; i < test.size(); ++i) {
        probs.row(i) = predictive_probs(model, test.features.row(i).transpose(),
                                        sample_count, rng)
                           .transpose();
    }
    MetricReport report;
    report.task = Task::Classification;
    report.n_test = test.size();
    report.acc.per_seed = {accuracy(probs, test.targets)};
    report.nll.per_seed = {nll_classification(probs, test.targets)};
    report.ece.per_seed = {ece(probs, test.targets)};
    return report;
}

SeedArtifacts run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    SeedArtifacts art;

    const Dataset data = run_stage("load-data", [&]() -> Dataset {
        if (!cfg.data_csv.empty()) return load_csv(cfg.data_csv, cfg.task);
        SynthResult r = gen_synth(cfg.synth, derive_seed(seed, "gen-synth"));
        if (r.data.task != cfg.task) {
            throw ConfigInvalid(
                std::string("synthetic kind '") +
                synth_kind_name(cfg.synth.kind) + "' generates " +
                task_name(r.data.task) + " data but the config task is " +
                task_name(cfg.task));
        }
        return std::move(r.data);
    });

    const auto [train, test] = run_stage("split", [&] {
        return split(data, cfg.train_ratio, derive_seed(seed, "split"));
    });

    art.teachers = run_stage("train-teachers", [&] {
        TeacherConfig tc;
        tc.spec.input_dim = train.dim();
        tc.spec.hidden_layers = cfg.teacher_hidden;
        tc.spec.output_dim =
            cfg.task == Task::Regression ? 1 : train.n_classes;
        tc.spec.activation = cfg.teacher_activation;
        tc.n_members = cfg.teacher_members;
        tc.epochs = cfg.teacher_epochs;
        tc.lr = cfg.teacher_lr;
        tc.batch_size = cfg.teacher_batch;
        SeededRng rng = SeededRng(seed).stream("teachers");
        return fit_ensemble(train, tc, rng);
    });

    const Matrix raw_pool = run_stage("select-design", [&]() -> Matrix {
        if (cfg.design == DesignStrategy::TeacherTrain ||
            cfg.design == DesignStrategy::TeacherTrainMixup) {
            return train.features;
        }
        if (!cfg.data_csv.empty()) {
            throw ConfigInvalid(
                "the new-train design strategies draw fresh inputs from the "
                "synthetic generator, which a CSV run does not have");
        }
        return gen_synth(cfg.synth, derive_seed(seed, "design-pool"))
            .data.features;
    });

    art.student = distill_student(cfg, art.teachers, raw_pool, seed);

    art.report = run_stage("evaluate", [&] {
        SeededRng rng = SeededRng(seed).stream("evaluate");
        const Index count =
            cfg.eval_samples > 0 ? cfg.eval_samples
                                 : static_cast<Index>(art.teachers.size());
        if (cfg.task == Task::Regression) {
            return evaluate_regression(art.student.model, *art.student.noise,
                                       test, count, cfg.include_jitter, rng);
        }
        return evaluate_classification(art.student.multi_model, test, count,
                                       rng);
    });
    return art;
}

MetricReport run_pipeline(const ExperimentConfig& cfg) {
    if (cfg.seeds.empty()) throw ConfigInvalid("pipeline: seed list is empty");
    const std::string dir = resolve_out_dir(cfg);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create output directory '" + dir +
                      "': " + ec.message());
    }
    save_json(dir + "/config.json", config_to_json(cfg));

    MetricReport aggregate;
    aggregate.task = cfg.task;
    for (std::uint64_t seed : cfg.seeds) {
        SeedArtifacts art = run_seed(cfg, seed);
        const std::string tag = "_seed" + std::to_string(seed);
        save_json(dir + "/teachers" + tag + ".json",
                  teacher_to_json(art.teachers));
        save_json(dir + "/student" + tag + ".json",
                  cfg.task == Task::Regression
                      ? model_to_json(art.student.model, art.student.noise)
                      : multi_model_to_json(art.student.multi_model));
        save_json(dir + "/report" + tag + ".json",
                  report_to_json(art.report));
        append_summary(aggregate.rmse, art.report.rmse);
        append_summary(aggregate.nll, art.report.nll);
        append_summary(aggregate.crps, art.report.crps);
        append_summary(aggregate.coverage95, art.report.coverage95);
        append_summary(aggregate.acc, art.report.acc);
        append_summary(aggregate.ece, art.report.ece);
        aggregate.n_test = art.report.n_test;
    }
    save_json(dir + "/report.json", report_to_json(aggregate));
    if (cfg.write_csv) write_text(dir + "/report.csv", report_csv(aggregate));
    return aggregate;
}

}  // namespace dlf

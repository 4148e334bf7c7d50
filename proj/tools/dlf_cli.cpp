#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dlf/pipeline.hpp"

namespace {

using dlf::Index;

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// Student records are dispatched on their "kind" tag.
std::string record_kind(const dlf::Json& j, const std::string& path) {
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
        throw dlf::ConfigInvalid("'" + path + "' is not an artifact record");
    }
    return j["kind"].get<std::string>();
}

dlf::MultiDlfModel load_multi_student(const std::string& path) {
    const dlf::Json j = dlf::load_json(path);
    const std::string kind = record_kind(j, path);
    if (kind != "dlf-multivariate") {
        throw dlf::ConfigInvalid("'" + path +
                                 "' holds a " + kind +
                                 " record; a classification student is "
                                 "required here");
    }
    return dlf::multi_model_from_json(j);
}

struct GenSynthArgs {
    std::string kind = "linear";
    dlf::SynthConfig synth;
    std::uint64_t seed = 1;
    std::string out;
    std::string truth_out;
};

int cmd_gen_synth(const GenSynthArgs& a) {
    dlf::SynthConfig cfg = a.synth;
    cfg.kind = dlf::parse_synth_kind(a.kind);
    const dlf::SynthResult result = dlf::gen_synth(cfg, a.seed);
    dlf::save_csv(result.data, a.out);
    std::cout << "wrote " << a.out << " (" << result.data.size() << " rows)\n";
    if (!a.truth_out.empty()) {
        dlf::save_json(a.truth_out, dlf::synth_truth_to_json(result.truth));
        std::cout << "wrote " << a.truth_out << "\n";
    }
    return 0;
}

struct TrainTeachersArgs {
    std::string data;
    std::string task = "regression";
    std::vector<Index> hidden{100, 100};
    std::string activation = "relu";
    int members = 5;
    int epochs = 200;
    double lr = 1e-3;
    Index batch = 32;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_train_teachers(const TrainTeachersArgs& a) {
    const dlf::Task task = dlf::parse_task(a.task);
    const dlf::Dataset data = dlf::load_csv(a.data, task);
    dlf::TeacherConfig cfg;
    cfg.spec.input_dim = data.dim();
    cfg.spec.hidden_layers = a.hidden;
    cfg.spec.output_dim = task == dlf::Task::Regression ? 1 : data.n_classes;
    cfg.spec.activation = dlf::parse_activation(a.activation);
    cfg.n_members = a.members;
    cfg.epochs = a.epochs;
    cfg.lr = a.lr;
    cfg.batch_size = a.batch;
    dlf::SeededRng rng = dlf::SeededRng(a.seed).stream("teachers");
    const dlf::TeacherEnsemble ensemble = dlf::fit_ensemble(data, cfg, rng);
    dlf::save_json(a.out, dlf::teacher_to_json(ensemble));
    std::cout << "wrote " << a.out << " (" << ensemble.size()
              << " members)\n";
    return 0;
}

struct DistillArgs {
    std::string teachers;
    std::string data;
    Index q = 10;
    std::string design = "teacher-train";
    double design_ratio = 1.0;
    std::string init = "mmd";
    double lambda = 1.0;
    int pretrain_epochs = 200;
    double pretrain_lr = 1e-2;
    std::vector<Index> student_hidden{50};
    std::string student_activation = "relu";
    std::string em_mode = "minibatch";
    Index em_batch = 10;
    int em_epochs = 100;
    double em_lr = 1e-3;
    double em_tol = 1e-6;
    bool gem_guard = false;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_distill(const DistillArgs& a) {
    const dlf::TeacherEnsemble teachers =
        dlf::teacher_from_json(dlf::load_json(a.teachers));
    const dlf::Dataset pool = dlf::load_csv(a.data, teachers.task);

    dlf::ExperimentConfig cfg;
    cfg.task = teachers.task;
    cfg.q = a.q;
    cfg.design = dlf::parse_design_strategy(a.design);
    cfg.design_ratio = a.design_ratio;
    if (a.init != "mmd" && a.init != "random") {
        throw dlf::ConfigInvalid("--init must be 'mmd' or 'random'");
    }
    cfg.mmd_init = a.init == "mmd";
    cfg.pretrain.lambda = a.lambda;
    cfg.pretrain.epochs = a.pretrain_epochs;
    cfg.pretrain.lr = a.pretrain_lr;
    cfg.student_hidden = a.student_hidden;
    cfg.student_activation = dlf::parse_activation(a.student_activation);
    cfg.em.mode = dlf::parse_em_mode(a.em_mode);
    cfg.em.batch_size = a.em_batch;
    cfg.em.epochs = a.em_epochs;
    cfg.em.lr = a.em_lr;
    cfg.em.tol = a.em_tol;
    cfg.em.gem_guard = a.gem_guard;

    const dlf::DistillResult result =
        dlf::distill_student(cfg, teachers, pool.features, a.seed);
    dlf::save_json(a.out, teachers.task == dlf::Task::Regression
                              ? dlf::model_to_json(result.model, result.noise)
                              : dlf::multi_model_to_json(result.multi_model));
    std::cout << "wrote " << a.out << "\n";
    return 0;
}

struct EvaluateArgs {
    std::string student;
    std::string data;
    Index samples = 50;
    bool include_jitter = false;
    std::uint64_t seed = 1;
    std::string out;
    std::string csv;
};

int cmd_evaluate(const EvaluateArgs& a) {
    const dlf::Json sj = dlf::load_json(a.student);
    const std::string kind = record_kind(sj, a.student);
    dlf::SeededRng rng = dlf::SeededRng(a.seed).stream("evaluate");
    dlf::MetricReport report;
    if (kind == "dlf-univariate") {
        std::optional<dlf::InverseGammaParams> noise;
        const dlf::DlfModel model = dlf::model_from_json(sj, &noise);
        if (!noise) {
            throw dlf::ConfigInvalid(
                "'" + a.student +
                "' has no noise law; distill wrote one for regression "
                "students");
        }
        const dlf::Dataset test = dlf::load_csv(a.data, dlf::Task::Regression);
        report = dlf::evaluate_regression(model, *noise, test, a.samples,
                                          a.include_jitter, rng);
    } else if (kind == "dlf-multivariate") {
        const dlf::MultiDlfModel model = dlf::multi_model_from_json(sj);
        const dlf::Dataset test =
            dlf::load_csv(a.data, dlf::Task::Classification);
        report = dlf::evaluate_classification(model, test, a.samples, rng);
    } else {
        throw dlf::ConfigInvalid("'" + a.student + "' holds a " + kind +
                                 " record, not a student model");
    }
    dlf::save_json(a.out, dlf::report_to_json(report));
    std::cout << dlf::report_csv(report);
    std::cout << "wrote " << a.out << "\n";
    if (!a.csv.empty()) {
        std::ofstream out(a.csv, std::ios::binary | std::ios::trunc);
        if (!out) throw dlf::IoError("cannot open '" + a.csv + "'");
        out << dlf::report_csv(report);
        std::cout << "wrote " << a.csv << "\n";
    }
    return 0;
}

struct SampleArgs {
    std::string student;
    std::string data;
    Index count = 10;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_sample(const SampleArgs& a) {
    const dlf::Json sj = dlf::load_json(a.student);
    const std::string kind = record_kind(sj, a.student);
    dlf::SeededRng rng = dlf::SeededRng(a.seed).stream("sample");
    // Inputs come from a labelled CSV; only the feature columns are used.
    const dlf::Dataset points = dlf::load_csv(a.data, dlf::Task::Regression);

    std::ofstream out(a.out, std::ios::binary | std::ios::trunc);
    if (!out) throw dlf::IoError("cannot open '" + a.out + "' for writing");
    if (kind == "dlf-univariate") {
        const dlf::DlfModel model = dlf::model_from_json(sj);
        const dlf::Matrix draws = dlf::sample_student_functions(
            model, points.features, a.count, rng);
        out << "point,draw,value\n";
        for (Index j = 0; j < draws.cols(); ++j) {
            for (Index s = 0; s < draws.rows(); ++s) {
                out << j << "," << s << "," << fmt(draws(s, j)) << "\n";
            }
        }
    } else if (kind == "dlf-multivariate") {
        const dlf::MultiDlfModel model = dlf::multi_model_from_json(sj);
        out << "point,draw";
        for (int c = 0; c < model.n_classes; ++c) out << ",p" << c;
        out << "\n";
        for (Index j = 0; j < points.size(); ++j) {
            const dlf::Matrix rows = dlf::sampled_prob_rows(
                model, points.features.row(j).transpose(), a.count, rng);
            for (Index s = 0; s < rows.rows(); ++s) {
                out << j << "," << s;
                for (Index c = 0; c < rows.cols(); ++c) {
                    out << "," << fmt(rows(s, c));
                }
                out << "\n";
            }
        }
    } else {
        throw dlf::ConfigInvalid("'" + a.student + "' holds a " + kind +
                                 " record, not a student model");
    }
    if (!out) throw dlf::IoError("failed while writing '" + a.out + "'");
    std::cout << "wrote " << a.out << "\n";
    return 0;
}

struct ShiftAdaptArgs {
    std::string student;
    std::string data;
    int epochs = 100;
    double lr = 0.05;
    Index batch = 0;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_shift_adapt(const ShiftAdaptArgs& a) {
    const dlf::MultiDlfModel body = load_multi_student(a.student);
    const dlf::Dataset data = dlf::load_csv(a.data, dlf::Task::Classification);
    dlf::SeededRng rng = dlf::SeededRng(a.seed).stream("shift-adapt");
    const dlf::AdaptedHead head =
        dlf::fit_head(body, data, a.epochs, a.lr, rng, a.batch);
    dlf::save_json(a.out, dlf::head_to_json(head));
    const double ce = dlf::adapted_cross_entropy(head, data);
    std::cout << "final cross-entropy " << fmt(ce) << "\n";
    std::cout << "wrote " << a.out << "\n";
    return 0;
}

struct OodScoreArgs {
    std::string student;
    std::string in_data;
    std::string out_data;
    Index samples = 50;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_ood_score(const OodScoreArgs& a) {
    const dlf::MultiDlfModel model = load_multi_student(a.student);
    // Labels in the two CSVs are ignored; only features are scored.
    const dlf::Dataset in_set = dlf::load_csv(a.in_data, dlf::Task::Regression);
    const dlf::Dataset out_set =
        dlf::load_csv(a.out_data, dlf::Task::Regression);
    dlf::SeededRng rng = dlf::SeededRng(a.seed).stream("ood");
    const dlf::OodReport report = dlf::ood_score(
        model, in_set.features, out_set.features, a.samples, rng);
    dlf::save_json(a.out, dlf::ood_report_to_json(report));
    std::cout << "auroc " << fmt(report.auroc) << "\n";
    std::cout << "wrote " << a.out << "\n";
    return 0;
}

struct RunArgs {
    std::string config;
    Index q = -1;
    double lambda = -1.0;
    std::string design;
    double design_ratio = -1.0;
    std::string em_mode;
    std::vector<std::uint64_t> seeds;
    std::string init;
    std::string out_dir;
};

int cmd_run(const RunArgs& a, const CLI::App* cmd) {
    dlf::ExperimentConfig cfg;
    if (!a.config.empty()) {
        cfg = dlf::config_from_json(dlf::load_json(a.config));
    }
    if (cmd->count("--q") > 0) cfg.q = a.q;
    if (cmd->count("--lambda") > 0) cfg.pretrain.lambda = a.lambda;
    if (cmd->count("--design") > 0) {
        cfg.design = dlf::parse_design_strategy(a.design);
    }
    if (cmd->count("--design-ratio") > 0) cfg.design_ratio = a.design_ratio;
    if (cmd->count("--em-mode") > 0) cfg.em.mode = dlf::parse_em_mode(a.em_mode);
    if (cmd->count("--seeds") > 0) cfg.seeds = a.seeds;
    if (cmd->count("--init") > 0) {
        if (a.init != "mmd" && a.init != "random") {
            throw dlf::ConfigInvalid("--init must be 'mmd' or 'random'");
        }
        cfg.mmd_init = a.init == "mmd";
    }
    if (cmd->count("--out-dir") > 0) cfg.out_dir = a.out_dir;

    const dlf::MetricReport report = dlf::run_pipeline(cfg);
    std::cout << dlf::report_csv(report);
    std::cout << "wrote " << dlf::resolve_out_dir(cfg) << "/report.json\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Deep latent factor distillation: teacher ensembles, variance-aware "
        "students, scoring, shift adaptation and OOD detection"};
    app.require_subcommand(1);

    GenSynthArgs gen;
    CLI::App* gen_cmd =
        app.add_subcommand("gen-synth", "Generate a synthetic dataset CSV");
    gen_cmd->add_option("--kind", gen.kind,
                        "linear, dlf-gp, blobs or flip-blobs");
    gen_cmd->add_option("--n", gen.synth.n, "Sample count (linear, blobs)");
    gen_cmd->add_option("--dim", gen.synth.dim, "Feature dimension");
    gen_cmd->add_option("--noise-sd", gen.synth.noise_sd,
                        "Observation noise (linear)");
    gen_cmd->add_option("--m", gen.synth.m, "Design point count (dlf-gp)");
    gen_cmd->add_option("--q", gen.synth.q, "Latent factors (dlf-gp)");
    gen_cmd->add_option("--realizations", gen.synth.n_realizations,
                        "Function draws (dlf-gp)");
    gen_cmd->add_option("--jitter", gen.synth.jitter,
                        "Observation jitter (dlf-gp)");
    gen_cmd->add_option("--classes", gen.synth.n_classes,
                        "Class count (blobs)");
    gen_cmd->add_option("--radius", gen.synth.radius,
                        "Class center radius (blobs)");
    gen_cmd->add_option("--blob-std", gen.synth.blob_std,
                        "Per-class spread (blobs)");
    gen_cmd->add_option("--seed", gen.seed, "RNG seed");
    gen_cmd->add_option("--out", gen.out, "Output CSV path")->required();
    gen_cmd->add_option("--truth-out", gen.truth_out,
                        "Also write the generating parameters as JSON");

    TrainTeachersArgs tt;
    CLI::App* tt_cmd = app.add_subcommand(
        "train-teachers", "Train a deep ensemble on a labelled CSV");
    tt_cmd->add_option("--data", tt.data, "Training CSV")->required();
    tt_cmd->add_option("--task", tt.task, "regression or classification");
    tt_cmd->add_option("--hidden", tt.hidden, "Hidden layer widths")
        ->delimiter(',');
    tt_cmd->add_option("--activation", tt.activation, "relu or tanh");
    tt_cmd->add_option("--members", tt.members, "Ensemble size");
    tt_cmd->add_option("--epochs", tt.epochs, "Training epochs per member");
    tt_cmd->add_option("--lr", tt.lr, "Adam learning rate");
    tt_cmd->add_option("--batch", tt.batch, "Minibatch size");
    tt_cmd->add_option("--seed", tt.seed, "RNG seed");
    tt_cmd->add_option("--out", tt.out, "Output teachers JSON")->required();

    DistillArgs dd;
    CLI::App* dd_cmd = app.add_subcommand(
        "distill", "Distill a teacher ensemble into a DLF student");
    dd_cmd->add_option("--teachers", dd.teachers, "Teachers JSON")->required();
    dd_cmd->add_option("--data", dd.data,
                       "CSV whose feature rows form the design pool")
        ->required();
    dd_cmd->add_option("--q", dd.q, "Latent dimension");
    dd_cmd->add_option("--design", dd.design,
                       "teacher-train, teacher-mixup, new-train or new-mixup");
    dd_cmd->add_option("--design-ratio", dd.design_ratio,
                       "Fraction of the pool used as design points");
    dd_cmd->add_option("--init", dd.init, "mmd or random");
    dd_cmd->add_option("--lambda", dd.lambda, "MMD penalty weight");
    dd_cmd->add_option("--pretrain-epochs", dd.pretrain_epochs,
                       "MMD pretraining epochs");
    dd_cmd->add_option("--pretrain-lr", dd.pretrain_lr,
                       "MMD pretraining learning rate");
    dd_cmd->add_option("--student-hidden", dd.student_hidden,
                       "Student hidden widths")
        ->delimiter(',');
    dd_cmd->add_option("--student-activation", dd.student_activation,
                       "relu or tanh");
    dd_cmd->add_option("--em-mode", dd.em_mode, "minibatch or fullbatch");
    dd_cmd->add_option("--em-batch", dd.em_batch, "EM minibatch size");
    dd_cmd->add_option("--em-epochs", dd.em_epochs, "EM epochs");
    dd_cmd->add_option("--em-lr", dd.em_lr, "EM learning rate");
    dd_cmd->add_option("--em-tol", dd.em_tol,
                       "FullBatch relative stopping tolerance");
    dd_cmd->add_flag("--gem-guard", dd.gem_guard,
                     "FullBatch backtracking ascent instead of Adam");
    dd_cmd->add_option("--seed", dd.seed, "RNG seed");
    dd_cmd->add_option("--out", dd.out, "Output student JSON")->required();

    EvaluateArgs ev;
    CLI::App* ev_cmd = app.add_subcommand(
        "evaluate", "Score a distilled student on a labelled CSV");
    ev_cmd->add_option("--student", ev.student, "Student JSON")->required();
    ev_cmd->add_option("--data", ev.data, "Test CSV")->required();
    ev_cmd->add_option("--samples", ev.samples, "Predictive sample count");
    ev_cmd->add_flag("--include-jitter", ev.include_jitter,
                     "Add the observation jitter to component variances");
    ev_cmd->add_option("--seed", ev.seed, "RNG seed");
    ev_cmd->add_option("--out", ev.out, "Output report JSON")->required();
    ev_cmd->add_option("--csv", ev.csv, "Also write the report as CSV");

    SampleArgs sa;
    CLI::App* sa_cmd = app.add_subcommand(
        "sample", "Draw student members at the rows of a CSV");
    sa_cmd->add_option("--student", sa.student, "Student JSON")->required();
    sa_cmd->add_option("--data", sa.data, "Input CSV (labels ignored)")
        ->required();
    sa_cmd->add_option("--count", sa.count, "Number of draws");
    sa_cmd->add_option("--seed", sa.seed, "RNG seed");
    sa_cmd->add_option("--out", sa.out, "Output CSV")->required();

    ShiftAdaptArgs sh;
    CLI::App* sh_cmd = app.add_subcommand(
        "shift-adapt", "Fit a deterministic head on shifted data, body frozen");
    sh_cmd->add_option("--student", sh.student, "Classification student JSON")
        ->required();
    sh_cmd->add_option("--data", sh.data, "Shifted labelled CSV")->required();
    sh_cmd->add_option("--epochs", sh.epochs, "Adam epochs");
    sh_cmd->add_option("--lr", sh.lr, "Adam learning rate");
    sh_cmd->add_option("--batch", sh.batch, "Minibatch size, 0 = full batch");
    sh_cmd->add_option("--seed", sh.seed, "RNG seed");
    sh_cmd->add_option("--out", sh.out, "Output head JSON")->required();

    OodScoreArgs od;
    CLI::App* od_cmd = app.add_subcommand(
        "ood-score", "Mutual-information OOD detection report");
    od_cmd->add_option("--student", od.student, "Classification student JSON")
        ->required();
    od_cmd->add_option("--in-data", od.in_data,
                       "In-distribution CSV (labels ignored)")
        ->required();
    od_cmd->add_option("--out-data", od.out_data,
                       "Out-of-distribution CSV (labels ignored)")
        ->required();
    od_cmd->add_option("--samples", od.samples, "Sampled members per input");
    od_cmd->add_option("--seed", od.seed, "RNG seed");
    od_cmd->add_option("--out", od.out, "Output report JSON")->required();

    RunArgs rn;
    CLI::App* rn_cmd = app.add_subcommand(
        "run", "Full pipeline: teachers, distillation, evaluation, reports");
    rn_cmd->add_option("--config", rn.config, "Experiment config JSON");
    rn_cmd->add_option("--q", rn.q, "Override: latent dimension");
    rn_cmd->add_option("--lambda", rn.lambda, "Override: MMD penalty weight");
    rn_cmd->add_option("--design", rn.design, "Override: design strategy");
    rn_cmd->add_option("--design-ratio", rn.design_ratio,
                       "Override: design ratio");
    rn_cmd->add_option("--em-mode", rn.em_mode, "Override: EM mode");
    rn_cmd->add_option("--seeds", rn.seeds, "Override: seed list")
        ->delimiter(',');
    rn_cmd->add_option("--init", rn.init, "Override: mmd or random");
    rn_cmd->add_option("--out-dir", rn.out_dir,
                       "Override: output directory (else $DLF_OUT_DIR)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_cmd->parsed()) return cmd_gen_synth(gen);
        if (tt_cmd->parsed()) return cmd_train_teachers(tt);
        if (dd_cmd->parsed()) return cmd_distill(dd);
        if (ev_cmd->parsed()) return cmd_evaluate(ev);
        if (sa_cmd->parsed()) return cmd_sample(sa);
        if (sh_cmd->parsed()) return cmd_shift_adapt(sh);
        if (od_cmd->parsed()) return cmd_ood_score(od);
        if (rn_cmd->parsed()) return cmd_run(rn, rn_cmd);
    } catch (const dlf::Error& e) {
        std::cerr << "dlf " << app.get_subcommands().front()->get_name()
                  << ": error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

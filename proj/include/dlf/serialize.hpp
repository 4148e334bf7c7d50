#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "dlf/dlf_multivariate.hpp"
#include "dlf/dlf_univariate.hpp"
#include "dlf/metrics.hpp"
#include "dlf/noise.hpp"
#include "dlf/ood_eval.hpp"
#include "dlf/shift_adapt.hpp"
#include "dlf/teacher.hpp"

namespace dlf {

// Every artifact is a JSON object tagged with "kind" and "format". Keys
// keep insertion order so that load followed by dump reproduces the file
// byte for byte.
using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

// Canonical text form: two-space indent plus a trailing newline. All
// byte-identity guarantees in this module refer to this form.
std::string dump_json(const Json& j);

void save_json(const std::string& path, const Json& j);

// Throws IoError when the file is missing or is not valid JSON.
Json load_json(const std::string& path);

// FNV-1a (64 bit) over the canonical text form, as 16 hex digits.
std::string content_hash(const Json& j);

// Enum names used inside artifacts and on the command line.
const char* task_name(Task task);
Task parse_task(const std::string& name);
const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);
const char* synth_kind_name(SynthKind kind);
SynthKind parse_synth_kind(const std::string& name);
const char* em_mode_name(EmMode mode);
EmMode parse_em_mode(const std::string& name);

// Flat parameter layout: for each layer in order, the weight matrix in
// row-major order followed by the bias vector.
Vector pack_params(const NetworkSpec& spec, const NetworkParams& params);
NetworkParams unpack_params(const NetworkSpec& spec, const Vector& theta);

Json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const Json& j);

Json standardizer_to_json(const Standardizer& s);
Standardizer standardizer_from_json(const Json& j);

Json teacher_to_json(const TeacherEnsemble& ensemble);
TeacherEnsemble teacher_from_json(const Json& j);

// Regression student. A fitted observation-noise law rides along in the
// same record when one is supplied.
Json model_to_json(const DlfModel& model,
                   const std::optional<InverseGammaParams>& noise =
                       std::nullopt);
DlfModel model_from_json(const Json& j,
                         std::optional<InverseGammaParams>* noise = nullptr);

// Classification student. Extends the univariate record with the class
// count and the lower triangle of l_raw, packed row by row.
Json multi_model_to_json(const MultiDlfModel& model);
MultiDlfModel multi_model_from_json(const Json& j);

// Head records name the body they were fit against by content hash; reading
// one back verifies the hash against the body actually supplied.
Json head_to_json(const AdaptedHead& head);
AdaptedHead head_from_json(const Json& j, const MultiDlfModel& body);

Json report_to_json(const MetricReport& report);
MetricReport report_from_json(const Json& j);

// One CSV row per populated metric: metric, mean, stderr, seeds.
std::string report_csv(const MetricReport& report);

Json ood_report_to_json(const OodReport& report);
OodReport ood_report_from_json(const Json& j);

}  // namespace dlf

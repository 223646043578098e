#pragma once

// Metrics over generation logs (JSD, CBC, BPC, RS) and report emission.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gdpo/core.hpp"
#include "gdpo/datagen.hpp"
#include "gdpo/policy.hpp"
#include "gdpo/train.hpp"

namespace gdpo {

struct GenerationRecord {
    int topic_id = 0;
    Words query;
    std::optional<BeliefClass> predicted_class;
    Words description;
    Words response;
    bool truncated = false;

    bool operator==(const GenerationRecord&) const = default;
};

using GenerationLog = std::vector<GenerationRecord>;

struct GenerationOptions {
    double temperature = 1.0;
    bool greedy = false;
    std::uint64_t seed = 0;
};

// One sample per example; record i is drawn with seed mix_seed(options.seed, i).
GenerationLog generate_log(const Policy& policy, std::span<const PreferenceExample> examples,
                           const GenerationOptions& options);

// Records of the dataset's own accepted (or rejected) responses paired with
// the accepted belief.
GenerationLog log_from_pairs(std::span<const PreferenceExample> examples, bool use_rejected_response = false);

double avg_jsd(const Policy& policy, std::span<const PreferenceExample> examples);

// Fraction of records whose description maps to the predicted class token.
// Missing class tokens and unmapped descriptions count as inconsistent.
double cbc(const GenerationLog& log, const ClassBeliefMap& map);

// Index of the predicted belief in the topic: exact description match first,
// then the class token.
std::optional<std::size_t> resolve_belief(const GenerationRecord& record, const Topic& topic);

inline constexpr double kFragmentThreshold = 0.8;

// True when the response is a template of the predicted belief; responses that
// are not an exact template fall back to the share of a template's fragments
// found verbatim in the response (at least kFragmentThreshold).
bool bpc_consistent(const GenerationRecord& record, const Topic& topic);

// Throws DataError on a topic id that is not in topics.
double bpc_oracle(const GenerationLog& log, std::span<const Topic> topics);

// Term-frequency cosine of two token sequences; 0 when either is empty.
double tf_cosine(std::span<const std::string> a, std::span<const std::string> b);

// Mean tf_cosine between each response and the style-0 template of its
// predicted belief (0 when the belief does not resolve).
double rs(const GenerationLog& log, std::span<const Topic> topics);

struct MetricReport {
    std::string method;
    double jsd = 0.0;
    double cbc = 0.0;
    double bpc = 0.0;
    double rs = 0.0;
    std::size_t n = 0;
};

MetricReport evaluate_policy(const std::string& method, const Policy& policy, std::span<const Topic> topics,
                             std::span<const PreferenceExample> test, const GenerationOptions& options);

struct NamedTrace {
    std::string method;
    TrainingTrace trace;
};

// Column order of trace files.
const std::vector<std::string>& trace_columns();

void write_trace_csv(const TrainingTrace& trace, const std::filesystem::path& path);
TrainingTrace parse_trace_csv(const std::filesystem::path& path);

void write_metrics_csv(std::span<const MetricReport> reports, const std::filesystem::path& path);
std::vector<MetricReport> parse_metrics_csv(const std::filesystem::path& path);

// Writes trace_<method>.csv per trace, metrics.csv, plot_data.json (one avg_jsd
// series per method plus the four baselines of the first trace) and
// plot_traces.py.
void emit_report(std::span<const NamedTrace> traces, std::span<const MetricReport> reports,
                 const std::filesystem::path& out_dir);

}  // namespace gdpo

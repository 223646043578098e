#pragma once

// Template-based synthetic data: topics with belief-tagged response templates
// and belief-conditioned pairwise preference datasets.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gdpo/core.hpp"

namespace gdpo {

// Maps belief descriptions (e.g. "Very bad job") onto the six class tokens.
class ClassBeliefMap {
public:
    ClassBeliefMap() = default;
    explicit ClassBeliefMap(std::vector<std::pair<std::string, BeliefClass>> entries);

    // Opinion-scale and rating descriptions used by the generator, plus the
    // representative rows of the class-belief mapping table.
    static const ClassBeliefMap& standard();

    std::optional<BeliefClass> find(std::span<const std::string> description) const;
    std::size_t size() const { return entries_.size(); }

private:
    std::vector<std::pair<std::string, BeliefClass>> entries_;  // sorted by description
};

// Throws DataError("unmapped belief: ...") when the description is not in the map.
BeliefClass map_belief_to_class(std::span<const std::string> description, const ClassBeliefMap& map);

// A response template is a sequence of phrase fragments; the response text is
// their concatenation. Fragments are what the off-distribution BPC oracle
// looks for.
struct ResponseTemplate {
    std::vector<Words> fragments;

    Words tokens() const;
    bool operator==(const ResponseTemplate&) const = default;
};

struct Topic {
    int id = 0;
    Words question;
    BeliefSet beliefs;
    BeliefDistribution target;
    std::vector<std::vector<ResponseTemplate>> templates;  // [belief][style]

    std::size_t num_beliefs() const { return beliefs.size(); }
    std::size_t num_styles() const { return templates.empty() ? 0 : templates.front().size(); }
};

enum class TaskKind { opinion, review };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

struct DistributionSource {
    enum class Kind { explicit_list, dirichlet };

    Kind kind = Kind::dirichlet;
    // Topic q uses explicit_dists[q % explicit_dists.size()].
    std::vector<std::vector<double>> explicit_dists;
    double alpha = 1.0;

    static DistributionSource from_list(std::vector<std::vector<double>> dists);
    static DistributionSource from_dirichlet(double alpha);

    bool operator==(const DistributionSource&) const = default;
};

inline constexpr int kMaxStyles = 8;

struct TopicConfig {
    int topics = 1;
    int beliefs = 5;
    int styles = 2;
    TaskKind task = TaskKind::opinion;
    DistributionSource distribution;
};

std::vector<Topic> generate_topics(const TopicConfig& config, std::uint64_t seed);

struct PreferenceExample {
    int topic_id = 0;
    Words query;
    BeliefSet belief_set;
    BeliefDistribution target_dist;
    std::size_t accepted_belief = 0;
    Words accepted_response;
    std::size_t rejected_belief = 0;
    Words rejected_response;

    bool operator==(const PreferenceExample&) const = default;
};

// Accepted beliefs are drawn from the topic's target distribution, rejected
// beliefs uniformly from the remaining K - 1, and both responses uniformly from
// the belief's templates. The stream is seeded by mix_seed(seed, topic.id).
std::vector<PreferenceExample> build_preference_pairs(const Topic& topic, std::size_t n, std::uint64_t seed);

struct SplitSizes {
    std::size_t train = 0;
    std::size_t eval = 0;
    std::size_t test = 0;

    bool operator==(const SplitSizes&) const = default;
};

struct DatasetManifest {
    std::uint64_t seed = 0;
    SplitSizes splits;
    int topics = 1;
    int beliefs = 5;
    int styles = 2;
    TaskKind task = TaskKind::opinion;
    DistributionSource distribution;

    TopicConfig topic_config() const;
    bool operator==(const DatasetManifest&) const = default;
};

enum class Split { train = 0, eval = 1, test = 2 };
std::string_view to_string(Split split);

struct GeneratedData {
    std::vector<Topic> topics;
    std::vector<PreferenceExample> train;
    std::vector<PreferenceExample> eval;
    std::vector<PreferenceExample> test;
};

// Every split covers every topic; split sizes are spread over topics as evenly
// as possible (lower topic ids take the remainder).
GeneratedData generate_dataset(const DatasetManifest& manifest);

// Line-delimited JSON records, one example per line. The manifest is written
// next to the records as manifest.json.
void serialize_dataset(std::span<const PreferenceExample> examples, const DatasetManifest& manifest,
                       const std::filesystem::path& path);

struct LoadedDataset {
    std::vector<PreferenceExample> examples;
    DatasetManifest manifest;
};

LoadedDataset load_dataset(const std::filesystem::path& path);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

std::filesystem::path manifest_path_for(const std::filesystem::path& records_path);

}  // namespace gdpo

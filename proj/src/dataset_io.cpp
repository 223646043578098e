#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gdpo/datagen.hpp"
#include "gdpo/error.hpp"

namespace gdpo {

using nlohmann::json;

namespace {

json belief_set_to_json(const BeliefSet& set) {
    json arr = json::array();
    for (const Belief& b : set.beliefs()) {
        arr.push_back({{"class", b.cls.value}, {"description", b.description}});
    }
    return arr;
}

BeliefSet belief_set_from_json(const json& arr) {
    std::vector<Belief> beliefs;
    for (const json& b : arr) {
        beliefs.push_back({make_belief_class(b.at("class").get<int>()), b.at("description").get<Words>()});
    }
    return BeliefSet(std::move(beliefs));
}

json record_to_json(const PreferenceExample& ex) {
    // Key order is fixed by nlohmann's sorted object map, which keeps the
    // output byte-stable.
    return json{{"topic_id", ex.topic_id},
                {"question", ex.query},
                {"belief_set", belief_set_to_json(ex.belief_set)},
                {"target_dist", std::vector<double>(ex.target_dist.probs().begin(), ex.target_dist.probs().end())},
                {"accepted_belief", ex.accepted_belief},
                {"accepted_response", ex.accepted_response},
                {"rejected_belief", ex.rejected_belief},
                {"rejected_response", ex.rejected_response}};
}

PreferenceExample record_from_json(const json& j) {
    PreferenceExample ex;
    ex.topic_id = j.at("topic_id").get<int>();
    ex.query = j.at("question").get<Words>();
    ex.belief_set = belief_set_from_json(j.at("belief_set"));
    ex.target_dist = BeliefDistribution(j.at("target_dist").get<std::vector<double>>());
    ex.accepted_belief = j.at("accepted_belief").get<std::size_t>();
    ex.accepted_response = j.at("accepted_response").get<Words>();
    ex.rejected_belief = j.at("rejected_belief").get<std::size_t>();
    ex.rejected_response = j.at("rejected_response").get<Words>();
    if (ex.target_dist.size() != ex.belief_set.size()) {
        throw DataError("target_dist length does not match belief_set");
    }
    if (ex.accepted_belief >= ex.belief_set.size() || ex.rejected_belief >= ex.belief_set.size()) {
        throw DataError("belief index out of range");
    }
    if (ex.accepted_belief == ex.rejected_belief) {
        throw DataError("accepted and rejected belief coincide");
    }
    return ex;
}

json manifest_to_json(const DatasetManifest& m) {
    json dist;
    if (m.distribution.kind == DistributionSource::Kind::explicit_list) {
        dist = {{"kind", "explicit"}, {"dists", m.distribution.explicit_dists}};
    } else {
        dist = {{"kind", "dirichlet"}, {"alpha", m.distribution.alpha}};
    }
    return json{{"seed", m.seed},
                {"splits", {{"train", m.splits.train}, {"eval", m.splits.eval}, {"test", m.splits.test}}},
                {"topics", m.topics},
                {"beliefs", m.beliefs},
                {"styles", m.styles},
                {"task", std::string(to_string(m.task))},
                {"distribution", dist}};
}

DatasetManifest manifest_from_json(const json& j) {
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    const json& s = j.at("splits");
    m.splits = {s.at("train").get<std::size_t>(), s.at("eval").get<std::size_t>(), s.at("test").get<std::size_t>()};
    m.topics = j.at("topics").get<int>();
    m.beliefs = j.at("beliefs").get<int>();
    m.styles = j.at("styles").get<int>();
    m.task = parse_task_kind(j.at("task").get<std::string>());
    const json& d = j.at("distribution");
    const std::string kind = d.at("kind").get<std::string>();
    if (kind == "explicit") {
        m.distribution = DistributionSource::from_list(d.at("dists").get<std::vector<std::vector<double>>>());
    } else if (kind == "dirichlet") {
        m.distribution = DistributionSource::from_dirichlet(d.at("alpha").get<double>());
    } else {
        throw DataError("unknown distribution kind \"" + kind + "\"");
    }
    return m;
}

}  // namespace

std::filesystem::path manifest_path_for(const std::filesystem::path& records_path) {
    return records_path.parent_path() / "manifest.json";
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << manifest_to_json(manifest).dump(2) << '\n';
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open manifest " + path.string());
    }
    try {
        return manifest_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + path.string() + ": " + e.what());
    }
}

void serialize_dataset(std::span<const PreferenceExample> examples, const DatasetManifest& manifest,
                       const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    for (const PreferenceExample& ex : examples) {
        out << record_to_json(ex).dump() << '\n';
    }
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
    write_manifest(manifest, manifest_path_for(path));
}

LoadedDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open dataset " + path.string());
    }
    LoadedDataset data;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            data.examples.push_back(record_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": invalid record: " + e.what());
        }
    }
    data.manifest = read_manifest(manifest_path_for(path));
    return data;
}

}  // namespace gdpo

#include <algorithm>
#include <cmath>
#include <map>

#include "gdpo/error.hpp"
#include "gdpo/evalkit.hpp"
#include "gdpo/rng.hpp"

namespace gdpo {

namespace {

std::map<int, const Topic*> index_topics(std::span<const Topic> topics) {
    std::map<int, const Topic*> out;
    for (const Topic& t : topics) {
        out[t.id] = &t;
    }
    return out;
}

const Topic& topic_for(const std::map<int, const Topic*>& index, int id) {
    auto it = index.find(id);
    if (it == index.end()) {
        throw DataError("unknown topic_id " + std::to_string(id));
    }
    return *it->second;
}

bool contains_run(std::span<const std::string> text, std::span<const std::string> run) {
    if (run.empty()) {
        return true;
    }
    return std::search(text.begin(), text.end(), run.begin(), run.end()) != text.end();
}

double fragment_share(std::span<const std::string> response, const ResponseTemplate& tpl) {
    if (tpl.fragments.empty()) {
        return 0.0;
    }
    std::size_t hits = 0;
    for (const Words& f : tpl.fragments) {
        if (contains_run(response, f)) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(tpl.fragments.size());
}

}  // namespace

GenerationLog generate_log(const Policy& policy, std::span<const PreferenceExample> examples,
                           const GenerationOptions& options) {
    GenerationLog log;
    log.reserve(examples.size());
    const Vocabulary& vocab = policy.vocab();
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const PreferenceExample& ex = examples[i];
        SampleOptions so;
        so.temperature = options.temperature;
        so.greedy = options.greedy;
        so.seed = mix_seed(options.seed, i);
        const Sample s = policy.sample(encode_query(vocab, ex.query), so);
        GenerationRecord r;
        r.topic_id = ex.topic_id;
        r.query = ex.query;
        if (s.class_token) {
            r.predicted_class = Vocabulary::class_of(*s.class_token);
        }
        r.description = vocab.decode(s.description);
        r.response = vocab.decode(s.response);
        r.truncated = s.truncated;
        log.push_back(std::move(r));
    }
    return log;
}

GenerationLog log_from_pairs(std::span<const PreferenceExample> examples, bool use_rejected_response) {
    GenerationLog log;
    log.reserve(examples.size());
    for (const PreferenceExample& ex : examples) {
        const Belief& b = ex.belief_set[ex.accepted_belief];
        log.push_back({ex.topic_id, ex.query, b.cls, b.description,
                       use_rejected_response ? ex.rejected_response : ex.accepted_response, false});
    }
    return log;
}

double avg_jsd(const Policy& policy, std::span<const PreferenceExample> examples) {
    if (examples.empty()) {
        throw DataError("empty test set");
    }
    return mean_topic_jsd(policy, encode_examples(policy.vocab(), examples));
}

double cbc(const GenerationLog& log, const ClassBeliefMap& map) {
    if (log.empty()) {
        return 0.0;
    }
    std::size_t ok = 0;
    for (const GenerationRecord& r : log) {
        if (!r.predicted_class || r.description.empty()) {
            continue;
        }
        const auto mapped = map.find(r.description);
        if (mapped && *mapped == *r.predicted_class) {
            ++ok;
        }
    }
    return static_cast<double>(ok) / static_cast<double>(log.size());
}

std::optional<std::size_t> resolve_belief(const GenerationRecord& record, const Topic& topic) {
    const auto& beliefs = topic.beliefs.beliefs();
    for (std::size_t k = 0; k < beliefs.size(); ++k) {
        if (!record.description.empty() && beliefs[k].description == record.description) {
            return k;
        }
    }
    if (record.predicted_class) {
        for (std::size_t k = 0; k < beliefs.size(); ++k) {
            if (beliefs[k].cls == *record.predicted_class) {
                return k;
            }
        }
    }
    return std::nullopt;
}

bool bpc_consistent(const GenerationRecord& record, const Topic& topic) {
    const auto belief = resolve_belief(record, topic);
    if (!belief) {
        return false;
    }
    for (std::size_t k = 0; k < topic.templates.size(); ++k) {
        for (const ResponseTemplate& tpl : topic.templates[k]) {
            if (tpl.tokens() == record.response) {
                return k == *belief;
            }
        }
    }
    for (const ResponseTemplate& tpl : topic.templates[*belief]) {
        if (fragment_share(record.response, tpl) >= kFragmentThreshold) {
            return true;
        }
    }
    return false;
}

double bpc_oracle(const GenerationLog& log, std::span<const Topic> topics) {
    if (log.empty()) {
        return 0.0;
    }
    const auto index = index_topics(topics);
    std::size_t ok = 0;
    for (const GenerationRecord& r : log) {
        if (bpc_consistent(r, topic_for(index, r.topic_id))) {
            ++ok;
        }
    }
    return static_cast<double>(ok) / static_cast<double>(log.size());
}

double tf_cosine(std::span<const std::string> a, std::span<const std::string> b) {
    if (a.empty() || b.empty()) {
        return 0.0;
    }
    std::map<std::string, std::pair<double, double>> tf;
    for (const auto& w : a) {
        tf[w].first += 1.0;
    }
    for (const auto& w : b) {
        tf[w].second += 1.0;
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [w, c] : tf) {
        dot += c.first * c.second;
        na += c.first * c.first;
        nb += c.second * c.second;
    }
    return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

double rs(const GenerationLog& log, std::span<const Topic> topics) {
    if (log.empty()) {
        return 0.0;
    }
    const auto index = index_topics(topics);
    double total = 0.0;
    for (const GenerationRecord& r : log) {
        const Topic& topic = topic_for(index, r.topic_id);
        if (const auto b = resolve_belief(r, topic)) {
            total += tf_cosine(r.response, topic.templates[*b].front().tokens());
        }
    }
    return total / static_cast<double>(log.size());
}

MetricReport evaluate_policy(const std::string& method, const Policy& policy, std::span<const Topic> topics,
                             std::span<const PreferenceExample> test, const GenerationOptions& options) {
    const GenerationLog log = generate_log(policy, test, options);
    MetricReport rep;
    rep.method = method;
    rep.jsd = avg_jsd(policy, test);
    rep.cbc = cbc(log, ClassBeliefMap::standard());
    rep.bpc = bpc_oracle(log, topics);
    rep.rs = rs(log, topics);
    rep.n = log.size();
    return rep;
}

}  // namespace gdpo

#include "gdpo/datagen.hpp"

#include <cmath>
#include <sstream>

#include "gdpo/error.hpp"
#include "gdpo/rng.hpp"
#include "phrasebook.hpp"

namespace gdpo {

namespace {

Words split_words(std::string_view text) {
    Words out;
    std::istringstream in{std::string(text)};
    std::string w;
    while (in >> w) {
        out.push_back(w);
    }
    return out;
}

std::string subject_token(int topic_id, TaskKind task) {
    if (task == TaskKind::review) {
        return "film" + std::to_string(topic_id);
    }
    const std::size_t n = phrasebook::kSubjects.size();
    std::string s(phrasebook::kSubjects[static_cast<std::size_t>(topic_id) % n]);
    if (static_cast<std::size_t>(topic_id) >= n) {
        s += std::to_string(static_cast<std::size_t>(topic_id) / n);
    }
    return s;
}

Words fill_subject(std::string_view frame, const std::string& subject) {
    Words words = split_words(frame);
    for (std::string& w : words) {
        if (w == "$") {
            w = subject;
        }
    }
    return words;
}

// Agreement degrees for the non-refusal beliefs, highest first.
std::vector<int> degrees_for(int count) {
    switch (count) {
        case 1: return {5};
        case 2: return {5, 1};
        case 3: return {5, 3, 1};
        case 4: return {5, 4, 2, 1};
        default: return {5, 4, 3, 2, 1};
    }
}

std::vector<double> target_for(const TopicConfig& config, int topic_id, Rng& rng) {
    const std::size_t k = static_cast<std::size_t>(config.beliefs);
    const DistributionSource& src = config.distribution;
    if (src.kind == DistributionSource::Kind::explicit_list) {
        const auto& dist = src.explicit_dists.at(static_cast<std::size_t>(topic_id) % src.explicit_dists.size());
        return dist;
    }
    std::vector<double> g(k);
    double total = 0.0;
    for (double& v : g) {
        v = rng.gamma(src.alpha);
        total += v;
    }
    if (!(total > 0.0)) {
        // Every draw underflowed; fall back to a uniform target.
        return std::vector<double>(k, 1.0 / static_cast<double>(k));
    }
    for (double& v : g) {
        v /= total;
    }
    return g;
}

ResponseTemplate make_template(TaskKind task, int cls, std::size_t style, const std::string& subject) {
    const auto& stances = task == TaskKind::review ? phrasebook::kReviewStances : phrasebook::kOpinionStances;
    const auto& reasons = task == TaskKind::review ? phrasebook::kReviewReasons : phrasebook::kOpinionReasons;
    const auto c = static_cast<std::size_t>(cls);

    ResponseTemplate t;
    t.fragments.push_back(split_words(phrasebook::kOpeners[style]));
    t.fragments.push_back(split_words(stances[c]));
    t.fragments.push_back({"about", subject});
    Words reason = split_words(phrasebook::kConnectors[style]);
    for (std::string& w : split_words(reasons[c])) {
        reason.push_back(std::move(w));
    }
    t.fragments.push_back(std::move(reason));
    t.fragments.push_back(split_words(phrasebook::kClosers[style]));
    return t;
}

void validate(const TopicConfig& config) {
    if (config.topics < 1) {
        throw ConfigError("topics must be >= 1");
    }
    if (config.beliefs > kNumBeliefClasses) {
        throw ConfigError("class alphabet exhausted: beliefs = " + std::to_string(config.beliefs) +
                          " exceeds the " + std::to_string(kNumBeliefClasses) + " class tokens");
    }
    if (config.beliefs < 2) {
        throw ConfigError("beliefs must be >= 2");
    }
    if (config.styles < 2 || config.styles > kMaxStyles) {
        throw ConfigError("styles must be in [2, " + std::to_string(kMaxStyles) + "]");
    }
    if (config.task == TaskKind::review && config.beliefs != 5) {
        throw ConfigError("the review task uses exactly 5 rating beliefs");
    }
    const DistributionSource& src = config.distribution;
    if (src.kind == DistributionSource::Kind::explicit_list) {
        if (src.explicit_dists.empty()) {
            throw ConfigError("explicit distribution list is empty");
        }
        for (const auto& d : src.explicit_dists) {
            if (d.size() != static_cast<std::size_t>(config.beliefs)) {
                throw ConfigError("explicit distribution has " + std::to_string(d.size()) +
                                  " entries, expected " + std::to_string(config.beliefs));
            }
            try {
                BeliefDistribution check(d);
            } catch (const DataError& e) {
                throw ConfigError(std::string("explicit distribution invalid: ") + e.what());
            }
        }
    } else if (!(src.alpha > 0.0) || !std::isfinite(src.alpha)) {
        throw ConfigError("dirichlet alpha must be positive");
    }
}

}  // namespace

Words ResponseTemplate::tokens() const {
    Words out;
    for (const Words& f : fragments) {
        out.insert(out.end(), f.begin(), f.end());
    }
    return out;
}

std::string_view to_string(TaskKind kind) {
    return kind == TaskKind::review ? "review" : "opinion";
}

TaskKind parse_task_kind(std::string_view text) {
    if (text == "opinion") {
        return TaskKind::opinion;
    }
    if (text == "review") {
        return TaskKind::review;
    }
    throw ConfigError("unknown task \"" + std::string(text) + "\" (expected opinion or review)");
}

DistributionSource DistributionSource::from_list(std::vector<std::vector<double>> dists) {
    DistributionSource s;
    s.kind = Kind::explicit_list;
    s.explicit_dists = std::move(dists);
    return s;
}

DistributionSource DistributionSource::from_dirichlet(double alpha) {
    DistributionSource s;
    s.kind = Kind::dirichlet;
    s.alpha = alpha;
    return s;
}

std::vector<Topic> generate_topics(const TopicConfig& config, std::uint64_t seed) {
    validate(config);
    const int k = config.beliefs;
    std::vector<Topic> topics;
    topics.reserve(static_cast<std::size_t>(config.topics));

    for (int q = 0; q < config.topics; ++q) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(q)));
        Topic topic;
        topic.id = q;
        const std::string subject = subject_token(q, config.task);

        std::vector<Belief> beliefs;
        if (config.task == TaskKind::review) {
            topic.question = fill_subject(phrasebook::kReviewQuestion, subject);
            for (int r = 1; r <= 5; ++r) {
                beliefs.push_back({BeliefClass{r}, {std::string(phrasebook::kRatings[static_cast<std::size_t>(r - 1)])}});
            }
        } else {
            const auto& scale = phrasebook::kScales[rng.index(phrasebook::kScales.size())];
            topic.question = fill_subject(scale.question, subject);
            const bool with_refusal = k >= 3;
            for (int degree : degrees_for(with_refusal ? k - 1 : k)) {
                beliefs.push_back({BeliefClass{degree}, split_words(scale.by_degree[static_cast<std::size_t>(5 - degree)])});
            }
            if (with_refusal) {
                beliefs.push_back({BeliefClass{0}, {std::string(phrasebook::kRefusal)}});
            }
        }
        topic.beliefs = BeliefSet(std::move(beliefs));
        topic.target = BeliefDistribution(target_for(config, q, rng));

        topic.templates.resize(topic.beliefs.size());
        for (std::size_t b = 0; b < topic.beliefs.size(); ++b) {
            for (int s = 0; s < config.styles; ++s) {
                topic.templates[b].push_back(
                    make_template(config.task, topic.beliefs[b].cls.value, static_cast<std::size_t>(s), subject));
            }
        }
        topics.push_back(std::move(topic));
    }
    return topics;
}

std::vector<PreferenceExample> build_preference_pairs(const Topic& topic, std::size_t n, std::uint64_t seed) {
    if (n < 1) {
        throw ConfigError("build_preference_pairs: n must be >= 1");
    }
    const std::size_t k = topic.num_beliefs();
    const std::size_t styles = topic.num_styles();
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(topic.id)));

    std::vector<PreferenceExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        PreferenceExample ex;
        ex.topic_id = topic.id;
        ex.query = topic.question;
        ex.belief_set = topic.beliefs;
        ex.target_dist = topic.target;
        ex.accepted_belief = rng.categorical(topic.target.probs());
        const std::size_t offset = rng.index(k - 1);
        ex.rejected_belief = offset < ex.accepted_belief ? offset : offset + 1;
        ex.accepted_response = topic.templates[ex.accepted_belief][rng.index(styles)].tokens();
        ex.rejected_response = topic.templates[ex.rejected_belief][rng.index(styles)].tokens();
        out.push_back(std::move(ex));
    }
    return out;
}

TopicConfig DatasetManifest::topic_config() const {
    TopicConfig c;
    c.topics = topics;
    c.beliefs = beliefs;
    c.styles = styles;
    c.task = task;
    c.distribution = distribution;
    return c;
}

std::string_view to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::eval: return "eval";
        case Split::test: return "test";
    }
    return "?";
}

GeneratedData generate_dataset(const DatasetManifest& manifest) {
    GeneratedData data;
    data.topics = generate_topics(manifest.topic_config(), manifest.seed);

    auto build_split = [&](Split split, std::size_t total) {
        std::vector<PreferenceExample> out;
        const std::uint64_t split_seed = mix_seed(manifest.seed, 1000 + static_cast<std::uint64_t>(split));
        const std::size_t q = data.topics.size();
        for (std::size_t t = 0; t < q; ++t) {
            const std::size_t n = total / q + (t < total % q ? 1 : 0);
            if (n == 0) {
                continue;
            }
            auto pairs = build_preference_pairs(data.topics[t], n, split_seed);
            out.insert(out.end(), std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()));
        }
        return out;
    };
    data.train = build_split(Split::train, manifest.splits.train);
    data.eval = build_split(Split::eval, manifest.splits.eval);
    data.test = build_split(Split::test, manifest.splits.test);
    return data;
}

}  // namespace gdpo

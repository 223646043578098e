#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "gdpo/error.hpp"
#include "gdpo/rng.hpp"
#include "gdpo/train.hpp"

namespace gdpo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// First example of every topic, in order of first appearance.
std::vector<const EncodedExample*> one_per_topic(std::span<const EncodedExample> examples) {
    std::vector<const EncodedExample*> out;
    std::map<int, bool> seen;
    for (const EncodedExample& ex : examples) {
        if (seen.emplace(ex.topic_id, true).second) {
            out.push_back(&ex);
        }
    }
    return out;
}

double mean_of(const std::vector<double>& values, std::span<const std::size_t> idx) {
    if (idx.empty()) {
        return kNaN;
    }
    double s = 0.0;
    for (std::size_t i : idx) {
        s += values[i];
    }
    return s / static_cast<double>(idx.size());
}

struct Evaluator {
    std::span<const EncodedExample> eval;
    SubsetSplit split;
    BaselineJsd baselines;
    const ReferencePolicy* loss_reference;
    const ReferencePolicy& margin_reference;
    AlignConfig align;

    TracePoint operator()(const Policy& policy, std::size_t step) const {
        TracePoint p;
        p.step = step;
        p.avg_jsd = mean_topic_jsd(policy, eval);
        p.jsd_majority_baseline = baselines.majority;
        p.jsd_reverse_baseline = baselines.reverse;
        p.jsd_uniform_baseline = baselines.uniform;
        p.jsd_noise_baseline = baselines.noise;
        const SubsetMargins m = subset_margins(policy, margin_reference, eval, split, align);
        p.margin_majority = m.majority;
        p.margin_minority = m.minority;
        p.margin_other = m.other;
        const LossReport rep = batch_loss(policy, loss_reference, eval, align);
        p.loss_total = rep.loss;
        p.loss_kl = rep.diagnostics.kl_term;
        p.loss_pref = rep.diagnostics.pref_term;
        p.loss_nll = rep.diagnostics.belief_nll;
        if (align.method == Method::sft) {
            p.loss_nll = rep.loss;
        }
        return p;
    }
};

TrainResult train_loop(Policy policy, const ReferencePolicy* reference, std::span<const PreferenceExample> train,
                       std::span<const PreferenceExample> eval, const TrainConfig& config) {
    config.validate();
    if (train.empty()) {
        throw DataError("empty training set");
    }
    if (eval.empty()) {
        throw DataError("empty evaluation set");
    }
    const std::vector<EncodedExample> train_enc = encode_examples(policy.vocab(), train);
    const std::vector<EncodedExample> eval_enc = encode_examples(policy.vocab(), eval);

    // SFT has no reference; its margins are measured against the initial policy.
    const ReferencePolicy init_ref = freeze(policy);
    const Evaluator evaluate{eval_enc,
                             split_by_belief_share(eval),
                             mean_baseline_jsd(eval_enc, config.noise_level),
                             reference,
                             reference ? *reference : init_ref,
                             config.align};

    TrainResult result{policy, {}};
    double best = std::numeric_limits<double>::infinity();
    auto record = [&](const Policy& p, std::size_t step) {
        const TracePoint point = evaluate(p, step);
        result.trace.points.push_back(point);
        if (config.select_best && point.avg_jsd < best) {
            best = point.avg_jsd;
            result.policy = p;
        }
    };
    record(policy, 0);

    RmsPropState rms;
    std::size_t sgd_steps = 0;
    std::size_t step = 0;
    std::vector<std::size_t> order(train_enc.size());
    std::vector<EncodedExample> batch;
    bool done = false;
    for (std::size_t epoch = 0; epoch < config.epochs && !done; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(mix_seed(config.seed, epoch));
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            if (config.max_steps != 0 && step >= config.max_steps) {
                done = true;
                break;
            }
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(train_enc[order[i]]);
            }
            const LossReport rep = batch_loss(policy, reference, batch, config.align);
            if (config.optimizer == OptimizerKind::rmsprop) {
                rmsprop_step(policy.params(), rep.grad, rms, config.learning_rate, config.warmup_steps);
            } else {
                sgd_step(policy.params(), rep.grad, sgd_steps, config.learning_rate, config.warmup_steps);
            }
            ++step;
            if (config.eval_every != 0 && step % config.eval_every == 0) {
                record(policy, step);
            }
        }
    }
    if (result.trace.points.back().step != step) {
        record(policy, step);
    }
    if (!config.select_best) {
        result.policy = std::move(policy);
    }
    return result;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be >= 0");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be >= 1");
    }
    if (!(noise_level >= 0.0)) {
        throw ConfigError("noise_level must be >= 0");
    }
    align.validate();
}

SubsetSplit split_by_belief_share(std::span<const PreferenceExample> examples) {
    SubsetSplit split;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto p = examples[i].target_dist.probs();
        const std::size_t hi = argmax_first(p);
        std::size_t lo = p.size();
        for (std::size_t k = 0; k < p.size(); ++k) {
            if (p[k] > 0.0 && (lo == p.size() || p[k] < p[lo])) {
                lo = k;
            }
        }
        const std::size_t b = examples[i].accepted_belief;
        if (b == hi) {
            split.majority.push_back(i);
        } else if (b == lo) {
            split.minority.push_back(i);
        } else {
            split.other.push_back(i);
        }
    }
    return split;
}

double mean_topic_jsd(const Policy& policy, std::span<const EncodedExample> examples) {
    const auto topics = one_per_topic(examples);
    if (topics.empty()) {
        throw DataError("empty evaluation set");
    }
    double s = 0.0;
    for (const EncodedExample* ex : topics) {
        s += js_distance(policy.belief_distribution(ex->query, ex->class_tokens), ex->target);
    }
    return s / static_cast<double>(topics.size());
}

BaselineJsd mean_baseline_jsd(std::span<const EncodedExample> examples, double noise_level) {
    const auto topics = one_per_topic(examples);
    BaselineJsd out;
    if (topics.empty()) {
        return out;
    }
    for (const EncodedExample* ex : topics) {
        const ReferenceBaselines b = reference_baselines(ex->target, noise_level);
        out.majority += js_distance(b.majority, ex->target);
        out.reverse += js_distance(b.reverse, ex->target);
        out.uniform += js_distance(b.uniform, ex->target);
        out.noise += js_distance(b.noise, ex->target);
    }
    const double n = static_cast<double>(topics.size());
    out.majority /= n;
    out.reverse /= n;
    out.uniform /= n;
    out.noise /= n;
    return out;
}

SubsetMargins subset_margins(const Policy& policy, const ReferencePolicy& reference,
                             std::span<const EncodedExample> examples, const SubsetSplit& split,
                             const AlignConfig& config) {
    std::vector<double> m(examples.size());
    const bool conditioned = config.method == Method::gdpo || config.method == Method::kto_gdpo;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const EncodedExample& ex = examples[i];
        if (conditioned) {
            m[i] = reward_margin(policy, reference, ex.belief_context(), ex.accepted_response, ex.rejected_response,
                                 config.beta);
        } else {
            m[i] = reward_margin(policy, reference, ex.query, ex.chosen(), ex.rejected_seq(), config.beta);
        }
    }
    return {mean_of(m, split.majority), mean_of(m, split.minority), mean_of(m, split.other)};
}

TrainResult run_sft(Policy init, std::span<const PreferenceExample> train, std::span<const PreferenceExample> eval,
                    const TrainConfig& config) {
    TrainConfig c = config;
    c.align.method = Method::sft;
    return train_loop(std::move(init), nullptr, train, eval, c);
}

std::vector<PreferenceExample> resample_uniform_beliefs(std::span<const PreferenceExample> examples,
                                                        std::span<const Topic> topics, std::uint64_t seed) {
    std::map<int, const Topic*> by_id;
    for (const Topic& t : topics) {
        by_id[t.id] = &t;
    }
    Rng rng(mix_seed(seed, 0x756e69666f726dULL));
    std::vector<PreferenceExample> out(examples.begin(), examples.end());
    for (PreferenceExample& ex : out) {
        auto it = by_id.find(ex.topic_id);
        if (it == by_id.end()) {
            throw DataError("unknown topic id " + std::to_string(ex.topic_id));
        }
        const Topic& topic = *it->second;
        const std::size_t k = topic.num_beliefs();
        ex.accepted_belief = rng.index(k);
        ex.accepted_response = topic.templates[ex.accepted_belief][rng.index(topic.num_styles())].tokens();
        if (ex.rejected_belief == ex.accepted_belief) {
            ex.rejected_belief = (ex.accepted_belief + 1 + rng.index(k - 1)) % k;
            ex.rejected_response = topic.templates[ex.rejected_belief][rng.index(topic.num_styles())].tokens();
        }
    }
    return out;
}

TrainResult run_uniform_sft(Policy init, std::span<const Topic> topics, std::span<const PreferenceExample> train,
                            std::span<const PreferenceExample> eval, const TrainConfig& config) {
    const std::vector<PreferenceExample> uniform = resample_uniform_beliefs(train, topics, config.seed);
    return run_sft(std::move(init), uniform, eval, config);
}

TrainResult run_alignment(Method method, const Policy& sft, std::span<const PreferenceExample> train,
                          std::span<const PreferenceExample> eval, const TrainConfig& config) {
    if (method == Method::sft) {
        throw ConfigError("alignment method must be dpo, gdpo or kto-gdpo");
    }
    TrainConfig c = config;
    c.align.method = method;
    const ReferencePolicy reference = freeze(sft);
    return train_loop(sft, &reference, train, eval, c);
}

}  // namespace gdpo

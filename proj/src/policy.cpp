#include <algorithm>
#include <cmath>

#include "gdpo/error.hpp"
#include "gdpo/policy.hpp"
#include "gdpo/rng.hpp"

namespace gdpo {

namespace {

// Log-softmax of one logit row.
Eigen::RowVectorXd log_softmax(const Eigen::Ref<const Eigen::RowVectorXd>& logits) {
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    return logits.array() - lse;
}

Eigen::RowVectorXd softmax(const Eigen::Ref<const Eigen::RowVectorXd>& logits) {
    Eigen::RowVectorXd e = (logits.array() - logits.maxCoeff()).exp();
    return e / e.sum();
}

}  // namespace

std::string_view to_string(Backend backend) {
    return backend == Backend::tabular ? "tabular" : "neural";
}

Backend parse_backend(std::string_view text) {
    if (text == "tabular") {
        return Backend::tabular;
    }
    if (text == "neural") {
        return Backend::neural;
    }
    throw ConfigError("unknown backend \"" + std::string(text) + "\" (expected tabular or neural)");
}

Policy::Policy(Vocabulary vocab, std::unique_ptr<SequenceModel> model) : vocab_(std::move(vocab)), model_(std::move(model)) {
    if (!model_) {
        throw ConfigError("policy without a model");
    }
    if (model_->vocab_size() != vocab_.size()) {
        throw ConfigError("model and vocabulary sizes differ");
    }
}

Policy::Policy(const Policy& other) : vocab_(other.vocab_), model_(other.model_->clone()) {}

Policy& Policy::operator=(const Policy& other) {
    if (this != &other) {
        vocab_ = other.vocab_;
        model_ = other.model_->clone();
    }
    return *this;
}

void Policy::randomize(std::uint64_t seed, double scale) {
    Rng rng(seed);
    for (double& p : model_->params()) {
        p = scale * rng.normal();
    }
}

void Policy::check_tokens(std::span<const TokenId> seq) const {
    if (seq.size() > model_->context_length()) {
        throw DataError("sequence of length " + std::to_string(seq.size()) + " exceeds context length " +
                        std::to_string(model_->context_length()));
    }
    for (TokenId t : seq) {
        if (!vocab_.contains(t)) {
            throw DataError("out-of-vocabulary token id " + std::to_string(t));
        }
    }
}

double Policy::log_prob(std::span<const TokenId> context, std::span<const TokenId> continuation) const {
    if (context.empty()) {
        throw DataError("empty context");
    }
    const TokenSeq full = concat(context, continuation);
    check_tokens(full);
    if (continuation.empty()) {
        return 0.0;
    }
    const LogitMatrix logits = model_->forward(full, context.size() - 1, continuation.size());
    double total = 0.0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        total += log_softmax(logits.row(r))(continuation[static_cast<std::size_t>(r)]);
    }
    return total;
}

double Policy::add_grad_log_prob(std::span<const TokenId> context, std::span<const TokenId> continuation, double scale,
                                 std::span<double> grad) const {
    if (context.empty()) {
        throw DataError("empty context");
    }
    if (grad.size() != num_params()) {
        throw ConfigError("gradient buffer has the wrong size");
    }
    const TokenSeq full = concat(context, continuation);
    check_tokens(full);
    if (continuation.empty()) {
        return 0.0;
    }
    LogitMatrix logits = model_->forward(full, context.size() - 1, continuation.size());
    double total = 0.0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const auto target = continuation[static_cast<std::size_t>(r)];
        const Eigen::RowVectorXd lp = log_softmax(logits.row(r));
        total += lp(target);
        logits.row(r) = -scale * lp.array().exp();
        logits(r, target) += scale;
    }
    model_->backward(full, context.size() - 1, logits, grad);
    return total;
}

GradientVector Policy::grad_log_prob(std::span<const TokenId> context, std::span<const TokenId> continuation) const {
    GradientVector g(num_params(), 0.0);
    add_grad_log_prob(context, continuation, 1.0, g);
    return g;
}

std::vector<double> Policy::next_token_probs(std::span<const TokenId> prefix) const {
    if (prefix.empty()) {
        throw DataError("empty prefix");
    }
    check_tokens(prefix);
    const LogitMatrix logits = model_->forward(prefix, prefix.size() - 1, 1);
    const Eigen::RowVectorXd p = softmax(logits.row(0));
    return std::vector<double>(p.data(), p.data() + p.size());
}

std::vector<double> Policy::belief_logits(std::span<const TokenId> query, std::span<const TokenId> class_tokens) const {
    if (query.empty()) {
        throw DataError("empty query");
    }
    check_tokens(query);
    const LogitMatrix logits = model_->forward(query, query.size() - 1, 1);
    std::vector<double> out;
    out.reserve(class_tokens.size());
    for (TokenId t : class_tokens) {
        if (!vocab_.contains(t)) {
            throw DataError("out-of-vocabulary token id " + std::to_string(t));
        }
        out.push_back(logits(0, t));
    }
    return out;
}

BeliefDistribution Policy::belief_distribution(std::span<const TokenId> query,
                                               std::span<const TokenId> class_tokens) const {
    const std::vector<double> full = next_token_probs(query);
    std::vector<double> p;
    p.reserve(class_tokens.size());
    double mass = 0.0;
    for (TokenId t : class_tokens) {
        if (!vocab_.contains(t)) {
            throw DataError("out-of-vocabulary token id " + std::to_string(t));
        }
        p.push_back(full[static_cast<std::size_t>(t)]);
        mass += p.back();
    }
    if (!(mass >= 1e-12)) {
        throw NumericError("no belief mass");
    }
    for (double& v : p) {
        v /= mass;
    }
    return BeliefDistribution(std::move(p));
}

void Policy::add_grad_belief_logits(std::span<const TokenId> query, std::span<const TokenId> class_tokens,
                                    std::span<const double> dlogits, std::span<double> grad) const {
    if (query.empty()) {
        throw DataError("empty query");
    }
    if (dlogits.size() != class_tokens.size()) {
        throw ConfigError("belief logit gradient has the wrong size");
    }
    check_tokens(query);
    LogitMatrix d = LogitMatrix::Zero(1, static_cast<Eigen::Index>(vocab_.size()));
    for (std::size_t k = 0; k < class_tokens.size(); ++k) {
        d(0, class_tokens[k]) += dlogits[k];
    }
    model_->backward(query, query.size() - 1, d, grad);
}

Sample Policy::sample(std::span<const TokenId> query, const SampleOptions& options) const {
    if (!options.greedy && !(options.temperature > 0.0)) {
        throw ConfigError("sampling temperature must be > 0");
    }
    if (query.empty()) {
        throw DataError("empty query");
    }
    check_tokens(query);
    const std::size_t room = model_->context_length() - query.size();
    const std::size_t cap = options.max_tokens == 0 ? room : std::min(room, options.max_tokens);

    Rng rng(options.seed);
    TokenSeq seq(query.begin(), query.end());
    Sample out;
    enum class Phase { belief, description, response } phase = Phase::belief;
    bool ended = false;
    while (out.tokens.size() < cap) {
        const LogitMatrix logits = model_->forward(seq, seq.size() - 1, 1);
        TokenId next = 0;
        if (options.greedy) {
            Eigen::Index at = 0;
            logits.row(0).maxCoeff(&at);
            next = static_cast<TokenId>(at);
        } else {
            const Eigen::RowVectorXd p = softmax(logits.row(0) / options.temperature);
            next = static_cast<TokenId>(rng.categorical(std::span<const double>(p.data(), p.size())));
        }
        seq.push_back(next);
        out.tokens.push_back(next);
        if (next == Vocabulary::kEos) {
            ended = true;
            break;
        }
        if (phase == Phase::belief) {
            phase = Phase::description;
            if (Vocabulary::class_of(next)) {
                out.class_token = next;
                continue;
            }
        }
        if (phase == Phase::description) {
            if (next == Vocabulary::kSep) {
                phase = Phase::response;
            } else {
                out.description.push_back(next);
            }
            continue;
        }
        out.response.push_back(next);
    }
    out.truncated = !ended;
    return out;
}

ReferencePolicy freeze(const Policy& policy) {
    return ReferencePolicy(policy);
}

Policy make_tabular_policy(const Vocabulary& vocab, std::span<const Topic> topics, int window,
                           std::size_t context_length) {
    auto model = std::make_unique<TabularModel>(vocab.size(), window, context_length);
    for (const Topic& topic : topics) {
        const TokenSeq query = encode_query(vocab, topic.question);
        std::vector<TokenSeq> responses;
        for (const auto& per_belief : topic.templates) {
            for (const ResponseTemplate& tpl : per_belief) {
                const Words words = tpl.tokens();
                responses.push_back(encode_response(vocab, words));
            }
        }
        for (const Belief& b : topic.beliefs.beliefs()) {
            const TokenSeq prefix = concat(query, encode_belief(vocab, b));
            for (const TokenSeq& r : responses) {
                model->register_sequence(concat(prefix, r));
            }
        }
    }
    return Policy(vocab, std::move(model));
}

Policy make_neural_policy(const Vocabulary& vocab, const NeuralConfig& config) {
    return Policy(vocab, std::make_unique<NeuralModel>(vocab.size(), config));
}

}  // namespace gdpo

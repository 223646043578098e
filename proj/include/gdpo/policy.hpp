#pragma once

// Autoregressive policies over the closed vocabulary: exact sequence
// log-probabilities, their gradients, belief-token distributions and sampling.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "gdpo/core.hpp"
#include "gdpo/datagen.hpp"

namespace gdpo {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;
using GradientVector = std::vector<double>;

// Token ids 0..2 are <bos>, <eos>, <sep>; ids 3..8 are the belief class tokens
// B[0]..B[5]; everything after that is ordinary text.
class Vocabulary {
public:
    static constexpr TokenId kBos = 0;
    static constexpr TokenId kEos = 1;
    static constexpr TokenId kSep = 2;
    static constexpr TokenId kFirstClass = 3;

    Vocabulary();
    // The list must start with the reserved tokens in the order above.
    explicit Vocabulary(std::vector<std::string> tokens);

    // Reserved tokens followed by every word of every topic (question,
    // belief descriptions, templates) in first-appearance order.
    static Vocabulary from_topics(std::span<const Topic> topics);

    TokenId add(const std::string& token);

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    std::optional<TokenId> find(const std::string& token) const;
    bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < tokens_.size(); }

    TokenSeq encode(std::span<const std::string> words) const;
    Words decode(std::span<const TokenId> ids) const;

    static TokenId class_token(BeliefClass cls) { return kFirstClass + cls.value; }
    static std::optional<BeliefClass> class_of(TokenId id);

    std::uint64_t hash() const;

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

// Sequence layout shared by training, evaluation and sampling:
//   query      = <bos> question
//   belief     = B[c] description <sep>
//   response   = words <eos>
TokenSeq encode_query(const Vocabulary& vocab, std::span<const std::string> question);
TokenSeq encode_belief(const Vocabulary& vocab, const Belief& belief);  // class + description + <sep>
TokenSeq encode_response(const Vocabulary& vocab, std::span<const std::string> words);

TokenSeq concat(std::span<const TokenId> a, std::span<const TokenId> b);

enum class Backend { tabular, neural };

std::string_view to_string(Backend backend);
Backend parse_backend(std::string_view text);

using LogitMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A next-token model with a flat parameter vector. Position t of a sequence
// yields the logits of the token that follows seq[0..t].
class SequenceModel {
public:
    virtual ~SequenceModel() = default;

    virtual Backend backend() const = 0;
    virtual std::size_t vocab_size() const = 0;
    virtual std::size_t context_length() const = 0;
    virtual std::span<const double> params() const = 0;
    virtual std::span<double> params() = 0;

    // Logits for positions [first, first + count); seq must hold at least
    // first + count tokens.
    virtual LogitMatrix forward(std::span<const TokenId> seq, std::size_t first, std::size_t count) const = 0;

    // Accumulates d(sum_r <dlogits.row(r), logits.row(r)>)/d(theta) into grad.
    virtual void backward(std::span<const TokenId> seq, std::size_t first, const LogitMatrix& dlogits,
                          std::span<double> grad) const = 0;

    virtual std::unique_ptr<SequenceModel> clone() const = 0;
};

// Logit table indexed by a hash of the last `window` tokens. Rows are
// registered up front from the sequences the model will see; row 0 is shared
// by every unregistered context.
class TabularModel final : public SequenceModel {
public:
    TabularModel(std::size_t vocab_size, int window, std::size_t context_length);

    static std::uint64_t context_key(std::span<const TokenId> prefix, int window);

    // Registers every proper prefix of seq (the contexts that predict seq[1..]).
    void register_sequence(std::span<const TokenId> seq);
    // Registers a context key directly; used when restoring checkpoints.
    std::size_t register_key(std::uint64_t key);

    std::size_t num_rows() const { return keys_.size() + 1; }
    const std::vector<std::uint64_t>& keys() const { return keys_; }
    int window() const { return window_; }

    std::size_t row_of(std::span<const TokenId> prefix) const;
    std::span<double> row(std::size_t r);
    std::span<const double> row(std::size_t r) const;

    Backend backend() const override { return Backend::tabular; }
    std::size_t vocab_size() const override { return vocab_size_; }
    std::size_t context_length() const override { return context_length_; }
    std::span<const double> params() const override { return theta_; }
    std::span<double> params() override { return theta_; }
    LogitMatrix forward(std::span<const TokenId> seq, std::size_t first, std::size_t count) const override;
    void backward(std::span<const TokenId> seq, std::size_t first, const LogitMatrix& dlogits,
                  std::span<double> grad) const override;
    std::unique_ptr<SequenceModel> clone() const override { return std::make_unique<TabularModel>(*this); }

private:
    std::size_t vocab_size_;
    int window_;
    std::size_t context_length_;
    std::vector<std::uint64_t> keys_;
    std::unordered_map<std::uint64_t, std::size_t> rows_;
    std::vector<double> theta_;
};

struct NeuralConfig {
    int d_model = 16;
    int layers = 1;
    std::size_t context_length = 64;
    double init_scale = 0.1;
    std::uint64_t init_seed = 1;

    bool operator==(const NeuralConfig&) const = default;
};

// Causal single-head self-attention blocks (attention + tanh MLP, residual,
// no normalization) with hand-written reverse accumulation. The output head
// starts at zero so a fresh model predicts the uniform distribution.
class NeuralModel final : public SequenceModel {
public:
    NeuralModel(std::size_t vocab_size, const NeuralConfig& config);

    const NeuralConfig& config() const { return config_; }

    Backend backend() const override { return Backend::neural; }
    std::size_t vocab_size() const override { return vocab_size_; }
    std::size_t context_length() const override { return config_.context_length; }
    std::span<const double> params() const override { return theta_; }
    std::span<double> params() override { return theta_; }
    LogitMatrix forward(std::span<const TokenId> seq, std::size_t first, std::size_t count) const override;
    void backward(std::span<const TokenId> seq, std::size_t first, const LogitMatrix& dlogits,
                  std::span<double> grad) const override;
    std::unique_ptr<SequenceModel> clone() const override { return std::make_unique<NeuralModel>(*this); }

private:
    struct Layout;
    struct Trace;

    Trace run(std::span<const TokenId> seq, std::size_t n) const;

    std::size_t vocab_size_;
    NeuralConfig config_;
    std::vector<double> theta_;
};

struct SampleOptions {
    double temperature = 1.0;
    bool greedy = false;
    std::uint64_t seed = 0;
    std::size_t max_tokens = 0;  // 0: up to the context length
};

struct Sample {
    std::optional<TokenId> class_token;  // empty when the first token is not a class token
    TokenSeq description;
    TokenSeq response;
    bool truncated = false;  // no <eos> before the length cap
    TokenSeq tokens;         // everything generated, unsegmented
};

class Policy {
public:
    Policy(Vocabulary vocab, std::unique_ptr<SequenceModel> model);

    Policy(const Policy& other);
    Policy& operator=(const Policy& other);
    Policy(Policy&&) noexcept = default;
    Policy& operator=(Policy&&) noexcept = default;

    const Vocabulary& vocab() const { return vocab_; }
    Backend backend() const { return model_->backend(); }
    std::size_t context_length() const { return model_->context_length(); }
    std::size_t num_params() const { return model_->params().size(); }
    std::span<const double> params() const { return model_->params(); }
    std::span<double> params() { return model_->params(); }
    const SequenceModel& model() const { return *model_; }
    SequenceModel& model() { return *model_; }

    // Sets every parameter to an independent N(0, scale^2) draw.
    void randomize(std::uint64_t seed, double scale);

    // log pi(continuation | context); context must be non-empty.
    double log_prob(std::span<const TokenId> context, std::span<const TokenId> continuation) const;
    GradientVector grad_log_prob(std::span<const TokenId> context, std::span<const TokenId> continuation) const;
    // grad += scale * d log_prob / d theta; returns log_prob.
    double add_grad_log_prob(std::span<const TokenId> context, std::span<const TokenId> continuation, double scale,
                             std::span<double> grad) const;

    std::vector<double> next_token_probs(std::span<const TokenId> prefix) const;

    // Next-token distribution after the query restricted to class_tokens and
    // renormalized. Throws NumericError("no belief mass") below 1e-12.
    BeliefDistribution belief_distribution(std::span<const TokenId> query, std::span<const TokenId> class_tokens) const;
    // Logits of class_tokens at the post-query position.
    std::vector<double> belief_logits(std::span<const TokenId> query, std::span<const TokenId> class_tokens) const;
    // grad += d(sum_k dlogits[k] * belief_logits[k]) / d theta.
    void add_grad_belief_logits(std::span<const TokenId> query, std::span<const TokenId> class_tokens,
                                std::span<const double> dlogits, std::span<double> grad) const;

    Sample sample(std::span<const TokenId> query, const SampleOptions& options) const;

private:
    void check_tokens(std::span<const TokenId> seq) const;

    Vocabulary vocab_;
    std::unique_ptr<SequenceModel> model_;
};

// A frozen copy used as the reference policy. It exposes evaluation only, so
// it can never be handed to an optimizer.
class ReferencePolicy {
public:
    explicit ReferencePolicy(Policy policy) : policy_(std::move(policy)) {}

    const Policy& policy() const { return policy_; }
    double log_prob(std::span<const TokenId> context, std::span<const TokenId> continuation) const {
        return policy_.log_prob(context, continuation);
    }

private:
    Policy policy_;
};

ReferencePolicy freeze(const Policy& policy);

// Fresh tabular policy with rows registered for every sequence a topic set can
// produce under the training layout (each belief prefix combined with every
// template of every belief of the topic). Logits start at zero.
Policy make_tabular_policy(const Vocabulary& vocab, std::span<const Topic> topics, int window = 8,
                           std::size_t context_length = 64);
Policy make_neural_policy(const Vocabulary& vocab, const NeuralConfig& config);

// Versioned binary container; see docs/checkpoint.md.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const Policy& policy, const std::filesystem::path& path);
Policy load_checkpoint(const std::filesystem::path& path);

}  // namespace gdpo

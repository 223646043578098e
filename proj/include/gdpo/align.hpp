#pragma once

// Training objectives: SFT, DPO, the two GDPO terms and KTO-GDPO. Every loss
// returns its exact gradient with respect to the policy parameters.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gdpo/core.hpp"
#include "gdpo/datagen.hpp"
#include "gdpo/policy.hpp"

namespace gdpo {

enum class Method { sft, dpo, gdpo, kto_gdpo };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

// Which tokens of the observed belief enter the belief NLL of the calibration
// loss.
enum class BeliefNllScope { class_and_description, class_only };

struct AlignConfig {
    double beta = 0.1;
    Method method = Method::gdpo;
    double lambda_d = 1.0;
    double lambda_u = 1.0;
    // Scales the KL part of the calibration loss.
    double calibration_weight = 1.0;
    // Ablation switches for the two GDPO terms.
    bool calibration_term = true;
    bool preference_term = true;
    BeliefNllScope nll_scope = BeliefNllScope::class_and_description;

    void validate() const;
};

struct LossDiagnostics {
    double reward_margin = 0.0;
    double kl_term = 0.0;
    double belief_nll = 0.0;
    double pref_term = 0.0;
};

struct LossReport {
    double loss = 0.0;
    GradientVector grad;
    LossDiagnostics diagnostics;
};

// A preference example in token ids.
struct EncodedExample {
    int topic_id = 0;
    TokenSeq query;                     // <bos> question
    std::vector<TokenId> class_tokens;  // one per belief of the topic
    std::vector<TokenSeq> beliefs;      // class + description + <sep>, one per belief
    BeliefDistribution target;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    TokenSeq accepted_response;  // words + <eos>
    TokenSeq rejected_response;

    TokenSeq chosen() const { return concat(beliefs[accepted], accepted_response); }
    TokenSeq rejected_seq() const { return concat(beliefs[rejected], rejected_response); }
    TokenSeq belief_context() const { return concat(query, beliefs[accepted]); }
};

EncodedExample encode_example(const Vocabulary& vocab, const PreferenceExample& example);
std::vector<EncodedExample> encode_examples(const Vocabulary& vocab, std::span<const PreferenceExample> examples);

// Mean token NLL of belief + response given the query.
LossReport sft_loss(const Policy& policy, const EncodedExample& example);

// -log sigmoid(beta * [(log pi - log ref)(y_c|x) - (log pi - log ref)(y_r|x)]).
LossReport dpo_loss(const Policy& policy, const ReferencePolicy& reference, std::span<const TokenId> context,
                    std::span<const TokenId> chosen, std::span<const TokenId> rejected, double beta);

double reward_margin(const Policy& policy, const ReferencePolicy& reference, std::span<const TokenId> context,
                     std::span<const TokenId> chosen, std::span<const TokenId> rejected, double beta);

// calibration_weight * KL(p_theta(.|x) || p*) - log p_theta(b_c|x). The KL runs
// over the belief class tokens, renormalized.
LossReport calibration_loss(const Policy& policy, const EncodedExample& example, const AlignConfig& config);

// DPO on the accepted and rejected responses, both conditioned on x + b_c.
LossReport belief_conditioned_pref_loss(const Policy& policy, const ReferencePolicy& reference,
                                        const EncodedExample& example, double beta);

LossReport gdpo_loss(const Policy& policy, const ReferencePolicy& reference, const EncodedExample& example,
                     const AlignConfig& config);

struct KtoItem {
    TokenSeq context;  // x + desirable belief
    TokenSeq response;
    bool desirable = true;
};

// Two items per example: (x + b_c, y_c) desirable and (x + b_c, y_r) undesirable.
std::vector<KtoItem> kto_items(std::span<const EncodedExample> examples);

// Mean over items of lambda_y - v(x, y). The reference point z0 is
// max(0, mean_i of the policy/reference log ratio of the mismatched
// completion y_{(i+1) mod n} under context i); its gradient is included.
LossReport kto_gdpo_loss(const Policy& policy, const ReferencePolicy& reference, std::span<const KtoItem> items,
                         const AlignConfig& config);

// Mean loss of config.method over a batch. sft ignores the reference (may be
// null); kto-gdpo adds the mean calibration loss to the KTO term over the
// batch's items.
LossReport batch_loss(const Policy& policy, const ReferencePolicy* reference, std::span<const EncodedExample> batch,
                      const AlignConfig& config);

}  // namespace gdpo

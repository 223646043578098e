#include <algorithm>
#include <cmath>

#include "gdpo/align.hpp"
#include "gdpo/error.hpp"

namespace gdpo {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// -log sigmoid(x)
double neg_log_sigmoid(double x) {
    return std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw NumericError(std::string("non-finite ") + what);
    }
}

GradientVector zeros(const Policy& policy) {
    return GradientVector(policy.num_params(), 0.0);
}

double acc_sft(const Policy& policy, const EncodedExample& ex, double scale, std::span<double> grad) {
    const TokenSeq seq = ex.chosen();
    const double n = static_cast<double>(seq.size());
    const double lp = policy.add_grad_log_prob(ex.query, seq, -scale / n, grad);
    require_finite(lp, "log-probability");
    return -lp / n;
}

struct DpoTerms {
    double loss;
    double margin;
};

DpoTerms acc_dpo(const Policy& policy, const ReferencePolicy& reference, std::span<const TokenId> context,
                 std::span<const TokenId> chosen, std::span<const TokenId> rejected, double beta, double scale,
                 std::span<double> grad) {
    const double margin = reward_margin(policy, reference, context, chosen, rejected, beta);
    // d/dm of -log sigmoid(m) is -sigmoid(-m).
    const double coef = -sigmoid(-margin) * beta * scale;
    policy.add_grad_log_prob(context, chosen, coef, grad);
    policy.add_grad_log_prob(context, rejected, -coef, grad);
    return {neg_log_sigmoid(margin), margin};
}

struct CalibrationTerms {
    double kl;
    double nll;
};

TokenSeq nll_tokens(const EncodedExample& ex, BeliefNllScope scope) {
    const TokenSeq& b = ex.beliefs[ex.accepted];
    if (scope == BeliefNllScope::class_only) {
        return TokenSeq(b.begin(), b.begin() + 1);
    }
    return TokenSeq(b.begin(), b.end() - 1);  // drop <sep>
}

CalibrationTerms acc_calibration(const Policy& policy, const EncodedExample& ex, const AlignConfig& config,
                                 double scale, std::span<double> grad) {
    const std::vector<double> logits = policy.belief_logits(ex.query, ex.class_tokens);
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        p[k] = std::exp(logits[k] - mx);
        z += p[k];
    }
    for (double& v : p) {
        v /= z;
    }
    const auto target = ex.target.probs();
    const double kl = kl_divergence(p, target);
    require_finite(kl, "KL term");

    // Same floor-then-renormalize rule as kl_divergence.
    std::vector<double> q(target.begin(), target.end());
    if (std::any_of(q.begin(), q.end(), [](double v) { return v < DivergenceConfig::zero_floor; })) {
        double s = 0.0;
        for (double& v : q) {
            v = std::max(v, DivergenceConfig::zero_floor);
            s += v;
        }
        for (double& v : q) {
            v /= s;
        }
    }
    if (config.calibration_weight != 0.0) {
        std::vector<double> d(p.size(), 0.0);
        for (std::size_t k = 0; k < p.size(); ++k) {
            if (p[k] > 0.0) {
                d[k] = scale * config.calibration_weight * p[k] * (std::log(p[k] / q[k]) - kl);
            }
        }
        policy.add_grad_belief_logits(ex.query, ex.class_tokens, d, grad);
    }

    const TokenSeq tokens = nll_tokens(ex, config.nll_scope);
    const double lp = policy.add_grad_log_prob(ex.query, tokens, -scale, grad);
    require_finite(lp, "belief log-probability");
    return {kl, -lp};
}

DpoTerms acc_conditioned_pref(const Policy& policy, const ReferencePolicy& reference, const EncodedExample& ex,
                              double beta, double scale, std::span<double> grad) {
    const TokenSeq ctx = ex.belief_context();
    return acc_dpo(policy, reference, ctx, ex.accepted_response, ex.rejected_response, beta, scale, grad);
}

struct GdpoTerms {
    double loss;
    LossDiagnostics diag;
};

GdpoTerms acc_gdpo(const Policy& policy, const ReferencePolicy& reference, const EncodedExample& ex,
                   const AlignConfig& config, double scale, std::span<double> grad) {
    GdpoTerms out{0.0, {}};
    if (config.calibration_term) {
        const CalibrationTerms c = acc_calibration(policy, ex, config, scale, grad);
        out.diag.kl_term = c.kl;
        out.diag.belief_nll = c.nll;
        out.loss += config.calibration_weight * c.kl + c.nll;
    }
    if (config.preference_term) {
        const DpoTerms d = acc_conditioned_pref(policy, reference, ex, config.beta, scale, grad);
        out.diag.pref_term = d.loss;
        out.diag.reward_margin = d.margin;
        out.loss += d.loss;
    }
    return out;
}

struct KtoTerms {
    double loss;
    double margin;
};

KtoTerms acc_kto(const Policy& policy, const ReferencePolicy& reference, std::span<const KtoItem> items,
                 const AlignConfig& config, double scale, std::span<double> grad) {
    if (items.empty()) {
        throw DataError("empty KTO batch");
    }
    const std::size_t n = items.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = policy.log_prob(items[i].context, items[i].response) -
               reference.log_prob(items[i].context, items[i].response);
        require_finite(r[i], "log-ratio");
    }
    double zbar = 0.0;
    if (n > 1) {
        for (std::size_t i = 0; i < n; ++i) {
            const KtoItem& other = items[(i + 1) % n];
            const double m = policy.log_prob(items[i].context, other.response) -
                             reference.log_prob(items[i].context, other.response);
            require_finite(m, "log-ratio");
            zbar += m;
        }
        zbar *= inv_n;
    }
    const double z0 = std::max(0.0, zbar);

    double loss = 0.0;
    double z_coef = 0.0;
    double des_sum = 0.0, und_sum = 0.0;
    std::size_t des_n = 0, und_n = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double sign = items[i].desirable ? 1.0 : -1.0;
        const double lambda = items[i].desirable ? config.lambda_d : config.lambda_u;
        const double s = sigmoid(config.beta * sign * (r[i] - z0));
        loss += (lambda - lambda * s) * inv_n;
        const double c = -lambda * config.beta * s * (1.0 - s) * sign * inv_n * scale;
        policy.add_grad_log_prob(items[i].context, items[i].response, c, grad);
        z_coef -= c;
        if (items[i].desirable) {
            des_sum += r[i];
            ++des_n;
        } else {
            und_sum += r[i];
            ++und_n;
        }
    }
    if (zbar > 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            policy.add_grad_log_prob(items[i].context, items[(i + 1) % n].response, z_coef * inv_n, grad);
        }
    }
    const double des_mean = des_n ? des_sum / static_cast<double>(des_n) : 0.0;
    const double und_mean = und_n ? und_sum / static_cast<double>(und_n) : 0.0;
    return {loss, config.beta * (des_mean - und_mean)};
}

}  // namespace

std::string_view to_string(Method method) {
    switch (method) {
        case Method::sft:
            return "sft";
        case Method::dpo:
            return "dpo";
        case Method::gdpo:
            return "gdpo";
        case Method::kto_gdpo:
            return "kto-gdpo";
    }
    return "?";
}

Method parse_method(std::string_view text) {
    for (Method m : {Method::sft, Method::dpo, Method::gdpo, Method::kto_gdpo}) {
        if (to_string(m) == text) {
            return m;
        }
    }
    throw ConfigError("unknown method \"" + std::string(text) + "\" (expected sft, dpo, gdpo or kto-gdpo)");
}

void AlignConfig::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) {
        throw ConfigError("beta must be > 0");
    }
    if (!(lambda_d > 0.0) || !(lambda_u > 0.0)) {
        throw ConfigError("lambda_d and lambda_u must be > 0");
    }
    if (!(calibration_weight >= 0.0) || !std::isfinite(calibration_weight)) {
        throw ConfigError("calibration_weight must be >= 0");
    }
}

EncodedExample encode_example(const Vocabulary& vocab, const PreferenceExample& example) {
    EncodedExample ex;
    ex.topic_id = example.topic_id;
    ex.query = encode_query(vocab, example.query);
    for (const Belief& b : example.belief_set.beliefs()) {
        ex.class_tokens.push_back(Vocabulary::class_token(b.cls));
        ex.beliefs.push_back(encode_belief(vocab, b));
    }
    ex.target = example.target_dist;
    ex.accepted = example.accepted_belief;
    ex.rejected = example.rejected_belief;
    ex.accepted_response = encode_response(vocab, example.accepted_response);
    ex.rejected_response = encode_response(vocab, example.rejected_response);
    return ex;
}

std::vector<EncodedExample> encode_examples(const Vocabulary& vocab, std::span<const PreferenceExample> examples) {
    std::vector<EncodedExample> out;
    out.reserve(examples.size());
    for (const PreferenceExample& e : examples) {
        out.push_back(encode_example(vocab, e));
    }
    return out;
}

LossReport sft_loss(const Policy& policy, const EncodedExample& example) {
    LossReport rep{0.0, zeros(policy), {}};
    rep.loss = acc_sft(policy, example, 1.0, rep.grad);
    return rep;
}

double reward_margin(const Policy& policy, const ReferencePolicy& reference, std::span<const TokenId> context,
                     std::span<const TokenId> chosen, std::span<const TokenId> rejected, double beta) {
    const double dc = policy.log_prob(context, chosen) - reference.log_prob(context, chosen);
    const double dr = policy.log_prob(context, rejected) - reference.log_prob(context, rejected);
    const double m = beta * (dc - dr);
    require_finite(m, "log-ratio");
    return m;
}

LossReport dpo_loss(const Policy& policy, const ReferencePolicy& reference, std::span<const TokenId> context,
                    std::span<const TokenId> chosen, std::span<const TokenId> rejected, double beta) {
    LossReport rep{0.0, zeros(policy), {}};
    const DpoTerms t = acc_dpo(policy, reference, context, chosen, rejected, beta, 1.0, rep.grad);
    rep.loss = t.loss;
    rep.diagnostics.reward_margin = t.margin;
    rep.diagnostics.pref_term = t.loss;
    return rep;
}

LossReport calibration_loss(const Policy& policy, const EncodedExample& example, const AlignConfig& config) {
    LossReport rep{0.0, zeros(policy), {}};
    const CalibrationTerms c = acc_calibration(policy, example, config, 1.0, rep.grad);
    rep.loss = config.calibration_weight * c.kl + c.nll;
    rep.diagnostics.kl_term = c.kl;
    rep.diagnostics.belief_nll = c.nll;
    return rep;
}

LossReport belief_conditioned_pref_loss(const Policy& policy, const ReferencePolicy& reference,
                                        const EncodedExample& example, double beta) {
    LossReport rep{0.0, zeros(policy), {}};
    const DpoTerms t = acc_conditioned_pref(policy, reference, example, beta, 1.0, rep.grad);
    rep.loss = t.loss;
    rep.diagnostics.reward_margin = t.margin;
    rep.diagnostics.pref_term = t.loss;
    return rep;
}

LossReport gdpo_loss(const Policy& policy, const ReferencePolicy& reference, const EncodedExample& example,
                     const AlignConfig& config) {
    LossReport rep{0.0, zeros(policy), {}};
    const GdpoTerms t = acc_gdpo(policy, reference, example, config, 1.0, rep.grad);
    rep.loss = t.loss;
    rep.diagnostics = t.diag;
    return rep;
}

std::vector<KtoItem> kto_items(std::span<const EncodedExample> examples) {
    std::vector<KtoItem> items;
    items.reserve(2 * examples.size());
    for (const EncodedExample& ex : examples) {
        const TokenSeq ctx = ex.belief_context();
        items.push_back({ctx, ex.accepted_response, true});
        items.push_back({ctx, ex.rejected_response, false});
    }
    return items;
}

LossReport kto_gdpo_loss(const Policy& policy, const ReferencePolicy& reference, std::span<const KtoItem> items,
                         const AlignConfig& config) {
    LossReport rep{0.0, zeros(policy), {}};
    const KtoTerms t = acc_kto(policy, reference, items, config, 1.0, rep.grad);
    rep.loss = t.loss;
    rep.diagnostics.reward_margin = t.margin;
    rep.diagnostics.pref_term = t.loss;
    return rep;
}

LossReport batch_loss(const Policy& policy, const ReferencePolicy* reference, std::span<const EncodedExample> batch,
                      const AlignConfig& config) {
    if (batch.empty()) {
        throw DataError("empty batch");
    }
    if (config.method != Method::sft && reference == nullptr) {
        throw ConfigError(std::string(to_string(config.method)) + " needs a reference policy");
    }
    LossReport rep{0.0, zeros(policy), {}};
    const double w = 1.0 / static_cast<double>(batch.size());
    LossDiagnostics& d = rep.diagnostics;
    switch (config.method) {
        case Method::sft:
            for (const EncodedExample& ex : batch) {
                rep.loss += w * acc_sft(policy, ex, w, rep.grad);
            }
            break;
        case Method::dpo:
            for (const EncodedExample& ex : batch) {
                const TokenSeq c = ex.chosen();
                const TokenSeq r = ex.rejected_seq();
                const DpoTerms t = acc_dpo(policy, *reference, ex.query, c, r, config.beta, w, rep.grad);
                rep.loss += w * t.loss;
                d.pref_term += w * t.loss;
                d.reward_margin += w * t.margin;
            }
            break;
        case Method::gdpo:
            for (const EncodedExample& ex : batch) {
                const GdpoTerms t = acc_gdpo(policy, *reference, ex, config, w, rep.grad);
                rep.loss += w * t.loss;
                d.kl_term += w * t.diag.kl_term;
                d.belief_nll += w * t.diag.belief_nll;
                d.pref_term += w * t.diag.pref_term;
                d.reward_margin += w * t.diag.reward_margin;
            }
            break;
        case Method::kto_gdpo: {
            if (config.calibration_term) {
                for (const EncodedExample& ex : batch) {
                    const CalibrationTerms c = acc_calibration(policy, ex, config, w, rep.grad);
                    rep.loss += w * (config.calibration_weight * c.kl + c.nll);
                    d.kl_term += w * c.kl;
                    d.belief_nll += w * c.nll;
                }
            }
            if (config.preference_term) {
                const std::vector<KtoItem> items = kto_items(batch);
                const KtoTerms t = acc_kto(policy, *reference, items, config, 1.0, rep.grad);
                rep.loss += t.loss;
                d.pref_term = t.loss;
                d.reward_margin = t.margin;
            }
            break;
        }
    }
    require_finite(rep.loss, "loss");
    return rep;
}

}  // namespace gdpo

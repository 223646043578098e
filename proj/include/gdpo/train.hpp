#pragma once

// SFT and alignment training loops, the optimizer, and the per-eval-point
// trace (calibration, subset reward margins, baselines, loss terms).

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "gdpo/align.hpp"
#include "gdpo/datagen.hpp"
#include "gdpo/policy.hpp"

namespace gdpo {

enum class OptimizerKind { rmsprop, sgd };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view text);

struct RmsPropState {
    std::vector<double> sq_avg;
    std::size_t step = 0;  // completed steps
};

inline constexpr double kRmsPropDecay = 0.99;
inline constexpr double kRmsPropEps = 1e-8;

// lr * min(1, step / warmup_steps) for the 1-indexed step; warmup 0 means no warmup.
double warmup_lr(double lr, std::size_t step, std::size_t warmup_steps);

// v = decay * v + (1 - decay) * g^2;  theta -= lr_eff * g / (sqrt(v) + eps).
// Throws NumericError on a non-finite gradient.
void rmsprop_step(std::span<double> theta, std::span<const double> grad, RmsPropState& state, double lr,
                  std::size_t warmup_steps, double decay = kRmsPropDecay, double eps = kRmsPropEps);

// theta -= lr_eff * g, with the same warmup rule.
void sgd_step(std::span<double> theta, std::span<const double> grad, std::size_t& step, double lr,
              std::size_t warmup_steps);

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::rmsprop;
    double learning_rate = 1e-2;
    std::size_t warmup_steps = 150;
    std::size_t batch_size = 32;
    std::size_t epochs = 1;
    std::size_t eval_every = 50;  // 0: only at the start and the end
    std::size_t max_steps = 0;    // 0: no cap beyond the epochs
    std::uint64_t seed = 0;
    AlignConfig align;
    // Return the eval point with the lowest avg_jsd instead of the last one.
    bool select_best = false;
    // Amount moved from the largest to the smallest target entry for the
    // noise baseline.
    double noise_level = 0.05;

    void validate() const;
};

struct SubsetSplit {
    std::vector<std::size_t> majority;
    std::vector<std::size_t> minority;
    std::vector<std::size_t> other;
};

// majority: accepted belief is the first argmax of the target; minority: the
// first argmin over nonzero entries; majority wins when the two coincide.
SubsetSplit split_by_belief_share(std::span<const PreferenceExample> examples);

struct TracePoint {
    std::size_t step = 0;
    double avg_jsd = 0.0;
    double jsd_majority_baseline = 0.0;
    double jsd_reverse_baseline = 0.0;
    double jsd_uniform_baseline = 0.0;
    double jsd_noise_baseline = 0.0;
    double margin_majority = 0.0;  // NaN when the subset is empty
    double margin_minority = 0.0;
    double margin_other = 0.0;
    double loss_total = 0.0;
    double loss_kl = 0.0;
    double loss_pref = 0.0;
    double loss_nll = 0.0;
};

struct TrainingTrace {
    std::vector<TracePoint> points;
};

struct TrainResult {
    Policy policy;
    TrainingTrace trace;
};

// Mean over distinct topics of js_distance(policy belief distribution, target).
double mean_topic_jsd(const Policy& policy, std::span<const EncodedExample> examples);

// Mean over distinct topics of js_distance(baseline(target), target).
struct BaselineJsd {
    double majority = 0.0;
    double reverse = 0.0;
    double uniform = 0.0;
    double noise = 0.0;
};
BaselineJsd mean_baseline_jsd(std::span<const EncodedExample> examples, double noise_level);

// Subset means of the reward margin used by the trace: the full-sequence DPO
// margin for sft and dpo, the belief-conditioned margin for gdpo and kto-gdpo.
struct SubsetMargins {
    double majority = 0.0;
    double minority = 0.0;
    double other = 0.0;
};
SubsetMargins subset_margins(const Policy& policy, const ReferencePolicy& reference,
                             std::span<const EncodedExample> examples, const SubsetSplit& split,
                             const AlignConfig& config);

TrainResult run_sft(Policy init, std::span<const PreferenceExample> train, std::span<const PreferenceExample> eval,
                    const TrainConfig& config);

// Replaces every accepted belief by a uniform draw (and its response by a
// uniform template of that belief); rejected beliefs that collide are redrawn
// from the remaining beliefs.
std::vector<PreferenceExample> resample_uniform_beliefs(std::span<const PreferenceExample> examples,
                                                        std::span<const Topic> topics, std::uint64_t seed);

TrainResult run_uniform_sft(Policy init, std::span<const Topic> topics, std::span<const PreferenceExample> train,
                            std::span<const PreferenceExample> eval, const TrainConfig& config);

// The reference is a frozen copy of sft. method must be dpo, gdpo or kto-gdpo.
TrainResult run_alignment(Method method, const Policy& sft, std::span<const PreferenceExample> train,
                          std::span<const PreferenceExample> eval, const TrainConfig& config);

}  // namespace gdpo

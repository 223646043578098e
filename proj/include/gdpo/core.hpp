#pragma once

// Belief sets, belief distributions and the divergence / estimation math the
// rest of the library consumes.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gdpo {

inline constexpr int kNumBeliefClasses = 6;

// One of the six artificial belief class tokens b[0]..b[5]. b[0] is reserved
// for refusal / no-opinion; b[1]..b[5] are ordered by degree of agreement.
struct BeliefClass {
    int value = 0;

    constexpr auto operator<=>(const BeliefClass&) const = default;
    std::string name() const;  // "B[3]"
};

BeliefClass make_belief_class(int value);

using Words = std::vector<std::string>;

std::string join_words(std::span<const std::string> words);

struct Belief {
    BeliefClass cls;
    Words description;

    bool operator==(const Belief&) const = default;
};

// An ordered set of K >= 2 beliefs with distinct descriptions and distinct
// class tokens.
class BeliefSet {
public:
    BeliefSet() = default;
    explicit BeliefSet(std::vector<Belief> beliefs);

    std::size_t size() const { return beliefs_.size(); }
    const Belief& operator[](std::size_t i) const { return beliefs_.at(i); }
    const std::vector<Belief>& beliefs() const { return beliefs_; }
    std::vector<BeliefClass> classes() const;

    bool operator==(const BeliefSet&) const = default;

private:
    std::vector<Belief> beliefs_;
};

// Probability vector aligned index-for-index with a BeliefSet. Entries lie in
// [0, 1] and sum to 1 within 1e-9.
class BeliefDistribution {
public:
    static constexpr double kSumTolerance = 1e-9;

    BeliefDistribution() = default;
    explicit BeliefDistribution(std::vector<double> probs);

    static BeliefDistribution uniform(std::size_t k);
    static BeliefDistribution point_mass(std::size_t k, std::size_t at);

    std::size_t size() const { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_.at(i); }
    std::span<const double> probs() const { return probs_; }

    bool operator==(const BeliefDistribution&) const = default;

private:
    std::vector<double> probs_;
};

struct DivergenceConfig {
    // Applied to the second argument of the KL divergence before evaluation.
    static constexpr double zero_floor = 1e-12;
};

// KL(p || q) in nats. q is floored at zero_floor and renormalized first.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double kl_divergence(const BeliefDistribution& p, const BeliefDistribution& q);

// Square root of the base-2 Jensen-Shannon divergence, in [0, 1].
double js_distance(std::span<const double> p, std::span<const double> q);
double js_distance(const BeliefDistribution& p, const BeliefDistribution& q);

// Total-variation distance, 0.5 * sum |p_i - q_i|.
double total_variation(std::span<const double> p, std::span<const double> q);

// Maximum-likelihood estimate counts[i] / sum(counts).
BeliefDistribution mle_belief_distribution(std::span<const std::int64_t> counts);

// Lowest index wins ties.
std::size_t argmax_first(std::span<const double> values);
std::size_t argmin_first(std::span<const double> values);

struct ReferenceBaselines {
    BeliefDistribution majority;
    BeliefDistribution reverse;
    BeliefDistribution uniform;
    BeliefDistribution noise;
};

// Untrained reference distributions compared against the target: point mass
// on the majority, rank-reversed target, uniform, and a noised target
// (noise_level moved from argmax to argmin).
ReferenceBaselines reference_baselines(const BeliefDistribution& target, double noise_level);

}  // namespace gdpo

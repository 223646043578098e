#include "gdpo/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "gdpo/error.hpp"

namespace gdpo {

namespace {

void require_same_length(std::span<const double> p, std::span<const double> q, const char* op) {
    if (p.size() != q.size()) {
        throw DataError(std::string(op) + ": length mismatch (" + std::to_string(p.size()) + " vs " +
                        std::to_string(q.size()) + ")");
    }
}

void require_finite(std::span<const double> v, const char* op) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string(op) + ": non-finite input");
        }
    }
}

}  // namespace

std::string BeliefClass::name() const {
    return "B[" + std::to_string(value) + "]";
}

BeliefClass make_belief_class(int value) {
    if (value < 0 || value >= kNumBeliefClasses) {
        throw DataError("belief class out of range: " + std::to_string(value));
    }
    return BeliefClass{value};
}

std::string join_words(std::span<const std::string> words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) {
            out += ' ';
        }
        out += words[i];
    }
    return out;
}

BeliefSet::BeliefSet(std::vector<Belief> beliefs) : beliefs_(std::move(beliefs)) {
    if (beliefs_.size() < 2) {
        throw DataError("belief set needs at least 2 beliefs");
    }
    if (beliefs_.size() > static_cast<std::size_t>(kNumBeliefClasses)) {
        throw DataError("class alphabet exhausted: " + std::to_string(beliefs_.size()) + " beliefs");
    }
    std::set<std::string> descriptions;
    std::set<int> classes;
    for (const Belief& b : beliefs_) {
        make_belief_class(b.cls.value);
        if (b.description.empty()) {
            throw DataError("belief description is empty");
        }
        if (!descriptions.insert(join_words(b.description)).second) {
            throw DataError("duplicate belief description: " + join_words(b.description));
        }
        if (!classes.insert(b.cls.value).second) {
            throw DataError("two beliefs share class token " + b.cls.name());
        }
    }
}

std::vector<BeliefClass> BeliefSet::classes() const {
    std::vector<BeliefClass> out;
    out.reserve(beliefs_.size());
    for (const Belief& b : beliefs_) {
        out.push_back(b.cls);
    }
    return out;
}

BeliefDistribution::BeliefDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) {
        throw DataError("belief distribution is empty");
    }
    double sum = 0.0;
    for (double p : probs_) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
            throw DataError("belief distribution entry outside [0, 1]");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
        throw DataError("belief distribution does not sum to 1 (sum = " + std::to_string(sum) + ")");
    }
}

BeliefDistribution BeliefDistribution::uniform(std::size_t k) {
    return BeliefDistribution(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

BeliefDistribution BeliefDistribution::point_mass(std::size_t k, std::size_t at) {
    std::vector<double> p(k, 0.0);
    p.at(at) = 1.0;
    return BeliefDistribution(std::move(p));
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    require_same_length(p, q, "kl_divergence");
    require_finite(p, "kl_divergence");
    require_finite(q, "kl_divergence");

    std::vector<double> floored(q.begin(), q.end());
    bool any_floored = false;
    double total = 0.0;
    for (double& v : floored) {
        if (v < DivergenceConfig::zero_floor) {
            v = DivergenceConfig::zero_floor;
            any_floored = true;
        }
        total += v;
    }
    if (any_floored) {
        for (double& v : floored) {
            v /= total;
        }
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            kl += p[i] * std::log(p[i] / floored[i]);
        }
    }
    // Rounding can leave a tiny negative value for p == q.
    return std::max(kl, 0.0);
}

double kl_divergence(const BeliefDistribution& p, const BeliefDistribution& q) {
    return kl_divergence(p.probs(), q.probs());
}

double js_distance(std::span<const double> p, std::span<const double> q) {
    require_same_length(p, q, "js_distance");
    require_finite(p, "js_distance");
    require_finite(q, "js_distance");

    double div = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) {
            div += 0.5 * p[i] * std::log2(p[i] / m);
        }
        if (q[i] > 0.0) {
            div += 0.5 * q[i] * std::log2(q[i] / m);
        }
    }
    return std::sqrt(std::clamp(div, 0.0, 1.0));
}

double js_distance(const BeliefDistribution& p, const BeliefDistribution& q) {
    return js_distance(p.probs(), q.probs());
}

double total_variation(std::span<const double> p, std::span<const double> q) {
    require_same_length(p, q, "total_variation");
    double tv = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        tv += std::abs(p[i] - q[i]);
    }
    return 0.5 * tv;
}

BeliefDistribution mle_belief_distribution(std::span<const std::int64_t> counts) {
    std::int64_t total = 0;
    for (std::int64_t c : counts) {
        if (c < 0) {
            throw DataError("negative count");
        }
        total += c;
    }
    if (total == 0) {
        throw DataError("empty evidence");
    }
    std::vector<double> probs;
    probs.reserve(counts.size());
    for (std::int64_t c : counts) {
        probs.push_back(static_cast<double>(c) / static_cast<double>(total));
    }
    return BeliefDistribution(std::move(probs));
}

std::size_t argmax_first(std::span<const double> values) {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::size_t argmin_first(std::span<const double> values) {
    return static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
}

ReferenceBaselines reference_baselines(const BeliefDistribution& target, double noise_level) {
    const std::span<const double> p = target.probs();
    const std::size_t k = p.size();
    if (!(noise_level >= 0.0) || !std::isfinite(noise_level)) {
        throw DataError("noise level must be a finite non-negative number");
    }

    const std::size_t hi = argmax_first(p);
    const std::size_t lo = argmin_first(p);

    // Ascending by probability, ties in index order; the i-th smallest slot
    // receives the i-th largest probability.
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    std::vector<double> reversed(k);
    for (std::size_t i = 0; i < k; ++i) {
        reversed[order[i]] = p[order[k - 1 - i]];
    }

    std::vector<double> noised(p.begin(), p.end());
    noised[lo] += noise_level;
    noised[hi] -= noise_level;
    for (double v : noised) {
        if (v < 0.0) {
            throw DataError("noise level too large");
        }
    }
    double total = 0.0;
    for (double& v : noised) {
        v = std::clamp(v, 0.0, 1.0);
        total += v;
    }
    for (double& v : noised) {
        v /= total;
    }

    return ReferenceBaselines{
        BeliefDistribution::point_mass(k, hi),
        BeliefDistribution(std::move(reversed)),
        BeliefDistribution::uniform(k),
        BeliefDistribution(std::move(noised)),
    };
}

}  // namespace gdpo

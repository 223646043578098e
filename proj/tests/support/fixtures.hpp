#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gdpo/align.hpp"
#include "gdpo/datagen.hpp"
#include "gdpo/policy.hpp"
#include "gdpo/rng.hpp"

namespace fixtures {

inline const std::vector<double> kTable4{0.06, 0.56, 0.24, 0.08, 0.06};

inline std::vector<gdpo::Topic> topics(int q, int k, int s, std::vector<std::vector<double>> dists,
                                       std::uint64_t seed = 1) {
    gdpo::TopicConfig c;
    c.topics = q;
    c.beliefs = k;
    c.styles = s;
    c.distribution = dists.empty() ? gdpo::DistributionSource::from_dirichlet(1.0)
                                   : gdpo::DistributionSource::from_list(std::move(dists));
    return gdpo::generate_topics(c, seed);
}

inline std::vector<gdpo::PreferenceExample> pairs(const std::vector<gdpo::Topic>& ts, std::size_t per_topic,
                                                  std::uint64_t seed) {
    std::vector<gdpo::PreferenceExample> out;
    for (const gdpo::Topic& t : ts) {
        for (auto& e : gdpo::build_preference_pairs(t, per_topic, seed)) {
            out.push_back(std::move(e));
        }
    }
    return out;
}

inline gdpo::Policy policy(gdpo::Backend backend, const std::vector<gdpo::Topic>& ts) {
    const gdpo::Vocabulary vocab = gdpo::Vocabulary::from_topics(ts);
    if (backend == gdpo::Backend::tabular) {
        return gdpo::make_tabular_policy(vocab, ts, 8, 64);
    }
    gdpo::NeuralConfig nc;
    nc.d_model = 8;
    nc.layers = 1;
    nc.context_length = 64;
    return gdpo::make_neural_policy(vocab, nc);
}

inline gdpo::Policy random_policy(gdpo::Backend backend, const std::vector<gdpo::Topic>& ts, std::uint64_t seed,
                                  double scale = 0.5) {
    gdpo::Policy p = policy(backend, ts);
    p.randomize(seed, scale);
    return p;
}

// Small random instance: a policy, a different frozen reference and encoded pairs.
struct Instance {
    std::vector<gdpo::Topic> topics;
    gdpo::Policy policy;
    gdpo::ReferencePolicy reference;
    std::vector<gdpo::EncodedExample> examples;
};

inline Instance instance(gdpo::Backend backend, std::uint64_t seed, std::size_t n = 4) {
    gdpo::Rng rng(seed);
    const int k = 2 + static_cast<int>(rng.index(4));
    auto ts = topics(2, k, 2, {}, seed);
    gdpo::Policy p = random_policy(backend, ts, gdpo::mix_seed(seed, 1));
    gdpo::Policy r = random_policy(backend, ts, gdpo::mix_seed(seed, 2));
    auto ex = gdpo::encode_examples(p.vocab(), pairs(ts, n, seed));
    return {ts, std::move(p), gdpo::freeze(r), std::move(ex)};
}

struct GradCheck {
    double max_rel = 0.0;
    std::size_t checked = 0;
};

// Central differences on `coords` random coordinates (all when coords = 0).
// The relative error uses max(|analytic|, |numeric|, floor) as denominator.
inline GradCheck check_gradient(gdpo::Policy& p, const std::function<double(const gdpo::Policy&)>& loss,
                                const std::vector<double>& analytic, std::size_t coords, std::uint64_t seed,
                                double h = 1e-5, double floor = 1e-4) {
    std::vector<std::size_t> idx(p.num_params());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        idx[i] = i;
    }
    if (coords && coords < idx.size()) {
        // Half the budget on coordinates with a nonzero analytic gradient.
        gdpo::Rng rng(seed);
        std::vector<std::size_t> nz, picked;
        for (std::size_t i : idx) {
            if (analytic[i] != 0.0) {
                nz.push_back(i);
            }
        }
        for (std::size_t j = 0; j < coords / 2 && !nz.empty(); ++j) {
            picked.push_back(nz[rng.index(nz.size())]);
        }
        while (picked.size() < coords) {
            picked.push_back(rng.index(idx.size()));
        }
        idx = picked;
    }
    GradCheck out;
    auto theta = p.params();
    for (std::size_t i : idx) {
        const double saved = theta[i];
        theta[i] = saved + h;
        const double up = loss(p);
        theta[i] = saved - h;
        const double down = loss(p);
        theta[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
        out.max_rel = std::max(out.max_rel, std::abs(analytic[i] - numeric) / denom);
        ++out.checked;
    }
    return out;
}

inline double log_sigmoid(double x) { return -std::log1p(std::exp(-x)); }

}  // namespace fixtures

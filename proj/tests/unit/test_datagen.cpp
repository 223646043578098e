#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "fixtures.hpp"
#include "gdpo/datagen.hpp"
#include "gdpo/error.hpp"

using namespace gdpo;
namespace fs = std::filesystem;

namespace {

double chi_square_p(const std::vector<double>& observed, const std::vector<double>& expected) {
    double stat = 0.0;
    std::size_t cells = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (expected[i] > 0.0) {
            stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
            ++cells;
        }
    }
    boost::math::chi_squared dist(static_cast<double>(cells - 1));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("gdpo_test_datagen_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

DatasetManifest small_manifest() {
    DatasetManifest m;
    m.seed = 3;
    m.topics = 2;
    m.beliefs = 3;
    m.styles = 2;
    m.splits = {3, 2, 2};
    m.distribution = DistributionSource::from_dirichlet(1.0);
    return m;
}

bool is_template_of(const Topic& t, std::size_t belief, const Words& response) {
    for (const ResponseTemplate& tpl : t.templates[belief]) {
        if (tpl.tokens() == response) {
            return true;
        }
    }
    return false;
}

}  // namespace

TEST_CASE("class-belief mapping") {
    const ClassBeliefMap& map = ClassBeliefMap::standard();
    CHECK(map_belief_to_class(Words{"Very", "bad", "job"}, map).value == 1);
    CHECK(map_belief_to_class(Words{"DK/Refused"}, map).value == 0);
    CHECK(map_belief_to_class(Words{"Very", "good", "job"}, map).value == 5);
    try {
        map_belief_to_class(Words{"Purple"}, map);
        FAIL("expected an error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("unmapped belief") == 0);
    }
}

TEST_CASE("explicit two-belief topic round-trips its target") {
    const auto ts = fixtures::topics(1, 2, 2, {{0.7126, 0.2874}});
    REQUIRE(ts.size() == 1);
    CHECK(ts[0].target[0] == 0.7126);
    CHECK(ts[0].target[1] == 0.2874);

    DatasetManifest m;
    m.topics = 1;
    m.beliefs = 2;
    m.styles = 2;
    m.splits = {4, 1, 1};
    m.distribution = DistributionSource::from_list({{0.7126, 0.2874}});
    const auto data = generate_dataset(m);
    const fs::path dir = temp_dir("roundtrip2");
    serialize_dataset(data.train, m, dir / "train.jsonl");
    const LoadedDataset back = load_dataset(dir / "train.jsonl");
    REQUIRE(back.examples.size() == 4);
    CHECK(back.examples[0].target_dist.probs()[0] == 0.7126);
    CHECK(back.examples[0].target_dist.probs()[1] == 0.2874);
    CHECK(back.manifest == m);
}

TEST_CASE("opinion topic with the Table 4 distribution") {
    const auto ts = fixtures::topics(1, 5, 3, {fixtures::kTable4});
    const Topic& t = ts[0];
    CHECK(argmax_first(t.target.probs()) == 1);
    CHECK(t.num_beliefs() == 5);
    CHECK(t.num_styles() == 3);
    std::set<int> classes;
    for (const Belief& b : t.beliefs.beliefs()) {
        classes.insert(b.cls.value);
        CHECK(ClassBeliefMap::standard().find(b.description)->value == b.cls.value);
    }
    CHECK(classes.size() == 5);
}

TEST_CASE("topic generation is deterministic") {
    const auto a = fixtures::topics(5, 4, 3, {}, 99);
    const auto b = fixtures::topics(5, 4, 3, {}, 99);
    const auto c = fixtures::topics(5, 4, 3, {}, 100);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].question == b[i].question);
        CHECK(a[i].beliefs == b[i].beliefs);
        CHECK(a[i].target == b[i].target);
        CHECK(a[i].templates == b[i].templates);
    }
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        differs = differs || !(a[i].target == c[i].target);
    }
    CHECK(differs);
}

TEST_CASE("templates are distinct across beliefs") {
    const auto ts = fixtures::topics(3, 6, 4, {});
    for (const Topic& t : ts) {
        std::set<Words> seen;
        for (const auto& per_belief : t.templates) {
            for (const ResponseTemplate& tpl : per_belief) {
                CHECK(seen.insert(tpl.tokens()).second);
            }
        }
    }
}

TEST_CASE("accepted beliefs follow the target (chi-square)") {
    const auto ts = fixtures::topics(1, 2, 2, {{0.7126, 0.2874}});
    const auto pairs = build_preference_pairs(ts[0], 100000, 17);
    std::vector<double> obs(2, 0.0);
    for (const auto& e : pairs) {
        obs[e.accepted_belief] += 1.0;
        CHECK(e.rejected_belief == 1 - e.accepted_belief);
    }
    CHECK(chi_square_p(obs, {71260.0, 28740.0}) > 0.001);
}

TEST_CASE("pair invariants on random configurations") {
    Rng rng(21);
    for (int trial = 0; trial < 30; ++trial) {
        const int k = 2 + static_cast<int>(rng.index(5));
        const int s = 2 + static_cast<int>(rng.index(3));
        const auto ts = fixtures::topics(2, k, s, {}, rng.next_u64());
        for (const Topic& t : ts) {
            for (const auto& e : build_preference_pairs(t, 50, rng.next_u64())) {
                CHECK(e.accepted_belief != e.rejected_belief);
                CHECK(e.accepted_belief < t.num_beliefs());
                CHECK(e.rejected_belief < t.num_beliefs());
                CHECK(is_template_of(t, e.accepted_belief, e.accepted_response));
                CHECK(is_template_of(t, e.rejected_belief, e.rejected_response));
                CHECK(e.query == t.question);
                CHECK(e.topic_id == t.id);
            }
        }
    }
}

TEST_CASE("configuration errors") {
    TopicConfig c;
    c.beliefs = 7;
    try {
        generate_topics(c, 1);
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("class alphabet exhausted") != std::string::npos);
    }
    c.beliefs = 1;
    CHECK_THROWS_AS(generate_topics(c, 1), ConfigError);
    c.beliefs = 3;
    c.distribution = DistributionSource::from_list({{0.5, 0.5}});
    CHECK_THROWS_AS(generate_topics(c, 1), ConfigError);
    c.distribution = DistributionSource::from_dirichlet(0.0);
    CHECK_THROWS_AS(generate_topics(c, 1), ConfigError);
}

TEST_CASE("dataset splits cover every topic") {
    DatasetManifest m = small_manifest();
    m.topics = 3;
    m.splits = {10, 4, 3};
    const auto data = generate_dataset(m);
    CHECK(data.train.size() == 10);
    CHECK(data.eval.size() == 4);
    CHECK(data.test.size() == 3);
    for (const auto* split : {&data.train, &data.eval, &data.test}) {
        std::set<int> ids;
        for (const auto& e : *split) {
            ids.insert(e.topic_id);
        }
        CHECK(ids.size() == 3);
    }
}

TEST_CASE("dataset round-trip and error paths") {
    const DatasetManifest m = small_manifest();
    const auto data = generate_dataset(m);
    const fs::path dir = temp_dir("io");
    serialize_dataset(data.train, m, dir / "train.jsonl");
    const LoadedDataset back = load_dataset(dir / "train.jsonl");
    CHECK(back.examples == data.train);
    CHECK(back.manifest == m);

    serialize_dataset(std::vector<PreferenceExample>{}, m, dir / "empty.jsonl");
    const LoadedDataset empty = load_dataset(dir / "empty.jsonl");
    CHECK(empty.examples.empty());
    CHECK(empty.manifest == m);

    std::string text;
    {
        std::ifstream in(dir / "train.jsonl");
        std::stringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    text.resize(text.size() - 20);
    {
        std::ofstream out(dir / "train.jsonl", std::ios::binary);
        out << text;
    }
    try {
        load_dataset(dir / "train.jsonl");
        FAIL("expected an error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("train.jsonl:3:") != std::string::npos);
    }
    CHECK_THROWS_AS(load_dataset(dir / "missing.jsonl"), DataError);
}

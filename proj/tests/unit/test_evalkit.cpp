#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fixtures.hpp"
#include "gdpo/error.hpp"
#include "gdpo/evalkit.hpp"
#include "gdpo/train.hpp"

using namespace gdpo;
namespace fs = std::filesystem;

namespace {

Topic hand_topic() {
    Topic t;
    t.id = 0;
    t.question = {"q"};
    t.beliefs = BeliefSet({{make_belief_class(5), {"Yes"}}, {make_belief_class(1), {"No"}}});
    t.target = BeliefDistribution({0.5, 0.5});
    t.templates = {{ResponseTemplate{{{"a", "b"}, {"c"}}}, ResponseTemplate{{{"g"}, {"h"}}}},
                   {ResponseTemplate{{{"d", "e"}, {"f"}}}, ResponseTemplate{{{"i"}, {"j"}}}}};
    return t;
}

GenerationRecord record(int cls, Words description, Words response) {
    GenerationRecord r;
    r.topic_id = 0;
    r.query = {"q"};
    r.predicted_class = make_belief_class(cls);
    r.description = std::move(description);
    r.response = std::move(response);
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("gdpo_test_evalkit_" + name);
    fs::remove_all(dir);
    return dir;
}

TrainingTrace sample_trace(std::size_t n) {
    TrainingTrace t;
    for (std::size_t i = 0; i < n; ++i) {
        TracePoint p;
        p.step = i * 10;
        p.avg_jsd = 0.1 / static_cast<double>(i + 1);
        p.jsd_majority_baseline = 0.5;
        p.jsd_reverse_baseline = 0.6;
        p.jsd_uniform_baseline = 0.3;
        p.jsd_noise_baseline = 0.05;
        p.margin_majority = 1.0 / 3.0;
        p.margin_minority = i == 0 ? NAN : -0.25;
        p.margin_other = 1e-300;
        p.loss_total = 0.7;
        p.loss_kl = 0.1;
        p.loss_pref = 0.6931471805599453;
        p.loss_nll = 2.5;
        t.points.push_back(p);
    }
    return t;
}

bool same_point(const TracePoint& a, const TracePoint& b) {
    auto eq = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.step == b.step && eq(a.avg_jsd, b.avg_jsd) && eq(a.jsd_majority_baseline, b.jsd_majority_baseline) &&
           eq(a.jsd_reverse_baseline, b.jsd_reverse_baseline) && eq(a.jsd_uniform_baseline, b.jsd_uniform_baseline) &&
           eq(a.jsd_noise_baseline, b.jsd_noise_baseline) && eq(a.margin_majority, b.margin_majority) &&
           eq(a.margin_minority, b.margin_minority) && eq(a.margin_other, b.margin_other) &&
           eq(a.loss_total, b.loss_total) && eq(a.loss_kl, b.loss_kl) && eq(a.loss_pref, b.loss_pref) &&
           eq(a.loss_nll, b.loss_nll);
}

}  // namespace

TEST_CASE("cbc") {
    const ClassBeliefMap& map = ClassBeliefMap::standard();
    GenerationLog good{record(1, {"Very", "bad", "job"}, {}), record(0, {"DK/Refused"}, {}),
                       record(5, {"Very", "good", "job"}, {})};
    CHECK(cbc(good, map) == 1.0);

    GenerationLog mixed = good;
    mixed.push_back(record(4, {"Very", "bad", "job"}, {}));
    CHECK(cbc(mixed, map) == 0.75);

    GenerationLog empty_desc{record(1, {}, {"x"})};
    CHECK(cbc(empty_desc, map) == 0.0);

    GenerationRecord no_class = record(1, {"Very", "bad", "job"}, {});
    no_class.predicted_class.reset();
    CHECK(cbc(GenerationLog{no_class}, map) == 0.0);
    CHECK(cbc(GenerationLog{}, map) == 0.0);
}

TEST_CASE("bpc on dataset pairs") {
    Rng rng(51);
    for (int trial = 0; trial < 10; ++trial) {
        const auto ts = fixtures::topics(3, 2 + static_cast<int>(rng.index(5)), 2 + static_cast<int>(rng.index(3)),
                                         {}, rng.next_u64());
        const auto ex = fixtures::pairs(ts, 30, rng.next_u64());
        CHECK(bpc_oracle(log_from_pairs(ex, false), ts) == 1.0);
        // Rejected responses come from a different belief's templates.
        CHECK(bpc_oracle(log_from_pairs(ex, true), ts) == 0.0);

        GenerationLog half;
        for (std::size_t i = 0; i < ex.size(); ++i) {
            half.push_back(log_from_pairs(std::span(&ex[i], 1), i % 2 == 1).front());
        }
        if (ex.size() % 2 == 0) {
            CHECK(bpc_oracle(half, ts) == 0.5);
        }
    }
}

TEST_CASE("bpc on off-template responses") {
    const Topic t = hand_topic();
    const std::vector<Topic> ts{t};
    // Two of two fragments of a belief-0 template.
    CHECK(bpc_consistent(record(5, {"Yes"}, {"well", "a", "b", "then", "c"}), t));
    // One of two fragments: below the threshold.
    CHECK(!bpc_consistent(record(5, {"Yes"}, {"a", "b", "d"}), t));
    // Exact template of the other belief.
    CHECK(!bpc_consistent(record(5, {"Yes"}, {"d", "e", "f"}), t));
    // Class token alone resolves the belief when the description is missing.
    CHECK(bpc_consistent(record(1, {}, {"d", "e", "f"}), t));
    // Unknown description and class.
    CHECK(!bpc_consistent(record(3, {"Maybe"}, {"a", "b", "c"}), t));
    CHECK(bpc_oracle(GenerationLog{}, ts) == 0.0);
}

TEST_CASE("tf cosine and rs") {
    CHECK(tf_cosine(Words{"a", "b", "c"}, Words{"a", "b", "c"}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(tf_cosine(Words{"a", "b"}, Words{"c"}) == 0.0);
    CHECK(tf_cosine(Words{"x", "x", "y"}, Words{"x", "y", "y"}) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(tf_cosine(Words{}, Words{"c"}) == 0.0);

    const std::vector<Topic> ts{hand_topic()};
    const GenerationLog log{record(5, {"Yes"}, {"a", "b", "c"}), record(5, {"Yes"}, {"a", "a", "d"}),
                            record(1, {"No"}, {"d", "x"})};
    const double expected = (1.0 + 2.0 / std::sqrt(15.0) + 1.0 / std::sqrt(6.0)) / 3.0;
    CHECK(std::abs(rs(log, ts) - expected) < 1e-12);
}

TEST_CASE("avg_jsd and generation") {
    const auto ts = fixtures::topics(2, 4, 2, {});
    const auto ex = fixtures::pairs(ts, 10, 3);
    Policy p = fixtures::policy(Backend::tabular, ts);
    auto& m = dynamic_cast<TabularModel&>(p.model());
    for (const Topic& t : ts) {
        const TokenSeq q = encode_query(p.vocab(), t.question);
        const auto row = m.row(m.row_of(q));
        for (std::size_t k = 0; k < t.num_beliefs(); ++k) {
            row[static_cast<std::size_t>(Vocabulary::class_token(t.beliefs[k].cls))] = std::log(t.target[k]);
        }
    }
    CHECK(avg_jsd(p, ex) < 1e-7);
    CHECK_THROWS_AS(avg_jsd(p, std::vector<PreferenceExample>{}), DataError);

    GenerationOptions o;
    o.seed = 4;
    const GenerationLog a = generate_log(p, ex, o);
    const GenerationLog b = generate_log(p, ex, o);
    REQUIRE(a.size() == ex.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].response == b[i].response);
        CHECK(a[i].topic_id == ex[i].topic_id);
    }
    const MetricReport rep = evaluate_policy("init", p, ts, ex, o);
    CHECK(rep.n == ex.size());
    CHECK(rep.jsd == avg_jsd(p, ex));
    CHECK(rep.bpc >= 0.0);
    CHECK(rep.bpc <= 1.0);
}

TEST_CASE("trace csv") {
    const fs::path dir = temp_dir("trace");
    fs::create_directories(dir);
    write_trace_csv(TrainingTrace{}, dir / "empty.csv");
    CHECK(slurp(dir / "empty.csv") == "step,avg_jsd,jsd_majority_baseline,jsd_reverse_baseline,jsd_uniform_baseline,"
                                      "jsd_noise_baseline,margin_majority,margin_minority,margin_other,loss_total,"
                                      "loss_kl,loss_pref,loss_nll\n");
    CHECK(parse_trace_csv(dir / "empty.csv").points.empty());

    const TrainingTrace t = sample_trace(4);
    write_trace_csv(t, dir / "t.csv");
    const TrainingTrace back = parse_trace_csv(dir / "t.csv");
    REQUIRE(back.points.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(same_point(t.points[i], back.points[i]));
    }
    CHECK(slurp(dir / "t.csv").find(",nan,") != std::string::npos);

    std::ofstream(dir / "bad.csv") << "step,avg_jsd\n1,2\n";
    CHECK_THROWS_AS(parse_trace_csv(dir / "bad.csv"), DataError);
}

TEST_CASE("metrics csv") {
    const fs::path dir = temp_dir("metrics");
    fs::create_directories(dir);
    const std::vector<MetricReport> reps{{"sft", 0.1, 0.5, 0.25, 1.0 / 3.0, 200}, {"gdpo", NAN, 1.0, 0.0, 0.0, 7}};
    write_metrics_csv(reps, dir / "m.csv");
    const auto back = parse_metrics_csv(dir / "m.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].method == "sft");
    CHECK(back[0].rs == 1.0 / 3.0);
    CHECK(back[0].n == 200);
    CHECK(std::isnan(back[1].jsd));
}

TEST_CASE("emit_report") {
    const fs::path dir = temp_dir("report");
    const std::vector<NamedTrace> traces{{"dpo", sample_trace(3)}, {"gdpo", sample_trace(5)}};
    const std::vector<MetricReport> reps{{"gdpo", 0.1, 0.5, 0.25, 0.5, 10}};
    emit_report(traces, reps, dir);
    CHECK(fs::exists(dir / "trace_dpo.csv"));
    CHECK(fs::exists(dir / "trace_gdpo.csv"));
    CHECK(fs::exists(dir / "plot_traces.py"));
    CHECK(parse_metrics_csv(dir / "metrics.csv").size() == 1);
    const auto plot = nlohmann::json::parse(slurp(dir / "plot_data.json"));
    REQUIRE(plot["series"].size() == 6);
    CHECK(plot["series"][0]["name"] == "dpo");
    CHECK(plot["series"][2]["kind"] == "baseline");
    CHECK(plot["series"][1]["x"].size() == 5);

    const fs::path none = temp_dir("report_empty");
    emit_report({}, {}, none);
    CHECK(slurp(none / "metrics.csv") == "method,jsd,cbc,bpc,rs,n\n");
    CHECK(nlohmann::json::parse(slurp(none / "plot_data.json"))["series"].empty());
}

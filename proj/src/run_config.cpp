#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gdpo/error.hpp"
#include "gdpo/run_config.hpp"

namespace gdpo {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object, remembering which ones were consumed so
// leftovers can be reported as unknown.
class Section {
public:
    Section(const json& doc, std::string path) : path_(std::move(path)) {
        if (doc.is_null()) {
            obj_ = json::object();
        } else if (!doc.is_object()) {
            throw ConfigError("field " + path_ + ": expected an object");
        } else {
            obj_ = doc;
        }
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    const json* raw(const std::string& key) {
        seen_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    void read(const std::string& key, double& out) {
        if (const json* v = raw(key)) {
            if (!v->is_number()) {
                fail(key, "expected a number");
            }
            out = v->get<double>();
        }
    }
    void read(const std::string& key, bool& out) {
        if (const json* v = raw(key)) {
            if (!v->is_boolean()) {
                fail(key, "expected true or false");
            }
            out = v->get<bool>();
        }
    }
    void read(const std::string& key, int& out) {
        if (const json* v = raw(key)) {
            if (!v->is_number_integer()) {
                fail(key, "expected an integer");
            }
            out = v->get<int>();
        }
    }
    void read(const std::string& key, std::size_t& out) {
        if (const json* v = raw(key)) {
            if (!v->is_number_unsigned()) {
                fail(key, "expected a non-negative integer");
            }
            out = v->get<std::size_t>();
        }
    }
    void read(const std::string& key, std::string& out) {
        if (const json* v = raw(key)) {
            if (!v->is_string()) {
                fail(key, "expected a string");
            }
            out = v->get<std::string>();
        }
    }

    // Runs parse on the string value of key, prefixing errors with the field.
    template <class T, class F>
    void read_enum(const std::string& key, T& out, F parse) {
        std::string text;
        read(key, text);
        if (has(key)) {
            try {
                out = parse(text);
            } catch (const ConfigError& e) {
                fail(key, e.what());
            }
        }
    }

    json sub(const std::string& key) {
        const json* v = raw(key);
        return v ? *v : json();
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        throw ConfigError("field " + field(key) + ": " + msg);
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!seen_.contains(it.key())) {
                throw ConfigError("unknown key " + field(it.key()));
            }
        }
    }

private:
    json obj_;
    std::string path_;
    std::set<std::string> seen_;
};

double default_lr(Backend backend) {
    return backend == Backend::tabular ? 1e-2 : 1e-3;
}

void read_train(Section& s, TrainConfig& t, bool with_method) {
    s.read_enum("optimizer", t.optimizer, parse_optimizer);
    s.read("learning_rate", t.learning_rate);
    s.read("warmup_steps", t.warmup_steps);
    s.read("batch_size", t.batch_size);
    s.read("epochs", t.epochs);
    s.read("eval_every", t.eval_every);
    s.read("max_steps", t.max_steps);
    s.read("seed", t.seed);
    s.read("select_best", t.select_best);
    s.read("noise_level", t.noise_level);
    if (with_method) {
        AlignConfig& a = t.align;
        s.read_enum("method", a.method, [](std::string_view m) {
            const Method parsed = parse_method(m);
            if (parsed == Method::sft) {
                throw ConfigError("alignment method must be dpo, gdpo or kto-gdpo");
            }
            return parsed;
        });
        s.read("beta", a.beta);
        s.read("lambda_d", a.lambda_d);
        s.read("lambda_u", a.lambda_u);
        s.read("calibration_weight", a.calibration_weight);
        s.read("calibration_term", a.calibration_term);
        s.read("preference_term", a.preference_term);
        s.read_enum("belief_nll_scope", a.nll_scope, [](std::string_view v) {
            if (v == "class_and_description") {
                return BeliefNllScope::class_and_description;
            }
            if (v == "class_only") {
                return BeliefNllScope::class_only;
            }
            throw ConfigError("expected class_and_description or class_only");
        });
    }
    s.finish();
}

json train_to_json(const TrainConfig& t, bool with_method) {
    json j{{"optimizer", std::string(to_string(t.optimizer))},
           {"learning_rate", t.learning_rate},
           {"warmup_steps", t.warmup_steps},
           {"batch_size", t.batch_size},
           {"epochs", t.epochs},
           {"eval_every", t.eval_every},
           {"max_steps", t.max_steps},
           {"seed", t.seed},
           {"select_best", t.select_best},
           {"noise_level", t.noise_level}};
    if (with_method) {
        const AlignConfig& a = t.align;
        j["method"] = std::string(to_string(a.method));
        j["beta"] = a.beta;
        j["lambda_d"] = a.lambda_d;
        j["lambda_u"] = a.lambda_u;
        j["calibration_weight"] = a.calibration_weight;
        j["calibration_term"] = a.calibration_term;
        j["preference_term"] = a.preference_term;
        j["belief_nll_scope"] =
            a.nll_scope == BeliefNllScope::class_only ? "class_only" : "class_and_description";
    }
    return j;
}

RunConfig from_json(const json& doc) {
    RunConfig c = default_run_config();
    Section top(doc, "");

    Section data(top.sub("data"), "data");
    DatasetManifest& m = c.data;
    data.read("seed", m.seed);
    data.read("topics", m.topics);
    data.read("beliefs", m.beliefs);
    data.read("styles", m.styles);
    data.read_enum("task", m.task, parse_task_kind);
    data.read("train", m.splits.train);
    data.read("eval", m.splits.eval);
    data.read("test", m.splits.test);
    if (data.has("distribution")) {
        Section dist(data.sub("distribution"), "data.distribution");
        std::string kind = "dirichlet";
        dist.read("kind", kind);
        if (kind == "dirichlet") {
            double alpha = 1.0;
            dist.read("alpha", alpha);
            m.distribution = DistributionSource::from_dirichlet(alpha);
        } else if (kind == "explicit") {
            const json* d = dist.raw("dists");
            if (!d) {
                dist.fail("dists", "required for kind explicit");
            }
            try {
                m.distribution = DistributionSource::from_list(d->get<std::vector<std::vector<double>>>());
            } catch (const json::exception&) {
                dist.fail("dists", "expected a list of number lists");
            }
        } else {
            dist.fail("kind", "expected dirichlet or explicit");
        }
        dist.finish();
    }
    data.finish();

    Section model(top.sub("model"), "model");
    model.read_enum("backend", c.model.backend, parse_backend);
    model.read("window", c.model.window);
    model.read("context_length", c.model.context_length);
    model.read("d_model", c.model.neural.d_model);
    model.read("layers", c.model.neural.layers);
    model.read("init_scale", c.model.neural.init_scale);
    model.read("init_seed", c.model.neural.init_seed);
    model.finish();
    c.model.neural.context_length = c.model.context_length;
    c.sft.learning_rate = default_lr(c.model.backend);
    c.align.learning_rate = default_lr(c.model.backend);

    Section sft(top.sub("sft"), "sft");
    read_train(sft, c.sft, false);
    Section align(top.sub("align"), "align");
    read_train(align, c.align, true);

    Section eval(top.sub("eval"), "eval");
    eval.read("temperature", c.eval.temperature);
    eval.read("greedy", c.eval.greedy);
    eval.read("seed", c.eval.seed);
    eval.finish();
    top.finish();

    c.validate();
    return c;
}

}  // namespace

void RunConfig::validate() const {
    if (data.topics < 1) {
        throw ConfigError("field data.topics: must be >= 1");
    }
    if (data.beliefs > kNumBeliefClasses) {
        throw ConfigError("field data.beliefs: class alphabet exhausted (at most " +
                          std::to_string(kNumBeliefClasses) + " beliefs)");
    }
    if (data.beliefs < 2) {
        throw ConfigError("field data.beliefs: must be >= 2");
    }
    if (data.styles < 2 || data.styles > kMaxStyles) {
        throw ConfigError("field data.styles: must be in [2, " + std::to_string(kMaxStyles) + "]");
    }
    const auto q = static_cast<std::size_t>(data.topics);
    for (auto [name, n] : {std::pair{"train", data.splits.train}, std::pair{"eval", data.splits.eval},
                           std::pair{"test", data.splits.test}}) {
        if (n < q) {
            throw ConfigError(std::string("field data.") + name + ": must be >= data.topics so every topic appears");
        }
    }
    if (model.window < 1) {
        throw ConfigError("field model.window: must be >= 1");
    }
    if (model.context_length < 8) {
        throw ConfigError("field model.context_length: must be >= 8");
    }
    try {
        sft.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("section sft: ") + e.what());
    }
    try {
        align.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("section align: ") + e.what());
    }
    if (!eval.greedy && !(eval.temperature > 0.0)) {
        throw ConfigError("field eval.temperature: must be > 0");
    }
    // Delegates the remaining data checks (task/beliefs, distributions).
    try {
        (void)generate_topics(data.topic_config(), data.seed);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("section data: ") + e.what());
    }
}

RunConfig default_run_config() {
    RunConfig c;
    c.data.seed = 0;
    c.data.topics = 4;
    c.data.beliefs = 5;
    c.data.styles = 3;
    c.data.task = TaskKind::opinion;
    c.data.splits = {800, 200, 200};
    c.data.distribution = DistributionSource::from_dirichlet(1.0);
    c.sft.epochs = 12;
    c.sft.eval_every = 50;
    c.align.epochs = 3;
    c.align.eval_every = 25;
    c.align.align.method = Method::gdpo;
    return c;
}

RunConfig parse_run_config(std::string_view text, std::string_view overrides) {
    json doc, patch;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    try {
        patch = json::parse(overrides);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed overrides: ") + e.what());
    }
    if (!doc.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    doc.merge_patch(patch);
    return from_json(doc);
}

RunConfig load_run_config(const std::filesystem::path& path, std::string_view overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), overrides);
}

std::string to_json_text(const RunConfig& c) {
    json dist;
    if (c.data.distribution.kind == DistributionSource::Kind::explicit_list) {
        dist = {{"kind", "explicit"}, {"dists", c.data.distribution.explicit_dists}};
    } else {
        dist = {{"kind", "dirichlet"}, {"alpha", c.data.distribution.alpha}};
    }
    const json doc{
        {"data",
         {{"seed", c.data.seed},
          {"topics", c.data.topics},
          {"beliefs", c.data.beliefs},
          {"styles", c.data.styles},
          {"task", std::string(to_string(c.data.task))},
          {"train", c.data.splits.train},
          {"eval", c.data.splits.eval},
          {"test", c.data.splits.test},
          {"distribution", dist}}},
        {"model",
         {{"backend", std::string(to_string(c.model.backend))},
          {"window", c.model.window},
          {"context_length", c.model.context_length},
          {"d_model", c.model.neural.d_model},
          {"layers", c.model.neural.layers},
          {"init_scale", c.model.neural.init_scale},
          {"init_seed", c.model.neural.init_seed}}},
        {"sft", train_to_json(c.sft, false)},
        {"align", train_to_json(c.align, true)},
        {"eval", {{"temperature", c.eval.temperature}, {"greedy", c.eval.greedy}, {"seed", c.eval.seed}}}};
    return doc.dump(2);
}

std::string config_hash(const RunConfig& config) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : to_json_text(config)) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Policy make_policy(const ModelConfig& model, std::span<const Topic> topics) {
    const Vocabulary vocab = Vocabulary::from_topics(topics);
    if (model.backend == Backend::tabular) {
        return make_tabular_policy(vocab, topics, model.window, model.context_length);
    }
    NeuralConfig nc = model.neural;
    nc.context_length = model.context_length;
    return make_neural_policy(vocab, nc);
}

}  // namespace gdpo
